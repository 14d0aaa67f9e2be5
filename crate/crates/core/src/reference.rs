//! Brute-force dense implementation of one scheme step, independent of the
//! matrix-free stencil, CG and Newton code paths.
//!
//! The Laplacian is assembled face by face into a dense matrix, the
//! order-parameter equation is solved by nonlinear Gauss-Seidel with a
//! bisection root finder in every cell, and the chemical-potential system by
//! dense LU. Intended for small grids only.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::potentials::PotentialSet;

/// Dense Neumann Laplacian assembled from interior-face fluxes.
pub fn dense_laplacian(grid: &Grid) -> DMatrix<f64> {
    let n = grid.len();
    let cells = grid.cells_per_axis();
    let nx = cells[0];
    let ny = if grid.dim() == 2 { cells[1] } else { 1 };
    let mut lap = DMatrix::zeros(n, n);
    let mut couple = |a: usize, b: usize, c: f64| {
        lap[(a, a)] -= c;
        lap[(b, b)] -= c;
        lap[(a, b)] += c;
        lap[(b, a)] += c;
    };
    let hx = grid.spacing()[0];
    for j in 0..ny {
        for i in 0..nx - 1 {
            couple(i + nx * j, i + 1 + nx * j, 1.0 / (hx * hx));
        }
    }
    if grid.dim() == 2 {
        let hy = grid.spacing()[1];
        for j in 0..ny - 1 {
            for i in 0..nx {
                couple(i + nx * j, i + nx * (j + 1), 1.0 / (hy * hy));
            }
        }
    }
    lap
}

/// Root of an increasing function on `(0, 1)` by bisection, evaluating only
/// at interior midpoints.
pub fn bisect_unit_interval(phi: impl Fn(f64) -> f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if phi(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// One order-parameter step:
/// `rho - tau L rho + tau f'(rho) = rho_n + tau mu_n g'(rho_n)`.
pub fn rho_step(
    lap: &DMatrix<f64>,
    ps: &PotentialSet,
    tau: f64,
    rho_n: &[f64],
    mu_n: &[f64],
) -> Result<Vec<f64>> {
    let n = rho_n.len();
    let b: Vec<f64> = (0..n)
        .map(|i| rho_n[i] + tau * mu_n[i] * ps.g().d1(rho_n[i]))
        .collect();
    let mut rho = rho_n.to_vec();
    for _sweep in 0..100_000 {
        let mut change = 0.0f64;
        for i in 0..n {
            let off: f64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| lap[(i, j)] * rho[j])
                .sum();
            let diag = lap[(i, i)];
            let target = b[i] + tau * off;
            let new = bisect_unit_interval(|r| r - tau * diag * r + tau * ps.f_d1(r) - target);
            change = change.max((new - rho[i]).abs());
            rho[i] = new;
        }
        if change <= 1e-15 {
            return Ok(rho);
        }
    }
    Err(Error::InvalidParameter {
        name: "reference",
        reason: "nonlinear Gauss-Seidel did not settle".into(),
    })
}

/// One chemical-potential step by dense LU.
pub fn mu_step(
    lap: &DMatrix<f64>,
    ps: &PotentialSet,
    tau: f64,
    rho_n: &[f64],
    rho_next: &[f64],
    mu_n: &[f64],
) -> Result<Vec<f64>> {
    let n = mu_n.len();
    let g = |r: f64| ps.g().value(r);
    let mut a = -tau * lap.clone();
    for i in 0..n {
        a[(i, i)] += 1.0 + g(rho_n[i]) + g(rho_next[i]);
    }
    let rhs = DVector::from_iterator(n, (0..n).map(|i| (1.0 + 2.0 * g(rho_n[i])) * mu_n[i]));
    let sol = a.lu().solve(&rhs).ok_or(Error::InvalidParameter {
        name: "reference",
        reason: "singular chemical-potential matrix".into(),
    })?;
    Ok(sol.iter().copied().collect())
}

/// `steps` scheme steps; element `k` of the result is `(mu_k, rho_k)`.
pub fn trajectory(
    grid: &Grid,
    ps: &PotentialSet,
    tau: f64,
    mu0: &[f64],
    rho0: &[f64],
    steps: usize,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let lap = dense_laplacian(grid);
    let mut out = vec![(mu0.to_vec(), rho0.to_vec())];
    for _ in 0..steps {
        let (mu, rho) = out.last().expect("nonempty");
        let rho_next = rho_step(&lap, ps, tau, rho, mu)?;
        let mu_next = mu_step(&lap, ps, tau, rho, &rho_next, mu)?;
        out.push((mu_next, rho_next));
    }
    Ok(out)
}

/// The single-step energy identity assembled term by term with dense
/// quadratic forms; returns `|LHS - RHS| / RHS`.
pub fn energy_identity_defect(
    grid: &Grid,
    ps: &PotentialSet,
    tau: f64,
    (mu0, rho0): (&[f64], &[f64]),
    (mu1, rho1): (&[f64], &[f64]),
) -> f64 {
    let lap = dense_laplacian(grid);
    let vol = grid.cell_volume();
    let n = mu0.len();
    let w = |r: f64| 0.5 + ps.g().value(r);
    let v1 = DVector::from_column_slice(mu1);
    let grad = -(v1.transpose() * &lap * &v1)[(0, 0)] * vol;
    let mut lhs = tau * grad;
    let mut rhs = 0.0;
    for i in 0..n {
        lhs += w(rho1[i]) * mu1[i] * mu1[i] * vol;
        lhs += w(rho0[i]) * (mu1[i] - mu0[i]).powi(2) * vol;
        rhs += w(rho0[i]) * mu0[i] * mu0[i] * vol;
    }
    (lhs - rhs).abs() / rhs
}
