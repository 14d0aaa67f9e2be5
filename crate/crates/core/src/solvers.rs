//! Inner solvers for the two elliptic problems of a time step.
//!
//! The chemical-potential update is a symmetric positive definite linear
//! system and goes through (Jacobi-preconditioned) conjugate gradients. The
//! order-parameter update is the Euler-Lagrange equation of a strictly convex
//! functional with a logarithmic barrier; it is solved by Newton's method with
//! a fraction-to-boundary cap and a monotone residual line search, so every
//! iterate stays strictly inside `(0, 1)`.

use crate::error::{Error, Result};
use crate::grid::{dot, norm_l2, seminorm_h1_sq, Field};
use crate::potentials::{check_admissible_tau, PotentialSet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSolveReport {
    pub iterations: usize,
    pub final_relative_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonReport {
    pub iterations: usize,
    pub final_residual_l2: f64,
    /// `min_i min(rho_i, 1 - rho_i)` of the returned iterate.
    pub min_distance_to_bounds: f64,
    pub damped_steps: usize,
}

/// Conjugate gradients for `A x = rhs` with `A` given as a matrix-free
/// operator writing `A x` into its second argument.
pub fn cg_solve<A>(
    apply: A,
    rhs: &Field,
    rel_tol: f64,
    max_iters: usize,
) -> Result<(Field, LinearSolveReport)>
where
    A: Fn(&[f64], &mut [f64]),
{
    pcg(apply, None, rhs, rel_tol, max_iters)
}

/// Same as [`cg_solve`], preconditioned with the operator diagonal.
pub fn cg_solve_jacobi<A>(
    apply: A,
    diagonal: &[f64],
    rhs: &Field,
    rel_tol: f64,
    max_iters: usize,
) -> Result<(Field, LinearSolveReport)>
where
    A: Fn(&[f64], &mut [f64]),
{
    debug_assert!(diagonal.iter().all(|&d| d > 0.0));
    pcg(apply, Some(diagonal), rhs, rel_tol, max_iters)
}

fn pcg<A>(
    apply: A,
    diagonal: Option<&[f64]>,
    rhs: &Field,
    rel_tol: f64,
    max_iters: usize,
) -> Result<(Field, LinearSolveReport)>
where
    A: Fn(&[f64], &mut [f64]),
{
    let b = rhs.values();
    let n = b.len();
    let b_norm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        let report = LinearSolveReport {
            iterations: 0,
            final_relative_residual: 0.0,
        };
        return Ok((Field::from_raw(*rhs.grid(), x), report));
    }

    let precondition = |r: &[f64], z: &mut [f64]| match diagonal {
        Some(d) => z
            .iter_mut()
            .zip(r)
            .zip(d)
            .for_each(|((z, r), d)| *z = r / d),
        None => z.copy_from_slice(r),
    };

    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let mut iterations = 0;

    // Outer loop restarts from the true residual whenever the recursive one
    // claims convergence but the true one disagrees.
    let rel = 'outer: loop {
        precondition(&r, &mut z);
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        loop {
            let r_norm = dot(&r, &r).sqrt();
            if r_norm <= rel_tol * b_norm {
                apply(&x, &mut ap);
                for i in 0..n {
                    r[i] = b[i] - ap[i];
                }
                let rel = dot(&r, &r).sqrt() / b_norm;
                if rel <= rel_tol {
                    break 'outer rel;
                }
                continue 'outer;
            }
            if iterations >= max_iters {
                break 'outer r_norm / b_norm;
            }
            apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if pap.is_nan() || pap <= 0.0 {
                break 'outer r_norm / b_norm;
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            iterations += 1;
            precondition(&r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
    };

    let report = LinearSolveReport {
        iterations,
        final_relative_residual: rel,
    };
    if rel <= rel_tol && x.iter().all(|v| v.is_finite()) {
        Ok((Field::from_raw(*rhs.grid(), x), report))
    } else {
        Err(Error::CgNotConverged(report))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Newton stops once `||F||_{L2} <= newton_tol`.
    pub newton_tol: f64,
    pub newton_max_iters: usize,
    /// Fraction-to-boundary factor.
    pub theta: f64,
    /// Relative residual target for every CG solve (Newton corrections and the mu update).
    pub cg_tol: f64,
    pub cg_max_iters: usize,
}

impl SolverOptions {
    /// Defaults scaled to the domain: `newton_tol = 1e-10 sqrt(|Omega|)`.
    pub fn for_grid(grid: &crate::grid::Grid) -> Self {
        Self {
            newton_tol: 1e-10 * grid.volume().sqrt(),
            newton_max_iters: 50,
            theta: 0.9,
            cg_tol: 1e-12,
            cg_max_iters: 10 * grid.len(),
        }
    }
}

const MIN_STEP: f64 = 1e-14;

/// Residual of the order-parameter step equation,
/// `F(rho) = rho - tau L rho + tau f'(rho) - b`.
pub fn barrier_residual(ps: &PotentialSet, tau: f64, b: &Field, rho: &Field) -> Vec<f64> {
    let grid = rho.grid();
    let mut out = vec![0.0; grid.len()];
    grid.apply_laplacian(rho.values(), &mut out);
    for (i, o) in out.iter_mut().enumerate() {
        let r = rho.values()[i];
        *o = r - tau * *o + tau * ps.f_d1(r) - b.values()[i];
    }
    out
}

/// Jacobian-vector product `(I - tau L + tau diag f''(rho)) v`.
pub fn barrier_jacobian_apply(
    ps: &PotentialSet,
    tau: f64,
    rho: &Field,
    v: &[f64],
    out: &mut [f64],
) {
    rho.grid().apply_laplacian(v, out);
    for i in 0..v.len() {
        out[i] = v[i] - tau * out[i] + tau * ps.f_d2(rho.values()[i]) * v[i];
    }
}

fn weighted_norm(values: &[f64], cell_volume: f64) -> f64 {
    (dot(values, values) * cell_volume).sqrt()
}

fn distance_to_bounds(values: &[f64]) -> f64 {
    values
        .iter()
        .fold(f64::INFINITY, |m, &r| m.min(r).min(1.0 - r))
}

fn strictly_interior(values: &[f64]) -> bool {
    values.iter().all(|&r| r > 0.0 && r < 1.0)
}

/// Solves `rho - tau L rho + tau f'(rho) = b` for `rho` in `(0, 1)`.
pub fn newton_barrier_solve(
    ps: &PotentialSet,
    tau: f64,
    b: &Field,
    init: &Field,
    opts: &SolverOptions,
) -> Result<(Field, NewtonReport)> {
    check_admissible_tau(tau, ps)?;
    if b.grid() != init.grid() {
        return Err(Error::GridMismatch);
    }
    if !strictly_interior(init.values()) {
        return Err(Error::InvalidInitialData(
            "newton initial guess must lie strictly inside (0, 1)".into(),
        ));
    }
    if !(opts.theta > 0.0 && opts.theta < 1.0) {
        return Err(Error::InvalidParameter {
            name: "theta",
            reason: format!("must lie in (0, 1), got {}", opts.theta),
        });
    }

    let grid = *init.grid();
    let vol = grid.cell_volume();
    let lap_diag = grid.laplacian_diagonal();
    let mut rho = init.clone();
    let mut residual = barrier_residual(ps, tau, b, &rho);
    let mut res_norm = weighted_norm(&residual, vol);
    let mut report = NewtonReport {
        iterations: 0,
        final_residual_l2: res_norm,
        min_distance_to_bounds: distance_to_bounds(rho.values()),
        damped_steps: 0,
    };

    loop {
        if !res_norm.is_finite() {
            return Err(Error::NewtonNotConverged(report));
        }
        if res_norm <= opts.newton_tol {
            return Ok((rho, report));
        }
        if report.iterations >= opts.newton_max_iters {
            return Err(Error::NewtonNotConverged(report));
        }

        let jac_diag: Vec<f64> = rho
            .values()
            .iter()
            .zip(&lap_diag)
            .map(|(&r, &l)| 1.0 - tau * l + tau * ps.f_d2(r))
            .collect();
        let neg_f = Field::from_raw(grid, residual.iter().map(|v| -v).collect());
        let (delta, _) = cg_solve_jacobi(
            |v, out| barrier_jacobian_apply(ps, tau, &rho, v, out),
            &jac_diag,
            &neg_f,
            opts.cg_tol,
            opts.cg_max_iters,
        )?;
        let delta = delta.values();

        let mut step = 1.0f64;
        for (&r, &d) in rho.values().iter().zip(delta) {
            if d < 0.0 && r + d <= 0.0 {
                step = step.min(opts.theta * r / -d);
            } else if d > 0.0 && r + d >= 1.0 {
                step = step.min(opts.theta * (1.0 - r) / d);
            }
        }

        let (trial, trial_residual, trial_norm) = loop {
            let values: Vec<f64> = rho
                .values()
                .iter()
                .zip(delta)
                .map(|(&r, &d)| r + step * d)
                .collect();
            if strictly_interior(&values) {
                let trial = Field::from_raw(grid, values);
                let trial_residual = barrier_residual(ps, tau, b, &trial);
                let trial_norm = weighted_norm(&trial_residual, vol);
                if trial_norm < res_norm {
                    break (trial, trial_residual, trial_norm);
                }
            }
            step *= 0.5;
            if step < MIN_STEP {
                report.final_residual_l2 = res_norm;
                return Err(Error::DampingCollapse(report));
            }
        };
        if step < 1.0 {
            report.damped_steps += 1;
        }
        rho = trial;
        residual = trial_residual;
        res_norm = trial_norm;
        report.iterations += 1;
        report.final_residual_l2 = res_norm;
        report.min_distance_to_bounds = distance_to_bounds(rho.values());
        debug_assert!(report.min_distance_to_bounds > 0.0);
    }
}

/// The convex functional whose minimizer is the order-parameter update:
/// `tau/2 |v|_1^2 + 1/2 ||v||^2 + tau int f(v) - int b v`, `+inf` outside `[0, 1]`.
pub fn rho_functional(ps: &PotentialSet, tau: f64, b: &Field, v: &Field) -> f64 {
    if v.values().iter().any(|&r| !(0.0..=1.0).contains(&r)) {
        return f64::INFINITY;
    }
    let vol = v.grid().cell_volume();
    let local: f64 = v
        .values()
        .iter()
        .zip(b.values())
        .map(|(&r, &bi)| 0.5 * r * r + tau * ps.f(r) - bi * r)
        .sum();
    0.5 * tau * seminorm_h1_sq(v) + local * vol
}

/// The quadratic functional whose minimizer is the chemical-potential update:
/// `tau/2 |v|_1^2 + 1/2 int coeff v^2 - int rhs v`.
pub fn mu_functional(tau: f64, coeff: &Field, rhs: &Field, v: &Field) -> f64 {
    let vol = v.grid().cell_volume();
    let local: f64 = v
        .values()
        .iter()
        .zip(coeff.values())
        .zip(rhs.values())
        .map(|((&x, &c), &f)| 0.5 * c * x * x - f * x)
        .sum();
    0.5 * tau * seminorm_h1_sq(v) + local * vol
}

/// `||F(rho)||_{L2}` for a candidate solution.
pub fn barrier_residual_norm(ps: &PotentialSet, tau: f64, b: &Field, rho: &Field) -> f64 {
    let r = barrier_residual(ps, tau, b, rho);
    norm_l2(&Field::from_raw(*rho.grid(), r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::potentials::{make_logistic_potentials, GChoice, LogisticParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn logistic(a1: f64, a2: f64, a3: f64) -> PotentialSet {
        make_logistic_potentials(
            LogisticParams {
                alpha1: a1,
                alpha2: a2,
                alpha3: a3,
            },
            GChoice::Identity,
        )
        .unwrap()
    }

    #[test]
    fn cg_identity_takes_one_iteration() {
        let g = Grid::line(6, 1.0).unwrap();
        let rhs = Field::from_values(g, vec![1.0, -2.0, 3.0, 0.5, 0.0, 7.0]).unwrap();
        let (x, rep) = cg_solve(|v, o| o.copy_from_slice(v), &rhs, 1e-12, 10).unwrap();
        assert!(rep.iterations <= 1);
        assert_eq!(x, rhs);
    }

    #[test]
    fn cg_zero_rhs() {
        let g = Grid::line(4, 1.0).unwrap();
        let (x, rep) = cg_solve(|v, o| o.copy_from_slice(v), &Field::zeros(g), 1e-12, 10).unwrap();
        assert_eq!(rep.iterations, 0);
        assert!(x.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cg_diagonal_system() {
        let g = Grid::line(5, 1.0).unwrap();
        let d = [1.0, 2.0, 4.0, 8.0, 0.5];
        let rhs = Field::from_values(g, vec![1.0, 1.0, -3.0, 2.0, 4.0]).unwrap();
        let apply = |v: &[f64], o: &mut [f64]| {
            for i in 0..5 {
                o[i] = d[i] * v[i];
            }
        };
        let (x, _) = cg_solve(apply, &rhs, 1e-14, 50).unwrap();
        for i in 0..5 {
            assert!((x.values()[i] - rhs.values()[i] / d[i]).abs() < 1e-12);
        }
        let (x, rep) = cg_solve_jacobi(apply, &d, &rhs, 1e-14, 50).unwrap();
        assert!(rep.iterations <= 1);
        for i in 0..5 {
            assert!((x.values()[i] - rhs.values()[i] / d[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn cg_reports_non_convergence() {
        let g = Grid::line(32, 1.0).unwrap();
        let rhs = Field::from_fn(g, |x| x[0].sin()).unwrap();
        let apply = |v: &[f64], o: &mut [f64]| {
            g.apply_laplacian(v, o);
            for i in 0..v.len() {
                o[i] = v[i] - 0.01 * o[i];
            }
        };
        match cg_solve(apply, &rhs, 1e-12, 2) {
            Err(Error::CgNotConverged(rep)) => assert_eq!(rep.iterations, 2),
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn newton_single_cell_symmetric_root() {
        // Uniform data on a two-cell grid: the Laplacian term vanishes, so
        // this is the scalar problem r + 0.1 ln(r / (1 - r)) = 0.5.
        let ps = logistic(1.0, 0.0, 0.0);
        let g = Grid::line(2, 1.0).unwrap();
        let b = Field::constant(g, 0.5);
        let init = Field::constant(g, 0.3);
        let (rho, rep) =
            newton_barrier_solve(&ps, 0.1, &b, &init, &SolverOptions::for_grid(&g)).unwrap();
        for &r in rho.values() {
            assert!((r - 0.5).abs() < 1e-12);
        }
        assert!(rep.min_distance_to_bounds > 0.0);
    }

    #[test]
    fn newton_manufactured_root() {
        let ps = logistic(1.0, 0.5, 0.1);
        let g = Grid::line(16, 1.0).unwrap();
        let tau = 0.01;
        let star = Field::from_fn(g, |x| 0.5 + 0.3 * (3.0 * x[0]).cos()).unwrap();
        let mut lap = vec![0.0; g.len()];
        g.apply_laplacian(star.values(), &mut lap);
        let b = Field::from_values(
            g,
            (0..g.len())
                .map(|i| {
                    let r = star.values()[i];
                    r - tau * lap[i] + tau * ps.f_d1(r)
                })
                .collect(),
        )
        .unwrap();
        let opts = SolverOptions::for_grid(&g);
        let (rho, rep) = newton_barrier_solve(&ps, tau, &b, &star, &opts).unwrap();
        assert!(rep.iterations <= 1);
        assert!(rep.final_residual_l2 <= opts.newton_tol);
        assert_eq!(rho, star);
    }

    #[test]
    fn newton_stays_interior_from_far_guess() {
        let ps = logistic(1.0, 0.5, 0.0);
        let g = Grid::line(32, 1.0).unwrap();
        let b = Field::from_fn(g, |x| if x[0] < 0.5 { -0.2 } else { 1.3 }).unwrap();
        let init = Field::constant(g, 0.5);
        let opts = SolverOptions::for_grid(&g);
        let (rho, rep) = newton_barrier_solve(&ps, 0.05, &b, &init, &opts).unwrap();
        assert!(rho.values().iter().all(|&r| r > 0.0 && r < 1.0));
        assert!(rep.final_residual_l2 <= opts.newton_tol);
        assert!(rep.damped_steps > 0);
    }

    #[test]
    fn newton_rejects_inadmissible_tau_and_exterior_guess() {
        let ps = logistic(1.0, 1.0, 0.0);
        let g = Grid::line(4, 1.0).unwrap();
        let b = Field::constant(g, 0.5);
        let opts = SolverOptions::for_grid(&g);
        assert!(matches!(
            newton_barrier_solve(&ps, 0.6, &b, &Field::constant(g, 0.5), &opts),
            Err(Error::InadmissibleStep { .. })
        ));
        assert!(newton_barrier_solve(&ps, 0.1, &b, &Field::constant(g, 1.0), &opts).is_err());
    }

    #[test]
    fn newton_reports_iteration_cap() {
        let ps = logistic(1.0, 0.0, 0.0);
        let g = Grid::line(4, 1.0).unwrap();
        let b = Field::constant(g, 0.95);
        let opts = SolverOptions {
            newton_max_iters: 1,
            ..SolverOptions::for_grid(&g)
        };
        let init = Field::constant(g, 1e-6);
        assert!(matches!(
            newton_barrier_solve(&ps, 0.1, &b, &init, &opts),
            Err(Error::NewtonNotConverged(_))
        ));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let ps = logistic(1.0, 0.5, 0.2);
        let g = Grid::line(12, 1.0).unwrap();
        let tau = 0.02;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b = Field::from_fn(g, |_| rng.gen_range(0.0..1.0)).unwrap();
        for _ in 0..10 {
            let rho = Field::from_fn(g, |_| rng.gen_range(0.1..0.9)).unwrap();
            let v: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let eps = 1e-7;
            let shifted = Field::from_values(
                g,
                rho.values()
                    .iter()
                    .zip(&v)
                    .map(|(r, d)| r + eps * d)
                    .collect(),
            )
            .unwrap();
            let f0 = barrier_residual(&ps, tau, &b, &rho);
            let f1 = barrier_residual(&ps, tau, &b, &shifted);
            let fd: Vec<f64> = f0.iter().zip(&f1).map(|(a, c)| (c - a) / eps).collect();
            let mut jv = vec![0.0; g.len()];
            barrier_jacobian_apply(&ps, tau, &rho, &v, &mut jv);
            let diff: Vec<f64> = fd.iter().zip(&jv).map(|(a, b)| a - b).collect();
            let rel = dot(&diff, &diff).sqrt() / dot(&jv, &jv).sqrt();
            assert!(rel <= 1e-5, "relative error {rel}");
        }
    }

    #[test]
    fn rho_functional_is_infinite_outside_box() {
        let ps = logistic(1.0, 0.0, 0.0);
        let g = Grid::line(3, 1.0).unwrap();
        let b = Field::zeros(g);
        let v = Field::from_values(g, vec![0.5, 1.2, 0.5]).unwrap();
        assert_eq!(rho_functional(&ps, 0.1, &b, &v), f64::INFINITY);
    }
}
