//! Operation-level checks against independent oracles.

use nvch::diagnostics::{energy_identity_residual, error_norms, free_energy};
use nvch::grid::{norm_l2, Field, Grid};
use nvch::potentials::{make_logistic_potentials, GChoice, LogisticParams, PotentialSet};
use nvch::reference;
use nvch::scenario::{InitPreset, Scenario};
use nvch::solvers::{cg_solve, newton_barrier_solve, SolverOptions};
use nvch::stepper::{run, Scheme, SchemeState, POSITIVITY_TOL};
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

/// Gaussian elimination with partial pivoting on a dense row-major copy.
fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))
            .unwrap();
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

fn scalar_bisection(phi: impl Fn(f64) -> f64) -> f64 {
    let (mut lo, mut hi) = (1e-300, 1.0 - 1e-16);
    while hi - lo > 1e-16 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if phi(mid) > 0.0 {
            hi = mid
        } else {
            lo = mid
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn cg_matches_dense_direct_solve() {
    let grid = Grid::line(8, 1.0).unwrap();
    let n = grid.len();
    let h2 = grid.spacing()[0].powi(2);
    // 2I - L written out by hand
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        a[i][i] = 2.0;
        if i > 0 {
            a[i][i] += 1.0 / h2;
            a[i][i - 1] -= 1.0 / h2;
        }
        if i + 1 < n {
            a[i][i] += 1.0 / h2;
            a[i][i + 1] -= 1.0 / h2;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..5 {
        let rhs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let expected = dense_solve(a.clone(), rhs.clone());
        let apply = |v: &[f64], out: &mut [f64]| {
            grid.apply_laplacian(v, out);
            for i in 0..v.len() {
                out[i] = 2.0 * v[i] - out[i];
            }
        };
        let (x, rep) =
            cg_solve(apply, &Field::from_values(grid, rhs).unwrap(), 1e-13, 100).unwrap();
        assert!(rep.final_relative_residual <= 1e-13);
        for i in 0..n {
            assert!((x.values()[i] - expected[i]).abs() <= 1e-10);
        }
    }
}

#[test]
fn newton_single_cell_matches_bisection() {
    let ps = logistic(1.0, 0.0, 0.0);
    let tau = 0.1;
    let expected = scalar_bisection(|r| r + tau * (r / (1.0 - r)).ln() - 0.8);
    let grid = Grid::line(2, 1.0).unwrap();
    let (rho, _) = newton_barrier_solve(
        &ps,
        tau,
        &Field::constant(grid, 0.8),
        &Field::constant(grid, 0.5),
        &SolverOptions::for_grid(&grid),
    )
    .unwrap();
    for &r in rho.values() {
        assert!((r - expected).abs() <= 1e-10, "{r} vs {expected}");
    }
}

#[test]
fn four_cell_step_matches_dense_reference() {
    let grid = Grid::line(4, 1.0).unwrap();
    let ps = logistic(1.0, 0.5, 0.0);
    let tau = 0.01;
    let rho0 = [0.3, 0.4, 0.6, 0.7];
    let mu0 = [1.0; 4];
    let scheme = Scheme::new(ps.clone(), tau, SolverOptions::for_grid(&grid)).unwrap();
    let state = SchemeState::initial(
        Field::from_values(grid, mu0.to_vec()).unwrap(),
        Field::from_values(grid, rho0.to_vec()).unwrap(),
        &ps,
    )
    .unwrap();
    let (rho1, _) = scheme.rho_step(&state).unwrap();
    let (mu1, _) = scheme.mu_step(&state, &rho1).unwrap();

    let lap = reference::dense_laplacian(&grid);
    let rho_ref = reference::rho_step(&lap, &ps, tau, &rho0, &mu0).unwrap();
    for i in 0..4 {
        assert!((rho1.values()[i] - rho_ref[i]).abs() <= 1e-8);
    }
    // continue the oracle from our rho1 so the mu comparison isolates mu_step
    let mu_ref = reference::mu_step(&lap, &ps, tau, &rho0, rho1.values(), &mu0).unwrap();
    for i in 0..4 {
        assert!((mu1.values()[i] - mu_ref[i]).abs() <= 1e-10);
    }
}

fn smooth_state(grid: Grid, ps: &PotentialSet) -> SchemeState {
    let pi = std::f64::consts::PI;
    let rho = Field::from_fn(grid, |x| 0.5 + 0.2 * (pi * x[0]).cos()).unwrap();
    let mu = Field::from_fn(grid, |x| 1.0 + 0.4 * (pi * x[0]).cos()).unwrap();
    SchemeState::initial(mu, rho, ps).unwrap()
}

#[test]
fn rho_step_is_consistent_with_explicit_euler() {
    let grid = Grid::line(16, 1.0).unwrap();
    let ps = logistic(1.0, 0.5, 0.0);
    let state = smooth_state(grid, &ps);
    let mut lap = vec![0.0; grid.len()];
    grid.apply_laplacian(state.rho.values(), &mut lap);

    let mut defects = Vec::new();
    for k in 0..3 {
        let tau = 1e-4 / 2f64.powi(k);
        let scheme = Scheme::new(ps.clone(), tau, SolverOptions::for_grid(&grid)).unwrap();
        let (rho1, _) = scheme.rho_step(&state).unwrap();
        let predictor: Vec<f64> = (0..grid.len())
            .map(|i| {
                let r = state.rho.values()[i];
                let m = state.mu.values()[i];
                r + tau * (lap[i] - ps.f_d1(r) + m * ps.g().d1(r))
            })
            .collect();
        let diff = rho1
            .sub(&Field::from_values(grid, predictor).unwrap())
            .unwrap();
        defects.push(norm_l2(&diff));
    }
    for w in defects.windows(2) {
        let ratio = w[0] / w[1];
        assert!(
            (3.0..=5.0).contains(&ratio),
            "ratio {ratio}, defects {defects:?}"
        );
    }
}

#[test]
fn two_half_steps_agree_to_second_order() {
    let grid = Grid::line(16, 1.0).unwrap();
    let ps = logistic(1.0, 0.5, 0.0);
    let state = smooth_state(grid, &ps);
    let mut gaps = Vec::new();
    for k in 0..3 {
        let tau = 1e-4 / 2f64.powi(k);
        let full = Scheme::new(ps.clone(), tau, SolverOptions::for_grid(&grid)).unwrap();
        let half = Scheme::new(ps.clone(), tau / 2.0, SolverOptions::for_grid(&grid)).unwrap();
        let (one, _) = full.advance(&state).unwrap();
        let (mid, _) = half.advance(&state).unwrap();
        let (two, _) = half.advance(&mid).unwrap();
        let gap = norm_l2(&one.rho.sub(&two.rho).unwrap()) + norm_l2(&one.mu.sub(&two.mu).unwrap());
        gaps.push(gap);
    }
    for w in gaps.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.0..=5.0).contains(&ratio), "ratio {ratio}, gaps {gaps:?}");
    }
}

#[test]
fn symmetric_data_stays_symmetric() {
    let grid = Grid::line(32, 1.0).unwrap();
    let ps = logistic(1.0, 0.5, 0.0);
    let pi = std::f64::consts::PI;
    // symmetric about x = 1/2
    let rho0 = Field::from_fn(grid, |x| 0.5 + 0.3 * (2.0 * pi * x[0]).cos()).unwrap();
    let mu0 = Field::from_fn(grid, |x| 1.0 + 0.5 * (2.0 * pi * x[0]).cos()).unwrap();
    let scheme = Scheme::new(ps, 1e-3, SolverOptions::for_grid(&grid)).unwrap();
    let traj = run(&scheme, mu0, rho0, 0.05, 1).unwrap();
    let n = grid.len();
    for s in &traj.states {
        for i in 0..n / 2 {
            assert!((s.rho.values()[i] - s.rho.values()[n - 1 - i]).abs() <= 1e-12);
            assert!((s.mu.values()[i] - s.mu.values()[n - 1 - i]).abs() <= 1e-12);
        }
    }
}

#[test]
fn single_step_energy_identity_matches_dense_assembly() {
    let grid = Grid::line(8, 1.0).unwrap();
    let ps = logistic(1.0, 0.5, 0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..5 {
        let mu0 = Field::from_fn(grid, |_| rng.gen_range(0.0..2.0)).unwrap();
        let rho0 = Field::from_fn(grid, |_| rng.gen_range(0.05..0.95)).unwrap();
        let tau = 0.01;
        let scheme = Scheme::new(ps.clone(), tau, SolverOptions::for_grid(&grid)).unwrap();
        let traj = run(&scheme, mu0, rho0, tau, 1).unwrap();
        let ours = energy_identity_residual(&traj, &ps, 1).unwrap();
        let (s0, s1) = (&traj.states[0], &traj.states[1]);
        let dense = reference::energy_identity_defect(
            &grid,
            &ps,
            tau,
            (s0.mu.values(), s0.rho.values()),
            (s1.mu.values(), s1.rho.values()),
        );
        assert!(
            ours <= 1e-10 && dense <= 1e-10,
            "ours {ours:e}, dense {dense:e}"
        );
    }
}

#[test]
fn stationary_trajectory_has_zero_energy_defect() {
    let grid = Grid::line(8, 1.0).unwrap();
    let ps = logistic(1.0, 0.5, 0.0);
    let r = 0.65;
    let m = ps.f_d1(r);
    let scheme = Scheme::new(ps.clone(), 0.01, SolverOptions::for_grid(&grid)).unwrap();
    let traj = run(
        &scheme,
        Field::constant(grid, m),
        Field::constant(grid, r),
        0.1,
        1,
    )
    .unwrap();
    for s in &traj.states {
        for i in 0..grid.len() {
            assert!((s.rho.values()[i] - r).abs() < 1e-12);
            assert!((s.mu.values()[i] - m).abs() < 1e-12);
        }
    }
    for k in 1..=traj.steps {
        assert!(energy_identity_residual(&traj, &ps, k).unwrap() < 1e-13);
    }
}

#[test]
fn free_energy_matches_direct_quadrature() {
    let ps = logistic(1.2, 0.7, 0.3);
    let grid = Grid::line(20, 2.0).unwrap();
    let h = grid.spacing()[0];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10 {
        let mu = Field::from_fn(grid, |_| rng.gen_range(0.0..3.0)).unwrap();
        let rho = Field::from_fn(grid, |_| rng.gen_range(0.01..0.99)).unwrap();
        let (m, r) = (mu.values(), rho.values());
        let mut expected = 0.0;
        for i in 0..grid.len() {
            let entropy = r[i] * r[i].ln() + (1.0 - r[i]) * (1.0 - r[i]).ln() + 2f64.ln();
            let f = 1.2 * entropy + 0.7 * r[i] * (1.0 - r[i]) + 0.3 * r[i];
            expected += (-(0.5 + r[i]) * m[i] + f) * h;
        }
        for i in 0..grid.len() - 1 {
            expected += 0.5 * ((r[i + 1] - r[i]) / h).powi(2) * h;
        }
        let psi = free_energy(&mu, &rho, &ps).unwrap();
        assert!((psi - expected).abs() <= 1e-12 * expected.abs().max(1.0));
    }
}

#[test]
fn error_norms_closed_forms() {
    let sc = Scenario {
        grid: Grid::line(16, 1.0).unwrap(),
        ..Scenario::default_1d()
    };
    let (mu0, rho0) = sc.init.fields(&sc.grid).unwrap();
    let scheme = Scheme::new(
        sc.potentials.clone(),
        0.01,
        SolverOptions::for_grid(&sc.grid),
    )
    .unwrap();
    let traj = run(&scheme, mu0, rho0, 0.08, 1).unwrap();

    let zero = error_norms(&traj, &traj).unwrap();
    assert_eq!(zero.total(), 0.0);

    // shift every mu node by eps * phi
    let eps = 1e-3;
    let phi = Field::from_fn(sc.grid, |x| (3.0 * x[0]).sin()).unwrap();
    let mut shifted = traj.clone();
    for s in &mut shifted.states {
        s.mu = s.mu.zip_with(&phi, |m, p| m + eps * p).unwrap();
    }
    let norms = error_norms(&shifted, &traj).unwrap();
    assert!((norms.mu_linf_h - eps * norm_l2(&phi)).abs() <= 1e-15);
    assert_eq!(norms.rho_h1_h, 0.0);
    assert_eq!(norms.rho_linf_v, 0.0);

    // a finer "reference" that agrees on every coarse node
    let mut fine = traj.clone();
    fine.tau = traj.tau / 2.0;
    fine.steps = traj.steps * 2;
    fine.states = Vec::new();
    for (k, s) in traj.states.iter().enumerate() {
        fine.states.push(s.clone());
        if k + 1 < traj.states.len() {
            let mut filler = s.clone();
            filler.rho = filler.rho.map(|r| r * 0.9).unwrap();
            fine.states.push(filler);
        }
    }
    assert_eq!(error_norms(&traj, &fine).unwrap().total(), 0.0);
    // reversed roles: the coarse run cannot serve as a reference
    assert!(error_norms(&fine, &traj).is_err());
}

#[test]
fn default_scenario_invariants_hold_every_step() {
    let sc = Scenario::default_1d();
    let (mu0, rho0) = sc.initial_fields().unwrap();
    let scheme = Scheme::new(sc.potentials.clone(), sc.tau, sc.solver).unwrap();
    let traj = run(&scheme, mu0, rho0, sc.t_final, 1).unwrap();
    assert_eq!(traj.steps, 256);
    assert!((traj.steps as f64 * traj.tau - sc.t_final).abs() <= 1e-12);
    for (s, r) in traj.states[1..].iter().zip(&traj.reports) {
        assert!(s.mu.min() >= -POSITIVITY_TOL * nvch::grid::norm_linf(&s.mu));
        assert!(s.rho.min() > 0.0 && s.rho.max() < 1.0);
        for i in 0..s.rho.len() {
            let g = sc.potentials.g().value(s.rho.values()[i]);
            assert!((s.gamma.values()[i] - g).abs() <= 1e-15 * g.abs());
        }
        assert!(
            r.mass_identity_residual
                <= 10.0 * sc.solver.cg_tol * nvch::grid::norm_linf(&s.mu).max(1.0)
        );
        assert!(r.newton.min_distance_to_bounds > 0.0);
        assert!(r.xi_l2.is_finite());
    }
    let energy = nvch::diagnostics::energy_identity_residuals(&traj, &sc.potentials).unwrap();
    let bound = 10.0 * sc.solver.cg_tol * traj.steps as f64;
    assert!(energy.iter().all(|&e| e <= bound));
}

#[test]
fn rough_and_two_dimensional_runs_stay_admissible() {
    let grid = Grid::new(2, &[12, 10], &[1.0, 0.8]).unwrap();
    let ps = logistic(1.0, 1.5, 0.2);
    let (mu0, rho0) = InitPreset::default().rough(0.15, 6).fields(&grid).unwrap();
    let scheme = Scheme::new(ps.clone(), 0.002, SolverOptions::for_grid(&grid)).unwrap();
    let traj = run(&scheme, mu0, rho0, 0.05, 5).unwrap();
    assert!(traj.rho_margin() > 0.0);
    assert!(traj
        .reports
        .iter()
        .all(|r| r.mu_min >= -1e-12 * r.mu_max.abs()));
}
