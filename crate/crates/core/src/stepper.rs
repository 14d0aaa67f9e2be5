//! One step of the semi-implicit scheme and trajectory orchestration.
//!
//! Each step first solves the order-parameter equation
//! `rho' - tau L rho' + tau f'(rho') = rho + tau mu g'(rho)`
//! and then, with `gamma' = g(rho')` known, the linear chemical-potential
//! equation `(1 + gamma + gamma') mu' - tau L mu' = (1 + 2 gamma) mu`.

use std::fmt;

use crate::error::{Error, Result};
use crate::grid::{norm_l2, norm_linf, Field, Grid};
use crate::potentials::{check_admissible_tau, PotentialSet};
use crate::solvers::{
    cg_solve_jacobi, newton_barrier_solve, LinearSolveReport, NewtonReport, SolverOptions,
};

/// Relative tolerance for `mu >= 0` after each step.
pub const POSITIVITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeState {
    pub n: usize,
    pub t: f64,
    pub mu: Field,
    pub rho: Field,
    /// Cached `g(rho)`.
    pub gamma: Field,
}

impl SchemeState {
    /// Builds the initial state after checking `mu0 >= 0` and `0 < rho0 < 1`.
    pub fn initial(mu0: Field, rho0: Field, ps: &PotentialSet) -> Result<Self> {
        if mu0.grid() != rho0.grid() {
            return Err(Error::GridMismatch);
        }
        if mu0.min() < 0.0 {
            return Err(Error::InvalidInitialData(format!(
                "mu0 must be nonnegative, min is {}",
                mu0.min()
            )));
        }
        if !(rho0.min() > 0.0 && rho0.max() < 1.0) {
            return Err(Error::InvalidInitialData(format!(
                "rho0 must lie strictly inside (0, 1), range is [{}, {}]",
                rho0.min(),
                rho0.max()
            )));
        }
        let gamma = rho0.map(|r| ps.g().value(r))?;
        Ok(Self {
            n: 0,
            t: 0.0,
            mu: mu0,
            rho: rho0,
            gamma,
        })
    }

    pub fn grid(&self) -> &Grid {
        self.rho.grid()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub newton: NewtonReport,
    pub linear: LinearSolveReport,
    pub mu_min: f64,
    pub mu_max: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    /// `|int (1 + gamma_n + gamma_{n+1}) mu_{n+1} - int (1 + 2 gamma_n) mu_n|`,
    /// relative to the second integral.
    pub mass_identity_residual: f64,
    /// `||f1'(rho_{n+1})||_{L2}`.
    pub xi_l2: f64,
}

/// A fixed-step instance of the scheme.
#[derive(Debug, Clone)]
pub struct Scheme {
    ps: PotentialSet,
    tau: f64,
    opts: SolverOptions,
}

impl Scheme {
    pub fn new(ps: PotentialSet, tau: f64, opts: SolverOptions) -> Result<Self> {
        check_admissible_tau(tau, &ps)?;
        Ok(Self { ps, tau, opts })
    }

    pub fn potentials(&self) -> &PotentialSet {
        &self.ps
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn options(&self) -> &SolverOptions {
        &self.opts
    }

    /// Right-hand side `rho_n + tau mu_n g'(rho_n)` of the order-parameter step.
    pub fn rho_rhs(&self, state: &SchemeState) -> Field {
        let values = state
            .rho
            .values()
            .iter()
            .zip(state.mu.values())
            .map(|(&r, &m)| r + self.tau * m * self.ps.g().d1(r))
            .collect();
        Field::from_raw(*state.grid(), values)
    }

    pub fn rho_step(&self, state: &SchemeState) -> Result<(Field, NewtonReport)> {
        let b = self.rho_rhs(state);
        newton_barrier_solve(&self.ps, self.tau, &b, &state.rho, &self.opts)
    }

    /// Coefficient `1 + gamma_n + gamma_{n+1}` and right-hand side
    /// `(1 + 2 gamma_n) mu_n` of the chemical-potential step.
    pub fn mu_system(&self, state: &SchemeState, gamma_next: &Field) -> (Field, Field) {
        let grid = *state.grid();
        let coeff = state
            .gamma
            .values()
            .iter()
            .zip(gamma_next.values())
            .map(|(&g0, &g1)| 1.0 + g0 + g1)
            .collect();
        let rhs = state
            .gamma
            .values()
            .iter()
            .zip(state.mu.values())
            .map(|(&g0, &m)| (1.0 + 2.0 * g0) * m)
            .collect();
        (Field::from_raw(grid, coeff), Field::from_raw(grid, rhs))
    }

    /// Solves the chemical-potential equation given the new order parameter.
    pub fn mu_step(
        &self,
        state: &SchemeState,
        rho_next: &Field,
    ) -> Result<(Field, LinearSolveReport)> {
        if rho_next.grid() != state.grid() {
            return Err(Error::GridMismatch);
        }
        let gamma_next = rho_next.map(|r| self.ps.g().value(r))?;
        self.mu_step_with_gamma(state, &gamma_next)
    }

    fn mu_step_with_gamma(
        &self,
        state: &SchemeState,
        gamma_next: &Field,
    ) -> Result<(Field, LinearSolveReport)> {
        let grid = *state.grid();
        let tau = self.tau;
        let (coeff, rhs) = self.mu_system(state, gamma_next);
        let diag: Vec<f64> = coeff
            .values()
            .iter()
            .zip(grid.laplacian_diagonal())
            .map(|(&c, l)| c - tau * l)
            .collect();
        let apply = |v: &[f64], out: &mut [f64]| {
            grid.apply_laplacian(v, out);
            for i in 0..v.len() {
                out[i] = coeff.values()[i] * v[i] - tau * out[i];
            }
        };
        let (mu, report) =
            cg_solve_jacobi(apply, &diag, &rhs, self.opts.cg_tol, self.opts.cg_max_iters)?;
        let tol = POSITIVITY_TOL * norm_linf(&mu);
        if mu.min() < -tol {
            return Err(Error::PositivityViolation { min: mu.min(), tol });
        }
        Ok((mu, report))
    }

    pub fn advance(&self, state: &SchemeState) -> Result<(SchemeState, StepReport)> {
        let (rho, newton) = self.rho_step(state)?;
        let gamma = rho.map(|r| self.ps.g().value(r))?;
        let (mu, linear) = self.mu_step_with_gamma(state, &gamma)?;

        let mass_identity_residual = mass_identity_residual(state, &gamma, &mu);
        let xi = rho.map(|r| self.ps.f1().d1(r))?;
        let report = StepReport {
            newton,
            linear,
            mu_min: mu.min(),
            mu_max: mu.max(),
            rho_min: rho.min(),
            rho_max: rho.max(),
            mass_identity_residual,
            xi_l2: norm_l2(&xi),
        };
        let n = state.n + 1;
        let next = SchemeState {
            n,
            t: n as f64 * self.tau,
            mu,
            rho,
            gamma,
        };
        Ok((next, report))
    }
}

/// Relative defect of the integrated chemical-potential equation over one step.
pub fn mass_identity_residual(prev: &SchemeState, gamma_next: &Field, mu_next: &Field) -> f64 {
    let vol = prev.grid().cell_volume();
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for i in 0..mu_next.len() {
        let g0 = prev.gamma.values()[i];
        lhs += (1.0 + g0 + gamma_next.values()[i]) * mu_next.values()[i];
        rhs += (1.0 + 2.0 * g0) * prev.mu.values()[i];
    }
    let (lhs, rhs) = (lhs * vol, rhs * vol);
    let diff = (lhs - rhs).abs();
    if diff == 0.0 {
        0.0
    } else {
        diff / rhs.abs().max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub tau: f64,
    pub t_final: f64,
    pub steps: usize,
    pub store_every: usize,
    /// Stored states, always including `n = 0` and `n = steps`.
    pub states: Vec<SchemeState>,
    /// One report per step, `reports[n]` describing the step `n -> n + 1`.
    pub reports: Vec<StepReport>,
}

impl Trajectory {
    pub fn grid(&self) -> &Grid {
        self.states[0].grid()
    }

    pub fn stores_every_step(&self) -> bool {
        self.states.len() == self.steps + 1
    }

    pub fn last(&self) -> &SchemeState {
        self.states
            .last()
            .expect("trajectory holds the initial state")
    }

    /// Stored state with step index `n`, if any.
    pub fn state(&self, n: usize) -> Option<&SchemeState> {
        self.states
            .binary_search_by_key(&n, |s| s.n)
            .ok()
            .map(|i| &self.states[i])
    }

    /// Smallest `min(rho, 1 - rho)` over all stored states.
    pub fn rho_margin(&self) -> f64 {
        self.states
            .iter()
            .map(|s| s.rho.min().min(1.0 - s.rho.max()))
            .fold(f64::INFINITY, f64::min)
    }
}

/// A failed run: the error plus everything computed before it.
#[derive(Debug)]
pub struct RunError {
    pub error: Error,
    pub partial: Option<Trajectory>,
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for RunError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<Error> for RunError {
    fn from(error: Error) -> Self {
        Self {
            error,
            partial: None,
        }
    }
}

/// Number of steps `T / tau`, which must be integral to within `1e-9`.
pub fn step_count(t_final: f64, tau: f64) -> Result<usize> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tau",
            reason: format!("must be positive and finite, got {tau}"),
        });
    }
    if !(t_final.is_finite() && t_final >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "t_final",
            reason: format!("must be nonnegative and finite, got {t_final}"),
        });
    }
    let ratio = t_final / tau;
    let n = ratio.round();
    if (ratio - n).abs() > 1e-9 * n.max(1.0) {
        return Err(Error::NotDivisible { t_final, tau });
    }
    Ok(n as usize)
}

/// Runs the scheme from `(mu0, rho0)` up to `t_final`.
pub fn run(
    scheme: &Scheme,
    mu0: Field,
    rho0: Field,
    t_final: f64,
    store_every: usize,
) -> Result<Trajectory, RunError> {
    if store_every == 0 {
        return Err(Error::InvalidParameter {
            name: "store_every",
            reason: "must be >= 1".into(),
        }
        .into());
    }
    let steps = step_count(t_final, scheme.tau())?;
    let mut state = SchemeState::initial(mu0, rho0, scheme.potentials())?;
    let mut traj = Trajectory {
        tau: scheme.tau(),
        t_final,
        steps,
        store_every,
        states: vec![state.clone()],
        reports: Vec::with_capacity(steps),
    };
    for n in 0..steps {
        match scheme.advance(&state) {
            Ok((next, report)) => {
                traj.reports.push(report);
                state = next;
                if state.n % store_every == 0 || state.n == steps {
                    traj.states.push(state.clone());
                }
            }
            Err(e) => {
                if traj.last().n != state.n {
                    traj.states.push(state);
                }
                return Err(RunError {
                    error: Error::StepFailed {
                        step: n,
                        source: Box::new(e),
                    },
                    partial: Some(traj),
                });
            }
        }
    }
    Ok(traj)
}
