//! Initial-data presets and the default problem setup.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::potentials::{make_logistic_potentials, GChoice, LogisticParams, PotentialSet};
use crate::solvers::SolverOptions;

/// Required distance of the initial order parameter from `{0, 1}`.
pub const INTERIOR_MARGIN: f64 = 1e-6;

/// Band-limited initial data satisfying the discrete Neumann condition.
///
/// `rho0 = 0.5 + rho_amp * c(x)`, `mu0 = mu_mean + mu_amp * c(x)` with
/// `c(x) = cos(pi x / Lx) [cos(pi y / Ly)]`. The rough variant adds
/// `rough_amp * cos(rough_mode * pi x / Lx)` to `rho0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitPreset {
    pub rho_amp: f64,
    pub mu_mean: f64,
    pub mu_amp: f64,
    pub rough_amp: f64,
    pub rough_mode: usize,
}

impl Default for InitPreset {
    fn default() -> Self {
        Self::cosine(0.3, 1.0, 0.5)
    }
}

impl InitPreset {
    pub fn cosine(rho_amp: f64, mu_mean: f64, mu_amp: f64) -> Self {
        Self {
            rho_amp,
            mu_mean,
            mu_amp,
            rough_amp: 0.0,
            rough_mode: 0,
        }
    }

    pub fn rough(self, rough_amp: f64, rough_mode: usize) -> Self {
        Self {
            rough_amp,
            rough_mode,
            ..self
        }
    }

    pub fn is_rough(&self) -> bool {
        self.rough_amp != 0.0 && self.rough_mode > 0
    }

    /// Checks the analytic bounds `mu0 >= 0` and `rho0` in
    /// `[INTERIOR_MARGIN, 1 - INTERIOR_MARGIN]`.
    pub fn validate(&self) -> Result<()> {
        let rho_excursion = self.rho_amp.abs() + self.rough_amp.abs();
        if !(rho_excursion.is_finite() && rho_excursion <= 0.5 - INTERIOR_MARGIN) {
            return Err(Error::InvalidInitialData(format!(
                "rho0 = 0.5 +/- {rho_excursion} leaves ({INTERIOR_MARGIN}, {})",
                1.0 - INTERIOR_MARGIN
            )));
        }
        if !(self.mu_mean.is_finite() && self.mu_amp.is_finite())
            || self.mu_mean - self.mu_amp.abs() < 0.0
        {
            return Err(Error::InvalidInitialData(format!(
                "mu0 = {} +/- {} is not nonnegative",
                self.mu_mean,
                self.mu_amp.abs()
            )));
        }
        Ok(())
    }

    /// `(mu0, rho0)` sampled at cell centers.
    pub fn fields(&self, grid: &Grid) -> Result<(Field, Field)> {
        self.validate()?;
        let lengths = grid.lengths().to_vec();
        let shape = |x: [f64; 2]| {
            let mut c = (PI * x[0] / lengths[0]).cos();
            if lengths.len() == 2 {
                c *= (PI * x[1] / lengths[1]).cos();
            }
            c
        };
        let rough = |x: [f64; 2]| {
            if self.is_rough() {
                self.rough_amp * (self.rough_mode as f64 * PI * x[0] / lengths[0]).cos()
            } else {
                0.0
            }
        };
        let rho0 = Field::from_fn(*grid, |x| 0.5 + self.rho_amp * shape(x) + rough(x))?;
        let mu0 = Field::from_fn(*grid, |x| self.mu_mean + self.mu_amp * shape(x))?;
        Ok((mu0, rho0))
    }
}

/// Everything needed to run one trajectory.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub grid: Grid,
    pub params: LogisticParams,
    pub potentials: PotentialSet,
    pub init: InitPreset,
    pub t_final: f64,
    pub tau: f64,
    pub solver: SolverOptions,
}

impl Scenario {
    /// 1D, 128 cells on `[0, 1]`, `alpha = (1, 0.5, 0)`, `g(r) = r`,
    /// `T = 0.25`, `tau = T / 256`, cosine data.
    pub fn default_1d() -> Self {
        let grid = Grid::line(128, 1.0).expect("valid default grid");
        let params = LogisticParams::default();
        let potentials =
            make_logistic_potentials(params, GChoice::Identity).expect("valid default potentials");
        let t_final = 0.25;
        Self {
            grid,
            params,
            potentials,
            init: InitPreset::default(),
            t_final,
            tau: t_final / 256.0,
            solver: SolverOptions::for_grid(&grid),
        }
    }

    pub fn initial_fields(&self) -> Result<(Field, Field)> {
        self.init.fields(&self.grid)
    }
}
