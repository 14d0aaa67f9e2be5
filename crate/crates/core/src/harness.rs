//! Time-step refinement ladders and observed convergence orders.

use std::fmt;
use std::fmt::Write as _;

use crate::diagnostics::{error_norms, ErrorNorms};
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::potentials::PotentialSet;
use crate::solvers::SolverOptions;
use crate::stepper::{run, step_count, Scheme, Trajectory};

/// `ln(e_k / e_{k+1}) / ln(tau_k / tau_{k+1})`; `None` when undefined
/// (equal steps or a zero error).
pub fn estimate_rates(errors: &[f64], taus: &[f64]) -> Result<Vec<Option<f64>>> {
    if errors.len() != taus.len() {
        return Err(Error::InvalidParameter {
            name: "errors",
            reason: format!("{} errors for {} steps", errors.len(), taus.len()),
        });
    }
    if let Some(e) = errors.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
        return Err(Error::InvalidParameter {
            name: "errors",
            reason: format!("errors must be finite and nonnegative, got {e}"),
        });
    }
    if let Some(t) = taus.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        return Err(Error::InvalidParameter {
            name: "taus",
            reason: format!("steps must be positive, got {t}"),
        });
    }
    Ok(errors
        .windows(2)
        .zip(taus.windows(2))
        .map(|(e, t)| {
            if e[0] == 0.0 || e[1] == 0.0 || t[0] == t[1] {
                None
            } else {
                Some((e[0] / e[1]).ln() / (t[0] / t[1]).ln())
            }
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct ConvergenceTable {
    pub tau_ref: f64,
    /// Coarsest first.
    pub taus: Vec<f64>,
    pub errors: Vec<ErrorNorms>,
    pub totals: Vec<f64>,
    /// Observed order between consecutive ladder entries.
    pub rates: Vec<Option<f64>>,
    /// Smallest `min(rho, 1 - rho)` seen along each run.
    pub rho_margins: Vec<f64>,
}

impl ConvergenceTable {
    fn from_rows(tau_ref: f64, rows: Vec<(f64, ErrorNorms, f64)>) -> Result<Self> {
        let taus: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let errors: Vec<ErrorNorms> = rows.iter().map(|r| r.1).collect();
        let totals: Vec<f64> = errors.iter().map(ErrorNorms::total).collect();
        let rates = estimate_rates(&totals, &taus)?;
        Ok(Self {
            tau_ref,
            taus,
            errors,
            totals,
            rates,
            rho_margins: rows.iter().map(|r| r.2).collect(),
        })
    }

    /// Rates of a single error component, e.g. `|e| e.rho_h1_h`.
    pub fn component_rates(&self, pick: impl Fn(&ErrorNorms) -> f64) -> Result<Vec<Option<f64>>> {
        let errs: Vec<f64> = self.errors.iter().map(pick).collect();
        estimate_rates(&errs, &self.taus)
    }

    /// Whether the total error never grows along the ladder.
    pub fn is_monotone(&self) -> bool {
        self.totals.windows(2).all(|w| w[1] <= w[0])
    }

    /// Human-readable rate summary.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "reference tau = {:e}", self.tau_ref);
        let _ = writeln!(
            out,
            "{:>12}  {:>12}  {:>12}  {:>12}  {:>12}  {:>12}  {:>6}",
            "tau", "rho_h1H", "rho_linfV", "mu_linfH", "mu_l2V", "total", "rate"
        );
        for (k, (tau, e)) in self.taus.iter().zip(&self.errors).enumerate() {
            let rate = if k == 0 {
                String::new()
            } else {
                RateDisplay(self.rates[k - 1]).to_string()
            };
            let _ = writeln!(
                out,
                "{:>12.4e}  {:>12.4e}  {:>12.4e}  {:>12.4e}  {:>12.4e}  {:>12.4e}  {:>6}",
                tau,
                e.rho_h1_h,
                e.rho_linf_v,
                e.mu_linf_h,
                e.mu_l2_v,
                e.total(),
                rate
            );
        }
        out
    }
}

/// Formats an optional rate, printing `—` when undefined.
#[derive(Debug, Clone, Copy)]
pub struct RateDisplay(pub Option<f64>);

impl fmt::Display for RateDisplay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(r) => write!(f, "{r:.3}"),
            None => f.write_str("—"),
        }
    }
}

/// A failed study: the error plus the rows finished before it.
#[derive(Debug)]
pub struct StudyError {
    pub error: Error,
    pub partial: Option<Box<ConvergenceTable>>,
}

impl fmt::Display for StudyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for StudyError {}

impl From<Error> for StudyError {
    fn from(error: Error) -> Self {
        Self {
            error,
            partial: None,
        }
    }
}

fn divides(fine: f64, coarse: f64) -> bool {
    let ratio = coarse / fine;
    let k = ratio.round();
    k >= 1.0 && (ratio - k).abs() <= 1e-9 * k
}

/// Checks that the ladder is nonincreasing, nested, and refined by `tau_ref`.
pub fn validate_ladder(taus: &[f64], tau_ref: f64, t_final: f64) -> Result<()> {
    if taus.is_empty() {
        return Err(Error::LadderNotNested("empty ladder".into()));
    }
    for &tau in taus.iter().chain(std::iter::once(&tau_ref)) {
        step_count(t_final, tau)?;
    }
    for w in taus.windows(2) {
        if !divides(w[1], w[0]) {
            return Err(Error::LadderNotNested(format!(
                "{} does not divide {}",
                w[1], w[0]
            )));
        }
    }
    let finest = taus.iter().copied().fold(f64::INFINITY, f64::min);
    if tau_ref > finest / 4.0 * (1.0 + 1e-12) {
        return Err(Error::LadderNotNested(format!(
            "reference step {tau_ref} must be at most a quarter of {finest}"
        )));
    }
    if !divides(tau_ref, finest) {
        return Err(Error::LadderNotNested(format!(
            "reference step {tau_ref} does not divide {finest}"
        )));
    }
    Ok(())
}

/// Inputs shared by every run of a study.
#[derive(Debug, Clone)]
pub struct StudySetup<'a> {
    pub potentials: &'a PotentialSet,
    pub mu0: &'a Field,
    pub rho0: &'a Field,
    pub t_final: f64,
    pub solver: SolverOptions,
}

fn run_one(setup: &StudySetup<'_>, tau: f64) -> Result<Trajectory> {
    let scheme = Scheme::new(setup.potentials.clone(), tau, setup.solver)?;
    run(
        &scheme,
        setup.mu0.clone(),
        setup.rho0.clone(),
        setup.t_final,
        1,
    )
    .map_err(|e| e.error)
}

/// Runs every ladder entry and the reference concurrently, then measures
/// each against the reference.
pub fn convergence_study(
    setup: &StudySetup<'_>,
    taus: &[f64],
    tau_ref: f64,
) -> Result<ConvergenceTable, StudyError> {
    validate_ladder(taus, tau_ref, setup.t_final)?;

    let (reference, runs) = std::thread::scope(|scope| {
        let reference = scope.spawn(|| run_one(setup, tau_ref));
        let handles: Vec<_> = taus
            .iter()
            .map(|&tau| scope.spawn(move || run_one(setup, tau)))
            .collect();
        let runs: Vec<Result<Trajectory>> = handles
            .into_iter()
            .map(|h| h.join().expect("study worker panicked"))
            .collect();
        (reference.join().expect("reference worker panicked"), runs)
    });
    let reference = reference?;

    let mut rows = Vec::with_capacity(taus.len());
    for (&tau, traj) in taus.iter().zip(runs) {
        let row = traj.and_then(|t| Ok((tau, error_norms(&t, &reference)?, t.rho_margin())));
        match row {
            Ok(row) => rows.push(row),
            Err(error) => {
                let partial = if rows.is_empty() {
                    None
                } else {
                    ConvergenceTable::from_rows(tau_ref, rows)
                        .ok()
                        .map(Box::new)
                };
                return Err(StudyError { error, partial });
            }
        }
    }
    Ok(ConvergenceTable::from_rows(tau_ref, rows)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rates_of_linear_and_quadratic_errors() {
        let r = estimate_rates(&[0.4, 0.2, 0.1], &[0.4, 0.2, 0.1]).unwrap();
        assert_eq!(r, vec![Some(1.0), Some(1.0)]);

        let taus = [0.1, 0.05, 0.025, 0.0125];
        let errs: Vec<f64> = taus.iter().map(|t| 3.0 * t).collect();
        for r in estimate_rates(&errs, &taus).unwrap() {
            assert_eq!(r, Some(1.0));
        }
        let errs: Vec<f64> = taus.iter().map(|t| 7.0 * t * t).collect();
        for r in estimate_rates(&errs, &taus).unwrap() {
            assert!((r.unwrap() - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_rates_are_sentinels() {
        let r = estimate_rates(&[0.1, 0.1], &[0.2, 0.2]).unwrap();
        assert_eq!(r, vec![None]);
        assert_eq!(RateDisplay(r[0]).to_string(), "—");
        assert_eq!(
            estimate_rates(&[0.1, 0.0], &[0.2, 0.1]).unwrap(),
            vec![None]
        );
        assert!(estimate_rates(&[-0.1, 0.1], &[0.2, 0.1]).is_err());
        assert!(estimate_rates(&[0.1, 0.1], &[0.0, 0.1]).is_err());
    }

    #[test]
    fn ladder_validation() {
        let t = 0.25;
        let ladder: Vec<f64> = [16.0, 32.0, 64.0].iter().map(|n| t / n).collect();
        assert!(validate_ladder(&ladder, t / 256.0, t).is_ok());
        assert!(validate_ladder(&[t / 16.0, t / 16.0], t / 64.0, t).is_ok());
        assert!(matches!(
            validate_ladder(&[t / 16.0, t / 24.0], t / 96.0, t),
            Err(Error::LadderNotNested(_))
        ));
        // reference too coarse
        assert!(matches!(
            validate_ladder(&ladder, t / 128.0, t),
            Err(Error::LadderNotNested(_))
        ));
        // reference not a divisor
        assert!(validate_ladder(&ladder, t / 300.0, t).is_err());
    }
}
