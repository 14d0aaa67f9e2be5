//! CSV writers for trajectories, diagnostics and convergence tables.
//!
//! Floats use Rust's shortest round-trip formatting, so output is
//! deterministic and lossless.

use std::fmt::Write as _;

use crate::diagnostics::{energy_identity_residuals, free_energy};
use crate::error::Result;
use crate::harness::ConvergenceTable;
use crate::potentials::PotentialSet;
use crate::stepper::Trajectory;

pub const STEPS_HEADER: &str =
    "step,t,mu_min,mu_max,rho_min,rho_max,newton_iters,cg_iters,mass_residual,xi_l2";
pub const DIAGNOSTICS_HEADER: &str = "m,energy_identity_residual,free_energy,mu_mass_residual_cum";
pub const ERROR_REPORT_HEADER: &str =
    "tau,err_rho_h1H,err_rho_linfV,err_mu_linfH,err_mu_l2V,err_total";

/// One row per step `n -> n + 1`, labelled with the new step index.
pub fn steps_csv(traj: &Trajectory) -> String {
    let mut out = String::from(STEPS_HEADER);
    out.push('\n');
    for (n, r) in traj.reports.iter().enumerate() {
        let step = n + 1;
        let _ = writeln!(
            out,
            "{},{:e},{:e},{:e},{:e},{:e},{},{},{:e},{:e}",
            step,
            step as f64 * traj.tau,
            r.mu_min,
            r.mu_max,
            r.rho_min,
            r.rho_max,
            r.newton.iterations,
            r.linear.iterations,
            r.mass_identity_residual,
            r.xi_l2
        );
    }
    out
}

/// One row per stored step `m = 0..=N`; needs every step stored.
pub fn diagnostics_csv(traj: &Trajectory, ps: &PotentialSet) -> Result<String> {
    let energy = energy_identity_residuals(traj, ps)?;
    let mut out = String::from(DIAGNOSTICS_HEADER);
    out.push('\n');
    let mut cum = 0.0;
    for (m, s) in traj.states.iter().enumerate() {
        let residual = if m == 0 { 0.0 } else { energy[m - 1] };
        if m > 0 {
            cum += traj.reports[m - 1].mass_identity_residual;
        }
        let psi = free_energy(&s.mu, &s.rho, ps)?;
        let _ = writeln!(out, "{m},{residual:e},{psi:e},{cum:e}");
    }
    Ok(out)
}

pub fn error_report_csv(table: &ConvergenceTable) -> String {
    let mut out = String::from(ERROR_REPORT_HEADER);
    out.push('\n');
    for (tau, e) in table.taus.iter().zip(&table.errors) {
        let _ = writeln!(
            out,
            "{:e},{:e},{:e},{:e},{:e},{:e}",
            tau,
            e.rho_h1_h,
            e.rho_linf_v,
            e.mu_linf_h,
            e.mu_l2_v,
            e.total()
        );
    }
    out
}
