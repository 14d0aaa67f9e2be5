//! The `run`, `converge` and `check` commands.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use nvch::diagnostics::mass_identity_residuals;
use nvch::io::{diagnostics_csv, error_report_csv, steps_csv};
use nvch::stepper::POSITIVITY_TOL;
use nvch::{
    convergence_study, energy_identity_residuals, interp_identity_l2_residual,
    interp_identity_linf_residual, norm_l2, norm_linf, reference, run, Error, Field, Grid,
    InitPreset, Scheme, StudySetup, Trajectory,
};

use crate::config::{ConfigError, InitConfig, InitError, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NUMERICAL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// A failed command: exit code plus a one-line `tag: message` report.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub tag: &'static str,
    pub message: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let message = self.message.replace('\n', " ");
        write!(f, "error[{}]: {message}", self.tag)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, tag) = classify(&e);
        Failure {
            code,
            tag,
            message: e.to_string(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure {
            code: EXIT_CONFIG,
            tag: e.tag(),
            message: e.to_string(),
        }
    }
}

impl From<InitError> for Failure {
    fn from(e: InitError) -> Self {
        match e {
            InitError::Core(e) => e.into(),
            io @ InitError::Io { .. } => Failure {
                code: EXIT_CONFIG,
                tag: "io-error",
                message: io.to_string(),
            },
        }
    }
}

/// Exit code and tag for a library error.
pub fn classify(e: &Error) -> (i32, &'static str) {
    match e {
        Error::UnsupportedDimension(_) => (EXIT_CONFIG, "unsupported-dimension"),
        Error::InvalidGrid(_) => (EXIT_CONFIG, "invalid-grid"),
        Error::GridMismatch => (EXIT_CONFIG, "grid-mismatch"),
        Error::LengthMismatch { .. } => (EXIT_CONFIG, "length-mismatch"),
        Error::InvalidParameter { .. } => (EXIT_CONFIG, "invalid-parameter"),
        Error::InadmissibleStep { .. } => (EXIT_CONFIG, "inadmissible-step"),
        Error::InvalidInitialData(_) => (EXIT_CONFIG, "invalid-initial-data"),
        Error::NotDivisible { .. } => (EXIT_CONFIG, "not-divisible"),
        Error::LadderNotNested(_) => (EXIT_CONFIG, "ladder-not-nested"),
        Error::Snapshot { .. } => (EXIT_CONFIG, "snapshot-parse"),
        Error::NonFinite(_) => (EXIT_NUMERICAL, "non-finite"),
        Error::CgNotConverged(_) => (EXIT_NUMERICAL, "cg-not-converged"),
        Error::NewtonNotConverged(_) => (EXIT_NUMERICAL, "newton-not-converged"),
        Error::DampingCollapse(_) => (EXIT_NUMERICAL, "damping-collapse"),
        Error::PositivityViolation { .. } => (EXIT_NUMERICAL, "positivity-violation"),
        Error::TimeOutOfRange { .. } => (EXIT_NUMERICAL, "time-out-of-range"),
        Error::MissingSteps => (EXIT_NUMERICAL, "missing-steps"),
        Error::StepFailed { source, .. } => classify(source),
    }
}

#[derive(Debug, Clone, Default)]
pub struct Options {
    /// Overrides `output.dir`.
    pub out: Option<PathBuf>,
    pub quiet: bool,
}

impl Options {
    fn out_dir(&self, cfg: &RunConfig) -> PathBuf {
        self.out.clone().unwrap_or_else(|| cfg.output.dir.clone())
    }

    fn say(&self, line: impl fmt::Display) {
        if !self.quiet {
            println!("{line}");
        }
    }
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure {
        code: EXIT_NUMERICAL,
        tag: "io-error",
        message: format!("cannot write {}: {e}", path.display()),
    })
}

fn create_dir(path: &Path) -> Result<(), Failure> {
    fs::create_dir_all(path).map_err(|e| Failure {
        code: EXIT_NUMERICAL,
        tag: "io-error",
        message: format!("cannot create {}: {e}", path.display()),
    })
}

/// Writes `steps.csv`, `diagnostics.csv` (when every step is stored) and one
/// `mu_NNNNNN.txt` / `rho_NNNNNN.txt` pair per stored step under `snapshots/`.
fn write_trajectory(dir: &Path, traj: &Trajectory, cfg: &RunConfig) -> Result<(), Failure> {
    let snaps = dir.join("snapshots");
    create_dir(&snaps)?;
    write(&dir.join("steps.csv"), &steps_csv(traj))?;
    if traj.stores_every_step() {
        write(
            &dir.join("diagnostics.csv"),
            &diagnostics_csv(traj, &cfg.potentials())?,
        )?;
    }
    for s in &traj.states {
        write(
            &snaps.join(format!("mu_{:06}.txt", s.n)),
            &s.mu.to_snapshot(),
        )?;
        write(
            &snaps.join(format!("rho_{:06}.txt", s.n)),
            &s.rho.to_snapshot(),
        )?;
    }
    Ok(())
}

/// One trajectory with per-step CSV, diagnostics and snapshots.
pub fn cmd_run(cfg: &RunConfig, opts: &Options) -> Result<(), Failure> {
    let (mu0, rho0) = cfg.initial_fields()?;
    let scheme = Scheme::new(cfg.potentials(), cfg.time.tau, cfg.solver)?;
    let dir = opts.out_dir(cfg);
    create_dir(&dir)?;
    write(&dir.join("config.txt"), &cfg.to_text())?;
    let traj = match run(&scheme, mu0, rho0, cfg.time.t_final, cfg.output.store_every) {
        Ok(traj) => traj,
        Err(e) => {
            if let Some(partial) = &e.partial {
                write_trajectory(&dir, partial, cfg)?;
            }
            return Err(e.error.into());
        }
    };
    write_trajectory(&dir, &traj, cfg)?;

    opts.say(format_args!(
        "{} steps of tau = {:e} to T = {}",
        traj.steps, traj.tau, traj.t_final
    ));
    let last = traj.last();
    opts.say(format_args!(
        "final rho in [{:.6}, {:.6}], mu in [{:.6}, {:.6}]",
        last.rho.min(),
        last.rho.max(),
        last.mu.min(),
        last.mu.max()
    ));
    if traj.stores_every_step() && traj.steps > 0 {
        let energy = energy_identity_residuals(&traj, &cfg.potentials())?;
        opts.say(format_args!(
            "energy identity residual at m = N: {:.3e}",
            energy[energy.len() - 1]
        ));
    }
    opts.say(format_args!("wrote {}", dir.display()));
    Ok(())
}

/// Refinement ladder against a fine reference; writes `convergence.csv`.
pub fn cmd_converge(cfg: &RunConfig, opts: &Options) -> Result<(), Failure> {
    let t = cfg.time.t_final;
    if t <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "time.final",
            reason: "a convergence study needs T > 0".into(),
        }
        .into());
    }
    let (mu0, rho0) = cfg.initial_fields()?;
    let potentials = cfg.potentials();
    let setup = StudySetup {
        potentials: &potentials,
        mu0: &mu0,
        rho0: &rho0,
        t_final: t,
        solver: cfg.solver,
    };
    let taus: Vec<f64> = cfg.time.ladder.iter().map(|&n| t / n as f64).collect();
    let tau_ref = t / cfg.time.reference_steps as f64;
    let dir = opts.out_dir(cfg);
    let table = match convergence_study(&setup, &taus, tau_ref) {
        Ok(table) => table,
        Err(e) => {
            if let Some(partial) = &e.partial {
                create_dir(&dir)?;
                write(&dir.join("convergence.csv"), &error_report_csv(partial))?;
            }
            return Err(e.error.into());
        }
    };
    create_dir(&dir)?;
    write(&dir.join("config.txt"), &cfg.to_text())?;
    write(&dir.join("convergence.csv"), &error_report_csv(&table))?;
    opts.say(table.summary());
    if !table.is_monotone() {
        eprintln!("warning: total error is not monotone along the ladder");
    }
    opts.say(format_args!(
        "wrote {}",
        dir.join("convergence.csv").display()
    ));
    Ok(())
}

pub const CHECK_ENERGY_TOL: f64 = 1e-8;
pub const CHECK_MASS_TOL: f64 = 1e-10;
pub const CHECK_INTERP_TOL: f64 = 1e-13;
pub const CHECK_ORACLE_TOL: f64 = 1e-8;
pub const ORACLE_STEPS: usize = 3;

struct CheckLine {
    tag: &'static str,
    value: f64,
    bound: f64,
}

impl CheckLine {
    fn passed(&self) -> bool {
        self.value <= self.bound
    }
}

/// Runs the configured trajectory with every step stored and checks the
/// discrete identities, positivity, interpolants and a 4-cell dense oracle.
pub fn cmd_check(cfg: &RunConfig, opts: &Options) -> Result<(), Failure> {
    let (mu0, rho0) = cfg.initial_fields()?;
    let ps = cfg.potentials();
    let scheme = Scheme::new(ps.clone(), cfg.time.tau, cfg.solver)?;
    let traj = run(&scheme, mu0, rho0, cfg.time.t_final, 1).map_err(|e| Failure::from(e.error))?;

    let mut lines = Vec::new();
    if traj.steps > 0 {
        let energy = energy_identity_residuals(&traj, &ps)?;
        lines.push(CheckLine {
            tag: "energy-identity",
            value: energy.iter().copied().fold(0.0, f64::max),
            bound: CHECK_ENERGY_TOL,
        });
        let mass = mass_identity_residuals(&traj, &ps)?;
        lines.push(CheckLine {
            tag: "mass-identity",
            value: mass.iter().copied().fold(0.0, f64::max),
            bound: CHECK_MASS_TOL,
        });
        // Differences of nearby nodes lose digits in proportion to |z| / |jump|.
        let mut interp: f64 = 0.0;
        let mut conditioning: f64 = 1.0;
        for nodes in [traj.states_mu(), traj.states_rho()] {
            interp = interp
                .max(interp_identity_linf_residual(&nodes, traj.tau)?)
                .max(interp_identity_l2_residual(&nodes, traj.tau)?);
            conditioning = conditioning.max(jump_conditioning(&nodes));
        }
        lines.push(CheckLine {
            tag: "interpolant-identity",
            value: interp,
            bound: CHECK_INTERP_TOL * conditioning,
        });
    }
    let negativity = traj
        .states
        .iter()
        .map(|s| -s.mu.min() / norm_linf(&s.mu).max(f64::MIN_POSITIVE))
        .fold(f64::NEG_INFINITY, f64::max);
    lines.push(CheckLine {
        tag: "mu-positivity",
        value: negativity,
        bound: POSITIVITY_TOL,
    });
    lines.push(CheckLine {
        tag: "rho-interiority",
        value: -traj.rho_margin(),
        bound: 0.0,
    });
    lines.push(CheckLine {
        tag: "dense-oracle",
        value: oracle_deviation(cfg)?,
        bound: CHECK_ORACLE_TOL,
    });

    for l in &lines {
        let verdict = if l.passed() { "ok" } else { "FAILED" };
        opts.say(format_args!(
            "{:<22} {:>11.3e}  (bound {:.1e})  {verdict}",
            l.tag, l.value, l.bound
        ));
    }
    opts.say(format_args!("rho margin {:.6}", traj.rho_margin()));
    match lines.iter().find(|l| !l.passed()) {
        None => Ok(()),
        Some(l) => Err(Failure {
            code: EXIT_NUMERICAL,
            tag: l.tag,
            message: format!("check value {:e} exceeds bound {:e}", l.value, l.bound),
        }),
    }
}

/// Largest per-cell deviation between the stepper and the dense oracle on a
/// 4-cell line of the configured first-axis length.
fn oracle_deviation(cfg: &RunConfig) -> Result<f64, Failure> {
    let grid = Grid::line(4, cfg.grid.lengths[0])?;
    let preset = match &cfg.init {
        InitConfig::Preset(p) => *p,
        InitConfig::Snapshot { .. } => InitPreset::default(),
    };
    let (mu0, rho0) = preset.fields(&grid)?;
    let ps = cfg.potentials();
    let tau = cfg.time.tau;
    let scheme = Scheme::new(ps.clone(), tau, cfg.solver)?;
    let traj = run(
        &scheme,
        mu0.clone(),
        rho0.clone(),
        ORACLE_STEPS as f64 * tau,
        1,
    )
    .map_err(|e| Failure::from(e.error))?;
    let oracle = reference::trajectory(&grid, &ps, tau, mu0.values(), rho0.values(), ORACLE_STEPS)?;
    let mut worst: f64 = 0.0;
    for (s, (mu, rho)) in traj.states.iter().zip(&oracle) {
        for i in 0..grid.len() {
            worst = worst
                .max((s.mu.values()[i] - mu[i]).abs())
                .max((s.rho.values()[i] - rho[i]).abs());
        }
    }
    Ok(worst)
}

fn jump_conditioning(nodes: &[Field]) -> f64 {
    let size = nodes.iter().map(norm_l2).fold(0.0, f64::max);
    let jump = nodes
        .windows(2)
        .map(|w| norm_l2(&w[1].sub(&w[0]).expect("same grid")))
        .fold(0.0, f64::max);
    if jump > 0.0 {
        size / jump
    } else {
        1.0
    }
}

trait StateSeries {
    fn states_mu(&self) -> Vec<Field>;
    fn states_rho(&self) -> Vec<Field>;
}

impl StateSeries for Trajectory {
    fn states_mu(&self) -> Vec<Field> {
        self.states.iter().map(|s| s.mu.clone()).collect()
    }

    fn states_rho(&self) -> Vec<Field> {
        self.states.iter().map(|s| s.rho.clone()).collect()
    }
}
