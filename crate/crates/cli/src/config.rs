//! Line-oriented `key = value` run configuration.
//!
//! ```text
//! # comments start with '#'
//! grid.dim = 1
//! grid.cells = 128
//! potential.alpha2 = 0.5
//! time.tau = 0.0009765625
//! init.preset = cosine
//! ```
//!
//! Unknown and repeated keys are rejected. Every field has a default, so the
//! empty text is a valid configuration.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nvch::scenario::INTERIOR_MARGIN;
use nvch::{
    check_admissible_tau, make_logistic_potentials, Error, Field, GChoice, Grid, InitPreset,
    LogisticParams, PotentialSet, SolverOptions,
};

pub const DEFAULT_T_FINAL: f64 = 0.25;
pub const DEFAULT_STEPS: usize = 256;
pub const DEFAULT_LADDER: [usize; 5] = [16, 32, 64, 128, 256];
pub const DEFAULT_REFERENCE_STEPS: usize = 2048;
pub const DEFAULT_ROUGH_AMP: f64 = 0.1;
pub const DEFAULT_ROUGH_MODE: usize = 16;

const KEYS: &[&str] = &[
    "grid.dim",
    "grid.cells",
    "grid.lengths",
    "potential.alpha1",
    "potential.alpha2",
    "potential.alpha3",
    "potential.g",
    "time.final",
    "time.tau",
    "time.ladder",
    "time.reference_steps",
    "init.preset",
    "init.rho_amp",
    "init.mu_mean",
    "init.mu_amp",
    "init.rough_amp",
    "init.rough_mode",
    "init.mu_file",
    "init.rho_file",
    "solver.newton_tol",
    "solver.newton_max_iters",
    "solver.cg_tol",
    "solver.cg_max_iters",
    "solver.theta",
    "output.dir",
    "output.store_every",
];

#[derive(Debug, Clone, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },

    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },

    #[error("line {line}: `{key}` already set on line {first}")]
    DuplicateKey {
        line: usize,
        key: String,
        first: usize,
    },

    #[error("line {line}: `{key}` {reason}")]
    InvalidValue {
        line: usize,
        key: String,
        reason: String,
    },

    #[error("{}`{key}`: {source}", line_prefix(*.line))]
    Constraint {
        line: Option<usize>,
        key: &'static str,
        source: Error,
    },
}

fn line_prefix(line: Option<usize>) -> String {
    line.map(|l| format!("line {l}: ")).unwrap_or_default()
}

impl ConfigError {
    /// Short machine-readable failure tag.
    pub fn tag(&self) -> &'static str {
        match self {
            ConfigError::Syntax { .. } => "config-syntax",
            ConfigError::UnknownKey { .. } => "unknown-key",
            ConfigError::DuplicateKey { .. } => "duplicate-key",
            ConfigError::InvalidValue { .. } => "invalid-value",
            ConfigError::Constraint { source, .. } => crate::commands::classify(source).1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub dim: usize,
    /// One entry per axis.
    pub cells: Vec<usize>,
    pub lengths: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GKind {
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialConfig {
    pub params: LogisticParams,
    pub g: GKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeConfig {
    pub t_final: f64,
    pub tau: f64,
    /// Step counts `T / tau` of the refinement ladder, coarsest first.
    pub ladder: Vec<usize>,
    pub reference_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitConfig {
    /// Cosine data, with the rough component when its amplitude and mode are nonzero.
    Preset(InitPreset),
    Snapshot {
        mu_file: PathBuf,
        rho_file: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub store_every: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub potential: PotentialConfig,
    pub time: TimeConfig,
    pub init: InitConfig,
    pub solver: SolverOptions,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        parse_config("").expect("defaults are valid")
    }
}

struct Entry<'a> {
    line: usize,
    value: &'a str,
}

struct Entries<'a> {
    map: HashMap<&'a str, Entry<'a>>,
}

impl<'a> Entries<'a> {
    fn line(&self, key: &str) -> Option<usize> {
        self.map.get(key).map(|e| e.line)
    }

    fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.map.get(key) {
            None => Ok(default),
            Some(e) => parse_value(key, e),
        }
    }

    fn get_f64(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        let v: f64 = self.get(key, default)?;
        if !v.is_finite() {
            return Err(self.invalid(key, "must be finite"));
        }
        Ok(v)
    }

    fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        let Some(e) = self.map.get(key) else {
            return Ok(None);
        };
        e.value
            .split(',')
            .map(|item| {
                parse_value(
                    key,
                    &Entry {
                        line: e.line,
                        value: item.trim(),
                    },
                )
            })
            .collect::<Result<Vec<T>, _>>()
            .map(Some)
    }

    fn invalid(&self, key: &str, reason: impl Into<String>) -> ConfigError {
        ConfigError::InvalidValue {
            line: self.line(key).unwrap_or(0),
            key: key.to_string(),
            reason: reason.into(),
        }
    }

    fn constraint(&self, key: &'static str, source: Error) -> ConfigError {
        ConfigError::Constraint {
            line: self.line(key),
            key,
            source,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, e: &Entry<'_>) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    e.value
        .parse()
        .map_err(|err: T::Err| ConfigError::InvalidValue {
            line: e.line,
            key: key.to_string(),
            reason: format!("cannot parse {:?}: {err}", e.value),
        })
}

fn tokenize(text: &str) -> Result<Entries<'_>, ConfigError> {
    let mut map: HashMap<&str, Entry<'_>> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError::Syntax {
                line,
                reason: format!("expected `key = value`, got {content:?}"),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey {
                line,
                key: key.to_string(),
            });
        }
        if value.is_empty() {
            return Err(ConfigError::InvalidValue {
                line,
                key: key.to_string(),
                reason: "has an empty value".into(),
            });
        }
        if let Some(first) = map.get(key) {
            return Err(ConfigError::DuplicateKey {
                line,
                key: key.to_string(),
                first: first.line,
            });
        }
        map.insert(key, Entry { line, value });
    }
    Ok(Entries { map })
}

fn per_axis<T: Copy>(
    e: &Entries<'_>,
    key: &str,
    given: Option<Vec<T>>,
    default: T,
    dim: usize,
) -> Result<Vec<T>, ConfigError> {
    match given {
        None => Ok(vec![default; dim]),
        Some(v) if v.len() == 1 => Ok(vec![v[0]; dim]),
        Some(v) if v.len() == dim => Ok(v),
        Some(v) => Err(e.invalid(key, format!("has {} entries, grid.dim is {dim}", v.len()))),
    }
}

/// Parses a configuration, applies defaults, and checks every constraint
/// that does not need file access.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let e = tokenize(text)?;

    let dim: usize = e.get("grid.dim", 1)?;
    if !(1..=2).contains(&dim) {
        return Err(e.constraint("grid.dim", Error::UnsupportedDimension(dim)));
    }
    let cells = per_axis(&e, "grid.cells", e.get_list("grid.cells")?, 128, dim)?;
    let lengths = per_axis(&e, "grid.lengths", e.get_list("grid.lengths")?, 1.0, dim)?;
    let grid_cfg = GridConfig {
        dim,
        cells,
        lengths,
    };
    let grid = grid_cfg.build().map_err(|err| {
        let key = if matches!(&err, Error::InvalidGrid(r) if r.contains("length")) {
            "grid.lengths"
        } else {
            "grid.cells"
        };
        e.constraint(key, err)
    })?;

    let params = LogisticParams {
        alpha1: e.get_f64("potential.alpha1", 1.0)?,
        alpha2: e.get_f64("potential.alpha2", 0.5)?,
        alpha3: e.get_f64("potential.alpha3", 0.0)?,
    };
    let g = match e.map.get("potential.g").map(|v| v.value) {
        None | Some("identity") => GKind::Identity,
        Some(other) => {
            return Err(e.invalid("potential.g", format!("must be `identity`, got {other:?}")))
        }
    };
    let potential = PotentialConfig { params, g };
    let ps = potential.build().map_err(|err| {
        let key = match &err {
            Error::InvalidParameter { name, .. } if name.contains('2') => "potential.alpha2",
            Error::InvalidParameter { name, .. } if name.contains('3') => "potential.alpha3",
            _ => "potential.alpha1",
        };
        e.constraint(key, err)
    })?;

    let t_final = e.get_f64("time.final", DEFAULT_T_FINAL)?;
    if t_final < 0.0 {
        return Err(e.invalid("time.final", format!("must be >= 0, got {t_final}")));
    }
    let default_tau = if t_final > 0.0 {
        t_final / DEFAULT_STEPS as f64
    } else {
        DEFAULT_T_FINAL / DEFAULT_STEPS as f64
    };
    let tau = e.get_f64("time.tau", default_tau)?;
    if tau <= 0.0 {
        return Err(e.invalid("time.tau", format!("must be > 0, got {tau}")));
    }
    check_admissible_tau(tau, &ps).map_err(|err| e.constraint("time.tau", err))?;
    let ladder = e
        .get_list::<usize>("time.ladder")?
        .unwrap_or_else(|| DEFAULT_LADDER.to_vec());
    if ladder.contains(&0) {
        return Err(e.invalid("time.ladder", "step counts must be >= 1"));
    }
    let reference_steps: usize = e.get("time.reference_steps", DEFAULT_REFERENCE_STEPS)?;
    if reference_steps == 0 {
        return Err(e.invalid("time.reference_steps", "must be >= 1"));
    }
    let time = TimeConfig {
        t_final,
        tau,
        ladder,
        reference_steps,
    };

    let init = parse_init(&e)?;

    let defaults = SolverOptions::for_grid(&grid);
    let solver = SolverOptions {
        newton_tol: e.get_f64("solver.newton_tol", 1e-10)?,
        newton_max_iters: e.get("solver.newton_max_iters", defaults.newton_max_iters)?,
        theta: e.get_f64("solver.theta", defaults.theta)?,
        cg_tol: e.get_f64("solver.cg_tol", defaults.cg_tol)?,
        cg_max_iters: e.get("solver.cg_max_iters", defaults.cg_max_iters)?,
    };
    if solver.newton_tol <= 0.0 {
        return Err(e.invalid("solver.newton_tol", "must be > 0"));
    }
    if !(solver.cg_tol > 0.0 && solver.cg_tol < 1.0) {
        return Err(e.invalid("solver.cg_tol", "must lie in (0, 1)"));
    }
    if !(solver.theta > 0.0 && solver.theta < 1.0) {
        return Err(e.invalid("solver.theta", "must lie in (0, 1)"));
    }
    if solver.newton_max_iters == 0 {
        return Err(e.invalid("solver.newton_max_iters", "must be >= 1"));
    }
    if solver.cg_max_iters == 0 {
        return Err(e.invalid("solver.cg_max_iters", "must be >= 1"));
    }

    let output = OutputConfig {
        dir: e.get("output.dir", PathBuf::from("out"))?,
        store_every: e.get("output.store_every", 1)?,
    };
    if output.store_every == 0 {
        return Err(e.invalid("output.store_every", "must be >= 1"));
    }

    Ok(RunConfig {
        grid: grid_cfg,
        potential,
        time,
        init,
        solver,
        output,
    })
}

fn parse_init(e: &Entries<'_>) -> Result<InitConfig, ConfigError> {
    const PRESET_KEYS: [&str; 5] = [
        "init.rho_amp",
        "init.mu_mean",
        "init.mu_amp",
        "init.rough_amp",
        "init.rough_mode",
    ];
    let preset = e
        .map
        .get("init.preset")
        .map(|v| v.value)
        .unwrap_or("cosine");
    let forbid = |keys: &[&str], why: &str| {
        for key in keys {
            if e.map.contains_key(key) {
                return Err(e.invalid(key, format!("is not used with init.preset = {why}")));
            }
        }
        Ok(())
    };
    match preset {
        "cosine" | "rough" => {
            forbid(&["init.mu_file", "init.rho_file"], preset)?;
            let base = InitPreset::default();
            let mut p = InitPreset::cosine(
                e.get_f64("init.rho_amp", base.rho_amp)?,
                e.get_f64("init.mu_mean", base.mu_mean)?,
                e.get_f64("init.mu_amp", base.mu_amp)?,
            );
            if preset == "rough" {
                p = p.rough(
                    e.get_f64("init.rough_amp", DEFAULT_ROUGH_AMP)?,
                    e.get("init.rough_mode", DEFAULT_ROUGH_MODE)?,
                );
            } else {
                forbid(&["init.rough_amp", "init.rough_mode"], "cosine")?;
            }
            let rho_part = InitPreset::cosine(p.rho_amp, 0.0, 0.0).rough(p.rough_amp, p.rough_mode);
            rho_part
                .validate()
                .map_err(|err| e.constraint("init.rho_amp", err))?;
            InitPreset::cosine(0.0, p.mu_mean, p.mu_amp)
                .validate()
                .map_err(|err| e.constraint("init.mu_mean", err))?;
            Ok(InitConfig::Preset(p))
        }
        "snapshot" => {
            forbid(&PRESET_KEYS, "snapshot")?;
            let file = |key: &str| -> Result<PathBuf, ConfigError> {
                match e.map.get(key) {
                    Some(v) => Ok(PathBuf::from(v.value)),
                    None => Err(ConfigError::InvalidValue {
                        line: e.line("init.preset").unwrap_or(0),
                        key: key.to_string(),
                        reason: "is required with init.preset = snapshot".into(),
                    }),
                }
            };
            Ok(InitConfig::Snapshot {
                mu_file: file("init.mu_file")?,
                rho_file: file("init.rho_file")?,
            })
        }
        other => Err(e.invalid(
            "init.preset",
            format!("must be one of cosine, rough, snapshot; got {other:?}"),
        )),
    }
}

impl GridConfig {
    pub fn build(&self) -> nvch::Result<Grid> {
        Grid::new(self.dim, &self.cells, &self.lengths)
    }
}

impl PotentialConfig {
    pub fn build(&self) -> nvch::Result<PotentialSet> {
        let g = match self.g {
            GKind::Identity => GChoice::Identity,
        };
        make_logistic_potentials(self.params, g)
    }
}

impl RunConfig {
    pub fn grid(&self) -> Grid {
        self.grid.build().expect("validated at parse time")
    }

    pub fn potentials(&self) -> PotentialSet {
        self.potential.build().expect("validated at parse time")
    }

    /// Makes relative snapshot paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        if let InitConfig::Snapshot { mu_file, rho_file } = &mut self.init {
            for p in [mu_file, rho_file] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
    }

    /// `(mu0, rho0)` on the configured grid, reading snapshot files if needed.
    pub fn initial_fields(&self) -> Result<(Field, Field), InitError> {
        let grid = self.grid();
        match &self.init {
            InitConfig::Preset(p) => Ok(p.fields(&grid)?),
            InitConfig::Snapshot { mu_file, rho_file } => {
                let read = |path: &PathBuf| -> Result<Field, InitError> {
                    let text = std::fs::read_to_string(path).map_err(|source| InitError::Io {
                        path: path.clone(),
                        source,
                    })?;
                    let field = Field::from_snapshot(&text)?;
                    if field.grid() != &grid {
                        return Err(Error::GridMismatch.into());
                    }
                    Ok(field)
                };
                let (mu0, rho0) = (read(mu_file)?, read(rho_file)?);
                if mu0.min() < 0.0 {
                    return Err(Error::InvalidInitialData(format!(
                        "mu0 has minimum {} < 0",
                        mu0.min()
                    ))
                    .into());
                }
                if rho0.min() < INTERIOR_MARGIN || rho0.max() > 1.0 - INTERIOR_MARGIN {
                    return Err(Error::InvalidInitialData(format!(
                        "rho0 spans [{}, {}], outside [{INTERIOR_MARGIN}, {}]",
                        rho0.min(),
                        rho0.max(),
                        1.0 - INTERIOR_MARGIN
                    ))
                    .into());
                }
                Ok((mu0, rho0))
            }
        }
    }

    /// Serializes every field explicitly; `parse_config` reads it back unchanged.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let list = |v: &[String]| v.join(", ");
        let _ = writeln!(out, "grid.dim = {}", self.grid.dim);
        let cells: Vec<String> = self.grid.cells.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(out, "grid.cells = {}", list(&cells));
        let lengths: Vec<String> = self.grid.lengths.iter().map(|&l| float(l)).collect();
        let _ = writeln!(out, "grid.lengths = {}", list(&lengths));
        out.push('\n');
        let p = &self.potential.params;
        let _ = writeln!(out, "potential.alpha1 = {}", float(p.alpha1));
        let _ = writeln!(out, "potential.alpha2 = {}", float(p.alpha2));
        let _ = writeln!(out, "potential.alpha3 = {}", float(p.alpha3));
        let _ = writeln!(out, "potential.g = identity");
        out.push('\n');
        let t = &self.time;
        let _ = writeln!(out, "time.final = {}", float(t.t_final));
        let _ = writeln!(out, "time.tau = {}", float(t.tau));
        let ladder: Vec<String> = t.ladder.iter().map(|n| n.to_string()).collect();
        let _ = writeln!(out, "time.ladder = {}", list(&ladder));
        let _ = writeln!(out, "time.reference_steps = {}", t.reference_steps);
        out.push('\n');
        match &self.init {
            InitConfig::Preset(p) => {
                let rough = p.rough_amp != 0.0 || p.rough_mode != 0;
                let name = if rough { "rough" } else { "cosine" };
                let _ = writeln!(out, "init.preset = {name}");
                let _ = writeln!(out, "init.rho_amp = {}", float(p.rho_amp));
                let _ = writeln!(out, "init.mu_mean = {}", float(p.mu_mean));
                let _ = writeln!(out, "init.mu_amp = {}", float(p.mu_amp));
                if rough {
                    let _ = writeln!(out, "init.rough_amp = {}", float(p.rough_amp));
                    let _ = writeln!(out, "init.rough_mode = {}", p.rough_mode);
                }
            }
            InitConfig::Snapshot { mu_file, rho_file } => {
                let _ = writeln!(out, "init.preset = snapshot");
                let _ = writeln!(out, "init.mu_file = {}", mu_file.display());
                let _ = writeln!(out, "init.rho_file = {}", rho_file.display());
            }
        }
        out.push('\n');
        let s = &self.solver;
        let _ = writeln!(out, "solver.newton_tol = {}", float(s.newton_tol));
        let _ = writeln!(out, "solver.newton_max_iters = {}", s.newton_max_iters);
        let _ = writeln!(out, "solver.cg_tol = {}", float(s.cg_tol));
        let _ = writeln!(out, "solver.cg_max_iters = {}", s.cg_max_iters);
        let _ = writeln!(out, "solver.theta = {}", float(s.theta));
        out.push('\n');
        let _ = writeln!(out, "output.dir = {}", self.output.dir.display());
        let _ = writeln!(out, "output.store_every = {}", self.output.store_every);
        out
    }
}

/// Shortest round-trip text, in exponent form for very small or large magnitudes.
fn float(x: f64) -> String {
    if x == 0.0 || (1e-4..1e16).contains(&x.abs()) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum InitError {
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] Error),
}
