//! Run configuration: one JSON document shared by every subcommand.

use std::path::Path;

use kinrelax::certificate::{RegimeSpec, Variant};
use kinrelax::control::GccGrid;
use kinrelax::geometry::FlowConfig;
use kinrelax::solver::SolverConfig;
use kinrelax::{InitialData, ScatterProblem};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ScatterProblem,
    /// Control horizon `T`.
    #[serde(default = "one")]
    pub horizon: f64,
    /// Horizons averaged for `C-` and `C+`; defaults to `[T, 2T]`.
    #[serde(default)]
    pub spectral_horizons: Option<Vec<f64>>,
    #[serde(default)]
    pub gcc: GccGrid,
    /// Write `gcc_samples.csv` next to the report.
    #[serde(default = "yes")]
    pub gcc_samples: bool,
    #[serde(default)]
    pub regime: Option<RegimeSpec>,
    #[serde(default)]
    pub variant: Option<Variant>,
    #[serde(default)]
    pub solver: Option<SolverConfig>,
    #[serde(default = "equilibrium")]
    pub initial: InitialData,
    /// Final time for `solve`, `mc` and `fit`; `report` defaults to
    /// `t_star + 5 / lambda`.
    #[serde(default)]
    pub t_end: Option<f64>,
    /// Spacing of the time series; defaults to `min(0.25, t_end / 100)`.
    #[serde(default)]
    pub record_every: Option<f64>,
    /// Times of the binary grid snapshots; defaults to `[0, t_end]`.
    #[serde(default)]
    pub snapshot_times: Option<Vec<f64>>,
    #[serde(default)]
    pub mc: McSection,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub report: ReportSection,
    #[serde(default)]
    pub seed: u64,
    /// Thread count; never changes an emitted value.
    #[serde(default)]
    pub workers: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    pub n_particles: usize,
    pub flow: Option<FlowConfig>,
    /// Snapshot times; defaults to `[t_end]`.
    pub times: Option<Vec<f64>>,
    pub write_particles: bool,
}

impl Default for McSection {
    fn default() -> Self {
        McSection {
            n_particles: 10_000,
            flow: None,
            times: None,
            write_particles: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    /// Defaults to `[t_star, t_end]` when a regime is given, else `[0, t_end]`.
    pub window: Option<(f64, f64)>,
    /// Defaults to the largest mass drift seen along the run.
    pub noise_floor: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    /// Grid for the minorization check; defaults to the main solver grid.
    pub minorization_solver: Option<SolverConfig>,
    /// Slack on the minorization threshold `slack * alpha`.
    pub minorization_slack: f64,
    pub envelope_tolerance: f64,
    /// Allowance above `C+` for the fitted rate.
    pub fit_margin: f64,
}

impl Default for ReportSection {
    fn default() -> Self {
        ReportSection {
            minorization_solver: None,
            minorization_slack: 0.5,
            envelope_tolerance: 1e-10,
            fit_margin: 0.05,
        }
    }
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

fn equilibrium() -> InitialData {
    InitialData::Equilibrium
}

pub const DEFAULT_N_X: usize = 128;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl RunConfig {
    /// Parses with field paths and line numbers in the diagnostics.
    pub fn from_str(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            ConfigError(format!(
                "{origin}:{}:{}: field `{path}`: {inner}",
                inner.line(),
                inner.column()
            ))
        })?;
        cfg.validate().map_err(|e| ConfigError(format!("{origin}: {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::from_str(&text, &path.display().to_string())
    }

    fn validate(&self) -> kinrelax::Result<()> {
        self.problem.validate()?;
        self.initial.validate(self.problem.dim)?;
        let bad = |what: &str| Err(kinrelax::Error::Config(what.to_string()));
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad("horizon must be positive");
        }
        if let Some(h) = &self.spectral_horizons {
            if h.is_empty() || h.iter().any(|t| !(*t > 0.0)) {
                return bad("spectral_horizons must be a nonempty list of positive times");
            }
        }
        if let Some(t) = self.t_end {
            if !(t >= 0.0 && t.is_finite()) {
                return bad("t_end must be finite and nonnegative");
            }
        }
        if let Some(r) = self.record_every {
            if !(r > 0.0) {
                return bad("record_every must be positive");
            }
        }
        if self.mc.n_particles == 0 {
            return bad("mc.n_particles must be positive");
        }
        if self.workers == Some(0) {
            return bad("workers must be positive");
        }
        Ok(())
    }

    pub fn solver_config(&self) -> SolverConfig {
        self.solver.clone().unwrap_or_else(|| SolverConfig::new(DEFAULT_N_X, None))
    }

    pub fn spectral_horizons(&self) -> Vec<f64> {
        self.spectral_horizons
            .clone()
            .unwrap_or_else(|| vec![self.horizon, 2.0 * self.horizon])
    }

    pub fn t_end_or(&self, default: f64) -> f64 {
        self.t_end.unwrap_or(default)
    }

    pub fn record_every_for(&self, t_end: f64) -> f64 {
        self.record_every.unwrap_or(if t_end > 0.0 { (t_end / 100.0).min(0.25) } else { 1.0 })
    }

    pub fn snapshot_times_for(&self, t_end: f64) -> Vec<f64> {
        self.snapshot_times.clone().unwrap_or_else(|| vec![0.0, t_end])
    }

    pub fn mc_times_for(&self, t_end: f64) -> Vec<f64> {
        self.mc.times.clone().unwrap_or_else(|| vec![t_end])
    }

    /// Copy with every default written out, for the manifest. Worker count
    /// is left out since it never changes results.
    pub fn resolved(&self, t_end: Option<f64>) -> serde_json::Value {
        let mut c = self.clone();
        c.workers = None;
        c.solver = Some(self.solver_config());
        c.spectral_horizons = Some(self.spectral_horizons());
        if let Some(t) = t_end {
            c.t_end = Some(t);
            c.record_every = Some(self.record_every_for(t));
            c.snapshot_times = Some(self.snapshot_times_for(t));
            c.mc.times = Some(self.mc_times_for(t));
        }
        c.report.minorization_solver = Some(c.report.minorization_solver.clone().unwrap_or_else(|| self.solver_config()));
        let mut v = serde_json::to_value(&c).expect("config serializes");
        if let serde_json::Value::Object(m) = &mut v {
            m.remove("workers");
        }
        v
    }
}
