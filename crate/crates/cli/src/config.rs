//! Experiment configuration: one JSON document per run.
//!
//! Parsing is strict: unknown keys are rejected, and every field a command
//! needs must be present. The rate convention has no default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ahl_core::cluster::RateConvention;
use ahl_core::io::read_density_csv;
use ahl_core::measures::{particle_stats, rho_sigma, AngleMeasure, DiameterLaw};
use ahl_core::SlitParticle;

/// A configuration problem, reported with exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn bad<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Cluster,
    Hull,
    Flow,
    Ode,
    Fluct,
    Compare,
    Verify,
}

/// Attachment law `ν`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NuSpec {
    Uniform,
    Interval {
        eta: f64,
        smoothing: Option<f64>,
    },
    Mfold {
        m: u32,
    },
    /// `x,h` CSV on the grid `x_i = i/N`, relative to the config file.
    Tabulated {
        path: PathBuf,
    },
    PointMass {
        at: f64,
    },
}

/// Diameter law `σ`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SigmaSpec {
    Constant { d: f64 },
    Tabulated { atoms: Vec<f64>, weights: Vec<f64> },
}

/// Arrival-time convention.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RateSpec {
    /// Arrivals at cumulative capacity, `T_k = Σ lcap(P_j)`.
    Deterministic,
    /// Poisson arrivals at rate `lcap⁻¹` (mean capacity for a diameter law).
    Capacity,
    /// Poisson arrivals at rate `ρ(P)` (or `ρ(σ)`).
    Rho,
    Poisson {
        rate: f64,
    },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub master: u64,
    pub replicas: u32,
}

/// Numerical resolution; every knob is optional and must be positive.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Resolution {
    /// Initial boundary points of a traced cluster.
    pub n_points: Option<usize>,
    /// Rays of a traced Loewner hull.
    pub n_rays: Option<usize>,
    /// Offset `ε` of the traced circle `|z| = 1 + ε`.
    pub eps: Option<f64>,
    /// Integration step of the Loewner and circle ODE solvers.
    pub step: Option<f64>,
    /// Sampling interval of simulated flows.
    pub sample_dt: Option<f64>,
    /// Bins of the finger histogram.
    pub bins: Option<usize>,
    /// Paths of the limit SDE in `fluct`.
    pub sde_paths: Option<usize>,
    /// Evenly spaced start points when `starts` is not given.
    pub n_starts: Option<usize>,
    /// Halve `ε` until the hull polyline settles.
    pub refine: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    pub nu: Option<NuSpec>,
    pub sigma: Option<SigmaSpec>,
    pub horizon: Option<f64>,
    pub rate: Option<RateSpec>,
    pub seeds: Option<Seeds>,
    pub output: PathBuf,
    #[serde(default)]
    pub resolution: Resolution,
    /// Start positions (turns) of tracked points, all at time 0.
    pub starts: Option<Vec<f64>>,
    /// Constant `c0` of the drift; 0 for the symmetric slit.
    pub c0: Option<f64>,
    /// Replay this event log (JSON lines) instead of drawing one.
    pub events: Option<PathBuf>,
    /// Criteria to run under `verify`; all when absent.
    pub criteria: Option<Vec<u8>>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ConfigError(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        // paths inside the config are relative to the config file
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(NuSpec::Tabulated { path }) = &mut cfg.nu {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        if let Some(ev) = &mut cfg.events {
            if ev.is_relative() {
                *ev = base.join(&*ev);
            }
        }
        Ok(cfg)
    }

    /// Checks presence and positivity of everything the command uses.
    pub fn validate(&self) -> Result<(), ConfigError> {
        use Command::*;
        let replay = self.events.is_some();
        let needs_nu = match self.command {
            Cluster | Flow => !replay,
            Hull | Ode | Fluct | Compare => true,
            Verify => false,
        };
        let needs_draw = matches!(self.command, Cluster | Flow | Fluct | Compare) && !replay;
        let needs_horizon = !matches!(self.command, Verify) && !(replay && matches!(self.command, Cluster));
        if needs_nu && self.nu.is_none() {
            return bad("missing field `nu`");
        }
        if needs_draw {
            for (name, present) in
                [("sigma", self.sigma.is_some()), ("rate", self.rate.is_some()), ("seeds", self.seeds.is_some())]
            {
                if !present {
                    return bad(format!("missing field `{name}`"));
                }
            }
        }
        if needs_horizon && self.horizon.is_none() {
            return bad("missing field `horizon`");
        }
        if let Some(h) = self.horizon {
            positive("horizon", h)?;
        }
        if let Some(s) = &self.seeds {
            if s.replicas == 0 {
                return bad("`seeds.replicas` must be positive");
            }
        }
        if let Some(RateSpec::Poisson { rate }) = self.rate {
            positive("rate.rate", rate)?;
        }
        let r = &self.resolution;
        for (name, v) in [
            ("n_points", r.n_points),
            ("n_rays", r.n_rays),
            ("bins", r.bins),
            ("sde_paths", r.sde_paths),
            ("n_starts", r.n_starts),
        ] {
            if v == Some(0) {
                return bad(format!("`resolution.{name}` must be positive"));
            }
        }
        for (name, v) in [("eps", r.eps), ("step", r.step), ("sample_dt", r.sample_dt)] {
            if let Some(v) = v {
                positive(&format!("resolution.{name}"), v)?;
            }
        }
        if let Some(ids) = &self.criteria {
            let known = ahl_verify::criterion_ids();
            if let Some(id) = ids.iter().find(|id| !known.contains(id)) {
                return bad(format!("unknown acceptance criterion {id}"));
            }
        }
        if let Some(starts) = &self.starts {
            if starts.is_empty() || starts.iter().any(|x| !x.is_finite()) {
                return bad("`starts` must be a non-empty list of finite positions");
            }
        }
        if matches!(self.command, Fluct | Compare)
            && self.sigma.as_ref().is_some_and(|s| !matches!(s, SigmaSpec::Constant { .. }))
        {
            return bad(format!("`{}` needs a constant diameter", self.command_name()));
        }
        if self.command == Ode && self.nu.as_ref().is_some_and(|n| matches!(n, NuSpec::PointMass { .. })) {
            return bad("the deterministic flow needs a law with a density");
        }
        // building the laws catches out-of-range parameters before any work
        if let Some(sigma) = &self.sigma {
            sigma.build()?;
        }
        if let Some(nu) = &self.nu {
            if !matches!(nu, NuSpec::Tabulated { .. }) {
                nu.build()?;
            }
        }
        Ok(())
    }

    pub fn command_name(&self) -> &'static str {
        match self.command {
            Command::Cluster => "cluster",
            Command::Hull => "hull",
            Command::Flow => "flow",
            Command::Ode => "ode",
            Command::Fluct => "fluct",
            Command::Compare => "compare",
            Command::Verify => "verify",
        }
    }

    pub fn nu(&self) -> Result<AngleMeasure, ConfigError> {
        match &self.nu {
            Some(n) => n.build(),
            None => bad("missing field `nu`"),
        }
    }

    pub fn sigma(&self) -> Result<DiameterLaw, ConfigError> {
        match &self.sigma {
            Some(s) => s.build(),
            None => bad("missing field `sigma`"),
        }
    }

    pub fn horizon(&self) -> Result<f64, ConfigError> {
        self.horizon.ok_or_else(|| ConfigError("missing field `horizon`".into()))
    }

    pub fn seeds(&self) -> Result<Seeds, ConfigError> {
        self.seeds.ok_or_else(|| ConfigError("missing field `seeds`".into()))
    }

    pub fn rate(&self) -> Result<RateConvention, ConfigError> {
        let spec = self.rate.ok_or_else(|| ConfigError("missing field `rate`".into()))?;
        let sigma = self.sigma()?;
        let conv = match spec {
            RateSpec::Deterministic => RateConvention::Deterministic,
            RateSpec::Capacity => RateConvention::Poisson { rate: 1.0 / sigma.mean_lcap() },
            RateSpec::Rho => match &sigma {
                DiameterLaw::Constant(d) => {
                    let p = SlitParticle::new(*d, 0.0).map_err(|e| ConfigError(e.to_string()))?;
                    RateConvention::Poisson { rate: particle_stats(&p).rho }
                }
                law => RateConvention::Poisson { rate: rho_sigma(law).map_err(|e| ConfigError(e.to_string()))? },
            },
            RateSpec::Poisson { rate } => RateConvention::Poisson { rate },
        };
        Ok(conv)
    }

    /// Tracked start positions: `starts`, or `n_starts` evenly spaced points.
    pub fn starts(&self) -> Vec<f64> {
        match &self.starts {
            Some(s) => s.clone(),
            None => {
                let n = self.resolution.n_starts.unwrap_or(16);
                (0..n).map(|k| (k as f64 + 0.5) / n as f64).collect()
            }
        }
    }
}

fn positive(name: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        bad(format!("`{name}` must be positive and finite, got {v}"))
    }
}

impl NuSpec {
    pub fn build(&self) -> Result<AngleMeasure, ConfigError> {
        let r = match self {
            NuSpec::Uniform => Ok(AngleMeasure::Uniform),
            NuSpec::Interval { eta, smoothing: None } => AngleMeasure::interval(*eta),
            NuSpec::Interval { eta, smoothing: Some(w) } => AngleMeasure::smoothed_interval(*eta, *w),
            NuSpec::Mfold { m } => AngleMeasure::mfold(*m),
            NuSpec::PointMass { at } => Ok(AngleMeasure::point_mass(*at)),
            NuSpec::Tabulated { path } => {
                let file = std::fs::File::open(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
                read_density_csv(file).map(AngleMeasure::Tabulated)
            }
        };
        r.map_err(|e| ConfigError(format!("invalid `nu`: {e}")))
    }
}

impl SigmaSpec {
    pub fn build(&self) -> Result<DiameterLaw, ConfigError> {
        let r = match self {
            SigmaSpec::Constant { d } => DiameterLaw::constant(*d),
            SigmaSpec::Tabulated { atoms, weights } => DiameterLaw::tabulated(atoms.clone(), weights.clone()),
        };
        r.map_err(|e| ConfigError(format!("invalid `sigma`: {e}")))
    }
}
