//! Run configuration: an optional JSON file overlaid by command-line flags.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use topoidx::models::{Disorder, ModelKind, ModelSpec};
use topoidx::symmetry::AZClass;

use crate::error::CliError;

pub const REPORT_SCHEMA: &str = "topoidx.report/1";

/// Flags shared by every subcommand. Anything left unset falls back to the
/// `--config` file, then to built-in defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// ssh | qwz | kitaev | dirac3d (index also accepts half-plane)
    #[arg(long)]
    pub model: Option<String>,
    /// Altland-Zirnbauer class label, checked against the model
    #[arg(long)]
    pub class: Option<String>,
    /// spatial dimension, checked against the model
    #[arg(long)]
    pub d: Option<usize>,
    /// truncation radius
    #[arg(long = "R")]
    pub radius: Option<f64>,
    /// fiber dimension, checked against the model
    #[arg(long = "N")]
    pub fiber: Option<usize>,
    /// disorder seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// comma-separated radii for convergence tables
    #[arg(long, value_delimiter = ',')]
    pub radii: Option<Vec<f64>>,
    /// odd trace power of the index estimator
    #[arg(long)]
    pub power: Option<usize>,
    /// output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON run configuration; flags take precedence
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// operator snapshot written by `build`
    #[arg(long)]
    pub snapshot: Option<PathBuf>,
    /// homotopy pipeline: flatten | pin | diii-pin | e-flip | compress
    #[arg(long)]
    pub pipeline: Option<String>,
    /// points per path stage
    #[arg(long)]
    pub grid: Option<usize>,
    /// decoupling accuracy for the pinning pipelines
    #[arg(long)]
    pub eps: Option<f64>,
    /// uniform disorder amplitude W
    #[arg(long)]
    pub disorder: Option<f64>,
    #[arg(long)]
    pub m: Option<f64>,
    #[arg(long)]
    pub t1: Option<f64>,
    #[arg(long)]
    pub t2: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TolConfig {
    pub gap: f64,
    pub theta_int: f64,
    pub sym: f64,
    pub loc: f64,
    pub chiral: f64,
}

impl Default for TolConfig {
    fn default() -> Self {
        Self { gap: 1e-6, theta_int: topoidx::invariants::THETA_INT, sym: 1e-8, loc: topoidx::locality::THETA_LOC, chiral: 1e-10 }
    }
}

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub model: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub class: Option<String>,
    pub d: Option<usize>,
    #[serde(rename = "R")]
    pub radius: Option<f64>,
    #[serde(rename = "N")]
    pub fiber: Option<usize>,
    pub seed: Option<u64>,
    pub disorder: Option<f64>,
    pub radii: Option<Vec<f64>>,
    pub power: Option<usize>,
    pub out: Option<PathBuf>,
    pub snapshot: Option<PathBuf>,
    pub pipeline: Option<String>,
    pub grid: Option<usize>,
    pub eps: Option<f64>,
    pub tolerances: Option<TolConfig>,
}

/// Validated, merged configuration.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub model: Option<String>,
    pub params: BTreeMap<String, f64>,
    pub class: Option<AZClass>,
    pub d: Option<usize>,
    #[serde(rename = "R")]
    pub radius: Option<f64>,
    #[serde(rename = "N")]
    pub fiber: Option<usize>,
    pub seed: u64,
    pub disorder: f64,
    pub radii: Option<Vec<f64>>,
    pub power: Option<usize>,
    pub out: PathBuf,
    pub snapshot: Option<PathBuf>,
    pub pipeline: Option<String>,
    pub grid: usize,
    pub eps: f64,
    pub tolerances: TolConfig,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

impl RunConfig {
    pub fn resolve(command: &str, flags: &Flags) -> Result<Self, CliError> {
        let file = match &flags.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| invalid(format!("config {}: {e}", p.display())))?;
                serde_json::from_str::<FileConfig>(&text).map_err(|e| invalid(format!("config {}: {e}", p.display())))?
            }
            None => FileConfig::default(),
        };
        let mut params = file.params.clone();
        for (k, v) in [("m", flags.m), ("t1", flags.t1), ("t2", flags.t2), ("mu", flags.mu), ("t", flags.t), ("delta", flags.delta)] {
            if let Some(v) = v {
                params.insert(k.to_string(), v);
            }
        }
        let class = match flags.class.clone().or(file.class) {
            Some(s) => Some(s.parse::<AZClass>().map_err(|e| invalid(e.to_string()))?),
            None => None,
        };
        let cfg = RunConfig {
            command: command.to_string(),
            model: flags.model.clone().or(file.model).map(|s| s.to_ascii_lowercase()),
            params,
            class,
            d: flags.d.or(file.d),
            radius: flags.radius.or(file.radius),
            fiber: flags.fiber.or(file.fiber),
            seed: flags.seed.or(file.seed).unwrap_or(0),
            disorder: flags.disorder.or(file.disorder).unwrap_or(0.0),
            radii: flags.radii.clone().or(file.radii),
            power: flags.power.or(file.power),
            out: flags.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from("out")),
            snapshot: flags.snapshot.clone().or(file.snapshot),
            pipeline: flags.pipeline.clone().or(file.pipeline),
            grid: flags.grid.or(file.grid).unwrap_or(topoidx::homotopy::DEFAULT_GRID),
            eps: flags.eps.or(file.eps).unwrap_or(0.1),
            tolerances: file.tolerances.unwrap_or_default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let t = &self.tolerances;
        for (name, v) in [("gap", t.gap), ("theta_int", t.theta_int), ("sym", t.sym), ("loc", t.loc), ("chiral", t.chiral)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("tolerance {name} must be positive, got {v}")));
            }
        }
        if let Some(r) = self.radius {
            if !(r.is_finite() && r > 0.0) {
                return Err(invalid(format!("--R must be positive, got {r}")));
            }
        }
        if let Some(radii) = &self.radii {
            if radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
                return Err(invalid("--radii must be positive"));
            }
        }
        if let Some(p) = self.power {
            if p % 2 == 0 {
                return Err(invalid(format!("--power must be odd, got {p}")));
            }
        }
        if !(self.disorder.is_finite() && self.disorder >= 0.0) {
            return Err(invalid("--disorder must be non-negative"));
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(invalid("--eps must be positive"));
        }
        if self.grid < 2 {
            return Err(invalid("--grid must be at least 2"));
        }
        if let Some(p) = &self.snapshot {
            if !p.is_file() {
                return Err(invalid(format!("snapshot {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn require_radius(&self) -> Result<f64, CliError> {
        self.radius.ok_or_else(|| invalid("missing --R"))
    }

    pub fn model_kind(&self) -> Result<ModelKind, CliError> {
        let name = self.model.as_deref().ok_or_else(|| invalid("missing --model"))?;
        name.parse::<ModelKind>().map_err(|e| invalid(e.to_string()))
    }

    /// Model spec with every required parameter present, cross-checked
    /// against `--class`, `--d` and `--N` when those are given.
    pub fn model_spec(&self) -> Result<ModelSpec, CliError> {
        let kind = self.model_kind()?;
        let required: &[&str] = match kind {
            ModelKind::Ssh => &["t1", "t2"],
            ModelKind::Qwz | ModelKind::Dirac3d => &["m"],
            ModelKind::Kitaev => &["mu", "t", "delta"],
        };
        let missing: Vec<String> = required.iter().filter(|k| !self.params.contains_key(**k)).map(|k| format!("--{k}")).collect();
        if !missing.is_empty() {
            return Err(invalid(format!("model {} needs {}", self.model.as_deref().unwrap_or(""), missing.join(", "))));
        }
        if let Some(extra) = self.params.keys().find(|k| !required.contains(&k.as_str())) {
            return Err(invalid(format!("parameter {extra} does not apply to this model")));
        }
        self.check_shape(kind.class(), kind.dimension(), kind.fiber())?;
        let params: Vec<(&str, f64)> = self.params.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        Ok(ModelSpec::new(kind, &params).with_disorder(Disorder::new(self.disorder, self.seed)))
    }

    pub fn check_shape(&self, class: AZClass, d: usize, fiber: usize) -> Result<(), CliError> {
        if let Some(c) = self.class {
            if c != class {
                return Err(invalid(format!("--class {c} does not match {class}")));
            }
        }
        if let Some(dd) = self.d {
            if dd != d {
                return Err(invalid(format!("--d {dd} does not match dimension {d}")));
            }
        }
        if let Some(n) = self.fiber {
            if n != fiber {
                return Err(invalid(format!("--N {n} does not match fiber {fiber}")));
            }
        }
        Ok(())
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}
