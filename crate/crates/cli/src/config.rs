//! JSON run configuration.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use signstorm::diagnostics::SuiteSettings;
use signstorm::harness::{ExperimentSpec, OptimizerSpec, ParamMode};
use signstorm::problems::{
    bounded_nonconvex, noisy_quadratic, scale_declared_smoothness, synthetic_logistic,
};
use signstorm::{Method, SharedProblem, Vector};

/// A per-coordinate parameter given either as one value for every coordinate or
/// as an explicit list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoordParam {
    Uniform(f64),
    PerCoordinate(Vec<f64>),
}

impl CoordParam {
    pub fn resolve(&self, field: &str, dim: usize) -> Result<Vector<f64>, String> {
        match self {
            CoordParam::Uniform(v) => Ok(Vector::filled(dim, *v)),
            CoordParam::PerCoordinate(v) if v.len() == dim => Ok(Vector::from(v.clone())),
            CoordParam::PerCoordinate(v) => Err(format!(
                "problem.{field} has {} entries, expected {dim}",
                v.len()
            )),
        }
    }
}

/// `x₁`: a value, a list, or an evenly spaced ramp from `from` to `to`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitParam {
    Coords(CoordParam),
    Ramp { from: f64, to: f64 },
}

impl InitParam {
    pub fn resolve(&self, dim: usize) -> Result<Vector<f64>, String> {
        match self {
            InitParam::Coords(c) => c.resolve("x_init", dim),
            InitParam::Ramp { from, to } => Ok(Vector::from_fn(dim, |j| {
                if dim == 1 {
                    *from
                } else {
                    from + (to - from) * j as f64 / (dim - 1) as f64
                }
            })),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemConfig {
    NoisyQuadratic {
        dim: usize,
        h: CoordParam,
        sigma: CoordParam,
        x_init: InitParam,
    },
    BoundedNonconvex {
        dim: usize,
        a: CoordParam,
        sigma: CoordParam,
        x_init: InitParam,
    },
    SyntheticLogistic {
        dim: usize,
        n_samples: usize,
        feature_bound: f64,
        x_init: InitParam,
        #[serde(default)]
        data_seed: u64,
    },
}

impl ProblemConfig {
    pub fn dim(&self) -> usize {
        match self {
            ProblemConfig::NoisyQuadratic { dim, .. }
            | ProblemConfig::BoundedNonconvex { dim, .. }
            | ProblemConfig::SyntheticLogistic { dim, .. } => *dim,
        }
    }

    pub fn build(&self) -> Result<SharedProblem<f64>, String> {
        let d = self.dim();
        if d == 0 {
            return Err("problem.dim must be at least 1".into());
        }
        let p: SharedProblem<f64> = match self {
            ProblemConfig::NoisyQuadratic { h, sigma, x_init, .. } => Arc::new(
                noisy_quadratic(h.resolve("h", d)?, sigma.resolve("sigma", d)?, x_init.resolve(d)?)
                    .map_err(|e| e.to_string())?,
            ),
            ProblemConfig::BoundedNonconvex { a, sigma, x_init, .. } => Arc::new(
                bounded_nonconvex(a.resolve("a", d)?, sigma.resolve("sigma", d)?, x_init.resolve(d)?)
                    .map_err(|e| e.to_string())?,
            ),
            ProblemConfig::SyntheticLogistic {
                n_samples,
                feature_bound,
                x_init,
                data_seed,
                ..
            } => Arc::new(
                synthetic_logistic(*n_samples, *feature_bound, x_init.resolve(d)?, *data_seed)
                    .map_err(|e| e.to_string())?,
            ),
        };
        Ok(p)
    }
}

/// An optimizer given by name, or by name with its own parameter mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OptimizerEntry {
    Name(Method),
    Full(OptimizerSpec),
}

impl OptimizerEntry {
    pub fn spec(&self) -> OptimizerSpec {
        match self {
            OptimizerEntry::Name(method) => OptimizerSpec {
                method: *method,
                params: None,
            },
            OptimizerEntry::Full(s) => *s,
        }
    }
}

/// Deliberate misdeclarations for exercising the assumption verifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultConfig {
    /// Multiplies every declared `L_j`.
    pub l_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub optimizers: Vec<OptimizerEntry>,
    pub param_mode: ParamMode,
    pub t_grid: Vec<usize>,
    pub n_seeds: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub master_seed: u64,
    pub output_dir: PathBuf,
    /// Record `‖ε_t‖₁` in the traces.
    #[serde(default)]
    pub diagnostics: bool,
    /// Seeds per cell whose traces are written as CSV.
    #[serde(default = "default_trace_seeds")]
    pub trace_seeds: usize,
    /// Settings of the diagnostic suite run by `check`.
    #[serde(default)]
    pub check: SuiteSettings,
    #[serde(default)]
    pub fault: Option<FaultConfig>,
}

fn default_delta() -> f64 {
    0.05
}

fn default_trace_seeds() -> usize {
    1
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigLoadError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigLoadError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(ConfigLoadError::Invalid)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.optimizers.is_empty() {
            return Err("optimizers must not be empty".into());
        }
        if self.t_grid.is_empty() || self.t_grid[0] == 0 {
            return Err("t_grid must contain positive horizons".into());
        }
        if self.t_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err("t_grid must be strictly increasing".into());
        }
        if self.n_seeds == 0 {
            return Err("n_seeds must be at least 1".into());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(format!("delta = {} must lie in (0, 1)", self.delta));
        }
        if let Some(f) = self.fault {
            if !(f.l_scale > 0.0 && f.l_scale.is_finite()) {
                return Err("fault.l_scale must be positive".into());
            }
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err("output_dir must not be empty".into());
        }
        let c = &self.check;
        if c.horizon == 0 || c.seeds == 0 {
            return Err("check.horizon and check.seeds must be at least 1".into());
        }
        if !(c.confidence > 0.0 && c.confidence < 1.0) {
            return Err("check.confidence must lie in (0, 1)".into());
        }
        Ok(())
    }

    /// The problem with any configured fault applied.
    pub fn build_problem(&self) -> Result<SharedProblem<f64>, String> {
        let p = self.problem.build()?;
        match self.fault {
            None => Ok(p),
            Some(f) => Ok(Arc::new(
                scale_declared_smoothness(p, f.l_scale).map_err(|e| e.to_string())?,
            )),
        }
    }

    pub fn experiment_spec(&self) -> Result<ExperimentSpec, String> {
        Ok(ExperimentSpec {
            problem: self.build_problem()?,
            problem_description: serde_json::to_value((&self.problem, &self.fault))
                .map_err(|e| e.to_string())?,
            optimizers: self.optimizers.iter().map(OptimizerEntry::spec).collect(),
            param_mode: self.param_mode,
            t_grid: self.t_grid.clone(),
            n_seeds: self.n_seeds,
            delta: self.delta,
            master_seed: self.master_seed,
            collect_diagnostics: self.diagnostics,
            trace_seeds: self.trace_seeds,
        })
    }

    /// `output_dir`, relative paths taken from the config file's directory.
    pub fn resolved_output_dir(&self, config_path: &Path) -> PathBuf {
        if self.output_dir.is_absolute() {
            self.output_dir.clone()
        } else {
            config_path
                .parent()
                .unwrap_or_else(|| Path::new("."))
                .join(&self.output_dir)
        }
    }
}

#[derive(Debug)]
pub enum ConfigLoadError {
    Io(String),
    Invalid(String),
}
