//! Experiment configuration: a versioned TOML schema mapping onto the
//! builtin models and run parameters.

use serde::Deserialize;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::{builtins, UnitVolatilityModel};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema")]
    pub schema: u32,
    pub model: ModelConfig,
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub verification: VerificationConfig,
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// zero | ou | sine | logistic | custom
    pub kind: String,
    pub theta: Option<f64>,
    pub rate: Option<f64>,
    pub capacity: Option<f64>,
    pub sigma: Option<f64>,
    pub jumps: Option<JumpConfig>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpConfig {
    pub rate: f64,
    pub bound: Option<f64>,
    pub sd: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// cuea | cauea | cujea | caujea
    pub algorithm: String,
    pub x: f64,
    pub y: f64,
    pub t: f64,
    pub replications: usize,
    pub seed: u64,
    #[serde(default = "default_threads")]
    pub threads: usize,
    /// When false, x and y are on the original scale and map through the
    /// state transform first.
    #[serde(default = "default_true")]
    pub transformed_scale: bool,
}

fn default_threads() -> usize {
    1
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
    /// Also write time/value columns of restored paths for plotting.
    #[serde(default)]
    pub plot_data: bool,
    /// Restoration grid size for plot data.
    #[serde(default = "default_plot_points")]
    pub plot_points: usize,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_plot_points() -> usize {
    101
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: default_out_dir(),
            plot_data: false,
            plot_points: default_plot_points(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerificationConfig {
    #[serde(default = "default_grid_step")]
    pub grid_step: f64,
    #[serde(default = "default_ks_samples")]
    pub ks_samples: usize,
    #[serde(default = "default_query_times")]
    pub query_times: Vec<f64>,
    /// Per-test rejection level; a check fails when at least two of the
    /// independent seeds reject at this level.
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "default_seeds")]
    pub seeds: u32,
}

fn default_grid_step() -> f64 {
    1e-3
}
fn default_ks_samples() -> usize {
    10_000
}
fn default_query_times() -> Vec<f64> {
    vec![0.25, 0.5, 0.75]
}
fn default_level() -> f64 {
    0.01
}
fn default_seeds() -> u32 {
    3
}

impl Default for VerificationConfig {
    fn default() -> Self {
        VerificationConfig {
            grid_step: default_grid_step(),
            ks_samples: default_ks_samples(),
            query_times: default_query_times(),
            level: default_level(),
            seeds: default_seeds(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema version {} (expected {SCHEMA_VERSION})",
                self.schema
            )));
        }
        if !(self.run.t > 0.0) {
            return Err(Error::Config(format!(
                "run.t must be positive, got {}",
                self.run.t
            )));
        }
        if self.run.replications == 0 {
            return Err(Error::Config("run.replications must be at least 1".into()));
        }
        if !(self.verification.grid_step > 0.0) {
            return Err(Error::Config("verification.grid_step must be positive".into()));
        }
        if !matches!(
            self.run.algorithm.as_str(),
            "cuea" | "cauea" | "cujea" | "caujea"
        ) {
            return Err(Error::Config(format!(
                "run.algorithm must be one of cuea|cauea|cujea|caujea, got {:?}",
                self.run.algorithm
            )));
        }
        Ok(())
    }

    /// Instantiate the configured model.
    pub fn build_model(&self) -> Result<UnitVolatilityModel> {
        let mc = &self.model;
        let base = match mc.kind.as_str() {
            "zero" => builtins::zero_drift(),
            "ou" => builtins::ornstein_uhlenbeck(mc.theta.ok_or_else(|| {
                Error::Config("model.theta is required for kind = \"ou\"".into())
            })?)?,
            "sine" => builtins::sine_drift(),
            "logistic" => builtins::logistic(
                mc.rate
                    .ok_or_else(|| Error::Config("model.rate is required for logistic".into()))?,
                mc.capacity.ok_or_else(|| {
                    Error::Config("model.capacity is required for logistic".into())
                })?,
                mc.sigma
                    .ok_or_else(|| Error::Config("model.sigma is required for logistic".into()))?,
            )?,
            "custom" => {
                return Err(Error::Config(
                    "kind = \"custom\" is not loadable from config; build the model \
                     through the library API (UnitVolatilityModel) instead"
                        .into(),
                ))
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown model kind {other:?} (expected zero|ou|sine|logistic|custom)"
                )))
            }
        };
        match (&mc.jumps, mc.kind.as_str()) {
            (None, _) => Ok(base),
            (Some(j), "zero") => {
                builtins::zero_drift_with_jumps(j.rate, j.bound.unwrap_or(j.rate), j.sd)
            }
            (Some(j), "sine") => {
                builtins::sine_drift_with_jumps(j.rate, j.bound.unwrap_or(j.rate), j.sd)
            }
            (Some(_), other) => Err(Error::Config(format!(
                "jump components are only wired for the zero and sine models; the \
                 {other} model has an unbounded antiderivative so no finite proposal \
                 ratio bound exists"
            ))),
        }
    }

    /// Endpoints on the transformed scale.
    pub fn endpoints(&self, m: &UnitVolatilityModel) -> Result<(f64, f64)> {
        if self.run.transformed_scale {
            Ok((self.run.x, self.run.y))
        } else {
            Ok((
                m.to_transformed(self.run.x)?,
                m.to_transformed(self.run.y)?,
            ))
        }
    }

    pub fn model_label(&self) -> String {
        let mut label = self.model.kind.clone();
        if let Some(t) = self.model.theta {
            label.push_str(&format!("(theta={t})"));
        }
        if let Some(j) = &self.model.jumps {
            label.push_str(&format!(
                "+jumps(rate={},bound={},sd={})",
                j.rate,
                j.bound.unwrap_or(j.rate),
                j.sd
            ));
        }
        label
    }
}
