//! Pipeline configuration: the JSON config file consumed by every
//! subcommand, plus the command-line parameter overrides layered on top of
//! it. The simulate stage persists the effective post-override configuration
//! into the run directory so later stages and re-runs see identical
//! parameters.

use mona_core::dynamic_points::DynamicConfig;
use mona_core::object_filter::DEFAULT_TAU_0;
use mona_core::scene::SceneConfig;
use mona_core::traj_eval::{AlignmentMode, EvalConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

fn default_tau_0() -> f64 {
    DEFAULT_TAU_0
}

/// Full parameter set for a run. Only the scene is mandatory; extraction,
/// filtering, and evaluation parameters default to their standard values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub scene: SceneConfig,
    #[serde(default)]
    pub dynamic: DynamicConfig,
    /// Base threshold for the box filter's unit-box selection.
    #[serde(default = "default_tau_0")]
    pub tau_0: f64,
    #[serde(default)]
    pub eval: EvalConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        self.scene
            .validate()
            .map_err(|e| CliError::Validation(format!("scene: {e}")))?;
        self.dynamic
            .validate()
            .map_err(|e| CliError::Validation(format!("dynamic: {e}")))?;
        if !(self.tau_0 > 0.0 && self.tau_0.is_finite()) {
            return Err(CliError::Validation(format!(
                "tau_0 must be finite and strictly positive, got {}",
                self.tau_0
            )));
        }
        self.eval
            .validate()
            .map_err(|e| CliError::Validation(format!("eval: {e}")))?;
        Ok(())
    }
}

/// Command-line parameter overrides. `None` leaves the config value alone.
#[derive(Debug, Clone, Copy, Default)]
pub struct ParamOverrides {
    pub seed: Option<u64>,
    pub tau_0: Option<f64>,
    pub flow_scale: Option<f64>,
    pub theta_min: Option<f64>,
    pub p_min: Option<f64>,
    pub lambda: Option<f64>,
    pub grid_k: Option<usize>,
    pub align: Option<AlignmentMode>,
    pub rpe_delta: Option<usize>,
}

impl ParamOverrides {
    /// Applies the overrides and revalidates, returning the effective
    /// configuration.
    pub fn apply(&self, mut config: PipelineConfig) -> Result<PipelineConfig, CliError> {
        if let Some(seed) = self.seed {
            config.scene.seed = seed;
        }
        if let Some(tau_0) = self.tau_0 {
            config.tau_0 = tau_0;
        }
        if let Some(flow_scale) = self.flow_scale {
            config.dynamic.flow_scale = flow_scale;
        }
        if let Some(theta_min) = self.theta_min {
            config.dynamic.theta_min = theta_min;
        }
        if let Some(p_min) = self.p_min {
            config.dynamic.p_min = p_min;
        }
        if let Some(lambda) = self.lambda {
            config.dynamic.lambda = lambda;
        }
        if let Some(grid_k) = self.grid_k {
            config.dynamic.grid_k = grid_k;
        }
        if let Some(align) = self.align {
            config.eval.alignment = align;
        }
        if let Some(rpe_delta) = self.rpe_delta {
            config.eval.rpe_delta = rpe_delta;
        }
        config.validate()?;
        Ok(config)
    }
}
