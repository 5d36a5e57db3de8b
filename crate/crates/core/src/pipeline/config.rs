//! Human-editable TOML configuration.
//!
//! Angles are written in degrees (`*_deg` keys) and converted to radians
//! when the runtime parameter structs are built.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::eval::{DEFAULT_QUANTILE, DEFAULT_RPE_WINDOW};
use crate::kio::{FilterVariant, NoiseParams, PriorStds};
use crate::sim::GaitConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub accel_std: f64,
    pub gyro_std: f64,
    pub accel_bias_std: f64,
    pub gyro_bias_std: f64,
    pub contact_lin_std: f64,
    pub contact_ang_std: f64,
    pub encoder_std_deg: f64,
    pub swing_scale: f64,
    pub fk_gain: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        let np = NoiseParams::default();
        NoiseSection {
            accel_std: np.accel_std,
            gyro_std: np.gyro_std,
            accel_bias_std: np.accel_bias_std,
            gyro_bias_std: np.gyro_bias_std,
            contact_lin_std: np.contact_lin_std,
            contact_ang_std: np.contact_ang_std,
            encoder_std_deg: 0.1,
            swing_scale: np.swing_scale,
            fk_gain: np.fk_gain,
        }
    }
}

/// Prior standard deviations of the initial belief.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSection {
    pub position: f64,
    pub orientation_deg: f64,
    pub velocity: f64,
    pub foot_position: f64,
    pub foot_orientation_deg: f64,
    pub accel_bias: f64,
    pub gyro_bias: f64,
}

impl Default for PriorSection {
    fn default() -> Self {
        let p = PriorStds::default();
        PriorSection {
            position: p.position,
            orientation_deg: 10.0,
            velocity: p.velocity,
            foot_position: p.foot_position,
            foot_orientation_deg: 10.0,
            accel_bias: p.accel_bias,
            gyro_bias: p.gyro_bias,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaitSection {
    pub step_length: f64,
    pub step_duration: f64,
    pub double_support_fraction: f64,
    pub walk_distance: f64,
    pub rate: f64,
    pub base_height: f64,
    pub settle_time: f64,
    pub hold_duration: f64,
    pub sway_amplitude: f64,
    pub sway_period: f64,
    pub initial_bias: [f64; 6],
    pub noise_free: bool,
}

impl Default for GaitSection {
    fn default() -> Self {
        let g = GaitConfig::default();
        GaitSection {
            step_length: g.step_length,
            step_duration: g.step_duration,
            double_support_fraction: g.double_support_fraction,
            walk_distance: g.walk_distance,
            rate: g.rate,
            base_height: g.base_height,
            settle_time: g.settle_time,
            hold_duration: g.hold_duration,
            sway_amplitude: g.sway_amplitude,
            sway_period: g.sway_period,
            initial_bias: g.initial_bias,
            noise_free: g.noise_free,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub variant: FilterVariant,
    pub dataset: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub exact_init: bool,
    /// Store the full 27×27 covariance in run records.
    pub full_covariance: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            variant: FilterVariant::CodiligentKioRie,
            dataset: None,
            output: None,
            exact_init: false,
            full_covariance: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub quantile: f64,
    /// RPE window (s).
    pub rpe_window: f64,
    /// Monte-Carlo repetitions.
    pub runs: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { quantile: DEFAULT_QUANTILE, rpe_window: DEFAULT_RPE_WINDOW, runs: 1 }
    }
}

/// Whole configuration file. Every key is optional.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Seeds the simulated sensors and the sampled prior.
    pub seed: u64,
    pub gait: GaitSection,
    pub noise: NoiseSection,
    pub prior: PriorSection,
    pub run: RunSection,
    pub eval: EvalSection,
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config { field: "<file>".into(), reason: e.to_string() })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::io(path, source))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            PipelineError::Config { reason, .. } => PipelineError::Config { field: path.display().to_string(), reason },
            other => other,
        })
    }

    /// Runtime noise parameters with angles in radians.
    pub fn noise_params(&self) -> NoiseParams {
        let (n, p) = (&self.noise, &self.prior);
        NoiseParams {
            accel_std: n.accel_std,
            gyro_std: n.gyro_std,
            accel_bias_std: n.accel_bias_std,
            gyro_bias_std: n.gyro_bias_std,
            contact_lin_std: n.contact_lin_std,
            contact_ang_std: n.contact_ang_std,
            encoder_std: n.encoder_std_deg.to_radians(),
            swing_scale: n.swing_scale,
            fk_gain: n.fk_gain,
            prior: PriorStds {
                position: p.position,
                orientation: p.orientation_deg.to_radians(),
                velocity: p.velocity,
                foot_position: p.foot_position,
                foot_orientation: p.foot_orientation_deg.to_radians(),
                accel_bias: p.accel_bias,
                gyro_bias: p.gyro_bias,
            },
        }
    }

    pub fn gait_config(&self) -> GaitConfig {
        let g = &self.gait;
        GaitConfig {
            step_length: g.step_length,
            step_duration: g.step_duration,
            double_support_fraction: g.double_support_fraction,
            walk_distance: g.walk_distance,
            rate: g.rate,
            base_height: g.base_height,
            settle_time: g.settle_time,
            hold_duration: g.hold_duration,
            sway_amplitude: g.sway_amplitude,
            sway_period: g.sway_period,
            seed: self.seed,
            noise: self.noise_params(),
            initial_bias: g.initial_bias,
            noise_free: g.noise_free,
        }
    }

    /// Checks every numeric field; errors name the offending key.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let cfg = self.gait_config();
        cfg.validate().map_err(|e| match e {
            crate::sim::SimError::Config { field, reason } => PipelineError::Config { field: format!("gait.{field}"), reason },
            other => other.into(),
        })?;
        cfg.noise.validate().map_err(|e| match e {
            crate::kio::KioError::InvalidParam { field, reason } => {
                let key = match field.strip_prefix("prior.") {
                    Some(rest) => format!("prior.{}", degree_key(rest)),
                    None => format!("noise.{}", degree_key(&field)),
                };
                PipelineError::Config { field: key, reason }
            }
            other => other.into(),
        })?;
        let e = &self.eval;
        if !(e.quantile > 0.0 && e.quantile < 1.0) {
            return Err(PipelineError::config("eval.quantile", format!("must lie in (0, 1), got {}", e.quantile)));
        }
        if !(e.rpe_window > 0.0 && e.rpe_window.is_finite()) {
            return Err(PipelineError::config("eval.rpe_window", format!("must be positive, got {}", e.rpe_window)));
        }
        if e.runs == 0 {
            return Err(PipelineError::config("eval.runs", "must be at least 1".into()));
        }
        Ok(())
    }
}

/// Config-file key for a runtime field stored in radians.
fn degree_key(field: &str) -> String {
    match field {
        "encoder_std" | "orientation" | "foot_orientation" => format!("{field}_deg"),
        other => other.to_string(),
    }
}

/// Resolved settings for one filter run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub variant: FilterVariant,
    pub dataset: PathBuf,
    pub noise: NoiseParams,
    pub seed: u64,
    pub exact_init: bool,
    pub full_covariance: bool,
    pub output: PathBuf,
}

impl RunConfig {
    pub fn from_config(cfg: &Config) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let dataset = cfg.run.dataset.clone().ok_or_else(|| PipelineError::config("run.dataset", "no dataset given".into()))?;
        if !dataset.is_file() {
            return Err(PipelineError::config("run.dataset", format!("{} does not exist", dataset.display())));
        }
        let output = cfg.run.output.clone().ok_or_else(|| PipelineError::config("run.output", "no output path given".into()))?;
        Ok(RunConfig {
            variant: cfg.run.variant,
            dataset,
            noise: cfg.noise_params(),
            seed: cfg.seed,
            exact_init: cfg.run.exact_init,
            full_covariance: cfg.run.full_covariance,
            output,
        })
    }
}
