//! Synthetic biped walking data with exact ground truth.
//!
//! The base follows minimum-jerk segments between foot midpoints with a
//! lateral shift over the stance foot; stance feet are exactly static.
//! Sensors are synthesized from the sampled truth.

mod dataset;
mod sensors;

pub use dataset::*;
pub use sensors::*;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kio::{ContactFlags, KioError, KioState, NoiseParams};
use crate::lie::so3;

/// Step lengths beyond this are treated as kinematically infeasible.
pub const LEG_REACH: f64 = 0.6;

/// Lateral foot offset from the walking line (m).
pub const FOOT_OFFSET_Y: f64 = 0.1;

const SWING_HEIGHT: f64 = 0.05;
const SWAY_GAIN: f64 = 0.5;
const ROLL_PER_METRE: f64 = 0.5;
const PITCH_PER_MPS: f64 = 0.2;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid gait config `{field}`: {reason}")]
    Config { field: &'static str, reason: String },
    #[error(transparent)]
    Kio(#[from] KioError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaitConfig {
    pub step_length: f64,
    pub step_duration: f64,
    pub double_support_fraction: f64,
    /// Zero gives a stationary double-support recording.
    pub walk_distance: f64,
    pub rate: f64,
    pub base_height: f64,
    /// Double-support rest before the first and after the last step (s).
    pub settle_time: f64,
    /// Duration of the stationary recording when `walk_distance` is zero (s).
    pub hold_duration: f64,
    /// Lateral sinusoidal base sway amplitude for the stationary recording (m).
    pub sway_amplitude: f64,
    pub sway_period: f64,
    pub seed: u64,
    pub noise: NoiseParams,
    /// `(b_a, b_g)` at t = 0.
    pub initial_bias: [f64; 6],
    /// Disables sensor noise and bias drift; the nominal covariances are still reported.
    pub noise_free: bool,
}

impl Default for GaitConfig {
    fn default() -> Self {
        GaitConfig {
            step_length: 0.1,
            step_duration: 0.8,
            double_support_fraction: 0.3,
            walk_distance: 1.0,
            rate: 100.0,
            base_height: 0.55,
            settle_time: 0.6,
            hold_duration: 10.0,
            sway_amplitude: 0.0,
            sway_period: 2.0,
            seed: 0,
            noise: NoiseParams::default(),
            initial_bias: [0.0; 6],
            noise_free: false,
        }
    }
}

impl GaitConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let fail = |field, reason: String| Err(SimError::Config { field, reason });
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return fail("rate", format!("must be positive, got {}", self.rate));
        }
        if !(0.0..1.0).contains(&self.double_support_fraction) {
            return fail("double_support_fraction", format!("must lie in [0, 1), got {}", self.double_support_fraction));
        }
        if !(self.walk_distance >= 0.0 && self.walk_distance.is_finite()) {
            return fail("walk_distance", format!("must be non-negative, got {}", self.walk_distance));
        }
        if self.walk_distance > 0.0 {
            if !(self.step_length > 0.0) {
                return fail("step_length", format!("must be positive, got {}", self.step_length));
            }
            if self.step_length > LEG_REACH {
                return fail("step_length", format!("{} m exceeds the {LEG_REACH} m leg reach", self.step_length));
            }
            if !(self.step_duration > 0.0 && self.step_duration.is_finite()) {
                return fail("step_duration", format!("must be positive, got {}", self.step_duration));
            }
        } else if !(self.hold_duration > 0.0 && self.hold_duration.is_finite()) {
            return fail("hold_duration", format!("must be positive, got {}", self.hold_duration));
        }
        if !(self.settle_time >= 0.0) {
            return fail("settle_time", format!("must be non-negative, got {}", self.settle_time));
        }
        if !(self.sway_amplitude >= 0.0) {
            return fail("sway_amplitude", format!("must be non-negative, got {}", self.sway_amplitude));
        }
        if self.sway_amplitude > 0.0 && !(self.sway_period > 0.0) {
            return fail("sway_period", format!("must be positive, got {}", self.sway_period));
        }
        if self.initial_bias.iter().any(|b| !b.is_finite()) {
            return fail("initial_bias", "must be finite".into());
        }
        if !(self.base_height.is_finite()) {
            return fail("base_height", "must be finite".into());
        }
        Ok(())
    }
}

/// Exact state and contact flags at one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthSample {
    pub t: f64,
    pub state: KioState,
    pub contacts: ContactFlags,
}

/// Minimum-jerk blend `10τ³ − 15τ⁴ + 6τ⁵` and its first derivative in τ.
fn min_jerk(tau: f64) -> (f64, f64) {
    let t = tau.clamp(0.0, 1.0);
    let s = t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
    let ds = 30.0 * t * t * (1.0 - t) * (1.0 - t);
    (s, ds)
}

/// Rise-and-return bump on [0, 1] built from two minimum-jerk halves.
fn bump(tau: f64) -> (f64, f64) {
    if tau < 0.5 {
        let (s, ds) = min_jerk(2.0 * tau);
        (s, 2.0 * ds)
    } else {
        let (s, ds) = min_jerk(2.0 - 2.0 * tau);
        (s, -2.0 * ds)
    }
}

/// One step of the walk: the swing foot moves from `from` to `to` during the
/// swing part of `[t0, t0 + duration]`.
#[derive(Debug, Clone, Copy)]
struct Step {
    t0: f64,
    swing_lf: bool,
    from: f64,
    to: f64,
    mid_before: f64,
    mid_after: f64,
}

struct Plan {
    steps: Vec<Step>,
    duration: f64,
    t_end: f64,
    swing_start: f64,
}

impl Plan {
    fn new(cfg: &GaitConfig) -> Self {
        let n = (cfg.walk_distance / cfg.step_length - 1e-9).ceil().max(1.0) as usize;
        let (mut lf, mut rf) = (0.0, 0.0);
        let mut steps = Vec::with_capacity(n + 1);
        for k in 1..=n + 1 {
            let target = if k <= n { (k as f64 * cfg.step_length).min(cfg.walk_distance) } else { cfg.walk_distance };
            let swing_lf = k % 2 == 1;
            let from = if swing_lf { lf } else { rf };
            let mid_before = 0.5 * (lf + rf);
            if swing_lf {
                lf = target;
            } else {
                rf = target;
            }
            let t0 = cfg.settle_time + (k - 1) as f64 * cfg.step_duration;
            steps.push(Step { t0, swing_lf, from, to: target, mid_before, mid_after: 0.5 * (lf + rf) });
        }
        let t_end = cfg.settle_time + steps.len() as f64 * cfg.step_duration;
        Plan {
            steps,
            duration: t_end + cfg.settle_time,
            t_end,
            swing_start: cfg.double_support_fraction * cfg.step_duration,
        }
    }

    fn step_at(&self, t: f64, cfg: &GaitConfig) -> Option<&Step> {
        if t < cfg.settle_time || t >= self.t_end {
            return None;
        }
        let k = ((t - cfg.settle_time) / cfg.step_duration).floor() as usize;
        self.steps.get(k.min(self.steps.len() - 1))
    }

    /// Interval during which the foot of `step` is airborne.
    fn swing_window(&self, step: &Step, cfg: &GaitConfig) -> (f64, f64) {
        (step.t0 + self.swing_start, step.t0 + cfg.step_duration)
    }

    fn foot_xz(&self, t: f64, lf: bool, cfg: &GaitConfig) -> (f64, f64) {
        // Latest placement of this foot at or before t, plus swing state.
        let mut x = 0.0;
        for s in &self.steps {
            if s.swing_lf != lf {
                continue;
            }
            let (a, b) = self.swing_window(s, cfg);
            if t >= b {
                x = s.to;
            } else if t > a {
                let tau = (t - a) / (b - a);
                let z = SWING_HEIGHT * 16.0 * tau * tau * (1.0 - tau) * (1.0 - tau);
                return (s.from + (s.to - s.from) * min_jerk(tau).0, z);
            } else {
                break;
            }
        }
        (x, 0.0)
    }
}

/// Base position/velocity and roll/pitch at time t for a walking plan.
fn walking_base(plan: &Plan, t: f64, cfg: &GaitConfig) -> (Vector3<f64>, Vector3<f64>, f64, f64) {
    let (mut x, mut vx, mut y, mut vy) = (0.0, 0.0, 0.0, 0.0);
    match plan.step_at(t, cfg) {
        Some(s) => {
            let tau = (t - s.t0) / cfg.step_duration;
            let (m, dm) = min_jerk(tau);
            x = s.mid_before + (s.mid_after - s.mid_before) * m;
            vx = (s.mid_after - s.mid_before) * dm / cfg.step_duration;
            // Shift over the stance foot (the one not swinging).
            let side = if s.swing_lf { -FOOT_OFFSET_Y } else { FOOT_OFFSET_Y };
            let (b, db) = bump(tau);
            y = SWAY_GAIN * side * b;
            vy = SWAY_GAIN * side * db / cfg.step_duration;
        }
        None if t >= plan.t_end => x = plan.steps.last().map_or(0.0, |s| s.mid_after),
        None => {}
    }
    (Vector3::new(x, y, cfg.base_height), Vector3::new(vx, vy, 0.0), ROLL_PER_METRE * y, PITCH_PER_MPS * vx)
}

fn sample_times(duration: f64, rate: f64) -> Vec<f64> {
    let n = (duration * rate).round() as usize;
    (0..=n).map(|k| k as f64 / rate).collect()
}

/// Samples the ground-truth trajectory at `cfg.rate`.
pub fn generate_gait(cfg: &GaitConfig) -> Result<Vec<TruthSample>, SimError> {
    cfg.validate()?;
    let bias_a = Vector3::new(cfg.initial_bias[0], cfg.initial_bias[1], cfg.initial_bias[2]);
    let bias_g = Vector3::new(cfg.initial_bias[3], cfg.initial_bias[4], cfg.initial_bias[5]);
    let base_state = |p, v, roll: f64, pitch: f64| KioState {
        p,
        r: so3::from_rpy(roll, pitch, 0.0),
        v,
        d_lf: Vector3::new(0.0, FOOT_OFFSET_Y, 0.0),
        d_rf: Vector3::new(0.0, -FOOT_OFFSET_Y, 0.0),
        b_a: bias_a,
        b_g: bias_g,
        ..KioState::default()
    };

    if cfg.walk_distance == 0.0 {
        let all = ContactFlags { lf: true, rf: true };
        let w = if cfg.sway_amplitude > 0.0 { 2.0 * std::f64::consts::PI / cfg.sway_period } else { 0.0 };
        return Ok(sample_times(cfg.hold_duration, cfg.rate)
            .into_iter()
            .map(|t| {
                let y = cfg.sway_amplitude * (w * t).sin();
                let vy = cfg.sway_amplitude * w * (w * t).cos();
                let p = Vector3::new(0.0, y, cfg.base_height);
                TruthSample { t, state: base_state(p, Vector3::new(0.0, vy, 0.0), ROLL_PER_METRE * y, 0.0), contacts: all }
            })
            .collect());
    }

    let plan = Plan::new(cfg);
    let times = sample_times(plan.duration, cfg.rate);
    let mut out = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        let (p, v, roll, pitch) = walking_base(&plan, t, cfg);
        let mut state = base_state(p, v, roll, pitch);
        let (xl, zl) = plan.foot_xz(t, true, cfg);
        let (xr, zr) = plan.foot_xz(t, false, cfg);
        state.d_lf = Vector3::new(xl, FOOT_OFFSET_Y, zl);
        state.d_rf = Vector3::new(xr, -FOOT_OFFSET_Y, zr);
        // In contact over (t_{k-1}, t_k] iff the foot did not move in it.
        let contacts = if k == 0 {
            ContactFlags { lf: true, rf: true }
        } else {
            let prev = times[k - 1];
            let airborne = |lf: bool| {
                plan.steps.iter().filter(|s| s.swing_lf == lf).any(|s| {
                    let (a, b) = plan.swing_window(s, cfg);
                    prev < b && t > a
                })
            };
            ContactFlags { lf: !airborne(true), rf: !airborne(false) }
        };
        out.push(TruthSample { t, state, contacts });
    }
    Ok(out)
}
