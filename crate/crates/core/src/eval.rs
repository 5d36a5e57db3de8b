//! Trajectory error and filter consistency metrics.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::filter::ErrorConvention;
use crate::kio::{idx, se3_parts, KioState};
use crate::lie::{so3, GroupElement, LieError};

pub const DEFAULT_QUANTILE: f64 = 0.99;
pub const DEFAULT_RPE_WINDOW: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("need at least {needed} matched samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("estimate has {est} samples but ground truth has {gt}")]
    LengthMismatch { est: usize, gt: usize },
    #[error("RPE window of {window} ticks exceeds the trajectory ({len} samples)")]
    WindowTooLong { window: usize, len: usize },
    #[error("quantile must lie in (0, 1), got {0}")]
    Quantile(f64),
    #[error(transparent)]
    Lie(#[from] LieError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryErrorReport {
    pub ate_pos_rmse: f64,
    pub ate_rot_rmse: f64,
    pub rpe_pos: f64,
    pub rpe_rot: f64,
    /// RPE window in seconds.
    pub window: f64,
}

/// Named tangent block used for NEES.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockNees {
    pub block: String,
    pub mean: f64,
    /// Ticks whose block covariance was not positive definite.
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub quantile: f64,
    pub z: f64,
    /// Violation fraction for every tangent axis.
    pub axis_violation: Vec<f64>,
    pub position: [f64; 3],
    pub orientation: [f64; 3],
    pub velocity: [f64; 3],
    pub nees: Vec<BlockNees>,
}

impl ConsistencyReport {
    /// Mean violation fraction over the base position and velocity axes.
    pub fn mean_pos_vel_violation(&self) -> f64 {
        (self.position.iter().sum::<f64>() + self.velocity.iter().sum::<f64>()) / 6.0
    }

    pub fn mean_velocity_violation(&self) -> f64 {
        self.velocity.iter().sum::<f64>() / 3.0
    }

    pub fn mean_position_violation(&self) -> f64 {
        self.position.iter().sum::<f64>() / 3.0
    }
}

pub const NEES_BLOCKS: [(&str, usize); 9] = [
    ("position", idx::P),
    ("orientation", idx::R),
    ("velocity", idx::V),
    ("lf_position", idx::D_LF),
    ("lf_orientation", idx::Z_LF),
    ("rf_position", idx::D_RF),
    ("rf_orientation", idx::Z_RF),
    ("accel_bias", idx::BA),
    ("gyro_bias", idx::BG),
];

fn check_lengths(est: &[GroupElement], gt: &[GroupElement], needed: usize) -> Result<(), EvalError> {
    if est.len() != gt.len() {
        return Err(EvalError::LengthMismatch { est: est.len(), gt: gt.len() });
    }
    if est.len() < needed {
        return Err(EvalError::TooFewSamples { needed, got: est.len() });
    }
    Ok(())
}

fn rms(sum_sq: f64, n: usize) -> f64 {
    (sum_sq / n as f64).sqrt()
}

/// Absolute trajectory error after aligning the first estimated pose onto
/// the first ground-truth pose. Returns position and rotation-angle RMSE.
pub fn ate(est: &[GroupElement], gt: &[GroupElement]) -> Result<(f64, f64), EvalError> {
    check_lengths(est, gt, 2)?;
    let align = gt[0].compose(&est[0].inverse())?;
    let (mut sp, mut sr) = (0.0, 0.0);
    for (e, g) in est.iter().zip(gt) {
        let (re, pe) = se3_parts(&align.compose(e)?);
        let (rg, pg) = se3_parts(g);
        sp += (pe - pg).norm_squared();
        sr += so3::angle(&(rg.transpose() * re)).powi(2);
    }
    Ok((rms(sp, est.len()), rms(sr, est.len())))
}

/// Relative pose error over `window` ticks:
/// `E = (gtᵢ⁻¹gtᵢ₊Δ)⁻¹(estᵢ⁻¹estᵢ₊Δ)`, RMSE of translation norms and angles.
pub fn rpe(est: &[GroupElement], gt: &[GroupElement], window: usize) -> Result<(f64, f64), EvalError> {
    check_lengths(est, gt, 2)?;
    if window == 0 || window >= est.len() {
        return Err(EvalError::WindowTooLong { window, len: est.len() });
    }
    let n = est.len() - window;
    let (mut sp, mut sr) = (0.0, 0.0);
    for i in 0..n {
        let dg = gt[i].inverse().compose(&gt[i + window])?;
        let de = est[i].inverse().compose(&est[i + window])?;
        let (r, p) = se3_parts(&dg.inverse().compose(&de)?);
        sp += p.norm_squared();
        sr += so3::angle(&r).powi(2);
    }
    Ok((rms(sp, n), rms(sr, n)))
}

/// Two-sided standard-normal quantile for per-axis envelopes.
pub fn envelope_z(quantile: f64) -> Result<f64, EvalError> {
    if !(quantile > 0.0 && quantile < 1.0) {
        return Err(EvalError::Quantile(quantile));
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    Ok(normal.inverse_cdf(0.5 * (1.0 + quantile)))
}

/// Per-axis envelope violations `|eᵢ| > z·√Pᵢᵢ` and block NEES `eᵀP⁻¹e`.
pub fn consistency(errors: &[DVector<f64>], covs: &[DMatrix<f64>], quantile: f64) -> Result<ConsistencyReport, EvalError> {
    if errors.len() != covs.len() {
        return Err(EvalError::LengthMismatch { est: errors.len(), gt: covs.len() });
    }
    if errors.is_empty() {
        return Err(EvalError::TooFewSamples { needed: 1, got: 0 });
    }
    let z = envelope_z(quantile)?;
    let dim = errors[0].len();
    let mut violations = vec![0usize; dim];
    let mut nees_sum = [0.0; NEES_BLOCKS.len()];
    let mut nees_n = [0usize; NEES_BLOCKS.len()];
    let mut skipped = [0usize; NEES_BLOCKS.len()];
    for (e, p) in errors.iter().zip(covs) {
        for (i, v) in violations.iter_mut().enumerate() {
            if e[i].abs() > z * p[(i, i)].max(0.0).sqrt() {
                *v += 1;
            }
        }
        for (b, (_, off)) in NEES_BLOCKS.iter().enumerate() {
            if off + 3 > dim {
                continue;
            }
            let eb = e.rows(*off, 3).into_owned();
            match Cholesky::new(p.view((*off, *off), (3, 3)).into_owned()) {
                Some(ch) => {
                    nees_sum[b] += eb.dot(&ch.solve(&eb));
                    nees_n[b] += 1;
                }
                None => skipped[b] += 1,
            }
        }
    }
    let n = errors.len() as f64;
    let axis: Vec<f64> = violations.iter().map(|&c| c as f64 / n).collect();
    let pick = |off: usize| -> [f64; 3] { std::array::from_fn(|k| axis.get(off + k).copied().unwrap_or(0.0)) };
    Ok(ConsistencyReport {
        quantile,
        z,
        position: pick(idx::P),
        orientation: pick(idx::R),
        velocity: pick(idx::V),
        nees: NEES_BLOCKS
            .iter()
            .enumerate()
            .filter(|(_, (_, off))| off + 3 <= dim)
            .map(|(b, (name, _))| BlockNees {
                block: name.to_string(),
                mean: if nees_n[b] > 0 { nees_sum[b] / nees_n[b] as f64 } else { f64::NAN },
                skipped: skipped[b],
            })
            .collect(),
        axis_violation: axis,
    })
}

/// Invariant error in tangent coordinates: `log(X̂⁻¹X)` (left) or `log(XX̂⁻¹)` (right).
pub fn tangent_error(est: &KioState, gt: &KioState, conv: ErrorConvention) -> Result<DVector<f64>, LieError> {
    let (xh, x) = (est.embed(), gt.embed());
    let eta = match conv {
        ErrorConvention::LeftInvariant => xh.inverse().compose(&x)?,
        ErrorConvention::RightInvariant => x.compose(&xh.inverse())?,
    };
    eta.log_vee()
}
