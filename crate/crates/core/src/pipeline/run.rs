//! Running a filter variant over a dataset and scoring the result.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::eval::{self, ConsistencyReport, TrajectoryErrorReport};
use crate::filter::{asymmetry, is_psd_within, Belief, ErrorConvention};
use crate::kio::{filter_step, FilterVariant, KioState, NoiseParams};
use crate::lie::GroupId;
use crate::sim::Dataset;

/// Symmetry and PSD tolerances checked on every per-tick covariance.
pub const SYMMETRY_TOL: f64 = 1e-9;
pub const PSD_TOL: f64 = 1e-10;

const PRIOR_STREAM: u64 = 3;

/// How the initial belief mean is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// Mean at the true initial state.
    Exact,
    /// Mean drawn from the prior concentrated Gaussian around the truth.
    Sampled { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTick {
    pub t: f64,
    pub mean: KioState,
    pub cov: DMatrix<f64>,
    /// Invariant error against the truth, in the variant's convention.
    pub error: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovHealth {
    pub max_asymmetry: f64,
    /// First tick whose covariance fails the symmetry or PSD check.
    pub first_unhealthy: Option<usize>,
}

impl CovHealth {
    /// Checks a sequence of covariances for symmetry and positive semidefiniteness.
    pub fn of<'a>(covs: impl IntoIterator<Item = &'a DMatrix<f64>>) -> Self {
        let mut h = CovHealth { max_asymmetry: 0.0, first_unhealthy: None };
        for (k, c) in covs.into_iter().enumerate() {
            h.record(k, c);
        }
        h
    }

    fn record(&mut self, k: usize, cov: &DMatrix<f64>) {
        let asym = asymmetry(cov);
        self.max_asymmetry = self.max_asymmetry.max(asym);
        if self.first_unhealthy.is_none() && (asym >= SYMMETRY_TOL || !is_psd_within(cov, PSD_TOL)) {
            self.first_unhealthy = Some(k);
        }
    }

    pub fn healthy(&self) -> bool {
        self.first_unhealthy.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub variant: FilterVariant,
    pub ticks: Vec<RunTick>,
    pub health: CovHealth,
}

/// Initial belief with the prior covariance. A sampled mean satisfies
/// `X = X̂·exp(ε)` (left) or `X = exp(ε)·X̂` (right) with `ε ~ N(0, P₀)`.
pub fn initial_belief(
    truth: &KioState,
    conv: ErrorConvention,
    np: &NoiseParams,
    init: Init,
) -> Result<Belief, PipelineError> {
    let cov = np.prior.covariance();
    let x = truth.embed();
    let mean = match init {
        Init::Exact => x,
        Init::Sampled { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(PRIOR_STREAM);
            let stds = np.prior.tangent_stds();
            let neg: Vec<f64> = stds.iter().map(|s| { let n: f64 = StandardNormal.sample(&mut rng); -s * n }).collect();
            let step = GroupId::kio_state().exp_hat(&neg)?;
            match conv {
                ErrorConvention::LeftInvariant => x.compose(&step)?,
                ErrorConvention::RightInvariant => step.compose(&x)?,
            }
        }
    };
    Ok(Belief::new(mean, cov).map_err(crate::kio::KioError::from)?)
}

/// Runs `variant` over every tick. Tick 0 holds the prior; tick `k ≥ 1`
/// predicts with the IMU sample of tick `k − 1` and updates with the
/// measurements of tick `k`.
pub fn run_filter(ds: &Dataset, variant: FilterVariant, np: &NoiseParams, init: Init) -> Result<RunResult, PipelineError> {
    let first = ds.ticks.first().ok_or(PipelineError::EmptyDataset)?;
    let conv = variant.convention();
    let mut belief = initial_belief(&first.truth.state, conv, np, init)?;
    let mut ticks = Vec::with_capacity(ds.ticks.len());
    let mut health = CovHealth { max_asymmetry: 0.0, first_unhealthy: None };
    for (k, tick) in ds.ticks.iter().enumerate() {
        if k > 0 {
            let prev = &ds.ticks[k - 1];
            let dt = tick.truth.t - prev.truth.t;
            belief = filter_step(variant, &belief, &prev.imu, &tick.truth.contacts, &tick.meas, dt, np)
                .map_err(|source| PipelineError::Numerical { tick: k, source })?;
        }
        if !belief.mean.is_finite() || belief.cov.iter().any(|x| !x.is_finite()) {
            return Err(PipelineError::Divergence { tick: k, variant });
        }
        health.record(k, &belief.cov);
        let mean = KioState::extract(&belief.mean)?;
        let error = eval::tangent_error(&mean, &tick.truth.state, conv)?;
        ticks.push(RunTick { t: tick.truth.t, mean, cov: belief.cov.clone(), error });
    }
    Ok(RunResult { variant, ticks, health })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub variant: FilterVariant,
    pub trajectory: TrajectoryErrorReport,
    pub consistency: ConsistencyReport,
}

/// RPE window in ticks for a window in seconds, from the dataset spacing.
pub fn window_ticks(ds: &Dataset, window: f64) -> usize {
    let dt = match ds.ticks.as_slice() {
        [a, b, ..] => b.truth.t - a.truth.t,
        _ => return 1,
    };
    ((window / dt).round() as usize).max(1)
}

/// Scores a run against the dataset truth.
pub fn evaluate_run(ds: &Dataset, run: &RunResult, quantile: f64, window: f64) -> Result<EvalReport, PipelineError> {
    check_alignment(ds, run.ticks.iter().map(|t| t.t))?;
    let est: Vec<_> = run.ticks.iter().map(|t| t.mean.base_pose()).collect();
    let gt: Vec<_> = ds.ticks.iter().map(|t| t.truth.state.base_pose()).collect();
    let w = window_ticks(ds, window);
    let (ate_pos_rmse, ate_rot_rmse) = eval::ate(&est, &gt)?;
    let (rpe_pos, rpe_rot) = eval::rpe(&est, &gt, w)?;
    let errors: Vec<_> = run.ticks.iter().map(|t| t.error.clone()).collect();
    let covs: Vec<_> = run.ticks.iter().map(|t| t.cov.clone()).collect();
    Ok(EvalReport {
        variant: run.variant,
        trajectory: TrajectoryErrorReport { ate_pos_rmse, ate_rot_rmse, rpe_pos, rpe_rot, window },
        consistency: eval::consistency(&errors, &covs, quantile)?,
    })
}

/// Checks that run timestamps match the dataset exactly.
pub fn check_alignment(ds: &Dataset, times: impl ExactSizeIterator<Item = f64>) -> Result<(), PipelineError> {
    if times.len() != ds.ticks.len() {
        return Err(PipelineError::TimestampMismatch {
            tick: times.len().min(ds.ticks.len()),
            detail: format!("run has {} ticks, dataset has {}", times.len(), ds.ticks.len()),
        });
    }
    for (k, (t, tick)) in times.zip(&ds.ticks).enumerate() {
        if t != tick.truth.t {
            return Err(PipelineError::TimestampMismatch {
                tick: k,
                detail: format!("run time {t} vs dataset time {}", tick.truth.t),
            });
        }
    }
    Ok(())
}

/// Position and orientation error of the final estimate.
pub fn final_errors(ds: &Dataset, run: &RunResult) -> (f64, f64) {
    let (Some(est), Some(gt)) = (run.ticks.last(), ds.ticks.last()) else {
        return (f64::NAN, f64::NAN);
    };
    let gt = &gt.truth.state;
    let pos = (est.mean.p - gt.p).norm();
    let rot = crate::lie::so3::angle(&(gt.r.transpose() * est.mean.r));
    (pos, rot)
}
