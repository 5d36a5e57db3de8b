//! Extended Kalman filtering on matrix Lie groups.
//!
//! A [`Belief`] is a concentrated Gaussian: a group-valued mean plus a
//! covariance over tangent perturbations. The left-invariant filter models
//! the true state as `X = X̂·exp(ε)`, the right-invariant one as
//! `X = exp(ε)·X̂`. Both share the mean propagation `X̂⁺ = X̂·exp(Ω̂)` and
//! differ in how covariance is propagated, corrected and reparametrized.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lie::{GroupElement, LieError, TangentVector};

/// Innovation covariances with a larger condition number are rejected.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FilterError {
    #[error(transparent)]
    Lie(#[from] LieError),
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error("{what}: expected {expected} rows/cols, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("innovation covariance is singular (condition number {condition:e})")]
    SingularInnovation { condition: f64 },
    #[error("time step must be positive, got {0}")]
    TimeStep(f64),
}

/// Which invariant error (type 1) a filter is built around.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorConvention {
    /// `η = X̂⁻¹X`, perturbations applied on the right.
    LeftInvariant,
    /// `η = XX̂⁻¹`, perturbations applied on the left.
    RightInvariant,
}

/// Concentrated Gaussian belief on a matrix Lie group.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    pub mean: GroupElement,
    pub cov: DMatrix<f64>,
}

impl Belief {
    pub fn new(mean: GroupElement, cov: DMatrix<f64>) -> Result<Self, FilterError> {
        let p = mean.group.dof();
        check_square("covariance", &cov, p)?;
        Ok(Belief { mean, cov: symmetrize(&cov) })
    }
}

/// Left-trivialized motion increment with its Jacobian and noise.
#[derive(Debug, Clone)]
pub struct MotionSpec {
    pub omega: TangentVector,
    pub motion_jacobian: DMatrix<f64>,
    pub process_noise: DMatrix<f64>,
}

/// One (possibly stacked) observation on the measurement group.
#[derive(Debug, Clone)]
pub struct MeasurementSpec {
    pub observed: GroupElement,
    pub predicted: GroupElement,
    pub meas_jacobian: DMatrix<f64>,
    pub meas_noise: DMatrix<f64>,
}

impl MeasurementSpec {
    /// `log(h(X̂)⁻¹ Z)`.
    pub fn innovation(&self) -> Result<DVector<f64>, FilterError> {
        Ok(self.predicted.inverse().compose(&self.observed)?.log_vee()?)
    }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// ‖P − Pᵀ‖∞ (max-abs entry).
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).amax()
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m)).eigenvalues.min()
}

/// True when the smallest eigenvalue of `m` exceeds `-tol`, tested by a
/// Cholesky factorization of `m + tol·I`.
pub fn is_psd_within(m: &DMatrix<f64>, tol: f64) -> bool {
    let shifted = symmetrize(m) + DMatrix::identity(m.nrows(), m.ncols()) * tol;
    Cholesky::new(shifted).is_some()
}

fn check_square(what: &'static str, m: &DMatrix<f64>, n: usize) -> Result<(), FilterError> {
    if m.nrows() != n || m.ncols() != n {
        return Err(FilterError::Dimension { what, expected: n, got: m.nrows().max(m.ncols()) });
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(FilterError::NonFinite(what));
    }
    Ok(())
}

fn check_motion(b: &Belief, m: &MotionSpec) -> Result<(), FilterError> {
    let p = b.mean.group.dof();
    if m.omega.group != b.mean.group {
        return Err(LieError::GroupMismatch { left: b.mean.group.clone(), right: m.omega.group.clone() }.into());
    }
    if m.omega.coords.iter().any(|x| !x.is_finite()) {
        return Err(FilterError::NonFinite("motion increment"));
    }
    if !b.mean.is_finite() {
        return Err(FilterError::NonFinite("mean"));
    }
    check_square("covariance", &b.cov, p)?;
    check_square("motion Jacobian", &m.motion_jacobian, p)?;
    check_square("process noise", &m.process_noise, p)
}

/// Left-invariant propagation:
/// `P⁺ = F P Fᵀ + J_r(Ω̂) Q J_r(Ω̂)ᵀ` with `F = Ad_{exp(−Ω̂)} + J_r(Ω̂) 𝔉`.
pub fn predict_left_invariant(b: &Belief, m: &MotionSpec) -> Result<Belief, FilterError> {
    check_motion(b, m)?;
    let g = &b.mean.group;
    let omega = m.omega.coords.as_slice();
    let step = g.exp_hat(omega)?;
    let jr = g.right_jacobian(omega)?;
    let f = step.inverse().adjoint() + &jr * &m.motion_jacobian;
    let cov = &f * &b.cov * f.transpose() + &jr * &m.process_noise * jr.transpose();
    Ok(Belief { mean: b.mean.compose(&step)?, cov: symmetrize(&cov) })
}

/// Right-invariant propagation:
/// `P⁺ = F P Fᵀ + Ad J_l(Ω̂) Q J_l(Ω̂)ᵀ Adᵀ` with `F = I + Ad_{X̂} J_l(Ω̂) 𝔉`.
pub fn predict_right_invariant(b: &Belief, m: &MotionSpec) -> Result<Belief, FilterError> {
    check_motion(b, m)?;
    let g = &b.mean.group;
    let p = g.dof();
    let omega = m.omega.coords.as_slice();
    let step = g.exp_hat(omega)?;
    let ad_jl = b.mean.adjoint() * g.left_jacobian(omega)?;
    let f = DMatrix::identity(p, p) + &ad_jl * &m.motion_jacobian;
    let cov = &f * &b.cov * f.transpose() + &ad_jl * &m.process_noise * ad_jl.transpose();
    Ok(Belief { mean: b.mean.compose(&step)?, cov: symmetrize(&cov) })
}

pub fn predict(conv: ErrorConvention, b: &Belief, m: &MotionSpec) -> Result<Belief, FilterError> {
    match conv {
        ErrorConvention::LeftInvariant => predict_left_invariant(b, m),
        ErrorConvention::RightInvariant => predict_right_invariant(b, m),
    }
}

/// Continuous-discrete propagation with a first-order hold:
/// `F_k = I + F_c Δt`, `Q_k = F_k Q̂_c F_kᵀ Δt`, `P⁺ = F_k P F_kᵀ + Q_k`.
/// The mean is advanced by `mean_prop`.
pub fn predict_continuous_discrete<F>(
    b: &Belief,
    mean_prop: F,
    f_c: &DMatrix<f64>,
    qc_hat: &DMatrix<f64>,
    dt: f64,
) -> Result<Belief, FilterError>
where
    F: FnOnce(&GroupElement) -> GroupElement,
{
    if !(dt > 0.0) {
        return Err(FilterError::TimeStep(dt));
    }
    let p = b.mean.group.dof();
    check_square("covariance", &b.cov, p)?;
    check_square("continuous error dynamics", f_c, p)?;
    check_square("continuous process noise", qc_hat, p)?;
    let fk = DMatrix::identity(p, p) + f_c * dt;
    let qk = &fk * qc_hat * fk.transpose() * dt;
    let cov = &fk * &b.cov * fk.transpose() + qk;
    let mean = mean_prop(&b.mean);
    if mean.group != b.mean.group {
        return Err(LieError::GroupMismatch { left: b.mean.group.clone(), right: mean.group }.into());
    }
    if !mean.is_finite() {
        return Err(FilterError::NonFinite("propagated mean"));
    }
    Ok(Belief { mean, cov: symmetrize(&cov) })
}

/// Kalman gain `K = P Hᵀ (H P Hᵀ + N)⁻¹` and the innovation.
fn gain(b: &Belief, s: &MeasurementSpec) -> Result<(DMatrix<f64>, DVector<f64>), FilterError> {
    let p = b.mean.group.dof();
    let q = s.observed.group.dof();
    if s.predicted.group != s.observed.group {
        return Err(LieError::GroupMismatch { left: s.predicted.group.clone(), right: s.observed.group.clone() }.into());
    }
    if s.meas_jacobian.nrows() != q || s.meas_jacobian.ncols() != p {
        return Err(FilterError::Dimension { what: "measurement Jacobian", expected: q, got: s.meas_jacobian.nrows() });
    }
    if s.meas_jacobian.iter().any(|x| !x.is_finite()) {
        return Err(FilterError::NonFinite("measurement Jacobian"));
    }
    check_square("measurement noise", &s.meas_noise, q)?;
    check_square("covariance", &b.cov, p)?;
    if !s.observed.is_finite() {
        return Err(FilterError::NonFinite("observation"));
    }

    let z = s.innovation()?;
    let ph_t = &b.cov * s.meas_jacobian.transpose();
    let innov_cov = symmetrize(&(&s.meas_jacobian * &ph_t + &s.meas_noise));
    let eig = SymmetricEigen::new(innov_cov.clone()).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(FilterError::SingularInnovation { condition });
    }
    let chol = Cholesky::new(innov_cov).ok_or(FilterError::SingularInnovation { condition })?;
    let k = chol.solve(&ph_t.transpose()).transpose();
    Ok((k, z))
}

fn corrected_cov(b: &Belief, s: &MeasurementSpec, k: &DMatrix<f64>, j: &DMatrix<f64>) -> DMatrix<f64> {
    let p = b.cov.nrows();
    let ikh = DMatrix::identity(p, p) - k * &s.meas_jacobian;
    symmetrize(&(j * ikh * &b.cov * j.transpose()))
}

/// Left-invariant correction: `X̂⁺ = X̂·exp(m)`, `P⁺ = J_r(m)(I − KH)P J_r(m)ᵀ`.
pub fn update_left_invariant(b: &Belief, s: &MeasurementSpec) -> Result<Belief, FilterError> {
    let (k, z) = gain(b, s)?;
    let m = &k * z;
    let g = &b.mean.group;
    let jr = g.right_jacobian(m.as_slice())?;
    let mean = b.mean.compose(&g.exp_hat(m.as_slice())?)?;
    Ok(Belief { mean, cov: corrected_cov(b, s, &k, &jr) })
}

/// Right-invariant correction: `X̂⁺ = exp(m)·X̂`, `P⁺ = J_l(m)(I − KH)P J_l(m)ᵀ`.
pub fn update_right_invariant(b: &Belief, s: &MeasurementSpec) -> Result<Belief, FilterError> {
    let (k, z) = gain(b, s)?;
    let m = &k * z;
    let g = &b.mean.group;
    let jl = g.left_jacobian(m.as_slice())?;
    let mean = g.exp_hat(m.as_slice())?.compose(&b.mean)?;
    Ok(Belief { mean, cov: corrected_cov(b, s, &k, &jl) })
}

pub fn update(conv: ErrorConvention, b: &Belief, s: &MeasurementSpec) -> Result<Belief, FilterError> {
    match conv {
        ErrorConvention::LeftInvariant => update_left_invariant(b, s),
        ErrorConvention::RightInvariant => update_right_invariant(b, s),
    }
}

/// Group-affinity residual `f(X₁X₂) − f(X₁)X₂ − X₁f(X₂) + X₁f(I)X₂` for
/// dynamics `f` returning `dX/dt` as a matrix. Zero for group-affine systems.
pub fn check_group_affine<F>(f: F, x1: &GroupElement, x2: &GroupElement) -> Result<DMatrix<f64>, LieError>
where
    F: Fn(&GroupElement) -> DMatrix<f64>,
{
    let x12 = GroupElement { group: x1.group.clone(), matrix: &x1.matrix * &x2.matrix };
    if x1.group != x2.group {
        return Err(LieError::GroupMismatch { left: x1.group.clone(), right: x2.group.clone() });
    }
    let id = x1.group.identity();
    Ok(f(&x12) - f(x1) * &x2.matrix - &x1.matrix * f(x2) + &x1.matrix * f(&id) * &x2.matrix)
}
