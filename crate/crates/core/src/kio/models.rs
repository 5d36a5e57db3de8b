//! Motion and measurement models with their analytic Jacobians.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Vector3};

use super::{gravity, idx, se3, ContactFlags, Foot, ImuSample, KioError, KioState, NoiseParams, RelPoseMeasurement};
use crate::filter::{ErrorConvention, MeasurementSpec};
use crate::lie::so3::{self, skew};
use crate::lie::{get3, getv, set3, setv, GroupElement, GroupId, RENORMALIZE_TOL};

fn put(m: &mut DMatrix<f64>, r: usize, c: usize, b: &Matrix3<f64>) {
    set3(m, r, c, b);
}

/// Bias-compensated gyro `ω̄ = y_gyro − b_g`.
pub fn omega_bar(x: &KioState, u: &ImuSample) -> Vector3<f64> {
    u.gyro - x.b_g
}

/// Bias-compensated specific force `y_acc − b_a` (body frame, no gravity).
pub fn specific_force(x: &KioState, u: &ImuSample) -> Vector3<f64> {
    u.acc - x.b_a
}

/// Trivialized acceleration `ā = y_acc − b_a + Rᵀg`.
pub fn accel_bar(x: &KioState, u: &ImuSample) -> Vector3<f64> {
    specific_force(x, u) + x.r.transpose() * gravity()
}

/// Left-trivialized increment `Ω = (Rᵀv Δt + ½ā Δt², ω̄ Δt, ā Δt, 0₁₈)`.
pub fn omega(x: &KioState, u: &ImuSample, dt: f64) -> DVector<f64> {
    let a = accel_bar(x, u);
    let mut out = DVector::zeros(idx::DOF);
    out.fixed_rows_mut::<3>(idx::P).copy_from(&(x.r.transpose() * x.v * dt + a * (0.5 * dt * dt)));
    out.fixed_rows_mut::<3>(idx::R).copy_from(&(omega_bar(x, u) * dt));
    out.fixed_rows_mut::<3>(idx::V).copy_from(&(a * dt));
    out
}

/// Noise-free discrete dynamics, identical to `X·exp(Ω)`:
/// `R⁺ = R Exp(ω̄Δt)`, `p⁺ = p + R J_l(ω̄Δt)(RᵀvΔt + ½āΔt²)`, `v⁺ = v + R J_l(ω̄Δt) āΔt`.
pub fn propagate_mean(x: &KioState, u: &ImuSample, dt: f64) -> KioState {
    let a = accel_bar(x, u);
    let phi = omega_bar(x, u) * dt;
    let rj = x.r * so3::left_jacobian(&phi);
    let mut r = x.r * so3::exp(&phi);
    if so3::orthonormality_defect(&r) > RENORMALIZE_TOL {
        r = so3::project(&r);
    }
    KioState {
        p: x.p + rj * (x.r.transpose() * x.v * dt + a * (0.5 * dt * dt)),
        r,
        v: x.v + rj * a * dt,
        ..x.clone()
    }
}

/// Per-axis process-noise stds in tangent order, with feet in swing inflated.
fn noise_stds(np: &NoiseParams, contacts: &ContactFlags) -> [f64; idx::DOF] {
    let scale = |foot| if contacts.get(foot) { 1.0 } else { np.swing_scale };
    let (sl, sr) = (scale(Foot::LF), scale(Foot::RF));
    let blocks = [
        0.0,
        np.gyro_std,
        np.accel_std,
        np.contact_lin_std * sl,
        np.contact_ang_std * sl,
        np.contact_lin_std * sr,
        np.contact_ang_std * sr,
        np.accel_bias_std,
        np.gyro_bias_std,
    ];
    std::array::from_fn(|i| blocks[i / 3])
}

/// Discrete left-trivialized process noise `Q = E[wwᵀ]` with
/// `w = vec(−½n_aΔt, −n_g, −n_a, −n_v,LF, −n_ω,LF, −n_v,RF, −n_ω,RF, n_b)·Δt`.
/// The shared accelerometer noise correlates the position and velocity blocks.
pub fn process_noise(np: &NoiseParams, contacts: &ContactFlags, dt: f64) -> DMatrix<f64> {
    let s = noise_stds(np, contacts);
    let mut q = DMatrix::zeros(idx::DOF, idx::DOF);
    for i in 3..idx::DOF {
        q[(i, i)] = (s[i] * dt).powi(2);
    }
    let sa2 = np.accel_std * np.accel_std;
    for k in 0..3 {
        q[(idx::P + k, idx::P + k)] = sa2 * (0.5 * dt * dt).powi(2);
        q[(idx::P + k, idx::V + k)] = 0.5 * sa2 * dt.powi(3);
        q[(idx::V + k, idx::P + k)] = 0.5 * sa2 * dt.powi(3);
    }
    q
}

/// `Cov(w)` for the continuous noise vector
/// `w = vec(0, n_g, n_a, n_v,LF, n_ω,LF, n_v,RF, n_ω,RF, −n_b)`.
pub fn continuous_noise_cov(np: &NoiseParams, contacts: &ContactFlags) -> DMatrix<f64> {
    let s = noise_stds(np, contacts);
    DMatrix::from_diagonal(&DVector::from_iterator(idx::DOF, s.iter().map(|x| x * x)))
}

/// `𝔉ᴿ`: Jacobian of Ω under the left perturbation `exp(ε)X̂`, with `Ξ₁ = R̂ᵀS(g)Δt`.
pub fn motion_jacobian_rie(x: &KioState, dt: f64) -> DMatrix<f64> {
    let i3 = Matrix3::identity();
    let xi1 = x.r.transpose() * skew(&gravity()) * dt;
    let mut f = DMatrix::zeros(idx::DOF, idx::DOF);
    put(&mut f, idx::P, idx::R, &(xi1 * (0.5 * dt)));
    put(&mut f, idx::P, idx::V, &(x.r.transpose() * dt));
    put(&mut f, idx::P, idx::BA, &(-i3 * (0.5 * dt * dt)));
    put(&mut f, idx::R, idx::BG, &(-i3 * dt));
    put(&mut f, idx::V, idx::R, &xi1);
    put(&mut f, idx::V, idx::BA, &(-i3 * dt));
    f
}

/// `𝔉ᴸ`: Jacobian of Ω under the right perturbation `X̂exp(ε)`.
/// The increment's IMU dependence enters only through constant terms, so
/// the sample does not appear in the result.
pub fn motion_jacobian_lie(x: &KioState, _u: &ImuSample, dt: f64) -> DMatrix<f64> {
    let i3 = Matrix3::identity();
    let rt = x.r.transpose();
    let sg = skew(&(rt * gravity()));
    let mut f = DMatrix::zeros(idx::DOF, idx::DOF);
    put(&mut f, idx::P, idx::R, &(skew(&(rt * x.v)) * dt + sg * (0.5 * dt * dt)));
    put(&mut f, idx::P, idx::V, &(i3 * dt));
    put(&mut f, idx::P, idx::BA, &(-i3 * (0.5 * dt * dt)));
    put(&mut f, idx::R, idx::BG, &(-i3 * dt));
    put(&mut f, idx::V, idx::R, &(sg * dt));
    put(&mut f, idx::V, idx::BA, &(-i3 * dt));
    f
}

/// Right-invariant linearized error dynamics `(F_c, L_c = Ad_X̂)`.
/// The first 21×21 block depends on gravity only.
pub fn fc_rie(x: &KioState) -> (DMatrix<f64>, DMatrix<f64>) {
    let i3 = Matrix3::identity();
    let mut f = DMatrix::zeros(idx::DOF, idx::DOF);
    put(&mut f, idx::P, idx::V, &i3);
    put(&mut f, idx::P, idx::BG, &(-skew(&x.p) * x.r));
    put(&mut f, idx::R, idx::BG, &(-x.r));
    put(&mut f, idx::V, idx::R, &skew(&gravity()));
    put(&mut f, idx::V, idx::BA, &(-x.r));
    put(&mut f, idx::V, idx::BG, &(-skew(&x.v) * x.r));
    (f, x.embed().adjoint())
}

/// Left-invariant linearized error dynamics `(F_c, L_c = I)`, time-varying
/// through the bias-compensated IMU sample.
pub fn fc_lie(u: &ImuSample, x: &KioState) -> (DMatrix<f64>, DMatrix<f64>) {
    let i3 = Matrix3::identity();
    let sw = skew(&omega_bar(x, u));
    let mut f = DMatrix::zeros(idx::DOF, idx::DOF);
    put(&mut f, idx::P, idx::P, &(-sw));
    put(&mut f, idx::P, idx::V, &i3);
    put(&mut f, idx::R, idx::R, &(-sw));
    put(&mut f, idx::R, idx::BG, &(-i3));
    put(&mut f, idx::V, idx::R, &(-skew(&specific_force(x, u))));
    put(&mut f, idx::V, idx::V, &(-sw));
    put(&mut f, idx::V, idx::BA, &(-i3));
    (f, DMatrix::identity(idx::DOF, idx::DOF))
}

/// Noise-free continuous dynamics `dX/dt` (20×20) driven by the given
/// bias-compensated specific force and angular rate. Feet and biases are static.
pub fn continuous_dynamics(x: &GroupElement, force: &Vector3<f64>, rate: &Vector3<f64>) -> DMatrix<f64> {
    let r = get3(&x.matrix, 0, 0);
    let v = getv(&x.matrix, 0, 4);
    let mut d = DMatrix::zeros(x.matrix.nrows(), x.matrix.ncols());
    set3(&mut d, 0, 0, &(r * skew(rate)));
    setv(&mut d, 0, 3, &v);
    setv(&mut d, 0, 4, &(r * force + gravity()));
    d
}

/// As [`continuous_dynamics`], compensating the raw IMU sample with the
/// biases stored in `x` itself.
pub fn continuous_dynamics_with_bias(x: &GroupElement, u: &ImuSample) -> DMatrix<f64> {
    let b_a = getv(&x.matrix, 13, 19);
    let b_g = getv(&x.matrix, 16, 19);
    continuous_dynamics(x, &(u.acc - b_a), &(u.gyro - b_g))
}

/// `h(X) = (RᵀZ_F, Rᵀ(d_F − p))`.
pub fn predict_measurement(x: &KioState, foot: Foot) -> GroupElement {
    let (d, z) = x.foot(foot);
    se3(&(x.r.transpose() * z), &(x.r.transpose() * (d - x.p)))
}

/// 6×27 relative-pose Jacobian for one foot, rows (linear, angular).
pub fn measurement_jacobian(x: &KioState, foot: Foot, conv: ErrorConvention) -> DMatrix<f64> {
    let (d, z) = x.foot(foot);
    let zt = z.transpose();
    let off = foot.tangent_offset();
    let mut h = DMatrix::zeros(6, idx::DOF);
    match conv {
        ErrorConvention::RightInvariant => {
            let zsd = zt * skew(d);
            put(&mut h, 0, idx::P, &(-zt));
            put(&mut h, 0, idx::R, &zsd);
            put(&mut h, 0, off, &zt);
            put(&mut h, 0, off + 3, &(-zsd));
            put(&mut h, 3, idx::R, &(-zt));
            put(&mut h, 3, off + 3, &zt);
        }
        ErrorConvention::LeftInvariant => {
            let ztr = zt * x.r;
            put(&mut h, 0, idx::P, &(-ztr));
            put(&mut h, 0, idx::R, &(-zt * skew(&(x.p - d)) * x.r));
            put(&mut h, 0, off, &Matrix3::identity());
            put(&mut h, 3, idx::R, &(-ztr));
            put(&mut h, 3, off + 3, &Matrix3::identity());
        }
    }
    h
}

/// Relative-pose noise `N = J Σ Jᵀ + 1e-12 I` with `Σ = σ_enc² I`; without
/// a Jacobian, the isotropic fallback `(fk_gain σ_enc)² I`.
pub fn measurement_noise(j_rel: Option<&DMatrix<f64>>, np: &NoiseParams) -> Result<Matrix6<f64>, KioError> {
    if !(np.encoder_std > 0.0) {
        return Err(KioError::InvalidParam {
            field: "encoder_std".into(),
            reason: format!("must be positive, got {}", np.encoder_std),
        });
    }
    let var = np.encoder_std * np.encoder_std;
    let Some(j) = j_rel else {
        return Ok(Matrix6::identity() * (np.fk_gain * np.fk_gain * var));
    };
    if j.nrows() != 6 {
        return Err(KioError::FkJacobianRows(j.nrows()));
    }
    let n = j * j.transpose() * var;
    let mut out = Matrix6::identity() * 1e-12;
    for r in 0..6 {
        for c in 0..6 {
            out[(r, c)] += 0.5 * (n[(r, c)] + n[(c, r)]);
        }
    }
    Ok(out)
}

/// Single-foot update: residual map and Jacobian for one foot.
pub fn single_support_spec(x: &KioState, meas: &RelPoseMeasurement, conv: ErrorConvention) -> MeasurementSpec {
    let n = &meas.noise_cov;
    MeasurementSpec {
        observed: meas.pose.clone(),
        predicted: predict_measurement(x, meas.foot),
        meas_jacobian: measurement_jacobian(x, meas.foot, conv),
        meas_noise: DMatrix::from_fn(6, 6, |r, c| n[(r, c)]),
    }
}

fn block_diag(a: &GroupElement, b: &GroupElement, group: &GroupId) -> GroupElement {
    let (na, nb) = (a.matrix.nrows(), b.matrix.nrows());
    let mut m = DMatrix::zeros(na + nb, na + nb);
    m.view_mut((0, 0), (na, na)).copy_from(&a.matrix);
    m.view_mut((na, na), (nb, nb)).copy_from(&b.matrix);
    GroupElement { group: group.clone(), matrix: m }
}

/// Double-support observation on `SE(3) × SE(3)`: stacked 12×27 Jacobian,
/// block-diagonal noise.
pub fn stack_double_support(left: &MeasurementSpec, right: &MeasurementSpec) -> MeasurementSpec {
    let group = GroupId::Composite(vec![GroupId::SE3, GroupId::SE3]);
    let (ql, qr) = (left.meas_noise.nrows(), right.meas_noise.nrows());
    let p = left.meas_jacobian.ncols();
    let mut h = DMatrix::zeros(ql + qr, p);
    h.rows_mut(0, ql).copy_from(&left.meas_jacobian);
    h.rows_mut(ql, qr).copy_from(&right.meas_jacobian);
    let mut n = DMatrix::zeros(ql + qr, ql + qr);
    n.view_mut((0, 0), (ql, ql)).copy_from(&left.meas_noise);
    n.view_mut((ql, ql), (qr, qr)).copy_from(&right.meas_noise);
    MeasurementSpec {
        observed: block_diag(&left.observed, &right.observed, &group),
        predicted: block_diag(&left.predicted, &right.predicted, &group),
        meas_jacobian: h,
        meas_noise: n,
    }
}
