//! Fixed-size SO(3) helpers shared by every group in this crate.

use nalgebra::{Matrix3, Vector3};

use super::LieError;

/// Below this angle the trigonometric coefficient ratios are evaluated by
/// their Taylor series (through θ⁸) instead of the closed forms.
pub const SERIES_THRESHOLD: f64 = 0.1;

/// Logarithms are refused for rotation angles closer than this to π.
pub const BRANCH_MARGIN: f64 = 1e-6;

/// Skew-symmetric matrix with `skew(u) * v == u.cross(&v)`.
pub fn skew(u: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -u.z, u.y, u.z, 0.0, -u.x, -u.y, u.x, 0.0)
}

pub fn unskew(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// sin θ / θ
fn coeff_a(t: f64) -> f64 {
    if t < SERIES_THRESHOLD {
        let t2 = t * t;
        1.0 - t2 / 6.0 * (1.0 - t2 / 20.0 * (1.0 - t2 / 42.0 * (1.0 - t2 / 72.0)))
    } else {
        t.sin() / t
    }
}

/// (1 − cos θ) / θ²
fn coeff_b(t: f64) -> f64 {
    if t < SERIES_THRESHOLD {
        let t2 = t * t;
        0.5 * (1.0 - t2 / 12.0 * (1.0 - t2 / 30.0 * (1.0 - t2 / 56.0 * (1.0 - t2 / 90.0))))
    } else {
        (1.0 - t.cos()) / (t * t)
    }
}

/// (θ − sin θ) / θ³
fn coeff_c(t: f64) -> f64 {
    if t < SERIES_THRESHOLD {
        let t2 = t * t;
        (1.0 - t2 / 20.0 * (1.0 - t2 / 42.0 * (1.0 - t2 / 72.0 * (1.0 - t2 / 110.0)))) / 6.0
    } else {
        (t - t.sin()) / (t * t * t)
    }
}

/// (θ² + 2 cos θ − 2) / (2θ⁴)
fn coeff_d(t: f64) -> f64 {
    if t < SERIES_THRESHOLD {
        let t2 = t * t;
        1.0 / 24.0 - t2 / 720.0 + t2 * t2 / 40320.0 - t2 * t2 * t2 / 3_628_800.0
            + t2 * t2 * t2 * t2 / 479_001_600.0
    } else {
        (t * t + 2.0 * t.cos() - 2.0) / (2.0 * t.powi(4))
    }
}

/// (2θ − 3 sin θ + θ cos θ) / (2θ⁵)
fn coeff_e(t: f64) -> f64 {
    if t < SERIES_THRESHOLD {
        let t2 = t * t;
        1.0 / 120.0 - t2 / 2520.0 + t2 * t2 / 120_960.0 - t2 * t2 * t2 / 9_979_200.0
            + t2 * t2 * t2 * t2 * 5.0 / 6_227_020_800.0
    } else {
        (2.0 * t - 3.0 * t.sin() + t * t.cos()) / (2.0 * t.powi(5))
    }
}

/// 1/θ² − (1 + cos θ) / (2θ sin θ), the S² coefficient of the inverse left Jacobian.
fn coeff_inv(t: f64) -> f64 {
    if t < SERIES_THRESHOLD {
        let t2 = t * t;
        1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0 + t2 * t2 * t2 / 1_209_600.0
            + t2 * t2 * t2 * t2 / 47_900_160.0
    } else {
        1.0 / (t * t) - (1.0 + t.cos()) / (2.0 * t * t.sin())
    }
}

/// Rodrigues formula.
pub fn exp(phi: &Vector3<f64>) -> Matrix3<f64> {
    let t = phi.norm();
    let s = skew(phi);
    Matrix3::identity() + s * coeff_a(t) + s * s * coeff_b(t)
}

/// Rotation angle in [0, π], computed with atan2 so small angles keep full precision.
pub fn angle(r: &Matrix3<f64>) -> f64 {
    let w = unskew(&(r - r.transpose())) * 0.5;
    let c = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    w.norm().atan2(c)
}

/// Principal-branch logarithm. Angles within [`BRANCH_MARGIN`] of π are rejected.
pub fn log(r: &Matrix3<f64>) -> Result<Vector3<f64>, LieError> {
    let w = unskew(&(r - r.transpose())) * 0.5;
    let c = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let t = w.norm().atan2(c);
    if t > std::f64::consts::PI - BRANCH_MARGIN {
        return Err(LieError::Branch { angle: t });
    }
    if t < 3.0 * std::f64::consts::FRAC_PI_4 {
        return Ok(w / coeff_a(t));
    }
    // Near π the antisymmetric part vanishes; recover the axis from the
    // symmetric part (nnᵀ = (sym − cos θ I) / (1 − cos θ)).
    let sym = (r + r.transpose()) * 0.5;
    let nn = (sym - Matrix3::identity() * c) / (1.0 - c);
    let k = (0..3)
        .max_by(|&i, &j| nn[(i, i)].total_cmp(&nn[(j, j)]))
        .unwrap_or(0);
    let mut axis: Vector3<f64> = nn.column(k).into_owned();
    axis /= axis.norm();
    if axis.dot(&w) < 0.0 {
        axis = -axis;
    }
    Ok(axis * t)
}

pub fn left_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let t = phi.norm();
    let s = skew(phi);
    Matrix3::identity() + s * coeff_b(t) + s * s * coeff_c(t)
}

pub fn left_jacobian_inverse(phi: &Vector3<f64>) -> Matrix3<f64> {
    let t = phi.norm();
    let s = skew(phi);
    Matrix3::identity() - s * 0.5 + s * s * coeff_inv(t)
}

pub fn right_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    left_jacobian(&-phi)
}

/// Coupling block of the SE(3)/SE₂(3) left Jacobian for translational
/// coordinates `rho` and rotation coordinates `phi`.
pub fn q_block(rho: &Vector3<f64>, phi: &Vector3<f64>) -> Matrix3<f64> {
    let t = phi.norm();
    let p = skew(phi);
    let r = skew(rho);
    let pr = p * r;
    let rp = r * p;
    let prp = pr * p;
    let pp = p * p;
    r * 0.5
        + (pr + rp + prp) * coeff_c(t)
        + (pp * r + rp * p - prp * 3.0) * coeff_d(t)
        + (prp * p + pp * rp) * coeff_e(t)
}

/// Polar projection onto SO(3).
pub fn project(r: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = r.svd(true, true);
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        return *r;
    };
    let mut m = u * v_t;
    if m.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        m = u * v_t;
    }
    m
}

/// ‖RᵀR − I‖∞ (max-abs entry).
pub fn orthonormality_defect(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).amax()
}

/// Rotation about x, y, z, applied in that order (R = Rz Ry Rx).
pub fn from_rpy(roll: f64, pitch: f64, yaw: f64) -> Matrix3<f64> {
    exp(&Vector3::new(0.0, 0.0, yaw)) * exp(&Vector3::new(0.0, pitch, 0.0)) * exp(&Vector3::new(roll, 0.0, 0.0))
}
