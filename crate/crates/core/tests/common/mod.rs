#![allow(dead_code)]

use kio_core::lie::{GroupElement, GroupId};
use nalgebra::{DMatrix, DVector, Vector3};
use proptest::prelude::*;

/// Tangent offsets of the rotation coordinates of each member of `g`.
pub fn rotation_offsets(g: &GroupId) -> Vec<usize> {
    g.blocks()
        .into_iter()
        .filter_map(|(m, _, t)| match m {
            GroupId::SO3 => Some(t),
            GroupId::SE3 | GroupId::SE23 => Some(t + 3),
            _ => None,
        })
        .collect()
}

/// Rescales every rotation block of `raw` to the matching entry of `norms`.
pub fn shape_tangent(g: &GroupId, raw: &[f64], norms: &[f64]) -> Vec<f64> {
    let mut a = raw.to_vec();
    for (k, off) in rotation_offsets(g).into_iter().enumerate() {
        let mut d = Vector3::new(a[off], a[off + 1], a[off + 2]);
        if d.norm() < 1e-3 {
            d = Vector3::new(0.3, -0.5, 0.8);
        }
        let d = d.normalize() * norms[k % norms.len()];
        a[off..off + 3].copy_from_slice(d.as_slice());
    }
    a
}

/// Tangent vectors with translational entries in [-scale, scale] and
/// rotation-block norms in `rot`.
pub fn tangent(g: GroupId, scale: f64, rot: std::ops::Range<f64>) -> impl Strategy<Value = Vec<f64>> {
    let n = g.dof();
    (
        prop::collection::vec(-scale..scale, n),
        prop::collection::vec(rot, 4),
    )
        .prop_map(move |(raw, norms)| shape_tangent(&g, &raw, &norms))
}

pub fn dvec(a: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(a)
}

/// Max-abs relative difference with a floor on the reference magnitude.
pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>, floor: f64) -> f64 {
    (a - b).amax() / b.amax().max(floor)
}

pub fn groups() -> Vec<GroupId> {
    vec![GroupId::SO3, GroupId::SE3, GroupId::SE23, GroupId::Vec(6), GroupId::kio_state()]
}

/// `ad_a` assembled column by column from the matrix commutator.
pub fn ad_oracle(g: &GroupId, a: &[f64]) -> DMatrix<f64> {
    let p = g.dof();
    let ha = g.hat(a).unwrap();
    let mut ad = DMatrix::zeros(p, p);
    for i in 0..p {
        let mut e = vec![0.0; p];
        e[i] = 1.0;
        let he = g.hat(&e).unwrap();
        ad.set_column(i, &g.vee(&(&ha * &he - &he * &ha)).unwrap());
    }
    ad
}

/// Σ_{k=0..12} ad_aᵏ / (k+1)!
pub fn series_left_jacobian(g: &GroupId, a: &[f64]) -> DMatrix<f64> {
    let ad = ad_oracle(g, a);
    let p = g.dof();
    let mut term = DMatrix::identity(p, p);
    let mut sum = term.clone();
    let mut fact = 1.0;
    for k in 1..=12 {
        term = &term * &ad;
        fact *= (k + 1) as f64;
        sum += &term / fact;
    }
    sum
}

pub fn adjoint_oracle(x: &GroupElement) -> DMatrix<f64> {
    let g = &x.group;
    let p = g.dof();
    let xinv = x.matrix.clone().try_inverse().unwrap();
    let mut ad = DMatrix::zeros(p, p);
    for i in 0..p {
        let mut e = vec![0.0; p];
        e[i] = 1.0;
        let m = &x.matrix * g.hat(&e).unwrap() * &xinv;
        ad.set_column(i, &g.vee(&m).unwrap());
    }
    ad
}

use kio_core::kio::{self, ImuSample, KioState};
use kio_core::lie::so3;
use rand::Rng;

fn uniform3<R: Rng>(rng: &mut R, s: f64) -> Vector3<f64> {
    Vector3::new(rng.random_range(-s..s), rng.random_range(-s..s), rng.random_range(-s..s))
}

pub fn random_rotation<R: Rng>(rng: &mut R, max_angle: f64) -> nalgebra::Matrix3<f64> {
    let axis = uniform3(rng, 1.0);
    let axis = if axis.norm() < 1e-6 { Vector3::z() } else { axis.normalize() };
    so3::exp(&(axis * rng.random_range(0.0..max_angle)))
}

pub fn random_state<R: Rng>(rng: &mut R) -> KioState {
    KioState {
        p: uniform3(rng, 1.0),
        r: random_rotation(rng, 3.0),
        v: uniform3(rng, 1.0),
        d_lf: uniform3(rng, 1.0),
        z_lf: random_rotation(rng, 3.0),
        d_rf: uniform3(rng, 1.0),
        z_rf: random_rotation(rng, 3.0),
        b_a: uniform3(rng, 0.2),
        b_g: uniform3(rng, 0.05),
    }
}

pub fn random_imu<R: Rng>(rng: &mut R) -> ImuSample {
    ImuSample { t: 0.0, acc: uniform3(rng, 10.0), gyro: uniform3(rng, 1.0) }
}

fn unit(i: usize, h: f64) -> Vec<f64> {
    let mut e = vec![0.0; 27];
    e[i] = h;
    e
}

/// Central differences of `map` at zero, one tangent direction per column.
pub fn central_diff<F: Fn(&[f64]) -> DVector<f64>>(map: F, rows: usize, h: f64) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows, 27);
    for i in 0..27 {
        let plus = map(&unit(i, h));
        let minus = map(&unit(i, -h));
        out.set_column(i, &((plus - minus) / (2.0 * h)));
    }
    out
}

pub fn left_perturbed(x: &KioState, e: &[f64]) -> KioState {
    let g = GroupId::kio_state();
    KioState::extract(&g.exp_hat(e).unwrap().compose(&x.embed()).unwrap()).unwrap()
}

pub fn right_perturbed(x: &KioState, e: &[f64]) -> KioState {
    let g = GroupId::kio_state();
    KioState::extract(&x.embed().compose(&g.exp_hat(e).unwrap()).unwrap()).unwrap()
}

/// Time derivative of the right-invariant error `ε` at `X = exp(ε)X̂`, both
/// trajectories driven by the same IMU sample and their own biases.
pub fn rie_error_rate(xh: &KioState, u: &ImuSample, e: &[f64]) -> DVector<f64> {
    let g = GroupId::kio_state();
    let xh = xh.embed();
    let x = g.exp_hat(e).unwrap().compose(&xh).unwrap();
    let xh_inv = xh.inverse().matrix;
    let eta = &x.matrix * &xh_inv;
    let eta_dot = kio::continuous_dynamics_with_bias(&x, u) * &xh_inv
        - &eta * kio::continuous_dynamics_with_bias(&xh, u) * &xh_inv;
    let eta_inv = g.element(eta).unwrap().inverse().matrix;
    let rate = g.vee(&(eta_dot * eta_inv)).unwrap();
    g.left_jacobian(e).unwrap().try_inverse().unwrap() * rate
}

/// Time derivative of the left-invariant error `ε` at `X = X̂exp(ε)`.
pub fn lie_error_rate(xh: &KioState, u: &ImuSample, e: &[f64]) -> DVector<f64> {
    let g = GroupId::kio_state();
    let xh = xh.embed();
    let x = xh.compose(&g.exp_hat(e).unwrap()).unwrap();
    let xh_inv = xh.inverse().matrix;
    let eta = &xh_inv * &x.matrix;
    let eta_dot = -(&xh_inv * kio::continuous_dynamics_with_bias(&xh, u) * &xh_inv * &x.matrix)
        + &xh_inv * kio::continuous_dynamics_with_bias(&x, u);
    let eta_inv = g.element(eta).unwrap().inverse().matrix;
    let rate = g.vee(&(eta_inv * eta_dot)).unwrap();
    g.right_jacobian(e).unwrap().try_inverse().unwrap() * rate
}

/// Relative error of an analytic Jacobian against its finite-difference oracle.
pub fn jac_err(analytic: &DMatrix<f64>, fd: &DMatrix<f64>) -> f64 {
    (analytic - fd).amax() / analytic.amax().max(1e-12)
}
