mod common;

use common::{
    central_diff, jac_err, left_perturbed, lie_error_rate, random_imu, random_state, rie_error_rate, right_perturbed,
};
use kio_core::filter::{check_group_affine, is_psd_within, Belief, ErrorConvention};
use kio_core::kio::{self, ContactFlags, Foot, FilterVariant, KioState, NoiseParams, RelPoseMeasurement};
use kio_core::lie::GroupId;
use nalgebra::{DMatrix, Matrix6, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-6;
const DT: f64 = 0.01;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn propagation_matches_group_increment() {
    let mut r = rng(1);
    let g = GroupId::kio_state();
    for _ in 0..100 {
        let x = random_state(&mut r);
        let u = random_imu(&mut r);
        let dt = r.random_range(0.001..0.05);
        let direct = kio::propagate_mean(&x, &u, dt).embed();
        let via_group = x.embed().compose(&g.exp_hat(kio::omega(&x, &u, dt).as_slice()).unwrap()).unwrap();
        assert!((direct.matrix - via_group.matrix).amax() < 1e-10);
    }
}

#[test]
fn rie_motion_jacobian_matches_finite_differences() {
    let mut r = rng(2);
    for _ in 0..100 {
        let x = random_state(&mut r);
        let u = random_imu(&mut r);
        let fd = central_diff(|e| kio::omega(&left_perturbed(&x, e), &u, DT), 27, H);
        assert!(jac_err(&kio::motion_jacobian_rie(&x, DT), &fd) < 1e-6);
    }
}

#[test]
fn lie_motion_jacobian_matches_finite_differences() {
    let mut r = rng(3);
    for _ in 0..100 {
        let x = random_state(&mut r);
        let u = random_imu(&mut r);
        let f = kio::motion_jacobian_lie(&x, &u, DT);
        let fd = central_diff(|e| kio::omega(&right_perturbed(&x, e), &u, DT), 27, H);
        assert!(jac_err(&f, &fd) < 1e-6);
        assert_eq!(f.rows(9, 18).amax(), 0.0);
    }
}

#[test]
fn lie_motion_jacobian_vanishes_at_rest() {
    let x = KioState::default();
    let u = kio::ImuSample { t: 0.0, acc: Vector3::zeros(), gyro: Vector3::zeros() };
    let f = kio::motion_jacobian_lie(&x, &u, 1e-9);
    assert!(f.amax() < 1e-7);
}

#[test]
fn measurement_jacobians_match_finite_differences() {
    let mut r = rng(4);
    for _ in 0..100 {
        let x = random_state(&mut r);
        for foot in Foot::BOTH {
            let h_inv = kio::predict_measurement(&x, foot).inverse();
            let innov = |y: &KioState| h_inv.compose(&kio::predict_measurement(y, foot)).unwrap().log_vee().unwrap();
            let fd_r = central_diff(|e| innov(&left_perturbed(&x, e)), 6, H);
            let fd_l = central_diff(|e| innov(&right_perturbed(&x, e)), 6, H);
            let hr = kio::measurement_jacobian(&x, foot, ErrorConvention::RightInvariant);
            let hl = kio::measurement_jacobian(&x, foot, ErrorConvention::LeftInvariant);
            assert!(jac_err(&hr, &fd_r) < 1e-6, "right {foot:?}");
            assert!(jac_err(&hl, &fd_l) < 1e-6, "left {foot:?}");
        }
    }
}

#[test]
fn rie_fc_matches_error_dynamics() {
    let mut r = rng(5);
    for _ in 0..100 {
        let x = random_state(&mut r);
        let u = random_imu(&mut r);
        let fd = central_diff(|e| rie_error_rate(&x, &u, e), 27, H);
        let (fc, _) = kio::fc_rie(&x);
        assert!(jac_err(&fc, &fd) < 1e-5, "err {}", jac_err(&fc, &fd));
    }
}

#[test]
fn lie_fc_matches_error_dynamics() {
    let mut r = rng(6);
    for _ in 0..100 {
        let x = random_state(&mut r);
        let u = random_imu(&mut r);
        let fd = central_diff(|e| lie_error_rate(&x, &u, e), 27, H);
        let (fc, _) = kio::fc_lie(&u, &x);
        assert!(jac_err(&fc, &fd) < 1e-5, "err {}", jac_err(&fc, &fd));
    }
}

#[test]
fn rie_fc_bias_free_block_is_state_independent() {
    let mut r = rng(7);
    let (f0, _) = kio::fc_rie(&random_state(&mut r));
    let (f1, _) = kio::fc_rie(&random_state(&mut r));
    assert_eq!(f0.view((0, 0), (21, 21)), f1.view((0, 0), (21, 21)));
    assert_ne!(f0, f1);
    let u0 = random_imu(&mut r);
    let u1 = random_imu(&mut r);
    let x = random_state(&mut r);
    assert_ne!(kio::fc_lie(&u0, &x).0.view((0, 0), (21, 21)), kio::fc_lie(&u1, &x).0.view((0, 0), (21, 21)));
}

#[test]
fn bias_free_dynamics_are_group_affine() {
    let mut r = rng(8);
    for _ in 0..100 {
        let x1 = random_state(&mut r).embed();
        let x2 = random_state(&mut r).embed();
        let u = random_imu(&mut r);
        let f = |x: &kio_core::lie::GroupElement| kio::continuous_dynamics(x, &u.acc, &u.gyro);
        assert!(check_group_affine(f, &x1, &x2).unwrap().amax() < 1e-9);
    }
}

#[test]
fn bias_coupling_breaks_group_affinity() {
    let mut r = rng(9);
    let x1 = random_state(&mut r).embed();
    let x2 = random_state(&mut r).embed();
    let u = random_imu(&mut r);
    let f = |x: &kio_core::lie::GroupElement| kio::continuous_dynamics_with_bias(x, &u);
    assert!(check_group_affine(f, &x1, &x2).unwrap().amax() > 1e-4);
}

#[test]
fn predicted_measurement_is_relative_transform() {
    let mut r = rng(10);
    for _ in 0..50 {
        let x = random_state(&mut r);
        for foot in Foot::BOTH {
            let (d, z) = x.foot(foot);
            let tb = x.base_pose().matrix;
            let tf = kio::se3(z, d).matrix;
            let dense = tb.try_inverse().unwrap() * tf;
            assert!((kio::predict_measurement(&x, foot).matrix - dense).amax() < 1e-13);
        }
    }
}

fn noisy_meas(x: &KioState, foot: Foot, r: &mut ChaCha8Rng) -> RelPoseMeasurement {
    let e: Vec<f64> = (0..6).map(|_| r.random_range(-0.01..0.01)).collect();
    let pose = kio::predict_measurement(x, foot).compose(&GroupId::SE3.exp_hat(&e).unwrap()).unwrap();
    RelPoseMeasurement { foot, pose, noise_cov: Matrix6::identity() * 1e-4 }
}

#[test]
fn double_support_stacks_both_feet() {
    let mut r = rng(11);
    let x = random_state(&mut r);
    let meas = [noisy_meas(&x, Foot::LF, &mut r), noisy_meas(&x, Foot::RF, &mut r)];
    let both = ContactFlags { lf: true, rf: true };
    for v in FilterVariant::ALL {
        let spec = kio::measurement_spec(v, &x, &both, &meas).unwrap().unwrap();
        assert_eq!(spec.meas_jacobian.shape(), (12, 27));
        assert_eq!(spec.meas_noise.shape(), (12, 12));
        let hl = kio::measurement_jacobian(&x, Foot::LF, v.convention());
        let hr = kio::measurement_jacobian(&x, Foot::RF, v.convention());
        assert_eq!(spec.meas_jacobian.rows(0, 6), hl);
        assert_eq!(spec.meas_jacobian.rows(6, 6), hr);
        assert_eq!(spec.meas_noise.view((0, 6), (6, 6)).amax(), 0.0);
        let z = spec.innovation().unwrap();
        for (k, m) in meas.iter().enumerate() {
            let single = kio::single_support_spec(&x, m, v.convention()).innovation().unwrap();
            assert!((z.rows(6 * k, 6) - single).amax() < 1e-15);
        }
        let lf_only = ContactFlags { lf: true, rf: false };
        let spec = kio::measurement_spec(v, &x, &lf_only, &meas).unwrap().unwrap();
        assert_eq!(spec.meas_jacobian, hl);
        let none = ContactFlags::default();
        assert!(kio::measurement_spec(v, &x, &none, &meas).unwrap().is_none());
    }
    let dup = [meas[0].clone(), meas[0].clone()];
    assert!(kio::measurement_spec(FilterVariant::DiligentKio, &x, &both, &dup).is_err());
}

#[test]
fn fk_noise_is_psd() {
    let mut r = rng(12);
    let np = NoiseParams::default();
    for _ in 0..50 {
        let j = DMatrix::from_fn(6, 12, |_, _| r.random_range(-3.0..3.0));
        let n = kio::measurement_noise(Some(&j), &np).unwrap();
        assert_eq!(n, n.transpose());
        assert!(is_psd_within(&DMatrix::from_fn(6, 6, |a, b| n[(a, b)]), 0.0));
    }
}

fn prior(x: &KioState) -> Belief {
    Belief::new(x.embed(), NoiseParams::default().prior.covariance()).unwrap()
}

#[test]
fn no_contact_predicts_only() {
    let mut r = rng(13);
    let x = random_state(&mut r);
    let u = random_imu(&mut r);
    let np = NoiseParams::default();
    let meas = [noisy_meas(&x, Foot::LF, &mut r)];
    for v in FilterVariant::ALL {
        let b = prior(&x);
        let out = kio::filter_step(v, &b, &u, &ContactFlags::default(), &meas, DT, &np).unwrap();
        let pred = kio::propagate_mean(&x, &u, DT).embed();
        assert!((out.mean.matrix - pred.matrix).amax() < 1e-12, "{v}");
        assert!(out.cov.trace() > b.cov.trace());
        let updated = kio::filter_step(v, &b, &u, &ContactFlags { lf: true, rf: false }, &meas, DT, &np).unwrap();
        assert!(updated.cov.trace() < out.cov.trace());
    }
}

#[test]
fn replay_is_bit_identical() {
    let np = NoiseParams::default();
    let run = || {
        let mut r = rng(14);
        let x = random_state(&mut r);
        let mut b = prior(&x);
        let both = ContactFlags { lf: true, rf: true };
        let mut out = Vec::new();
        for v in FilterVariant::ALL {
            for _ in 0..20 {
                let u = random_imu(&mut r);
                let meas = [noisy_meas(&x, Foot::LF, &mut r), noisy_meas(&x, Foot::RF, &mut r)];
                b = kio::filter_step(v, &b, &u, &both, &meas, DT, &np).unwrap();
                out.push(b.clone());
            }
        }
        out
    };
    assert_eq!(run(), run());
}
