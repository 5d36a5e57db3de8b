//! Acceptance suite: one PASS/FAIL line per criterion, with pinned tolerances
//! and runtime bounds. Runs without the libtest harness so the lines are
//! always printed.

mod common;

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use common::{
    central_diff, jac_err, left_perturbed, lie_error_rate, random_imu, random_state, rie_error_rate, right_perturbed,
    shape_tangent,
};
use kio_core::eval::{ate, consistency, rpe};
use kio_core::filter::{self, check_group_affine, Belief, ErrorConvention, MeasurementSpec, MotionSpec};
use kio_core::kio::{self, FilterVariant, Foot, KioState};
use kio_core::lie::{GroupElement, GroupId};
use kio_core::pipeline::{
    cmd_evaluate, cmd_run, cmd_simulate, final_errors, monte_carlo, run_filter, Config, Init, RunConfig,
};
use kio_core::sim::{simulate, GaitConfig};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const LIE_ROUND_TRIP_TOL: f64 = 1e-9;
const ADJOINT_TOL: f64 = 1e-9;
const JACOBIAN_IDENTITY_TOL: f64 = 1e-8;
const LIE_BUDGET: Duration = Duration::from_secs(5);

const FD_REL_TOL: f64 = 1e-5;
const FD_STEP: f64 = 1e-6;
const FD_BUDGET: Duration = Duration::from_secs(10);

const AFFINE_TOL: f64 = 1e-9;
const SCALAR_KF_TOL: f64 = 1e-12;

const ZERO_NOISE_POS_TOL: f64 = 1e-3;
const ZERO_NOISE_ROT_TOL: f64 = 1e-4;
const ZERO_NOISE_BUDGET: Duration = Duration::from_secs(1);

const MC_RUNS: usize = 20;
const MC_SEED: u64 = 100;
const MC_VEL_VIOLATION_MAX: f64 = 0.05;
const MC_ORDER_MARGIN: f64 = 0.0;
const MC_BUDGET: Duration = Duration::from_secs(60);

const RPE_INVARIANCE_TOL: f64 = 1e-12;
const NOMINAL_RATE: f64 = 0.01;
const NOMINAL_RATE_TOL: f64 = 0.005;

struct Outcome {
    pass: bool,
    detail: String,
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn within(elapsed: Duration, budget: Duration) -> bool {
    elapsed < budget
}

fn random_tangent(r: &mut ChaCha8Rng, g: &GroupId) -> Vec<f64> {
    let raw: Vec<f64> = (0..g.dof()).map(|_| r.random_range(-3.0..3.0)).collect();
    let norms: Vec<f64> = (0..4).map(|_| r.random_range(1e-9..PI - 0.1)).collect();
    shape_tangent(g, &raw, &norms)
}

fn lie_identities() -> Outcome {
    let t0 = Instant::now();
    let mut r = rng(1);
    let (mut rt, mut ad, mut jac) = (0.0f64, 0.0f64, 0.0f64);
    for g in [GroupId::SO3, GroupId::SE3, GroupId::SE23, GroupId::kio_state()] {
        for _ in 0..1000 {
            let a = random_tangent(&mut r, &g);
            let x = g.exp_hat(&random_tangent(&mut r, &g)).unwrap();
            let back = g.exp_hat(&a).unwrap().log_vee().unwrap();
            rt = rt.max((back - DVector::from_column_slice(&a)).amax());

            let lhs = g.exp_hat((x.adjoint() * DVector::from_column_slice(&a)).as_slice()).unwrap();
            let rhs = x.compose(&g.exp_hat(&a).unwrap()).unwrap().compose(&x.inverse()).unwrap();
            ad = ad.max((lhs.matrix - rhs.matrix).amax());

            let jl = g.left_jacobian(&a).unwrap();
            let jr = g.right_jacobian(&a).unwrap();
            jac = jac.max((jl - g.exp_hat(&a).unwrap().adjoint() * jr).amax());
        }
    }
    let dt = t0.elapsed();
    Outcome {
        pass: rt < LIE_ROUND_TRIP_TOL && ad < ADJOINT_TOL && jac < JACOBIAN_IDENTITY_TOL && within(dt, LIE_BUDGET),
        detail: format!("exp/log {rt:.1e}, adjoint {ad:.1e}, J_l = Ad J_r {jac:.1e}, {dt:.2?}"),
    }
}

fn jacobian_certification() -> Outcome {
    let t0 = Instant::now();
    let mut r = rng(2);
    let dt = 0.01;
    let mut worst = [0.0f64; 6];
    for _ in 0..100 {
        let x = random_state(&mut r);
        let u = random_imu(&mut r);
        let fd = central_diff(|e| kio::omega(&left_perturbed(&x, e), &u, dt), 27, FD_STEP);
        worst[0] = worst[0].max(jac_err(&kio::motion_jacobian_rie(&x, dt), &fd));
        let fd = central_diff(|e| kio::omega(&right_perturbed(&x, e), &u, dt), 27, FD_STEP);
        worst[1] = worst[1].max(jac_err(&kio::motion_jacobian_lie(&x, &u, dt), &fd));
        for foot in Foot::BOTH {
            let h_inv = kio::predict_measurement(&x, foot).inverse();
            let innov = |y: &KioState| h_inv.compose(&kio::predict_measurement(y, foot)).unwrap().log_vee().unwrap();
            let fd_r = central_diff(|e| innov(&left_perturbed(&x, e)), 6, FD_STEP);
            let fd_l = central_diff(|e| innov(&right_perturbed(&x, e)), 6, FD_STEP);
            let k = if foot == Foot::LF { 2 } else { 3 };
            worst[k] = worst[k]
                .max(jac_err(&kio::measurement_jacobian(&x, foot, ErrorConvention::RightInvariant), &fd_r))
                .max(jac_err(&kio::measurement_jacobian(&x, foot, ErrorConvention::LeftInvariant), &fd_l));
        }
        let fd = central_diff(|e| rie_error_rate(&x, &u, e), 27, FD_STEP);
        worst[4] = worst[4].max(jac_err(&kio::fc_rie(&x).0, &fd));
        let fd = central_diff(|e| lie_error_rate(&x, &u, e), 27, FD_STEP);
        worst[5] = worst[5].max(jac_err(&kio::fc_lie(&u, &x).0, &fd));
    }
    let el = t0.elapsed();
    let max = worst.iter().copied().fold(0.0, f64::max);
    Outcome {
        pass: max < FD_REL_TOL && within(el, FD_BUDGET),
        detail: format!(
            "F_R {:.1e}, F_L {:.1e}, H_LF {:.1e}, H_RF {:.1e}, Fc_rie {:.1e}, Fc_lie {:.1e}, {el:.2?}",
            worst[0], worst[1], worst[2], worst[3], worst[4], worst[5]
        ),
    }
}

fn group_affinity() -> Outcome {
    let mut r = rng(3);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let x1 = random_state(&mut r).embed();
        let x2 = random_state(&mut r).embed();
        let u = random_imu(&mut r);
        let f = |x: &GroupElement| kio::continuous_dynamics(x, &u.acc, &u.gyro);
        worst = worst.max(check_group_affine(f, &x1, &x2).unwrap().amax());
    }
    let reference = kio::fc_rie(&random_state(&mut r)).0.view((0, 0), (21, 21)).into_owned();
    let identical = (0..100).all(|_| kio::fc_rie(&random_state(&mut r)).0.view((0, 0), (21, 21)) == reference);
    Outcome {
        pass: worst < AFFINE_TOL && identical,
        detail: format!("residual {worst:.1e}, F_c 21x21 block identical across 100 states: {identical}"),
    }
}

fn scalar_kalman() -> Outcome {
    let g = GroupId::Vec(1);
    let mut worst = 0.0f64;
    for conv in [ErrorConvention::LeftInvariant, ErrorConvention::RightInvariant] {
        let mut r = rng(4);
        let (a, q, rr) = (0.97, 0.02, 0.3);
        let (mut x, mut p) = (0.5, 2.0);
        let mut b = Belief::new(g.exp_hat(&[x]).unwrap(), DMatrix::from_element(1, 1, p)).unwrap();
        for _ in 0..100 {
            let u: f64 = r.random_range(-1.0..1.0);
            let z: f64 = r.random_range(-3.0..3.0);
            // Predict x⁺ = x + u with error transition a.
            let m = MotionSpec {
                omega: g.tangent(DVector::from_element(1, u)).unwrap(),
                motion_jacobian: DMatrix::from_element(1, 1, a - 1.0),
                process_noise: DMatrix::from_element(1, 1, q),
            };
            b = filter::predict(conv, &b, &m).unwrap();
            x += u;
            p = a * a * p + q;
            let s = MeasurementSpec {
                observed: g.exp_hat(&[z]).unwrap(),
                predicted: b.mean.clone(),
                meas_jacobian: DMatrix::from_element(1, 1, 1.0),
                meas_noise: DMatrix::from_element(1, 1, rr),
            };
            b = filter::update(conv, &b, &s).unwrap();
            let k = p / (p + rr);
            x += k * (z - x);
            p *= 1.0 - k;
            worst = worst.max((b.mean.log_vee().unwrap()[0] - x).abs()).max((b.cov[(0, 0)] - p).abs());
        }
    }
    Outcome { pass: worst < SCALAR_KF_TOL, detail: format!("max deviation over 100 steps {worst:.1e}") }
}

fn zero_noise_loop() -> Outcome {
    let cfg = GaitConfig { noise_free: true, ..GaitConfig::default() };
    let ds = simulate(&cfg).unwrap();
    let mut pass = (ds.duration() - 10.0).abs() < 1e-9 && cfg.rate == 100.0;
    let mut parts = Vec::new();
    for v in FilterVariant::ALL {
        let t0 = Instant::now();
        let run = run_filter(&ds, v, &cfg.noise, Init::Exact);
        let el = t0.elapsed();
        match run {
            Ok(run) => {
                let (pos, rot) = final_errors(&ds, &run);
                pass &= pos < ZERO_NOISE_POS_TOL && rot < ZERO_NOISE_ROT_TOL && within(el, ZERO_NOISE_BUDGET);
                parts.push(format!("{} {pos:.1e} m {rot:.1e} rad {:.0?}", v.name(), el));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{}: {e}", v.name()));
            }
        }
    }
    Outcome { pass, detail: parts.join("; ") }
}

fn monte_carlo_criteria() -> (Outcome, Outcome) {
    let t0 = Instant::now();
    let variants = FilterVariant::ALL;
    let mc = monte_carlo(&GaitConfig::default(), &variants, MC_RUNS, MC_SEED, 0.99, 1.0);
    let el = t0.elapsed();
    let mc = match mc {
        Ok(mc) => mc,
        Err(e) => {
            let fail = |what: &str| Outcome { pass: false, detail: format!("{what}: {e}") };
            return (fail("Monte-Carlo aborted"), fail("Monte-Carlo aborted"));
        }
    };
    let s = |v: FilterVariant| mc.summary.iter().find(|s| s.variant == v).unwrap();
    let rie_vel = s(FilterVariant::CodiligentKioRie).vel_violation.mean;
    let dk = s(FilterVariant::DiligentKio).pos_vel_violation.mean;
    let ck = s(FilterVariant::CodiligentKio).pos_vel_violation.mean;
    let ckr = s(FilterVariant::CodiligentKioRie).pos_vel_violation.mean;
    let dkr = s(FilterVariant::DiligentKioRie).pos_vel_violation.mean;
    let pass6 = rie_vel <= MC_VEL_VIOLATION_MAX && dk + MC_ORDER_MARGIN >= ck && dk + MC_ORDER_MARGIN >= ckr && within(el, MC_BUDGET);
    let six = Outcome {
        pass: pass6,
        detail: format!(
            "(a) codiligent-kio-rie velocity violation {rie_vel:.4}; (b) pos+vel violation diligent-kio {dk:.4} >= codiligent-kio {ck:.4}, codiligent-kio-rie {ckr:.4} (diligent-kio-rie {dkr:.4}); {MC_RUNS} runs in {el:.1?}"
        ),
    };
    let unhealthy = mc.runs.iter().filter(|r| !r.health.healthy()).count();
    let asym = mc.runs.iter().map(|r| r.health.max_asymmetry).fold(0.0, f64::max);
    let seven = Outcome {
        pass: unhealthy == 0 && mc.runs.len() == MC_RUNS * variants.len(),
        detail: format!("{} runs, {unhealthy} with an unhealthy covariance, max asymmetry {asym:.1e}, no divergence", mc.runs.len()),
    };
    (six, seven)
}

fn metric_units() -> Outcome {
    let g = GroupId::SE3;
    let mut r = rng(8);
    let gt: Vec<GroupElement> = (0..500)
        .map(|k| {
            let t = k as f64 * 0.01;
            g.exp_hat(&[t, 0.2 * t.sin(), 0.05 * t, 0.1 * t.cos(), 0.05 * t, 0.3 * t]).unwrap()
        })
        .collect();
    let zero = ate(&gt, &gt).unwrap() == (0.0, 0.0) && rpe(&gt, &gt, 100).unwrap() == (0.0, 0.0);
    let est: Vec<_> = gt
        .iter()
        .map(|x| {
            let n: Vec<f64> = (0..6).map(|_| 0.01 * r.sample::<f64, _>(StandardNormal)).collect();
            x.compose(&g.exp_hat(&n).unwrap()).unwrap()
        })
        .collect();
    let offset = g.exp_hat(&[1.5, -2.0, 0.3, 0.4, -1.1, 2.2]).unwrap();
    let moved: Vec<_> = est.iter().map(|x| offset.compose(x).unwrap()).collect();
    let (p1, r1) = rpe(&est, &gt, 100).unwrap();
    let (p2, r2) = rpe(&moved, &gt, 100).unwrap();
    let inv = (p1 - p2).abs().max((r1 - r2).abs());

    let n = 27;
    let a = DMatrix::from_fn(n, n, |i, j| ((i * 5 + j * 7) % 13) as f64 / 13.0 - 0.5);
    let p = &a * a.transpose() * 0.1 + DMatrix::identity(n, n) * 0.01;
    let l = p.clone().cholesky().unwrap().l();
    let errors: Vec<DVector<f64>> =
        (0..10_000).map(|_| &l * DVector::from_fn(n, |_, _| r.sample::<f64, _>(StandardNormal))).collect();
    let rep = consistency(&errors, &vec![p; errors.len()], 0.99).unwrap();
    let frac = rep.axis_violation.iter().sum::<f64>() / n as f64;
    let worst_axis = rep.axis_violation.iter().map(|v| (v - NOMINAL_RATE).abs()).fold(0.0, f64::max);
    Outcome {
        pass: zero && inv < RPE_INVARIANCE_TOL && (frac - NOMINAL_RATE).abs() <= NOMINAL_RATE_TOL && worst_axis <= NOMINAL_RATE_TOL,
        detail: format!(
            "identical -> zero: {zero}; RPE offset change {inv:.1e}; N(0,P) violation {frac:.4} (worst axis off by {worst_axis:.4})"
        ),
    }
}

fn pipeline_bytes(dir: &std::path::Path) -> Vec<Vec<u8>> {
    let mut cfg = Config::default();
    cfg.seed = 2024;
    let ds = dir.join("ds.jsonl");
    cmd_simulate(&cfg, &ds).unwrap();
    cfg.run.dataset = Some(ds.clone());
    let mut out = vec![std::fs::read(&ds).unwrap()];
    for v in FilterVariant::ALL {
        cfg.run.variant = v;
        cfg.run.output = Some(dir.join(format!("{v}.jsonl")));
        let rc = RunConfig::from_config(&cfg).unwrap();
        cmd_run(&rc).unwrap();
        let report = dir.join(format!("{v}-report.jsonl"));
        cmd_evaluate(&rc.output, &ds, 0.99, 1.0, Some(&report)).unwrap();
        out.push(std::fs::read(&rc.output).unwrap());
        out.push(std::fs::read(&report).unwrap());
    }
    out
}

fn determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (x, y) = (pipeline_bytes(a.path()), pipeline_bytes(b.path()));
    let same = x == y;
    let size: usize = x.iter().map(Vec::len).sum();
    Outcome { pass: same, detail: format!("{} files, {size} bytes, identical across two executions: {same}", x.len()) }
}

fn main() {
    let names = [
        "Lie-core identities",
        "Jacobian certification",
        "Group affinity",
        "Classical-limit oracle",
        "Zero-noise closed loop",
        "Consistency reproduction",
        "Covariance health",
        "Metric unit behavior",
        "Determinism",
    ];
    let (six, seven) = monte_carlo_criteria();
    let outcomes = [
        lie_identities(),
        jacobian_certification(),
        group_affinity(),
        scalar_kalman(),
        zero_noise_loop(),
        six,
        seven,
        metric_units(),
        determinism(),
    ];
    let mut failed = 0;
    for (k, (name, o)) in names.iter().zip(&outcomes).enumerate() {
        println!("criterion {} {:<26} {}  {}", k + 1, name, if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += (!o.pass) as usize;
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
