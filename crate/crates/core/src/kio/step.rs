//! One predict/update cycle for each filter variant.

use super::{
    continuous_noise_cov, fc_lie, fc_rie, motion_jacobian_lie, motion_jacobian_rie, omega, process_noise,
    propagate_mean, single_support_spec, stack_double_support, ContactFlags, FilterVariant, ImuSample, KioError,
    KioState, NoiseParams, RelPoseMeasurement,
};
use crate::filter::{self, Belief, MeasurementSpec, MotionSpec};
use crate::lie::GroupId;

/// Propagates `b` over `dt` with the IMU sample `u`. `contacts` are the
/// flags at the end of the interval and select the foot process noise.
pub fn predict_step(
    variant: FilterVariant,
    b: &Belief,
    u: &ImuSample,
    contacts: &ContactFlags,
    dt: f64,
    np: &NoiseParams,
) -> Result<Belief, KioError> {
    if !(dt > 0.0) {
        return Err(KioError::TimeStep(dt));
    }
    let x = KioState::extract(&b.mean)?;
    let out = match variant {
        FilterVariant::DiligentKio | FilterVariant::DiligentKioRie => {
            let (conv, jac) = match variant {
                FilterVariant::DiligentKio => (variant.convention(), motion_jacobian_lie(&x, u, dt)),
                _ => (variant.convention(), motion_jacobian_rie(&x, dt)),
            };
            let m = MotionSpec {
                omega: GroupId::kio_state().tangent(omega(&x, u, dt))?,
                motion_jacobian: jac,
                process_noise: process_noise(np, contacts, dt),
            };
            filter::predict(conv, b, &m)?
        }
        FilterVariant::CodiligentKio | FilterVariant::CodiligentKioRie => {
            let (fc, lc) = match variant {
                FilterVariant::CodiligentKio => fc_lie(u, &x),
                _ => fc_rie(&x),
            };
            let qc = &lc * continuous_noise_cov(np, contacts) * lc.transpose();
            filter::predict_continuous_discrete(b, |_| propagate_mean(&x, u, dt).embed(), &fc, &qc, dt)?
        }
    };
    Ok(out)
}

/// Builds the (possibly stacked) update from the measurements of feet in
/// contact. Returns `None` when no foot contributes.
pub fn measurement_spec(
    variant: FilterVariant,
    x: &KioState,
    contacts: &ContactFlags,
    meas: &[RelPoseMeasurement],
) -> Result<Option<MeasurementSpec>, KioError> {
    let conv = variant.convention();
    let mut per_foot: [Option<MeasurementSpec>; 2] = [None, None];
    for m in meas {
        let slot = &mut per_foot[m.foot as usize];
        if slot.is_some() {
            return Err(KioError::DuplicateFoot(m.foot));
        }
        if contacts.get(m.foot) {
            *slot = Some(single_support_spec(x, m, conv));
        }
    }
    Ok(match per_foot {
        [Some(l), Some(r)] => Some(stack_double_support(&l, &r)),
        [Some(s), None] | [None, Some(s)] => Some(s),
        [None, None] => None,
    })
}

/// Predict, then correct with the in-contact relative-pose measurements.
pub fn filter_step(
    variant: FilterVariant,
    b: &Belief,
    u: &ImuSample,
    contacts: &ContactFlags,
    meas: &[RelPoseMeasurement],
    dt: f64,
    np: &NoiseParams,
) -> Result<Belief, KioError> {
    let predicted = predict_step(variant, b, u, contacts, dt, np)?;
    let x = KioState::extract(&predicted.mean)?;
    match measurement_spec(variant, &x, contacts, meas)? {
        Some(spec) => Ok(filter::update(variant.convention(), &predicted, &spec)?),
        None => Ok(predicted),
    }
}
