//! Kinematic-inertial odometry (KIO) for a flat-footed biped.
//!
//! The state `(p, R, v, d_LF, Z_LF, d_RF, Z_RF, b)` lives on
//! `SE₂(3) × SE(3) × SE(3) × ℝ⁶`. Tangent ordering is
//! `(ε_p, ε_R, ε_v, ε_dLF, ε_ZLF, ε_dRF, ε_ZRF, ε_ba, ε_bg)`.

mod models;
mod step;

pub use models::*;
pub use step::*;

use nalgebra::{DMatrix, Matrix3, Matrix6, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filter::{ErrorConvention, FilterError};
use crate::lie::{get3, getv, set3, setv, GroupElement, GroupId, LieError};

/// Tangent offsets of each block in the 27-vector.
pub mod idx {
    pub const P: usize = 0;
    pub const R: usize = 3;
    pub const V: usize = 6;
    pub const D_LF: usize = 9;
    pub const Z_LF: usize = 12;
    pub const D_RF: usize = 15;
    pub const Z_RF: usize = 18;
    pub const BA: usize = 21;
    pub const BG: usize = 24;
    pub const DOF: usize = 27;
}

/// Standard gravity in the world frame (z up).
pub fn gravity() -> Vector3<f64> {
    Vector3::new(0.0, 0.0, -9.80665)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KioError {
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Lie(#[from] LieError),
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParam { field: String, reason: String },
    #[error("more than one measurement for foot {0:?} in a single tick")]
    DuplicateFoot(Foot),
    #[error("time step must be positive, got {0}")]
    TimeStep(f64),
    #[error("FK Jacobian must have 6 rows, got {0}")]
    FkJacobianRows(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Foot {
    LF,
    RF,
}

impl Foot {
    pub const BOTH: [Foot; 2] = [Foot::LF, Foot::RF];

    /// Tangent offset of the foot position block; the rotation block follows.
    pub fn tangent_offset(self) -> usize {
        match self {
            Foot::LF => idx::D_LF,
            Foot::RF => idx::D_RF,
        }
    }
}

/// Full KIO state in plain components.
#[derive(Debug, Clone, PartialEq)]
pub struct KioState {
    pub p: Vector3<f64>,
    pub r: Matrix3<f64>,
    pub v: Vector3<f64>,
    pub d_lf: Vector3<f64>,
    pub z_lf: Matrix3<f64>,
    pub d_rf: Vector3<f64>,
    pub z_rf: Matrix3<f64>,
    pub b_a: Vector3<f64>,
    pub b_g: Vector3<f64>,
}

impl Default for KioState {
    fn default() -> Self {
        KioState {
            p: Vector3::zeros(),
            r: Matrix3::identity(),
            v: Vector3::zeros(),
            d_lf: Vector3::zeros(),
            z_lf: Matrix3::identity(),
            d_rf: Vector3::zeros(),
            z_rf: Matrix3::identity(),
            b_a: Vector3::zeros(),
            b_g: Vector3::zeros(),
        }
    }
}

impl KioState {
    pub fn foot(&self, foot: Foot) -> (&Vector3<f64>, &Matrix3<f64>) {
        match foot {
            Foot::LF => (&self.d_lf, &self.z_lf),
            Foot::RF => (&self.d_rf, &self.z_rf),
        }
    }

    /// 20×20 block-diagonal embedding.
    pub fn embed(&self) -> GroupElement {
        let mut m = DMatrix::identity(20, 20);
        set3(&mut m, 0, 0, &self.r);
        setv(&mut m, 0, 3, &self.p);
        setv(&mut m, 0, 4, &self.v);
        set3(&mut m, 5, 5, &self.z_lf);
        setv(&mut m, 5, 8, &self.d_lf);
        set3(&mut m, 9, 9, &self.z_rf);
        setv(&mut m, 9, 12, &self.d_rf);
        setv(&mut m, 13, 19, &self.b_a);
        setv(&mut m, 16, 19, &self.b_g);
        GroupElement { group: GroupId::kio_state(), matrix: m }
    }

    pub fn extract(x: &GroupElement) -> Result<Self, LieError> {
        let g = GroupId::kio_state();
        if x.group != g {
            return Err(LieError::GroupMismatch { left: g, right: x.group.clone() });
        }
        let m = &x.matrix;
        Ok(KioState {
            r: get3(m, 0, 0),
            p: getv(m, 0, 3),
            v: getv(m, 0, 4),
            z_lf: get3(m, 5, 5),
            d_lf: getv(m, 5, 8),
            z_rf: get3(m, 9, 9),
            d_rf: getv(m, 9, 12),
            b_a: getv(m, 13, 19),
            b_g: getv(m, 16, 19),
        })
    }

    /// Base pose as an SE(3) element.
    pub fn base_pose(&self) -> GroupElement {
        let mut m = DMatrix::identity(4, 4);
        set3(&mut m, 0, 0, &self.r);
        setv(&mut m, 0, 3, &self.p);
        GroupElement { group: GroupId::SE3, matrix: m }
    }
}

/// Builds an SE(3) element from rotation and translation.
pub fn se3(r: &Matrix3<f64>, t: &Vector3<f64>) -> GroupElement {
    let mut m = DMatrix::identity(4, 4);
    set3(&mut m, 0, 0, r);
    setv(&mut m, 0, 3, t);
    GroupElement { group: GroupId::SE3, matrix: m }
}

/// Rotation and translation of an SE(3) element.
pub fn se3_parts(x: &GroupElement) -> (Matrix3<f64>, Vector3<f64>) {
    (get3(&x.matrix, 0, 0), getv(&x.matrix, 0, 3))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    pub acc: Vector3<f64>,
    pub gyro: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ContactFlags {
    pub lf: bool,
    pub rf: bool,
}

impl ContactFlags {
    pub fn get(&self, foot: Foot) -> bool {
        match foot {
            Foot::LF => self.lf,
            Foot::RF => self.rf,
        }
    }
}

/// Base-to-foot relative pose with its left-trivialized (linear, angular) covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct RelPoseMeasurement {
    pub foot: Foot,
    pub pose: GroupElement,
    pub noise_cov: Matrix6<f64>,
}

/// Initial standard deviations of the prior belief.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorStds {
    pub position: f64,
    pub orientation: f64,
    pub velocity: f64,
    pub foot_position: f64,
    pub foot_orientation: f64,
    pub accel_bias: f64,
    pub gyro_bias: f64,
}

impl Default for PriorStds {
    fn default() -> Self {
        PriorStds {
            position: 0.01,
            orientation: 10f64.to_radians(),
            velocity: 0.5,
            foot_position: 0.01,
            foot_orientation: 10f64.to_radians(),
            accel_bias: 0.01,
            gyro_bias: 0.002,
        }
    }
}

impl PriorStds {
    /// Per-axis standard deviations in tangent order.
    pub fn tangent_stds(&self) -> [f64; idx::DOF] {
        let blocks = [
            self.position,
            self.orientation,
            self.velocity,
            self.foot_position,
            self.foot_orientation,
            self.foot_position,
            self.foot_orientation,
            self.accel_bias,
            self.gyro_bias,
        ];
        std::array::from_fn(|i| blocks[i / 3])
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let s = self.tangent_stds();
        DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(idx::DOF, s.iter().map(|x| x * x)))
    }
}

/// Sensor noise levels (SI units, angles in radians).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub accel_std: f64,
    pub gyro_std: f64,
    /// Random-walk driving std, per √s.
    pub accel_bias_std: f64,
    /// Random-walk driving std, per √s.
    pub gyro_bias_std: f64,
    pub contact_lin_std: f64,
    pub contact_ang_std: f64,
    pub encoder_std: f64,
    /// Multiplier on foot-velocity stds while a foot is in swing.
    pub swing_scale: f64,
    /// Gain from encoder noise to relative-pose noise.
    pub fk_gain: f64,
    pub prior: PriorStds,
}

impl Default for NoiseParams {
    fn default() -> Self {
        NoiseParams {
            accel_std: 0.09,
            gyro_std: 0.01,
            accel_bias_std: 0.01,
            gyro_bias_std: 0.001,
            contact_lin_std: 0.009,
            contact_ang_std: 0.004,
            encoder_std: 0.1f64.to_radians(),
            swing_scale: 1e3,
            fk_gain: 5.0,
            prior: PriorStds::default(),
        }
    }
}

impl NoiseParams {
    pub fn validate(&self) -> Result<(), KioError> {
        let p = &self.prior;
        let fields = [
            ("accel_std", self.accel_std),
            ("gyro_std", self.gyro_std),
            ("accel_bias_std", self.accel_bias_std),
            ("gyro_bias_std", self.gyro_bias_std),
            ("contact_lin_std", self.contact_lin_std),
            ("contact_ang_std", self.contact_ang_std),
            ("encoder_std", self.encoder_std),
            ("swing_scale", self.swing_scale),
            ("fk_gain", self.fk_gain),
            ("prior.position", p.position),
            ("prior.orientation", p.orientation),
            ("prior.velocity", p.velocity),
            ("prior.foot_position", p.foot_position),
            ("prior.foot_orientation", p.foot_orientation),
            ("prior.accel_bias", p.accel_bias),
            ("prior.gyro_bias", p.gyro_bias),
        ];
        for (field, value) in fields {
            if !(value > 0.0 && value.is_finite()) {
                return Err(KioError::InvalidParam {
                    field: field.to_string(),
                    reason: format!("must be positive and finite, got {value}"),
                });
            }
        }
        Ok(())
    }
}

/// The four filters compared here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterVariant {
    /// Discrete left-invariant filter.
    DiligentKio,
    /// Discrete right-invariant filter.
    DiligentKioRie,
    /// Continuous-discrete left-invariant filter.
    CodiligentKio,
    /// Continuous-discrete right-invariant filter.
    CodiligentKioRie,
}

impl FilterVariant {
    pub const ALL: [FilterVariant; 4] = [
        FilterVariant::DiligentKio,
        FilterVariant::DiligentKioRie,
        FilterVariant::CodiligentKio,
        FilterVariant::CodiligentKioRie,
    ];

    pub fn convention(self) -> ErrorConvention {
        match self {
            FilterVariant::DiligentKio | FilterVariant::CodiligentKio => ErrorConvention::LeftInvariant,
            FilterVariant::DiligentKioRie | FilterVariant::CodiligentKioRie => ErrorConvention::RightInvariant,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FilterVariant::DiligentKio => "diligent-kio",
            FilterVariant::DiligentKioRie => "diligent-kio-rie",
            FilterVariant::CodiligentKio => "codiligent-kio",
            FilterVariant::CodiligentKioRie => "codiligent-kio-rie",
        }
    }
}

impl std::fmt::Display for FilterVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FilterVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.to_ascii_lowercase().replace('_', "-");
        FilterVariant::ALL
            .into_iter()
            .find(|v| v.name() == key)
            .ok_or_else(|| {
                let names: Vec<_> = FilterVariant::ALL.iter().map(|v| v.name()).collect();
                format!("unknown variant `{s}` (expected one of {})", names.join(", "))
            })
    }
}
