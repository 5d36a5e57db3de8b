//! Extended Kalman filters on matrix Lie groups for humanoid floating-base
//! (kinematic-inertial) odometry, together with a synthetic gait simulator
//! and the evaluation tooling used to compare filter variants.
//!
//! * [`lie`]: SO(3), SE(3), SE₂(3), ℝⁿ and composite groups.
//! * [`filter`]: generic discrete and continuous-discrete EKF steps on groups.
//! * [`kio`]: the KIO state, sensor models, Jacobians and the four filter variants.
//! * [`sim`]: synthetic walking datasets with exact ground truth.
//! * [`eval`]: ATE/RPE and covariance-consistency metrics.
//! * [`pipeline`]: configuration and the simulate/run/evaluate/compare commands.

pub mod eval;
pub mod filter;
pub mod kio;
pub mod lie;
pub mod pipeline;
pub mod sim;
