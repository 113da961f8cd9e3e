//! Modelling, control, identification and learning for a magnetically
//! actuated two-plane inverted pendulum.
//!
//! Everything is generic over the scalar through [`Real`]; the `*64` and
//! `*32` aliases below fix the common choices.

pub mod compensation;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod field;
pub mod ilc;
pub mod scalar;
pub mod sysid;

pub use compensation::OffsetEstimator;
pub use control::{solve_dare, Controller, DareSolution, LqrWeights, RateEstimator};
pub use dynamics::{linearized_model, LinearModel, PlanarState, PlantParams};
pub use error::{Error, Result};
pub use field::{ActuationMatrix, DipoleCoilArray, FieldVector, GradientVector, COILS};
pub use ilc::{IlcGains, IlcSession, LiftedSystem};
pub use scalar::Real;
pub use sysid::{FrfEstimate, MultisineConfig, SosDelayFit};

pub type PlantParams64 = PlantParams<f64>;
pub type PlantParams32 = PlantParams<f32>;
pub type PlanarState64 = PlanarState<f64>;
pub type PlanarState32 = PlanarState<f32>;
pub type LinearModel64 = LinearModel<f64>;
pub type LinearModel32 = LinearModel<f32>;
pub type Controller64 = Controller<f64>;
pub type Controller32 = Controller<f32>;
pub type OffsetEstimator64 = OffsetEstimator<f64>;
pub type ActuationMatrix64 = ActuationMatrix<f64>;
pub type IlcSession64 = IlcSession<f64>;
pub type FrfEstimate64 = FrfEstimate<f64>;
pub type SosDelayFit64 = SosDelayFit<f64>;
