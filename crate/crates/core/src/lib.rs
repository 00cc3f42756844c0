//! Prediction and verification of subharmonic oscillation in
//! fixed-frequency PWM DC-DC converters.
//!
//! The crate is organized around [`model::SwitchedLinearModel`], the
//! two-stage switched linear description shared by voltage-mode and
//! current-mode schemes. On top of it sit:
//!
//! * [`steady`]: the T-periodic orbit and steady-state duty cycle,
//! * [`sampled`]: the sampled-data Jacobian, exact and approximate
//!   subharmonic boundaries and S plots,
//! * [`hb`]: harmonic-balance conditions, HB plots and M plots,
//! * [`closed_forms`]: per-scheme critical voltages, gains and slopes,
//! * [`sim`]: an exact switched simulator for cross-checking.

pub mod closed_forms;
pub mod error;
pub mod hb;
pub mod model;
pub mod numerics;
pub mod presets;
pub mod roots;
pub mod sampled;
pub mod sim;
pub mod steady;

pub use error::{Error, Result, Saturation};
pub use model::{
    build_model, input, CompensatorParams, PowerStageParams, Scheme, SwitchedLinearModel, Topology,
};
