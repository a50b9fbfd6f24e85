//! Capacity laboratory for fading few-mode IM/DD MIMO fiber links.
//!
//! The crate models a short-reach few-mode fiber link where each spatial
//! mode carries an intensity-modulated PAM signal and the mode
//! (de)multiplexers leak drifting crosstalk between modes. On top of the
//! channel model it provides:
//!
//! - QR-based ergodic capacity upper bounds with power-allocation search
//!   ([`bounds`]),
//! - constructive lower bounds via an unconstrained Blahut-Arimoto
//!   iteration over MZM-constrained mass points ([`baa`]),
//! - brute-force mutual-information oracles used to validate the above
//!   ([`mi`]),
//! - end-to-end trained pre-coder/detector pairs robust to crosstalk
//!   drift ([`ae`]).
//!
//! The numeric core is generic over the scalar type via [`num::Real`];
//! the `*64` aliases at the crate root fix `f64`, which is what the CLI
//! and all quoted tolerances use.

pub mod ae;
pub mod baa;
pub mod bounds;
pub mod channel;
pub mod error;
pub mod linalg;
pub mod mi;
pub mod num;
pub mod seed;

pub use error::{Error, Result};
pub use num::Real;

/// Default scalar type.
pub type Scalar = f64;

pub type ComponentSpec64 = channel::ComponentSpec<f64>;
pub type TransferMatrix64 = channel::TransferMatrix<f64>;
pub type LinkConfig64 = channel::LinkConfig<f64>;
pub type NoiseModel64 = channel::NoiseModel<f64>;
pub type PowerAllocation64 = bounds::PowerAllocation<f64>;
pub type QrFactors64 = bounds::QrFactors<f64>;
pub type UpperBoundReport64 = bounds::UpperBoundReport<f64>;
pub type DiscreteDistribution64 = baa::DiscreteDistribution<f64>;
pub type QuadratureScheme64 = baa::QuadratureScheme<f64>;
pub type BaaResult64 = baa::BaaResult<f64>;
pub type BaaParams64 = baa::BaaParams<f64>;
pub type MiEstimate64 = mi::MiEstimate<f64>;
pub type MlpModel64 = ae::MlpModel<f64>;
pub type RateReport64 = ae::RateReport<f64>;
pub type TrainedSystem64 = ae::TrainedSystem<f64>;
