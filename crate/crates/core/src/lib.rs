//! Finite-dimensional simulation of repeated non-demolition measurements.
//!
//! The crate is organised bottom-up:
//!
//! - [`operator`]: dense complex matrices, states, projections and instruments.
//! - [`history`]: measurement schedules, history operators and the LSW measure.
//! - [`povm`]: the map `Φ` from functions on history space to operators.
//! - [`ndm`]: the label/probe reference model, trajectory sampling and
//!   Bayesian purification.
//! - [`ergodic`]: the countable ergodic disintegration of history measures.
//! - [`stats`]: small statistical helpers shared by the checks.

pub mod alphabet;
pub mod ergodic;
pub mod error;
pub mod history;
pub mod operator;
pub mod ndm;
pub mod povm;
pub mod stats;

pub use alphabet::{Alphabet, Symbol};
pub use error::{Error, Result};
pub use operator::{ComplexMatrix, DensityMatrix, Instrument, Projection, C64};
