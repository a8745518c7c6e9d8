//! Friction identification and compensation for harmonic-drive joints.
//!
//! The crate walks the full identification workflow on a simulated
//! motor-transmission-load joint: excite it with a current schedule
//! ([`excitation`], [`sim`]), reconstruct friction torque from the logged
//! signals ([`sigproc`]), fit static velocity-domain models ([`friction`],
//! [`fitting`]) or a history-window network ([`pinn`]), and close a
//! two-layer torque loop over the result ([`control`]).

pub mod cli;
pub mod config;
pub mod control;
pub mod csvio;
pub mod error;
pub mod eval;
pub mod excitation;
pub mod fitting;
pub mod friction;
pub mod pinn;
pub mod sigproc;
pub mod sim;

pub use error::{Error, Result};
