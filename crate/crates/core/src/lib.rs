//! First pinna notch (N1) extraction from head-related impulse responses and
//! N1 prediction from pinna anthropometry.

pub mod anthro;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod io;
pub mod notch;
pub mod predict;
pub mod synth;

pub use error::{Error, Result};
