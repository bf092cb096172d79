pub mod adam;
pub mod checkpoint;
pub mod cli;
pub mod codec;
pub mod config;
pub mod datasets;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod matrix;
pub mod nn;
pub mod objectives;
pub mod rng;
pub mod train;
pub mod util;

pub use error::{Error, Result};
