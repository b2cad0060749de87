pub mod cli;
pub mod error;
pub mod forward;
pub mod grating;
pub mod inverse;
pub mod io;
pub mod matfact;
pub mod model;
pub mod synth;

pub use error::{Error, Result};
