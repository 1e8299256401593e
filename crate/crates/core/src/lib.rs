pub mod assignment;
pub mod camgeo;
pub mod error;
pub mod io;
pub mod mask;
pub mod trajectory;
pub mod synth;
pub mod tracker;
pub mod tube;
pub mod vsq;

pub use error::{Error, Result};
