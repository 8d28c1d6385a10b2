pub mod beam;
pub mod error;
pub mod fitcore;
pub mod odmr;
pub mod photonstats;
pub mod photophys;
pub mod pulse;
pub mod synth;

pub use error::{Error, Result};
