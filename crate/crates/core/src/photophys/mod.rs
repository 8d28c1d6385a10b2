//! NV photophysics observables: optical saturation, excitation-polarization
//! dependence and emission-spectrum diagnostics.

mod polarization;
mod saturation;
mod spectrum;

pub use polarization::*;
pub use saturation::*;
pub use spectrum::*;
