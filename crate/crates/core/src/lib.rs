//! Estimators of integral functionals `∫ T(f)` of a density on `[0, 1]`
//! built from Haar projection kernels, dyadic bin counting and Lepski-type
//! smoothness adaptation.

pub mod density;
pub mod cubic;
pub mod error;
pub mod functional;
pub mod general;
pub mod haar;
pub mod harness;
pub mod lepski;
pub mod quad;
pub mod quadratic;
pub mod rng;

pub use error::{Error, Result};
