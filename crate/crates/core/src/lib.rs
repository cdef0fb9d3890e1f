//! Work and heat bookkeeping for a system driven by a quantized drive and
//! optionally coupled to an environment.
//!
//! Units: ħ = 1, energies in units of the system frequency ω, times in 1/ω.

pub mod classical;
pub mod composite;
pub mod dynamics;
pub mod energetics;
pub mod error;
pub mod fluctuation;
pub mod jc;
pub mod layout;
pub mod linalg;

pub use error::{Error, Result};
pub use layout::{HilbertLayout, Slot};
pub use linalg::{CMatrix, C64};
