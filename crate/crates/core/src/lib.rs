pub mod basis;
pub mod error;
pub mod experiments;
pub mod field;
pub mod functionals;
pub mod pde;
pub mod posterior;
pub mod priors;
pub mod rng;
pub mod sde;
pub mod stats;

pub use error::{Error, Result};
