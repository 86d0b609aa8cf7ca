pub mod adversary;
pub mod authcode;
pub mod basecode;
pub mod bounds;
pub mod error;
pub mod numerics;
pub mod overlay;
pub mod rng;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
