//! Distributionally robust reach-avoid and safety synthesis for polynomial
//! discrete-time systems under Wasserstein ambiguity.

pub mod ambiguity;
pub mod certificates;
pub mod config;
pub mod dro_dual;
pub mod error;
pub mod export;
pub mod harness;
pub mod model;
pub mod oracle;
pub mod polynomial;
pub mod synthesis;

pub use error::{Error, Result};
