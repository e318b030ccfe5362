//! Privacy-preserving coordinated dispatch of building loads in a
//! distribution network.

pub mod atdm;
pub mod audit;
pub mod dispatch;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod linalg;
pub mod masking;
pub mod milp;
pub mod ppdc;
pub mod protocol;
pub mod scenario;

pub use error::{Error, Result};
