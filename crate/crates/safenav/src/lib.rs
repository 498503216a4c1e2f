//! Exact collision probabilities for Gaussian-uncertain bodies and a
//! belief-space safe navigation stack built on them.

pub mod baselines;
pub mod belief;
pub mod collision;
pub mod error;
pub mod obstacle;
pub mod planner;
pub mod quadform;
pub mod sim;

pub use error::{Error, Result};
