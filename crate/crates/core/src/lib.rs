//! Affect-aware encoder-decoder dialogue generation tuned with
//! policy-gradient reinforcement learning.

pub mod affect;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod feedback;
pub mod model;
pub mod rewards;
pub mod synthetic;
pub mod toy;
pub mod training;

pub use error::{Error, Result};
