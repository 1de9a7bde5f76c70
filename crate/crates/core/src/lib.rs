//! Rate functions of branching Brownian motion conditioned on a low maximum,
//! with constraints on the first branching time and location, plus the
//! numerical oracles used to check them.

pub mod decomposition;
pub mod error;
pub mod figures;
pub mod fkpp;
pub mod mc;
pub mod quad;
pub mod rates;
pub mod special;
pub mod variational;
pub mod verify;

pub use error::{Error, Result};
