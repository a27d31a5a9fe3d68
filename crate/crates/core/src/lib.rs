//! Word bases of the shuffle algebra and sparse signature computation for
//! time-augmented paths.

pub mod basis;
pub mod error;
pub mod exact;
pub mod freealg;
pub mod io;
pub mod regress;
pub mod signature;
pub mod stochastic;
pub mod words;

pub use error::{Error, Result};
pub use words::{Word, WordClass, WordSet};
