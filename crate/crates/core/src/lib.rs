pub mod error;
pub mod linalg;
pub mod simkit;

pub use error::{Error, Result};
pub mod regression;
pub mod subspace;
pub mod source;
pub mod learner;
pub mod sysid;
pub mod distributed;
pub mod config;
pub mod experiment;
pub mod verify;
