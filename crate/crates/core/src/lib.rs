pub mod advantage;
pub mod diagnostics;
pub mod envs;
pub mod error;
pub mod nn;
pub mod ppo;
pub mod routing;

pub use error::{Error, Result};
