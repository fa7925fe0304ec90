pub mod error;
pub mod numeric;

pub use error::{Error, Result};
pub mod family;
pub mod priors;
pub mod matching;
pub mod posterior;
pub mod coverage;
pub mod cli;
