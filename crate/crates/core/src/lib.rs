pub mod awb;
pub mod breaktrend;
pub mod cli;
pub mod error;
pub mod kerneltrend;
pub mod linalg;
pub mod mcharness;
pub mod seasonal;
pub mod series;
pub mod shapetests;

pub use error::{Error, Result};
