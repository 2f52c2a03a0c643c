pub mod aggregator;
pub mod costmodel;
pub mod error;
pub mod harness;
pub mod numkernel;
pub mod packer;
pub mod sampler;
pub mod toymodel;

pub use error::{Error, Result};
