pub mod config;
pub mod detection;
pub mod device;
pub mod error;
pub mod gaussian;
pub mod lsq;
pub mod scenario;
pub mod streams;
pub mod tomography;

pub use error::{Error, Result};
