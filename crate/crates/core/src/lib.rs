pub mod abc;
pub mod autodiff;
pub mod chain;
pub mod chmc;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod model;
pub mod models;
pub mod rng;
pub mod target;

pub use error::{Error, Result};
