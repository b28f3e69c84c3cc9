pub mod data;
pub mod datagen;
pub mod error;
pub mod errorcov;
pub mod filter;
pub mod harness;
pub mod impute;
pub mod knockoff;
pub mod linalg;
pub mod rng;
pub mod stats;
pub mod tree;
pub use error::{Error, Result};
