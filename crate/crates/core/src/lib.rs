pub mod corpus;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod feedback;
pub mod manager;
pub mod nn;
pub mod seed;
pub mod training;

pub use error::{Error, Result};
