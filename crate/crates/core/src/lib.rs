pub mod align;
pub mod audio;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod fusion;
pub mod nn;
pub mod sampling;
pub mod textfeat;

pub use error::{Error, Result};
