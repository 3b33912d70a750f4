//! Latent-variable relation representations from entity-tagged sentences.

pub mod corpus;
pub mod error;
pub mod exec;
pub mod mention;
pub mod metrics;
pub mod model;
pub mod numeric;
pub mod pair;
pub mod pipeline;

pub use error::{Error, Result};
pub use exec::ExecMode;
