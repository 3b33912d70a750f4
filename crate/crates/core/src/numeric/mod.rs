//! Differentiable building blocks shared by every network in the crate.

pub mod adam;
pub mod array;
pub mod dense;
pub mod gradcheck;
pub mod linalg;
pub mod lstm;
pub mod ops;
pub mod params;
pub mod rng;

pub use adam::{adam_update, AdamConfig, AdamState};
pub use array::Array;
pub use dense::{feedforward, feedforward_gaussian, Activation, FeedForward, Linear};
pub use lstm::{bilstm_encode, lstm_step, BiLstmParams, LstmParams, LstmState};
pub use ops::{
    categorical_log_prob, gaussian_kl_to_standard, gaussian_reparameterize, GaussianParams,
};
pub use params::ParamSet;
pub use rng::RngStream;
