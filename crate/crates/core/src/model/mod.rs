//! The unsupervised representation model `p(c | x, y)` with latents `u`
//! and `z`, its inference network and its training loop.

pub mod checkpoint;
pub mod config;
pub mod engine;
pub mod estimate;
pub mod noise;
pub mod params;
pub mod reference;
pub mod train;

pub use checkpoint::Checkpoint;
pub use config::ReprConfig;
pub use engine::{elbo_batch, Row};
pub use noise::ExampleNoise;
pub use params::ReprParams;
pub use reference::{
    decoder_log_prob, decoder_log_prob_with, decoder_step_log_probs, elbo, elbo_with_noise, entity_pair_features, inference_latent_params,
    kl_anneal_weight, posterior_z_samples, prior_latent_params, prior_z_with_noise, sample_prior_z, ElboTerms,
};
pub use train::{train_repr, TrainLog, TrainRecord};

#[cfg(test)]
pub(crate) mod fixtures;
