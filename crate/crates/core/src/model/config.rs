use serde::{Deserialize, Serialize};

use crate::corpus::EntityMode;
use crate::error::{Error, Result};
use crate::exec::ExecMode;

/// Representation-model settings. Defaults are the full-scale
/// configuration; desk-scale runs override sizes and iteration counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReprConfig {
    /// LSTM and feedforward hidden size `H`.
    pub hidden: usize,
    /// Width `d` of embeddings and of both latent variables.
    pub dim: usize,
    pub mode: EntityMode,
    pub token_dropout: f64,
    pub kl_annealing: bool,
    pub anneal_iters: u64,
    pub iterations: u64,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Examples per gradient chunk. Chunks are the unit of parallel work and
    /// are reduced in a fixed order, so results do not depend on `exec`.
    pub chunk_size: usize,
    pub log_every: u64,
    /// Zero disables periodic checkpoints.
    pub checkpoint_every: u64,
    pub exec: ExecMode,
}

impl Default for ReprConfig {
    fn default() -> Self {
        ReprConfig {
            hidden: 128,
            dim: 300,
            mode: EntityMode::Identifiers,
            token_dropout: 0.5,
            kl_annealing: true,
            anneal_iters: 10_000,
            iterations: 400_000,
            batch_size: 192,
            learning_rate: 1e-4,
            chunk_size: 16,
            log_every: 100,
            checkpoint_every: 0,
            exec: ExecMode::default(),
        }
    }
}

impl ReprConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.dim == 0 || self.batch_size == 0 || self.chunk_size == 0 {
            return Err(Error::invalid("hidden, dim, batch_size and chunk_size must be positive"));
        }
        if !(0.0..=1.0).contains(&self.token_dropout) {
            return Err(Error::invalid(format!("token_dropout {} outside [0, 1]", self.token_dropout)));
        }
        if self.kl_annealing && self.anneal_iters == 0 {
            return Err(Error::invalid("anneal_iters must be positive when annealing"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        Ok(())
    }
}
