//! Pair-level relation classification: the latent-variable classifier on
//! prior samples, thresholded prediction, and two baselines.

pub mod attention;
pub mod classifier;
pub mod cooccur;
pub mod threshold;

use serde::{Deserialize, Serialize};

use crate::corpus::{EntityVocab, LabeledPair, RelationLabel};
use crate::error::Result;

pub use attention::{
    attention_pool, predict_attention, train_attention, AttentionConfig, AttentionParams, AttentionTraining, SentenceIndex,
};
pub use classifier::{
    pair_batch, pair_objective, pair_objective_with_noise, pair_probabilities, predict_pair, train_pair, PairClassifier,
    PairConfig, PairNoise, PairTraining,
};
pub use cooccur::{cooccurrence_baseline, CooccurrenceIndex};
pub use threshold::{default_grid, pair_prf, threshold_label, tune_threshold, DecisionThreshold};

/// A labelled pair over entity-table indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairExample {
    pub x: usize,
    pub y: usize,
    pub r: RelationLabel,
}

/// Maps identifier pairs onto the entity table; unknown ids are rejected.
pub fn encode_pairs(pairs: &[LabeledPair], entities: &EntityVocab) -> Result<Vec<PairExample>> {
    pairs
        .iter()
        .map(|p| {
            Ok(PairExample {
                x: entities.id(&p.x)?,
                y: entities.id(&p.y)?,
                r: p.r,
            })
        })
        .collect()
}

/// Indices of the positive pair classes (every class but NO-RELATION).
pub fn positive_classes() -> Vec<usize> {
    RelationLabel::ALL.iter().filter(|l| l.is_positive()).map(|l| l.id()).collect()
}
