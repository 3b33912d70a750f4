use std::path::Path;

use serde::{Deserialize, Serialize};

use super::positive_classes;
use crate::corpus::RelationLabel;
use crate::error::{Error, Result};
use crate::metrics::{prf, Prf};

/// Minimum probability a positive class must exceed to be predicted.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionThreshold {
    pub tau: f64,
    /// Validation micro-F1 at `tau`.
    pub validation_f1: f64,
}

impl DecisionThreshold {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let t: DecisionThreshold = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if !(0.0..=1.0).contains(&t.tau) {
            return Err(Error::invalid(format!("threshold {} outside [0, 1]", t.tau)));
        }
        Ok(t)
    }
}

/// `0.00, 0.01, ..., 0.99`.
pub fn default_grid() -> Vec<f64> {
    (0..100).map(|i| i as f64 / 100.0).collect()
}

/// The most probable positive class if its probability exceeds `tau`
/// (ties between classes go to the lower id), else NO-RELATION. Returns the
/// label and that class's probability.
pub fn threshold_label(probs: &[f64], tau: f64) -> (RelationLabel, f64) {
    let mut best = 1;
    for k in 2..probs.len() {
        if probs[k] > probs[best] {
            best = k;
        }
    }
    let label = if probs[best] > tau {
        RelationLabel::from_id(best).expect("class id in range")
    } else {
        RelationLabel::NoRelation
    };
    (label, probs[best])
}

/// Micro-averaged scores over the positive classes at threshold `tau`.
pub fn pair_prf(probs: &[Vec<f64>], gold: &[RelationLabel], tau: f64) -> Result<Prf> {
    let pred: Vec<usize> = probs.iter().map(|p| threshold_label(p, tau).0.id()).collect();
    let gold: Vec<usize> = gold.iter().map(|g| g.id()).collect();
    prf(&pred, &gold, &positive_classes())
}

/// The grid point with the best validation micro-F1; ties go to the larger
/// threshold.
pub fn tune_threshold(probs: &[Vec<f64>], gold: &[RelationLabel], grid: &[f64]) -> Result<DecisionThreshold> {
    if probs.is_empty() || probs.len() != gold.len() {
        return Err(Error::invalid("need a non-empty validation set with one gold label per prediction"));
    }
    if !gold.iter().any(|g| g.is_positive()) {
        return Err(Error::invalid("validation set has no positive pairs"));
    }
    if grid.is_empty() || grid.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::invalid("threshold grid must be non-empty and inside [0, 1]"));
    }
    let mut best: Option<DecisionThreshold> = None;
    for &tau in grid {
        let f = pair_prf(probs, gold, tau)?.f1;
        if best.is_none_or(|b| f > b.validation_f1 || (f == b.validation_f1 && tau > b.tau)) {
            best = Some(DecisionThreshold { tau, validation_f1: f });
        }
    }
    Ok(best.expect("non-empty grid"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(pos: f64, class: usize) -> Vec<f64> {
        let mut v = vec![0.0; 5];
        v[class] = pos;
        v[0] = 1.0 - pos;
        v
    }

    #[test]
    fn threshold_rule() {
        assert_eq!(threshold_label(&p(0.4, 2), 0.5).0, RelationLabel::NoRelation);
        assert_eq!(threshold_label(&p(0.4, 2), 0.0).0, RelationLabel::from_id(2).unwrap());
        assert_eq!(threshold_label(&p(1.0, 3), 1.0).0, RelationLabel::NoRelation);
        // equal to tau is not enough
        assert_eq!(threshold_label(&p(0.5, 3), 0.5).0, RelationLabel::NoRelation);
        // ties between positive classes go to the lower id
        assert_eq!(threshold_label(&[0.2, 0.0, 0.4, 0.4, 0.0], 0.1).0.id(), 2);
    }

    #[test]
    fn separated_scores_pick_the_largest_separating_point() {
        let probs = vec![p(0.7, 1), p(0.25, 1), p(0.1, 2), p(0.29, 4)];
        let gold = [
            RelationLabel::from_id(1).unwrap(),
            RelationLabel::NoRelation,
            RelationLabel::NoRelation,
            RelationLabel::NoRelation,
        ];
        let t = tune_threshold(&probs, &gold, &default_grid()).unwrap();
        // strict rule: 0.7 > tau holds up to 0.69
        assert_eq!(t.tau, 0.69);
        assert_eq!(t.validation_f1, 1.0);
    }

    #[test]
    fn no_positives_is_rejected() {
        assert!(tune_threshold(&[p(0.3, 1)], &[RelationLabel::NoRelation], &default_grid()).is_err());
    }
}
