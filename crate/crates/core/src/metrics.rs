//! Precision, recall and F1, and a k-fold cross-validation driver.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::kfold_split;
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::numeric::RngStream;

/// Precision, recall and F1 as fractions in `[0, 1]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    /// Builds a triple with `f1` recomputed as the harmonic mean.
    pub fn from_pr(precision: f64, recall: f64) -> Prf {
        Prf {
            precision,
            recall,
            f1: f1_score(precision, recall),
        }
    }
}

/// `2PR / (P + R)`, zero when `P + R = 0`.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Per-class counts of true positives, false positives and false negatives.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_positives: Vec<u64>,
    pub false_positives: Vec<u64>,
    pub false_negatives: Vec<u64>,
}

impl ConfusionCounts {
    pub fn from_labels(predictions: &[usize], gold: &[usize], classes: usize) -> Result<Self> {
        if predictions.len() != gold.len() {
            return Err(Error::invalid(format!(
                "{} predictions for {} gold labels",
                predictions.len(),
                gold.len()
            )));
        }
        let mut c = ConfusionCounts {
            true_positives: vec![0; classes],
            false_positives: vec![0; classes],
            false_negatives: vec![0; classes],
        };
        for (&p, &g) in predictions.iter().zip(gold) {
            if p >= classes || g >= classes {
                return Err(Error::invalid(format!("label outside {classes} classes")));
            }
            if p == g {
                c.true_positives[p] += 1;
            } else {
                c.false_positives[p] += 1;
                c.false_negatives[g] += 1;
            }
        }
        Ok(c)
    }

    /// Micro-averaged scores over `positive` classes.
    pub fn micro(&self, positive: &[usize]) -> Prf {
        let sum = |v: &[u64]| positive.iter().map(|&k| v.get(k).copied().unwrap_or(0)).sum::<u64>();
        let tp = sum(&self.true_positives) as f64;
        let fp = sum(&self.false_positives) as f64;
        let fneg = sum(&self.false_negatives) as f64;
        let p = if tp + fp == 0.0 { 0.0 } else { tp / (tp + fp) };
        let r = if tp + fneg == 0.0 { 0.0 } else { tp / (tp + fneg) };
        Prf::from_pr(p, r)
    }
}

/// Micro-averaged precision, recall and F1 over the `positive` classes.
pub fn prf(predictions: &[usize], gold: &[usize], positive: &[usize]) -> Result<Prf> {
    let classes = predictions
        .iter()
        .chain(gold)
        .chain(positive)
        .max()
        .map_or(1, |&m| m + 1);
    Ok(ConfusionCounts::from_labels(predictions, gold, classes)?.micro(positive))
}

pub fn accuracy(predictions: &[usize], gold: &[usize]) -> Result<f64> {
    if predictions.len() != gold.len() || gold.is_empty() {
        return Err(Error::invalid("accuracy needs equal, non-empty label lists"));
    }
    let hits = predictions.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / gold.len() as f64)
}

/// Unweighted mean of each component.
pub fn mean_prf(folds: &[Prf]) -> Prf {
    let n = folds.len().max(1) as f64;
    Prf {
        precision: folds.iter().map(|f| f.precision).sum::<f64>() / n,
        recall: folds.iter().map(|f| f.recall).sum::<f64>() / n,
        f1: folds.iter().map(|f| f.f1).sum::<f64>() / n,
    }
}

/// Held-out scores of one fold.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub prf: Prf,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub folds: Vec<FoldMetrics>,
    pub mean: Prf,
    pub mean_accuracy: f64,
}

/// Runs `evaluate(fold, train, test, rng)` on each of `k` folds of `0..n`
/// and averages the per-fold metrics. Each call gets `rng.derive(fold)`.
pub fn cross_validate<F>(n: usize, k: usize, rng: &RngStream, mode: ExecMode, evaluate: F) -> Result<CrossValidation>
where
    F: Fn(usize, &[usize], &[usize], &RngStream) -> Result<FoldMetrics> + Sync + Send,
{
    let folds = kfold_split(n, k, &mut rng.derive(u64::MAX))?;
    let ids: Vec<usize> = (0..k).collect();
    let results = exec::map(mode, &ids, |_, &fold| {
        let train = crate::corpus::training_indices(&folds, fold);
        evaluate(fold, &train, &folds[fold], &rng.derive(fold as u64))
    });
    let folds = results.into_iter().collect::<Result<Vec<_>>>()?;
    let prfs: Vec<Prf> = folds.iter().map(|f| f.prf).collect();
    Ok(CrossValidation {
        mean: mean_prf(&prfs),
        mean_accuracy: folds.iter().map(|f| f.accuracy).sum::<f64>() / k as f64,
        folds,
    })
}

/// Plain-text table with P, R and F in percent.
pub fn results_table(rows: &[(String, Prf)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(6);
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {:>6}  {:>6}  {:>6}", "method", "P", "R", "F");
    for (name, m) in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>6.2}  {:>6.2}  {:>6.2}",
            name,
            100.0 * m.precision,
            100.0 * m.recall,
            100.0 * m.f1
        );
    }
    out
}
