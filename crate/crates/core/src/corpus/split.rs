use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::labels::{LabeledPair, RelationLabel};
use crate::error::{Error, Result};
use crate::numeric::RngStream;

/// Shuffles `0..n` and deals it into `k` folds whose sizes differ by at most
/// one; the first `n % k` folds get the extra element.
pub fn kfold_split(n: usize, k: usize, rng: &mut RngStream) -> Result<Vec<Vec<usize>>> {
    if k == 0 || k > n {
        return Err(Error::invalid(format!("cannot split {n} examples into {k} folds")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut idx);
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut at = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        folds.push(idx[at..at + size].to_vec());
        at += size;
    }
    Ok(folds)
}

/// Indices of every fold except `held_out`, in fold order.
pub fn training_indices(folds: &[Vec<usize>], held_out: usize) -> Vec<usize> {
    folds
        .iter()
        .enumerate()
        .filter(|(f, _)| *f != held_out)
        .flat_map(|(_, v)| v.iter().copied())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PairSplitConfig {
    pub validation_fraction: f64,
    pub test_fraction: f64,
    /// NO-RELATION pairs per positive pair in the validation and test sets.
    pub negatives_per_positive: f64,
}

impl Default for PairSplitConfig {
    fn default() -> Self {
        PairSplitConfig {
            validation_fraction: 0.1,
            test_fraction: 0.1,
            negatives_per_positive: 1.0,
        }
    }
}

/// Train/validation/test sets for pair-level classification plus the pool of
/// unrelated pairs that training minibatches draw NO-RELATION examples from.
#[derive(Clone, Debug, PartialEq)]
pub struct PairSplit {
    pub train: Vec<LabeledPair>,
    pub validation: Vec<LabeledPair>,
    pub test: Vec<LabeledPair>,
    pub pool: NoRelationPool,
}

/// Co-occurring pairs with no known relation that are kept out of evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct NoRelationPool {
    pairs: Vec<(String, String)>,
}

impl NoRelationPool {
    /// Builds the pool from `candidates`, dropping every pair in `excluded`.
    pub fn new(candidates: &[(String, String)], excluded: &[LabeledPair]) -> Self {
        let ex: BTreeSet<(&str, &str)> = excluded.iter().map(|p| (p.x.as_str(), p.y.as_str())).collect();
        let pairs = candidates
            .iter()
            .filter(|(x, y)| !ex.contains(&(x.as_str(), y.as_str())))
            .cloned()
            .collect();
        NoRelationPool { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn draw(&self, rng: &mut RngStream) -> LabeledPair {
        let (x, y) = &self.pairs[rng.below(self.pairs.len())];
        LabeledPair {
            x: x.clone(),
            y: y.clone(),
            r: RelationLabel::NoRelation,
        }
    }
}

/// Splits labelled pairs and assigns unrelated co-occurring pairs.
///
/// `related` holds the positive pairs; `cooccurring` is every oriented pair
/// seen together in the corpus. Pairs of `cooccurring` absent from `related`
/// are NO-RELATION candidates: enough of them go to validation and test to
/// meet `negatives_per_positive`, and the rest form the training pool.
pub fn split_pairs(
    related: &[LabeledPair],
    cooccurring: &[(String, String)],
    config: &PairSplitConfig,
    rng: &mut RngStream,
) -> Result<PairSplit> {
    let fr = config.validation_fraction + config.test_fraction;
    if !(0.0..1.0).contains(&fr) || config.validation_fraction < 0.0 || config.test_fraction < 0.0 {
        return Err(Error::invalid("validation and test fractions must be non-negative and sum below 1"));
    }
    if config.negatives_per_positive < 0.0 || !config.negatives_per_positive.is_finite() {
        return Err(Error::invalid("negatives_per_positive must be a non-negative number"));
    }
    if related.iter().any(|p| !p.r.is_positive()) {
        return Err(Error::invalid("related pairs must carry positive labels"));
    }
    let mut pos = related.to_vec();
    pos.sort();
    pos.dedup();
    rng.shuffle(&mut pos);
    let n_val = (pos.len() as f64 * config.validation_fraction).round() as usize;
    let n_test = (pos.len() as f64 * config.test_fraction).round() as usize;
    let test: Vec<LabeledPair> = pos.drain(..n_test).collect();
    let validation: Vec<LabeledPair> = pos.drain(..n_val).collect();
    let train = pos;

    let known: BTreeSet<(&str, &str)> = related.iter().map(|p| (p.x.as_str(), p.y.as_str())).collect();
    let mut negatives: Vec<(String, String)> = cooccurring
        .iter()
        .filter(|(x, y)| !known.contains(&(x.as_str(), y.as_str())))
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    rng.shuffle(&mut negatives);
    let want = |n: usize| (n as f64 * config.negatives_per_positive).round() as usize;
    let take = |negs: &mut Vec<(String, String)>, n: usize| -> Vec<LabeledPair> {
        let n = n.min(negs.len());
        negs.drain(..n)
            .map(|(x, y)| LabeledPair {
                x,
                y,
                r: RelationLabel::NoRelation,
            })
            .collect()
    };
    let mut test = test;
    let mut validation = validation;
    test.extend(take(&mut negatives, want(n_test)));
    validation.extend(take(&mut negatives, want(n_val)));
    let pool = NoRelationPool::new(&negatives, &[]);
    Ok(PairSplit {
        train,
        validation,
        test,
        pool,
    })
}

/// Draws `batch - quota` labelled pairs and `quota` pool pairs, uniformly
/// with replacement.
pub fn sample_minibatch(
    positives: &[LabeledPair],
    pool: &NoRelationPool,
    batch: usize,
    quota: usize,
    rng: &mut RngStream,
) -> Result<Vec<LabeledPair>> {
    if quota > batch {
        return Err(Error::invalid(format!("quota {quota} exceeds batch {batch}")));
    }
    if batch > quota && positives.is_empty() {
        return Err(Error::invalid("no labelled pairs to sample from"));
    }
    if quota > 0 && pool.is_empty() {
        return Err(Error::invalid("NO-RELATION pool is empty"));
    }
    let mut out = Vec::with_capacity(batch);
    for _ in 0..batch - quota {
        out.push(positives[rng.below(positives.len())].clone());
    }
    for _ in 0..quota {
        out.push(pool.draw(rng));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fold_sizes_for_355() {
        let folds = kfold_split(355, 10, &mut RngStream::new(1, 0)).unwrap();
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![36, 36, 36, 36, 36, 35, 35, 35, 35, 35]);
        let mut all: Vec<usize> = folds.concat();
        all.sort();
        assert_eq!(all, (0..355).collect::<Vec<_>>());
    }

    #[test]
    fn single_fold_and_errors() {
        let folds = kfold_split(7, 1, &mut RngStream::new(1, 0)).unwrap();
        assert_eq!(folds.len(), 1);
        assert_eq!(folds[0].len(), 7);
        assert!(kfold_split(3, 4, &mut RngStream::new(1, 0)).is_err());
        assert!(kfold_split(3, 0, &mut RngStream::new(1, 0)).is_err());
    }

    #[test]
    fn same_seed_same_folds() {
        let a = kfold_split(50, 5, &mut RngStream::new(9, 0)).unwrap();
        let b = kfold_split(50, 5, &mut RngStream::new(9, 0)).unwrap();
        assert_eq!(a, b);
    }

    fn pair(x: &str, y: &str, r: RelationLabel) -> LabeledPair {
        LabeledPair { x: x.into(), y: y.into(), r }
    }

    fn universe() -> (Vec<LabeledPair>, Vec<(String, String)>) {
        let related: Vec<LabeledPair> =
            (0..40).map(|i| pair(&format!("g{i}"), &format!("d{i}"), RelationLabel::DiseaseGene)).collect();
        let mut co: Vec<(String, String)> = related.iter().map(|p| (p.x.clone(), p.y.clone())).collect();
        co.extend((0..200).map(|i| (format!("g{i}"), format!("c{i}"))));
        (related, co)
    }

    #[test]
    fn minibatch_composition() {
        let (related, co) = universe();
        let split = split_pairs(&related, &co, &PairSplitConfig::default(), &mut RngStream::new(3, 0)).unwrap();
        let mb = sample_minibatch(&split.train, &split.pool, 512, 448, &mut RngStream::new(4, 0)).unwrap();
        assert_eq!(mb.iter().filter(|p| p.r.is_positive()).count(), 64);
        assert_eq!(mb.iter().filter(|p| !p.r.is_positive()).count(), 448);
        let mb = sample_minibatch(&split.train, &split.pool, 16, 0, &mut RngStream::new(4, 0)).unwrap();
        assert!(mb.iter().all(|p| p.r.is_positive()));
        assert!(sample_minibatch(&split.train, &split.pool, 4, 5, &mut RngStream::new(4, 0)).is_err());
    }

    #[test]
    fn pool_never_touches_evaluation_sets() {
        let (related, co) = universe();
        let split = split_pairs(&related, &co, &PairSplitConfig::default(), &mut RngStream::new(3, 0)).unwrap();
        assert_eq!(split.validation.len(), 8);
        assert_eq!(split.test.len(), 8);
        let held: BTreeSet<(String, String)> =
            split.validation.iter().chain(&split.test).map(|p| (p.x.clone(), p.y.clone())).collect();
        let mut rng = RngStream::new(5, 0);
        for _ in 0..2000 {
            let p = split.pool.draw(&mut rng);
            assert!(!held.contains(&(p.x, p.y)));
        }
        assert_eq!(split.pool.len(), 200 - 8);
    }

    #[test]
    fn empty_pools_are_rejected() {
        let empty = NoRelationPool::new(&[], &[]);
        assert!(sample_minibatch(&[], &empty, 4, 2, &mut RngStream::new(1, 0)).is_err());
        let pos = vec![pair("a", "b", RelationLabel::GeneGene)];
        assert!(sample_minibatch(&pos, &empty, 4, 0, &mut RngStream::new(1, 0)).is_ok());
    }
}
