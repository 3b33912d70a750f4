//! End-to-end glue shared by the command-line tool and the experiments:
//! corpus preparation, pair datasets and evaluation of the three pair
//! methods and the mention classifier.

use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::corpus::io::MentionPrediction;
use crate::corpus::dataset::{corpus_entities, corpus_vocab, encode_contexts, masked_contexts};
use crate::corpus::{
    split_pairs, ContextExample, EntityMode, EntityVocab, LabeledMention, LabeledPair, PairSplitConfig, RelationLabel,
    TaggedSentence, Vocabulary, NUM_PAIR_CLASSES,
};
use crate::error::Result;
use crate::exec::ExecMode;
use crate::mention::{predict_mentions, predicted_class, train_mention, MentionConfig};
use crate::metrics::{accuracy, cross_validate, prf, CrossValidation, FoldMetrics, Prf};
use crate::model::ReprParams;
use crate::numeric::RngStream;
use crate::pair::{
    cooccurrence_baseline, default_grid, encode_pairs, pair_prf, pair_probabilities, positive_classes, predict_attention,
    tune_threshold, AttentionParams, CooccurrenceIndex, DecisionThreshold, PairClassifier, PairExample, SentenceIndex,
};

/// A corpus encoded for the representation model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreparedCorpus {
    pub mode: EntityMode,
    pub vocab: Vocabulary,
    pub entities: EntityVocab,
    pub examples: Vec<ContextExample>,
    /// Contexts dropped by the length filter.
    pub too_long: usize,
}

/// Builds the vocabulary and entity table and encodes every context.
pub fn prepare_corpus(
    sentences: &[TaggedSentence],
    mode: EntityMode,
    min_count: usize,
    max_vocab: usize,
) -> Result<PreparedCorpus> {
    let masked = masked_contexts(sentences)?;
    let vocab = corpus_vocab(&masked, min_count, max_vocab)?;
    let entities = corpus_entities(sentences, mode);
    let report = encode_contexts(&masked, &vocab, &entities, mode)?;
    Ok(PreparedCorpus {
        mode,
        vocab,
        entities,
        examples: report.examples,
        too_long: report.too_long,
    })
}

/// Pair-level train, validation and test sets over entity indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairData {
    pub train: Vec<PairExample>,
    pub validation: Vec<PairExample>,
    pub test: Vec<PairExample>,
    /// NO-RELATION candidates for training minibatches.
    pub pool: Vec<(usize, usize)>,
}

/// Splits `related` against the co-occurrence index and maps ids onto
/// `entities`.
pub fn pair_data(
    related: &[LabeledPair],
    cooccurrence: &CooccurrenceIndex,
    entities: &EntityVocab,
    config: &PairSplitConfig,
    rng: &mut RngStream,
) -> Result<PairData> {
    let split = split_pairs(related, &cooccurrence.oriented_pairs(), config, rng)?;
    let pool = split
        .pool
        .pairs()
        .iter()
        .map(|(x, y)| Ok((entities.id(x)?, entities.id(y)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(PairData {
        train: encode_pairs(&split.train, entities)?,
        validation: encode_pairs(&split.validation, entities)?,
        test: encode_pairs(&split.test, entities)?,
        pool,
    })
}

/// Test-set scores at a threshold tuned on the validation set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairEvaluation {
    pub threshold: DecisionThreshold,
    pub test: Prf,
}

fn coords(pairs: &[PairExample]) -> Vec<(usize, usize)> {
    pairs.iter().map(|p| (p.x, p.y)).collect()
}

fn golds(pairs: &[PairExample]) -> Vec<RelationLabel> {
    pairs.iter().map(|p| p.r).collect()
}

/// Validation and test class probabilities of one pair method.
#[derive(Clone, Debug, PartialEq)]
pub struct PairScores {
    pub validation: Vec<Vec<f64>>,
    pub test: Vec<Vec<f64>>,
}

impl PairScores {
    /// Tunes the threshold on validation and scores the test set with it.
    pub fn evaluate(&self, data: &PairData) -> Result<PairEvaluation> {
        let threshold = tune_threshold(&self.validation, &golds(&data.validation), &default_grid())?;
        self.evaluate_at(data, threshold)
    }

    pub fn evaluate_at(&self, data: &PairData, threshold: DecisionThreshold) -> Result<PairEvaluation> {
        Ok(PairEvaluation {
            threshold,
            test: pair_prf(&self.test, &golds(&data.test), threshold.tau)?,
        })
    }
}

/// Validation draws from `rng.derive(0)`, test draws from `rng.derive(1)`.
pub fn latent_pair_scores(
    repr: &ReprParams,
    psi: &PairClassifier,
    data: &PairData,
    n_eval: usize,
    rng: &RngStream,
    mode: ExecMode,
) -> Result<PairScores> {
    Ok(PairScores {
        validation: pair_probabilities(repr, psi, &coords(&data.validation), n_eval, &rng.derive(0), mode)?,
        test: pair_probabilities(repr, psi, &coords(&data.test), n_eval, &rng.derive(1), mode)?,
    })
}

/// Pairs without any sentence score as certain NO-RELATION.
pub fn attention_pair_scores(
    params: &AttentionParams,
    index: &SentenceIndex,
    data: &PairData,
    cap: usize,
    rng: &RngStream,
    mode: ExecMode,
) -> Result<PairScores> {
    let fill = |ps: Vec<Option<Vec<f64>>>| -> Vec<Vec<f64>> {
        ps.into_iter()
            .map(|p| {
                p.unwrap_or_else(|| {
                    let mut v = vec![0.0; NUM_PAIR_CLASSES];
                    v[0] = 1.0;
                    v
                })
            })
            .collect()
    };
    Ok(PairScores {
        validation: fill(predict_attention(params, index, &coords(&data.validation), cap, &rng.derive(0), mode)?),
        test: fill(predict_attention(params, index, &coords(&data.test), cap, &rng.derive(1), mode)?),
    })
}

pub fn evaluate_latent_pairs(
    repr: &ReprParams,
    psi: &PairClassifier,
    data: &PairData,
    n_eval: usize,
    rng: &RngStream,
    mode: ExecMode,
) -> Result<PairEvaluation> {
    latent_pair_scores(repr, psi, data, n_eval, rng, mode)?.evaluate(data)
}

pub fn evaluate_attention(
    params: &AttentionParams,
    index: &SentenceIndex,
    data: &PairData,
    cap: usize,
    rng: &RngStream,
    mode: ExecMode,
) -> Result<PairEvaluation> {
    attention_pair_scores(params, index, data, cap, rng, mode)?.evaluate(data)
}

/// Co-occurrence labels for the test set.
pub fn cooccurrence_predictions(index: &CooccurrenceIndex, entities: &EntityVocab, data: &PairData) -> Vec<RelationLabel> {
    let name = |i: usize| entities.name(i).unwrap_or_default().to_string();
    let pairs: Vec<(String, String)> = data.test.iter().map(|p| (name(p.x), name(p.y))).collect();
    cooccurrence_baseline(&pairs, index)
}

pub fn evaluate_cooccurrence(index: &CooccurrenceIndex, entities: &EntityVocab, data: &PairData) -> Result<Prf> {
    let pred: Vec<usize> = cooccurrence_predictions(index, entities, data).iter().map(|l| l.id()).collect();
    let gold: Vec<usize> = data.test.iter().map(|p| p.r.id()).collect();
    prf(&pred, &gold, &positive_classes())
}

#[derive(Clone, Debug)]
pub struct MentionCrossValidation {
    pub metrics: CrossValidation,
    /// Held-out predictions of every fold, ordered by fold then example.
    pub predictions: Vec<MentionPrediction>,
}

/// `k`-fold cross-validation of the mention classifier; each fold fine-tunes
/// its own copy of `repr`. Folds run one after another; parallelism is used
/// inside each fold.
pub fn mention_cross_validation(
    mentions: &[LabeledMention],
    repr: &ReprParams,
    config: &MentionConfig,
    k: usize,
    rng: &RngStream,
) -> Result<MentionCrossValidation> {
    let predictions = Mutex::new(Vec::new());
    let metrics = cross_validate(mentions.len(), k, rng, ExecMode::Sequential, |fold, train, test_idx, fold_rng| {
        let train: Vec<LabeledMention> = train.iter().map(|&i| mentions[i].clone()).collect();
        let test: Vec<LabeledMention> = test_idx.iter().map(|&i| mentions[i].clone()).collect();
        let trained = train_mention(&train, repr, config, &fold_rng.derive(0))?;
        let probs = predict_mentions(
            &trained.repr,
            &trained.classifier,
            &test,
            config.n_eval,
            &fold_rng.derive(1),
            config.exec,
        )?;
        let pred: Vec<usize> = probs.iter().map(|p| predicted_class(p)).collect();
        let gold: Vec<usize> = test.iter().map(|m| m.r).collect();
        let rows = test_idx.iter().zip(&probs).map(|(&i, p)| MentionPrediction {
            fold,
            example_index: i,
            gold: mentions[i].r,
            p_positive: p.get(1).copied().unwrap_or(0.0),
        });
        predictions.lock().expect("prediction buffer").extend(rows);
        Ok(FoldMetrics {
            prf: prf(&pred, &gold, &[1])?,
            accuracy: accuracy(&pred, &gold)?,
        })
    })?;
    let mut predictions = predictions.into_inner().expect("prediction buffer");
    predictions.sort_by_key(|p| (p.fold, p.example_index));
    Ok(MentionCrossValidation { metrics, predictions })
}
