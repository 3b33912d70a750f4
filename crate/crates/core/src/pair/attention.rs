//! Attention baseline: each sentence of a pair is encoded by an LSTM (final
//! state), the encodings are pooled by softmax attention and a feedforward
//! head predicts the relation.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index::sample as sample_indices;
use serde::{Deserialize, Serialize};

use super::PairExample;
use crate::corpus::{Context, ContextExample, RelationLabel, NUM_PAIR_CLASSES};
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::model::checkpoint::{assign_arrays, load_params, save_params};
use crate::model::train::StepRecord;
use crate::numeric::linalg::dot;
use crate::numeric::lstm::{embed_steps, embed_steps_backward, lstm_backward_batch, lstm_forward_batch, SequenceBatch};
use crate::numeric::ops::{log_sum_exp, softmax, softmax_in_place};
use crate::numeric::params::{join, uniform_init};
use crate::numeric::{lstm_step, Activation, AdamConfig, AdamState, Array, FeedForward, LstmParams, LstmState, ParamSet, RngStream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttentionConfig {
    pub hidden: usize,
    pub dim: usize,
    /// Pairs per minibatch.
    pub batch_size: usize,
    pub no_relation_quota: usize,
    /// At most this many sentences of a pair are encoded, sampled without
    /// replacement when a pair has more.
    pub sentences_per_pair: usize,
    pub learning_rate: f64,
    pub iterations: u64,
    pub chunk_size: usize,
    pub log_every: u64,
    pub exec: ExecMode,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        AttentionConfig {
            hidden: 128,
            dim: 300,
            batch_size: 100,
            no_relation_quota: 88,
            sentences_per_pair: 50,
            learning_rate: 5e-6,
            iterations: 1_000_000,
            chunk_size: 16,
            log_every: 100,
            exec: ExecMode::default(),
        }
    }
}

impl AttentionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.dim == 0 || self.batch_size == 0 || self.chunk_size == 0 || self.sentences_per_pair == 0 {
            return Err(Error::invalid("attention sizes, batch_size, chunk_size and sentences_per_pair must be positive"));
        }
        if self.no_relation_quota > self.batch_size {
            return Err(Error::invalid("no_relation_quota exceeds batch_size"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams {
    /// `V x d`, separate from the representation model.
    pub tok_emb: Array,
    pub lstm: LstmParams,
    /// Attention scores are `score . encoding`.
    pub score: Array,
    /// `H -> H -> 5`.
    pub head: FeedForward,
}

const ATTENTION_KIND: &str = "attention-baseline";

impl AttentionParams {
    pub fn new(vocab_size: usize, dim: usize, hidden: usize, rng: &mut RngStream) -> Self {
        AttentionParams {
            tok_emb: uniform_init(&[vocab_size, dim], dim, rng),
            lstm: LstmParams::new(dim, hidden, rng),
            score: uniform_init(&[hidden], hidden, rng),
            head: FeedForward::new(&[hidden, hidden, NUM_PAIR_CLASSES], Activation::Relu, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.lstm.hidden_dim()
    }

    pub fn vocab_size(&self) -> usize {
        self.tok_emb.rows()
    }

    /// LSTM final state of one context.
    pub fn encode(&self, c: &Context) -> Result<Array> {
        c.validate(self.vocab_size())?;
        let mut state = LstmState::zeros(self.hidden());
        for &t in &c.token_ids {
            state = lstm_step(self.tok_emb.row(t), &state, &self.lstm)?;
        }
        Ok(state.hidden)
    }

    /// Class probabilities for a pair from its contexts.
    pub fn probabilities(&self, contexts: &[&Context]) -> Result<(Vec<f64>, Vec<f64>)> {
        let enc = contexts.iter().map(|c| self.encode(c)).collect::<Result<Vec<_>>>()?;
        let pooled = attention_pool(&enc, &self.score)?;
        let mut p = self.head.forward(pooled.output.data())?;
        softmax_in_place(&mut p);
        Ok((p, pooled.weights))
    }

    pub fn save(&self, path: &Path, config: &AttentionConfig) -> Result<()> {
        save_params(path, ATTENTION_KIND, &(config, self.vocab_size()), self)
    }

    pub fn load(path: &Path) -> Result<(Self, AttentionConfig)> {
        let ((config, vocab), arrays): ((AttentionConfig, usize), _) = load_params(path, ATTENTION_KIND)?;
        let mut p = AttentionParams::new(vocab, config.dim, config.hidden, &mut RngStream::new(0, 0));
        assign_arrays(&mut p, arrays)?;
        Ok((p, config))
    }
}

impl ParamSet for AttentionParams {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Array)>) {
        out.push((join(prefix, "tok_emb"), &self.tok_emb));
        self.lstm.visit(&join(prefix, "lstm"), out);
        out.push((join(prefix, "score"), &self.score));
        self.head.visit(&join(prefix, "head"), out);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Array)>) {
        out.push((join(prefix, "tok_emb"), &mut self.tok_emb));
        self.lstm.visit_mut(&join(prefix, "lstm"), out);
        out.push((join(prefix, "score"), &mut self.score));
        self.head.visit_mut(&join(prefix, "head"), out);
    }
}

/// Attention-weighted sum of sentence encodings.
#[derive(Clone, Debug, PartialEq)]
pub struct Pooled {
    pub output: Array,
    pub weights: Vec<f64>,
}

/// `softmax(score . enc_i)`-weighted sum of `encodings`.
pub fn attention_pool(encodings: &[Array], score: &Array) -> Result<Pooled> {
    if encodings.is_empty() {
        return Err(Error::invalid("attention needs at least one sentence"));
    }
    let h = score.len();
    if encodings.iter().any(|e| e.len() != h) {
        return Err(Error::invalid("encoding width does not match the attention vector"));
    }
    let scores: Vec<f64> = encodings.iter().map(|e| dot(e.data(), score.data())).collect();
    let weights = softmax(&scores);
    let mut out = vec![0.0; h];
    for (e, w) in encodings.iter().zip(&weights) {
        for (o, v) in out.iter_mut().zip(e.data()) {
            *o += w * v;
        }
    }
    Ok(Pooled {
        output: Array::vector(out),
        weights,
    })
}

/// Contexts of each unordered entity pair.
#[derive(Clone, Debug, Default)]
pub struct SentenceIndex {
    contexts: BTreeMap<(usize, usize), Vec<Context>>,
}

fn key(x: usize, y: usize) -> (usize, usize) {
    (x.min(y), x.max(y))
}

impl SentenceIndex {
    pub fn from_examples(examples: &[ContextExample]) -> Self {
        let mut contexts: BTreeMap<(usize, usize), Vec<Context>> = BTreeMap::new();
        for e in examples {
            contexts.entry(key(e.x, e.y)).or_default().push(e.context.clone());
        }
        SentenceIndex { contexts }
    }

    pub fn get(&self, x: usize, y: usize) -> &[Context] {
        self.contexts.get(&key(x, y)).map_or(&[], Vec::as_slice)
    }

    pub fn pair_count(&self) -> usize {
        self.contexts.len()
    }
}

/// At most `cap` contexts of a pair, sampled without replacement.
fn pick_contexts<'a>(all: &'a [Context], cap: usize, rng: &mut RngStream) -> Vec<&'a Context> {
    if all.len() <= cap {
        all.iter().collect()
    } else {
        let mut idx = sample_indices(rng, all.len(), cap).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| &all[i]).collect()
    }
}

/// Batched loss over pairs; `groups[b]` lists pair `b`'s contexts. Returns
/// class probabilities per pair and, with `grad`, accumulates the gradient
/// of `loss_scale * sum_b -log p(labels[b])`.
fn attention_batch(
    params: &AttentionParams,
    groups: &[Vec<&Context>],
    labels: Option<&[RelationLabel]>,
    loss_scale: f64,
    grad: Option<&mut AttentionParams>,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let h = params.hidden();
    let mut seqs: Vec<&[usize]> = Vec::new();
    let mut owner = Vec::new();
    for (b, g) in groups.iter().enumerate() {
        if g.is_empty() {
            return Err(Error::invalid("attention needs at least one sentence per pair"));
        }
        for c in g {
            c.validate(params.vocab_size())?;
            seqs.push(&c.token_ids);
            owner.push(b);
        }
    }
    let lengths: Vec<usize> = seqs.iter().map(|s| s.len()).collect();
    let batch = SequenceBatch::new(&lengths);
    let sorted: Vec<&[usize]> = batch.order.iter().map(|&i| seqs[i]).collect();
    let inputs = embed_steps(&params.tok_emb, &sorted, &batch, false);
    let (out, trace) = lstm_forward_batch(&params.lstm, &inputs, sorted.len());
    // position of caller sequence i in sorted order
    let mut pos = vec![0; seqs.len()];
    for (k, &i) in batch.order.iter().enumerate() {
        pos[i] = k;
    }
    let enc = |i: usize| out.final_hidden.row(pos[i]);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); groups.len()];
    for (i, &b) in owner.iter().enumerate() {
        members[b].push(i);
    }
    let mut weights = Vec::with_capacity(seqs.len());
    let mut pooled = Vec::with_capacity(groups.len() * h);
    for m in &members {
        let scores: Vec<f64> = m.iter().map(|&i| dot(enc(i), params.score.data())).collect();
        let w = softmax(&scores);
        let mut p = vec![0.0; h];
        for (&i, wi) in m.iter().zip(&w) {
            for (o, v) in p.iter_mut().zip(enc(i)) {
                *o += wi * v;
            }
        }
        pooled.extend(p);
        weights.extend(w);
    }
    let pooled = Array::matrix(groups.len(), h, pooled);
    let (logits, ff) = params.head.forward_batch(pooled.clone());
    let mut probs = Vec::with_capacity(groups.len());
    let mut loss = Vec::new();
    for b in 0..groups.len() {
        let row = logits.row(b);
        if let Some(l) = labels {
            loss.push(log_sum_exp(row) - row[l[b].id()]);
        }
        probs.push(softmax(row));
    }
    if let (Some(grad), Some(labels)) = (grad, labels) {
        let mut dl = Vec::with_capacity(groups.len() * NUM_PAIR_CLASSES);
        for (p, l) in probs.iter().zip(labels) {
            let mut row = p.clone();
            row[l.id()] -= 1.0;
            dl.extend(row.into_iter().map(|v| v * loss_scale));
        }
        let dpooled = params.head.backward_batch(&ff, Array::matrix(groups.len(), NUM_PAIR_CLASSES, dl), &mut grad.head);
        let mut dfinal = Array::zeros(&[seqs.len(), h]);
        let mut wi = 0;
        for (b, m) in members.iter().enumerate() {
            let dp = dpooled.row(b);
            let w = &weights[wi..wi + m.len()];
            wi += m.len();
            let dw: Vec<f64> = m.iter().map(|&i| dot(dp, enc(i))).collect();
            let s: f64 = w.iter().zip(&dw).map(|(a, b)| a * b).sum();
            for (k, &i) in m.iter().enumerate() {
                let ds = w[k] * (dw[k] - s);
                let e = enc(i);
                for (g, v) in grad.score.data_mut().iter_mut().zip(e) {
                    *g += ds * v;
                }
                let row = dfinal.row_mut(pos[i]);
                for j in 0..h {
                    row[j] = w[k] * dp[j] + ds * params.score.data()[j];
                }
            }
        }
        let d_in = lstm_backward_batch(&params.lstm, &trace, None, Some(&dfinal), &mut grad.lstm);
        embed_steps_backward(&d_in, &sorted, false, &mut grad.tok_emb);
    }
    Ok((probs, loss))
}

#[derive(Clone, Debug)]
pub struct AttentionTraining {
    pub params: AttentionParams,
    pub log: Vec<StepRecord>,
    /// Training pairs dropped because no sentence mentions them.
    pub excluded: usize,
}

/// Adam descent on the cross-entropy of pooled predictions. Minibatches mix
/// labelled pairs and `no_relation_quota` pool pairs like `train_pair`.
pub fn train_attention(
    labelled: &[PairExample],
    pool: &[(usize, usize)],
    index: &SentenceIndex,
    vocab_size: usize,
    config: &AttentionConfig,
    rng: &RngStream,
) -> Result<AttentionTraining> {
    config.validate()?;
    let has = |x: usize, y: usize| !index.get(x, y).is_empty();
    let kept: Vec<PairExample> = labelled.iter().copied().filter(|e| has(e.x, e.y)).collect();
    let kept_pool: Vec<(usize, usize)> = pool.iter().copied().filter(|&(x, y)| has(x, y)).collect();
    let excluded = labelled.len() - kept.len() + pool.len() - kept_pool.len();
    let quota = config.no_relation_quota;
    if config.batch_size > quota && kept.is_empty() {
        return Err(Error::invalid("no labelled pair has a sentence"));
    }
    if quota > 0 && kept_pool.is_empty() {
        return Err(Error::invalid("no NO-RELATION pool pair has a sentence"));
    }
    let mut params = AttentionParams::new(vocab_size, config.dim, config.hidden, &mut rng.derive(0));
    let mut adam = AdamState::new(AdamConfig::with_learning_rate(config.learning_rate), &params);
    let steps = rng.derive(1);
    let scale = 1.0 / config.batch_size as f64;
    let mut log = Vec::new();
    for it in 0..config.iterations {
        let mut pick = steps.derive2(it, u64::MAX);
        let mut batch = Vec::with_capacity(config.batch_size);
        for _ in 0..config.batch_size - quota {
            batch.push(kept[pick.below(kept.len())]);
        }
        for _ in 0..quota {
            let (x, y) = kept_pool[pick.below(kept_pool.len())];
            batch.push(PairExample {
                x,
                y,
                r: RelationLabel::NoRelation,
            });
        }
        let groups: Vec<Vec<&Context>> = batch
            .iter()
            .enumerate()
            .map(|(slot, e)| {
                pick_contexts(index.get(e.x, e.y), config.sentences_per_pair, &mut steps.derive2(it, slot as u64))
            })
            .collect();
        let labels: Vec<RelationLabel> = batch.iter().map(|e| e.r).collect();
        let idx: Vec<usize> = (0..batch.len()).collect();
        let p = &params;
        let parts = exec::map_chunks(config.exec, &idx, config.chunk_size, |_, chunk| {
            let g: Vec<Vec<&Context>> = chunk.iter().map(|&i| groups[i].clone()).collect();
            let l: Vec<RelationLabel> = chunk.iter().map(|&i| labels[i]).collect();
            let mut grad = p.zeros_like();
            attention_batch(p, &g, Some(&l), scale, Some(&mut grad)).map(|(_, loss)| (loss, grad))
        });
        let mut grad = params.zeros_like();
        let mut objective = 0.0;
        for part in parts {
            let (loss, g) = part?;
            objective -= loss.iter().sum::<f64>();
            grad.accumulate(&g);
        }
        objective *= scale;
        if !objective.is_finite() {
            return Err(Error::Divergence {
                iteration: it,
                detail: format!("non-finite attention objective {objective}"),
            });
        }
        let grad_norm = grad.l2_norm();
        adam.update(&mut params, &grad).map_err(|e| match e {
            Error::Divergence { detail, .. } => Error::Divergence { iteration: it, detail },
            other => other,
        })?;
        if it % config.log_every.max(1) == 0 || it + 1 == config.iterations {
            log.push(StepRecord {
                iteration: it,
                objective,
                grad_norm,
            });
        }
    }
    Ok(AttentionTraining { params, log, excluded })
}

/// Class probabilities per pair, `None` for pairs without sentences. Pair
/// `i` samples its contexts from `rng.derive(i)` when it has more than `cap`.
pub fn predict_attention(
    params: &AttentionParams,
    index: &SentenceIndex,
    pairs: &[(usize, usize)],
    cap: usize,
    rng: &RngStream,
    mode: ExecMode,
) -> Result<Vec<Option<Vec<f64>>>> {
    if cap == 0 {
        return Err(Error::invalid("sentence cap must be positive"));
    }
    let idx: Vec<usize> = (0..pairs.len()).collect();
    let parts = exec::map_chunks(mode, &idx, 32, |_, chunk| -> Result<Vec<Option<Vec<f64>>>> {
        let mut groups = Vec::new();
        let mut slots = Vec::new();
        for (k, &i) in chunk.iter().enumerate() {
            let (x, y) = pairs[i];
            let all = index.get(x, y);
            if !all.is_empty() {
                groups.push(pick_contexts(all, cap, &mut rng.derive(i as u64)));
                slots.push(k);
            }
        }
        let mut out = vec![None; chunk.len()];
        if !groups.is_empty() {
            let (probs, _) = attention_batch(params, &groups, None, 0.0, None)?;
            for (k, p) in slots.into_iter().zip(probs) {
                out[k] = Some(p);
            }
        }
        Ok(out)
    });
    let mut all = Vec::with_capacity(pairs.len());
    for p in parts {
        all.extend(p?);
    }
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::{contexts, V};
    use crate::numeric::gradcheck::{compare, finite_difference};

    fn params() -> AttentionParams {
        let mut rng = RngStream::new(1, 0);
        let mut p = AttentionParams::new(V, 4, 6, &mut rng);
        for (_, a) in p.arrays_mut() {
            for v in a.data_mut() {
                *v += 0.1 * rng.normal();
            }
        }
        p
    }

    #[test]
    fn pooling_edge_cases() {
        let a = Array::vector(vec![1.0, -2.0, 0.5]);
        let score = Array::vector(vec![0.3, 0.1, -0.7]);
        let one = attention_pool(std::slice::from_ref(&a), &score).unwrap();
        assert_eq!(one.output, a);
        let same = attention_pool(&[a.clone(), a.clone(), a.clone()], &score).unwrap();
        for (x, y) in same.output.data().iter().zip(a.data()) {
            assert!((x - y).abs() < 1e-15);
        }
        let b = Array::vector(vec![0.0, 4.0, 1.0]);
        let mixed = attention_pool(&[a, b], &score).unwrap();
        assert!((mixed.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(mixed.weights.iter().all(|&w| w >= 0.0));
        assert!(attention_pool(&[], &score).is_err());
    }

    #[test]
    fn batch_matches_reference() {
        let p = params();
        let cs = contexts();
        let groups = vec![vec![&cs[0], &cs[1]], vec![&cs[2]], vec![&cs[3], &cs[0], &cs[2]]];
        let (probs, _) = attention_batch(&p, &groups, None, 0.0, None).unwrap();
        for (g, got) in groups.iter().zip(&probs) {
            let (want, w) = p.probabilities(g).unwrap();
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (a, b) in want.iter().zip(got) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let p = params();
        let cs = contexts();
        let groups = vec![vec![&cs[0], &cs[1]], vec![&cs[2]], vec![&cs[3], &cs[0], &cs[2]]];
        let labels = [RelationLabel::DiseaseGene, RelationLabel::NoRelation, RelationLabel::GeneGene];
        let mut g = p.zeros_like();
        attention_batch(&p, &groups, Some(&labels), 1.0, Some(&mut g)).unwrap();
        let f = finite_difference(&p, |q| {
            attention_batch(q, &groups, Some(&labels), 1.0, None).unwrap().1.iter().sum()
        });
        for (name, err) in compare(&g, &f) {
            assert!(err < 1e-4, "{name}: {err}");
        }
    }

    #[test]
    fn training_is_repeatable_and_reports_exclusions() {
        let cs = contexts();
        let examples: Vec<ContextExample> = cs
            .iter()
            .enumerate()
            .map(|(i, c)| ContextExample {
                x: i % 2,
                y: 2,
                context: c.clone(),
                sentence: i,
            })
            .collect();
        let index = SentenceIndex::from_examples(&examples);
        let labelled = [
            PairExample { x: 0, y: 2, r: RelationLabel::GeneGene },
            PairExample { x: 3, y: 4, r: RelationLabel::GeneGene },
        ];
        let config = AttentionConfig {
            hidden: 6,
            dim: 4,
            batch_size: 4,
            no_relation_quota: 2,
            sentences_per_pair: 1,
            learning_rate: 0.01,
            iterations: 20,
            exec: ExecMode::Sequential,
            ..AttentionConfig::default()
        };
        let rng = RngStream::new(3, 0);
        let a = train_attention(&labelled, &[(2, 1)], &index, V, &config, &rng).unwrap();
        let b = train_attention(&labelled, &[(2, 1)], &index, V, &config, &rng).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.excluded, 1);
        let preds = predict_attention(&a.params, &index, &[(2, 0), (5, 6)], 3, &rng, ExecMode::Sequential).unwrap();
        assert!(preds[0].is_some() && preds[1].is_none());
    }
}
