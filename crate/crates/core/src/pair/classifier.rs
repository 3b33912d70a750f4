use std::path::Path;

use serde::{Deserialize, Serialize};

use super::threshold::threshold_label;
use super::PairExample;
use crate::corpus::{RelationLabel, NUM_PAIR_CLASSES};
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::model::checkpoint::{assign_arrays, load_params, save_params};
use crate::model::engine::{prior_backward, prior_forward};
use crate::model::train::StepRecord;
use crate::model::{prior_z_with_noise, ReprParams};
use crate::numeric::ops::{log_sum_exp, softmax_in_place};
use crate::numeric::params::join;
use crate::numeric::{AdamConfig, AdamState, Array, Linear, ParamSet, RngStream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PairConfig {
    /// Prior samples per pair during training.
    pub samples: usize,
    pub batch_size: usize,
    /// NO-RELATION pairs per minibatch, drawn from the pool.
    pub no_relation_quota: usize,
    pub learning_rate: f64,
    pub iterations: u64,
    /// Prior samples averaged at prediction time.
    pub n_eval: usize,
    pub chunk_size: usize,
    pub log_every: u64,
    pub exec: ExecMode,
}

impl Default for PairConfig {
    fn default() -> Self {
        PairConfig {
            samples: 4,
            batch_size: 512,
            no_relation_quota: 448,
            learning_rate: 1e-4,
            iterations: 100_000,
            n_eval: 16,
            chunk_size: 64,
            log_every: 100,
            exec: ExecMode::default(),
        }
    }
}

impl PairConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 || self.n_eval == 0 || self.batch_size == 0 || self.chunk_size == 0 {
            return Err(Error::invalid("samples, n_eval, batch_size and chunk_size must be positive"));
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

/// `softmax(W2 (relu(W1 z + b1) + z) + b2)` over the five pair classes.
#[derive(Clone, Debug, PartialEq)]
pub struct PairClassifier {
    pub hidden: Linear,
    pub output: Linear,
}

const PAIR_KIND: &str = "pair-classifier";

impl PairClassifier {
    pub fn new(dim: usize, rng: &mut RngStream) -> Self {
        PairClassifier {
            hidden: Linear::new(dim, dim, rng),
            output: Linear::new(dim, NUM_PAIR_CLASSES, rng),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        PairClassifier {
            hidden: Linear::zeros(dim, dim),
            output: Linear::zeros(dim, NUM_PAIR_CLASSES),
        }
    }

    pub fn dim(&self) -> usize {
        self.hidden.input_dim()
    }

    pub fn logits(&self, z: &[f64]) -> Result<Vec<f64>> {
        let mut a = self.hidden.forward(z)?;
        for (v, zi) in a.iter_mut().zip(z) {
            *v = v.max(0.0) + zi;
        }
        self.output.forward(&a)
    }

    pub fn probabilities(&self, z: &[f64]) -> Result<Vec<f64>> {
        let mut p = self.logits(z)?;
        softmax_in_place(&mut p);
        Ok(p)
    }

    fn forward_batch(&self, z: &Array) -> (Array, Array, Array) {
        let pre = self.hidden.forward_batch(z);
        let mut a = pre.clone();
        for (v, zi) in a.data_mut().iter_mut().zip(z.data()) {
            *v = v.max(0.0) + zi;
        }
        let logits = self.output.forward_batch(&a);
        (logits, pre, a)
    }

    /// Accumulates gradients and returns `dL/dz`.
    fn backward_batch(&self, z: &Array, pre: &Array, a: &Array, dlogits: &Array, grad: &mut PairClassifier) -> Array {
        let da = self.output.backward_batch(a, dlogits, &mut grad.output);
        let mut dpre = da.clone();
        for (g, p) in dpre.data_mut().iter_mut().zip(pre.data()) {
            if *p <= 0.0 {
                *g = 0.0;
            }
        }
        let mut dz = self.hidden.backward_batch(z, &dpre, &mut grad.hidden);
        dz.add_assign(&da);
        dz
    }

    pub fn save(&self, path: &Path, config: &PairConfig) -> Result<()> {
        save_params(path, PAIR_KIND, config, self)
    }

    pub fn load(path: &Path, dim: usize) -> Result<(Self, PairConfig)> {
        let (config, arrays): (PairConfig, _) = load_params(path, PAIR_KIND)?;
        let mut clf = PairClassifier::zeros(dim);
        assign_arrays(&mut clf, arrays)?;
        Ok((clf, config))
    }
}

impl ParamSet for PairClassifier {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Array)>) {
        self.hidden.visit(&join(prefix, "hidden"), out);
        self.output.visit(&join(prefix, "output"), out);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Array)>) {
        self.hidden.visit_mut(&join(prefix, "hidden"), out);
        self.output.visit_mut(&join(prefix, "output"), out);
    }
}

/// Prior draws for one pair: `u[j]` then `eps[j]` per sample, the order
/// `sample_prior_z` consumes.
#[derive(Clone, Debug, PartialEq)]
pub struct PairNoise {
    pub u: Vec<Vec<f64>>,
    pub eps: Vec<Vec<f64>>,
}

impl PairNoise {
    pub fn draw(dim: usize, samples: usize, rng: &mut RngStream) -> Self {
        let mut u = Vec::with_capacity(samples);
        let mut eps = Vec::with_capacity(samples);
        for _ in 0..samples {
            u.push(rng.normals(dim));
            eps.push(rng.normals(dim));
        }
        PairNoise { u, eps }
    }

    pub fn samples(&self) -> usize {
        self.u.len()
    }
}

/// `(1/K) sum_j log p(r | z_j)`, `z_j` from the prior with fixed noise.
pub fn pair_objective_with_noise(
    params: &ReprParams,
    psi: &PairClassifier,
    ex: &PairExample,
    noise: &PairNoise,
) -> Result<f64> {
    let k = noise.samples();
    if k == 0 {
        return Err(Error::invalid("need at least one prior sample"));
    }
    let mut total = 0.0;
    for j in 0..k {
        let z = prior_z_with_noise(params, ex.x, ex.y, &noise.u[j], &noise.eps[j])?;
        let logits = psi.logits(z.data())?;
        total += logits[ex.r.id()] - log_sum_exp(&logits);
    }
    Ok(total / k as f64)
}

pub fn pair_objective(
    params: &ReprParams,
    psi: &PairClassifier,
    ex: &PairExample,
    k: usize,
    rng: &mut RngStream,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("need at least one prior sample"));
    }
    let noise = PairNoise::draw(params.dim(), k, rng);
    pair_objective_with_noise(params, psi, ex, &noise)
}

fn check_pairs(params: &ReprParams, data: &[PairExample]) -> Result<()> {
    for ex in data {
        params.check_entity(ex.x)?;
        params.check_entity(ex.y)?;
    }
    Ok(())
}

/// Prior latents for every `(pair, draw)`, row `b * K + j`.
fn prior_rows(params: &ReprParams, xs: &[usize], ys: &[usize], noise: &[PairNoise]) -> (Array, crate::model::engine::PriorTrace) {
    let d = params.dim();
    let k = noise[0].samples();
    let mut u = Vec::with_capacity(noise.len() * k * d);
    let mut eps = Vec::with_capacity(noise.len() * k * d);
    for nz in noise {
        for j in 0..k {
            u.extend_from_slice(&nz.u[j]);
            eps.extend_from_slice(&nz.eps[j]);
        }
    }
    let n = noise.len() * k;
    prior_forward(params, xs, ys, k, &Array::matrix(n, d, u), Array::matrix(n, d, eps))
}

/// Batched objective, one value per pair. With gradient buffers,
/// accumulates the gradient of `-loss_scale * sum_b objective_b`.
pub fn pair_batch(
    params: &ReprParams,
    psi: &PairClassifier,
    data: &[PairExample],
    noise: &[PairNoise],
    loss_scale: f64,
    grad_psi: Option<&mut PairClassifier>,
    grad_repr: Option<&mut ReprParams>,
) -> Result<Vec<f64>> {
    if data.is_empty() || noise.len() != data.len() {
        return Err(Error::invalid("need a non-empty batch with one noise record per pair"));
    }
    check_pairs(params, data)?;
    let d = params.dim();
    let k = noise[0].samples();
    if k == 0 || noise.iter().any(|nz| nz.samples() != k || nz.u.iter().chain(&nz.eps).any(|e| e.len() != d)) {
        return Err(Error::invalid("noise records must hold the same number of draws of width d"));
    }
    let xs: Vec<usize> = data.iter().map(|e| e.x).collect();
    let ys: Vec<usize> = data.iter().map(|e| e.y).collect();
    let (z, trace) = prior_rows(params, &xs, &ys, noise);
    let (logits, pre, a) = psi.forward_batch(&z);
    let c = NUM_PAIR_CLASSES;
    let mut objective = vec![0.0; data.len()];
    let mut dlogits = Vec::with_capacity(data.len() * k * c);
    for (b, ex) in data.iter().enumerate() {
        let r = ex.r.id();
        for j in 0..k {
            let mut row = logits.row(b * k + j).to_vec();
            objective[b] += (row[r] - log_sum_exp(&row)) / k as f64;
            softmax_in_place(&mut row);
            row[r] -= 1.0;
            dlogits.extend(row.iter().map(|v| v * loss_scale / k as f64));
        }
    }
    if let Some(gp) = grad_psi {
        let dlogits = Array::matrix(data.len() * k, c, dlogits);
        let dz = psi.backward_batch(&z, &pre, &a, &dlogits, gp);
        if let Some(gr) = grad_repr {
            prior_backward(params, &trace, &xs, &ys, &dz, gr);
        }
    }
    Ok(objective)
}

/// Class probabilities averaged over `n_eval` prior draws for each pair;
/// pair `i` draws from `rng.derive(i)`.
pub fn pair_probabilities(
    params: &ReprParams,
    psi: &PairClassifier,
    pairs: &[(usize, usize)],
    n_eval: usize,
    rng: &RngStream,
    mode: ExecMode,
) -> Result<Vec<Vec<f64>>> {
    if n_eval == 0 {
        return Err(Error::invalid("n_eval must be at least 1"));
    }
    for &(x, y) in pairs {
        params.check_entity(x)?;
        params.check_entity(y)?;
    }
    let d = params.dim();
    let idx: Vec<usize> = (0..pairs.len()).collect();
    let parts = exec::map_chunks(mode, &idx, 64, |_, chunk| {
        let xs: Vec<usize> = chunk.iter().map(|&i| pairs[i].0).collect();
        let ys: Vec<usize> = chunk.iter().map(|&i| pairs[i].1).collect();
        let noise: Vec<PairNoise> = chunk
            .iter()
            .map(|&i| PairNoise::draw(d, n_eval, &mut rng.derive(i as u64)))
            .collect();
        let (z, _) = prior_rows(params, &xs, &ys, &noise);
        let (logits, _, _) = psi.forward_batch(&z);
        (0..chunk.len())
            .map(|b| {
                let mut avg = vec![0.0; NUM_PAIR_CLASSES];
                for j in 0..n_eval {
                    let mut row = logits.row(b * n_eval + j).to_vec();
                    softmax_in_place(&mut row);
                    for (a, p) in avg.iter_mut().zip(&row) {
                        *a += p / n_eval as f64;
                    }
                }
                avg
            })
            .collect::<Vec<_>>()
    });
    Ok(parts.into_iter().flatten().collect())
}

/// Thresholded label for one pair from `n_eval` prior draws.
pub fn predict_pair(
    params: &ReprParams,
    psi: &PairClassifier,
    x: usize,
    y: usize,
    tau: f64,
    n_eval: usize,
    rng: &mut RngStream,
) -> Result<RelationLabel> {
    if n_eval == 0 {
        return Err(Error::invalid("n_eval must be at least 1"));
    }
    let noise = PairNoise::draw(params.dim(), n_eval, rng);
    let mut avg = vec![0.0; NUM_PAIR_CLASSES];
    for j in 0..n_eval {
        let z = prior_z_with_noise(params, x, y, &noise.u[j], &noise.eps[j])?;
        for (a, p) in avg.iter_mut().zip(psi.probabilities(z.data())?) {
            *a += p / n_eval as f64;
        }
    }
    Ok(threshold_label(&avg, tau).0)
}

#[derive(Clone, Debug)]
pub struct PairTraining {
    pub classifier: PairClassifier,
    pub log: Vec<StepRecord>,
}

/// Adam ascent on the pair objective with the representation frozen.
/// Each minibatch holds `batch_size - no_relation_quota` labelled pairs and
/// `no_relation_quota` pool pairs, drawn with replacement.
pub fn train_pair(
    labelled: &[PairExample],
    pool: &[(usize, usize)],
    repr: &ReprParams,
    config: &PairConfig,
    rng: &RngStream,
) -> Result<PairTraining> {
    config.validate()?;
    let quota = config.no_relation_quota;
    if config.batch_size > quota && labelled.is_empty() {
        return Err(Error::invalid("no labelled pairs to train on"));
    }
    if quota > 0 && pool.is_empty() {
        return Err(Error::invalid("NO-RELATION pool is empty"));
    }
    check_pairs(repr, labelled)?;
    let d = repr.dim();
    let mut psi = PairClassifier::new(d, &mut rng.derive(0));
    let mut adam = AdamState::new(AdamConfig::with_learning_rate(config.learning_rate), &psi);
    let steps = rng.derive(1);
    let scale = 1.0 / config.batch_size as f64;
    let mut log = Vec::new();
    for it in 0..config.iterations {
        let mut pick = steps.derive2(it, u64::MAX);
        let mut batch = Vec::with_capacity(config.batch_size);
        for _ in 0..config.batch_size - quota {
            batch.push(labelled[pick.below(labelled.len())]);
        }
        for _ in 0..quota {
            let (x, y) = pool[pick.below(pool.len())];
            batch.push(PairExample {
                x,
                y,
                r: RelationLabel::NoRelation,
            });
        }
        let noise: Vec<PairNoise> = (0..batch.len())
            .map(|slot| PairNoise::draw(d, config.samples, &mut steps.derive2(it, slot as u64)))
            .collect();
        let idx: Vec<usize> = (0..batch.len()).collect();
        let psi_ref = &psi;
        let parts = exec::map_chunks(config.exec, &idx, config.chunk_size, |_, chunk| {
            let b: Vec<PairExample> = chunk.iter().map(|&i| batch[i]).collect();
            let nz: Vec<PairNoise> = chunk.iter().map(|&i| noise[i].clone()).collect();
            let mut g = psi_ref.zeros_like();
            pair_batch(repr, psi_ref, &b, &nz, scale, Some(&mut g), None).map(|o| (o, g))
        });
        let mut grad = psi.zeros_like();
        let mut objective = 0.0;
        for part in parts {
            let (o, g) = part?;
            objective += o.iter().sum::<f64>();
            grad.accumulate(&g);
        }
        objective *= scale;
        if !objective.is_finite() {
            return Err(Error::Divergence {
                iteration: it,
                detail: format!("non-finite pair objective {objective}"),
            });
        }
        let grad_norm = grad.l2_norm();
        adam.update(&mut psi, &grad).map_err(|e| match e {
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
    Ok(PairTraining { classifier: psi, log })
}
