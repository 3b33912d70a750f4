//! Mention-level relation classification from posterior latents.
//!
//! A single softmax layer reads `z` drawn through `q(u | x, y, c)` and
//! `p(z | x, y, u)`. Training maximises the mean log-probability over `K`
//! samples and can fine-tune the representation model jointly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Context, LabeledMention};
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::model::checkpoint::{assign_arrays, load_params, save_params};
use crate::model::engine::{gather_noise, posterior_forward, posterior_backward, validate_rows, Row, Sorted};
use crate::model::train::StepRecord;
use crate::model::{inference_latent_params, prior_z_with_noise, ReprParams};
use crate::numeric::ops::{argmax, log_sum_exp, softmax_in_place};
use crate::numeric::params::join;
use crate::numeric::{gaussian_reparameterize, AdamConfig, AdamState, Array, Linear, ParamSet, RngStream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MentionConfig {
    /// Posterior samples per example during training.
    pub samples: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub iterations: u64,
    /// Also update the representation model.
    pub fine_tune: bool,
    /// Posterior samples averaged at prediction time.
    pub n_eval: usize,
    pub classes: usize,
    pub chunk_size: usize,
    pub log_every: u64,
    pub exec: ExecMode,
}

impl Default for MentionConfig {
    fn default() -> Self {
        MentionConfig {
            samples: 4,
            batch_size: 8,
            learning_rate: 1e-5,
            iterations: 3000,
            fine_tune: true,
            n_eval: 16,
            classes: 2,
            chunk_size: 8,
            log_every: 50,
            exec: ExecMode::default(),
        }
    }
}

impl MentionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 || self.n_eval == 0 {
            return Err(Error::invalid("samples and n_eval must be at least 1"));
        }
        if self.batch_size == 0 || self.chunk_size == 0 || self.classes < 2 {
            return Err(Error::invalid("batch_size and chunk_size must be positive and classes at least 2"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        Ok(())
    }
}

/// Softmax layer `d -> classes`.
#[derive(Clone, Debug, PartialEq)]
pub struct MentionClassifier {
    pub layer: Linear,
}

impl MentionClassifier {
    pub fn new(dim: usize, classes: usize, rng: &mut RngStream) -> Self {
        MentionClassifier {
            layer: Linear::new(dim, classes, rng),
        }
    }

    pub fn zeros(dim: usize, classes: usize) -> Self {
        MentionClassifier {
            layer: Linear::zeros(dim, classes),
        }
    }

    pub fn classes(&self) -> usize {
        self.layer.output_dim()
    }

    pub fn probabilities(&self, z: &[f64]) -> Result<Vec<f64>> {
        let mut p = self.layer.forward(z)?;
        softmax_in_place(&mut p);
        Ok(p)
    }

    pub fn save(&self, path: &Path, config: &MentionConfig) -> Result<()> {
        save_params(path, MENTION_KIND, config, self)
    }

    pub fn load(path: &Path, dim: usize) -> Result<(Self, MentionConfig)> {
        let (config, arrays): (MentionConfig, _) = load_params(path, MENTION_KIND)?;
        let mut clf = MentionClassifier::zeros(dim, config.classes);
        assign_arrays(&mut clf, arrays)?;
        Ok((clf, config))
    }
}

const MENTION_KIND: &str = "mention-classifier";

impl ParamSet for MentionClassifier {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Array)>) {
        self.layer.visit(&join(prefix, "layer"), out);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Array)>) {
        self.layer.visit_mut(&join(prefix, "layer"), out);
    }
}

/// Noise for `K` posterior draws: `eps_u[j]` then `eps_z[j]` per draw, the
/// same order `posterior_z_samples` consumes.
#[derive(Clone, Debug, PartialEq)]
pub struct MentionNoise {
    pub eps_u: Vec<Vec<f64>>,
    pub eps_z: Vec<Vec<f64>>,
}

impl MentionNoise {
    pub fn draw(dim: usize, samples: usize, rng: &mut RngStream) -> Self {
        let mut eps_u = Vec::with_capacity(samples);
        let mut eps_z = Vec::with_capacity(samples);
        for _ in 0..samples {
            eps_u.push(rng.normals(dim));
            eps_z.push(rng.normals(dim));
        }
        MentionNoise { eps_u, eps_z }
    }

    pub fn samples(&self) -> usize {
        self.eps_u.len()
    }
}

fn check_label(clf: &MentionClassifier, r: usize) -> Result<()> {
    if r >= clf.classes() {
        return Err(Error::invalid(format!("label {r} outside {} classes", clf.classes())));
    }
    Ok(())
}

/// `(1/K) sum_j log p(r | z_j)` with the posterior draws fixed by `noise`.
pub fn mention_objective_with_noise(
    params: &ReprParams,
    clf: &MentionClassifier,
    m: &LabeledMention,
    noise: &MentionNoise,
) -> Result<f64> {
    check_label(clf, m.r)?;
    let k = noise.samples();
    if k == 0 {
        return Err(Error::invalid("need at least one posterior sample"));
    }
    let q = inference_latent_params(params, m.x, m.y, &m.context)?;
    let mut total = 0.0;
    for j in 0..k {
        let u = gaussian_reparameterize(&q, &noise.eps_u[j])?;
        let z = prior_z_with_noise(params, m.x, m.y, u.data(), &noise.eps_z[j])?;
        let logits = clf.layer.forward(z.data())?;
        total += logits[m.r] - log_sum_exp(&logits);
    }
    Ok(total / k as f64)
}

/// Monte Carlo estimate of `E_q[log p(r | z)]` from `k` fresh draws.
pub fn mention_objective(
    params: &ReprParams,
    clf: &MentionClassifier,
    m: &LabeledMention,
    k: usize,
    rng: &mut RngStream,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("need at least one posterior sample"));
    }
    let noise = MentionNoise::draw(params.dim(), k, rng);
    mention_objective_with_noise(params, clf, m, &noise)
}

fn rows_of(data: &[LabeledMention]) -> Vec<Row<'_>> {
    data.iter()
        .map(|m| Row {
            x: m.x,
            y: m.y,
            context: &m.context,
        })
        .collect()
}

/// Batched objective, one value per example. When gradient buffers are
/// given, accumulates the gradient of `-loss_scale * sum_b objective_b`;
/// `grad_repr` also backpropagates into the representation model.
pub fn mention_batch(
    params: &ReprParams,
    clf: &MentionClassifier,
    data: &[LabeledMention],
    noise: &[MentionNoise],
    loss_scale: f64,
    grad_clf: Option<&mut MentionClassifier>,
    grad_repr: Option<&mut ReprParams>,
) -> Result<Vec<f64>> {
    let rows = rows_of(data);
    validate_rows(params, &rows)?;
    if noise.len() != data.len() {
        return Err(Error::invalid("one noise record per example is required"));
    }
    let d = params.dim();
    let k = noise[0].samples();
    for (m, nz) in data.iter().zip(noise) {
        check_label(clf, m.r)?;
        let ok = nz.samples() == k && k > 0 && nz.eps_u.iter().chain(&nz.eps_z).all(|e| e.len() == d);
        if !ok {
            return Err(Error::invalid("noise records must hold the same number of draws of width d"));
        }
    }
    let sorted = Sorted::new(&rows);
    let eps_u = gather_noise(&sorted.order, k, d, |i, j| &noise[i].eps_u[j]);
    let eps_z = gather_noise(&sorted.order, k, d, |i, j| &noise[i].eps_z[j]);
    let pass = posterior_forward(params, sorted, k, eps_u, eps_z);
    let logits = clf.layer.forward_batch(&pass.z);
    let c = clf.classes();
    let n = pass.sorted.len();
    let mut objective = vec![0.0; data.len()];
    let mut dlogits = Vec::with_capacity(n * k * c);
    for (b, &orig) in pass.sorted.order.iter().enumerate() {
        let r = data[orig].r;
        for j in 0..k {
            let mut row = logits.row(b * k + j).to_vec();
            objective[orig] += (row[r] - log_sum_exp(&row)) / k as f64;
            softmax_in_place(&mut row);
            row[r] -= 1.0;
            dlogits.extend(row.iter().map(|v| v * loss_scale / k as f64));
        }
    }
    if let Some(gc) = grad_clf {
        let dlogits = Array::matrix(n * k, c, dlogits);
        match grad_repr {
            Some(gr) => {
                let dz = clf.layer.backward_batch(&pass.z, &dlogits, &mut gc.layer);
                posterior_backward(params, &pass, &dz, None, gr);
            }
            None => clf.layer.backward_params(&pass.z, &dlogits, &mut gc.layer),
        }
    }
    Ok(objective)
}

/// Result of `train_mention`.
#[derive(Clone, Debug)]
pub struct MentionTraining {
    pub classifier: MentionClassifier,
    /// The fine-tuned copy (identical to the input when fine-tuning is off).
    pub repr: ReprParams,
    pub log: Vec<StepRecord>,
}

/// Adam ascent on the mean mention objective. The representation is cloned,
/// never modified in place.
pub fn train_mention(
    data: &[LabeledMention],
    repr: &ReprParams,
    config: &MentionConfig,
    rng: &RngStream,
) -> Result<MentionTraining> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("no training mentions"));
    }
    let d = repr.dim();
    let mut clf = MentionClassifier::new(d, config.classes, &mut rng.derive(0));
    let mut repr = repr.clone();
    let adam = AdamConfig::with_learning_rate(config.learning_rate);
    let mut adam_clf = AdamState::new(adam, &clf);
    let mut adam_repr = config.fine_tune.then(|| AdamState::new(adam, &repr));
    let steps = rng.derive(1);
    let scale = 1.0 / config.batch_size as f64;
    let mut log = Vec::new();
    for it in 0..config.iterations {
        let mut pick = steps.derive2(it, u64::MAX);
        let batch: Vec<LabeledMention> = (0..config.batch_size)
            .map(|_| data[pick.below(data.len())].clone())
            .collect();
        let noise: Vec<MentionNoise> = (0..batch.len())
            .map(|slot| MentionNoise::draw(d, config.samples, &mut steps.derive2(it, slot as u64)))
            .collect();
        let idx: Vec<usize> = (0..batch.len()).collect();
        let fine_tune = config.fine_tune;
        let (repr_ref, clf_ref) = (&repr, &clf);
        let parts = exec::map_chunks(config.exec, &idx, config.chunk_size, |_, chunk| {
            let b: Vec<LabeledMention> = chunk.iter().map(|&i| batch[i].clone()).collect();
            let nz: Vec<MentionNoise> = chunk.iter().map(|&i| noise[i].clone()).collect();
            let mut gc = clf_ref.zeros_like();
            let mut gr = fine_tune.then(|| repr_ref.zeros_like());
            mention_batch(repr_ref, clf_ref, &b, &nz, scale, Some(&mut gc), gr.as_mut()).map(|o| (o, gc, gr))
        });
        let mut objective = 0.0;
        let mut grad_clf = clf.zeros_like();
        let mut grad_repr: Option<ReprParams> = None;
        for part in parts {
            let (o, gc, gr) = part?;
            objective += o.iter().sum::<f64>();
            grad_clf.accumulate(&gc);
            if let Some(gr) = gr {
                match grad_repr.as_mut() {
                    None => grad_repr = Some(gr),
                    Some(acc) => acc.accumulate(&gr),
                }
            }
        }
        objective *= scale;
        if !objective.is_finite() {
            return Err(Error::Divergence {
                iteration: it,
                detail: format!("non-finite mention objective {objective}"),
            });
        }
        let mut norm2 = grad_clf.l2_norm().powi(2);
        if let Some(g) = &grad_repr {
            norm2 += g.l2_norm().powi(2);
        }
        let with_it = |e: Error| match e {
            Error::Divergence { detail, .. } => Error::Divergence { iteration: it, detail },
            other => other,
        };
        adam_clf.update(&mut clf, &grad_clf).map_err(with_it)?;
        if let (Some(state), Some(g)) = (adam_repr.as_mut(), grad_repr.as_ref()) {
            state.update(&mut repr, g).map_err(with_it)?;
        }
        if it % config.log_every.max(1) == 0 || it + 1 == config.iterations {
            log.push(StepRecord {
                iteration: it,
                objective,
                grad_norm: norm2.sqrt(),
            });
        }
    }
    Ok(MentionTraining {
        classifier: clf,
        repr,
        log,
    })
}

/// Class probabilities averaged over `n_eval` posterior draws.
pub fn predict_mention(
    params: &ReprParams,
    clf: &MentionClassifier,
    x: usize,
    y: usize,
    c: &Context,
    n_eval: usize,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    if n_eval == 0 {
        return Err(Error::invalid("n_eval must be at least 1"));
    }
    let q = inference_latent_params(params, x, y, c)?;
    let d = params.dim();
    let mut avg = vec![0.0; clf.classes()];
    for _ in 0..n_eval {
        let u = gaussian_reparameterize(&q, &rng.normals(d))?;
        let z = prior_z_with_noise(params, x, y, u.data(), &rng.normals(d))?;
        for (a, p) in avg.iter_mut().zip(clf.probabilities(z.data())?) {
            *a += p / n_eval as f64;
        }
    }
    Ok(avg)
}

/// `predict_mention` over many examples; example `i` draws from
/// `rng.derive(i)`, so the result does not depend on chunking or threads.
pub fn predict_mentions(
    params: &ReprParams,
    clf: &MentionClassifier,
    data: &[LabeledMention],
    n_eval: usize,
    rng: &RngStream,
    mode: ExecMode,
) -> Result<Vec<Vec<f64>>> {
    if n_eval == 0 {
        return Err(Error::invalid("n_eval must be at least 1"));
    }
    if data.is_empty() {
        return Ok(Vec::new());
    }
    let d = params.dim();
    let idx: Vec<usize> = (0..data.len()).collect();
    let parts = exec::map_chunks(mode, &idx, 16, |_, chunk| -> Result<Vec<Vec<f64>>> {
        let b: Vec<LabeledMention> = chunk.iter().map(|&i| data[i].clone()).collect();
        let rows = rows_of(&b);
        validate_rows(params, &rows)?;
        let noise: Vec<MentionNoise> = chunk
            .iter()
            .map(|&i| MentionNoise::draw(d, n_eval, &mut rng.derive(i as u64)))
            .collect();
        let sorted = Sorted::new(&rows);
        let eps_u = gather_noise(&sorted.order, n_eval, d, |i, j| &noise[i].eps_u[j]);
        let eps_z = gather_noise(&sorted.order, n_eval, d, |i, j| &noise[i].eps_z[j]);
        let pass = posterior_forward(params, sorted, n_eval, eps_u, eps_z);
        let logits = clf.layer.forward_batch(&pass.z);
        let mut out = vec![vec![0.0; clf.classes()]; b.len()];
        for (s, &orig) in pass.sorted.order.iter().enumerate() {
            for j in 0..n_eval {
                let mut row = logits.row(s * n_eval + j).to_vec();
                softmax_in_place(&mut row);
                for (a, p) in out[orig].iter_mut().zip(&row) {
                    *a += p / n_eval as f64;
                }
            }
        }
        Ok(out)
    });
    let mut all = Vec::with_capacity(data.len());
    for p in parts {
        all.extend(p?);
    }
    Ok(all)
}

/// Predicted class: argmax with ties toward the lower id.
pub fn predicted_class(probs: &[f64]) -> usize {
    argmax(probs)
}
