use std::io::Write;

use serde::{Deserialize, Serialize};

use super::config::ReprConfig;
use super::engine::{elbo_batch, Row};
use super::noise::ExampleNoise;
use super::params::ReprParams;
use super::reference::{kl_anneal_weight, ElboTerms};
use crate::corpus::ContextExample;
use crate::error::{Error, Result};
use crate::exec;
use crate::numeric::{AdamConfig, AdamState, ParamSet, RngStream};

/// One logged training step. Values are minibatch means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub iteration: u64,
    pub reconstruction: f64,
    pub kl: f64,
    pub anneal_weight: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<TrainRecord>,
}

/// Writes one JSON object per line.
pub fn write_jsonl<W: Write, T: Serialize>(records: &[T], mut w: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// One logged step of a supervised classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub iteration: u64,
    /// Minibatch mean of the maximised objective.
    pub objective: f64,
    pub grad_norm: f64,
}

impl TrainLog {
    pub fn write_jsonl<W: Write>(&self, w: W) -> Result<()> {
        write_jsonl(&self.records, w)
    }

    pub fn last(&self) -> Option<&TrainRecord> {
        self.records.last()
    }

    /// Mean KL over the final `n` records.
    pub fn tail_kl(&self, n: usize) -> f64 {
        let tail = &self.records[self.records.len().saturating_sub(n)..];
        tail.iter().map(|r| r.kl).sum::<f64>() / tail.len().max(1) as f64
    }
}

/// KL weight at `iteration` under `config`; 1 throughout when annealing is off.
pub fn anneal_weight_for(config: &ReprConfig, iteration: u64) -> Result<f64> {
    if config.kl_annealing {
        kl_anneal_weight(iteration, config.anneal_iters)
    } else {
        Ok(1.0)
    }
}

/// Mean-loss gradient of one minibatch. Chunks are evaluated independently
/// (in parallel when enabled) and reduced in chunk order.
pub fn minibatch_gradient(
    params: &ReprParams,
    rows: &[Row],
    noise: &[ExampleNoise],
    anneal_weight: f64,
    chunk_size: usize,
    mode: exec::ExecMode,
) -> Result<(ReprParams, Vec<ElboTerms>)> {
    let scale = 1.0 / rows.len() as f64;
    let idx: Vec<usize> = (0..rows.len()).collect();
    let parts = exec::map_chunks(mode, &idx, chunk_size, |_, chunk| {
        let r: Vec<Row> = chunk.iter().map(|&i| rows[i]).collect();
        let n: Vec<ExampleNoise> = chunk.iter().map(|&i| noise[i].clone()).collect();
        let mut g = params.zeros_like();
        elbo_batch(params, &r, &n, anneal_weight, scale, Some(&mut g)).map(|t| (g, t))
    });
    let mut grad: Option<ReprParams> = None;
    let mut terms = Vec::with_capacity(rows.len());
    for part in parts {
        let (g, t) = part?;
        match grad.as_mut() {
            None => grad = Some(g),
            Some(acc) => acc.accumulate(&g),
        }
        terms.extend(t);
    }
    Ok((grad.expect("non-empty minibatch"), terms))
}

/// Draws the example indices and noise for one iteration. Everything is a
/// function of `(rng seed, stream, iteration, slot)`.
pub fn iteration_draws(
    rng: &RngStream,
    iteration: u64,
    data: &[ContextExample],
    batch_size: usize,
    dim: usize,
    token_dropout: f64,
) -> (Vec<usize>, Vec<ExampleNoise>) {
    let mut pick = rng.derive2(iteration, u64::MAX);
    let idx: Vec<usize> = (0..batch_size).map(|_| pick.below(data.len())).collect();
    let noise = idx
        .iter()
        .enumerate()
        .map(|(slot, &i)| {
            let mut r = rng.derive2(iteration, slot as u64);
            ExampleNoise::draw(dim, data[i].context.len(), token_dropout, &mut r)
        })
        .collect();
    (idx, noise)
}

/// Trains `params` in place by Adam on the mean negative ELBO.
///
/// `on_checkpoint` runs every `checkpoint_every` iterations (if non-zero)
/// with the number of completed iterations.
pub fn train_repr(
    data: &[ContextExample],
    config: &ReprConfig,
    params: &mut ReprParams,
    rng: &RngStream,
    mut on_checkpoint: impl FnMut(u64, &ReprParams) -> Result<()>,
) -> Result<TrainLog> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("no training contexts"));
    }
    let mut adam = AdamState::new(AdamConfig::with_learning_rate(config.learning_rate), params);
    let mut log = TrainLog::default();
    for it in 0..config.iterations {
        let beta = anneal_weight_for(config, it)?;
        let (idx, noise) = iteration_draws(rng, it, data, config.batch_size, params.dim(), config.token_dropout);
        let rows: Vec<Row> = idx
            .iter()
            .map(|&i| Row {
                x: data[i].x,
                y: data[i].y,
                context: &data[i].context,
            })
            .collect();
        let (grad, terms) = minibatch_gradient(params, &rows, &noise, beta, config.chunk_size, config.exec)?;
        let n = terms.len() as f64;
        let rec = terms.iter().map(|t| t.reconstruction).sum::<f64>() / n;
        let kl = terms.iter().map(|t| t.kl).sum::<f64>() / n;
        if !rec.is_finite() || !kl.is_finite() {
            return Err(Error::Divergence {
                iteration: it,
                detail: format!("non-finite objective (reconstruction {rec}, kl {kl})"),
            });
        }
        let grad_norm = grad.l2_norm();
        adam.update(params, &grad).map_err(|e| match e {
            Error::Divergence { detail, .. } => Error::Divergence { iteration: it, detail },
            other => other,
        })?;
        let last = it + 1 == config.iterations;
        if it % config.log_every.max(1) == 0 || last {
            log.records.push(TrainRecord {
                iteration: it,
                reconstruction: rec,
                kl,
                anneal_weight: beta,
                grad_norm,
            });
        }
        if config.checkpoint_every > 0 && (it + 1) % config.checkpoint_every == 0 {
            on_checkpoint(it + 1, params)?;
        }
    }
    Ok(log)
}
