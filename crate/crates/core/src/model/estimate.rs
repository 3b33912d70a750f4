//! Monte Carlo estimators used to check the bound.

use super::engine::{decoder_log_prob_many, elbo_batch, gather_noise, prior_forward, Row};
use super::noise::ExampleNoise;
use super::params::ReprParams;
use crate::corpus::Context;
use crate::error::Result;
use crate::numeric::ops::log_sum_exp;
use crate::numeric::{Array, RngStream};

/// Sample mean and its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Estimate {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        Estimate {
            mean,
            std_error: (var / n).sqrt(),
        }
    }
}

const CHUNK: usize = 1024;

/// Single-sample ELBO (full KL weight, no dropout) averaged over `n` draws.
pub fn elbo_estimate(params: &ReprParams, x: usize, y: usize, c: &Context, n: usize, rng: &RngStream) -> Result<Estimate> {
    let mut values = Vec::with_capacity(n);
    let mut start = 0;
    while start < n {
        let m = CHUNK.min(n - start);
        let rows = vec![Row { x, y, context: c }; m];
        let noise: Vec<ExampleNoise> = (start..start + m)
            .map(|i| ExampleNoise::no_dropout(params.dim(), c.len(), &mut rng.derive(i as u64)))
            .collect();
        values.extend(elbo_batch(params, &rows, &noise, 1.0, 1.0, None)?.into_iter().map(|t| t.objective));
        start += m;
    }
    Ok(Estimate::from_samples(&values))
}

/// `log p(c | x, y)` by averaging `p(c | z)` over `n` prior draws
/// `u ~ N(0, I)`, `z ~ p(z | x, y, u)`.
///
/// The standard error is the delta-method error of the log of the mean.
pub fn importance_log_likelihood(
    params: &ReprParams,
    x: usize,
    y: usize,
    c: &Context,
    n: usize,
    rng: &RngStream,
) -> Result<Estimate> {
    params.check_entity(x)?;
    params.check_entity(y)?;
    let d = params.dim();
    let mut logs = Vec::with_capacity(n);
    let mut start = 0;
    while start < n {
        let m = CHUNK.min(n - start);
        let draws: Vec<(Vec<f64>, Vec<f64>)> = (start..start + m)
            .map(|i| {
                let mut r = rng.derive(i as u64);
                (r.normals(d), r.normals(d))
            })
            .collect();
        let order: Vec<usize> = (0..m).collect();
        let u = gather_noise(&order, 1, d, |i, _| &draws[i].0);
        let eps = gather_noise(&order, 1, d, |i, _| &draws[i].1);
        let xs = vec![x; m];
        let ys = vec![y; m];
        let (z, _) = prior_forward(params, &xs, &ys, 1, &u, eps);
        logs.extend(decoder_log_prob_many(params, c, &z)?);
        start += m;
    }
    let lse = log_sum_exp(&logs);
    let mean_log = lse - (n as f64).ln();
    // weights relative to the mean: w_i = p_i / mean(p)
    let w: Vec<f64> = logs.iter().map(|l| (l - mean_log).exp()).collect();
    let var = w.iter().map(|v| (v - 1.0).powi(2)).sum::<f64>() / (n as f64 - 1.0).max(1.0);
    Ok(Estimate {
        mean: mean_log,
        std_error: (var / n as f64).sqrt(),
    })
}

/// Draws `n` prior samples of `z` for a pair, as rows of an array.
pub fn prior_samples(params: &ReprParams, x: usize, y: usize, n: usize, rng: &mut RngStream) -> Result<Array> {
    params.check_entity(x)?;
    params.check_entity(y)?;
    let d = params.dim();
    let draws: Vec<(Vec<f64>, Vec<f64>)> = (0..n).map(|_| (rng.normals(d), rng.normals(d))).collect();
    let order: Vec<usize> = (0..n).collect();
    let u = gather_noise(&order, 1, d, |i, _| &draws[i].0);
    let eps = gather_noise(&order, 1, d, |i, _| &draws[i].1);
    Ok(prior_forward(params, &vec![x; n], &vec![y; n], 1, &u, eps).0)
}
