//! Single-example forward computations, written for clarity. The batched
//! engine must agree with these to rounding error.

use super::noise::ExampleNoise;
use super::params::ReprParams;
use crate::corpus::Context;
use crate::error::{Error, Result};
use crate::numeric::linalg::{dot, matvec};
use crate::numeric::ops::log_sum_exp;
use crate::numeric::{
    bilstm_encode, feedforward_gaussian, gaussian_kl_to_standard, gaussian_reparameterize, lstm_step, Array,
    GaussianParams, LstmState, RngStream,
};

/// `[e(x); e(y); e(x)*e(y); extra]`.
pub fn entity_pair_features(params: &ReprParams, x: usize, y: usize, extra: &[f64]) -> Result<Array> {
    params.check_entity(x)?;
    params.check_entity(y)?;
    let ex = params.ent_emb.row(x);
    let ey = params.ent_emb.row(y);
    let mut out = Vec::with_capacity(3 * ex.len() + extra.len());
    out.extend_from_slice(ex);
    out.extend_from_slice(ey);
    out.extend(ex.iter().zip(ey).map(|(a, b)| a * b));
    out.extend_from_slice(extra);
    Ok(Array::vector(out))
}

/// Parameters of `p(z | x, y, u)`.
pub fn prior_latent_params(params: &ReprParams, x: usize, y: usize, u: &[f64]) -> Result<GaussianParams> {
    if u.len() != params.dim() {
        return Err(Error::invalid(format!("u has length {}, expected {}", u.len(), params.dim())));
    }
    let f = entity_pair_features(params, x, y, u)?;
    feedforward_gaussian(f.data(), &params.prior)
}

/// Draws `u ~ N(0, I)` and then `z ~ p(z | x, y, u)`.
pub fn sample_prior_z(params: &ReprParams, x: usize, y: usize, rng: &mut RngStream) -> Result<(Array, Array)> {
    let d = params.dim();
    let u = rng.normals(d);
    let eps = rng.normals(d);
    prior_z_with_noise(params, x, y, &u, &eps).map(|z| (Array::vector(u), z))
}

pub fn prior_z_with_noise(params: &ReprParams, x: usize, y: usize, u: &[f64], eps_z: &[f64]) -> Result<Array> {
    let g = prior_latent_params(params, x, y, u)?;
    gaussian_reparameterize(&g, eps_z)
}

fn check_context(params: &ReprParams, c: &Context) -> Result<()> {
    c.validate(params.vocab_size())
}

/// Parameters of `q(u | x, y, c)`.
pub fn inference_latent_params(params: &ReprParams, x: usize, y: usize, c: &Context) -> Result<GaussianParams> {
    check_context(params, c)?;
    let seq: Vec<&[f64]> = c.token_ids.iter().map(|&t| params.tok_emb.row(t)).collect();
    let hq = bilstm_encode(&seq, &params.encoder)?;
    let f = entity_pair_features(params, x, y, hq.data())?;
    feedforward_gaussian(f.data(), &params.inference)
}

/// Log-probabilities over the vocabulary at every decoder step.
///
/// The first token (`<BOS>`) is given; step `s` reads `[z; e(c_s)]` and
/// predicts `c_{s+1}`. A dropped input uses a zero embedding.
pub fn decoder_step_log_probs(params: &ReprParams, c: &Context, z: &[f64], keep: &[bool]) -> Result<Vec<Vec<f64>>> {
    check_context(params, c)?;
    let d = params.dim();
    if z.len() != d {
        return Err(Error::invalid(format!("z has length {}, expected {d}", z.len())));
    }
    let steps = c.len() - 1;
    if keep.len() != steps {
        return Err(Error::invalid(format!("need {steps} dropout decisions, got {}", keep.len())));
    }
    let h = params.hidden();
    let v = params.vocab_size();
    let mut state = LstmState::zeros(h);
    let mut input = vec![0.0; 2 * d];
    input[..d].copy_from_slice(z);
    let mut out = Vec::with_capacity(steps);
    for s in 0..steps {
        if keep[s] {
            input[d..].copy_from_slice(params.tok_emb.row(c.token_ids[s]));
        } else {
            input[d..].iter_mut().for_each(|x| *x = 0.0);
        }
        state = lstm_step(&input, &state, &params.decoder)?;
        let proj = matvec(params.out_proj.data(), d, h, state.hidden.data());
        let logits: Vec<f64> = (0..v).map(|w| dot(&proj, params.tok_emb.row(w))).collect();
        let lse = log_sum_exp(&logits);
        out.push(logits.into_iter().map(|l| l - lse).collect());
    }
    Ok(out)
}

/// `log p(c | z)` with explicit token-dropout decisions.
pub fn decoder_log_prob_with(params: &ReprParams, c: &Context, z: &[f64], keep: &[bool]) -> Result<f64> {
    let steps = decoder_step_log_probs(params, c, z, keep)?;
    Ok(steps.iter().enumerate().map(|(s, lp)| lp[c.token_ids[s + 1]]).sum())
}

/// `log p(c | z)`, dropping each decoder input token with probability `token_dropout`.
pub fn decoder_log_prob(
    params: &ReprParams,
    c: &Context,
    z: &[f64],
    token_dropout: f64,
    rng: &mut RngStream,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&token_dropout) {
        return Err(Error::invalid("token dropout must lie in [0, 1]"));
    }
    let keep: Vec<bool> = (0..c.len().saturating_sub(1))
        .map(|_| token_dropout <= 0.0 || rng.uniform() >= token_dropout)
        .collect();
    decoder_log_prob_with(params, c, z, &keep)
}

/// Linear KL weight: `min(1, iteration / anneal_iters)`.
pub fn kl_anneal_weight(iteration: u64, anneal_iters: u64) -> Result<f64> {
    if anneal_iters == 0 {
        return Err(Error::invalid("anneal_iters must be positive"));
    }
    Ok((iteration as f64 / anneal_iters as f64).min(1.0))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElboTerms {
    /// `reconstruction - anneal_weight * kl`.
    pub objective: f64,
    pub reconstruction: f64,
    pub kl: f64,
}

pub fn elbo_with_noise(
    params: &ReprParams,
    x: usize,
    y: usize,
    c: &Context,
    noise: &ExampleNoise,
    anneal_weight: f64,
) -> Result<ElboTerms> {
    let q = inference_latent_params(params, x, y, c)?;
    let u = gaussian_reparameterize(&q, &noise.eps_u)?;
    let z = prior_z_with_noise(params, x, y, u.data(), &noise.eps_z)?;
    let reconstruction = decoder_log_prob_with(params, c, z.data(), &noise.keep)?;
    let kl = gaussian_kl_to_standard(&q);
    Ok(ElboTerms {
        objective: reconstruction - anneal_weight * kl,
        reconstruction,
        kl,
    })
}

/// Single-sample ELBO estimate, without token dropout.
pub fn elbo(
    params: &ReprParams,
    x: usize,
    y: usize,
    c: &Context,
    rng: &mut RngStream,
    anneal_weight: f64,
) -> Result<ElboTerms> {
    let noise = ExampleNoise::no_dropout(params.dim(), c.len(), rng);
    elbo_with_noise(params, x, y, c, &noise, anneal_weight)
}

/// `n` independent draws `u ~ q(u|x,y,c)`, `z ~ p(z|x,y,u)`.
pub fn posterior_z_samples(
    params: &ReprParams,
    x: usize,
    y: usize,
    c: &Context,
    n: usize,
    rng: &mut RngStream,
) -> Result<Vec<Array>> {
    if n == 0 {
        return Err(Error::invalid("need at least one posterior sample"));
    }
    let q = inference_latent_params(params, x, y, c)?;
    (0..n)
        .map(|_| {
            let d = params.dim();
            let u = gaussian_reparameterize(&q, &rng.normals(d))?;
            prior_z_with_noise(params, x, y, u.data(), &rng.normals(d))
        })
        .collect()
}
