//! Batched forward and backward passes of the representation model.
//!
//! Examples are sorted by context length so that the sequences still running
//! at any step form a prefix of the batch. Gradients are hand-derived and
//! accumulated into a `ReprParams` of the same shapes.

use super::noise::ExampleNoise;
use super::params::ReprParams;
use super::reference::ElboTerms;
use crate::corpus::Context;
use crate::error::{Error, Result};
use crate::numeric::array::Array;
use crate::numeric::dense::FeedForwardTrace;
use crate::numeric::linalg::{gemm, Trans};
use crate::numeric::lstm::{
    embed_steps, embed_steps_backward, lstm_backward_batch, lstm_forward_batch, LstmTrace, SequenceBatch,
};
use crate::numeric::ops::{clamp_log_var, clamp_log_var_grad, kl_to_standard_parts, softmax_in_place};

/// One example: entity inputs and a context.
#[derive(Clone, Copy, Debug)]
pub struct Row<'a> {
    pub x: usize,
    pub y: usize,
    pub context: &'a Context,
}

pub(crate) fn validate_rows(params: &ReprParams, rows: &[Row]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::invalid("empty minibatch"));
    }
    for r in rows {
        params.check_entity(r.x)?;
        params.check_entity(r.y)?;
        r.context.validate(params.vocab_size())?;
    }
    Ok(())
}

/// `[e(x); e(y); e(x)*e(y); extra]` for every row of `extra`; row `r` uses
/// entity pair `r / rep`.
pub(crate) fn pair_features(ent: &Array, xs: &[usize], ys: &[usize], extra: &Array, rep: usize) -> Array {
    let d = ent.cols();
    let n = extra.rows();
    let w = 3 * d + extra.cols();
    let mut out = vec![0.0; n * w];
    for r in 0..n {
        let b = r / rep;
        let (ex, ey) = (ent.row(xs[b]), ent.row(ys[b]));
        let o = &mut out[r * w..(r + 1) * w];
        o[..d].copy_from_slice(ex);
        o[d..2 * d].copy_from_slice(ey);
        for k in 0..d {
            o[2 * d + k] = ex[k] * ey[k];
        }
        o[3 * d..].copy_from_slice(extra.row(r));
    }
    Array::matrix(n, w, out)
}

/// Backward of `pair_features`: scatters the entity part into `grad_ent`
/// and returns the gradient of `extra`.
pub(crate) fn pair_features_backward(
    ent: &Array,
    xs: &[usize],
    ys: &[usize],
    dfeat: &Array,
    rep: usize,
    grad_ent: Option<&mut Array>,
) -> Array {
    let d = ent.cols();
    let n = dfeat.rows();
    let e = dfeat.cols() - 3 * d;
    let mut dextra = Vec::with_capacity(n * e);
    for r in 0..n {
        dextra.extend_from_slice(&dfeat.row(r)[3 * d..]);
    }
    if let Some(g) = grad_ent {
        for r in 0..n {
            let b = r / rep;
            let (ex, ey) = (ent.row(xs[b]), ent.row(ys[b]));
            let df = dfeat.row(r);
            let dx: Vec<f64> = (0..d).map(|k| df[k] + df[2 * d + k] * ey[k]).collect();
            let dy: Vec<f64> = (0..d).map(|k| df[d + k] + df[2 * d + k] * ex[k]).collect();
            for (a, v) in g.row_mut(xs[b]).iter_mut().zip(&dx) {
                *a += v;
            }
            for (a, v) in g.row_mut(ys[b]).iter_mut().zip(&dy) {
                *a += v;
            }
        }
    }
    Array::matrix(n, e, dextra)
}

/// A Gaussian head split into mean and clamped log-variance.
#[derive(Debug)]
pub(crate) struct Head {
    pub mean: Array,
    pub log_var: Array,
    raw_log_var: Vec<f64>,
}

impl Head {
    fn split(raw: &Array) -> Head {
        let n = raw.rows();
        let d = raw.cols() / 2;
        let mut mean = Vec::with_capacity(n * d);
        let mut raw_lv = Vec::with_capacity(n * d);
        for r in 0..n {
            mean.extend_from_slice(&raw.row(r)[..d]);
            raw_lv.extend_from_slice(&raw.row(r)[d..]);
        }
        let lv = raw_lv.iter().map(|&v| clamp_log_var(v)).collect();
        Head {
            mean: Array::matrix(n, d, mean),
            log_var: Array::matrix(n, d, lv),
            raw_log_var: raw_lv,
        }
    }

    /// `mean[r / rep] + exp(log_var[r / rep] / 2) * eps[r]`.
    fn sample(&self, eps: &Array, rep: usize) -> Array {
        let d = self.mean.cols();
        let mut out = vec![0.0; eps.len()];
        for r in 0..eps.rows() {
            let (m, lv) = (self.mean.row(r / rep), self.log_var.row(r / rep));
            let e = eps.row(r);
            for k in 0..d {
                out[r * d + k] = m[k] + (0.5 * lv[k]).exp() * e[k];
            }
        }
        Array::matrix(eps.rows(), d, out)
    }

    /// Gradient of the raw head output given the sample gradient `ds` and an
    /// optional per-group coefficient on the KL term.
    fn backward(&self, eps: &Array, rep: usize, ds: &Array, dkl: Option<&[f64]>) -> Array {
        let n = self.mean.rows();
        let d = self.mean.cols();
        let mut draw = vec![0.0; n * 2 * d];
        for r in 0..ds.rows() {
            let b = r / rep;
            let lv = self.log_var.row(b);
            let (e, g) = (eps.row(r), ds.row(r));
            let o = &mut draw[b * 2 * d..(b + 1) * 2 * d];
            for k in 0..d {
                o[k] += g[k];
                o[d + k] += g[k] * e[k] * 0.5 * (0.5 * lv[k]).exp();
            }
        }
        if let Some(dkl) = dkl {
            for b in 0..n {
                let (m, lv) = (self.mean.row(b), self.log_var.row(b));
                let o = &mut draw[b * 2 * d..(b + 1) * 2 * d];
                for k in 0..d {
                    o[k] += dkl[b] * m[k];
                    o[d + k] += dkl[b] * 0.5 * (lv[k].exp() - 1.0);
                }
            }
        }
        for b in 0..n {
            for k in 0..d {
                draw[b * 2 * d + d + k] *= clamp_log_var_grad(self.raw_log_var[b * d + k]);
            }
        }
        Array::matrix(n, 2 * d, draw)
    }
}

/// Trace of `p(z | x, y, u)` evaluated on a batch of `u` rows.
#[derive(Debug)]
pub(crate) struct PriorTrace {
    ff: FeedForwardTrace,
    pub head: Head,
    eps: Array,
    rep: usize,
}

/// Computes `z` for each row of `u`; row `r` belongs to entity pair `r / rep`.
pub(crate) fn prior_forward(
    params: &ReprParams,
    xs: &[usize],
    ys: &[usize],
    rep: usize,
    u: &Array,
    eps: Array,
) -> (Array, PriorTrace) {
    let feats = pair_features(&params.ent_emb, xs, ys, u, rep);
    let (raw, ff) = params.prior.forward_batch(feats);
    let head = Head::split(&raw);
    let z = head.sample(&eps, 1);
    (z, PriorTrace { ff, head, eps, rep })
}

/// Accumulates prior gradients and returns the gradient with respect to `u`.
pub(crate) fn prior_backward(
    params: &ReprParams,
    trace: &PriorTrace,
    xs: &[usize],
    ys: &[usize],
    dz: &Array,
    grad: &mut ReprParams,
) -> Array {
    let draw = trace.head.backward(&trace.eps, 1, dz, None);
    let dfeat = params.prior.backward_batch(&trace.ff, draw, &mut grad.prior);
    pair_features_backward(&params.ent_emb, xs, ys, &dfeat, trace.rep, Some(&mut grad.ent_emb))
}

/// Examples rearranged into decreasing context length.
pub(crate) struct Sorted<'a> {
    pub order: Vec<usize>,
    pub batch: SequenceBatch,
    pub xs: Vec<usize>,
    pub ys: Vec<usize>,
    pub seqs: Vec<&'a [usize]>,
}

impl<'a> Sorted<'a> {
    pub fn new(rows: &[Row<'a>]) -> Self {
        let lengths: Vec<usize> = rows.iter().map(|r| r.context.len()).collect();
        let batch = SequenceBatch::new(&lengths);
        let order = batch.order.clone();
        Sorted {
            xs: order.iter().map(|&i| rows[i].x).collect(),
            ys: order.iter().map(|&i| rows[i].y).collect(),
            seqs: order.iter().map(|&i| rows[i].context.token_ids.as_slice()).collect(),
            order,
            batch,
        }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }
}

/// Posterior latents for sorted examples, `rep` draws each.
pub(crate) struct PosteriorPass<'a> {
    pub sorted: Sorted<'a>,
    pub rep: usize,
    pub z: Array,
    /// KL of `q(u|x,y,c)` per sorted example.
    pub kl: Vec<f64>,
    fwd: LstmTrace,
    bwd: LstmTrace,
    ff: FeedForwardTrace,
    head: Head,
    eps_u: Array,
    prior: PriorTrace,
}

/// Gathers per-draw noise vectors into sorted row order. `noise(i, j)` is
/// the vector for caller example `i`, draw `j`.
pub(crate) fn gather_noise<'n>(
    order: &[usize],
    rep: usize,
    d: usize,
    noise: impl Fn(usize, usize) -> &'n [f64],
) -> Array {
    let mut out = Vec::with_capacity(order.len() * rep * d);
    for &i in order {
        for j in 0..rep {
            out.extend_from_slice(noise(i, j));
        }
    }
    Array::matrix(order.len() * rep, d, out)
}

pub(crate) fn posterior_forward<'a>(
    params: &ReprParams,
    sorted: Sorted<'a>,
    rep: usize,
    eps_u: Array,
    eps_z: Array,
) -> PosteriorPass<'a> {
    let n = sorted.len();
    let h = params.hidden();
    let inputs = embed_steps(&params.tok_emb, &sorted.seqs, &sorted.batch, false);
    let (out_f, fwd) = lstm_forward_batch(&params.encoder.forward, &inputs, n);
    let inputs = embed_steps(&params.tok_emb, &sorted.seqs, &sorted.batch, true);
    let (out_b, bwd) = lstm_forward_batch(&params.encoder.backward, &inputs, n);
    let mut hq = Vec::with_capacity(n * 2 * h);
    for r in 0..n {
        hq.extend_from_slice(out_f.final_hidden.row(r));
        hq.extend_from_slice(out_b.final_hidden.row(r));
    }
    let hq = Array::matrix(n, 2 * h, hq);
    let feats = pair_features(&params.ent_emb, &sorted.xs, &sorted.ys, &hq, 1);
    let (raw, ff) = params.inference.forward_batch(feats);
    let head = Head::split(&raw);
    let kl = (0..n)
        .map(|b| kl_to_standard_parts(head.mean.row(b), head.log_var.row(b)))
        .collect();
    let u = head.sample(&eps_u, rep);
    let (z, prior) = prior_forward(params, &sorted.xs, &sorted.ys, rep, &u, eps_z);
    PosteriorPass {
        sorted,
        rep,
        z,
        kl,
        fwd,
        bwd,
        ff,
        head,
        eps_u,
        prior,
    }
}

/// Backward through prior, inference network and encoder. `dkl[b]` is the
/// loss coefficient on example `b`'s KL term.
pub(crate) fn posterior_backward(
    params: &ReprParams,
    pass: &PosteriorPass,
    dz: &Array,
    dkl: Option<&[f64]>,
    grad: &mut ReprParams,
) {
    let s = &pass.sorted;
    let h = params.hidden();
    let du = prior_backward(params, &pass.prior, &s.xs, &s.ys, dz, grad);
    let draw = pass.head.backward(&pass.eps_u, pass.rep, &du, dkl);
    let dfeat = params.inference.backward_batch(&pass.ff, draw, &mut grad.inference);
    let dhq = pair_features_backward(&params.ent_emb, &s.xs, &s.ys, &dfeat, 1, Some(&mut grad.ent_emb));
    let n = s.len();
    let mut df = Vec::with_capacity(n * h);
    let mut db = Vec::with_capacity(n * h);
    for r in 0..n {
        df.extend_from_slice(&dhq.row(r)[..h]);
        db.extend_from_slice(&dhq.row(r)[h..]);
    }
    let d_in = lstm_backward_batch(
        &params.encoder.forward,
        &pass.fwd,
        None,
        Some(&Array::matrix(n, h, df)),
        &mut grad.encoder.forward,
    );
    embed_steps_backward(&d_in, &s.seqs, false, &mut grad.tok_emb);
    let d_in = lstm_backward_batch(
        &params.encoder.backward,
        &pass.bwd,
        None,
        Some(&Array::matrix(n, h, db)),
        &mut grad.encoder.backward,
    );
    embed_steps_backward(&d_in, &s.seqs, true, &mut grad.tok_emb);
}

/// Decoder trace for sequences already sorted by decreasing length.
pub(crate) struct DecoderTrace {
    lstm: LstmTrace,
    hidden: Vec<Array>,
    proj: Vec<Array>,
    probs: Vec<Array>,
}

/// `log p(c | z)` per sorted row.
pub(crate) fn decoder_forward(
    params: &ReprParams,
    seqs: &[&[usize]],
    keeps: &[&[bool]],
    z: &Array,
) -> (Vec<f64>, DecoderTrace) {
    let n = seqs.len();
    let d = params.dim();
    let h = params.hidden();
    let v = params.vocab_size();
    let lengths: Vec<usize> = seqs.iter().map(|s| s.len() - 1).collect();
    let batch = SequenceBatch::new(&lengths);
    debug_assert!(batch.order.iter().enumerate().all(|(i, &o)| i == o));
    let inputs: Vec<Array> = (0..batch.max_len())
        .map(|s| {
            let m = batch.active(s);
            let mut data = Vec::with_capacity(m * 2 * d);
            for r in 0..m {
                data.extend_from_slice(z.row(r));
                if keeps[r][s] {
                    data.extend_from_slice(params.tok_emb.row(seqs[r][s]));
                } else {
                    data.extend(std::iter::repeat_n(0.0, d));
                }
            }
            Array::matrix(m, 2 * d, data)
        })
        .collect();
    let (out, lstm) = lstm_forward_batch(&params.decoder, &inputs, n);
    let mut rec = vec![0.0; n];
    let mut proj = Vec::with_capacity(out.outputs.len());
    let mut probs = Vec::with_capacity(out.outputs.len());
    for (s, hs) in out.outputs.iter().enumerate() {
        let m = hs.rows();
        let mut p = vec![0.0; m * d];
        gemm(m, h, d, 1.0, hs.data(), Trans::No, params.out_proj.data(), Trans::Yes, 0.0, &mut p);
        let mut logits = vec![0.0; m * v];
        gemm(m, d, v, 1.0, &p, Trans::No, params.tok_emb.data(), Trans::Yes, 0.0, &mut logits);
        for r in 0..m {
            let row = &mut logits[r * v..(r + 1) * v];
            let target = row[seqs[r][s + 1]];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            rec[r] += target - lse;
            softmax_in_place(row);
        }
        proj.push(Array::matrix(m, d, p));
        probs.push(Array::matrix(m, v, logits));
    }
    (
        rec,
        DecoderTrace {
            lstm,
            hidden: out.outputs,
            proj,
            probs,
        },
    )
}

/// Backward of the decoder given `drec[r]`, the loss gradient with respect
/// to row `r`'s log-likelihood. Returns the gradient with respect to `z`.
pub(crate) fn decoder_backward(
    params: &ReprParams,
    trace: &DecoderTrace,
    seqs: &[&[usize]],
    keeps: &[&[bool]],
    drec: &[f64],
    grad: &mut ReprParams,
) -> Array {
    let n = seqs.len();
    let d = params.dim();
    let h = params.hidden();
    let v = params.vocab_size();
    let mut d_hidden = Vec::with_capacity(trace.hidden.len());
    for (s, hs) in trace.hidden.iter().enumerate() {
        let m = hs.rows();
        let mut dl = trace.probs[s].data().to_vec();
        for r in 0..m {
            let row = &mut dl[r * v..(r + 1) * v];
            row[seqs[r][s + 1]] -= 1.0;
            let c = -drec[r];
            row.iter_mut().for_each(|x| *x *= c);
        }
        let mut dp = vec![0.0; m * d];
        gemm(m, v, d, 1.0, &dl, Trans::No, params.tok_emb.data(), Trans::No, 0.0, &mut dp);
        gemm(v, m, d, 1.0, &dl, Trans::Yes, trace.proj[s].data(), Trans::No, 1.0, grad.tok_emb.data_mut());
        gemm(d, m, h, 1.0, &dp, Trans::Yes, hs.data(), Trans::No, 1.0, grad.out_proj.data_mut());
        let mut dh = vec![0.0; m * h];
        gemm(m, d, h, 1.0, &dp, Trans::No, params.out_proj.data(), Trans::No, 0.0, &mut dh);
        d_hidden.push(Array::matrix(m, h, dh));
    }
    let d_in = lstm_backward_batch(&params.decoder, &trace.lstm, Some(&d_hidden), None, &mut grad.decoder);
    let mut dz = Array::zeros(&[n, d]);
    for (s, di) in d_in.iter().enumerate() {
        for r in 0..di.rows() {
            let g = di.row(r);
            for (a, b) in dz.row_mut(r).iter_mut().zip(&g[..d]) {
                *a += b;
            }
            if keeps[r][s] {
                for (a, b) in grad.tok_emb.row_mut(seqs[r][s]).iter_mut().zip(&g[d..]) {
                    *a += b;
                }
            }
        }
    }
    dz
}

/// Single-sample ELBO terms for each row (caller order). When `grad` is
/// given, accumulates the gradient of
/// `loss_scale * sum_b (anneal_weight * kl_b - reconstruction_b)`.
pub fn elbo_batch(
    params: &ReprParams,
    rows: &[Row],
    noise: &[ExampleNoise],
    anneal_weight: f64,
    loss_scale: f64,
    grad: Option<&mut ReprParams>,
) -> Result<Vec<ElboTerms>> {
    validate_rows(params, rows)?;
    if noise.len() != rows.len() {
        return Err(Error::invalid("one noise record per example is required"));
    }
    let d = params.dim();
    for (r, nz) in rows.iter().zip(noise) {
        if nz.eps_u.len() != d || nz.eps_z.len() != d || nz.keep.len() + 1 != r.context.len() {
            return Err(Error::invalid("noise record does not match the model or context"));
        }
    }
    let sorted = Sorted::new(rows);
    let eps_u = gather_noise(&sorted.order, 1, d, |i, _| &noise[i].eps_u);
    let eps_z = gather_noise(&sorted.order, 1, d, |i, _| &noise[i].eps_z);
    let keeps: Vec<&[bool]> = sorted.order.iter().map(|&i| noise[i].keep.as_slice()).collect();
    let pass = posterior_forward(params, sorted, 1, eps_u, eps_z);
    let (rec, dec) = decoder_forward(params, &pass.sorted.seqs, &keeps, &pass.z);
    if let Some(grad) = grad {
        let n = rec.len();
        let drec = vec![-loss_scale; n];
        let dz = decoder_backward(params, &dec, &pass.sorted.seqs, &keeps, &drec, grad);
        let dkl = vec![loss_scale * anneal_weight; n];
        posterior_backward(params, &pass, &dz, Some(&dkl), grad);
    }
    let mut out = vec![
        ElboTerms {
            objective: 0.0,
            reconstruction: 0.0,
            kl: 0.0
        };
        rows.len()
    ];
    for (k, &i) in pass.sorted.order.iter().enumerate() {
        out[i] = ElboTerms {
            objective: rec[k] - anneal_weight * pass.kl[k],
            reconstruction: rec[k],
            kl: pass.kl[k],
        };
    }
    Ok(out)
}

/// `log p(c | z)` for one context under each row of `z` (no dropout).
pub fn decoder_log_prob_many(params: &ReprParams, context: &Context, z: &Array) -> Result<Vec<f64>> {
    context.validate(params.vocab_size())?;
    if z.cols() != params.dim() {
        return Err(Error::invalid("z width does not match the model"));
    }
    let n = z.rows();
    let seqs = vec![context.token_ids.as_slice(); n];
    let keep = vec![true; context.len() - 1];
    let keeps = vec![keep.as_slice(); n];
    Ok(decoder_forward(params, &seqs, &keeps, z).0)
}
