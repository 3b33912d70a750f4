//! LSTM cells.
//!
//! Fused layout: `weight` is `4H x (input + H)` and `bias` is `4H`. Gate rows
//! are ordered input, forget, candidate, output (`i, f, g, o`); the first
//! `input` columns multiply the step input and the last `H` columns the
//! previous hidden state. Checkpoints store this layout verbatim.

use super::array::Array;
use super::linalg::{add_col_sums, gemm_ld, matvec, Trans};
use super::ops::{sigmoid, tanh};
use super::params::{join, uniform_init, ParamSet};
use super::rng::RngStream;
use crate::error::{Error, Result};

pub const GATE_LAYOUT: &str = "gates=i,f,g,o; weight=[4H x (input+H)]; bias=[4H]";

#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub weight: Array,
    pub bias: Array,
}

impl LstmParams {
    pub fn new(input: usize, hidden: usize, rng: &mut RngStream) -> Self {
        let weight = uniform_init(&[4 * hidden, input + hidden], input + hidden, rng);
        let mut bias = Array::zeros(&[4 * hidden]);
        bias.data_mut()[hidden..2 * hidden].iter_mut().for_each(|b| *b = 1.0);
        LstmParams { weight, bias }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmParams {
            weight: Array::zeros(&[4 * hidden, input + hidden]),
            bias: Array::zeros(&[4 * hidden]),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.weight.shape()[0] / 4
    }

    pub fn input_dim(&self) -> usize {
        self.weight.shape()[1] - self.hidden_dim()
    }
}

impl ParamSet for LstmParams {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Array)>) {
        out.push((join(prefix, "weight"), &self.weight));
        out.push((join(prefix, "bias"), &self.bias));
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Array)>) {
        out.push((join(prefix, "weight"), &mut self.weight));
        out.push((join(prefix, "bias"), &mut self.bias));
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub hidden: Array,
    pub cell: Array,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            hidden: Array::zeros(&[hidden]),
            cell: Array::zeros(&[hidden]),
        }
    }
}

/// One LSTM step on a single example.
pub fn lstm_step(input: &[f64], prev: &LstmState, params: &LstmParams) -> Result<LstmState> {
    let h = params.hidden_dim();
    if input.len() != params.input_dim() {
        return Err(Error::invalid(format!(
            "lstm input has length {}, cell expects {}",
            input.len(),
            params.input_dim()
        )));
    }
    if prev.hidden.len() != h || prev.cell.len() != h {
        return Err(Error::invalid(format!("lstm state must have length {h}")));
    }
    let mut concat = input.to_vec();
    concat.extend_from_slice(prev.hidden.data());
    let mut pre = matvec(params.weight.data(), 4 * h, concat.len(), &concat);
    for (p, b) in pre.iter_mut().zip(params.bias.data()) {
        *p += b;
    }
    let mut hidden = vec![0.0; h];
    let mut cell = vec![0.0; h];
    for k in 0..h {
        let i = sigmoid(pre[k]);
        let f = sigmoid(pre[h + k]);
        let g = tanh(pre[2 * h + k]);
        let o = sigmoid(pre[3 * h + k]);
        cell[k] = f * prev.cell.data()[k] + i * g;
        hidden[k] = o * tanh(cell[k]);
    }
    Ok(LstmState {
        hidden: Array::vector(hidden),
        cell: Array::vector(cell),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiLstmParams {
    pub forward: LstmParams,
    pub backward: LstmParams,
}

impl BiLstmParams {
    pub fn new(input: usize, hidden: usize, rng: &mut RngStream) -> Self {
        BiLstmParams {
            forward: LstmParams::new(input, hidden, rng),
            backward: LstmParams::new(input, hidden, rng),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.forward.hidden_dim()
    }
}

impl ParamSet for BiLstmParams {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Array)>) {
        self.forward.visit(&join(prefix, "fwd"), out);
        self.backward.visit(&join(prefix, "bwd"), out);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Array)>) {
        self.forward.visit_mut(&join(prefix, "fwd"), out);
        self.backward.visit_mut(&join(prefix, "bwd"), out);
    }
}

/// Encodes a sequence as `[forward hidden at T; backward hidden at 1]`.
pub fn bilstm_encode<S: AsRef<[f64]>>(sequence: &[S], params: &BiLstmParams) -> Result<Array> {
    if sequence.is_empty() {
        return Err(Error::invalid("bilstm_encode needs a non-empty sequence"));
    }
    let h = params.hidden_dim();
    let mut fwd = LstmState::zeros(h);
    for x in sequence {
        fwd = lstm_step(x.as_ref(), &fwd, &params.forward)?;
    }
    let mut bwd = LstmState::zeros(h);
    for x in sequence.iter().rev() {
        bwd = lstm_step(x.as_ref(), &bwd, &params.backward)?;
    }
    let mut out = fwd.hidden.into_vec();
    out.extend_from_slice(bwd.hidden.data());
    Ok(Array::vector(out))
}

/// Sequences of a minibatch sorted by decreasing length, so that the rows
/// still running at step `t` are always a prefix of the batch.
#[derive(Clone, Debug)]
pub struct SequenceBatch {
    /// `order[k]` is the caller's index of the `k`-th longest sequence.
    pub order: Vec<usize>,
    /// Lengths in sorted order.
    pub lengths: Vec<usize>,
}

impl SequenceBatch {
    pub fn new(lengths: &[usize]) -> Self {
        let mut order: Vec<usize> = (0..lengths.len()).collect();
        order.sort_by(|&a, &b| lengths[b].cmp(&lengths[a]));
        let sorted = order.iter().map(|&i| lengths[i]).collect();
        SequenceBatch { order, lengths: sorted }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn max_len(&self) -> usize {
        self.lengths.first().copied().unwrap_or(0)
    }

    /// Number of sequences with more than `t` elements.
    pub fn active(&self, t: usize) -> usize {
        self.lengths.partition_point(|&l| l > t)
    }
}

/// Gathers embedding rows into per-step input matrices. `seqs` must be in
/// `SequenceBatch` order; with `reverse` each sequence is read back to front.
pub fn embed_steps(table: &Array, seqs: &[&[usize]], batch: &SequenceBatch, reverse: bool) -> Vec<Array> {
    let d = table.cols();
    (0..batch.max_len())
        .map(|t| {
            let n = batch.active(t);
            let mut data = Vec::with_capacity(n * d);
            for s in &seqs[..n] {
                let pos = if reverse { s.len() - 1 - t } else { t };
                data.extend_from_slice(table.row(s[pos]));
            }
            Array::matrix(n, d, data)
        })
        .collect()
}

/// Scatters per-step input gradients produced by `embed_steps` back into the
/// embedding-table gradient.
pub fn embed_steps_backward(d_inputs: &[Array], seqs: &[&[usize]], reverse: bool, grad_table: &mut Array) {
    for (t, d) in d_inputs.iter().enumerate() {
        for r in 0..d.rows() {
            let s = seqs[r];
            let pos = if reverse { s.len() - 1 - t } else { t };
            for (g, v) in grad_table.row_mut(s[pos]).iter_mut().zip(d.row(r)) {
                *g += v;
            }
        }
    }
}

/// Everything a batched backward pass needs from the forward pass. Per-step
/// quantities are stacked row-wise: step `t` occupies rows
/// `offsets[t]..offsets[t + 1]`.
#[derive(Debug)]
pub struct LstmTrace {
    batch: usize,
    offsets: Vec<usize>,
    /// Step inputs, `rows x input`.
    inputs: Vec<f64>,
    /// Hidden state entering each step, `rows x H`.
    prev_hidden: Vec<f64>,
    /// Post-activation gates, `rows x 4H`.
    gates: Vec<f64>,
    cell_prev: Vec<f64>,
    tanh_cell: Vec<f64>,
}

#[derive(Debug)]
pub struct LstmBatchOutput {
    /// Hidden state after each step, `n_t x H` (only the active prefix).
    pub outputs: Vec<Array>,
    /// Each row's hidden state after its own last step, `batch x H`.
    pub final_hidden: Array,
}

/// Runs the cell over a length-sorted batch. `inputs[t]` holds the active
/// prefix at step `t`; initial states are zero.
///
/// The input half of every gate pre-activation is computed for all steps in
/// one product; only the recurrent half is done step by step.
pub fn lstm_forward_batch(params: &LstmParams, inputs: &[Array], batch: usize) -> (LstmBatchOutput, LstmTrace) {
    let h = params.hidden_dim();
    let inp = params.input_dim();
    let width = inp + h;
    let w = params.weight.data();
    let mut offsets = Vec::with_capacity(inputs.len() + 1);
    offsets.push(0);
    for x in inputs {
        debug_assert!(x.rows() <= batch);
        debug_assert_eq!(x.cols(), inp);
        offsets.push(offsets.last().unwrap() + x.rows());
    }
    let total = *offsets.last().unwrap();
    let mut stacked = Vec::with_capacity(total * inp);
    for x in inputs {
        stacked.extend_from_slice(x.data());
    }
    let mut gates = Vec::with_capacity(total * 4 * h);
    for _ in 0..total {
        gates.extend_from_slice(params.bias.data());
    }
    gemm_ld(total, inp, 4 * h, 1.0, &stacked, inp, Trans::No, w, width, Trans::Yes, 1.0, &mut gates, 4 * h);
    // contiguous transpose of the recurrent block, reused by every step
    let mut w_rec_t = vec![0.0; h * 4 * h];
    for g in 0..4 * h {
        for k in 0..h {
            w_rec_t[k * 4 * h + g] = w[g * width + inp + k];
        }
    }
    let mut hid = vec![0.0; batch * h];
    let mut cell = vec![0.0; batch * h];
    let mut prev_hidden = vec![0.0; total * h];
    let mut cell_prev = vec![0.0; total * h];
    let mut tanh_cell = vec![0.0; total * h];
    let mut outputs = Vec::with_capacity(inputs.len());
    for t in 0..inputs.len() {
        let (o0, n) = (offsets[t], offsets[t + 1] - offsets[t]);
        prev_hidden[o0 * h..(o0 + n) * h].copy_from_slice(&hid[..n * h]);
        cell_prev[o0 * h..(o0 + n) * h].copy_from_slice(&cell[..n * h]);
        let g_all = &mut gates[o0 * 4 * h..(o0 + n) * 4 * h];
        gemm_ld(n, h, 4 * h, 1.0, &hid, h, Trans::No, &w_rec_t, 4 * h, Trans::No, 1.0, g_all, 4 * h);
        let mut out = vec![0.0; n * h];
        for r in 0..n {
            let g = &mut g_all[r * 4 * h..(r + 1) * 4 * h];
            for k in 0..h {
                g[k] = sigmoid(g[k]);
                g[h + k] = sigmoid(g[h + k]);
                g[2 * h + k] = tanh(g[2 * h + k]);
                g[3 * h + k] = sigmoid(g[3 * h + k]);
                let c = g[h + k] * cell[r * h + k] + g[k] * g[2 * h + k];
                let tc = tanh(c);
                cell[r * h + k] = c;
                tanh_cell[(o0 + r) * h + k] = tc;
                out[r * h + k] = g[3 * h + k] * tc;
            }
        }
        hid[..n * h].copy_from_slice(&out);
        outputs.push(Array::matrix(n, h, out));
    }
    (
        LstmBatchOutput {
            outputs,
            final_hidden: Array::matrix(batch, h, hid),
        },
        LstmTrace {
            batch,
            offsets,
            inputs: stacked,
            prev_hidden,
            gates,
            cell_prev,
            tanh_cell,
        },
    )
}

/// Backpropagation through time. `d_outputs[t]` (if given) is the gradient
/// with respect to `outputs[t]`; `d_final` (if given) the gradient with
/// respect to `final_hidden`. Returns the gradient for each step's input.
pub fn lstm_backward_batch(
    params: &LstmParams,
    trace: &LstmTrace,
    d_outputs: Option<&[Array]>,
    d_final: Option<&Array>,
    grad: &mut LstmParams,
) -> Vec<Array> {
    let h = params.hidden_dim();
    let inp = params.input_dim();
    let width = inp + h;
    let w = params.weight.data();
    let steps = trace.offsets.len() - 1;
    let total = trace.offsets[steps];
    let mut dh = match d_final {
        Some(d) => d.data().to_vec(),
        None => vec![0.0; trace.batch * h],
    };
    let mut dc = vec![0.0; trace.batch * h];
    let mut dpre = vec![0.0; total * 4 * h];
    for t in (0..steps).rev() {
        let (o0, n) = (trace.offsets[t], trace.offsets[t + 1] - trace.offsets[t]);
        if let Some(d) = d_outputs {
            for (a, b) in dh[..n * h].iter_mut().zip(d[t].data()) {
                *a += b;
            }
        }
        for r in 0..n {
            let row = o0 + r;
            let g = &trace.gates[row * 4 * h..(row + 1) * 4 * h];
            let dp = &mut dpre[row * 4 * h..(row + 1) * 4 * h];
            for k in 0..h {
                let (i, f, gg, o) = (g[k], g[h + k], g[2 * h + k], g[3 * h + k]);
                let tc = trace.tanh_cell[row * h + k];
                let dhk = dh[r * h + k];
                let dct = dc[r * h + k] + dhk * o * (1.0 - tc * tc);
                dp[k] = dct * gg * i * (1.0 - i);
                dp[h + k] = dct * trace.cell_prev[row * h + k] * f * (1.0 - f);
                dp[2 * h + k] = dct * i * (1.0 - gg * gg);
                dp[3 * h + k] = dhk * tc * o * (1.0 - o);
                dc[r * h + k] = dct * f;
            }
        }
        // gradient flowing into the previous hidden state
        gemm_ld(
            n,
            4 * h,
            h,
            1.0,
            &dpre[o0 * 4 * h..],
            4 * h,
            Trans::No,
            &w[inp..],
            width,
            Trans::No,
            0.0,
            &mut dh,
            h,
        );
    }
    let gw = grad.weight.data_mut();
    gemm_ld(4 * h, total, inp, 1.0, &dpre, 4 * h, Trans::Yes, &trace.inputs, inp, Trans::No, 1.0, gw, width);
    gemm_ld(4 * h, total, h, 1.0, &dpre, 4 * h, Trans::Yes, &trace.prev_hidden, h, Trans::No, 1.0, &mut gw[inp..], width);
    add_col_sums(&dpre, total, 4 * h, grad.bias.data_mut());
    let mut dx = vec![0.0; total * inp];
    gemm_ld(total, 4 * h, inp, 1.0, &dpre, 4 * h, Trans::No, w, width, Trans::No, 0.0, &mut dx, inp);
    (0..steps)
        .map(|t| {
            let (a, b) = (trace.offsets[t], trace.offsets[t + 1]);
            Array::matrix(b - a, inp, dx[a * inp..b * inp].to_vec())
        })
        .collect()
}
