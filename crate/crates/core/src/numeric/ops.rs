use serde::{Deserialize, Serialize};

use super::array::Array;
use crate::error::{Error, Result};

/// Log-variance heads are clamped to this range.
pub const LOG_VAR_MIN: f64 = -10.0;
pub const LOG_VAR_MAX: f64 = 10.0;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `tanh` through a single `exp`; absolute error is a few ulps and the
/// saturated ends give exactly +-1.
#[inline]
pub fn tanh(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        return x.tanh();
    }
    1.0 - 2.0 / (1.0 + (2.0 * x).exp())
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// In-place softmax with max subtraction.
pub fn softmax_in_place(xs: &mut [f64]) {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - m).exp();
        s += *x;
    }
    for x in xs.iter_mut() {
        *x /= s;
    }
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let mut out = xs.to_vec();
    softmax_in_place(&mut out);
    out
}

/// Log-softmax of `logits` evaluated at `index`.
pub fn categorical_log_prob(logits: &[f64], index: usize) -> Result<f64> {
    if index >= logits.len() {
        return Err(Error::invalid(format!(
            "class index {index} out of range for {} logits",
            logits.len()
        )));
    }
    Ok(logits[index] - log_sum_exp(logits))
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

#[inline]
pub fn clamp_log_var(raw: f64) -> f64 {
    raw.clamp(LOG_VAR_MIN, LOG_VAR_MAX)
}

/// Derivative of the clamp, taken as 1 on the closed interval.
#[inline]
pub fn clamp_log_var_grad(raw: f64) -> f64 {
    if (LOG_VAR_MIN..=LOG_VAR_MAX).contains(&raw) {
        1.0
    } else {
        0.0
    }
}

/// Diagonal Gaussian parameterised by mean and (clamped) log-variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub mean: Array,
    pub log_variance: Array,
}

impl GaussianParams {
    pub fn new(mean: Array, log_variance: Array) -> Result<Self> {
        if mean.shape() != log_variance.shape() {
            return Err(Error::invalid(format!(
                "mean shape {:?} differs from log-variance shape {:?}",
                mean.shape(),
                log_variance.shape()
            )));
        }
        let mut log_variance = log_variance;
        log_variance.data_mut().iter_mut().for_each(|v| *v = clamp_log_var(*v));
        Ok(GaussianParams { mean, log_variance })
    }

    pub fn standard(dim: usize) -> Self {
        GaussianParams {
            mean: Array::zeros(&[dim]),
            log_variance: Array::zeros(&[dim]),
        }
    }

    /// Splits a `2d` head output into mean (first half) and log-variance.
    pub fn from_head(raw: &[f64]) -> Result<Self> {
        if !raw.len().is_multiple_of(2) || raw.is_empty() {
            return Err(Error::invalid(format!(
                "gaussian head needs an even positive width, got {}",
                raw.len()
            )));
        }
        let d = raw.len() / 2;
        GaussianParams::new(
            Array::vector(raw[..d].to_vec()),
            Array::vector(raw[d..].to_vec()),
        )
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// `mean + exp(log_variance / 2) * noise`.
pub fn gaussian_reparameterize(params: &GaussianParams, noise: &[f64]) -> Result<Array> {
    if noise.len() != params.dim() {
        return Err(Error::invalid(format!(
            "noise length {} differs from gaussian dimension {}",
            noise.len(),
            params.dim()
        )));
    }
    Ok(Array::vector(
        params
            .mean
            .data()
            .iter()
            .zip(params.log_variance.data())
            .zip(noise)
            .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
            .collect(),
    ))
}

/// KL divergence from `N(mean, exp(log_variance))` to `N(0, I)`.
pub fn gaussian_kl_to_standard(params: &GaussianParams) -> f64 {
    kl_to_standard_parts(params.mean.data(), params.log_variance.data())
}

pub(crate) fn kl_to_standard_parts(mean: &[f64], log_var: &[f64]) -> f64 {
    0.5 * mean
        .iter()
        .zip(log_var)
        .map(|(m, lv)| m * m + lv.exp() - 1.0 - lv)
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn uniform_logits_give_log_quarter() {
        let lp = categorical_log_prob(&[0.3; 4], 2).unwrap();
        assert_abs_diff_eq!(lp, (0.25f64).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(lp, -1.386294, epsilon = 1e-6);
    }

    #[test]
    fn log_prob_is_shift_invariant() {
        let logits = [1.0, -2.0, 0.5];
        let shifted: Vec<f64> = logits.iter().map(|v| v + 123.0).collect();
        for i in 0..3 {
            assert_abs_diff_eq!(
                categorical_log_prob(&logits, i).unwrap(),
                categorical_log_prob(&shifted, i).unwrap(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn peaked_logits() {
        let lp = categorical_log_prob(&[10.0, 0.0, 0.0], 0).unwrap();
        let want = -(1.0 + 2.0 * (-10.0f64).exp()).ln();
        assert_abs_diff_eq!(lp, want, epsilon = 1e-15);
        assert_abs_diff_eq!(lp, -9.08e-5, epsilon = 1e-7);
    }

    #[test]
    fn log_prob_rejects_bad_index() {
        assert!(categorical_log_prob(&[0.0, 1.0], 2).is_err());
    }

    #[test]
    fn reparameterize_examples() {
        let g = GaussianParams::new(Array::vector(vec![0.5, -1.0]), Array::vector(vec![0.3, 2.0])).unwrap();
        let z = gaussian_reparameterize(&g, &[0.0, 0.0]).unwrap();
        assert_eq!(z.data(), &[0.5, -1.0]);
        let unit = GaussianParams::standard(2);
        let z = gaussian_reparameterize(&unit, &[1.0, -1.0]).unwrap();
        assert_eq!(z.data(), &[1.0, -1.0]);
        assert!(gaussian_reparameterize(&unit, &[1.0]).is_err());
    }

    #[test]
    fn kl_examples() {
        assert_eq!(gaussian_kl_to_standard(&GaussianParams::standard(3)), 0.0);
        let g = GaussianParams::new(Array::vector(vec![1.0]), Array::vector(vec![0.0])).unwrap();
        assert_abs_diff_eq!(gaussian_kl_to_standard(&g), 0.5, epsilon = 1e-15);
        let g = GaussianParams::new(Array::vector(vec![0.0]), Array::vector(vec![1.0])).unwrap();
        assert_abs_diff_eq!(gaussian_kl_to_standard(&g), (std::f64::consts::E - 2.0) / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn log_variance_is_clamped() {
        let g = GaussianParams::new(Array::vector(vec![0.0, 0.0]), Array::vector(vec![-50.0, 50.0])).unwrap();
        assert_eq!(g.log_variance.data(), &[LOG_VAR_MIN, LOG_VAR_MAX]);
    }

    #[test]
    fn mismatched_gaussian_is_rejected() {
        assert!(GaussianParams::new(Array::vector(vec![0.0]), Array::vector(vec![0.0, 1.0])).is_err());
    }
}
