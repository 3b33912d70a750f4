use serde::{Deserialize, Serialize};

use super::array::Array;
use super::params::ParamSet;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            ..Default::default()
        }
    }
}

/// Moment estimates for every array of a `ParamSet`, in canonical order.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    first_moment: Vec<Array>,
    second_moment: Vec<Array>,
}

impl AdamState {
    pub fn new<P: ParamSet>(config: AdamConfig, params: &P) -> Self {
        let zeros: Vec<Array> = params.arrays().iter().map(|(_, a)| Array::zeros(a.shape())).collect();
        AdamState {
            config,
            step: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
        }
    }

    /// One bias-corrected Adam step. Gradients are checked for finiteness
    /// before anything is modified.
    pub fn update<P: ParamSet>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let grad_arrays = grads.arrays();
        if grad_arrays.len() != self.first_moment.len() {
            return Err(Error::invalid("gradient set does not match optimiser state"));
        }
        for ((name, g), m) in grad_arrays.iter().zip(&self.first_moment) {
            if g.shape() != m.shape() {
                return Err(Error::invalid(format!(
                    "gradient for {name} has shape {:?}, parameter has {:?}",
                    g.shape(),
                    m.shape()
                )));
            }
            if !g.all_finite() {
                return Err(Error::Divergence {
                    iteration: self.step,
                    detail: format!("non-finite gradient for parameter {name}"),
                });
            }
        }
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for (((_, p), (_, g)), (m, v)) in params
            .arrays_mut()
            .into_iter()
            .zip(grad_arrays)
            .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()))
        {
            for (((p, &g), m), v) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon);
            }
        }
        Ok(())
    }
}

/// Functional form: applies one step in place and returns the new state.
pub fn adam_update<P: ParamSet>(params: &mut P, grads: &P, mut state: AdamState) -> Result<AdamState> {
    state.update(params, grads)?;
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = Array::vector(vec![1.0, -2.0, 3.0]);
        let g = Array::zeros(&[3]);
        let mut s = AdamState::new(AdamConfig::default(), &p);
        for _ in 0..5 {
            s.update(&mut p, &g).unwrap();
        }
        assert_eq!(p.data(), &[1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let lr = 0.01;
        let mut p = Array::vector(vec![0.0, 0.0]);
        let g = Array::vector(vec![0.37, -5.0]);
        let mut s = AdamState::new(AdamConfig::with_learning_rate(lr), &p);
        s.update(&mut p, &g).unwrap();
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        assert!((p.data()[0] + lr).abs() < 1e-9);
        assert!((p.data()[1] - lr).abs() < 1e-9);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = Array::vector(vec![0.0]);
        let g = Array::vector(vec![f64::NAN]);
        let mut s = AdamState::new(AdamConfig::default(), &p);
        match s.update(&mut p, &g) {
            Err(Error::Divergence { detail, .. }) => assert!(detail.contains("non-finite")),
            other => panic!("expected divergence, got {other:?}"),
        }
        assert_eq!(p.data(), &[0.0]);
        assert_eq!(s.step, 0);
    }

    #[test]
    fn identical_runs_are_bitwise_identical() {
        let run = || {
            let mut p = Array::vector(vec![0.5; 4]);
            let mut s = AdamState::new(AdamConfig::default(), &p);
            for k in 0..50 {
                let g = Array::vector((0..4).map(|i| ((k * 4 + i) as f64 * 0.7).sin()).collect());
                s.update(&mut p, &g).unwrap();
            }
            p
        };
        let (a, b) = (run(), run());
        let bits = |x: &Array| x.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }
}
