use crate::numeric::RngStream;

/// Every random quantity one ELBO evaluation consumes. Making it explicit
/// lets gradient checks freeze the noise and lets the batched engine be
/// compared against the reference path draw for draw.
#[derive(Clone, Debug, PartialEq)]
pub struct ExampleNoise {
    /// Standard-normal noise for `u`.
    pub eps_u: Vec<f64>,
    /// Standard-normal noise for `z`.
    pub eps_z: Vec<f64>,
    /// `keep[s]` is false when the decoder input token at step `s` is dropped.
    pub keep: Vec<bool>,
}

impl ExampleNoise {
    /// Draws noise for a context of `len` tokens (`len - 1` decoder steps).
    pub fn draw(dim: usize, len: usize, token_dropout: f64, rng: &mut RngStream) -> Self {
        let eps_u = rng.normals(dim);
        let eps_z = rng.normals(dim);
        let keep = (0..len.saturating_sub(1))
            .map(|_| token_dropout <= 0.0 || rng.uniform() >= token_dropout)
            .collect();
        ExampleNoise { eps_u, eps_z, keep }
    }

    /// Noise with every token kept.
    pub fn no_dropout(dim: usize, len: usize, rng: &mut RngStream) -> Self {
        Self::draw(dim, len, 0.0, rng)
    }
}
