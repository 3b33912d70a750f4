use super::array::Array;
use super::rng::RngStream;

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// A named, ordered collection of trainable arrays.
///
/// The visiting order is the canonical parameter order: Adam state, the
/// checkpoint manifest and gradient buffers all rely on it being stable.
pub trait ParamSet: Clone {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Array)>);
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Array)>);

    fn arrays(&self) -> Vec<(String, &Array)> {
        let mut out = Vec::new();
        self.visit("", &mut out);
        out
    }

    fn arrays_mut(&mut self) -> Vec<(String, &mut Array)> {
        let mut out = Vec::new();
        self.visit_mut("", &mut out);
        out
    }

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, a) in z.arrays_mut() {
            a.fill(0.0);
        }
        z
    }

    fn param_count(&self) -> usize {
        self.arrays().iter().map(|(_, a)| a.len()).sum()
    }

    fn accumulate(&mut self, other: &Self) {
        let theirs = other.arrays();
        for ((_, mine), (_, t)) in self.arrays_mut().into_iter().zip(theirs) {
            mine.add_assign(t);
        }
    }

    fn scale(&mut self, s: f64) {
        for (_, a) in self.arrays_mut() {
            a.scale(s);
        }
    }

    fn l2_norm(&self) -> f64 {
        self.arrays()
            .iter()
            .map(|(_, a)| a.sum_squares())
            .sum::<f64>()
            .sqrt()
    }
}

impl ParamSet for Array {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Array)>) {
        out.push((prefix.to_string(), self));
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Array)>) {
        out.push((prefix.to_string(), self));
    }
}

/// Uniform initialisation in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
pub fn uniform_init(shape: &[usize], fan_in: usize, rng: &mut RngStream) -> Array {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let mut a = Array::zeros(shape);
    for v in a.data_mut() {
        *v = rng.uniform_range(-bound, bound);
    }
    a
}
