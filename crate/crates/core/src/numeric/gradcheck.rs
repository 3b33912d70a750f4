//! Central finite differences over any `ParamSet`.
//!
//! Only evaluates the objective; never touches an analytic backward pass.

use super::params::ParamSet;

/// Step used by every gradient check in the crate.
pub const FD_STEP: f64 = 1e-5;

/// Central-difference gradient of `f` with respect to every element of
/// `params`, returned in the same shape.
pub fn finite_difference<P: ParamSet>(params: &P, f: impl Fn(&P) -> f64) -> P {
    finite_difference_with_step(params, FD_STEP, f)
}

pub fn finite_difference_with_step<P: ParamSet>(params: &P, h: f64, f: impl Fn(&P) -> f64) -> P {
    let mut grad = params.zeros_like();
    let mut work = params.clone();
    let n_arrays = params.arrays().len();
    for a in 0..n_arrays {
        let len = params.arrays()[a].1.len();
        for i in 0..len {
            let orig = work.arrays()[a].1.data()[i];
            work.arrays_mut()[a].1.data_mut()[i] = orig + h;
            let up = f(&work);
            work.arrays_mut()[a].1.data_mut()[i] = orig - h;
            let down = f(&work);
            work.arrays_mut()[a].1.data_mut()[i] = orig;
            grad.arrays_mut()[a].1.data_mut()[i] = (up - down) / (2.0 * h);
        }
    }
    grad
}

/// `||a - b|| / max(||a||, ||b||, 1e-6)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-6)
}

/// Relative error per named array, comparing an analytic gradient with a
/// finite-difference one.
pub fn compare<P: ParamSet>(analytic: &P, numeric: &P) -> Vec<(String, f64)> {
    analytic
        .arrays()
        .into_iter()
        .zip(numeric.arrays())
        .map(|((name, a), (_, n))| (name, relative_error(a.data(), n.data())))
        .collect()
}
