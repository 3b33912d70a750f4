use super::config::ReprConfig;
use super::params::ReprParams;
use crate::corpus::vocab::{BOS_ID, ENT_ID, EOS_ID};
use crate::corpus::Context;
use crate::numeric::RngStream;

pub const V: usize = 12;
pub const E: usize = 3;

pub fn tiny_config() -> ReprConfig {
    ReprConfig {
        hidden: 8,
        dim: 4,
        ..ReprConfig::default()
    }
}

/// Tiny model with biases perturbed so every path carries gradient.
pub fn tiny(seed: u64) -> ReprParams {
    let mut rng = RngStream::new(seed, 11);
    let mut p = ReprParams::new(&tiny_config(), V, E, &mut rng).unwrap();
    use crate::numeric::ParamSet;
    for (_, a) in p.arrays_mut() {
        for v in a.data_mut() {
            *v += 0.1 * rng.normal();
        }
    }
    p
}

pub fn ctx(middle: &[usize]) -> Context {
    let mut ids = vec![BOS_ID];
    ids.extend_from_slice(middle);
    ids.push(EOS_ID);
    Context::from_ids(ids).unwrap()
}

pub fn contexts() -> Vec<Context> {
    vec![
        ctx(&[ENT_ID, 7, ENT_ID]),
        ctx(&[5, ENT_ID, ENT_ID, 9]),
        ctx(&[ENT_ID, 6, 8, ENT_ID]),
        ctx(&[ENT_ID, ENT_ID]),
    ]
}
