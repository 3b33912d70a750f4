use super::config::ReprConfig;
use crate::error::{Error, Result};
use crate::numeric::params::{join, uniform_init};
use crate::numeric::{Activation, Array, BiLstmParams, FeedForward, LstmParams, ParamSet, RngStream};

/// Every trainable array of the representation model.
///
/// Token embeddings are shared by the encoder input, the decoder input and
/// the output layer. Entity inputs have their own table.
#[derive(Clone, Debug, PartialEq)]
pub struct ReprParams {
    /// `V x d`.
    pub tok_emb: Array,
    /// `E x d`.
    pub ent_emb: Array,
    /// `[e(x); e(y); e(x)*e(y); u]` (4d) to `H` to `2d`.
    pub prior: FeedForward,
    /// Input `[z; e(c_{t-1})]` (2d).
    pub decoder: LstmParams,
    /// `d x H`: maps the decoder state into embedding space.
    pub out_proj: Array,
    pub encoder: BiLstmParams,
    /// `[e(x); e(y); e(x)*e(y); h_q]` (3d + 2H) to `H` to `2d`.
    pub inference: FeedForward,
}

impl ReprParams {
    pub fn new(config: &ReprConfig, vocab_size: usize, entities: usize, rng: &mut RngStream) -> Result<Self> {
        config.validate()?;
        if vocab_size == 0 || entities == 0 {
            return Err(Error::invalid("vocabulary and entity table must be non-empty"));
        }
        let (d, h) = (config.dim, config.hidden);
        Ok(ReprParams {
            tok_emb: uniform_init(&[vocab_size, d], d, rng),
            ent_emb: uniform_init(&[entities, d], d, rng),
            prior: FeedForward::new(&[4 * d, h, 2 * d], Activation::Relu, rng),
            decoder: LstmParams::new(2 * d, h, rng),
            out_proj: uniform_init(&[d, h], h, rng),
            encoder: BiLstmParams::new(d, h, rng),
            inference: FeedForward::new(&[3 * d + 2 * h, h, 2 * d], Activation::Relu, rng),
        })
    }

    pub fn dim(&self) -> usize {
        self.tok_emb.cols()
    }

    pub fn hidden(&self) -> usize {
        self.decoder.hidden_dim()
    }

    pub fn vocab_size(&self) -> usize {
        self.tok_emb.rows()
    }

    pub fn entity_count(&self) -> usize {
        self.ent_emb.rows()
    }

    pub fn check_entity(&self, id: usize) -> Result<()> {
        if id >= self.entity_count() {
            return Err(Error::invalid(format!(
                "entity id {id} outside table of {}",
                self.entity_count()
            )));
        }
        Ok(())
    }

    /// Zeroes the final layer of both latent heads, making `q(u)` and
    /// `p(z|x,y,u)` standard normal.
    pub fn zero_latent_heads(&mut self) {
        for ff in [&mut self.prior, &mut self.inference] {
            let last = ff.layers.last_mut().expect("non-empty feedforward");
            last.weight.fill(0.0);
            last.bias.fill(0.0);
        }
    }

    /// Parameter count implied by a configuration.
    pub fn expected_count(config: &ReprConfig, vocab_size: usize, entities: usize) -> usize {
        let (d, h) = (config.dim, config.hidden);
        let lstm = |inp: usize| 4 * h * (inp + h) + 4 * h;
        let ff = |inp: usize| inp * h + h + h * 2 * d + 2 * d;
        vocab_size * d + entities * d + ff(4 * d) + lstm(2 * d) + d * h + 2 * lstm(d) + ff(3 * d + 2 * h)
    }
}

impl ParamSet for ReprParams {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Array)>) {
        out.push((join(prefix, "tok_emb"), &self.tok_emb));
        out.push((join(prefix, "ent_emb"), &self.ent_emb));
        self.prior.visit(&join(prefix, "prior"), out);
        self.decoder.visit(&join(prefix, "decoder"), out);
        out.push((join(prefix, "out_proj"), &self.out_proj));
        self.encoder.visit(&join(prefix, "encoder"), out);
        self.inference.visit(&join(prefix, "inference"), out);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Array)>) {
        out.push((join(prefix, "tok_emb"), &mut self.tok_emb));
        out.push((join(prefix, "ent_emb"), &mut self.ent_emb));
        self.prior.visit_mut(&join(prefix, "prior"), out);
        self.decoder.visit_mut(&join(prefix, "decoder"), out);
        out.push((join(prefix, "out_proj"), &mut self.out_proj));
        self.encoder.visit_mut(&join(prefix, "encoder"), out);
        self.inference.visit_mut(&join(prefix, "inference"), out);
    }
}
