//! Turning tagged sentences and dataset rows into model inputs.

use serde::{Deserialize, Serialize};

use super::io::MentionRecord;
use super::labels::LabeledMention;
use super::sentence::{expand_pairs, mask_entities, EntityMode, MaskedContext, TaggedSentence};
use super::vocab::{build_vocab, filter_and_encode, Context, Encoded, EntityVocab, Vocabulary};
use super::MAX_SENTENCE_TOKENS;
use crate::error::{Error, Result};

/// One (entity pair, sentence) instance encoded for the representation model.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextExample {
    pub x: usize,
    pub y: usize,
    pub context: Context,
    /// Index of the source sentence.
    pub sentence: usize,
}

/// Every masked context of a corpus, one per mention pair per sentence.
pub fn masked_contexts(sentences: &[TaggedSentence]) -> Result<Vec<(usize, MaskedContext)>> {
    let mut out = Vec::new();
    for (i, s) in sentences.iter().enumerate() {
        for pair in expand_pairs(s) {
            out.push((i, mask_entities(s, pair)?));
        }
    }
    Ok(out)
}

/// Vocabulary over the masked contexts of sentences that pass the length filter.
pub fn corpus_vocab(masked: &[(usize, MaskedContext)], min_count: usize, max_size: usize) -> Result<Vocabulary> {
    build_vocab(
        masked
            .iter()
            .filter(|(_, m)| m.source_len <= MAX_SENTENCE_TOKENS)
            .map(|(_, m)| &m.tokens),
        min_count,
        max_size,
    )
}

/// Entity-input table over every mention in the corpus.
pub fn corpus_entities(sentences: &[TaggedSentence], mode: EntityMode) -> EntityVocab {
    EntityVocab::build(sentences.iter().flat_map(|s| {
        s.mentions.iter().map(move |m| match mode {
            EntityMode::Types => m.entity_type.clone(),
            EntityMode::Identifiers => m.entity_id.clone(),
        })
    }))
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EncodeReport {
    pub examples: Vec<ContextExample>,
    /// Instances dropped by the length filter.
    pub too_long: usize,
}

pub fn encode_contexts(
    masked: &[(usize, MaskedContext)],
    vocab: &Vocabulary,
    entities: &EntityVocab,
    mode: EntityMode,
) -> Result<EncodeReport> {
    let mut report = EncodeReport::default();
    for (sentence, m) in masked {
        match filter_and_encode(m, vocab) {
            Encoded::TooLong { .. } => report.too_long += 1,
            Encoded::Context(context) => report.examples.push(ContextExample {
                x: entities.id(m.x.input(mode))?,
                y: entities.id(m.y.input(mode))?,
                context,
                sentence: *sentence,
            }),
        }
    }
    Ok(report)
}

/// Encodes mention-dataset rows in type mode. Rows longer than the length
/// limit are rejected, since dropping labelled examples silently would skew
/// evaluation.
pub fn encode_mentions(
    records: &[MentionRecord],
    vocab: &Vocabulary,
    entities: &EntityVocab,
) -> Result<Vec<LabeledMention>> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            if r.tokens.len() > MAX_SENTENCE_TOKENS {
                return Err(Error::invalid(format!("mention row {i} exceeds {MAX_SENTENCE_TOKENS} tokens")));
            }
            let mut ids = Vec::with_capacity(r.tokens.len() + 2);
            ids.push(super::vocab::BOS_ID);
            ids.extend(vocab.encode(&r.tokens));
            ids.push(super::vocab::EOS_ID);
            Ok(LabeledMention {
                x: entities.id(&r.x_type)?,
                y: entities.id(&r.y_type)?,
                context: Context::from_ids(ids)?,
                r: r.label,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::io::parse_corpus_line;

    #[test]
    fn every_context_has_two_slots() {
        let s = parse_corpus_line("a b c d e\t0,1,GENE,A;2,3,GENE,B;4,5,DISEASE,C", 1).unwrap();
        let masked = masked_contexts(std::slice::from_ref(&s)).unwrap();
        assert_eq!(masked.len(), 3);
        let vocab = corpus_vocab(&masked, 1, 100).unwrap();
        let ents = corpus_entities(std::slice::from_ref(&s), EntityMode::Identifiers);
        let rep = encode_contexts(&masked, &vocab, &ents, EntityMode::Identifiers).unwrap();
        for e in &rep.examples {
            e.context.validate(vocab.len()).unwrap();
        }
        assert_eq!(rep.examples[0].x, ents.id("A").unwrap());
        assert_eq!(rep.examples[2].y, ents.id("C").unwrap());
    }
}
