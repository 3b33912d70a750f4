use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::sentence::{MaskedContext, MAX_SENTENCE_TOKENS};
use crate::error::{Error, Result};

pub const PAD: &str = "<PAD>";
pub const BOS: &str = "<BOS>";
pub const EOS: &str = "<EOS>";
pub const UNK: &str = "<UNK>";
pub const ENT: &str = "<ENT>";

pub const PAD_ID: usize = 0;
pub const BOS_ID: usize = 1;
pub const EOS_ID: usize = 2;
pub const UNK_ID: usize = 3;
pub const ENT_ID: usize = 4;

const RESERVED: [&str; 5] = [PAD, BOS, EOS, UNK, ENT];

/// Token vocabulary. Reserved tokens occupy ids 0 to 4.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        Vocabulary::from_tokens(tokens)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Vocabulary {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < RESERVED.len() || tokens[..RESERVED.len()] != RESERVED {
            return Err(Error::invalid("vocabulary must start with the reserved tokens"));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<&str> {
        ids.iter().map(|&i| self.token(i).unwrap_or(UNK)).collect()
    }
}

/// Builds a vocabulary from a stream of token sequences.
///
/// Non-reserved tokens are ordered by descending count, ties broken
/// lexicographically. Tokens seen fewer than `min_count` times, or that do not
/// fit in `max_size` entries (reserved tokens included), are left out and so
/// encode as `<UNK>`.
pub fn build_vocab<I, S>(stream: I, min_count: usize, max_size: usize) -> Result<Vocabulary>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[String]>,
{
    if max_size < RESERVED.len() {
        return Err(Error::invalid(format!(
            "max_size {max_size} cannot hold the {} reserved tokens",
            RESERVED.len()
        )));
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    let mut sentences = 0usize;
    for seq in stream {
        sentences += 1;
        for t in seq.as_ref() {
            if !RESERVED.contains(&t.as_str()) {
                *counts.entry(t.clone()).or_default() += 1;
            }
        }
    }
    if sentences == 0 {
        return Err(Error::invalid("cannot build a vocabulary from an empty corpus"));
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().filter(|(_, c)| *c >= min_count.max(1)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
    tokens.extend(ranked.into_iter().take(max_size - RESERVED.len()).map(|(t, _)| t));
    Vocabulary::from_tokens(tokens)
}

/// Lookup table for entity inputs (types or identifiers), sorted by name.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct EntityVocab {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl TryFrom<Vec<String>> for EntityVocab {
    type Error = Error;

    fn try_from(names: Vec<String>) -> Result<Self> {
        let n = names.len();
        let index: HashMap<String, usize> = names.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        if index.len() != n {
            return Err(Error::invalid("duplicate entity name"));
        }
        Ok(EntityVocab { names, index })
    }
}

impl From<EntityVocab> for Vec<String> {
    fn from(v: EntityVocab) -> Self {
        v.names
    }
}

impl EntityVocab {
    pub fn build<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = names.into_iter().map(Into::into).collect();
        let names: Vec<String> = set.into_iter().collect();
        let index = names.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        EntityVocab { names, index }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::invalid(format!("unknown entity {name:?}")))
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// An encoded context: `<BOS>`, the masked sentence, `<EOS>`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Context {
    pub token_ids: Vec<usize>,
    pub t_x: usize,
    pub t_y: usize,
}

impl Context {
    /// Builds a context from framed token ids, locating the two `<ENT>`s.
    pub fn from_ids(token_ids: Vec<usize>) -> Result<Self> {
        let ents: Vec<usize> = token_ids
            .iter()
            .enumerate()
            .filter(|(_, &t)| t == ENT_ID)
            .map(|(i, _)| i)
            .collect();
        if ents.len() != 2 {
            return Err(Error::invalid(format!(
                "a context needs exactly two {ENT} tokens, found {}",
                ents.len()
            )));
        }
        if token_ids.len() < 2 {
            return Err(Error::invalid("a context needs at least the framing tokens"));
        }
        Ok(Context {
            t_x: ents[0],
            t_y: ents[1],
            token_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        if self.token_ids.len() < 2 {
            return Err(Error::invalid("context is shorter than its framing tokens"));
        }
        if let Some(&bad) = self.token_ids.iter().find(|&&t| t >= vocab_size) {
            return Err(Error::invalid(format!("token id {bad} outside vocabulary of {vocab_size}")));
        }
        let ents = self.token_ids.iter().filter(|&&t| t == ENT_ID).count();
        if ents != 2 || self.t_x >= self.t_y || self.token_ids[self.t_x] != ENT_ID || self.token_ids[self.t_y] != ENT_ID {
            return Err(Error::invalid("context must hold exactly two entity slots with t_x < t_y"));
        }
        Ok(())
    }
}

/// Outcome of encoding one masked sentence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Encoded {
    Context(Context),
    /// The source sentence exceeds the length limit.
    TooLong { tokens: usize },
}

/// Frames and encodes a masked sentence, skipping sentences whose source
/// exceeds `MAX_SENTENCE_TOKENS`. Unknown words become `<UNK>`.
pub fn filter_and_encode(masked: &MaskedContext, vocab: &Vocabulary) -> Encoded {
    if masked.source_len > MAX_SENTENCE_TOKENS {
        return Encoded::TooLong {
            tokens: masked.source_len,
        };
    }
    let mut ids = Vec::with_capacity(masked.tokens.len() + 2);
    ids.push(BOS_ID);
    ids.extend(vocab.encode(&masked.tokens));
    ids.push(EOS_ID);
    Encoded::Context(Context {
        token_ids: ids,
        t_x: masked.t_x + 1,
        t_y: masked.t_y + 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::sentence::{mask_entities, Mention, TaggedSentence};

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn reserved_then_frequency_order() {
        let v = build_vocab([toks("a a b")], 1, 100).unwrap();
        assert_eq!(v.tokens()[..5], RESERVED.map(String::from));
        assert_eq!(v.id("a"), 5);
        assert_eq!(v.id("b"), 6);
    }

    #[test]
    fn min_count_drops_rare_tokens() {
        let v = build_vocab([toks("a a b")], 2, 100).unwrap();
        assert!(!v.contains("b"));
        assert_eq!(v.id("b"), UNK_ID);
    }

    #[test]
    fn ties_break_lexicographically_and_max_size_caps() {
        let v = build_vocab([toks("c b a c b a d")], 1, 7).unwrap();
        assert_eq!(v.len(), 7);
        assert_eq!(v.id("a"), 5);
        assert_eq!(v.id("b"), 6);
        assert_eq!(v.id("c"), UNK_ID);
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let none: Vec<Vec<String>> = vec![];
        assert!(build_vocab(none, 1, 10).is_err());
    }

    #[test]
    fn builds_are_deterministic() {
        let corpus = vec![toks("x y z y"), toks("z z q")];
        assert_eq!(build_vocab(&corpus, 1, 50).unwrap(), build_vocab(&corpus, 1, 50).unwrap());
    }

    fn long_sentence(n: usize) -> TaggedSentence {
        TaggedSentence {
            tokens: (0..n).map(|i| format!("w{i}")).collect(),
            mentions: vec![
                Mention { start: 0, end: 1, entity_type: "GENE".into(), entity_id: "a".into() },
                Mention { start: 2, end: 3, entity_type: "GENE".into(), entity_id: "b".into() },
            ],
        }
    }

    #[test]
    fn length_filter_boundary() {
        let vocab = build_vocab([toks("w1")], 1, 10).unwrap();
        let m = mask_entities(&long_sentence(141), (0, 1)).unwrap();
        assert_eq!(filter_and_encode(&m, &vocab), Encoded::TooLong { tokens: 141 });
        let m = mask_entities(&long_sentence(140), (0, 1)).unwrap();
        match filter_and_encode(&m, &vocab) {
            Encoded::Context(c) => {
                assert_eq!(c.len(), 142);
                assert_eq!(c.token_ids[2], vocab.id("w1"));
                assert_eq!(c.token_ids[4], UNK_ID);
                c.validate(vocab.len()).unwrap();
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn entity_vocab_rejects_unknown() {
        let e = EntityVocab::build(["GENE", "DISEASE", "GENE"]);
        assert_eq!(e.len(), 2);
        assert_eq!(e.id("DISEASE").unwrap(), 0);
        assert!(e.id("CHEMICAL").is_err());
    }

    #[test]
    fn vocabulary_serde_round_trip() {
        let v = build_vocab([toks("a b c")], 1, 10).unwrap();
        let s = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&s).unwrap();
        assert_eq!(v, back);
    }
}
