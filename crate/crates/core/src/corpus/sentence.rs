use serde::{Deserialize, Serialize};

use super::vocab::ENT;
use crate::error::{Error, Result};

/// Sentences longer than this (before framing tokens) are skipped.
pub const MAX_SENTENCE_TOKENS: usize = 140;

/// A tagged entity span `[start, end)` over sentence tokens.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub start: usize,
    pub end: usize,
    pub entity_type: String,
    pub entity_id: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedSentence {
    pub tokens: Vec<String>,
    pub mentions: Vec<Mention>,
}

impl TaggedSentence {
    /// Mentions must be in bounds, non-empty, sorted by start and disjoint.
    pub fn validate(&self) -> Result<()> {
        let mut prev_end = 0;
        for (i, m) in self.mentions.iter().enumerate() {
            if m.start >= m.end || m.end > self.tokens.len() {
                return Err(Error::invalid(format!(
                    "mention {i} span [{}, {}) is empty or outside {} tokens",
                    m.start,
                    m.end,
                    self.tokens.len()
                )));
            }
            if i > 0 && m.start < prev_end {
                return Err(Error::invalid(format!(
                    "mention {i} overlaps or precedes the previous mention"
                )));
            }
            prev_end = m.end;
        }
        Ok(())
    }
}

/// How the two entities of a context are presented to the model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityMode {
    /// Entity types such as `GENE`; used for mention-level classification.
    Types,
    /// Unique entity identifiers; used for pair-level classification.
    Identifiers,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityRef {
    pub entity_type: String,
    pub entity_id: String,
}

impl EntityRef {
    pub fn input(&self, mode: EntityMode) -> &str {
        match mode {
            EntityMode::Types => &self.entity_type,
            EntityMode::Identifiers => &self.entity_id,
        }
    }
}

/// A sentence with its two chosen entity spans collapsed to `<ENT>`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskedContext {
    /// Entity whose span comes first in the sentence.
    pub x: EntityRef,
    pub y: EntityRef,
    pub tokens: Vec<String>,
    pub t_x: usize,
    pub t_y: usize,
    /// Token count of the unmasked sentence.
    pub source_len: usize,
}

/// Masks the mentions at indices `pair` of `sentence`.
///
/// The mention that starts earlier becomes `x`. Tokens of any other mention
/// are left untouched. The masked tokens are the same in both entity modes;
/// `mode` only matters when the caller reads `x.input(mode)`.
pub fn mask_entities(sentence: &TaggedSentence, pair: (usize, usize)) -> Result<MaskedContext> {
    let (a, b) = pair;
    let n = sentence.mentions.len();
    if a >= n || b >= n {
        return Err(Error::invalid(format!("mention index out of range for {n} mentions")));
    }
    if a == b {
        return Err(Error::invalid("the two chosen mentions must be distinct"));
    }
    let (ma, mb) = (&sentence.mentions[a], &sentence.mentions[b]);
    let (first, second) = if ma.start <= mb.start { (ma, mb) } else { (mb, ma) };
    if first.end > second.start {
        return Err(Error::invalid("the two chosen mentions overlap"));
    }
    if second.end > sentence.tokens.len() || first.start >= first.end || second.start >= second.end {
        return Err(Error::invalid("mention span outside the sentence"));
    }
    let mut tokens = Vec::with_capacity(sentence.tokens.len());
    tokens.extend_from_slice(&sentence.tokens[..first.start]);
    let t_x = tokens.len();
    tokens.push(ENT.to_string());
    tokens.extend_from_slice(&sentence.tokens[first.end..second.start]);
    let t_y = tokens.len();
    tokens.push(ENT.to_string());
    tokens.extend_from_slice(&sentence.tokens[second.end..]);
    let entity = |m: &Mention| EntityRef {
        entity_type: m.entity_type.clone(),
        entity_id: m.entity_id.clone(),
    };
    Ok(MaskedContext {
        x: entity(first),
        y: entity(second),
        tokens,
        t_x,
        t_y,
        source_len: sentence.tokens.len(),
    })
}

/// Every unordered pair of mentions, each oriented by sentence position.
pub fn expand_pairs(sentence: &TaggedSentence) -> Vec<(usize, usize)> {
    let n = sentence.mentions.len();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            if sentence.mentions[i].start <= sentence.mentions[j].start {
                out.push((i, j));
            } else {
                out.push((j, i));
            }
        }
    }
    out
}

/// Whitespace tokenisation that also splits off punctuation characters.
/// The literal `<ENT>` survives as a single token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut word = String::new();
        let mut i = 0;
        while i < chunk.len() {
            let rest = &chunk[i..];
            if rest.starts_with(ENT) {
                if !word.is_empty() {
                    out.push(std::mem::take(&mut word));
                }
                out.push(ENT.to_string());
                i += ENT.len();
                continue;
            }
            let c = rest.chars().next().unwrap_or(' ');
            if c.is_ascii_punctuation() {
                if !word.is_empty() {
                    out.push(std::mem::take(&mut word));
                }
                out.push(c.to_string());
            } else {
                word.push(c);
            }
            i += c.len_utf8();
        }
        if !word.is_empty() {
            out.push(word);
        }
    }
    out
}
