use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{expand_pairs, RelationLabel, TaggedSentence};

/// Which entity pairs appear together in some sentence, and entity types.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CooccurrenceIndex {
    /// In order of appearance within the sentence.
    oriented: BTreeSet<(String, String)>,
    types: BTreeMap<String, String>,
}

fn unordered(x: &str, y: &str) -> (String, String) {
    if x <= y {
        (x.to_string(), y.to_string())
    } else {
        (y.to_string(), x.to_string())
    }
}

impl CooccurrenceIndex {
    pub fn from_sentences(sentences: &[TaggedSentence]) -> Self {
        let mut index = CooccurrenceIndex::default();
        for s in sentences {
            for m in &s.mentions {
                index.types.insert(m.entity_id.clone(), m.entity_type.clone());
            }
            for (i, j) in expand_pairs(s) {
                let (a, b) = (&s.mentions[i].entity_id, &s.mentions[j].entity_id);
                if a != b {
                    index.oriented.insert((a.clone(), b.clone()));
                }
            }
        }
        index
    }

    /// True if `x` and `y` share a sentence, in either order.
    pub fn contains(&self, x: &str, y: &str) -> bool {
        self.oriented.contains(&(x.to_string(), y.to_string())) || self.oriented.contains(&(y.to_string(), x.to_string()))
    }

    pub fn entity_type(&self, id: &str) -> Option<&str> {
        self.types.get(id).map(String::as_str)
    }

    /// Every co-occurring pair, oriented as first seen in text.
    pub fn oriented_pairs(&self) -> Vec<(String, String)> {
        self.oriented.iter().cloned().collect()
    }

    /// Number of distinct unordered pairs.
    pub fn len(&self) -> usize {
        self.oriented.iter().map(|(a, b)| unordered(a, b)).collect::<BTreeSet<_>>().len()
    }

    pub fn is_empty(&self) -> bool {
        self.oriented.is_empty()
    }
}

/// Labels every co-occurring pair with the relation named by its two entity
/// types, everything else NO-RELATION.
pub fn cooccurrence_baseline(pairs: &[(String, String)], index: &CooccurrenceIndex) -> Vec<RelationLabel> {
    pairs
        .iter()
        .map(|(x, y)| {
            if !index.contains(x, y) {
                return RelationLabel::NoRelation;
            }
            match (index.entity_type(x), index.entity_type(y)) {
                (Some(a), Some(b)) => RelationLabel::from_types(a, b).unwrap_or(RelationLabel::NoRelation),
                _ => RelationLabel::NoRelation,
            }
        })
        .collect()
}
