use std::fmt;

use serde::{Deserialize, Serialize};

use super::vocab::Context;
use crate::error::{Error, Result};

/// Pair-level relation classes. Positive labels concatenate the two entity
/// types in alphabetical order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelationLabel {
    #[serde(rename = "NO-RELATION")]
    NoRelation = 0,
    #[serde(rename = "DISEASE-GENE")]
    DiseaseGene = 1,
    #[serde(rename = "GENE-GENE")]
    GeneGene = 2,
    #[serde(rename = "CHEMICAL-GENE")]
    ChemicalGene = 3,
    #[serde(rename = "CHEMICAL-DISEASE")]
    ChemicalDisease = 4,
}

pub const NUM_PAIR_CLASSES: usize = 5;

impl RelationLabel {
    pub const ALL: [RelationLabel; NUM_PAIR_CLASSES] = [
        RelationLabel::NoRelation,
        RelationLabel::DiseaseGene,
        RelationLabel::GeneGene,
        RelationLabel::ChemicalGene,
        RelationLabel::ChemicalDisease,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Result<Self> {
        Self::ALL
            .get(id)
            .copied()
            .ok_or_else(|| Error::invalid(format!("relation id {id} out of range")))
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RelationLabel::NoRelation => "NO-RELATION",
            RelationLabel::DiseaseGene => "DISEASE-GENE",
            RelationLabel::GeneGene => "GENE-GENE",
            RelationLabel::ChemicalGene => "CHEMICAL-GENE",
            RelationLabel::ChemicalDisease => "CHEMICAL-DISEASE",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown relation label {s:?}")))
    }

    /// The label named by the two entity types, in either order.
    pub fn from_types(a: &str, b: &str) -> Result<Self> {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        Self::parse(&format!("{lo}-{hi}"))
    }

    pub fn is_positive(self) -> bool {
        self != RelationLabel::NoRelation
    }
}

impl fmt::Display for RelationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A sentence-level supervised example. `x` and `y` index the entity vocabulary.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledMention {
    pub x: usize,
    pub y: usize,
    pub context: Context,
    pub r: usize,
}

/// A corpus-level supervised example over entity identifiers.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabeledPair {
    pub x: String,
    pub y: String,
    pub r: RelationLabel,
}
