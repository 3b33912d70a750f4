//! Planted-relation corpora for end-to-end checks.
//!
//! Entities of three types get global indices. A rule decides which sampled
//! pairs are related; each sentence realises one pair through a template
//! whose wording depends on that pair's relation.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::io::MentionRecord;
use super::labels::{LabeledPair, RelationLabel};
use super::sentence::{mask_entities, Mention, TaggedSentence};
use crate::error::{Error, Result};
use crate::numeric::RngStream;

pub const ENTITY_TYPES: [&str; 3] = ["GENE", "DISEASE", "CHEMICAL"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RelationRule {
    /// Entities `i` and `j` are related iff `i + j` is even.
    IndexParity,
    /// Related iff `(i + j) % modulus == 0`.
    Modulo { modulus: usize },
}

impl RelationRule {
    pub fn related(self, i: usize, j: usize) -> bool {
        match self {
            RelationRule::IndexParity => (i + j).is_multiple_of(2),
            RelationRule::Modulo { modulus } => (i + j).is_multiple_of(modulus.max(1)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub entities_per_type: usize,
    pub pairs: usize,
    pub sentences: usize,
    pub seed: u64,
    pub rule: RelationRule,
    /// Templates keyed by relation label, `NO-RELATION` included. Each holds
    /// one `{X}` followed later by one `{Y}`.
    pub templates: BTreeMap<String, Vec<String>>,
    pub prefixes: Vec<String>,
    pub suffixes: Vec<String>,
    /// Probability that a sentence about a related pair uses NO-RELATION wording.
    pub sentence_noise: f64,
    /// Probability that a pair's observed label disagrees with the rule.
    pub label_noise: f64,
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        let mut templates = BTreeMap::new();
        templates.insert(
            "GENE-GENE".into(),
            strings(&["{X} phosphorylates {Y} .", "{X} binds directly to {Y} and activates it ."]),
        );
        templates.insert(
            "DISEASE-GENE".into(),
            strings(&["{X} is strongly associated with {Y} .", "mutations link {X} to {Y} in affected families ."]),
        );
        templates.insert(
            "CHEMICAL-GENE".into(),
            strings(&["{X} inhibits expression of {Y} .", "{X} is a potent agonist of {Y} ."]),
        );
        templates.insert(
            "CHEMICAL-DISEASE".into(),
            strings(&["{X} is used to treat {Y} .", "{X} induces {Y} in treated mice ."]),
        );
        templates.insert(
            "NO-RELATION".into(),
            strings(&[
                "{X} and {Y} were both measured .",
                "{X} was studied alongside {Y} in this cohort .",
                "we report {X} , {Y} and other markers .",
            ]),
        );
        SyntheticSpec {
            entities_per_type: 40,
            pairs: 1000,
            sentences: 20_000,
            seed: 13,
            rule: RelationRule::IndexParity,
            templates,
            prefixes: strings(&["", "", "in this study ,", "our results show that", "interestingly ,"]),
            suffixes: strings(&["", "", "in vitro", "as previously reported"]),
            sentence_noise: 0.0,
            label_noise: 0.0,
        }
    }
}

/// A sampled entity pair, oriented so that `x` is realised first.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedPair {
    pub x: usize,
    pub y: usize,
    /// Relation implied by the rule.
    pub truth: RelationLabel,
    /// Relation recorded in the pair dataset, after label noise.
    pub observed: RelationLabel,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceMeta {
    pub pair: usize,
    /// Relation expressed by the chosen wording.
    pub wording: RelationLabel,
    pub template: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCorpus {
    pub entity_ids: Vec<String>,
    pub entity_types: Vec<String>,
    pub pairs: Vec<PlantedPair>,
    pub sentences: Vec<TaggedSentence>,
    pub meta: Vec<SentenceMeta>,
    /// One record per sentence; label 1 iff the wording expresses a relation.
    pub mentions: Vec<MentionRecord>,
}

impl SyntheticCorpus {
    /// Pairs whose observed label is positive.
    pub fn related_pairs(&self) -> Vec<LabeledPair> {
        self.pairs
            .iter()
            .filter(|p| p.observed.is_positive())
            .map(|p| LabeledPair {
                x: self.entity_ids[p.x].clone(),
                y: self.entity_ids[p.y].clone(),
                r: p.observed,
            })
            .collect()
    }

    /// Every pair with its rule label, NO-RELATION included.
    pub fn gold_pairs(&self) -> Vec<LabeledPair> {
        self.pairs
            .iter()
            .map(|p| LabeledPair {
                x: self.entity_ids[p.x].clone(),
                y: self.entity_ids[p.y].clone(),
                r: p.truth,
            })
            .collect()
    }
}

struct Template {
    before: Vec<String>,
    between: Vec<String>,
    after: Vec<String>,
}

fn parse_template(t: &str) -> Result<Template> {
    let bad = |why: &str| Error::invalid(format!("template {t:?}: {why}"));
    if t.matches("{X}").count() != 1 || t.matches("{Y}").count() != 1 {
        return Err(bad("needs exactly one {X} and one {Y}"));
    }
    let (before, rest) = t.split_once("{X}").ok_or_else(|| bad("missing {X}"))?;
    let (between, after) = rest.split_once("{Y}").ok_or_else(|| bad("{Y} must follow {X}"))?;
    let words = |s: &str| -> Vec<String> { s.split_whitespace().map(String::from).collect() };
    Ok(Template {
        before: words(before),
        between: words(between),
        after: words(after),
    })
}

fn type_prefix(t: &str) -> &'static str {
    match t {
        "GENE" => "g",
        "DISEASE" => "d",
        _ => "c",
    }
}

fn type_noun(t: &str) -> &'static str {
    match t {
        "GENE" => "protein",
        "DISEASE" => "syndrome",
        _ => "compound",
    }
}

/// Generates a corpus from `spec`; identical specs give identical output.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    if spec.entities_per_type < 2 || spec.pairs == 0 || spec.sentences < spec.pairs {
        return Err(Error::invalid(
            "need at least 2 entities per type, at least 1 pair and one sentence per pair",
        ));
    }
    for p in [spec.sentence_noise, spec.label_noise] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid("noise rates must lie in [0, 1]"));
        }
    }
    let mut templates: BTreeMap<RelationLabel, Vec<Template>> = BTreeMap::new();
    for (label, ts) in &spec.templates {
        let label = RelationLabel::parse(label)?;
        if ts.is_empty() {
            return Err(Error::invalid(format!("no templates for {label}")));
        }
        templates.insert(label, ts.iter().map(|t| parse_template(t)).collect::<Result<_>>()?);
    }
    for label in RelationLabel::ALL {
        if !templates.contains_key(&label) {
            return Err(Error::invalid(format!("no templates for {label}")));
        }
    }

    let n_ent = spec.entities_per_type * ENTITY_TYPES.len();
    let mut entity_ids = Vec::with_capacity(n_ent);
    let mut entity_types = Vec::with_capacity(n_ent);
    let mut surfaces = Vec::with_capacity(n_ent);
    for ty in ENTITY_TYPES {
        for k in 0..spec.entities_per_type {
            let name = format!("{}{k:03}", type_prefix(ty));
            entity_ids.push(name.to_uppercase());
            entity_types.push(ty.to_string());
            let mut surface = vec![name];
            if k % 5 == 4 {
                surface.push(type_noun(ty).to_string());
            }
            surfaces.push(surface);
        }
    }

    let root = RngStream::new(spec.seed, 0);
    let mut rng = root.derive(1);
    let max_pairs: usize = {
        let m = spec.entities_per_type;
        // every unordered combination whose type pair names a relation
        m * (m - 1) / 2 + 3 * m * m
    };
    if spec.pairs > max_pairs {
        return Err(Error::invalid(format!("at most {max_pairs} distinct pairs are available")));
    }
    // noise draws come from their own streams so that changing a noise rate
    // leaves the pairs and sentence layout untouched
    let mut label_noise = root.derive(3);
    let mut sentence_noise = root.derive(4);
    let mut seen = BTreeSet::new();
    let mut pairs = Vec::with_capacity(spec.pairs);
    while pairs.len() < spec.pairs {
        let a = rng.below(n_ent);
        let b = rng.below(n_ent);
        if a == b {
            continue;
        }
        let Ok(label) = RelationLabel::from_types(&entity_types[a], &entity_types[b]) else {
            continue;
        };
        if !seen.insert((a.min(b), a.max(b))) {
            continue;
        }
        let truth = if spec.rule.related(a, b) { label } else { RelationLabel::NoRelation };
        let observed = if label_noise.uniform() < spec.label_noise {
            if truth.is_positive() {
                RelationLabel::NoRelation
            } else {
                label
            }
        } else {
            truth
        };
        pairs.push(PlantedPair { x: a, y: b, truth, observed });
    }

    let mut rng = root.derive(2);
    let mut sentences = Vec::with_capacity(spec.sentences);
    let mut meta = Vec::with_capacity(spec.sentences);
    let mut mentions = Vec::with_capacity(spec.sentences);
    for s in 0..spec.sentences {
        let pi = if s < pairs.len() { s } else { rng.below(pairs.len()) };
        let pair = &pairs[pi];
        let wording = if sentence_noise.uniform() < spec.sentence_noise && pair.truth.is_positive() {
            RelationLabel::NoRelation
        } else {
            pair.truth
        };
        let options = &templates[&wording];
        let ti = rng.below(options.len());
        let t = &options[ti];
        let pick = |xs: &[String], rng: &mut RngStream| -> Vec<String> {
            if xs.is_empty() {
                Vec::new()
            } else {
                xs[rng.below(xs.len())].split_whitespace().map(String::from).collect()
            }
        };
        let mut tokens = pick(&spec.prefixes, &mut rng);
        tokens.extend(t.before.iter().cloned());
        let xs = tokens.len();
        tokens.extend(surfaces[pair.x].iter().cloned());
        let xe = tokens.len();
        tokens.extend(t.between.iter().cloned());
        let ys = tokens.len();
        tokens.extend(surfaces[pair.y].iter().cloned());
        let ye = tokens.len();
        tokens.extend(t.after.iter().cloned());
        let suffix = pick(&spec.suffixes, &mut rng);
        if !suffix.is_empty() {
            // keep a final full stop at the very end
            let stop = (tokens.last().map(String::as_str) == Some(".")).then(|| tokens.pop());
            tokens.extend(suffix);
            if let Some(Some(stop)) = stop {
                tokens.push(stop);
            }
        }
        let mention = |start, end, e: usize| Mention {
            start,
            end,
            entity_type: entity_types[e].clone(),
            entity_id: entity_ids[e].clone(),
        };
        let sentence = TaggedSentence {
            tokens,
            mentions: vec![mention(xs, xe, pair.x), mention(ys, ye, pair.y)],
        };
        let masked = mask_entities(&sentence, (0, 1))?;
        mentions.push(MentionRecord {
            x_type: masked.x.entity_type.clone(),
            y_type: masked.y.entity_type.clone(),
            tokens: masked.tokens,
            label: usize::from(wording.is_positive()),
        });
        meta.push(SentenceMeta { pair: pi, wording, template: ti });
        sentences.push(sentence);
    }
    Ok(SyntheticCorpus {
        entity_ids,
        entity_types,
        pairs,
        sentences,
        meta,
        mentions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::io::format_corpus_line;

    fn small(sentences: usize) -> SyntheticSpec {
        SyntheticSpec {
            entities_per_type: 10,
            pairs: 60,
            sentences,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = gen_synthetic(&small(300)).unwrap();
        let b = gen_synthetic(&small(300)).unwrap();
        let text = |c: &SyntheticCorpus| c.sentences.iter().map(format_corpus_line).collect::<Vec<_>>().join("\n");
        assert_eq!(text(&a), text(&b));
        let c = gen_synthetic(&SyntheticSpec { seed: 99, ..small(300) }).unwrap();
        assert_ne!(text(&a), text(&c));
    }

    #[test]
    fn wording_matches_the_parity_rule() {
        let spec = small(200);
        let c = gen_synthetic(&spec).unwrap();
        let parsed: BTreeMap<RelationLabel, Vec<Template>> = spec
            .templates
            .iter()
            .map(|(k, v)| (RelationLabel::parse(k).unwrap(), v.iter().map(|t| parse_template(t).unwrap()).collect()))
            .collect();
        for (s, m) in c.sentences.iter().zip(&c.meta) {
            let p = &c.pairs[m.pair];
            let related = (p.x + p.y).is_multiple_of(2);
            assert_eq!(m.wording.is_positive(), related);
            if related {
                assert_eq!(m.wording, RelationLabel::from_types(&c.entity_types[p.x], &c.entity_types[p.y]).unwrap());
            }
            let t = &parsed[&m.wording][m.template];
            let between = &s.tokens[s.mentions[0].end..s.mentions[1].start];
            assert_eq!(between, &t.between[..]);
        }
    }

    #[test]
    fn pairs_get_several_realisations() {
        let c = gen_synthetic(&small(600)).unwrap();
        let mut per_pair: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for m in &c.meta {
            per_pair.entry(m.pair).or_default().insert(m.template);
        }
        assert_eq!(per_pair.len(), 60);
        assert!(per_pair.values().any(|t| t.len() >= 2));
        for s in &c.sentences {
            s.validate().unwrap();
        }
    }

    #[test]
    fn malformed_templates_are_rejected() {
        for t in ["{Y} then {X}", "only {X}", "{X} {X} {Y}"] {
            let mut spec = small(100);
            spec.templates.insert("GENE-GENE".into(), vec![t.into()]);
            assert!(gen_synthetic(&spec).is_err(), "{t}");
        }
    }

    #[test]
    fn label_noise_flips_observed_labels() {
        let clean = gen_synthetic(&small(100)).unwrap();
        assert!(clean.pairs.iter().all(|p| p.truth == p.observed));
        let noisy = gen_synthetic(&SyntheticSpec { label_noise: 0.3, ..small(100) }).unwrap();
        assert_eq!(clean.sentences, noisy.sentences);
        let flipped = noisy.pairs.iter().filter(|p| p.truth != p.observed).count();
        assert!(flipped > 5 && flipped < 35, "{flipped}");
    }
}
