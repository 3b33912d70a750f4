//! Tab-separated file formats.
//!
//! * corpus: `tokens<TAB>mentions`, tokens space-joined, mentions
//!   `start,end,TYPE,ID` joined by `;`
//! * mention dataset: `x_type<TAB>y_type<TAB>masked sentence<TAB>label`
//! * pair dataset: `x_id<TAB>y_id<TAB>label`

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::labels::{LabeledPair, RelationLabel};
use super::sentence::{tokenize, Mention, TaggedSentence};
use crate::error::{Error, Result};

fn format_err(what: &'static str, line: usize, detail: impl Into<String>) -> Error {
    Error::Format {
        what,
        line,
        detail: detail.into(),
    }
}

fn lines<R: BufRead>(reader: R) -> impl Iterator<Item = (usize, std::io::Result<String>)> {
    reader.lines().enumerate().map(|(i, l)| (i + 1, l))
}

pub fn parse_corpus_line(line: &str, lineno: usize) -> Result<TaggedSentence> {
    let (tokens, mentions) = line.split_once('\t').unwrap_or((line, ""));
    let tokens: Vec<String> = tokens.split(' ').filter(|t| !t.is_empty()).map(String::from).collect();
    let mut out = Vec::new();
    for quad in mentions.split(';').filter(|s| !s.trim().is_empty()) {
        let parts: Vec<&str> = quad.splitn(4, ',').collect();
        if parts.len() != 4 {
            return Err(format_err("corpus", lineno, format!("mention {quad:?} is not start,end,TYPE,ID")));
        }
        let num = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| format_err("corpus", lineno, format!("bad offset {s:?}")))
        };
        out.push(Mention {
            start: num(parts[0])?,
            end: num(parts[1])?,
            entity_type: parts[2].to_string(),
            entity_id: parts[3].to_string(),
        });
    }
    let sentence = TaggedSentence { tokens, mentions: out };
    sentence
        .validate()
        .map_err(|e| format_err("corpus", lineno, e.to_string()))?;
    Ok(sentence)
}

pub fn format_corpus_line(s: &TaggedSentence) -> String {
    let mentions: Vec<String> = s
        .mentions
        .iter()
        .map(|m| format!("{},{},{},{}", m.start, m.end, m.entity_type, m.entity_id))
        .collect();
    format!("{}\t{}", s.tokens.join(" "), mentions.join(";"))
}

pub fn read_corpus_from<R: BufRead>(reader: R) -> Result<Vec<TaggedSentence>> {
    let mut out = Vec::new();
    for (n, line) in lines(reader) {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_corpus_line(&line, n)?);
    }
    Ok(out)
}

pub fn read_corpus(path: &Path) -> Result<Vec<TaggedSentence>> {
    read_corpus_from(BufReader::new(File::open(path)?))
}

pub fn write_corpus(path: &Path, sentences: &[TaggedSentence]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for s in sentences {
        writeln!(w, "{}", format_corpus_line(s))?;
    }
    w.flush()?;
    Ok(())
}

/// One row of a mention dataset, before encoding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MentionRecord {
    pub x_type: String,
    pub y_type: String,
    /// Tokenised masked sentence, containing two `<ENT>` tokens.
    pub tokens: Vec<String>,
    pub label: usize,
}

pub fn read_mentions_from<R: BufRead>(reader: R) -> Result<Vec<MentionRecord>> {
    let mut out = Vec::new();
    for (n, line) in lines(reader) {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(format_err("mention dataset", n, format!("expected 4 fields, found {}", f.len())));
        }
        let label = match f[3].trim() {
            "0" => 0,
            "1" => 1,
            other => return Err(format_err("mention dataset", n, format!("label {other:?} is not 0 or 1"))),
        };
        let tokens = tokenize(f[2]);
        let ents = tokens.iter().filter(|t| *t == super::vocab::ENT).count();
        if ents != 2 {
            return Err(format_err("mention dataset", n, format!("sentence has {ents} entity slots, expected 2")));
        }
        out.push(MentionRecord {
            x_type: f[0].to_string(),
            y_type: f[1].to_string(),
            tokens,
            label,
        });
    }
    Ok(out)
}

pub fn read_mentions(path: &Path) -> Result<Vec<MentionRecord>> {
    read_mentions_from(BufReader::new(File::open(path)?))
}

pub fn write_mentions(path: &Path, records: &[MentionRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        writeln!(w, "{}\t{}\t{}\t{}", r.x_type, r.y_type, r.tokens.join(" "), r.label)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_pairs_from<R: BufRead>(reader: R) -> Result<Vec<LabeledPair>> {
    let mut out = Vec::new();
    for (n, line) in lines(reader) {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(format_err("pair dataset", n, format!("expected 3 fields, found {}", f.len())));
        }
        let r = RelationLabel::parse(f[2].trim()).map_err(|e| format_err("pair dataset", n, e.to_string()))?;
        out.push(LabeledPair {
            x: f[0].to_string(),
            y: f[1].to_string(),
            r,
        });
    }
    Ok(out)
}

pub fn read_pairs(path: &Path) -> Result<Vec<LabeledPair>> {
    read_pairs_from(BufReader::new(File::open(path)?))
}

pub fn write_pairs(path: &Path, pairs: &[LabeledPair]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for p in pairs {
        writeln!(w, "{}\t{}\t{}", p.x, p.y, p.r)?;
    }
    w.flush()?;
    Ok(())
}

/// A scored held-out mention: `fold, example_index, gold, p(r=1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MentionPrediction {
    pub fold: usize,
    pub example_index: usize,
    pub gold: usize,
    pub p_positive: f64,
}

pub fn write_mention_predictions(path: &Path, rows: &[MentionPrediction]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in rows {
        writeln!(w, "{}\t{}\t{}\t{:.17e}", r.fold, r.example_index, r.gold, r.p_positive)?;
    }
    w.flush()?;
    Ok(())
}

/// A scored pair: `x_id, y_id, predicted_label, max_prob`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairPrediction {
    pub x: String,
    pub y: String,
    pub label: RelationLabel,
    pub max_prob: f64,
}

pub fn write_pair_predictions(path: &Path, rows: &[PairPrediction]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in rows {
        writeln!(w, "{}\t{}\t{}\t{:.17e}", r.x, r.y, r.label, r.max_prob)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_line_round_trip() {
        let line = "Akt phosphorylates GSK3 beta .\t0,1,GENE,Akt;2,4,GENE,GSK3,B";
        let s = parse_corpus_line(line, 1).unwrap();
        assert_eq!(s.mentions[1].entity_id, "GSK3,B");
        assert_eq!(s.mentions[1].end, 4);
        assert_eq!(format_corpus_line(&s), line);
    }

    #[test]
    fn corpus_rejects_bad_spans_with_line_number() {
        let text = "a b\t0,1,GENE,a\na b\t0,5,GENE,a\n";
        match read_corpus_from(text.as_bytes()) {
            Err(Error::Format { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mention_rows_parse() {
        let text = "GENE\tDISEASE\tThe <ENT> polymorphism Tyr402His appears indicative of <ENT> pathogenesis.\t1\n";
        let rows = read_mentions_from(text.as_bytes()).unwrap();
        assert_eq!(rows[0].label, 1);
        assert_eq!(rows[0].tokens.last().unwrap(), ".");
        assert!(read_mentions_from("GENE\tGENE\tno slots\t1\n".as_bytes()).is_err());
        assert!(read_mentions_from("GENE\tGENE\t<ENT> x <ENT>\t2\n".as_bytes()).is_err());
    }

    #[test]
    fn pair_rows_parse() {
        let rows = read_pairs_from("g1\td2\tDISEASE-GENE\n".as_bytes()).unwrap();
        assert_eq!(rows[0].r, RelationLabel::DiseaseGene);
        assert!(read_pairs_from("g1\td2\tFRIENDS\n".as_bytes()).is_err());
    }
}
