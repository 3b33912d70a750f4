use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use relvm::corpus::dataset::encode_mentions;
use relvm::corpus::io::{read_corpus, read_mentions, read_pairs, write_corpus, write_mention_predictions, write_mentions, write_pair_predictions, write_pairs, PairPrediction};
use relvm::corpus::{gen_synthetic as generate, EntityMode, LabeledMention};
use relvm::metrics::{results_table, Prf};
use relvm::model::train::write_jsonl;
use relvm::model::{Checkpoint, ReprParams};
use relvm::numeric::{ParamSet, RngStream};
use relvm::pair::{threshold_label, tune_threshold as tune, default_grid, pair_probabilities, AttentionParams, CooccurrenceIndex, DecisionThreshold, PairClassifier, SentenceIndex};
use relvm::pipeline::{
    attention_pair_scores, cooccurrence_predictions, evaluate_cooccurrence, latent_pair_scores, mention_cross_validation, pair_data,
    prepare_corpus, PairData, PairEvaluation, PreparedCorpus,
};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::RunConfig;
use crate::{CliError, Common};

// Stream ids, one per command, so stages never share random numbers.
const REPR_INIT: u64 = 0;
const REPR_TRAIN: u64 = 1;
const MENTION_TRAIN: u64 = 2;
const MENTION_EVAL: u64 = 3;
const PAIR_SPLIT: u64 = 4;
const PAIR_TRAIN: u64 = 5;
const PAIR_SCORE: u64 = 6;
const ATTENTION_TRAIN: u64 = 7;
const ATTENTION_SCORE: u64 = 8;
const PREDICT: u64 = 9;

const PREPARED: &str = "prepared.json";
const SPLIT: &str = "pair_split.json";
const COOCCURRENCE: &str = "cooccurrence.json";

fn setup(common: &Common) -> Result<RunConfig, CliError> {
    let config = RunConfig::load(common.config.as_deref(), common.seed)?;
    std::fs::create_dir_all(&common.out)?;
    config.write(&common.out)?;
    Ok(config)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let r = BufReader::new(File::open(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?);
    Ok(serde_json::from_reader(r)?)
}

fn write_log<T: Serialize>(path: &Path, records: &[T]) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_jsonl(records, &mut w)?;
    w.flush()?;
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    Checkpoint::load(path).map_err(|e| match e {
        relvm::error::Error::Io(io) => CliError::Usage(format!("{}: {io}", path.display())),
        other => other.into(),
    })
}

fn load_split(data: &Path, checkpoint: Option<&Checkpoint>) -> Result<(PreparedCorpus, PairData), CliError> {
    let prepared: PreparedCorpus = read_json(&data.join(PREPARED))?;
    let split: PairData = read_json(&data.join(SPLIT))?;
    if let Some(ckpt) = checkpoint {
        if ckpt.entities != prepared.entities {
            return Err(CliError::Usage("checkpoint and prepared data have different entity tables".into()));
        }
    }
    Ok((prepared, split))
}

fn load_mentions(path: &Path, ckpt: &Checkpoint) -> Result<Vec<LabeledMention>, CliError> {
    if ckpt.config.mode != EntityMode::Types {
        return Err(CliError::Usage("mention classification needs a checkpoint trained in types mode".into()));
    }
    Ok(encode_mentions(&read_mentions(path)?, &ckpt.vocab, &ckpt.entities)?)
}

pub fn gen_synthetic(common: &Common) -> Result<(), CliError> {
    let mut config = RunConfig::load(common.config.as_deref(), common.seed)?;
    if let Some(s) = common.seed {
        config.synthetic.seed = s;
    }
    std::fs::create_dir_all(&common.out)?;
    config.write(&common.out)?;
    let corpus = generate(&config.synthetic)?;
    write_corpus(&common.out.join("corpus.txt"), &corpus.sentences)?;
    write_mentions(&common.out.join("mentions.tsv"), &corpus.mentions)?;
    write_pairs(&common.out.join("pairs.tsv"), &corpus.related_pairs())?;
    write_pairs(&common.out.join("gold_pairs.tsv"), &corpus.gold_pairs())?;
    println!("{} sentences, {} entities, {} planted pairs", corpus.sentences.len(), corpus.entity_ids.len(), corpus.pairs.len());
    Ok(())
}

pub fn prepare_data(common: &Common, corpus: &Path, pairs: Option<&Path>) -> Result<(), CliError> {
    let config = setup(common)?;
    let sentences = read_corpus(corpus)?;
    let prepared = prepare_corpus(&sentences, config.repr.mode, config.data.min_count, config.data.max_vocab)?;
    let index = CooccurrenceIndex::from_sentences(&sentences);
    write_json(&common.out.join(PREPARED), &prepared)?;
    write_json(&common.out.join(COOCCURRENCE), &index)?;
    println!(
        "vocabulary {}, entities {}, contexts {} ({} over length)",
        prepared.vocab.len(),
        prepared.entities.len(),
        prepared.examples.len(),
        prepared.too_long
    );
    if let Some(p) = pairs {
        if prepared.mode != EntityMode::Identifiers {
            return Err(CliError::Usage("pair splits need identifier mode".into()));
        }
        let related = read_pairs(p)?;
        let mut rng = RngStream::new(config.seed, PAIR_SPLIT);
        let split = pair_data(&related, &index, &prepared.entities, &config.split, &mut rng)?;
        write_json(&common.out.join(SPLIT), &split)?;
        println!(
            "pairs: train {}, validation {}, test {}, pool {}",
            split.train.len(),
            split.validation.len(),
            split.test.len(),
            split.pool.len()
        );
    }
    Ok(())
}

pub fn train_repr(common: &Common, data: &Path) -> Result<(), CliError> {
    let config = setup(common)?;
    let prepared: PreparedCorpus = read_json(&data.join(PREPARED))?;
    if prepared.mode != config.repr.mode {
        return Err(CliError::Usage("repr.mode differs from the mode the data was prepared in".into()));
    }
    let mut params = ReprParams::new(
        &config.repr,
        prepared.vocab.len(),
        prepared.entities.len(),
        &mut RngStream::new(config.seed, REPR_INIT),
    )?;
    let snapshot = |params: &ReprParams| Checkpoint {
        config: config.repr.clone(),
        vocab: prepared.vocab.clone(),
        entities: prepared.entities.clone(),
        params: params.clone(),
    };
    let log = relvm::model::train_repr(
        &prepared.examples,
        &config.repr,
        &mut params,
        &RngStream::new(config.seed, REPR_TRAIN),
        |it, p| snapshot(p).save(&common.out.join(format!("repr_{it}.ckpt"))),
    )?;
    snapshot(&params).save(&common.out.join("repr.ckpt"))?;
    let mut w = BufWriter::new(File::create(common.out.join("train_log.jsonl"))?);
    log.write_jsonl(&mut w)?;
    w.flush()?;
    if let Some(last) = log.last() {
        println!("final reconstruction {:.4}, kl {:.4}", last.reconstruction, last.kl);
    }
    Ok(())
}

pub fn train_mention(common: &Common, checkpoint: &Path, mentions: &Path) -> Result<(), CliError> {
    let config = setup(common)?;
    let ckpt = load_checkpoint(checkpoint)?;
    let data = load_mentions(mentions, &ckpt)?;
    let trained = relvm::mention::train_mention(&data, &ckpt.params, &config.mention, &RngStream::new(config.seed, MENTION_TRAIN))?;
    trained.classifier.save(&common.out.join("mention_head.bin"), &config.mention)?;
    Checkpoint { params: trained.repr, ..ckpt }.save(&common.out.join("repr_mention.ckpt"))?;
    write_log(&common.out.join("mention_log.jsonl"), &trained.log)?;
    Ok(())
}

pub fn eval_mention(common: &Common, checkpoint: &Path, mentions: &Path) -> Result<(), CliError> {
    let config = setup(common)?;
    let ckpt = load_checkpoint(checkpoint)?;
    let data = load_mentions(mentions, &ckpt)?;
    let cv = mention_cross_validation(
        &data,
        &ckpt.params,
        &config.mention,
        config.cross_validation.folds,
        &RngStream::new(config.seed, MENTION_EVAL),
    )?;
    write_mention_predictions(&common.out.join("mention_predictions.tsv"), &cv.predictions)?;
    write_json(&common.out.join("metrics.json"), &cv.metrics)?;
    let mut rows: Vec<(String, Prf)> = cv.metrics.folds.iter().enumerate().map(|(k, f)| (format!("fold {k}"), f.prf)).collect();
    rows.push(("mean".into(), cv.metrics.mean));
    let mut table = results_table(&rows);
    table.push_str(&format!("accuracy {:.4}\n", cv.metrics.mean_accuracy));
    std::fs::write(common.out.join("results.txt"), &table)?;
    print!("{table}");
    Ok(())
}

pub fn train_pair(common: &Common, checkpoint: &Path, data: &Path) -> Result<(), CliError> {
    let config = setup(common)?;
    let ckpt = load_checkpoint(checkpoint)?;
    let (_, split) = load_split(data, Some(&ckpt))?;
    let trained = relvm::pair::train_pair(&split.train, &split.pool, &ckpt.params, &config.pair, &RngStream::new(config.seed, PAIR_TRAIN))?;
    trained.classifier.save(&common.out.join("pair_head.bin"), &config.pair)?;
    write_log(&common.out.join("pair_log.jsonl"), &trained.log)?;
    Ok(())
}

fn load_pair_head(path: &Path, ckpt: &Checkpoint) -> Result<(PairClassifier, relvm::pair::PairConfig), CliError> {
    Ok(PairClassifier::load(path, ckpt.params.dim())?)
}

pub fn tune_threshold(common: &Common, checkpoint: &Path, pair_head: &Path, data: &Path) -> Result<(), CliError> {
    let config = setup(common)?;
    let ckpt = load_checkpoint(checkpoint)?;
    let (_, split) = load_split(data, Some(&ckpt))?;
    let (psi, head) = load_pair_head(pair_head, &ckpt)?;
    let scores = latent_pair_scores(&ckpt.params, &psi, &split, head.n_eval, &RngStream::new(config.seed, PAIR_SCORE), config.pair.exec)?;
    let gold: Vec<_> = split.validation.iter().map(|p| p.r).collect();
    let threshold = tune(&scores.validation, &gold, &default_grid())?;
    threshold.save(&common.out.join("threshold.json"))?;
    println!("tau {:.2}, validation F1 {:.4}", threshold.tau, threshold.validation_f1);
    Ok(())
}

pub fn train_attention(common: &Common, data: &Path) -> Result<(), CliError> {
    let config = setup(common)?;
    let (prepared, split) = load_split(data, None)?;
    let index = SentenceIndex::from_examples(&prepared.examples);
    let trained = relvm::pair::train_attention(
        &split.train,
        &split.pool,
        &index,
        prepared.vocab.len(),
        &config.attention,
        &RngStream::new(config.seed, ATTENTION_TRAIN),
    )?;
    trained.params.save(&common.out.join("attention.bin"), &config.attention)?;
    write_log(&common.out.join("attention_log.jsonl"), &trained.log)?;
    if trained.excluded > 0 {
        println!("{} training pairs have no sentences and were skipped", trained.excluded);
    }
    Ok(())
}

pub struct EvalPairInputs<'a> {
    pub checkpoint: &'a Path,
    pub pair_head: &'a Path,
    pub data: &'a Path,
    pub threshold: Option<&'a Path>,
    pub attention: Option<&'a Path>,
}

#[derive(Serialize)]
struct PairMetrics {
    latent: PairEvaluation,
    cooccurrence: Prf,
    attention: Option<PairEvaluation>,
}

pub fn eval_pair(common: &Common, inputs: &EvalPairInputs) -> Result<(), CliError> {
    let config = setup(common)?;
    let ckpt = load_checkpoint(inputs.checkpoint)?;
    let (prepared, split) = load_split(inputs.data, Some(&ckpt))?;
    let index: CooccurrenceIndex = read_json(&inputs.data.join(COOCCURRENCE))?;
    let (psi, head) = load_pair_head(inputs.pair_head, &ckpt)?;

    let scores = latent_pair_scores(&ckpt.params, &psi, &split, head.n_eval, &RngStream::new(config.seed, PAIR_SCORE), config.pair.exec)?;
    let latent = match inputs.threshold {
        Some(p) => scores.evaluate_at(&split, DecisionThreshold::load(p)?)?,
        None => scores.evaluate(&split)?,
    };
    let cooccurrence = evaluate_cooccurrence(&index, &prepared.entities, &split)?;
    let attention = match inputs.attention {
        Some(p) => {
            let (params, att) = AttentionParams::load(p)?;
            let sentences = SentenceIndex::from_examples(&prepared.examples);
            let s = attention_pair_scores(&params, &sentences, &split, att.sentences_per_pair, &RngStream::new(config.seed, ATTENTION_SCORE), config.attention.exec)?;
            Some(s.evaluate(&split)?)
        }
        None => None,
    };

    let name = |i: usize| prepared.entities.name(i).unwrap_or_default().to_string();
    let cooc = cooccurrence_predictions(&index, &prepared.entities, &split);
    let rows: Vec<PairPrediction> = split
        .test
        .iter()
        .zip(&scores.test)
        .map(|(p, probs)| {
            let (label, max_prob) = threshold_label(probs, latent.threshold.tau);
            PairPrediction { x: name(p.x), y: name(p.y), label, max_prob }
        })
        .collect();
    write_pair_predictions(&common.out.join("pair_predictions.tsv"), &rows)?;
    let mut w = BufWriter::new(File::create(common.out.join("cooccurrence_predictions.tsv"))?);
    for (p, l) in split.test.iter().zip(&cooc) {
        writeln!(w, "{}\t{}\t{}", name(p.x), name(p.y), l)?;
    }
    w.flush()?;

    let mut table_rows = vec![("co-occurrence".to_string(), cooccurrence)];
    if let Some(a) = &attention {
        table_rows.push(("attention".into(), a.test));
    }
    table_rows.push(("latent".into(), latent.test));
    let table = results_table(&table_rows);
    std::fs::write(common.out.join("results.txt"), &table)?;
    write_json(&common.out.join("metrics.json"), &PairMetrics { latent, cooccurrence, attention })?;
    print!("{table}");
    Ok(())
}

pub fn predict(common: &Common, checkpoint: &Path, pair_head: &Path, threshold: &Path, pairs: &Path) -> Result<(), CliError> {
    let config = setup(common)?;
    let ckpt = load_checkpoint(checkpoint)?;
    let (psi, head) = load_pair_head(pair_head, &ckpt)?;
    let tau = DecisionThreshold::load(threshold)?.tau;
    let reader = BufReader::new(File::open(pairs).map_err(|e| CliError::Usage(format!("{}: {e}", pairs.display())))?);
    let mut names = Vec::new();
    let mut ids = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() < 2 {
            return Err(CliError::Usage(format!("{} line {}: expected at least 2 columns", pairs.display(), n + 1)));
        }
        ids.push((ckpt.entities.id(f[0])?, ckpt.entities.id(f[1])?));
        names.push((f[0].to_string(), f[1].to_string()));
    }
    let probs = pair_probabilities(&ckpt.params, &psi, &ids, head.n_eval, &RngStream::new(config.seed, PREDICT), config.pair.exec)?;
    let rows: Vec<PairPrediction> = names
        .into_iter()
        .zip(&probs)
        .map(|((x, y), p)| {
            let (label, max_prob) = threshold_label(p, tau);
            PairPrediction { x, y, label, max_prob }
        })
        .collect();
    write_pair_predictions(&common.out.join("predictions.tsv"), &rows)?;
    Ok(())
}

#[derive(Serialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize)]
struct Manifest {
    arrays: Vec<ManifestEntry>,
    total: usize,
    expected: usize,
}

pub fn inspect_checkpoint(common: &Common, checkpoint: &Path) -> Result<(), CliError> {
    setup(common)?;
    let ckpt = load_checkpoint(checkpoint)?;
    let arrays: Vec<ManifestEntry> = ckpt.manifest().into_iter().map(|(name, shape)| ManifestEntry { name, shape }).collect();
    for a in &arrays {
        println!("{}\t{:?}", a.name, a.shape);
    }
    let manifest = Manifest {
        total: ckpt.params.param_count(),
        expected: ReprParams::expected_count(&ckpt.config, ckpt.vocab.len(), ckpt.entities.len()),
        arrays,
    };
    println!("total\t{}", manifest.total);
    write_json(&common.out.join("manifest.json"), &manifest)?;
    Ok(())
}
