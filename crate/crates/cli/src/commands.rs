//! Subcommand implementations. Each is a pure function of files on disk,
//! the run configuration and the root seed.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use diffexr::corpus::{
    find_leaks, load_profiles, load_records, save_profiles, save_records, split_records,
    synth_generate, tokenize, InteractionRecord, MeanWordEmbedder, ProfilePair, Ranking,
    RawRecord, Splits, SyntheticSpec, Vocabulary,
};
use diffexr::diffusion::{make_schedule, ScheduleKind};
use diffexr::metrics::{evaluate as evaluate_pairs, EvalPair, MetricReport};
use diffexr::model::{Checkpoint, IdMap, KeywordMode, ModelParameters};
use diffexr::pipeline::{attach_personas, held_out_profiles, prepare, split_profiles, PreparedData};
use diffexr::rng::{stream, substream};
use diffexr::training::{
    generate_review, predict_rating_value, train as train_model, EpochLog, GenerateOptions,
    TrainExample,
};

use crate::config::RunConfig;

pub const SPLITS: [&str; 3] = ["train", "valid", "test"];

pub fn split_path(dir: &Path, split: &str) -> PathBuf {
    dir.join(format!("{split}.jsonl"))
}

pub fn profile_path(dir: &Path, split: &str) -> PathBuf {
    dir.join(format!("profiles-{split}.jsonl"))
}

/// Options for synthetic corpus generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenDataOptions {
    pub preset: String,
    pub num_users: Option<usize>,
    pub num_items: Option<usize>,
    pub records_per_user: Option<f64>,
    pub rating_noise_std: Option<f64>,
}

impl Default for GenDataOptions {
    fn default() -> Self {
        Self {
            preset: "amazon".into(),
            num_users: None,
            num_items: None,
            records_per_user: None,
            rating_noise_std: None,
        }
    }
}

impl GenDataOptions {
    pub fn spec(&self, seed: u64) -> anyhow::Result<SyntheticSpec> {
        let mut spec = match self.preset.as_str() {
            "amazon" => SyntheticSpec::amazon_like(seed),
            "tripadvisor" => SyntheticSpec::tripadvisor_like(seed),
            other => bail!("unknown preset `{other}` (expected amazon or tripadvisor)"),
        };
        if let Some(v) = self.num_users {
            spec.num_users = v;
        }
        if let Some(v) = self.num_items {
            spec.num_items = v;
        }
        if let Some(v) = self.records_per_user {
            spec.records_per_user = v;
        }
        if let Some(v) = self.rating_noise_std {
            spec.rating_noise_std = v;
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenDataSummary {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub lexicon: usize,
}

/// Writes `train/valid/test.jsonl`, `lexicon.txt` and `spec.json` to `out`.
pub fn gen_data(options: &GenDataOptions, seed: u64, out: &Path) -> anyhow::Result<GenDataSummary> {
    let spec = options.spec(seed)?;
    let corpus = synth_generate(&spec)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let splits = split_records(&corpus.records, seed);
    for (name, recs) in [("train", &splits.train), ("valid", &splits.valid), ("test", &splits.test)] {
        save_records(recs, &split_path(out, name)).with_context(|| format!("writing {name} split"))?;
    }
    fs::write(out.join("lexicon.txt"), corpus.lexicon.join("\n") + "\n")?;
    fs::write(out.join("spec.json"), serde_json::to_string_pretty(&spec)? + "\n")?;
    Ok(GenDataSummary {
        train: splits.train.len(),
        valid: splits.valid.len(),
        test: splits.test.len(),
        lexicon: corpus.lexicon.len(),
    })
}

pub fn load_splits(dir: &Path) -> anyhow::Result<Splits<RawRecord>> {
    let load = |s: &str| {
        let p = split_path(dir, s);
        load_records(&p).with_context(|| format!("loading {}", p.display()))
    };
    Ok(Splits {
        train: load("train")?,
        valid: load("valid")?,
        test: load("test")?,
    })
}

pub fn load_lexicon(path: &Path) -> anyhow::Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading lexicon {}", path.display()))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
}

fn embedder(cfg: &RunConfig, vocab: &Vocabulary) -> MeanWordEmbedder {
    MeanWordEmbedder::random(vocab.len(), cfg.embed_dim, cfg.seed)
}

/// Profiles for every split: training from the training split alone, held-out
/// splits according to `profile_pool` and `held_out_ranking`.
pub fn compute_profiles(cfg: &RunConfig, data: &PreparedData) -> anyhow::Result<[Vec<ProfilePair>; 3]> {
    let e = embedder(cfg, &data.vocab);
    let s = &data.splits;
    Ok([
        split_profiles(&s.train, &e, cfg.profile_k, Ranking::Similarity)?,
        held_out_profiles(&s.train, &s.valid, &e, cfg.profile_k, cfg.profile_pool, cfg.held_out_ranking)?,
        held_out_profiles(&s.train, &s.test, &e, cfg.profile_k, cfg.profile_pool, cfg.held_out_ranking)?,
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSummary {
    pub records: [usize; 3],
    /// Training-split profile sources that belong to the valid or test split.
    pub leaks: usize,
}

/// Writes `vocab.txt` and `profiles-<split>.jsonl` next to the dataset.
pub fn build_profiles(cfg: &RunConfig) -> anyhow::Result<ProfileSummary> {
    let raw = load_splits(&cfg.data_dir)?;
    let data = prepare(&raw, cfg.min_count)?;
    let profiles = compute_profiles(cfg, &data)?;
    let held_out: Vec<InteractionRecord> = data.splits.valid.iter().chain(&data.splits.test).cloned().collect();
    let leaks = find_leaks(&profiles[0], &held_out).len();
    if leaks > 0 {
        bail!("{leaks} training profile sentences come from held-out records");
    }
    data.vocab.save(&cfg.data_dir.join("vocab.txt"))?;
    for (name, p) in SPLITS.iter().zip(&profiles) {
        save_profiles(p, &data.vocab, &profile_path(&cfg.data_dir, name))?;
    }
    Ok(ProfileSummary {
        records: [profiles[0].len(), profiles[1].len(), profiles[2].len()],
        leaks,
    })
}

/// Profiles from `profiles-<split>.jsonl` when present, computed otherwise.
fn split_examples(
    cfg: &RunConfig,
    data: &PreparedData,
    vocab: &Vocabulary,
    split: usize,
) -> anyhow::Result<Vec<TrainExample>> {
    let records = match split {
        0 => &data.splits.train,
        1 => &data.splits.valid,
        _ => &data.splits.test,
    };
    let path = profile_path(&cfg.data_dir, SPLITS[split]);
    let profiles = if path.exists() {
        let p = load_profiles(&path, vocab).with_context(|| format!("loading {}", path.display()))?;
        if p.len() != records.len() {
            bail!("{} holds {} profiles for {} records", path.display(), p.len(), records.len());
        }
        p
    } else {
        let e = embedder(cfg, vocab);
        let s = &data.splits;
        match split {
            0 => split_profiles(&s.train, &e, cfg.profile_k, Ranking::Similarity)?,
            _ => held_out_profiles(&s.train, records, &e, cfg.profile_k, cfg.profile_pool, cfg.held_out_ranking)?,
        }
    };
    Ok(attach_personas(records, &profiles, cfg.max_encoder_len))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub epoch: usize,
    pub schedule: ScheduleKind,
    pub mode: KeywordMode,
    pub ablate_diffusion: bool,
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub logs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub final_checkpoint: PathBuf,
}

fn write_checkpoint(model: &ModelParameters, vocab: &Vocabulary, meta: &CheckpointMeta, path: &Path) -> anyhow::Result<()> {
    let ckpt = Checkpoint::from_model(model, vocab.ordinary_tokens().to_vec(), serde_json::to_value(meta)?);
    ckpt.save(path).with_context(|| format!("writing {}", path.display()))
}

/// Trains on the dataset in `cfg.data_dir`, writing `config.toml`,
/// `log.jsonl`, `epoch-<k>.ckpt` and `final.ckpt` to `cfg.run_dir`.
pub fn train(cfg: &RunConfig, mut on_epoch: impl FnMut(&EpochLog)) -> anyhow::Result<TrainSummary> {
    cfg.validate()?;
    let raw = load_splits(&cfg.data_dir)?;
    let data = prepare(&raw, cfg.min_count)?;
    let train_ex = split_examples(cfg, &data, &data.vocab, 0)?;
    let valid_ex = split_examples(cfg, &data, &data.vocab, 1)?;
    let model_cfg = cfg.model_config(data.vocab.len(), data.users.len(), data.items.len())?;
    let mut model = ModelParameters::init(&model_cfg, data.users.clone(), data.items.clone(), &mut stream(cfg.seed, "init"))?;
    let schedule = make_schedule(cfg.schedule, cfg.horizon)?;

    fs::create_dir_all(&cfg.run_dir).with_context(|| format!("creating {}", cfg.run_dir.display()))?;
    fs::write(cfg.run_dir.join("config.toml"), cfg.to_toml()?)?;
    let mut log = BufWriter::new(fs::File::create(cfg.run_dir.join("log.jsonl"))?);
    let meta = |epoch| CheckpointMeta {
        seed: cfg.seed,
        epoch,
        schedule: cfg.schedule,
        mode: cfg.mode,
        ablate_diffusion: cfg.ablate_diffusion,
    };
    let outcome = train_model(&mut model, &schedule, &train_ex, &valid_ex, &cfg.train_config(), |entry, m| {
        let io = |e: std::io::Error| diffexr::Error::Io(e);
        serde_json::to_writer(&mut log, entry)?;
        log.write_all(b"\n").map_err(io)?;
        log.flush().map_err(io)?;
        if entry.epoch % cfg.checkpoint_every == 0 {
            write_checkpoint(m, &data.vocab, &meta(entry.epoch), &cfg.run_dir.join(format!("epoch-{}.ckpt", entry.epoch)))
                .map_err(|e| diffexr::Error::Checkpoint(format!("{e:#}")))?;
        }
        on_epoch(entry);
        Ok(())
    })?;
    let final_checkpoint = cfg.run_dir.join("final.ckpt");
    write_checkpoint(&model, &data.vocab, &meta(outcome.best_epoch), &final_checkpoint)?;
    Ok(TrainSummary {
        logs: outcome.logs,
        best_epoch: outcome.best_epoch,
        final_checkpoint,
    })
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: usize,
    pub user: String,
    pub item: String,
    pub predicted_rating: f64,
    pub true_rating: f64,
    pub text: String,
    pub reference: String,
    pub feature: Option<String>,
}

#[derive(Debug, Clone, Copy)]
pub struct GenerateRequest<'a> {
    pub checkpoint: &'a Path,
    pub split: &'a str,
    pub out: &'a Path,
    /// Overrides the checkpoint's keyword mode.
    pub mode: Option<KeywordMode>,
    /// Left-to-right decoding instead of reverse sampling; defaults to
    /// whether the checkpoint was trained without diffusion.
    pub greedy: Option<bool>,
}

/// Predicts a rating and generates a review for every record of a split.
pub fn generate(cfg: &RunConfig, req: &GenerateRequest) -> anyhow::Result<Vec<Prediction>> {
    cfg.validate()?;
    let split = SPLITS
        .iter()
        .position(|s| *s == req.split)
        .with_context(|| format!("unknown split `{}`", req.split))?;
    let ckpt = Checkpoint::load(req.checkpoint).with_context(|| format!("loading checkpoint {}", req.checkpoint.display()))?;
    let meta: CheckpointMeta = serde_json::from_value(ckpt.meta.clone()).context("checkpoint metadata")?;
    let model = ckpt.to_model()?;
    let vocab = Vocabulary::from_tokens(ckpt.vocab.iter().cloned());

    let raw = load_splits(&cfg.data_dir)?;
    let data = prepare(&raw, cfg.min_count)?;
    if data.vocab != vocab {
        bail!("dataset vocabulary differs from the checkpoint's");
    }
    let data = PreparedData {
        users: IdMap::from_names(ckpt.users.iter().cloned()),
        items: IdMap::from_names(ckpt.items.iter().cloned()),
        ..data
    };
    let examples = split_examples(cfg, &data, &vocab, split)?;
    let schedule = make_schedule(meta.schedule, model.config.horizon)?;
    let opts = GenerateOptions {
        mode: req.mode.unwrap_or(meta.mode),
        stride: cfg.stride,
        greedy: req.greedy.unwrap_or(meta.ablate_diffusion),
    };
    let mut out = Vec::with_capacity(examples.len());
    for (i, ex) in examples.iter().enumerate() {
        let mut rng = substream(cfg.seed, "sampler", i as u64);
        let tokens = generate_review(&model, &schedule, ex, &opts, &mut rng)?;
        let r = &ex.record;
        out.push(Prediction {
            id: i,
            user: r.user.clone(),
            item: r.item.clone(),
            predicted_rating: predict_rating_value(&model, ex, opts.mode)?,
            true_rating: r.rating,
            text: vocab.detokenize(&tokens),
            reference: vocab.detokenize(&r.review),
            feature: r.feature.and_then(|f| vocab.token(f)).map(String::from),
        });
    }
    if let Some(dir) = req.out.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut w = BufWriter::new(fs::File::create(req.out).with_context(|| format!("creating {}", req.out.display()))?);
    for p in &out {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(out)
}

/// Prediction line as read by `evaluate`; dataset files are accepted too,
/// with `review` as the text and `rating` as the prediction.
#[derive(Debug, Deserialize)]
struct PredictionIn {
    id: Option<usize>,
    #[serde(alias = "review")]
    text: String,
    #[serde(alias = "rating")]
    predicted_rating: Option<f64>,
}

fn read_predictions(path: &Path) -> anyhow::Result<Vec<(usize, PredictionIn)>> {
    let f = BufReader::new(fs::File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let mut out = Vec::new();
    for (n, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p: PredictionIn =
            serde_json::from_str(&line).with_context(|| format!("{}: line {}", path.display(), n + 1))?;
        let id = p.id.unwrap_or(out.len());
        out.push((id, p));
    }
    Ok(out)
}

/// Scores predictions against a dataset split, joined by record id (the
/// record's position in the reference file).
pub fn evaluate(predictions: &Path, references: &Path, lexicon: &Path) -> anyhow::Result<MetricReport> {
    let preds = read_predictions(predictions)?;
    let refs = load_records(references).with_context(|| format!("loading {}", references.display()))?;
    let lex = load_lexicon(lexicon)?;
    let mut seen = vec![false; refs.len()];
    let mut pairs = Vec::with_capacity(preds.len());
    for (id, p) in preds {
        let r = refs
            .get(id)
            .with_context(|| format!("prediction id {id} has no reference (file holds {})", refs.len()))?;
        if std::mem::replace(&mut seen[id], true) {
            bail!("duplicate prediction for id {id}");
        }
        pairs.push(EvalPair {
            generated: tokenize(&p.text),
            reference: tokenize(&r.review),
            predicted_rating: p.predicted_rating,
            true_rating: Some(r.rating),
            feature: r.feature.as_deref().map(|f| tokenize(f).join(" ")),
        });
    }
    Ok(evaluate_pairs(&pairs, &lex)?)
}
