use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use diffexr::corpus::Ranking;
use diffexr::model::KeywordMode;
use diffexr::pipeline::ProfilePool;
use diffexr_cli::commands::{self, GenDataOptions, GenerateRequest};
use diffexr_cli::RunConfig;

#[derive(Parser)]
#[command(name = "diffexr", version, about = "Diffusion-based explainable recommendation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

// Options shared by commands that read a run configuration. Flags override
// values from `--config`.
#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Dataset directory.
    #[arg(long)]
    data: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(d) = &self.data {
            cfg.data_dir = d.clone();
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus split into train/valid/test.
    GenData {
        #[arg(long, default_value = "amazon")]
        preset: String,
        #[arg(long)]
        users: Option<usize>,
        #[arg(long)]
        items: Option<usize>,
        #[arg(long)]
        records_per_user: Option<f64>,
        #[arg(long)]
        rating_noise: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "data")]
        out: PathBuf,
    },
    /// Build the vocabulary and persona/profile files for every split.
    BuildProfiles {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        k: Option<usize>,
        /// `history` or `within-split`.
        #[arg(long)]
        pool: Option<ProfilePool>,
        /// Held-out ranking: `similarity` or `recency`.
        #[arg(long)]
        ranking: Option<Ranking>,
    },
    /// Train a model, writing the log and checkpoints to the run directory.
    Train {
        #[command(flatten)]
        common: Common,
        /// Run directory for config, log and checkpoints.
        #[arg(long)]
        run: Option<PathBuf>,
        /// `none`, `F` or `FO`.
        #[arg(long)]
        mode: Option<KeywordMode>,
        /// Train on clean inputs only and decode left to right.
        #[arg(long)]
        ablate_diffusion: bool,
        #[arg(long)]
        max_epochs: Option<usize>,
    },
    /// Predict ratings and generate reviews for a split.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        mode: Option<KeywordMode>,
        #[arg(long)]
        stride: Option<usize>,
        /// Decode left to right instead of reverse sampling.
        #[arg(long)]
        greedy: bool,
    },
    /// Score a predictions file against reference records.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        references: PathBuf,
        #[arg(long)]
        lexicon: PathBuf,
        /// Append one row to this CSV file (header written if new).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn print_json(v: &impl serde::Serialize) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenData { preset, users, items, records_per_user, rating_noise, seed, out } => {
            let opts = GenDataOptions {
                preset,
                num_users: users,
                num_items: items,
                records_per_user,
                rating_noise_std: rating_noise,
            };
            print_json(&commands::gen_data(&opts, seed, &out)?)
        }
        Command::BuildProfiles { common, k, pool, ranking } => {
            let mut cfg = common.resolve()?;
            if let Some(k) = k {
                cfg.profile_k = k;
            }
            if let Some(p) = pool {
                cfg.profile_pool = p;
            }
            if let Some(r) = ranking {
                cfg.held_out_ranking = r;
            }
            print_json(&commands::build_profiles(&cfg)?)
        }
        Command::Train { common, run, mode, ablate_diffusion, max_epochs } => {
            let mut cfg = common.resolve()?;
            if let Some(r) = run {
                cfg.run_dir = r;
            }
            if let Some(m) = mode {
                cfg.mode = m;
            }
            if let Some(e) = max_epochs {
                cfg.max_epochs = e;
            }
            cfg.ablate_diffusion |= ablate_diffusion;
            let summary = commands::train(&cfg, |_| {})?;
            print_json(&json!({
                "epochs": summary.logs.len(),
                "best_epoch": summary.best_epoch,
                "checkpoint": summary.final_checkpoint,
            }))
        }
        Command::Generate { common, checkpoint, split, out, mode, stride, greedy } => {
            let mut cfg = common.resolve()?;
            if let Some(s) = stride {
                cfg.stride = s;
            }
            let req = GenerateRequest {
                checkpoint: &checkpoint,
                split: &split,
                out: &out,
                mode,
                greedy: greedy.then_some(true),
            };
            let preds = commands::generate(&cfg, &req)?;
            print_json(&json!({ "records": preds.len(), "out": out }))
        }
        Command::Evaluate { predictions, references, lexicon, csv } => {
            let report = commands::evaluate(&predictions, &references, &lexicon)?;
            if let Some(path) = csv {
                report.append_csv(&path)?;
            }
            print_json(&report)
        }
    }
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    if let Some(d) = e.downcast_ref::<diffexr::Error>() {
        d.kind()
    } else if e.downcast_ref::<std::io::Error>().is_some() {
        "io"
    } else if e.downcast_ref::<serde_json::Error>().is_some() {
        "json"
    } else if e.downcast_ref::<toml::de::Error>().is_some() {
        "config"
    } else {
        "invalid_argument"
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = error_kind(&e);
            let body = json!({ "error": { "kind": kind, "message": format!("{e:#}") } });
            eprintln!("{body}");
            ExitCode::FAILURE
        }
    }
}
