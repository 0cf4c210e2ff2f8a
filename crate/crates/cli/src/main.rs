mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Failure;

#[derive(Debug, Parser)]
#[command(name = "seqtag", version, about = "BiLSTM-CRF sequence tagger")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// Flat JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice in the run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override any configuration key, e.g. `--set max_epochs=20`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true, value_parser = config::parse_override)]
    overrides: Vec<(String, serde_json::Value)>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sentence, token and annotation counts of CoNLL files.
    CorpusStats {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Emit JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Train forward and backward character language models on raw text.
    PretrainLm {
        #[command(flatten)]
        common: Common,
        /// Raw text, one line per document or sentence.
        #[arg(long)]
        text: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Train a tagger and keep the best model by dev score.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        dev: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
        /// Word vectors, one `word v1 … vd` line each.
        #[arg(long)]
        vectors: Option<PathBuf>,
        #[arg(long)]
        lm_forward: Option<PathBuf>,
        #[arg(long)]
        lm_backward: Option<PathBuf>,
        #[arg(long)]
        max_epochs: Option<usize>,
    },
    /// Append a predicted tag column to a CoNLL file.
    Tag {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Exact-match entity scores of predictions against gold tags.
    Evaluate {
        /// Gold file; with no --pred, its last two columns are gold and
        /// predicted tags.
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: Option<PathBuf>,
        /// Emit JSON instead of the text table.
        #[arg(long)]
        json: bool,
        /// Also write eval.txt and eval.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn set(common: &mut Common, key: &str, value: Option<impl serde::Serialize>) {
    if let Some(v) = value {
        let v = serde_json::to_value(v).expect("CLI values serialize");
        common.overrides.push((key.to_string(), v));
    }
}

fn init_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("SEQTAG_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Failure::input(anyhow::anyhow!("SEQTAG_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::input(e.into()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    init_threads()?;
    match cli.command {
        Command::CorpusStats { files, json } => commands::corpus_stats(&files, json),
        Command::PretrainLm { mut common, text, epochs } => {
            set(&mut common, "text", text);
            set(&mut common, "lm_epochs", epochs);
            commands::pretrain_lm(&common.resolve()?)
        }
        Command::Train {
            mut common,
            train,
            dev,
            test,
            vectors,
            lm_forward,
            lm_backward,
            max_epochs,
        } => {
            set(&mut common, "train", train);
            set(&mut common, "dev", dev);
            set(&mut common, "test", test);
            set(&mut common, "vectors", vectors);
            set(&mut common, "lm_forward", lm_forward);
            set(&mut common, "lm_backward", lm_backward);
            set(&mut common, "max_epochs", max_epochs);
            commands::train(&common.resolve()?)
        }
        Command::Tag { model, input, output } => commands::tag(&model, &input, &output),
        Command::Evaluate { gold, pred, json, out } => commands::evaluate(&gold, pred.as_deref(), json, out.as_deref()),
    }
}

impl Common {
    fn resolve(mut self) -> Result<config::RunConfig, Failure> {
        let seed = self.seed;
        let out = self.out.clone();
        set(&mut self, "seed", seed);
        set(&mut self, "out", out);
        config::RunConfig::resolve(self.config.as_deref(), &self.overrides).map_err(Failure::input)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
