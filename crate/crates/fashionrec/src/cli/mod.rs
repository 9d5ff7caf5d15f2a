//! `fashionrec` command line.
//!
//! Exit codes: 0 success, 1 usage/validation/format errors, 2 numeric or
//! internal failures.

mod commands;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fashionrec_core::corpus::Split;
use fashionrec_core::retrieval::FitbScoring;

use crate::config::{Overrides, RunConfig};
use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "fashionrec",
    version,
    about = "Outfit compatibility and complementary item retrieval"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON config with corpus/embeddings/model/loss/train/retrieval sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config leaf, e.g. `--set train.learning_rate=0.001`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    /// Seed for generation, initialization, shuffling and sampling.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Output directory for reports and artifacts.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Common {
    pub fn resolve(&self) -> Result<RunConfig> {
        RunConfig::resolve(
            self.config.as_deref(),
            &Overrides {
                sets: self.sets.clone(),
                seed: self.seed,
                epochs: self.epochs,
            },
        )
    }

    pub fn out(&self) -> Result<&PathBuf> {
        self.out
            .as_ref()
            .ok_or_else(|| Error::Usage("this command requires --out DIR".into()))
    }
}

#[derive(Debug, Clone, Args)]
pub struct Data {
    /// Corpus directory (defaults to `corpus.dir` in the config).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// emb-v1 file (defaults to `embeddings.path`, then `<corpus>/embeddings.jsonl`).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Valid,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Valid => Split::Valid,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScoringArg {
    Distance,
    Compatibility,
}

impl From<ScoringArg> for FitbScoring {
    fn from(s: ScoringArg) -> FitbScoring {
        match s {
            ScoringArg::Distance => FitbScoring::Distance,
            ScoringArg::Compatibility => FitbScoring::Compatibility,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic corpus with stub embeddings.
    GenSynth {
        #[command(flatten)]
        common: Common,
    },
    /// Report dangling ids, split sizes and outfit lengths of a corpus.
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Write deterministic stand-in embeddings for a corpus.
    EncodeStub {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Train the compatibility model.
    TrainCp {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: Data,
        /// Start from this checkpoint instead of a fresh initialization.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Train the retrieval heads, optionally from a compatibility checkpoint.
    TrainCir {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: Data,
        /// Pretrained checkpoint (overrides `train.pretrained_checkpoint`).
        #[arg(long)]
        pretrained: Option<PathBuf>,
    },
    /// AUC and accuracy at 0.5 on one split.
    EvalCp {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: Data,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Fill-in-the-blank accuracy with a per-question CSV.
    EvalFitb {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: Data,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Candidate ranking (defaults to `retrieval.scoring`).
        #[arg(long, value_enum)]
        scoring: Option<ScoringArg>,
    },
    /// Embed corpus items and write an ORIX index.
    IndexBuild {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: Data,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Top-k complementary items for an outfit and a target description.
    Retrieve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        index: PathBuf,
        /// JSON array of item ids.
        #[arg(long)]
        outfit: PathBuf,
        /// JSON array of floats (text_dim values).
        #[arg(long)]
        desc_embedding: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        category: Option<String>,
        /// Defaults to the checkpoint recorded next to the index.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Compare analytic gradients with central finite differences.
    Gradcheck {
        #[command(flatten)]
        common: Common,
    },
}

/// Parses `argv` and runs the command; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let argv: Vec<String> = argv
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    match commands::dispatch(cli.command, &argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
