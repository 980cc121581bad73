//! `comom`: dataset hygiene, augmentation, training, prediction and
//! evaluation for comparative opinion mining.
//!
//! Exit codes: 0 success, 1 lint findings or an evaluation id mismatch,
//! 2 usage or configuration error, 3 runtime failure. Failures print one JSON
//! object `{"error": <kind>, "message": <text>}` on stderr.

mod commands;
mod config;

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use comom::eval::Averaging;
use comom::ingest::Format;
use comom::pipeline::ExperimentPreset;
use serde_json::{json, Value};

#[derive(Debug, Parser)]
#[command(name = "comom", version, about = "Comparative opinion quintuple extraction toolkit")]
struct Cli {
    /// JSON file with default settings.
    #[arg(long, global = true, env = "COMOM_CONFIG")]
    config: Option<PathBuf>,
    /// Overrides the seed of every seeded step.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress warnings and notes on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct InputFormat {
    /// Input layout: canonical-jsonl or vlsp-raw.
    #[arg(long, value_parser = parse_with::<Format>)]
    format: Option<Format>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Import (normalizing) and write canonical JSONL.
    Clean {
        input: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        format: InputFormat,
    },
    /// Sentence, label and element statistics.
    Stats {
        input: PathBuf,
        #[command(flatten)]
        format: InputFormat,
        #[arg(long)]
        json: bool,
    },
    /// Annotation checks; exits 1 when anything is found.
    Lint {
        input: PathBuf,
        #[command(flatten)]
        format: InputFormat,
        #[arg(long)]
        max_predicate_tokens: Option<usize>,
        #[arg(long)]
        json: bool,
    },
    /// Add synthetic quintuples until the label targets are met.
    Augment {
        input: PathBuf,
        /// JSON augmentation spec.
        #[arg(long, conflicts_with = "version", required_unless_present = "version")]
        spec: Option<PathBuf>,
        /// Built-in targets: v2 or v3.
        #[arg(long)]
        version: Option<String>,
        /// Directory of extra wordlists.
        #[arg(long)]
        wordlists: Option<PathBuf>,
        #[arg(long, short)]
        output: PathBuf,
        #[command(flatten)]
        format: InputFormat,
    },
    /// Train a native model, or a bootstrap ensemble with `--bootstrap k`.
    Train {
        /// sentence, tag or quadruple.
        #[arg(value_parser = parse_with::<comom::backends::Capability>)]
        task: comom::backends::Capability,
        input: PathBuf,
        /// Model file, or the ensemble manifest when bootstrapping.
        #[arg(long, short)]
        output: PathBuf,
        #[arg(long)]
        bootstrap: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// words, chars or full.
        #[arg(long)]
        profile: Option<String>,
        #[arg(long)]
        hash_bits: Option<u8>,
    },
    /// Run the three-stage pipeline.
    Predict {
        input: PathBuf,
        #[arg(long)]
        pipeline: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Exact-match quintuple scores of predictions against gold.
    Eval {
        gold: PathBuf,
        pred: PathBuf,
        /// skip-absent or fixed8.
        #[arg(long)]
        averaging: Option<String>,
        /// Also write the JSON report here.
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Train and evaluate one of the presets E1..E5.
    Experiment {
        #[arg(value_parser = parse_with::<ExperimentPreset>)]
        preset: ExperimentPreset,
        /// Directory holding <version>.jsonl and optionally test.jsonl.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Answer adapter-protocol requests with native models or manifests.
    Serve {
        #[arg(required = true)]
        models: Vec<PathBuf>,
        /// Accept TCP connections here instead of using stdin/stdout.
        #[arg(long)]
        listen: Option<String>,
    },
    /// Answer adapter-protocol requests from a mock fixture.
    MockServe {
        fixture: PathBuf,
        #[arg(long)]
        listen: Option<String>,
    },
}

fn parse_with<T: std::str::FromStr<Err = comom::Error>>(s: &str) -> Result<T, String> {
    s.parse().map_err(|e: comom::Error| e.to_string())
}

/// A command that did not succeed, with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub kind: String,
    pub message: String,
    pub details: Option<Value>,
}

impl Failure {
    pub fn usage(kind: &str, message: impl Display) -> Self {
        Failure { code: 2, kind: kind.into(), message: message.to_string(), details: None }
    }

    pub fn context(mut self, path: &Path) -> Self {
        self.message = format!("{}: {}", path.display(), self.message);
        self
    }

    fn to_json(&self) -> Value {
        let mut v = json!({ "error": self.kind, "message": self.message });
        if let Some(d) = &self.details {
            v["details"] = d.clone();
        }
        v
    }
}

impl From<comom::Error> for Failure {
    fn from(e: comom::Error) -> Self {
        let code = match e {
            comom::Error::InvalidConfig(_) | comom::Error::Json(_) => 2,
            comom::Error::IdMismatch(_) => 1,
            _ => 3,
        };
        let details = match &e {
            comom::Error::InvalidRecords(records) => Some(records.iter().map(|r| json!(r.to_string())).collect()),
            _ => None,
        };
        Failure { code, kind: e.kind().into(), message: e.to_string(), details }
    }
}

fn parse_averaging(s: Option<&str>) -> Result<Option<Averaging>, Failure> {
    s.map(|s| serde_json::from_value(json!(s)).map_err(|_| Failure::usage("UsageError", format!("unknown averaging {s:?}"))))
        .transpose()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let failure = Failure::usage("UsageError", e.render().to_string().trim());
            eprintln!("{}", failure.to_json());
            return ExitCode::from(2);
        }
    };
    match commands::run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            eprintln!("{}", failure.to_json());
            ExitCode::from(failure.code)
        }
    }
}
