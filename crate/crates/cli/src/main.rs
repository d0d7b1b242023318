mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{ArgAction, Parser, Subcommand};
use serde_json::Value;

/// Generate, validate, evaluate and inspect narrative ListOps datasets.
#[derive(Debug, Parser)]
#[command(name = "storyops", version)]
pub struct Cli {
    /// Settings file (TOML or JSON) keyed by setting identifiers, e.g. MAX_TOTAL_TOKENS.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one setting; repeatable. Wins over the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Use the offline template author instead of a remote endpoint.
    #[arg(long, global = true)]
    mock: bool,
    /// Scripted offline backend (JSON rule list); implies --mock.
    #[arg(long, global = true, value_name = "FILE")]
    mock_profile: Option<PathBuf>,
    /// Concurrent samples in flight.
    #[arg(long, global = true, default_value_t = 100)]
    workers: usize,
    /// cl100k-style BPE vocabulary for exact token counts; a close estimate is used otherwise.
    #[arg(long, global = true, value_name = "FILE")]
    vocab: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate samples; writes the researcher-detail and eval-ready tiers.
    Generate {
        #[arg(short = 'n', long)]
        n_samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// File name suffix; defaults to the current UTC time.
        #[arg(long)]
        tag: Option<String>,
        #[arg(long)]
        max_total_tokens: Option<usize>,
        #[arg(long)]
        max_ops: Option<usize>,
        /// Run the holistic check during generation as well.
        #[arg(long)]
        holistic_inline: bool,
    },
    /// Holistic validation of an eval-ready file; writes the cleaned tier.
    Validate {
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Score a model on a dataset file.
    Evaluate {
        dataset: PathBuf,
        /// Where result files go; defaults to the dataset's directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        model: Option<String>,
        /// Also score the bare expressions without narrative.
        #[arg(long)]
        bare: bool,
        /// Only accept replies that are exactly one integer.
        #[arg(long)]
        strict: bool,
        /// JSONL of {"id", "trace": [claimed results in post-order]} for step diagnostics.
        #[arg(long, requires = "researcher")]
        traces: Option<PathBuf>,
        /// Researcher-detail file matching the traces.
        #[arg(long)]
        researcher: Option<PathBuf>,
    },
    /// Corpus summary and leakage audit.
    Stats {
        dataset: PathBuf,
        /// Histogram bin width in tokens.
        #[arg(long, default_value_t = 500)]
        bin_width: usize,
    },
}

/// Exit status contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success = 0,
    Partial = 1,
    Usage = 2,
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(String),
}

impl Cli {
    fn overrides(&self) -> Result<Vec<(String, Value)>, String> {
        let mut out: Vec<(String, Value)> = self
            .sets
            .iter()
            .map(|s| config::parse_assignment(s))
            .collect::<Result<_, _>>()?;
        match &self.command {
            Command::Generate {
                max_total_tokens,
                max_ops,
                holistic_inline,
                ..
            } => {
                if let Some(v) = max_total_tokens {
                    out.push(("MAX_TOTAL_TOKENS".into(), (*v).into()));
                }
                if let Some(v) = max_ops {
                    out.push(("MAX_OPS".into(), (*v).into()));
                }
                if *holistic_inline {
                    out.push(("HOLISTIC_INLINE".into(), true.into()));
                }
            }
            Command::Evaluate { model, strict, .. } => {
                if let Some(m) = model {
                    out.push(("EVAL_MODEL".into(), m.clone().into()));
                }
                if *strict {
                    out.push(("ANSWER_PARSE_MODE".into(), "strict".into()));
                }
            }
            _ => {}
        }
        Ok(out)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let cancel = Arc::new(AtomicBool::new(false));
    let flag = cancel.clone();
    let handler = ctrlc::set_handler(move || {
        if flag.swap(true, Ordering::SeqCst) {
            eprintln!("interrupted again; exiting now");
            std::process::exit(130);
        }
        eprintln!("interrupt: finishing samples in flight (press Ctrl-C again to abort)");
    });
    if let Err(e) = handler {
        log::warn!("no interrupt handler: {e}");
    }

    let result = cli
        .overrides()
        .and_then(|o| config::load(cli.config.as_deref(), o))
        .map_err(Failure::Usage)
        .and_then(|settings| {
            log::info!(
                "effective settings: {}",
                Value::Object(settings.effective.clone())
            );
            let ctx = commands::Context {
                cli: &cli,
                settings: &settings,
                cancel: &cancel,
            };
            match &cli.command {
                Command::Generate {
                    n_samples,
                    seed,
                    out_dir,
                    tag,
                    ..
                } => commands::generate(&ctx, *n_samples, *seed, out_dir, tag.as_deref()),
                Command::Validate { input, output } => {
                    commands::validate(&ctx, input, output.as_deref())
                }
                Command::Evaluate {
                    dataset,
                    out_dir,
                    bare,
                    traces,
                    researcher,
                    ..
                } => commands::evaluate(
                    &ctx,
                    dataset,
                    out_dir.as_deref(),
                    *bare,
                    traces.as_deref().zip(researcher.as_deref()),
                ),
                Command::Stats { dataset, bin_width } => commands::stats(&ctx, dataset, *bin_width),
            }
        });
    let status = match result {
        Ok(s) => s,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            Status::Usage
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            Status::Partial
        }
    };
    ExitCode::from(status as u8)
}
