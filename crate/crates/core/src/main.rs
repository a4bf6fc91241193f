use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use intent_router::corpus::synth::{generate_corpus, SEEDS_PER_INTENT, SHIPPED_SEED};
use intent_router::corpus::{save_corpus, RuleBasedRewriter};
use intent_router::dispatch::{dispatch, ActionRegistry, DispatchOutcome, Emitter, HttpSinkConfig, SinkConfig};
use intent_router::experiments::{run_experiment, write_reports, ExperimentConfig, ExperimentKind};
use intent_router::router::RouteSetDocument;
use intent_router::{builtin_routes, EncoderDescriptor, ThresholdSet};

#[derive(Parser)]
#[command(name = "intent-router", version, about = "Semantic intent routing for 5G core MANO")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment preset and write JSON, CSV and text reports.
    Eval {
        #[arg(long)]
        experiment: ExperimentKind,
        /// ExperimentConfig JSON; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "reports")]
        out: PathBuf,
    },
    /// Route one or more utterances and print the decisions as JSON lines.
    Route {
        /// Route set JSON; the six built-in routes when omitted.
        #[arg(long)]
        routes: Option<PathBuf>,
        /// Threshold map JSON, e.g. the output of a tuning run.
        #[arg(long)]
        thresholds: Option<PathBuf>,
        /// Reference encoder dimension for the built-in routes.
        #[arg(long, default_value_t = 1024)]
        dim: usize,
        /// Also dispatch: `stdout`, `file:<path>` or an http(s) URL.
        #[arg(long)]
        dispatch_to: Option<String>,
        #[arg(required = true)]
        text: Vec<String>,
    },
    /// Corpus utilities.
    Corpus {
        #[command(subcommand)]
        command: CorpusCommand,
    },
}

#[derive(Subcommand)]
enum CorpusCommand {
    /// Generate a synthetic corpus (seeds plus rule-based variants).
    Generate {
        #[arg(long, default_value = "corpus.jsonl")]
        out: PathBuf,
        #[arg(long, default_value_t = SHIPPED_SEED)]
        seed: u64,
        #[arg(long, default_value_t = SEEDS_PER_INTENT)]
        per_intent: usize,
    },
}

/// An error with its exit code.
struct Failure(i32, String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(1, e.to_string())
    }
}

fn config_error(msg: impl Into<String>) -> Failure {
    Failure(2, msg.into())
}

fn sink_config(spec: &str) -> Result<SinkConfig, Failure> {
    if spec == "stdout" {
        Ok(SinkConfig::Stdout)
    } else if let Some(path) = spec.strip_prefix("file:") {
        Ok(SinkConfig::File { path: path.into() })
    } else if spec.starts_with("http://") || spec.starts_with("https://") {
        Ok(SinkConfig::Http(HttpSinkConfig::new(spec)))
    } else {
        Err(config_error(format!(
            "unrecognized sink {spec:?}; use stdout, file:<path> or a URL"
        )))
    }
}

fn eval(kind: ExperimentKind, config: Option<PathBuf>, out: PathBuf) -> Result<(), Failure> {
    let config = match config {
        Some(path) => ExperimentConfig::load(path),
        None => Ok(ExperimentConfig::default()),
    };
    let run = config.and_then(|c| run_experiment(kind, &c));
    let output = run.map_err(|e| Failure(e.exit_code(), e.to_string()))?;
    for path in write_reports(&output, &out).map_err(|e| Failure(e.exit_code(), e.to_string()))? {
        println!("{}", path.display());
    }
    Ok(())
}

fn route(
    routes: Option<PathBuf>,
    thresholds: Option<PathBuf>,
    dim: usize,
    dispatch_to: Option<String>,
    text: Vec<String>,
) -> Result<(), Failure> {
    let doc = match routes {
        Some(path) => RouteSetDocument::load(&path).map_err(|e| config_error(format!("{}: {e}", path.display())))?,
        None => RouteSetDocument {
            routes: builtin_routes(),
            encoder: EncoderDescriptor::reference(format!("reference-{dim}"), dim),
            top_k: 5,
        },
    };
    let mut router = doc.build().map_err(|e| config_error(e.to_string()))?;
    if let Some(path) = thresholds {
        let body = std::fs::read_to_string(&path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        let set: ThresholdSet = serde_json::from_str(&body).map_err(|e| config_error(e.to_string()))?;
        router = router
            .with_thresholds(set.as_map())
            .map_err(|e| config_error(e.to_string()))?;
    }
    let sink = match dispatch_to {
        Some(spec) => {
            let registry = ActionRegistry::from_routes(router.routes()).map_err(|e| config_error(e.to_string()))?;
            Some((registry, Emitter::new(&sink_config(&spec)?)?))
        }
        None => None,
    };
    for t in &text {
        let decision = router.route_query(t)?;
        println!("{}", serde_json::to_string(&decision)?);
        if let Some((registry, emitter)) = &sink {
            match dispatch(&decision, t, registry)? {
                DispatchOutcome::Action(request) => {
                    let receipt = emitter.emit(&request)?;
                    log::info!(
                        "delivered {} via {} in {} attempt(s)",
                        receipt.correlation_id,
                        receipt.sink,
                        receipt.attempts
                    );
                }
                DispatchOutcome::NoAction { score } => log::info!("no action for {t:?} (best score {score:.3})"),
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Eval {
            experiment,
            config,
            out,
        } => eval(experiment, config, out),
        Command::Route {
            routes,
            thresholds,
            dim,
            dispatch_to,
            text,
        } => route(routes, thresholds, dim, dispatch_to, text),
        Command::Corpus {
            command: CorpusCommand::Generate { out, seed, per_intent },
        } => {
            if per_intent == 0 {
                return Err(config_error("--per-intent must be at least 1"));
            }
            let corpus = generate_corpus(seed, per_intent, &RuleBasedRewriter)?;
            save_corpus(&corpus, &out)?;
            println!("{} prompts written to {}", corpus.len(), out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code as u8)
        }
    }
}
