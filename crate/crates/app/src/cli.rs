//! Command-line front end. Exit codes: 0 success, 2 pre-flight or
//! validation failure, 1 anything else.

use std::collections::BTreeMap;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand};
use novapipe_core::config::{default_config, preflight_check, TrainingConfig, DEFAULT_SEED};
use novapipe_core::contract::{self, ContractError};
use novapipe_core::eval::diagnose;
use novapipe_core::intake::{label_balance, parse_csv, profile_dataset};
use novapipe_core::train::{one_click_train, PipelineError};
use novapipe_core::{Dataset, Strategy};
use serde_json::json;
use thiserror::Error;

use crate::api::{router, AppState};
use crate::jobs::{training_runner, JobQueue};
use crate::store::Store;

#[derive(Debug, Parser)]
#[command(
    name = "novapipe",
    version,
    about = "Train and serve text classifiers from CSV files"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print column types, missing values and label candidates for a CSV.
    Profile { csv: PathBuf },
    /// Train a model with safe defaults and save the artifact.
    Train {
        csv: PathBuf,
        /// Column to predict.
        #[arg(long)]
        target: String,
        /// Input columns; defaults to every text column except the target.
        #[arg(long, value_delimiter = ',')]
        inputs: Vec<String>,
        /// Train one binary stage per class instead of a single model.
        #[arg(long)]
        cascade: bool,
        #[arg(long)]
        seed: Option<u64>,
        /// Artifact directory; defaults to ./model-<model_id>.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the evaluation report stored in an artifact.
    Report { artifact: PathBuf },
    /// Predict one row with a saved artifact.
    Predict {
        artifact: PathBuf,
        /// An input value as column=value; repeat for each column.
        #[arg(long = "input", value_parser = parse_key_value)]
        inputs: Vec<(String, String)>,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, env = "NOVAPIPE_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        /// Store root for datasets and models.
        #[arg(long, env = "NOVAPIPE_DATA_DIR", default_value = "novapipe-data")]
        data_dir: PathBuf,
        /// Training worker threads.
        #[arg(long, env = "NOVAPIPE_WORKERS", default_value_t = 1)]
        workers: usize,
    },
}

fn parse_key_value(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .ok_or_else(|| format!("expected column=value, got {s:?}"))
}

#[derive(Debug, Error)]
pub enum CliError {
    /// The input was understood but rejected.
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Internal(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Internal(_) => 1,
        }
    }
}

impl From<ContractError> for CliError {
    fn from(e: ContractError) -> Self {
        match e {
            ContractError::IoFailure(_) => CliError::Internal(e.into()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

/// Runs `cli`, writing results to `out` and diagnostics to `err`, and
/// returns the process exit code.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match dispatch(cli, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            e.exit_code()
        }
    }
}

fn print_json(out: &mut dyn Write, value: &impl serde::Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).context("encode output")?;
    writeln!(out, "{text}").context("write output")?;
    Ok(())
}

fn read_csv(path: &Path) -> Result<Dataset, CliError> {
    let bytes = std::fs::read(path).with_context(|| format!("read {}", path.display()))?;
    parse_csv(&bytes).map_err(|e| CliError::Invalid(format!("{}: {} ({})", path.display(), e, e.code())))
}

fn dispatch(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Profile { csv } => print_json(out, &profile_dataset(&read_csv(&csv)?)),
        Command::Train {
            csv,
            target,
            inputs,
            cascade,
            seed,
            out: dest,
        } => {
            let d = read_csv(&csv)?;
            let profile = profile_dataset(&d);
            let mut cfg = default_config(&profile, &target).unwrap_or_else(|_| TrainingConfig {
                // the target is missing; pre-flight reports it below
                dataset_id: d.id().0.clone(),
                input_columns: Vec::new(),
                target_column: target.clone(),
                strategy: Strategy::Flat,
                seed: DEFAULT_SEED,
                split_ratios: Default::default(),
                backend_id: novapipe_core::config::DEFAULT_BACKEND.to_string(),
                hyperparameters: Default::default(),
            });
            if !inputs.is_empty() {
                cfg.input_columns = inputs;
            }
            if cascade {
                cfg.strategy = Strategy::Cascade;
            }
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            for issue in preflight_check(&d, &cfg).iter().filter(|i| !i.is_blocking()) {
                let _ = writeln!(err, "warning: {}", issue.message);
            }
            let outcome = one_click_train(&d, &cfg, &mut |p| {
                let _ = writeln!(err, "[{:>3.0}%] {}", p.fraction_done * 100.0, p.message);
            })
            .map_err(|e| match e {
                PipelineError::Preflight(issues) => {
                    let lines: Vec<String> = issues
                        .iter()
                        .filter(|i| i.is_blocking())
                        .map(|i| format!("  {:?}: {}", i.code, i.message))
                        .collect();
                    CliError::Invalid(format!("pre-flight checks failed:\n{}", lines.join("\n")))
                }
                PipelineError::Config(c) => CliError::Invalid(c.to_string()),
                other => CliError::Internal(other.into()),
            })?;
            let dest = dest.unwrap_or_else(|| PathBuf::from(format!("model-{}", outcome.metadata.model_id)));
            let path = contract::save_model(&outcome.model, &outcome.metadata, &dest)?;
            let balance = label_balance(&d, &cfg.target_column).context("label balance")?;
            let diagnoses = diagnose(&profile, &balance, Some(&outcome.report));
            print_json(
                out,
                &json!({
                    "model_id": outcome.metadata.model_id,
                    "artifact": path,
                    "report": outcome.report,
                    "diagnoses": diagnoses,
                }),
            )
        }
        Command::Report { artifact } => {
            let (_, meta) = contract::load_model(&artifact)?;
            print_json(out, &meta.metrics_snapshot)
        }
        Command::Predict { artifact, inputs } => {
            let (model, meta) = contract::load_model(&artifact)?;
            let inputs: BTreeMap<String, String> = inputs.into_iter().collect();
            let prediction = contract::predict(&model, &meta, &inputs).map_err(|e| match e {
                ContractError::Inputs(errs) => {
                    let lines: Vec<String> = errs.iter().map(|e| format!("  {e:?}")).collect();
                    CliError::Invalid(format!("invalid inputs:\n{}", lines.join("\n")))
                }
                other => other.into(),
            })?;
            print_json(out, &prediction)
        }
        Command::Serve {
            port,
            host,
            data_dir,
            workers,
        } => serve(SocketAddr::new(host, port), &data_dir, workers).map_err(CliError::Internal),
    }
}

fn serve(addr: SocketAddr, data_dir: &Path, workers: usize) -> anyhow::Result<()> {
    let store = Arc::new(Store::open(data_dir).with_context(|| format!("open store at {}", data_dir.display()))?);
    let jobs = JobQueue::start(store.clone(), workers, training_runner(store.clone()));
    let state = AppState {
        store,
        jobs,
        rewriter: crate::rewriter_from_env(),
    };
    let rt = tokio::runtime::Runtime::new().context("start runtime")?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("bind {addr}"))?;
        tracing::info!(%addr, data_dir = %data_dir.display(), workers, "serving");
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .context("http server")
    })
}
