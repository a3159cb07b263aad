//! `homog`: classify exponent triples, compute effective tensors, and run
//! fine-scale studies from a JSON configuration.

mod commands;
mod config;
mod failure;
mod output;

use anyhow::Context as _;
use clap::{Parser, Subcommand};
use config::RunConfig;
use failure::{io_failure, Failure};
use output::OutDir;
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

const USAGE_EXIT: u8 = 64;

#[derive(Debug, Parser)]
#[command(name = "homog", version, about = "Reiterated space-time homogenization toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` in the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for cell solves and independent runs.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Reserved; nothing is stochastic at present. Recorded in metadata.json.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Also write the computed correctors to correctors.json.
    #[arg(long, global = true)]
    dump_correctors: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Identify the regime of (p, q, r).
    Classify,
    /// Compute the effective tensor b and the intermediate tensor.
    Effective,
    /// Solve the homogenized problem.
    Macro,
    /// Fine-scale reference solutions for every configured ε.
    Fine,
    /// Convergence study of the fine-scale solutions against the homogenized one.
    Study,
    /// Condition, pairing and corrector-probe decay tables.
    Diagnose,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Classify => "classify",
            Command::Effective => "effective",
            Command::Macro => "macro",
            Command::Fine => "fine",
            Command::Study => "study",
            Command::Diagnose => "diagnose",
        }
    }
}

#[derive(Serialize)]
struct ErrorFile<'a> {
    status: i32,
    kind: failure::FailureKind,
    code: &'a str,
    message: &'a str,
    subcommand: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    details: Option<&'a serde_json::Value>,
}

#[derive(Serialize)]
struct Metadata<'a> {
    tool: &'a str,
    version: &'a str,
    subcommand: &'a str,
    config: Option<String>,
    workers: usize,
    seed: Option<u64>,
    started_unix_seconds: u64,
    elapsed_seconds: f64,
    status: i32,
    artifacts: Vec<String>,
}

fn read_config(path: Option<&Path>) -> Result<RunConfig, Failure> {
    let path = path.ok_or_else(|| Failure::validation("invalid_config", "--config <path> is required"))?;
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading configuration {}", path.display()))
        .map_err(|e| Failure::validation("invalid_config", format!("{e:#}")))?;
    let config = RunConfig::from_json(&text)?;
    config.validate()?;
    Ok(config)
}

fn dispatch(command: Command, ctx: &mut commands::Context) -> Result<(), Failure> {
    match command {
        Command::Classify => commands::classify(ctx),
        Command::Effective => commands::effective(ctx),
        Command::Macro => commands::macroscale(ctx),
        Command::Fine => commands::fine(ctx),
        Command::Study => commands::study(ctx),
        Command::Diagnose => commands::diagnose(ctx),
    }
}

fn run(cli: &Cli, out_root: &mut Option<PathBuf>, written: &mut Vec<PathBuf>) -> Result<(), Failure> {
    let config = read_config(cli.config.as_deref());
    *out_root = cli.out.clone().or_else(|| config.as_ref().ok().and_then(|c| c.output_dir.clone()));
    let config = config?;
    let root = out_root.clone().unwrap_or_else(|| PathBuf::from("out"));
    *out_root = Some(root.clone());
    let mut out = OutDir::create(&root)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(Failure::validation("invalid_config", "--workers must be positive"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Failure::solver("worker_pool", e.to_string()))?;
    let result = pool.install(|| {
        let mut ctx = commands::Context { config: &config, out: &mut out, dump_correctors: cli.dump_correctors };
        dispatch(cli.command, &mut ctx)
    });
    written.extend_from_slice(out.written());
    result
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_failure("serializing", e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_failure(&format!("writing {}", path.display()), e))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(USAGE_EXIT),
            };
        }
    };
    let started = Instant::now();
    let started_unix_seconds = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let mut out_root = None;
    let mut written = Vec::new();
    let result = run(&cli, &mut out_root, &mut written);
    let status = match &result {
        Ok(()) => 0,
        Err(f) => f.exit_code(),
    };
    let root = out_root.unwrap_or_else(|| PathBuf::from("out"));
    if let Err(f) = &result {
        eprintln!("error [{}]: {}", f.code, f.message);
        let _ = std::fs::create_dir_all(&root);
        let file = ErrorFile { status, kind: f.kind, code: f.code, message: &f.message, subcommand: cli.command.name(), details: f.details.as_ref() };
        if let Err(e) = write_json(&root.join("error.json"), &file) {
            eprintln!("could not write error.json: {e}");
        }
    }
    if root.is_dir() {
        let artifacts = written.iter().filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned())).collect();
        let meta = Metadata {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            subcommand: cli.command.name(),
            config: cli.config.as_ref().map(|p| p.display().to_string()),
            workers: cli.workers.unwrap_or_else(rayon::current_num_threads),
            seed: cli.seed,
            started_unix_seconds,
            elapsed_seconds: started.elapsed().as_secs_f64(),
            status,
            artifacts,
        };
        if let Err(e) = write_json(&root.join("metadata.json"), &meta) {
            eprintln!("could not write metadata.json: {e}");
        }
    }
    ExitCode::from(status as u8)
}
