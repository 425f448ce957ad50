use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use saliency_core::pipeline::{self, RunConfig};
use saliency_core::Result;
use serde_json::json;

/// Phoneme-level saliency analysis of speaker recognition models.
#[derive(Parser, Debug)]
#[command(name = "phonsal", version)]
struct Cli {
    /// Run configuration (JSON). Defaults to the desk preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; overrides the config.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic corpus and write the manifest.
    Synth,
    /// Train every configured model and report top-1 accuracy.
    Train,
    /// Compute saliency for every model, method and test utterance.
    Explain,
    /// Compute PIDs and consistency statistics into report.json.
    Analyze,
    /// Run everything and write report.json, CSV tables and the SVG chart.
    Report,
}

fn config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::desk(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = Some(j);
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<serde_json::Value> {
    let cfg = config(cli)?;
    let out = cfg.out.clone();
    cfg.install(|| -> Result<serde_json::Value> {
        match cli.command {
            Command::Synth => {
                let prep = pipeline::prepare(&cfg)?;
                Ok(json!({
                    "corpus": prep.corpus_root,
                    "manifest": out.join("manifest.json"),
                    "recordings": prep.manifest.recordings.len(),
                    "test_utterances": prep.test.len(),
                }))
            }
            Command::Train => {
                let prep = pipeline::prepare(&cfg)?;
                let runs = pipeline::stage_train(&cfg, &prep)?;
                let models: Vec<_> = runs
                    .iter()
                    .map(|r| json!({"model": r.arch.name(), "top1": r.top1, "steps": r.training.steps, "checkpoint": out.join("models").join(format!("{}.ckpt", r.arch))}))
                    .collect();
                Ok(json!({ "models": models }))
            }
            Command::Explain => {
                let prep = pipeline::prepare(&cfg)?;
                let runs = pipeline::stage_train(&cfg, &prep)?;
                let expl = pipeline::stage_explain(&cfg, &prep, &runs)?;
                let dumps: Vec<_> = expl.iter().map(|e| out.join("saliency").join(format!("{}_{}.csv", e.arch, e.method))).collect();
                Ok(json!({ "saliency": dumps }))
            }
            Command::Analyze => {
                let prep = pipeline::prepare(&cfg)?;
                let runs = pipeline::stage_train(&cfg, &prep)?;
                let expl = pipeline::stage_explain(&cfg, &prep, &runs)?;
                let report = pipeline::stage_analyze(&cfg, &prep, &runs, &expl)?;
                let dir = out.join("report");
                report.write_json(&dir)?;
                Ok(json!({ "report": dir.join("report.json") }))
            }
            Command::Report => {
                pipeline::run_all(&cfg)?;
                Ok(json!({ "report_dir": out.join("report") }))
            }
        }
    })?
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(v) => {
            println!("{v}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}
