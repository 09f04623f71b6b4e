//! `ecokg`: synthetic data generation, KG embedding, gap-filling evaluation
//! and explanation, driven by one TOML configuration.

mod commands;
mod config;
mod output;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};
use ecokg_core::predict::GapMode;

use commands::{cmd_embed, cmd_evaluate, cmd_explain, cmd_generate, RunContext};
use config::RunConfig;
use output::{write_run_manifest, RunManifest, Seeds};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Species,
    Chemical,
}

#[derive(Debug, Parser)]
#[command(
    name = "ecokg",
    version,
    about = "Toxicity gap-filling from knowledge-graph embeddings"
)]
struct Cli {
    /// TOML run configuration; defaults apply to anything it leaves out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every stochastic stage.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Which side of the pair is held out during evaluation.
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    /// Run directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Write a synthetic knowledge graph, effect records and fingerprints.
    Generate,
    /// Train the embedding initialisations and write entity features.
    Embed,
    /// Run repeated grouped cross-validation for embedding and random features.
    Evaluate,
    /// Write density maps, the error model, common facts and correlations.
    Explain,
    /// Run every stage in order.
    All,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Generate => "generate",
            Command::Embed => "embed",
            Command::Evaluate => "evaluate",
            Command::Explain => "explain",
            Command::All => "all",
        }
    }
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = cli.mode {
        cfg.mode = match mode {
            ModeArg::Species => GapMode::Species,
            ModeArg::Chemical => GapMode::Chemical,
        };
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    cfg.propagate_seed();
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(cli)?;
    let ctx = RunContext {
        cfg: &cfg,
        digest: cfg.digest()?,
    };
    let has_inputs = cfg.paths.kg.is_some() && cfg.paths.effects.is_some();
    let mut stages = Vec::new();
    match cli.command {
        Command::Generate => stages.push(cmd_generate(&ctx)?),
        Command::Embed => stages.push(cmd_embed(&ctx)?),
        Command::Evaluate => stages.push(cmd_evaluate(&ctx)?),
        Command::Explain => stages.push(cmd_explain(&ctx)?),
        Command::All => {
            if !has_inputs {
                stages.push(cmd_generate(&ctx)?);
            }
            if cfg.paths.features.is_none() {
                stages.push(cmd_embed(&ctx)?);
            }
            stages.push(cmd_evaluate(&ctx)?);
            stages.push(cmd_explain(&ctx)?);
        }
    }
    let manifest = RunManifest {
        command: cli.command.name().to_string(),
        config_sha256: ctx.digest.clone(),
        seeds: Seeds::of(&cfg),
        stages,
    };
    write_run_manifest(&cfg.out, &manifest)
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
