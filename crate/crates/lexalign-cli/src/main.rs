//! `lexalign` aligns two monolingual embedding spaces without supervision
//! and induces/evaluates a bilingual lexicon.

mod commands;
mod manifest;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use lexalign::align::{Direction, PipelineConfig};

use commands::{cmd_diagnose, cmd_eval, cmd_map, cmd_synth};
use commands::{DiagnoseArgs, EvalArgs, MapArgs, SynthArgs};

#[derive(Parser)]
#[command(name = "lexalign", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Align two embedding spaces end to end and write mapped embeddings.
    Map(MapCli),
    /// Score mapped embeddings against a gold dictionary (P@1).
    Eval(EvalCli),
    /// Spectrum and rotation diagnostics as CSV.
    Diagnose(DiagnoseCli),
    /// Generate a planted synthetic instance.
    Synth(SynthCli),
}

/// Pipeline knobs shared by `map`; unset flags fall back to the config
/// file, then to the defaults.
#[derive(Args, Debug, Default)]
struct PipelineFlags {
    #[arg(long)]
    init_cutoff: Option<usize>,
    #[arg(long)]
    train_cutoff: Option<usize>,
    #[arg(long)]
    csls_k: Option<usize>,
    #[arg(long)]
    p0: Option<f64>,
    #[arg(long)]
    p_factor: Option<f64>,
    #[arg(long)]
    stall_patience: Option<usize>,
    #[arg(long)]
    convergence_eps: Option<f64>,
    #[arg(long)]
    max_p: Option<f64>,
    #[arg(long)]
    transform_cutoff: Option<usize>,
    #[arg(long, value_parser = parse_direction)]
    direction: Option<Direction>,
    #[arg(long)]
    block_size: Option<usize>,
}

fn parse_direction(s: &str) -> std::result::Result<Direction, String> {
    s.parse().map_err(|e| format!("{e}"))
}

impl PipelineFlags {
    fn apply(&self, mut cfg: PipelineConfig) -> PipelineConfig {
        if let Some(v) = self.init_cutoff {
            cfg.init_cutoff = v;
        }
        if let Some(v) = self.train_cutoff {
            cfg.train_cutoff = v;
        }
        if let Some(v) = self.csls_k {
            cfg.csls_k = v;
        }
        if let Some(v) = self.p0 {
            cfg.p0 = v;
        }
        if let Some(v) = self.p_factor {
            cfg.p_factor = v;
        }
        if let Some(v) = self.stall_patience {
            cfg.stall_patience = v;
        }
        if let Some(v) = self.convergence_eps {
            cfg.convergence_eps = v;
        }
        if let Some(v) = self.max_p {
            cfg.max_p = v;
        }
        if let Some(v) = self.transform_cutoff {
            cfg.transform_cutoff = v;
        }
        if let Some(v) = self.direction {
            cfg.direction = v;
        }
        if let Some(v) = self.block_size {
            cfg.block_size = v;
        }
        cfg
    }
}

/// Optional TOML configuration; CLI flags override file values.
#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct FileConfig {
    pipeline: Option<PipelineConfig>,
    seeds: Option<Vec<u64>>,
    skip_transform: Option<bool>,
    max_vocab: Option<usize>,
}

fn load_file_config(path: Option<&PathBuf>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config file {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing config file {}", p.display()))
        }
    }
}

#[derive(Args)]
struct MapCli {
    /// Source embedding file (word2vec/fastText text format).
    #[arg(long)]
    src: PathBuf,
    /// Target embedding file.
    #[arg(long)]
    tgt: PathBuf,
    /// Output directory for mapped embeddings and the manifest.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated RNG seeds, one pipeline run each.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Skip the rotation/scaling preprocessing (baseline path).
    #[arg(long)]
    skip_transform: bool,
    /// Vocabulary cap applied while loading.
    #[arg(long)]
    max_vocab: Option<usize>,
    /// Require this embedding dimension.
    #[arg(long)]
    expected_dim: Option<usize>,
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineFlags,
}

#[derive(Args)]
struct EvalCli {
    /// Mapped source embedding file.
    #[arg(long)]
    src: PathBuf,
    /// Mapped target embedding file.
    #[arg(long)]
    tgt: PathBuf,
    /// Gold dictionary (two columns: source word, target word).
    #[arg(long)]
    gold: PathBuf,
    /// CSLS neighborhood size [default: 10].
    #[arg(long)]
    csls_k: Option<usize>,
    /// Row-block size [default: 1024].
    #[arg(long)]
    block_size: Option<usize>,
    /// Vocabulary cap applied while loading [default: 200000].
    #[arg(long)]
    max_vocab: Option<usize>,
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write a JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write the induced predictions here (two-column text).
    #[arg(long)]
    predictions: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnoseCli {
    /// Source embedding file (raw, not mapped).
    #[arg(long)]
    src: PathBuf,
    /// Target embedding file (raw, not mapped).
    #[arg(long)]
    tgt: PathBuf,
    /// Gold dictionary for the rotation diagnostic.
    #[arg(long)]
    gold: PathBuf,
    /// How many top singular values to report.
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Rows used for the diagnostic SVDs [default: 4000].
    #[arg(long)]
    cutoff: Option<usize>,
    /// Vocabulary cap applied while loading [default: 200000].
    #[arg(long)]
    max_vocab: Option<usize>,
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for the CSV reports.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthCli {
    /// Vocabulary size.
    #[arg(long)]
    n: usize,
    /// Embedding dimension.
    #[arg(long)]
    d: usize,
    /// Gaussian noise scale added to the planted copy.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Map(args) => {
            let file_cfg = load_file_config(args.config.as_ref())?;
            let cfg = args
                .pipeline
                .apply(file_cfg.pipeline.unwrap_or_default());
            cfg.validate().context("invalid pipeline configuration")?;
            let seeds = args
                .seeds
                .or(file_cfg.seeds)
                .unwrap_or_else(|| vec![0, 1, 2]);
            let skip_transform =
                args.skip_transform || file_cfg.skip_transform.unwrap_or(false);
            let max_vocab = args
                .max_vocab
                .or(file_cfg.max_vocab)
                .unwrap_or(200_000);
            cmd_map(MapArgs {
                src: args.src,
                tgt: args.tgt,
                out: args.out,
                cfg,
                seeds,
                skip_transform,
                max_vocab,
                expected_dim: args.expected_dim,
            })
        }
        Command::Eval(args) => {
            let file_cfg = load_file_config(args.config.as_ref())?;
            let pipeline = file_cfg.pipeline.unwrap_or_default();
            cmd_eval(EvalArgs {
                src: args.src,
                tgt: args.tgt,
                gold: args.gold,
                csls_k: args.csls_k.unwrap_or(pipeline.csls_k),
                block_size: args.block_size.unwrap_or(pipeline.block_size),
                max_vocab: args
                    .max_vocab
                    .or(file_cfg.max_vocab)
                    .unwrap_or(200_000),
                report: args.report,
                predictions: args.predictions,
            })
        }
        Command::Diagnose(args) => {
            let file_cfg = load_file_config(args.config.as_ref())?;
            let pipeline = file_cfg.pipeline.unwrap_or_default();
            cmd_diagnose(DiagnoseArgs {
                src: args.src,
                tgt: args.tgt,
                gold: args.gold,
                k: args.k,
                cutoff: args.cutoff.unwrap_or(pipeline.transform_cutoff),
                max_vocab: args
                    .max_vocab
                    .or(file_cfg.max_vocab)
                    .unwrap_or(200_000),
                out: args.out,
            })
        }
        Command::Synth(args) => cmd_synth(SynthArgs {
            n: args.n,
            d: args.d,
            noise: args.noise,
            seed: args.seed,
            out: args.out,
        }),
    }
}
