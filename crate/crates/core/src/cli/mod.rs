//! The `geoctx` command line.

mod commands;
pub mod config;
pub mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use commands::Ctx;
pub use config::{IndexKind, Paths, RunConfig, WorldKind};
use manifest::{hash_inputs, hash_outputs, Manifest};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  usage error (unknown flag or subcommand)
  3  file could not be read or written
  4  schema violation or corrupt input file
  5  invalid configuration or argument
  6  invalid input data (bad location, duplicate id, missing labels)
  7  numeric failure during training or inference

On failure the last line on stderr is `error: <kind>: <message>`.
Set GEOCTX_LOG=1 for progress lines on stderr.";

#[derive(Parser, Debug)]
#[command(name = "geoctx", version, about = "Spatially contextualized geo-entity representations", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Clean raw point records (.jsonl, .json or .csv) into entities.
    Clean(Common),
    /// Generate a synthetic world.
    Synth(Common),
    /// Build the spatial index table for entity files.
    Index(Common),
    /// Train a subword vocabulary on entity names.
    Vocab(Common),
    /// Pretrain the encoder with masked-token and masked-entity objectives.
    Pretrain(Common),
    /// Fine-tune a typing head and compare with a name-only baseline.
    #[command(name = "finetune-typing")]
    FinetuneTyping(Common),
    /// Link queries to candidates by pooled-embedding cosine similarity.
    Link(Common),
    /// Self-linking curve under random neighbour omission.
    #[command(name = "ablate-omission")]
    AblateOmission(Common),
    /// Typing micro-F1 as the neighbour count grows.
    #[command(name = "ablate-length")]
    AblateLength(Common),
    /// Linking with and without the spatial coordinate embedding.
    #[command(name = "ablate-spatial")]
    AblateSpatial(Common),
    /// Validate reports and flatten them into one table.
    Report(Common),
}

impl Command {
    fn parts(&self) -> (&'static str, &Common) {
        match self {
            Command::Clean(c) => ("clean", c),
            Command::Synth(c) => ("synth", c),
            Command::Index(c) => ("index", c),
            Command::Vocab(c) => ("vocab", c),
            Command::Pretrain(c) => ("pretrain", c),
            Command::FinetuneTyping(c) => ("finetune-typing", c),
            Command::Link(c) => ("link", c),
            Command::AblateOmission(c) => ("ablate-omission", c),
            Command::AblateLength(c) => ("ablate-length", c),
            Command::AblateSpatial(c) => ("ablate-spatial", c),
            Command::Report(c) => ("report", c),
        }
    }
}

/// Flags shared by every subcommand; they override the config file.
#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// TOML config, or a run manifest.json to replay.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run name; outputs go to <out>/<name>/.
    #[arg(long)]
    name: Option<String>,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default 1).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    input: Option<PathBuf>,
    /// Entity file; may repeat.
    #[arg(long)]
    entities: Vec<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Checkpoint directory.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    queries: Option<PathBuf>,
    #[arg(long)]
    candidates: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
    /// report.json file; may repeat.
    #[arg(long)]
    report: Vec<PathBuf>,
    /// World to synthesize.
    #[arg(long, value_enum)]
    kind: Option<WorldKind>,
    #[arg(long, value_enum)]
    index: Option<IndexKind>,
    #[arg(long)]
    vocab_size: Option<usize>,
    #[arg(long)]
    n_entities: Option<usize>,
    /// Pretraining steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Fine-tuning epochs.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    omission_seeds: Option<usize>,
}

fn effective_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    macro_rules! set {
        ($flag:expr => $($field:tt)+) => {
            if let Some(v) = $flag.clone() {
                cfg.$($field)+ = v;
            }
        };
    }
    set!(c.seed => seed);
    set!(c.kind => world_kind);
    set!(c.index => index);
    set!(c.vocab_size => vocab_size);
    set!(c.n_entities => world.n_entities);
    set!(c.steps => pretrain.steps);
    set!(c.epochs => finetune.epochs);
    set!(c.omission_seeds => omission_seeds);
    if c.input.is_some() {
        cfg.paths.input = c.input.clone();
    }
    if !c.entities.is_empty() {
        cfg.paths.entities = c.entities.clone();
    }
    if !c.report.is_empty() {
        cfg.paths.reports = c.report.clone();
    }
    for (flag, slot) in [
        (&c.vocab, &mut cfg.paths.vocab),
        (&c.checkpoint, &mut cfg.paths.checkpoint),
        (&c.queries, &mut cfg.paths.queries),
        (&c.candidates, &mut cfg.paths.candidates),
        (&c.truth, &mut cfg.paths.truth),
    ] {
        if flag.is_some() {
            *slot = flag.clone();
        }
    }
    cfg.finalize()?;
    Ok(cfg)
}

fn execute(command: &str, common: &Common) -> Result<()> {
    let started = Instant::now();
    let threads = common.threads.unwrap_or(1);
    if threads == 0 {
        return Err(Error::Argument("--threads must be at least 1".into()));
    }
    // a second initialization (in-process callers) keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    let cfg = effective_config(common)?;
    let name = common.name.clone().unwrap_or_else(|| command.to_string());
    let run_dir = common.out.join(&name);
    std::fs::create_dir_all(&run_dir).map_err(|e| Error::io(&run_dir, e))?;
    let mut ctx = Ctx { cfg: &cfg, run_dir: &run_dir, inputs: Vec::new() };
    let summary = match command {
        "clean" => commands::clean_cmd(&mut ctx),
        "synth" => commands::synth_cmd(&mut ctx),
        "index" => commands::index_cmd(&mut ctx),
        "vocab" => commands::vocab_cmd(&mut ctx),
        "pretrain" => commands::pretrain_cmd(&mut ctx),
        "finetune-typing" => commands::finetune_cmd(&mut ctx),
        "link" => commands::link_cmd(&mut ctx),
        "ablate-omission" => commands::omission_cmd(&mut ctx),
        "ablate-length" => commands::length_cmd(&mut ctx),
        "ablate-spatial" => commands::spatial_cmd(&mut ctx),
        "report" => commands::report_cmd(&mut ctx),
        other => unreachable!("unknown command {other}"),
    }?;
    let manifest = Manifest {
        tool: "geoctx",
        version: env!("CARGO_PKG_VERSION"),
        command: command.to_string(),
        seed: cfg.seed,
        threads,
        inputs: hash_inputs(&ctx.inputs)?,
        outputs: hash_outputs(&run_dir)?,
        config: cfg.clone(),
        summary,
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    manifest.write(&run_dir)?;
    commands::note(&format!("wrote {}", run_dir.display()));
    Ok(())
}

/// Parses `argv` and runs one subcommand; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let (command, common) = cli.command.parts();
    match execute(command, common) {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.to_string();
            let one_line: Vec<&str> = msg.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
            eprintln!("error: {}: {}", e.kind(), one_line.join(" "));
            e.exit_code()
        }
    }
}
