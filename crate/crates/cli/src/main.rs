use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sdec_core::eval::{retrieval_table_tsv, LabelField};
use sdec_core::pipeline::{
    ablation_table_tsv, run_ablation, run_until, validate, Overrides, PipelineError, PipelineOutcome, RunConfig, Stage,
};
use sdec_core::synthetic::{factor_dataset, write_fixture, FactorConfig};
use sdec_core::TrainConfig;

/// Separate style from content in precomputed image and text embeddings.
#[derive(Parser)]
#[command(name = "sdec", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check config, files, dimensions and manifest joins.
    Validate(RunArgs),
    /// Train (or reuse) the content alignment head.
    Align(RunArgs),
    /// Produce pure style vectors.
    Decouple(RunArgs),
    /// Rank the gallery for every query.
    Retrieve(RunArgs),
    /// Compute retrieval, clustering and rating metrics.
    Eval(RunArgs),
    /// Run every stage.
    Pipeline(RunArgs),
    /// Evaluate the five feature combinations.
    Ablate(RunArgs),
    /// Write a synthetic dataset with known style and content factors.
    Synth(SynthArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Recompute stages even when cached artifacts match.
    #[arg(long)]
    force: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, replacing the config's `output_dir`.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Limit confidence weights to [0, 1].
    #[arg(long)]
    clamp_alpha: bool,
    #[arg(long, value_parser = parse_label_field)]
    label_field: Option<LabelField>,
    /// Let a query retrieve its own id from the gallery.
    #[arg(long)]
    allow_self_match: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// Directory to write into.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    items: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fraction of items that get a synthetic human rating.
    #[arg(long, default_value_t = 0.2)]
    rated_fraction: f64,
    /// Learning rate written into the generated config.
    #[arg(long, default_value_t = 1.0)]
    learning_rate: f64,
    #[arg(long, default_value_t = 300)]
    epochs: usize,
}

fn parse_label_field(s: &str) -> Result<LabelField, String> {
    s.parse()
}

fn load_config(args: &RunArgs) -> Result<RunConfig, PipelineError> {
    let mut cfg = RunConfig::load(&args.config)?;
    cfg.apply(&Overrides {
        seed: args.seed,
        output_dir: args.output.clone(),
        clamp_alpha: args.clamp_alpha,
        label_field: args.label_field,
        allow_self_match: args.allow_self_match,
    });
    Ok(cfg)
}

fn print_outcome(outcome: &PipelineOutcome, cfg: &RunConfig) {
    for (stage, status) in &outcome.stages {
        println!("{stage}: {status:?}");
    }
    if let Some(report) = &outcome.report {
        print!("{}", retrieval_table_tsv(std::slice::from_ref(report), &cfg.relevance.style_columns));
    }
    println!("artifacts: {}", outcome.output_dir.display());
}

fn run_stage(args: &RunArgs, stage: Stage) -> Result<(), PipelineError> {
    let cfg = load_config(args)?;
    let outcome = run_until(&cfg, stage, args.force)?;
    print_outcome(&outcome, &cfg);
    Ok(())
}

fn run_validate(args: &RunArgs) -> Result<(), PipelineError> {
    let cfg = load_config(args)?;
    let diagnostics = validate(&cfg);
    if !diagnostics.is_clean() {
        return Err(PipelineError::Validation(diagnostics.issues));
    }
    if let Some(inputs) = &diagnostics.inputs {
        println!("manifest: {} rows", inputs.manifest.len());
        for (role, set) in &inputs.sets {
            println!("{role}: {} rows, dim {}, model {}", set.len(), set.dim(), set.model_id());
        }
    }
    println!("ok");
    Ok(())
}

fn run_ablate(args: &RunArgs) -> Result<(), PipelineError> {
    let cfg = load_config(args)?;
    let outcome = run_ablation(&cfg, args.force)?;
    print!("{}", ablation_table_tsv(&outcome.rows));
    println!("artifacts: {}", cfg.output_dir.display());
    Ok(())
}

fn run_synth(args: &SynthArgs) -> Result<(), Box<dyn std::error::Error>> {
    let cfg =
        FactorConfig { items: args.items, seed: args.seed, rated_fraction: args.rated_fraction, ..Default::default() };
    let dataset = factor_dataset(&cfg)?;
    let train = TrainConfig {
        seed: args.seed,
        learning_rate: args.learning_rate,
        epochs: args.epochs,
        ..TrainConfig::default()
    };
    let path = write_fixture(&dataset, &args.out, &train)?;
    println!("{}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SDEC_LOG", "info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate(a) => run_validate(a),
        Command::Align(a) => run_stage(a, Stage::Align),
        Command::Decouple(a) => run_stage(a, Stage::Decouple),
        Command::Retrieve(a) => run_stage(a, Stage::Retrieve),
        Command::Eval(a) | Command::Pipeline(a) => run_stage(a, Stage::Eval),
        Command::Ablate(a) => run_ablate(a),
        Command::Synth(a) => {
            return match run_synth(a) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(3)
                }
            };
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
