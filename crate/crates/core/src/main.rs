use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use meterwatch::config::RunConfig;
use meterwatch::eval::ReportFormat;
use meterwatch::pipeline::{self, GenerateOverrides, Outcome, Stage, StageError};
use meterwatch::Error;

/// Find inaccurate submeters from master/submeter daily usage.
#[derive(Debug, Parser)]
#[command(name = "meterwatch", version)]
struct Cli {
    /// JSON run configuration; omitted keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for area- and fold-level parallelism.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Overrides `paths.data_dir`.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    /// Overrides `paths.output_dir`.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic labeled corpus and reference areas.
    Generate(GenerateArgs),
    /// Drop unusable days from the monitored and reference areas.
    Clean,
    /// Train the residual-error predictor and the baseline comparison.
    TrainPredictor,
    /// Run sliding-window detection on every monitored area.
    Detect,
    /// Cross-validate and train the submeter classifier.
    TrainClassifier,
    /// Score the submeters of flagged areas.
    Classify {
        #[arg(long)]
        classify_all: bool,
    },
    /// Collect stage outputs into the report bundle.
    Evaluate {
        #[arg(long, value_enum, default_value = "json")]
        format: ReportFormat,
    },
    /// Run the whole workflow, or one stage of it.
    Pipeline {
        #[arg(long, value_enum)]
        stage: Option<Stage>,
        #[arg(long)]
        classify_all: bool,
        #[arg(long, value_enum, default_value = "json")]
        format: ReportFormat,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    areas: Option<usize>,
    #[arg(long)]
    submeters: Option<usize>,
    #[arg(long)]
    days: Option<usize>,
    /// Fraction of submeters corrupted in each malfunctioning area.
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidArgument(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<StageError> for Failure {
    fn from(e: StageError) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(|e| match e {
            Error::Io { .. } => Failure::Usage(e.to_string()),
            other => Failure::from(other),
        })?,
        None => RunConfig::default(),
    };
    if let Some(d) = &cli.data_dir {
        config.paths.data_dir = d.clone();
    }
    if let Some(d) = &cli.output_dir {
        config.paths.output_dir = d.clone();
    }
    if cli.jobs.is_some() {
        config.jobs = cli.jobs;
    }
    match &cli.command {
        Command::Generate(a) => GenerateOverrides {
            areas: a.areas,
            submeters: a.submeters,
            days: a.days,
            fraction: a.fraction,
            seed: a.seed,
        }
        .apply(&mut config),
        Command::Classify { classify_all: true } | Command::Pipeline { classify_all: true, .. } => {
            config.classify_all = true;
        }
        _ => {}
    }
    if let Command::Pipeline { seed: Some(s), .. } = &cli.command {
        config.seed = Some(*s);
    }
    config.resolve_seeds();
    config.validate()?;
    Ok(config)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let config = load_config(cli)?;
    if let Some(j) = config.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    let started = chrono::Utc::now();
    let (name, result): (&str, Result<Vec<Outcome>, StageError>) = match &cli.command {
        Command::Generate(_) => ("generate", stage(Stage::Generate, &config)),
        Command::Clean => ("clean", stage(Stage::Clean, &config)),
        Command::TrainPredictor => ("train-predictor", stage(Stage::TrainPredictor, &config)),
        Command::Detect => ("detect", stage(Stage::Detect, &config)),
        Command::TrainClassifier => ("train-classifier", stage(Stage::TrainClassifier, &config)),
        Command::Classify { .. } => ("classify", stage(Stage::Classify, &config)),
        Command::Evaluate { format } => (
            "evaluate",
            pipeline::run_pipeline(&config, Some(Stage::Evaluate), *format),
        ),
        Command::Pipeline { stage, format, .. } => ("pipeline", pipeline::run_pipeline(&config, *stage, *format)),
    };
    let manifest = pipeline::write_manifest(&config, name, started);
    let outcomes = result?;
    for o in &outcomes {
        println!("{o}");
    }
    let path = manifest?;
    log::info!("manifest written to {}", path.display());
    Ok(())
}

fn stage(s: Stage, config: &RunConfig) -> Result<Vec<Outcome>, StageError> {
    pipeline::run_pipeline(config, Some(s), ReportFormat::Json)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
