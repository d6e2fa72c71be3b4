use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ment_cli::bundle::Bundle;
use ment_cli::config::{
    AttributeConfig, CpdConfig, DistanceConfig, EmbedConfig, PipelineConfig, StudyConfig,
    SynthConfig, TrajectoryConfig,
};
use ment_cli::{stages, CliError};

const THREADS_ENV: &str = "MENT_THREADS";

#[derive(Parser)]
#[command(name = "ment", version)]
#[command(about = "Temporal trajectories of dynamic networks from second-moment geometry")]
#[command(
    after_help = "Exit status: 0 ok, 2 invalid input or missing artifact, 3 numerical failure.\n\
                        MENT_THREADS sets the number of worker threads."
)]
struct Cli {
    /// Output bundle directory
    #[arg(long, global = true, default_value = "ment-out")]
    out: PathBuf,

    /// Log more (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic network series from a preset
    Synth(SynthConfig),
    /// Embed a network series (the synth output or --input)
    Embed(EmbedConfig),
    /// Distance matrices and the mode basis from the embeddings
    Distances(DistanceConfig),
    /// CMDS trajectories from the distance matrices
    Trajectories(TrajectoryConfig),
    /// Node-level attribution of displacements
    Attribute(AttributeConfig),
    /// Change points along the mode trajectories
    Cpd(CpdConfig),
    /// Seeded recovery or detection study on a preset
    Study(StudyConfig),
    /// Run synth (or ingest), embed, distances, trajectories, attribute and cpd
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct PipelineArgs {
    /// Read all settings from a config.json instead of flags
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    synth: SynthConfig,
    #[command(flatten)]
    embed: EmbedConfig,
    #[command(flatten)]
    distances: DistanceConfig,
    #[command(flatten)]
    trajectories: TrajectoryConfig,
    #[command(flatten)]
    attribute: AttributeConfig,
    #[command(flatten)]
    cpd: CpdConfig,
}

impl PipelineArgs {
    fn into_config(self) -> Result<PipelineConfig, CliError> {
        if let Some(path) = self.config {
            let text = std::fs::read_to_string(&path).map_err(CliError::io(&path))?;
            return serde_json::from_str(&text)
                .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())));
        }
        Ok(PipelineConfig {
            synth: self.embed.source.input.is_none().then_some(self.synth),
            embed: Some(self.embed),
            distances: Some(self.distances),
            trajectories: Some(self.trajectories),
            attribute: Some(self.attribute),
            cpd: Some(self.cpd),
            study: None,
        })
    }
}

fn init_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value.parse().ok().filter(|&t| t > 0).ok_or_else(|| {
        CliError::Invalid(format!("{THREADS_ENV}={value} is not a positive integer"))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Invalid(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    let bundle = Bundle::open(&cli.out)?;
    match cli.command {
        Command::Synth(cfg) => stages::run_synth(&bundle, &cfg),
        Command::Embed(cfg) => stages::run_embed(&bundle, &cfg),
        Command::Distances(cfg) => stages::run_distances(&bundle, &cfg),
        Command::Trajectories(cfg) => stages::run_trajectories(&bundle, &cfg),
        Command::Attribute(cfg) => stages::run_attribute(&bundle, &cfg),
        Command::Cpd(cfg) => stages::run_cpd(&bundle, &cfg),
        Command::Study(cfg) => stages::run_study(&bundle, &cfg),
        Command::Pipeline(args) => stages::run_pipeline(&bundle, args.into_config()?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
