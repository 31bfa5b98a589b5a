use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use qham_rec::commands::{
    cmd_archetypes, cmd_evaluate, cmd_ingest, cmd_report, cmd_train_ae, cmd_train_hybrid,
};
use qham_rec::config::{config_from_overrides, load_config, RunConfig};
use qham_rec::synth::{generate_to, SynthConfig};
use qham_rec::Result;

/// Hybrid quantum-classical recommendation pipeline.
#[derive(Parser)]
#[command(name = "qham-rec", version, about)]
struct Cli {
    /// Run configuration file (TOML). Without this flag, `run.toml` is used
    /// when present and built-in defaults otherwise.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override a config value, e.g. `--set latent_n=6` or `--set seeds.init=9`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Simulation backend: `ideal` or `noisy`. Wins over the config file.
    #[arg(long, global = true, value_name = "BACKEND")]
    backend: Option<String>,

    /// Output directory. Wins over the config file.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse ratings into the normalized user-movie matrix and split it by user.
    Ingest,
    /// Train the reconstruction autoencoder on the train split.
    TrainAe,
    /// Cluster users and polarize the cluster centroids into memory patterns.
    Archetypes,
    /// Train the quantum memory angles and classifier head on cluster labels.
    TrainHybrid,
    /// Score the test split and write a metric report for the active backend.
    Evaluate,
    /// Consolidate the metric reports into a comparison table.
    Report,
    /// Generate a synthetic ratings corpus in `user::movie::rating::timestamp`
    /// format.
    Synth {
        /// Ratings file to write.
        #[arg(long, default_value = "ratings.dat")]
        output: PathBuf,
        #[arg(long, default_value_t = 6040)]
        users: usize,
        #[arg(long, default_value_t = 3706)]
        movies: usize,
        /// Number of taste groups baked into the corpus.
        #[arg(long, default_value_t = 4)]
        groups: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Minimum ratings per user.
        #[arg(long, default_value_t = 20)]
        min_count: usize,
        /// Mean ratings per user.
        #[arg(long, default_value_t = 140.0)]
        mean_count: f64,
    },
}

/// The effective run config: file (explicit, or `run.toml` when present),
/// then `--set` overrides, then the dedicated flags.
fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let mut overrides = cli.set.clone();
    if let Some(backend) = &cli.backend {
        overrides.push(format!("backend={backend}"));
    }
    if let Some(out) = &cli.out {
        overrides.push(format!("out_dir={}", out.display()));
    }
    match &cli.config {
        Some(path) => load_config(path, &overrides),
        None if Path::new("run.toml").exists() => load_config(Path::new("run.toml"), &overrides),
        None => config_from_overrides(&overrides),
    }
}

fn run(cli: &Cli) -> Result<String> {
    if let Command::Synth {
        output,
        users,
        movies,
        groups,
        seed,
        min_count,
        mean_count,
    } = &cli.command
    {
        let cfg = SynthConfig {
            users: *users,
            movies: *movies,
            groups: *groups,
            seed: *seed,
            min_count: *min_count,
            mean_count: *mean_count,
        };
        let count = generate_to(&cfg, output)?;
        return Ok(format!(
            "wrote {count} ratings for {users} users to {}",
            output.display()
        ));
    }

    let config = effective_config(cli)?;
    match &cli.command {
        Command::Ingest => cmd_ingest(&config),
        Command::TrainAe => cmd_train_ae(&config),
        Command::Archetypes => cmd_archetypes(&config),
        Command::TrainHybrid => cmd_train_hybrid(&config),
        Command::Evaluate => cmd_evaluate(&config),
        Command::Report => cmd_report(&config.out_dir),
        Command::Synth { .. } => unreachable!("handled above"),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => println!("{summary}"),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
