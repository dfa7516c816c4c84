use chemopulse::config::{load_config, preset, ConfigError, Mode, RunConfig};
use chemopulse::run::{execute, ExecOptions, RunError};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "chemopulse", version, about = "Chemotactic pulse simulations and analytics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the drift-diffusion model and fit the late-time pulse.
    Simulate(Common),
    /// Integrate the kinetic model coupled to the chemical fields.
    Kinetic(Common),
    /// Traveling pulse speed, tail rates and kernel constants.
    Speed(Common),
    /// Linear stability of the homogeneous state.
    Stability(Common),
    /// Stationary cluster profile.
    Cluster(Common),
    /// Fit a trajectory previously written to --out.
    Fit(Common),
    /// Run the cross product of the configured sweep axes.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Bundled configuration: fig3, fig4, fig5 or cluster.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory (overrides the configuration).
    #[arg(long)]
    out: Option<PathBuf>,
    /// `key=value` with a dotted key, e.g. `params.n0=1`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker threads for sweeps (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Recorded in the summary; every run is deterministic.
    #[arg(long)]
    seed: Option<u64>,
}

fn build(common: &Common, mode: Mode) -> Result<RunConfig, ConfigError> {
    let mut cfg = match (&common.config, &common.preset) {
        (Some(path), _) => load_config(path)?,
        (None, Some(name)) => preset(name)?,
        (None, None) => RunConfig::default(),
    };
    for spec in &common.overrides {
        cfg = cfg.with_override(spec)?;
    }
    cfg.mode = mode;
    if let Some(out) = &common.out {
        cfg.output = out.clone();
    }
    cfg.validate()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, mode) = match &cli.command {
        Command::Simulate(c) => (c, Mode::Macro),
        Command::Kinetic(c) => (c, Mode::Kinetic),
        Command::Speed(c) => (c, Mode::Speed),
        Command::Stability(c) => (c, Mode::Stability),
        Command::Cluster(c) => (c, Mode::Cluster),
        Command::Fit(c) => (c, Mode::Fit),
        Command::Sweep(c) => (c, Mode::Sweep),
    };
    if common.workers == Some(0) {
        eprintln!("error: --workers must be at least 1");
        return ExitCode::from(1);
    }
    let result = build(common, mode).map_err(RunError::from).and_then(|cfg| {
        let opts = ExecOptions {
            workers: common.workers,
            seed: common.seed,
        };
        execute(&cfg, &opts).map(|s| (cfg, s))
    });
    match result {
        Ok((cfg, summary)) => {
            print!("{}", summary.to_toml());
            eprintln!("artifacts written to {}", cfg.output.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
