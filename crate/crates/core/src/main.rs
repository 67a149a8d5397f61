use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sybil_lab::commitment::{InstanceKind, DEFAULT_X_MAX};
use sybil_lab::experiment::{
    self, CakeParams, CommitParams, Experiment, ExperimentConfig, Figure, FigureParams, OutputFormat, PoaGame,
    PoaParams, RdmParams, RingParams, VerifyGame, VerifyParams,
};
use sybil_lab::ring::ShareFamily;
use sybil_lab::Error;

#[derive(Parser)]
#[command(name = "sybil-lab", version, about = "Sybil-extension experiments with CSV output")]
struct Cli {
    /// Base seed for every stochastic step (overrides a config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write the CSV here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Brute-force search for a profitable multi-identity deviation.
    Verify(VerifyArgs),
    /// Welfare of r_max, DSIC pro-rata and tent mechanisms by player count.
    Rdm(RdmArgs),
    /// Simulate the lottery cake-cutting mechanism.
    Cake(CakeArgs),
    /// Search bidding-ring share rules for a second-price auction.
    Ring(RingArgs),
    /// Sybil commitment sweep over an equilibrium-payoff instance.
    Commit(CommitArgs),
    /// Price of anarchy of a symmetric game by player count.
    Poa(PoaArgs),
    /// Data behind the welfare and commitment figures.
    Figure(FigureArgs),
    /// Run an experiment described by a TOML file.
    Run(RunArgs),
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value = "participation")]
    game: VerifyGameArg,
    #[arg(long = "R", visible_alias = "reward", default_value_t = 10.0)]
    reward: f64,
    /// Action cost (reward), demand intercept (cournot) or value (second-price).
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 0.0)]
    identity_cost: f64,
    #[arg(long, default_value_t = 2)]
    max_identities: usize,
    /// Comma-separated actions of the other players.
    #[arg(long, value_delimiter = ',', default_value = "1,1,1")]
    foreign: Vec<f64>,
    #[arg(long)]
    search_upper: Option<f64>,
    #[arg(long)]
    grid_step: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum VerifyGameArg {
    Participation,
    Proportional,
    Reward,
    Cournot,
    SecondPrice,
}

#[derive(Args)]
struct RdmArgs {
    #[arg(long = "R", visible_alias = "reward", default_value_t = 10.0)]
    reward: f64,
    #[arg(long, default_value_t = 12)]
    n_max: usize,
    #[arg(long = "K", visible_alias = "k", default_value_t = 1.0)]
    k: f64,
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,
}

#[derive(Args)]
struct CakeArgs {
    /// Identities with uniform valuations; ignored with --measures.
    #[arg(long, default_value_t = 3)]
    n: usize,
    /// One measure per line: `b0 d0 b1 d1 ... bm`.
    #[arg(long)]
    measures: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    /// Per-identity averages instead of one row per run.
    #[arg(long)]
    summary: bool,
}

#[derive(Args)]
struct RingArgs {
    /// uniform, uniform:HI, exp:RATE, exp:RATE:HI or beta22.
    #[arg(long, default_value = "uniform")]
    dist: String,
    #[arg(long, default_value_t = 3)]
    n: usize,
    #[arg(long, default_value_t = 21)]
    theta_grid: usize,
    #[arg(long, default_value = "constant")]
    family: ShareFamily,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 0.0)]
    reserve: f64,
}

#[derive(Args)]
struct CommitArgs {
    /// cournot, cfmm, exp, trivial or rmax.
    #[arg(long, default_value = "cournot")]
    instance: InstanceKind,
    #[arg(long, default_value_t = 0.0)]
    c: f64,
    #[arg(long, default_value_t = 10)]
    n_max: usize,
    #[arg(long, default_value_t = DEFAULT_X_MAX)]
    x_max: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum PoaGameArg {
    Reward,
    Cournot,
    Dsic,
}

#[derive(Args)]
struct PoaArgs {
    #[arg(long, value_enum, default_value = "reward")]
    game: PoaGameArg,
    #[arg(long = "R", visible_alias = "reward", default_value_t = 10.0)]
    reward: f64,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long = "K", visible_alias = "k", default_value_t = 1.0)]
    k: f64,
    #[arg(long, default_value_t = 10)]
    n_max: usize,
    #[arg(long, default_value_t = 1e-3)]
    grid_step: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum FigureArg {
    Fig1,
    Fig2,
}

#[derive(Args)]
struct FigureArgs {
    #[arg(long, value_enum)]
    which: FigureArg,
    #[arg(long = "R", visible_alias = "reward", default_value_t = 10.0)]
    reward: f64,
    #[arg(long = "K", visible_alias = "k", default_value_t = 1.0)]
    k: f64,
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,
    #[arg(long, default_value_t = 12)]
    n_max: usize,
    #[arg(long, default_value = "cfmm")]
    instance: InstanceKind,
    #[arg(long, default_value_t = 0.0)]
    c: f64,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
}

fn experiment_of(command: Command) -> Experiment {
    match command {
        Command::Verify(a) => Experiment::Verify(VerifyParams {
            game: match a.game {
                VerifyGameArg::Participation => VerifyGame::Participation,
                VerifyGameArg::Proportional => VerifyGame::Proportional,
                VerifyGameArg::Reward => VerifyGame::Reward,
                VerifyGameArg::Cournot => VerifyGame::Cournot,
                VerifyGameArg::SecondPrice => VerifyGame::SecondPrice,
            },
            reward: a.reward,
            c: a.c,
            identity_cost: a.identity_cost,
            max_identities: a.max_identities,
            foreign: a.foreign,
            search_upper: a.search_upper,
            grid_step: a.grid_step,
        }),
        Command::Rdm(a) => Experiment::Rdm(RdmParams {
            reward: a.reward,
            n_max: a.n_max,
            k: a.k,
            epsilon: a.epsilon,
        }),
        Command::Cake(a) => Experiment::Cake(CakeParams {
            n: a.n,
            measures: a.measures,
            samples: a.samples,
            summary: a.summary,
        }),
        Command::Ring(a) => Experiment::Ring(RingParams {
            dist: a.dist,
            n: a.n,
            theta_grid: a.theta_grid,
            family: a.family,
            samples: a.samples,
            reserve: a.reserve,
        }),
        Command::Commit(a) => Experiment::Commit(CommitParams {
            instance: a.instance,
            c: a.c,
            n_max: a.n_max,
            x_max: a.x_max,
        }),
        Command::Poa(a) => Experiment::Poa(PoaParams {
            game: match a.game {
                PoaGameArg::Reward => PoaGame::Reward,
                PoaGameArg::Cournot => PoaGame::Cournot,
                PoaGameArg::Dsic => PoaGame::Dsic,
            },
            reward: a.reward,
            c: a.c,
            k: a.k,
            n_max: a.n_max,
            grid_step: a.grid_step,
        }),
        Command::Figure(a) => Experiment::Figure(FigureParams {
            which: match a.which {
                FigureArg::Fig1 => Figure::Fig1,
                FigureArg::Fig2 => Figure::Fig2,
            },
            reward: a.reward,
            k: a.k,
            epsilon: a.epsilon,
            n_max: a.n_max,
            instance: a.instance,
            c: a.c,
        }),
        Command::Run(_) => unreachable!("config files are loaded separately"),
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvariantViolation(_) => 2,
        e if e.is_numeric() => 3,
        _ => 1,
    }
}

fn execute(cli: Cli) -> Result<(), Error> {
    let mut config = match cli.command {
        Command::Run(RunArgs { config }) => ExperimentConfig::from_file(&config)?,
        command => ExperimentConfig::new(experiment_of(command)),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = cli.out {
        config.output = Some(out);
    }
    if let Some(Format::Csv) = cli.format {
        config.format = OutputFormat::Csv;
    }
    let text = experiment::run(&config)?;
    match &config.output {
        Some(path) => {
            std::fs::write(path, text).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| Error::Config(format!("cannot write to stdout: {e}")))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
