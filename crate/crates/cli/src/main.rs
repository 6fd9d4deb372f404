//! `pdmp`: command-line driver for simulation, operator and density-evolution
//! runs. Exit codes: 0 success, 1 runtime failure, 2 usage, 3 invalid
//! scenario, 4 failed acceptance or digest check.

mod commands;
mod error;
mod load;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::HistogramKind;
use error::CliError;

#[derive(Parser)]
#[command(name = "pdmp", version, about = "Piecewise deterministic Markov processes: simulation, transfer operators and density evolution")]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true, env = "PDMP_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Builtin scenario id or path to a TOML scenario file.
    #[arg(long)]
    scenario: String,
    /// Parameter override: `name=value` for builtins, `section.name=value`
    /// (flow, hazard, reset, grid, or bare `seed`) for files. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Base seed of the per-path random streams.
    #[arg(long)]
    seed: Option<u64>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<pdmp_core::model::ScenarioSpec, CliError> {
        load::load_scenario(&self.scenario, &self.set, self.seed)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    /// Post-jump levels of the embedded chain.
    Event,
    /// Time spent per bin by the continuous process.
    Occupation,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate independent paths and write every jump as CSV.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 100)]
        paths: usize,
        /// Time horizon of each path.
        #[arg(long, default_value_t = 100.0)]
        horizon: f64,
        /// Start every path here instead of drawing from the initial condition.
        #[arg(long)]
        x0: Option<f64>,
        /// Events per path before the path counts as exploding.
        #[arg(long, default_value_t = pdmp_core::sampler::DEFAULT_EVENT_CAP)]
        event_cap: usize,
        /// Events CSV (`path,index,t,a_pre,a_post`).
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo histogram of the jump chain or of the continuous process.
    Histogram {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_enum, default_value_t = Kind::Event)]
        kind: Kind,
        /// Bins over the scenario truncation (geometric on log grids).
        #[arg(long, default_value_t = 50)]
        bins: usize,
        /// Events in the chain (event kind).
        #[arg(long, default_value_t = 100_000)]
        events: usize,
        /// Paths (occupation kind).
        #[arg(long, default_value_t = 100)]
        paths: usize,
        /// Path length (occupation kind).
        #[arg(long, default_value_t = 200.0)]
        horizon: f64,
        /// Discarded events (event kind) or time units (occupation kind);
        /// defaults to 10% of the run, at least 1000 events.
        #[arg(long)]
        burn_in: Option<f64>,
        /// Histogram CSV (`bin_left,bin_right,density`).
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-volume evolution of the density from the scenario's initial condition.
    Evolve {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Final time.
        #[arg(long = "T", default_value_t = 10.0)]
        t: f64,
        /// Time step, or `auto` for the largest stable step.
        #[arg(long, default_value = "auto", value_parser = parse_dt)]
        dt: Dt,
        /// Equally spaced snapshots after t=0.
        #[arg(long, default_value_t = 20)]
        snapshots: usize,
        /// Grid cells (default: the scenario grid).
        #[arg(long)]
        n: Option<usize>,
        /// Output directory for snapshots, mass ledger and manifest.
        #[arg(long)]
        out: PathBuf,
    },
    /// Invariant density of the jump chain by power iteration.
    Invariant {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        n: Option<usize>,
        /// Density CSV (`x_center,density`).
        #[arg(long)]
        out: PathBuf,
        /// Also write the lifted stationary density of the continuous process.
        #[arg(long)]
        lift: Option<PathBuf>,
    },
    /// Stochasticity and stability diagnostics as JSON.
    Diagnose {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the acceptance checks; exits 4 when any fails.
    Verify {
        /// Only criteria exercising this builtin scenario.
        scenario: Option<String>,
        /// Criterion number, or text matched against titles and scenario ids.
        #[arg(long, alias = "only")]
        filter: Option<String>,
        /// Summary JSON path (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List builtins, describe a scenario, or re-check a run manifest.
    Report {
        #[arg(long, conflicts_with = "manifest")]
        scenario: Option<String>,
        #[arg(long = "set", value_name = "KEY=VALUE", requires = "scenario")]
        set: Vec<String>,
        /// Recompute the output digests recorded in a manifest.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy)]
enum Dt {
    Auto,
    Fixed(f64),
}

fn parse_dt(s: &str) -> Result<Dt, String> {
    if s == "auto" {
        return Ok(Dt::Auto);
    }
    s.parse::<f64>().map(Dt::Fixed).map_err(|_| format!("expected `auto` or a number, got `{s}`"))
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("thread count must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(error::runtime)?;
    }
    match cli.command {
        Command::Simulate { scenario, paths, horizon, x0, event_cap, out } => {
            commands::simulate(&scenario.load()?, paths, horizon, x0, event_cap, &out)
        }
        Command::Histogram { scenario, kind, bins, events, paths, horizon, burn_in, out } => {
            let kind = match kind {
                Kind::Event => {
                    let burn_in = burn_in
                        .map(|b| {
                            if b >= 0.0 && b.fract() == 0.0 {
                                Ok(b as usize)
                            } else {
                                Err(CliError::Usage(format!("--burn-in must count events, got {b}")))
                            }
                        })
                        .transpose()?;
                    HistogramKind::Event { events, burn_in }
                }
                Kind::Occupation => HistogramKind::Occupation { paths, horizon, burn_in },
            };
            commands::histogram(&scenario.load()?, kind, bins, &out)
        }
        Command::Evolve { scenario, t, dt, snapshots, n, out } => {
            let spec = load::with_cells(scenario.load()?, n)?;
            let dt = match dt {
                Dt::Auto => None,
                Dt::Fixed(x) => Some(x),
            };
            commands::evolve_cmd(&spec, t, dt, snapshots, &out)
        }
        Command::Invariant { scenario, n, out, lift } => {
            commands::invariant(&load::with_cells(scenario.load()?, n)?, &out, lift.as_deref())
        }
        Command::Diagnose { scenario, n, out } => commands::diagnose_cmd(&load::with_cells(scenario.load()?, n)?, &out),
        Command::Verify { scenario, filter, out } => commands::verify(scenario.as_deref(), filter.as_deref(), out.as_deref()),
        Command::Report { scenario, set, manifest, out } => match (scenario, manifest) {
            (_, Some(m)) => commands::report_manifest(&m),
            (Some(s), None) => commands::report_scenario(&load::load_scenario(&s, &set, None)?, out.as_deref()),
            (None, None) => commands::report_builtins(),
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pdmp: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
