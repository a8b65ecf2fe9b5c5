use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fcml::analysis::{classify_run, sweep, sweep_grid};
use fcml::config::{parse_scenario, Scenario};
use fcml::modulator::{gate_edges, latch_and_deadtime, streams_from_states};
use fcml::output;
use fcml::scheduler::frequency_profile;
use fcml::simulate;

#[derive(Parser)]
#[command(
    name = "fcml",
    version,
    about = "SAPWM/PSPWM modulation and ZVS simulation for flying-capacitor multilevel converters"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate one scenario; writes trace.csv, events.csv and summary.csv.
    Run {
        config: PathBuf,
        /// Output directory (defaults to the scenario's output_dir, else ".").
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Constant-duty sweep over (α, 1 − α), one independent run per point.
    Sweep {
        config: PathBuf,
        #[arg(long, default_value_t = 199)]
        grid: usize,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Frequency laws over the full duty range at a fixed |i_L|.
    FreqProfile {
        config: PathBuf,
        #[arg(long)]
        il: f64,
        #[arg(long, default_value_t = 1001)]
        grid: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dead-time charge check for both modes.
    Feasibility { config: PathBuf },
    /// Complementary gate edges after dead-time insertion.
    GateDump {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

type Failure = Box<dyn std::error::Error>;

fn load(path: &Path) -> Result<Scenario, Failure> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_scenario(&text).map_err(|e| format!("{}: {e}", path.display()).into())
}

/// Writes via a temporary sibling and a rename so a failed run leaves no
/// partial file behind.
fn write_atomic(path: &Path, contents: &str) -> Result<(), Failure> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn emit(out: Option<&Path>, contents: &str) -> Result<(), Failure> {
    match out {
        Some(p) => write_atomic(p, contents),
        None => Ok(std::io::stdout().write_all(contents.as_bytes())?),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Cmd::Run { config, out } => {
            let scenario = load(&config)?;
            let record = simulate(&scenario.run_config())?;
            let row = classify_run(&record)?;
            let trace = output::trace_csv(&record.trace, scenario.trace_decimation);
            let events = output::events_csv(&record.events);
            let summary = output::sweep_csv(&[row]);
            let dir = out
                .or_else(|| scenario.output_dir.as_ref().map(PathBuf::from))
                .unwrap_or_else(|| ".".into());
            fs::create_dir_all(&dir)?;
            write_atomic(&dir.join("trace.csv"), &trace)?;
            write_atomic(&dir.join("events.csv"), &events)?;
            write_atomic(&dir.join("summary.csv"), &summary)?;
        }
        Cmd::Sweep { config, grid, out } => {
            let scenario = load(&config)?;
            let points = sweep_grid(scenario.params.adjacency_threshold, grid);
            let rows = sweep(&points, |d| scenario.sweep_point(d))?;
            emit(out.as_deref(), &output::sweep_csv(&rows))?;
        }
        Cmd::FreqProfile {
            config,
            il,
            grid,
            out,
        } => {
            let scenario = load(&config)?;
            if grid < 2 {
                return Err("--grid must be at least 2".into());
            }
            let points: Vec<f64> = (0..grid).map(|i| i as f64 / (grid - 1) as f64).collect();
            let rows = frequency_profile(&scenario.params, il, &points);
            emit(out.as_deref(), &output::profile_csv(&rows))?;
        }
        Cmd::Feasibility { config } => {
            let scenario = load(&config)?;
            print!("{}", output::feasibility_report(&scenario.params));
        }
        Cmd::GateDump { config, out } => {
            let scenario = load(&config)?;
            let record = simulate(&scenario.run_config())?;
            let first = record
                .commutations
                .first()
                .map(|c| c.pre)
                .ok_or("run produced no commutations")?;
            let changes: Vec<_> = record.commutations.iter().map(|c| (c.t, c.post)).collect();
            let streams = streams_from_states(first, &changes);
            let pairs = latch_and_deadtime(&streams, scenario.params.dead_time)?;
            emit(out.as_deref(), &output::gate_csv(&gate_edges(&pairs)))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
