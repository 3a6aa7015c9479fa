//! `frictionless`: time-optimal trap schedules for condensate expansion.
//!
//! Exit status is 0 on success, 2 for invalid input (including domain
//! errors), 3 for numerical failures and 1 for I/O problems.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use frictionless::Execution;

use commands::{CompareArgs, Common, ControlKind, Format, ShapeKind, SweepArgs, ValidateArgs};
use config::Config;
use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "frictionless", version, about = "Time-optimal frictionless expansion of a trapped condensate")]
struct Cli {
    /// Flat key = value configuration file.
    #[arg(long, env = "FRICTIONLESS_CONFIG", global = true)]
    config: Option<PathBuf>,

    /// Propagation tolerance for trajectory checks.
    #[arg(long, global = true)]
    tol: Option<f64>,

    /// Write the main output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, value_enum, global = true)]
    format: Option<Format>,

    /// Run data-parallel work on one thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimal XY schedule for one expansion factor.
    Solve {
        #[arg(long, allow_hyphen_values = true)]
        gamma: Option<f64>,
        /// Write the propagated trajectory as CSV.
        #[arg(long)]
        emit_trajectory: Option<PathBuf>,
    },
    /// Transit times over a range of expansion factors.
    Sweep {
        #[arg(long, allow_hyphen_values = true)]
        gamma_min: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        gamma_max: Option<f64>,
        /// Number of points, endpoints included.
        #[arg(long)]
        steps: Option<usize>,
        /// Linear increment, as an alternative to --steps.
        #[arg(long)]
        step: Option<f64>,
        /// Logarithmic spacing.
        #[arg(long)]
        log: bool,
    },
    /// Optimal time against the shortest feasible smooth reference schedules.
    Compare {
        #[arg(long, allow_hyphen_values = true)]
        gamma: Option<f64>,
        /// Control bound |u| <= bound.
        #[arg(long)]
        bound: Option<f64>,
        /// Write (t, b, u) of one reference schedule as CSV.
        #[arg(long)]
        emit_schedule: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "polynomial")]
        schedule_kind: ShapeKind,
    },
    /// Gross-Pitaevskii check of a control protocol.
    Validate {
        #[arg(long, allow_hyphen_values = true)]
        gamma: Option<f64>,
        #[arg(long, value_enum)]
        control: Option<ControlKind>,
        /// Protocol length for constant or reference controls.
        #[arg(long)]
        duration: Option<f64>,
        /// Number of grid points.
        #[arg(long)]
        grid: Option<usize>,
        /// Interaction strength g N in oscillator units.
        #[arg(long)]
        gtilde: Option<f64>,
        /// Box half-width over the final Thomas-Fermi radius.
        #[arg(long)]
        domain_factor: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        /// Imaginary-time relaxation of the initial state (0 disables).
        #[arg(long)]
        relax_time: Option<f64>,
        /// Skip the dt-halving and grid-doubling reruns.
        #[arg(long)]
        no_convergence: bool,
        /// Write the final field as CSV.
        #[arg(long)]
        emit_snapshot: Option<PathBuf>,
    },
    /// Time of an XY...XY schedule with given interior switch loci.
    Multiswitch {
        #[arg(long, allow_hyphen_values = true)]
        gamma: Option<f64>,
        /// Even number of increasing x1 values, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        switch_points: Option<Vec<f64>>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let tol = config.pick(cli.tol, "tol", commands::default_tol())?;
    if tol.is_nan() || tol <= 0.0 {
        return Err(CliError::Usage(format!("--tol {tol} must be positive")));
    }
    let sequential = config.flag(cli.sequential, "sequential")?;
    let common = Common {
        tol,
        out: config.pick_opt(cli.out, "out")?,
        format: config.pick_opt(cli.format, "format")?,
        exec: if sequential { Execution::Sequential } else { Execution::default() },
        config,
    };
    match cli.command {
        Command::Solve { gamma, emit_trajectory } => commands::solve_cmd(&common, gamma, emit_trajectory.as_deref()),
        Command::Sweep { gamma_min, gamma_max, steps, step, log } => {
            commands::sweep_cmd(&common, SweepArgs { gamma_min, gamma_max, steps, step, log })
        }
        Command::Compare { gamma, bound, emit_schedule, schedule_kind } => commands::compare_cmd(
            &common,
            CompareArgs { gamma, bound, emit_schedule: emit_schedule.as_deref(), schedule_kind },
        ),
        Command::Validate {
            gamma,
            control,
            duration,
            grid,
            gtilde,
            domain_factor,
            dt,
            relax_time,
            no_convergence,
            emit_snapshot,
        } => commands::validate_cmd(
            &common,
            ValidateArgs {
                gamma,
                control,
                duration,
                grid,
                gtilde,
                domain_factor,
                dt,
                relax_time,
                no_convergence,
                emit_snapshot: emit_snapshot.as_deref(),
            },
        ),
        Command::Multiswitch { gamma, switch_points } => commands::multiswitch_cmd(&common, gamma, switch_points),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
