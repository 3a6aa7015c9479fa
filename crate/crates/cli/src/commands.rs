use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use frictionless::dynamics::{
    build_multiswitch_path, propagate, BangBangSchedule, ReducedState, Segment, DEFAULT_TOL,
};
use frictionless::gpe::{validate_with_field, ConstantControl, GpeParams, TrapControl, ValidationOptions};
use frictionless::schedules::{
    minimal_feasible_duration, reconstruct_control, DurationSearch, FeasibleDuration, ScaleSchedule, ScaleShape,
};
use frictionless::synthesis::{gamma_grid, solve, sweep, write_sweep_csv, SynthesisResult};
use frictionless::Execution;
use serde::Serialize;

use crate::config::Config;
use crate::error::CliError;

pub const TIME_UNIT: &str = "1/omega0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        <Self as clap::ValueEnum>::from_str(s, true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ShapeKind {
    Polynomial,
    Exponential,
}

impl ShapeKind {
    fn shape(self, gamma: f64) -> ScaleShape {
        match self {
            ShapeKind::Polynomial => ScaleShape::Polynomial { gamma },
            ShapeKind::Exponential => ScaleShape::ExponentialPolynomial { gamma },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ControlKind {
    Optimal,
    Constant,
    Polynomial,
    Exponential,
}

impl FromStr for ControlKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        <Self as clap::ValueEnum>::from_str(s, true)
    }
}

/// Options shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Common {
    pub config: Config,
    pub tol: f64,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub exec: Execution,
}

impl Common {
    fn format_or(&self, default: Format) -> Format {
        self.format.unwrap_or(default)
    }

    fn emit(&self, bytes: &[u8]) -> Result<(), CliError> {
        match &self.out {
            Some(path) => std::fs::write(path, bytes).map_err(|source| CliError::Io { path: path.clone(), source }),
            None => {
                let mut stdout = std::io::stdout().lock();
                stdout
                    .write_all(bytes)
                    .and_then(|_| stdout.flush())
                    .map_err(|source| CliError::Io { path: "<stdout>".into(), source })
            }
        }
    }
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let io = |source| CliError::Io { path: path.to_path_buf(), source };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    f(&mut w).map_err(io)?;
    w.flush().map_err(io)
}

fn json<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

fn csv(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Vec<u8> {
    let mut out = Vec::new();
    f(&mut out).expect("writing to memory cannot fail");
    out
}

fn check_gamma(gamma: f64) -> Result<f64, CliError> {
    if gamma >= 1.0 && gamma.is_finite() {
        Ok(gamma)
    } else {
        Err(frictionless::Error::Domain(format!("gamma = {gamma} must be finite and >= 1")).into())
    }
}

fn require_gamma(common: &Common, cli: Option<f64>) -> Result<f64, CliError> {
    let g = common
        .config
        .pick_opt(cli, "gamma")?
        .ok_or_else(|| CliError::Usage("--gamma is required".into()))?;
    check_gamma(g)
}

#[derive(Serialize)]
struct Endpoint {
    x1: f64,
    x2: f64,
    /// Euclidean distance from `(gamma, 0)`.
    error: f64,
    min_x1: f64,
    min_x2: f64,
}

#[derive(Serialize)]
struct SolveReport<'a> {
    time_unit: &'static str,
    tol: f64,
    result: &'a SynthesisResult,
    schedule: &'a BangBangSchedule,
    endpoint: Endpoint,
}

pub fn solve_cmd(common: &Common, gamma: Option<f64>, emit_trajectory: Option<&Path>) -> Result<(), CliError> {
    let gamma = require_gamma(common, gamma)?;
    let syn = solve(gamma)?;
    let traj = propagate(ReducedState::initial(), &syn.schedule, common.tol)?;
    let end = traj.final_state();
    let endpoint = Endpoint {
        x1: end.x1,
        x2: end.x2,
        error: end.distance(&ReducedState::new(gamma, 0.0)),
        min_x1: traj.min_x1(),
        min_x2: traj.min_x2(),
    };
    if let Some(path) = emit_trajectory {
        write_file(path, |w| traj.write_csv(w))?;
    }
    let r = &syn.result;
    let bytes = match common.format_or(Format::Json) {
        Format::Json => json(&SolveReport { time_unit: TIME_UNIT, tol: common.tol, result: r, schedule: &syn.schedule, endpoint })?,
        Format::Csv => csv(|w| {
            writeln!(w, "gamma[1],beta[1],x2_switch[1],T1[1/omega0],T2[1/omega0],T[1/omega0],endpoint_error[1]")?;
            writeln!(w, "{},{},{},{},{},{},{}", r.gamma, r.beta, r.x2_at_switch, r.t1, r.t2, r.total, endpoint.error)
        }),
    };
    common.emit(&bytes)
}

pub struct SweepArgs {
    pub gamma_min: Option<f64>,
    pub gamma_max: Option<f64>,
    pub steps: Option<usize>,
    pub step: Option<f64>,
    pub log: bool,
}

#[derive(Serialize)]
struct SweepReport<'a> {
    time_unit: &'static str,
    rows: &'a [frictionless::synthesis::SweepRow],
}

pub fn sweep_cmd(common: &Common, args: SweepArgs) -> Result<(), CliError> {
    let cfg = &common.config;
    let lo = cfg.pick(args.gamma_min, "gamma_min", 1.1)?;
    let hi = cfg.pick(args.gamma_max, "gamma_max", 10.0)?;
    let log = cfg.flag(args.log, "log")?;
    let step = cfg.pick_opt(args.step, "step")?;
    let steps = cfg.pick_opt(args.steps, "steps")?;
    check_gamma(lo)?;
    check_gamma(hi)?;
    let count = match (steps, step) {
        (Some(_), Some(_)) => return Err(CliError::Usage("give either --steps or --step, not both".into())),
        (Some(n), None) => n,
        (None, Some(h)) => {
            if log {
                return Err(CliError::Usage("--step is a linear increment; use --steps with --log".into()));
            }
            if h.is_nan() || h <= 0.0 {
                return Err(CliError::Usage(format!("--step {h} must be positive")));
            }
            ((hi - lo) / h + 1e-9).floor() as usize + 1
        }
        (None, None) => 100,
    };
    let gammas = gamma_grid(lo, hi, count, log)?;
    let rows = sweep(&gammas, common.exec)?;
    let bytes = match common.format_or(Format::Csv) {
        Format::Csv => csv(|w| write_sweep_csv(&rows, w)),
        Format::Json => json(&SweepReport { time_unit: TIME_UNIT, rows: &rows })?,
    };
    common.emit(&bytes)
}

#[derive(Serialize)]
struct ReferenceEntry {
    kind: &'static str,
    duration: f64,
    max_abs_u: f64,
    binding_time: f64,
    grid_intervals: usize,
    /// Duration divided by the optimal time.
    ratio_to_optimal: Option<f64>,
}

#[derive(Serialize)]
struct OptimalEntry {
    #[serde(rename = "T")]
    total: f64,
    #[serde(rename = "T1")]
    t1: f64,
    #[serde(rename = "T2")]
    t2: f64,
    beta: f64,
}

#[derive(Serialize)]
struct CompareReport {
    time_unit: &'static str,
    gamma: f64,
    bound: f64,
    optimal: OptimalEntry,
    references: Vec<ReferenceEntry>,
}

pub struct CompareArgs<'a> {
    pub gamma: Option<f64>,
    pub bound: Option<f64>,
    pub emit_schedule: Option<&'a Path>,
    pub schedule_kind: ShapeKind,
}

pub fn compare_cmd(common: &Common, args: CompareArgs) -> Result<(), CliError> {
    let gamma = require_gamma(common, args.gamma)?;
    let bound = common.config.pick(args.bound, "bound", 1.0)?;
    let syn = solve(gamma)?.result;
    let search = DurationSearch { bound, ..Default::default() };
    let kinds = [ShapeKind::Polynomial, ShapeKind::Exponential];
    let found: Vec<FeasibleDuration> = kinds
        .iter()
        .map(|k| {
            if gamma == 1.0 {
                // Nothing to expand.
                Ok(FeasibleDuration { duration: 0.0, max_abs_u: 1.0, binding_time: 0.0, grid_intervals: 0 })
            } else {
                minimal_feasible_duration(&k.shape(gamma), &search, common.exec)
            }
        })
        .collect::<Result<_, _>>()?;
    let references: Vec<ReferenceEntry> = kinds
        .iter()
        .zip(&found)
        .map(|(k, f)| ReferenceEntry {
            kind: k.shape(gamma).name(),
            duration: f.duration,
            max_abs_u: f.max_abs_u,
            binding_time: f.binding_time,
            grid_intervals: f.grid_intervals,
            ratio_to_optimal: (syn.total > 0.0).then(|| f.duration / syn.total),
        })
        .collect();

    if let Some(path) = args.emit_schedule {
        if gamma == 1.0 {
            return Err(CliError::Usage("no reference schedule exists for gamma = 1".into()));
        }
        let idx = kinds.iter().position(|k| *k == args.schedule_kind).expect("kind listed");
        let sch = ScaleSchedule::new(args.schedule_kind.shape(gamma), found[idx].duration)?;
        let sampled = reconstruct_control(&sch, 4096)?;
        write_file(path, |w| sampled.write_csv(w))?;
    }

    let bytes = match common.format_or(Format::Json) {
        Format::Json => json(&CompareReport {
            time_unit: TIME_UNIT,
            gamma,
            bound,
            optimal: OptimalEntry { total: syn.total, t1: syn.t1, t2: syn.t2, beta: syn.beta },
            references,
        })?,
        Format::Csv => csv(|w| {
            writeln!(w, "kind,gamma[1],bound[1],duration[1/omega0],max_abs_u[1],binding_time[1/omega0],optimal_T[1/omega0]")?;
            writeln!(w, "optimal,{gamma},{bound},{},{bound},,{}", syn.total, syn.total)?;
            for r in &references {
                writeln!(w, "{},{gamma},{bound},{},{},{},{}", r.kind, r.duration, r.max_abs_u, r.binding_time, syn.total)?;
            }
            Ok(())
        }),
    };
    common.emit(&bytes)
}

pub struct ValidateArgs<'a> {
    pub gamma: Option<f64>,
    pub control: Option<ControlKind>,
    pub duration: Option<f64>,
    pub grid: Option<usize>,
    pub gtilde: Option<f64>,
    pub domain_factor: Option<f64>,
    pub dt: Option<f64>,
    pub relax_time: Option<f64>,
    pub no_convergence: bool,
    pub emit_snapshot: Option<&'a Path>,
}

pub fn validate_cmd(common: &Common, args: ValidateArgs) -> Result<(), CliError> {
    let cfg = &common.config;
    let control = cfg.pick(args.control, "control", ControlKind::Optimal)?;
    let defaults = GpeParams::default();
    let params = GpeParams {
        grid_points: cfg.pick(args.grid, "grid", defaults.grid_points)?,
        gtilde: cfg.pick(args.gtilde, "gtilde", defaults.gtilde)?,
        domain_factor: cfg.pick(args.domain_factor, "domain_factor", defaults.domain_factor)?,
        dt: cfg.pick(args.dt, "dt", defaults.dt)?,
        relax_time: cfg.pick(args.relax_time, "relax_time", defaults.relax_time)?,
        atom_number: cfg.pick(None, "atom_number", defaults.atom_number)?,
        ..defaults
    };
    let convergence = !args.no_convergence && cfg.pick(None, "convergence", true)?;
    let opts = ValidationOptions { convergence, dynamics_tol: common.tol, ..Default::default() };
    let duration = cfg.pick_opt(args.duration, "duration")?;

    // The constant trap holds the initial state, so its target is gamma = 1.
    let (ctl, gamma): (Box<dyn TrapControl>, f64) = match control {
        ControlKind::Constant => {
            let t = duration.unwrap_or(3.0 * std::f64::consts::TAU);
            (Box::new(ConstantControl { u: 1.0, duration: t }), 1.0)
        }
        ControlKind::Optimal => {
            let gamma = require_gamma(common, args.gamma)?;
            (Box::new(solve(gamma)?.schedule), gamma)
        }
        ControlKind::Polynomial | ControlKind::Exponential => {
            let gamma = require_gamma(common, args.gamma)?;
            if gamma == 1.0 {
                return Err(CliError::Usage("reference schedules need gamma > 1".into()));
            }
            let kind = if control == ControlKind::Polynomial { ShapeKind::Polynomial } else { ShapeKind::Exponential };
            let shape = kind.shape(gamma);
            let t = match duration {
                Some(t) => t,
                None => minimal_feasible_duration(&shape, &DurationSearch::default(), common.exec)?.duration,
            };
            (Box::new(ScaleSchedule::new(shape, t)?), gamma)
        }
    };
    let (report, field) = validate_with_field(ctl.as_ref(), gamma, &params, &opts, common.exec)?;
    if let Some(path) = args.emit_snapshot {
        write_file(path, |w| field.write_csv(w))?;
    }
    let bytes = match common.format_or(Format::Json) {
        Format::Json => json(&report)?,
        Format::Csv => csv(|w| {
            writeln!(w, "t[1/omega0],b[1],deviation[1]")?;
            for s in &report.scaling.samples {
                writeln!(w, "{},{},{}", s.t, s.b, s.deviation)?;
            }
            Ok(())
        }),
    };
    common.emit(&bytes)
}

#[derive(Serialize)]
struct MultiswitchReport<'a> {
    time_unit: &'static str,
    gamma: f64,
    interior_switch_points: &'a [f64],
    switch_states: &'a [ReducedState],
    segments: &'a [Segment],
    #[serde(rename = "T")]
    total: f64,
    #[serde(rename = "T_optimal")]
    optimal: f64,
    excess: f64,
    endpoint: Endpoint,
}

pub fn multiswitch_cmd(common: &Common, gamma: Option<f64>, switch_points: Option<Vec<f64>>) -> Result<(), CliError> {
    let gamma = require_gamma(common, gamma)?;
    let interior = match switch_points {
        Some(p) => p,
        None => common.config.list("switch_points")?.unwrap_or_default(),
    };
    let path = build_multiswitch_path(gamma, &interior)?;
    let total = path.schedule.total_duration();
    let optimal = solve(gamma)?.result.total;
    let traj = propagate(ReducedState::initial(), &path.schedule, common.tol)?;
    let end = traj.final_state();
    let endpoint = Endpoint {
        x1: end.x1,
        x2: end.x2,
        error: end.distance(&ReducedState::new(gamma, 0.0)),
        min_x1: traj.min_x1(),
        min_x2: traj.min_x2(),
    };
    let bytes = match common.format_or(Format::Json) {
        Format::Json => json(&MultiswitchReport {
            time_unit: TIME_UNIT,
            gamma,
            interior_switch_points: &interior,
            switch_states: &path.switch_points,
            segments: path.schedule.segments(),
            total,
            optimal,
            excess: total - optimal,
            endpoint,
        })?,
        Format::Csv => csv(|w| {
            writeln!(w, "segment,u[1],duration[1/omega0],x1_end[1],x2_end[1]")?;
            let segs = path.schedule.segments();
            for (i, s) in segs.iter().enumerate() {
                let end = path.switch_points.get(i).copied().unwrap_or(ReducedState::new(gamma, 0.0));
                writeln!(w, "{i},{},{},{},{}", s.u, s.duration, end.x1, end.x2)?;
            }
            Ok(())
        }),
    };
    common.emit(&bytes)
}

pub fn default_tol() -> f64 {
    DEFAULT_TOL
}
