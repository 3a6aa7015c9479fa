//! Split-step Fourier integration of the 1D Gross–Pitaevskii equation
//!
//! `i ∂ψ/∂t = [−½ ∂²/∂x² + ½ u(t) x² + g|ψ|²] ψ`
//!
//! in oscillator units of the initial trap (`ħ = m = ω₀ = 1`), with
//! `∫|ψ|² dx = N` and `g̃ = gN`. The runs check that a schedule which takes
//! the scale factor from 1 to γ and ends at `u = 1/γ³` leaves the condensate
//! in the Thomas–Fermi state of the final trap `ω_T = γ^(−3/2)`.

use std::io::{self, Write};
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::dynamics::{sample_with_control, BangBangSchedule, PropagationOptions, ReducedState};
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::schedules::ScaleSchedule;

/// Domain half-width must exceed the target radius by this factor.
pub const MIN_DOMAIN_FACTOR: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpeParams {
    pub grid_points: usize,
    /// Half-width of the box in units of the final Thomas–Fermi radius.
    pub domain_factor: f64,
    /// `g̃ = gN` in oscillator units.
    pub gtilde: f64,
    pub atom_number: f64,
    pub dt: f64,
    /// Imaginary-time relaxation length applied to the initial Thomas–Fermi
    /// profile; zero keeps the bare profile.
    pub relax_time: f64,
    pub relax_dt: f64,
    pub norm_tol: f64,
    /// Largest `|ψ|` allowed in the edge cells, relative to the peak.
    pub leak_tol: f64,
}

impl Default for GpeParams {
    fn default() -> Self {
        Self {
            grid_points: 2048,
            domain_factor: 4.0,
            gtilde: 300.0,
            atom_number: 1.0,
            dt: 1e-3,
            relax_time: 4.0,
            relax_dt: 1e-3,
            norm_tol: 1e-8,
            leak_tol: 1e-6,
        }
    }
}

impl GpeParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gtilde", self.gtilde),
            ("atom_number", self.atom_number),
            ("dt", self.dt),
            ("relax_dt", self.relax_dt),
            ("norm_tol", self.norm_tol),
            ("leak_tol", self.leak_tol),
            ("domain_factor", self.domain_factor),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::domain(format!("{name} = {v} must be finite and > 0")));
            }
        }
        if !(self.relax_time >= 0.0 && self.relax_time.is_finite()) {
            return Err(Error::domain(format!("relax_time = {} must be >= 0", self.relax_time)));
        }
        if self.grid_points < 16 || !self.grid_points.is_multiple_of(2) {
            return Err(Error::domain(format!("grid_points = {} must be even and >= 16", self.grid_points)));
        }
        Ok(())
    }

    pub fn coupling(&self) -> f64 {
        self.gtilde / self.atom_number
    }

    /// Step actually used on `grid`: the requested `dt`, capped at `dx²/π` so
    /// that `k_max² dt/2 ≤ π/2`. Larger steps excite the resonant instability
    /// of split-step schemes for the cubic nonlinearity.
    pub fn effective_dt(&self, grid: &Grid) -> f64 {
        self.dt.min(grid.dx * grid.dx / std::f64::consts::PI)
    }
}

/// Uniform periodic grid `x_j = −L + j·dx`, `j = 0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub half_width: f64,
    pub dx: f64,
    pub x: Vec<f64>,
    /// Angular wavenumbers in FFT order.
    pub k: Vec<f64>,
}

impl Grid {
    pub fn new(points: usize, half_width: f64) -> Result<Self> {
        if points < 16 || !points.is_multiple_of(2) {
            return Err(Error::domain(format!("grid_points = {points} must be even and >= 16")));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::domain(format!("half width {half_width} must be finite and > 0")));
        }
        let dx = 2.0 * half_width / points as f64;
        let x = (0..points).map(|j| -half_width + j as f64 * dx).collect();
        let dk = std::f64::consts::PI / half_width;
        let k = (0..points)
            .map(|j| if j < points / 2 { j as f64 * dk } else { (j as f64 - points as f64) * dk })
            .collect();
        Ok(Self { half_width, dx, x, k })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    fn same_as(&self, other: &Grid) -> bool {
        self.len() == other.len() && self.half_width == other.half_width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThomasFermiState {
    pub omega: f64,
    pub mu: f64,
    pub radius: f64,
    pub coupling: f64,
    pub atom_number: f64,
}

/// `μ_ω = (9/32 · ω² g² N²)^(1/3)`, profile `√((μ − ω²x²/2)/g)`.
pub fn thomas_fermi(omega: f64, params: &GpeParams) -> Result<ThomasFermiState> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::domain(format!("trap frequency {omega} must be finite and > 0")));
    }
    params.validate()?;
    let g = params.coupling();
    let n = params.atom_number;
    let mu = (9.0 / 32.0 * omega * omega * g * g * n * n).cbrt();
    Ok(ThomasFermiState { omega, mu, radius: (2.0 * mu).sqrt() / omega, coupling: g, atom_number: n })
}

impl ThomasFermiState {
    pub fn density(&self, x: f64) -> f64 {
        ((self.mu - 0.5 * self.omega * self.omega * x * x) / self.coupling).max(0.0)
    }

    pub fn amplitude(&self, x: f64) -> f64 {
        self.density(x).sqrt()
    }

    /// `∫₀^x` of the density, clipped to the support.
    fn cumulative(&self, x: f64) -> f64 {
        let x = x.clamp(-self.radius, self.radius);
        (self.mu * x - self.omega * self.omega * x * x * x / 6.0) / self.coupling
    }

    /// Samples whose squared moduli are cell averages of the density, so the
    /// discrete norm equals `N` whenever the support fits in the box.
    pub fn sample(&self, grid: &Grid) -> Result<CondensateField> {
        if self.radius >= grid.half_width - 0.5 * grid.dx {
            return Err(Error::GridTooSmall { radius: self.radius, half_width: grid.half_width });
        }
        let h = 0.5 * grid.dx;
        let psi = grid
            .x
            .iter()
            .map(|&x| {
                let mass = self.cumulative(x + h) - self.cumulative(x - h);
                Complex64::new((mass / grid.dx).max(0.0).sqrt(), 0.0)
            })
            .collect();
        Ok(CondensateField { grid: grid.clone(), psi })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CondensateField {
    pub grid: Grid,
    pub psi: Vec<Complex64>,
}

impl CondensateField {
    pub fn norm(&self) -> f64 {
        self.psi.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.grid.dx
    }

    pub fn peak_amplitude(&self) -> f64 {
        self.psi.iter().fold(0.0f64, |m, c| m.max(c.norm()))
    }

    /// Largest `|ψ|` over the outermost cells, relative to the peak.
    pub fn edge_ratio(&self) -> f64 {
        let n = self.psi.len();
        let w = (n / 64).max(4);
        let edge = self.psi[..w].iter().chain(&self.psi[n - w..]).fold(0.0f64, |m, c| m.max(c.norm()));
        let peak = self.peak_amplitude();
        if peak > 0.0 {
            edge / peak
        } else {
            0.0
        }
    }

    pub fn scale_to(&mut self, norm: f64) {
        let s = (norm / self.norm()).sqrt();
        for c in &mut self.psi {
            *c *= s;
        }
    }

    /// CSV columns `x, Re ψ, Im ψ, |ψ|²`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "x[a_ho],re_psi[a_ho^-1/2],im_psi[a_ho^-1/2],density[a_ho^-1]")?;
        for (x, c) in self.grid.x.iter().zip(&self.psi) {
            writeln!(w, "{},{},{},{}", x, c.re, c.im, c.norm_sqr())?;
        }
        Ok(())
    }
}

/// `|⟨a|b⟩|² / (⟨a|a⟩⟨b|b⟩)`.
pub fn fidelity(a: &CondensateField, b: &CondensateField) -> Result<f64> {
    if !a.grid.same_as(&b.grid) {
        return Err(Error::GridMismatch(format!(
            "{} points on ±{} vs {} points on ±{}",
            a.grid.len(),
            a.grid.half_width,
            b.grid.len(),
            b.grid.half_width
        )));
    }
    let overlap: Complex64 = a.psi.iter().zip(&b.psi).map(|(p, q)| p.conj() * q).sum();
    let na: f64 = a.psi.iter().map(|c| c.norm_sqr()).sum();
    let nb: f64 = b.psi.iter().map(|c| c.norm_sqr()).sum();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::domain("fidelity of an empty field"));
    }
    Ok((overlap.norm_sqr() / (na * nb)).min(1.0))
}

/// A trap-strength protocol `u(t) = ω²(t)/ω₀²` on `[0, duration]`.
pub trait TrapControl: Sync {
    fn u(&self, t: f64) -> f64;
    fn duration(&self) -> f64;
    /// Interior times where `u` jumps.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
    fn label(&self) -> String;
}

impl TrapControl for BangBangSchedule {
    fn u(&self, t: f64) -> f64 {
        self.control_at(t)
    }
    fn duration(&self) -> f64 {
        self.total_duration()
    }
    fn breakpoints(&self) -> Vec<f64> {
        BangBangSchedule::breakpoints(self)
    }
    fn label(&self) -> String {
        "bang_bang".into()
    }
}

impl TrapControl for ScaleSchedule {
    fn u(&self, t: f64) -> f64 {
        self.control_at(t.clamp(0.0, self.duration)).unwrap_or(f64::NAN)
    }
    fn duration(&self) -> f64 {
        self.duration
    }
    fn label(&self) -> String {
        self.shape.name().into()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantControl {
    pub u: f64,
    pub duration: f64,
}

impl TrapControl for ConstantControl {
    fn u(&self, _t: f64) -> f64 {
        self.u
    }
    fn duration(&self) -> f64 {
        self.duration
    }
    fn label(&self) -> String {
        format!("constant_{}", self.u)
    }
}

struct SplitStep {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    half_x2: Vec<f64>,
    half_k2: Vec<f64>,
    coupling: f64,
}

impl SplitStep {
    fn new(grid: &Grid, coupling: f64) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(grid.len());
        let inverse = planner.plan_fft_inverse(grid.len());
        let scratch = vec![Complex64::new(0.0, 0.0); forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len())];
        Self {
            forward,
            inverse,
            scratch,
            half_x2: grid.x.iter().map(|x| 0.5 * x * x).collect(),
            half_k2: grid.k.iter().map(|k| 0.5 * k * k).collect(),
            coupling,
        }
    }

    fn kinetic(&mut self, psi: &mut [Complex64], factors: &[Complex64]) {
        self.forward.process_with_scratch(psi, &mut self.scratch);
        let inv_n = 1.0 / psi.len() as f64;
        for (c, f) in psi.iter_mut().zip(factors) {
            *c *= f * inv_n;
        }
        self.inverse.process_with_scratch(psi, &mut self.scratch);
    }

    fn real_time_factors(&self, dt: f64) -> Vec<Complex64> {
        self.half_k2.iter().map(|e| Complex64::from_polar(1.0, -e * 0.5 * dt)).collect()
    }

    fn real_step(&mut self, psi: &mut [Complex64], u: f64, dt: f64, kin: &[Complex64]) {
        self.kinetic(psi, kin);
        for (c, v) in psi.iter_mut().zip(&self.half_x2) {
            let phase = (u * v + self.coupling * c.norm_sqr()) * dt;
            *c *= Complex64::from_polar(1.0, -phase);
        }
        self.kinetic(psi, kin);
    }
}

/// Imaginary-time relaxation towards the ground state of the trap `u`,
/// renormalising to `N` after every step.
pub fn relax(field: &mut CondensateField, u: f64, tau: f64, dtau: f64, params: &GpeParams) -> Result<()> {
    if tau <= 0.0 {
        return Ok(());
    }
    let steps = (tau / dtau).ceil() as usize;
    let h = tau / steps as f64;
    let mut ss = SplitStep::new(&field.grid, params.coupling());
    let kin: Vec<Complex64> = ss.half_k2.iter().map(|e| Complex64::new((-e * 0.5 * h).exp(), 0.0)).collect();
    for _ in 0..steps {
        ss.kinetic(&mut field.psi, &kin);
        for (c, v) in field.psi.iter_mut().zip(&ss.half_x2) {
            *c *= (-(u * v + ss.coupling * c.norm_sqr()) * h).exp();
        }
        ss.kinetic(&mut field.psi, &kin);
        field.scale_to(params.atom_number);
    }
    if field.psi.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::Convergence("imaginary-time relaxation produced non-finite values".into()));
    }
    Ok(())
}

/// Initial condensate in the trap `ω₀ = 1`: the Thomas–Fermi profile,
/// relaxed if `params.relax_time > 0`.
pub fn initial_state(grid: &Grid, params: &GpeParams) -> Result<CondensateField> {
    let mut field = thomas_fermi(1.0, params)?.sample(grid)?;
    relax(&mut field, 1.0, params.relax_time, params.relax_dt, params)?;
    Ok(field)
}

#[derive(Debug, Clone)]
pub struct GpeRun {
    pub final_field: CondensateField,
    /// Fields at the requested times, in order.
    pub snapshots: Vec<(f64, CondensateField)>,
    pub norm_drift: f64,
    pub max_edge_ratio: f64,
    pub steps: usize,
    pub dt: f64,
}

/// Strang-split real-time evolution under `control`. Steps never straddle a
/// control breakpoint or snapshot time; `u` is evaluated at step midpoints.
pub fn propagate_gpe(
    initial: &CondensateField,
    control: &dyn TrapControl,
    params: &GpeParams,
    snapshot_times: &[f64],
) -> Result<GpeRun> {
    params.validate()?;
    let total = control.duration();
    if !(total >= 0.0 && total.is_finite()) {
        return Err(Error::domain(format!("control duration {total} must be finite and >= 0")));
    }
    if snapshot_times.windows(2).any(|w| w[1] < w[0]) || snapshot_times.iter().any(|&t| !(0.0..=total).contains(&t)) {
        return Err(Error::domain("snapshot times must be sorted and inside [0, duration]"));
    }
    let mut stops: Vec<f64> = control
        .breakpoints()
        .into_iter()
        .chain(snapshot_times.iter().copied())
        .filter(|&t| t > 0.0 && t < total)
        .chain(std::iter::once(total))
        .collect();
    stops.sort_by(f64::total_cmp);
    stops.dedup();

    let dt = params.effective_dt(&initial.grid);
    let norm0 = initial.norm();
    let mut field = initial.clone();
    let mut ss = SplitStep::new(&field.grid, params.coupling());
    let mut snapshots = Vec::with_capacity(snapshot_times.len());
    let mut next_snap = 0;
    let mut take = |t: f64, field: &CondensateField, snapshots: &mut Vec<(f64, CondensateField)>| {
        while next_snap < snapshot_times.len() && snapshot_times[next_snap] <= t {
            snapshots.push((snapshot_times[next_snap], field.clone()));
            next_snap += 1;
        }
    };
    take(0.0, &field, &mut snapshots);

    let mut max_edge = field.edge_ratio();
    let mut t = 0.0;
    let mut steps = 0;
    for &stop in &stops {
        let span = stop - t;
        if span > 0.0 {
            let n = (span / dt).ceil().max(1.0) as usize;
            let h = span / n as f64;
            let kin = ss.real_time_factors(h);
            for i in 0..n {
                let u = control.u(t + (i as f64 + 0.5) * h);
                if !u.is_finite() {
                    return Err(Error::domain(format!("control is not finite at t = {}", t + (i as f64 + 0.5) * h)));
                }
                ss.real_step(&mut field.psi, u, h, &kin);
                steps += 1;
                let edge = field.edge_ratio();
                max_edge = max_edge.max(edge);
                if edge > params.leak_tol {
                    return Err(Error::BoundaryLeak { t: t + (i as f64 + 1.0) * h, ratio: edge });
                }
            }
            t = stop;
        }
        take(t, &field, &mut snapshots);
    }
    let drift = (field.norm() - norm0).abs() / norm0;
    if !(drift <= params.norm_tol) {
        return Err(Error::NormDrift { drift, tol: params.norm_tol });
    }
    Ok(GpeRun { final_field: field, snapshots, norm_drift: drift, max_edge_ratio: max_edge, steps, dt })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationSample {
    pub t: f64,
    pub b: f64,
    /// `max_x ||ψ(t,x)| − b^(−1/2)|ψ(0,x/b)||` over the peak of `|ψ(0)|`.
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub samples: Vec<DeviationSample>,
    pub max_deviation: f64,
    pub final_deviation: f64,
    pub min_b: f64,
}

fn interpolate_modulus(field: &CondensateField, x: f64) -> f64 {
    let g = &field.grid;
    let pos = (x + g.half_width) / g.dx;
    if pos < 0.0 || pos > (g.len() - 1) as f64 {
        return 0.0;
    }
    let i = (pos.floor() as usize).min(g.len() - 2);
    let f = pos - i as f64;
    (1.0 - f) * field.psi[i].norm() + f * field.psi[i + 1].norm()
}

/// Compares snapshot moduli with the scaling solution built from the initial
/// modulus and the reduced dynamics `b(t)` under the same control.
pub fn scaling_ansatz_check(
    control: &dyn TrapControl,
    initial: &CondensateField,
    snapshots: &[(f64, CondensateField)],
    tol: f64,
) -> Result<ScalingReport> {
    let times: Vec<f64> = snapshots.iter().map(|(t, _)| *t).collect();
    let bps = control.breakpoints();
    let states = sample_with_control(
        ReducedState::initial(),
        |t| control.u(t),
        &bps,
        &times,
        &PropagationOptions::with_tol(tol),
    )?;
    let peak = initial.peak_amplitude();
    let mut samples = Vec::with_capacity(snapshots.len());
    for ((t, field), s) in snapshots.iter().zip(&states) {
        let b = s.x1;
        let scale = b.powf(-0.5);
        let dev = field
            .grid
            .x
            .iter()
            .zip(&field.psi)
            .map(|(&x, c)| (c.norm() - scale * interpolate_modulus(initial, x / b)).abs())
            .fold(0.0f64, f64::max);
        samples.push(DeviationSample { t: *t, b, deviation: dev / peak });
    }
    let max_deviation = samples.iter().fold(0.0f64, |m, s| m.max(s.deviation));
    let final_deviation = samples.last().map_or(0.0, |s| s.deviation);
    let min_b = samples.iter().fold(f64::INFINITY, |m, s| m.min(s.b));
    Ok(ScalingReport { samples, max_deviation, final_deviation, min_b })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub time_unit: String,
    pub control: String,
    pub gamma: f64,
    pub duration: f64,
    pub params: GpeParams,
    pub half_width: f64,
    pub mu_initial: f64,
    pub mu_target: f64,
    /// `g|ψ(0,0)|²/(ħω₀)` for the initial state.
    pub tf_ratio: f64,
    /// Fidelity of the final state with the Thomas–Fermi state of `ω_T`.
    pub fidelity: f64,
    /// Fidelity with the relaxed ground state of `ω_T`, free of the
    /// Thomas–Fermi approximation error.
    pub fidelity_ground_state: f64,
    /// Fidelity of the final state with the initial state.
    pub fidelity_with_initial: f64,
    pub norm_drift: f64,
    pub max_edge_ratio: f64,
    pub steps: usize,
    /// Step used by the base run.
    pub dt: f64,
    pub fidelity_dt_half: Option<f64>,
    pub fidelity_refined: Option<f64>,
    pub dt_convergence: Option<f64>,
    pub refinement_convergence: Option<f64>,
    pub scaling: ScalingReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationOptions {
    /// Snapshots used for the deviation curve, evenly spaced over `[0, T]`.
    pub snapshots: usize,
    pub convergence: bool,
    pub dynamics_tol: f64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self { snapshots: 33, convergence: true, dynamics_tol: 1e-10 }
    }
}

struct SingleRun {
    fidelity: f64,
    ground: f64,
    with_initial: f64,
    run: GpeRun,
    initial: CondensateField,
    half_width: f64,
}

fn single_run(control: &dyn TrapControl, gamma: f64, params: &GpeParams, snaps: &[f64]) -> Result<SingleRun> {
    let target = thomas_fermi(gamma.powf(-1.5), params)?;
    let half_width = params.domain_factor * target.radius;
    if params.domain_factor < MIN_DOMAIN_FACTOR {
        return Err(Error::GridTooSmall { radius: target.radius, half_width });
    }
    let grid = Grid::new(params.grid_points, half_width)?;
    let initial = initial_state(&grid, params)?;
    let run = propagate_gpe(&initial, control, params, snaps)?;
    let mut ground_state = target.sample(&grid)?;
    let fid = fidelity(&run.final_field, &ground_state)?;
    // Relaxation slows down with the trap frequency.
    relax(&mut ground_state, target.omega * target.omega, params.relax_time / target.omega, params.relax_dt, params)?;
    let ground = fidelity(&run.final_field, &ground_state)?;
    let with_initial = fidelity(&run.final_field, &initial)?;
    Ok(SingleRun { fidelity: fid, ground, with_initial, run, initial, half_width })
}

/// Runs `control` from the initial ground state, compares the final state
/// with the Thomas–Fermi state of `ω_T = γ^(−3/2)`, and optionally repeats
/// with `dt/2` and with `dt/2` on a doubled grid. The runs are independent
/// and are executed under `exec`.
pub fn validate(
    control: &dyn TrapControl,
    gamma: f64,
    params: &GpeParams,
    opts: &ValidationOptions,
    exec: Execution,
) -> Result<ValidationReport> {
    validate_with_field(control, gamma, params, opts, exec).map(|(report, _)| report)
}

/// [`validate`], also returning the final field of the base run.
pub fn validate_with_field(
    control: &dyn TrapControl,
    gamma: f64,
    params: &GpeParams,
    opts: &ValidationOptions,
    exec: Execution,
) -> Result<(ValidationReport, CondensateField)> {
    if !(gamma >= 1.0 && gamma.is_finite()) {
        return Err(Error::domain(format!("gamma = {gamma} must be finite and >= 1")));
    }
    params.validate()?;
    let total = control.duration();
    let n = opts.snapshots.max(2);
    let snaps: Vec<f64> = (0..n).map(|i| if i == n - 1 { total } else { total * i as f64 / (n - 1) as f64 }).collect();

    let target = thomas_fermi(gamma.powf(-1.5), params)?;
    let grid = Grid::new(params.grid_points, params.domain_factor * target.radius)?;
    let half = GpeParams { dt: params.effective_dt(&grid) * 0.5, ..*params };
    let refined = GpeParams { grid_points: params.grid_points * 2, ..half };
    let configs: Vec<(usize, GpeParams)> =
        if opts.convergence { vec![(0, *params), (1, half), (2, refined)] } else { vec![(0, *params)] };
    let mut results = exec.map(&configs, |(i, p)| {
        let s: &[f64] = if *i == 0 { &snaps } else { &[] };
        single_run(control, gamma, p, s)
    });
    let refined_run = if opts.convergence { Some(results.pop().expect("three runs")?) } else { None };
    let half_run = if opts.convergence { Some(results.pop().expect("three runs")?) } else { None };
    let base = results.pop().expect("base run")?;

    let scaling = scaling_ansatz_check(control, &base.initial, &base.run.snapshots, opts.dynamics_tol)?;
    let fidelity_dt_half = half_run.map(|r| r.fidelity);
    let fidelity_refined = refined_run.map(|r| r.fidelity);
    let report = ValidationReport {
        time_unit: "1/omega0".into(),
        control: control.label(),
        gamma,
        duration: total,
        params: *params,
        half_width: base.half_width,
        mu_initial: thomas_fermi(1.0, params)?.mu,
        mu_target: thomas_fermi(gamma.powf(-1.5), params)?.mu,
        tf_ratio: params.coupling() * base.initial.peak_amplitude().powi(2),
        fidelity: base.fidelity,
        fidelity_ground_state: base.ground,
        fidelity_with_initial: base.with_initial,
        norm_drift: base.run.norm_drift,
        max_edge_ratio: base.run.max_edge_ratio,
        steps: base.run.steps,
        dt: base.run.dt,
        fidelity_dt_half,
        fidelity_refined,
        dt_convergence: fidelity_dt_half.map(|f| (f - base.fidelity).abs()),
        refinement_convergence: fidelity_refined.map(|f| (f - base.fidelity).abs()),
        scaling,
    };
    Ok((report, base.run.final_field))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small() -> GpeParams {
        GpeParams { grid_points: 512, relax_time: 1.0, relax_dt: 2e-3, ..Default::default() }
    }

    #[test]
    fn chemical_potential_scaling() {
        let p = GpeParams::default();
        let gamma: f64 = 3.0;
        let w_t = gamma.powf(-1.5);
        let m0 = thomas_fermi(1.0, &p).unwrap().mu;
        let mt = thomas_fermi(w_t, &p).unwrap().mu;
        assert!((m0 / mt - (1.0 / w_t).powf(2.0 / 3.0)).abs() <= 1e-12);
        assert!((m0 - (9.0f64 / 32.0 * 300.0 * 300.0).cbrt()).abs() < 1e-12);
        // Doubling N at fixed g doubles g̃.
        let doubled = GpeParams { atom_number: 2.0, gtilde: 600.0, ..p };
        let m2 = thomas_fermi(1.0, &doubled).unwrap().mu;
        assert!((m2 / m0 - 2f64.powf(2.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn rescaled_profile_identity() {
        let p = GpeParams::default();
        for ratio in [0.5f64, 0.125, 0.01] {
            let tf0 = thomas_fermi(1.0, &p).unwrap();
            let tft = thomas_fermi(ratio, &p).unwrap();
            for i in 0..=400 {
                let x = -1.2 * tft.radius + 2.4 * tft.radius * i as f64 / 400.0;
                let lhs = ratio.cbrt() * tf0.amplitude(ratio.powf(2.0 / 3.0) * x);
                assert!((lhs - tft.amplitude(x)).abs() <= 1e-12, "{lhs} vs {}", tft.amplitude(x));
            }
        }
    }

    #[test]
    fn sampled_profile_is_normalised() {
        let p = GpeParams::default();
        let tf = thomas_fermi(1.0, &p).unwrap();
        let grid = Grid::new(2048, 4.0 * tf.radius).unwrap();
        let f = tf.sample(&grid).unwrap();
        assert!((f.norm() - 1.0).abs() < 1e-12);
        assert!((p.coupling() * f.peak_amplitude().powi(2) - tf.mu).abs() / tf.mu < 1e-4);
        let tight = Grid::new(64, 0.9 * tf.radius).unwrap();
        assert!(matches!(tf.sample(&tight), Err(Error::GridTooSmall { .. })));
    }

    #[test]
    fn fidelity_basics() {
        let grid = Grid::new(64, 5.0).unwrap();
        let a = CondensateField { psi: grid.x.iter().map(|x| Complex64::new((-x * x).exp(), 0.0)).collect(), grid: grid.clone() };
        let odd = CondensateField { psi: grid.x.iter().map(|x| Complex64::new(x * (-x * x).exp(), 0.0)).collect(), grid: grid.clone() };
        assert!((fidelity(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        assert!(fidelity(&a, &odd).unwrap() < 1e-28);
        let other = Grid::new(64, 6.0).unwrap();
        let c = CondensateField { psi: a.psi.clone(), grid: other };
        assert!(matches!(fidelity(&a, &c), Err(Error::GridMismatch(_))));
    }

    proptest! {
        #[test]
        fn fidelity_ignores_global_phase(theta in -10.0f64..10.0, phi in -10.0f64..10.0, w in 0.2f64..3.0) {
            let grid = Grid::new(128, 8.0).unwrap();
            let a = CondensateField {
                psi: grid.x.iter().map(|x| Complex64::from_polar((-(x - 1.0) * (x - 1.0) / w).exp(), 0.3 * x)).collect(),
                grid: grid.clone(),
            };
            let rot = |f: &CondensateField, p: f64| CondensateField {
                psi: f.psi.iter().map(|c| c * Complex64::from_polar(1.0, p)).collect(),
                grid: grid.clone(),
            };
            let b = CondensateField { psi: grid.x.iter().map(|x| Complex64::new((-x * x).exp(), 0.0)).collect(), grid: grid.clone() };
            let f0 = fidelity(&a, &b).unwrap();
            prop_assert!((fidelity(&rot(&a, theta), &rot(&b, phi)).unwrap() - f0).abs() < 1e-13);
            prop_assert!((fidelity(&a, &rot(&a, theta)).unwrap() - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn free_gaussian_matches_analytic_spreading() {
        // g = 0, u = 0: |ψ|² of a unit Gaussian has variance (1 + t²)/2.
        let p = GpeParams { gtilde: 1e-300, ..small() };
        let grid = Grid::new(1024, 30.0).unwrap();
        let mut f = CondensateField {
            psi: grid.x.iter().map(|x| Complex64::new((-0.5 * x * x).exp(), 0.0)).collect(),
            grid: grid.clone(),
        };
        f.scale_to(1.0);
        let run = propagate_gpe(&f, &ConstantControl { u: 0.0, duration: 2.0 }, &p, &[]).unwrap();
        let var: f64 = grid.x.iter().zip(&run.final_field.psi).map(|(x, c)| x * x * c.norm_sqr()).sum::<f64>() * grid.dx;
        assert!((var - 2.5).abs() < 1e-9, "{var}");
        assert!(run.norm_drift < 1e-12);
    }

    #[test]
    fn relaxed_state_is_stationary() {
        let p = small();
        let tf = thomas_fermi(1.0, &p).unwrap();
        let grid = Grid::new(p.grid_points, 4.0 * tf.radius).unwrap();
        let init = initial_state(&grid, &p).unwrap();
        let run = propagate_gpe(&init, &ConstantControl { u: 1.0, duration: 4.0 * std::f64::consts::PI }, &p, &[]).unwrap();
        assert!(fidelity(&init, &run.final_field).unwrap() >= 0.9999);
        assert!(run.norm_drift <= 1e-8);
    }

    #[test]
    fn snapshots_are_taken_in_order() {
        let p = small();
        let grid = Grid::new(p.grid_points, 40.0).unwrap();
        let init = initial_state(&grid, &p).unwrap();
        let ctl = ConstantControl { u: 1.0, duration: 0.5 };
        let run = propagate_gpe(&init, &ctl, &p, &[0.0, 0.1, 0.1, 0.5]).unwrap();
        let times: Vec<f64> = run.snapshots.iter().map(|s| s.0).collect();
        assert_eq!(times, vec![0.0, 0.1, 0.1, 0.5]);
        assert_eq!(run.snapshots[0].1, init);
        assert_eq!(run.snapshots[3].1, run.final_field);
        assert!(propagate_gpe(&init, &ctl, &p, &[0.6]).is_err());
    }

    #[test]
    fn expulsive_trap_leaks_into_small_box() {
        let p = small();
        let tf = thomas_fermi(1.0, &p).unwrap();
        let grid = Grid::new(p.grid_points, 1.6 * tf.radius).unwrap();
        let init = initial_state(&grid, &p).unwrap();
        let err = propagate_gpe(&init, &ConstantControl { u: -1.0, duration: 3.0 }, &p, &[]).unwrap_err();
        assert!(matches!(err, Error::BoundaryLeak { .. }));
    }

    #[test]
    fn narrow_domain_factor_is_rejected() {
        let p = GpeParams { domain_factor: 1.2, ..small() };
        let err = validate(&ConstantControl { u: 1.0, duration: 0.1 }, 2.0, &p, &ValidationOptions::default(), Execution::Sequential)
            .unwrap_err();
        assert!(matches!(err, Error::GridTooSmall { .. }));
        assert!(err.is_domain());
    }

    #[test]
    fn csv_snapshot_has_four_columns() {
        let grid = Grid::new(16, 1.0).unwrap();
        let f = CondensateField { psi: vec![Complex64::new(1.0, -1.0); 16], grid };
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 17);
        assert!(text.lines().nth(1).unwrap().ends_with(",1,-1,2"));
    }
}
