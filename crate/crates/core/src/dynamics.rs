//! Reduced planar dynamics of the condensate scale factor.
//!
//! With `x1 = b`, `x2 = ḃ/ω₀`, `u = ω²(t)/ω₀²` and time measured in units of
//! `1/ω₀`, the scale equation becomes
//!
//! ```text
//! ẋ1 = x2
//! ẋ2 = −u x1 + 1/x1²
//! ```
//!
//! Arcs with `u = −1` are called X-arcs, arcs with `u = +1` Y-arcs.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::integrate;

/// Control value on X-arcs (expulsive potential).
pub const U_X: f64 = -1.0;
/// Control value on Y-arcs (initial trap strength).
pub const U_Y: f64 = 1.0;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_X1_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedState {
    pub x1: f64,
    pub x2: f64,
}

impl ReducedState {
    pub const fn new(x1: f64, x2: f64) -> Self {
        Self { x1, x2 }
    }

    /// The trap-centred condensate at rest, `(1, 0)`.
    pub const fn initial() -> Self {
        Self { x1: 1.0, x2: 0.0 }
    }

    /// Mirror image under `t → −t`.
    pub fn time_reversed(self) -> Self {
        Self { x1: self.x1, x2: -self.x2 }
    }

    pub fn distance(&self, other: &ReducedState) -> f64 {
        (self.x1 - other.x1).hypot(self.x2 - other.x2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateRate {
    pub dx1: f64,
    pub dx2: f64,
}

/// Right-hand side of the reduced system for a fixed control value.
pub fn vector_field(state: ReducedState, u: f64) -> Result<StateRate> {
    if !(state.x1 > 0.0) {
        return Err(Error::domain(format!("x1 = {} must be positive", state.x1)));
    }
    if !(-1.0..=1.0).contains(&u) {
        return Err(Error::domain(format!("control u = {u} outside [-1, 1]")));
    }
    Ok(rate(state.x1, state.x2, u))
}

#[inline]
fn rate(x1: f64, x2: f64, u: f64) -> StateRate {
    StateRate { dx1: x2, dx2: -u * x1 + 1.0 / (x1 * x1) }
}

/// Constant of motion on X-arcs; equals 1 on the arc leaving `(1, 0)`.
pub fn first_integral_x(state: ReducedState) -> Result<f64> {
    if !(state.x1 > 0.0) {
        return Err(Error::domain(format!("x1 = {} must be positive", state.x1)));
    }
    Ok(state.x2 * state.x2 - state.x1 * state.x1 + 2.0 / state.x1)
}

/// Constant of motion on Y-arcs; equals `γ² + 2/γ` on the arc ending at `(γ, 0)`.
pub fn first_integral_y(state: ReducedState, gamma: f64) -> Result<f64> {
    if !(state.x1 > 0.0) {
        return Err(Error::domain(format!("x1 = {} must be positive", state.x1)));
    }
    if !(gamma > 1.0) {
        return Err(Error::domain(format!("gamma = {gamma} must exceed 1")));
    }
    Ok(state.x2 * state.x2 + state.x1 * state.x1 + 2.0 / state.x1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub u: f64,
    pub duration: f64,
}

/// Piecewise-constant control on `(0, T)` plus the boundary values the trap
/// jumps to instantaneously at `t = 0` and `t = T`. The jumps are bookkeeping
/// only; they are never integrated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BangBangSchedule {
    segments: Vec<Segment>,
    pub jump_start: f64,
    pub jump_end: f64,
}

impl BangBangSchedule {
    pub fn new(segments: Vec<Segment>, jump_start: f64, jump_end: f64) -> Result<Self> {
        for s in &segments {
            if !(-1.0..=1.0).contains(&s.u) {
                return Err(Error::domain(format!("segment control {} outside [-1, 1]", s.u)));
            }
            if !(s.duration >= 0.0) || !s.duration.is_finite() {
                return Err(Error::domain(format!("segment duration {} must be finite and >= 0", s.duration)));
            }
        }
        Ok(Self { segments, jump_start, jump_end })
    }

    /// Schedule for an expansion by `gamma`: `u = 1` before, `u = 1/γ³` after.
    pub fn for_expansion(gamma: f64, segments: Vec<Segment>) -> Result<Self> {
        Self::new(segments, 1.0, gamma.powi(-3))
    }

    pub fn empty() -> Self {
        Self { segments: Vec::new(), jump_start: 1.0, jump_end: 1.0 }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Switching instants, including 0 and T.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut t = 0.0;
        let mut out = vec![0.0];
        for s in &self.segments {
            t += s.duration;
            out.push(t);
        }
        out
    }

    /// Control at time `t`, right-continuous inside `[0, T)`, with the jump
    /// values outside.
    pub fn control_at(&self, t: f64) -> f64 {
        if t < 0.0 {
            return self.jump_start;
        }
        let mut end = 0.0;
        for s in &self.segments {
            end += s.duration;
            if t < end {
                return s.u;
            }
        }
        self.jump_end
    }

    /// Segments in reverse order, for integrating the time-reversed motion.
    pub fn reversed(&self) -> Self {
        Self {
            segments: self.segments.iter().rev().copied().collect(),
            jump_start: self.jump_end,
            jump_end: self.jump_start,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub x1: f64,
    pub x2: f64,
    pub u: f64,
}

impl TrajectoryPoint {
    pub fn state(&self) -> ReducedState {
        ReducedState::new(self.x1, self.x2)
    }
}

/// Accepted integrator steps, every segment end point included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
}

impl Trajectory {
    pub fn final_state(&self) -> ReducedState {
        self.points.last().expect("trajectory always holds the start").state()
    }

    pub fn min_x1(&self) -> f64 {
        self.points.iter().map(|p| p.x1).fold(f64::INFINITY, f64::min)
    }

    pub fn min_x2(&self) -> f64 {
        self.points.iter().map(|p| p.x2).fold(f64::INFINITY, f64::min)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t[1/omega0],x1[1],x2[1],u[1]")?;
        for p in &self.points {
            writeln!(w, "{},{},{},{}", p.t, p.x1, p.x2, p.u)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationOptions {
    /// Target global error of the final state.
    pub tol: f64,
    /// Propagation stops with [`Error::ScaleFloor`] below this scale factor.
    pub x1_floor: f64,
    pub max_steps: usize,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, x1_floor: DEFAULT_X1_FLOOR, max_steps: 10_000_000 }
    }
}

impl PropagationOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }

    // Local per-step tolerance. The X-arcs grow like e^t, so local errors are
    // amplified; two orders of margin keep the end point within `tol`.
    fn local_tol(&self) -> f64 {
        (self.tol * 1e-2).max(1e-15)
    }
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

struct Stepper<'a, U: Fn(f64) -> f64> {
    control: &'a U,
    opts: PropagationOptions,
    h: f64,
    steps: usize,
}

impl<U: Fn(f64) -> f64> Stepper<'_, U> {
    fn f(&self, t: f64, y: [f64; 2]) -> [f64; 2] {
        let r = rate(y[0], y[1], (self.control)(t));
        [r.dx1, r.dx2]
    }

    /// One Dormand–Prince step; `None` if a stage left the physical domain.
    fn attempt(&self, t: f64, y: [f64; 2], h: f64) -> Option<([f64; 2], f64)> {
        let add = |k: &[([f64; 2], f64)]| -> [f64; 2] {
            let mut out = y;
            for (kk, a) in k {
                out[0] += h * a * kk[0];
                out[1] += h * a * kk[1];
            }
            out
        };
        let ok = |s: &[f64; 2]| s[0] > 0.0 && s[0].is_finite() && s[1].is_finite();
        let k1 = self.f(t, y);
        let s = add(&[(k1, A21)]);
        if !ok(&s) {
            return None;
        }
        let k2 = self.f(t + C2 * h, s);
        let s = add(&[(k1, A31), (k2, A32)]);
        if !ok(&s) {
            return None;
        }
        let k3 = self.f(t + C3 * h, s);
        let s = add(&[(k1, A41), (k2, A42), (k3, A43)]);
        if !ok(&s) {
            return None;
        }
        let k4 = self.f(t + C4 * h, s);
        let s = add(&[(k1, A51), (k2, A52), (k3, A53), (k4, A54)]);
        if !ok(&s) {
            return None;
        }
        let k5 = self.f(t + C5 * h, s);
        let s = add(&[(k1, A61), (k2, A62), (k3, A63), (k4, A64), (k5, A65)]);
        if !ok(&s) {
            return None;
        }
        let k6 = self.f(t + h, s);
        let y_new = add(&[(k1, B1), (k3, B3), (k4, B4), (k5, B5), (k6, B6)]);
        if !ok(&y_new) {
            return None;
        }
        let k7 = self.f(t + h, y_new);
        let tol = self.opts.local_tol();
        let mut err: f64 = 0.0;
        for i in 0..2 {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let scale = tol + tol * y[i].abs().max(y_new[i].abs());
            err = err.max(e.abs() / scale);
        }
        Some((y_new, err))
    }

    /// Integrates from `t0` to `t1` where the control is smooth, landing on
    /// `t1` exactly. Accepted intermediate points go to `record`.
    fn advance(
        &mut self,
        t0: f64,
        t1: f64,
        mut y: [f64; 2],
        record: &mut dyn FnMut(f64, [f64; 2]),
    ) -> Result<[f64; 2]> {
        let mut t = t0;
        while t < t1 {
            if self.steps >= self.opts.max_steps {
                return Err(Error::Convergence(format!("step budget exhausted at t = {t}")));
            }
            let remaining = t1 - t;
            let last = self.h >= remaining * (1.0 - 1e-12);
            let h = if last { remaining } else { self.h };
            if h < 1e-14 * t.abs().max(1.0) && !last {
                return Err(Error::Convergence(format!("step size underflow at t = {t}")));
            }
            self.steps += 1;
            match self.attempt(t, y, h) {
                Some((y_new, err)) if err <= 1.0 => {
                    t = if last { t1 } else { t + h };
                    y = y_new;
                    if y[0] < self.opts.x1_floor {
                        return Err(Error::ScaleFloor { t, x1: y[0], floor: self.opts.x1_floor });
                    }
                    let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                    // Keep the pre-truncation step so short final steps do not
                    // throttle the next interval.
                    self.h = if last { self.h.max(h * grow) } else { h * grow };
                    if t < t1 {
                        record(t, y);
                    }
                }
                Some((_, err)) => {
                    self.h = h * (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
                }
                None => {
                    self.h = h * 0.25;
                }
            }
        }
        Ok(y)
    }
}

fn check_start(start: ReducedState, opts: &PropagationOptions) -> Result<()> {
    if !(start.x1 > 0.0) || !start.x2.is_finite() {
        return Err(Error::domain(format!("start x1 = {} must be positive", start.x1)));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::domain(format!("tolerance {} must be positive", opts.tol)));
    }
    Ok(())
}

/// Integrates the reduced system under a piecewise-constant schedule with
/// the default options and tolerance `tol`.
pub fn propagate(start: ReducedState, schedule: &BangBangSchedule, tol: f64) -> Result<Trajectory> {
    propagate_with(start, schedule, &PropagationOptions::with_tol(tol))
}

pub fn propagate_with(
    start: ReducedState,
    schedule: &BangBangSchedule,
    opts: &PropagationOptions,
) -> Result<Trajectory> {
    check_start(start, opts)?;
    let first_u = schedule.segments().first().map_or(schedule.jump_start, |s| s.u);
    let mut points = vec![TrajectoryPoint { t: 0.0, x1: start.x1, x2: start.x2, u: first_u }];
    let mut y = [start.x1, start.x2];
    let mut t = 0.0;
    let mut h = 1e-3;
    let mut steps = 0;
    for seg in schedule.segments().iter().filter(|s| s.duration > 0.0) {
        let u = seg.u;
        let control = move |_: f64| u;
        let mut stepper = Stepper { control: &control, opts: *opts, h, steps };
        let t_end = t + seg.duration;
        y = stepper.advance(t, t_end, y, &mut |tt, yy| {
            points.push(TrajectoryPoint { t: tt, x1: yy[0], x2: yy[1], u });
        })?;
        points.push(TrajectoryPoint { t: t_end, x1: y[0], x2: y[1], u });
        t = t_end;
        h = stepper.h;
        steps = stepper.steps;
    }
    Ok(Trajectory { points })
}

/// States at the requested (sorted, non-negative) times under an arbitrary
/// control `u(t)`. `breakpoints` lists times where `u` is discontinuous.
pub fn sample_with_control<U: Fn(f64) -> f64>(
    start: ReducedState,
    control: U,
    breakpoints: &[f64],
    times: &[f64],
    opts: &PropagationOptions,
) -> Result<Vec<ReducedState>> {
    check_start(start, opts)?;
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::domain("sample times must be sorted and non-negative"));
    }
    let mut stops: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&b| b > 0.0)
        .chain(times.iter().copied())
        .collect();
    stops.sort_by(f64::total_cmp);
    stops.dedup();

    // Between two stops the control is smooth, but it must be evaluated from
    // the right at a breakpoint; nudge evaluations into the open interval.
    let mut out = Vec::with_capacity(times.len());
    let mut y = [start.x1, start.x2];
    let mut t = 0.0;
    let mut h = 1e-3;
    let mut steps = 0;
    let mut next_sample = 0;
    while next_sample < times.len() && times[next_sample] == 0.0 {
        out.push(start);
        next_sample += 1;
    }
    for &stop in &stops {
        if next_sample >= times.len() {
            break;
        }
        if stop > t {
            let (lo, hi) = (t, stop);
            let clamped = |tt: f64| control(tt.clamp(lo + (hi - lo) * 1e-12, hi - (hi - lo) * 1e-12));
            let mut stepper = Stepper { control: &clamped, opts: *opts, h, steps };
            y = stepper.advance(t, stop, y, &mut |_, _| {})?;
            h = stepper.h;
            steps = stepper.steps;
            t = stop;
        }
        while next_sample < times.len() && times[next_sample] == t {
            out.push(ReducedState::new(y[0], y[1]));
            next_sample += 1;
        }
    }
    Ok(out)
}

/// States at the requested times under a bang-bang schedule.
pub fn sample_states(
    start: ReducedState,
    schedule: &BangBangSchedule,
    times: &[f64],
    opts: &PropagationOptions,
) -> Result<Vec<ReducedState>> {
    let bps = schedule.breakpoints();
    sample_with_control(start, |t| schedule.control_at(t), &bps, times, opts)
}

/// An arc of constant control described by its first integral, anchored at
/// a point where `x2²` is known exactly so that `x2²(x1)` is formed without
/// cancellation near that point.
#[derive(Debug, Clone, Copy)]
struct Arc {
    u: f64,
    anchor_x1: f64,
    anchor_x2_sq: f64,
}

impl Arc {
    fn x2_sq(&self, x: f64) -> f64 {
        self.x2_sq_offset(x, x - self.anchor_x1)
    }

    fn x2_sq_offset(&self, x: f64, dx: f64) -> f64 {
        let r = self.anchor_x1;
        let shape = 2.0 / (x * r);
        if self.u == U_X {
            self.anchor_x2_sq + dx * (x + r + shape)
        } else {
            self.anchor_x2_sq + dx * (shape - x - r)
        }
    }

    /// Traversal time `∫ dx1 / x2` from `a` to `b` with `x2 > 0` inside.
    ///
    /// Uses `x = a + (b − a) sin²(θ/2)`, whose Jacobian cancels the
    /// inverse-square-root behaviour where `x2` vanishes at an end point. The
    /// offset from the anchor is formed without rounding `x` first.
    fn time(&self, a: f64, b: f64) -> Result<f64> {
        let len = b - a;
        let est = integrate(
            |theta: f64| {
                let (sh, ch) = (0.5 * theta).sin_cos();
                let from_a = len * sh * sh;
                let to_b = len * ch * ch;
                let x = if from_a < to_b { a + from_a } else { b - to_b };
                let offset = if self.anchor_x1 == a {
                    from_a
                } else if self.anchor_x1 == b {
                    -to_b
                } else {
                    x - self.anchor_x1
                };
                let v = self.x2_sq_offset(x, offset);
                0.5 * len * theta.sin() / v.max(f64::MIN_POSITIVE).sqrt()
            },
            0.0,
            std::f64::consts::PI,
            1e-14,
            1e-13,
        )?;
        Ok(est.value)
    }
}

/// A multi-switch path and the states at which it switches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiSwitchPath {
    pub schedule: BangBangSchedule,
    pub switch_points: Vec<ReducedState>,
}

/// Builds the XY…XY schedule from `(1, 0)` to `(γ, 0)` that switches at the
/// given `x1` loci (X→Y, Y→X alternately) and finally at the intersection of
/// the last X-arc with the Y-arc through `(γ, 0)`.
///
/// `interior` must hold an even number of strictly increasing points; an
/// empty list yields the single-switch schedule.
pub fn build_multiswitch(gamma: f64, interior: &[f64]) -> Result<BangBangSchedule> {
    Ok(build_multiswitch_path(gamma, interior)?.schedule)
}

pub fn build_multiswitch_path(gamma: f64, interior: &[f64]) -> Result<MultiSwitchPath> {
    if !(gamma > 1.0) || !gamma.is_finite() {
        return Err(Error::domain(format!("gamma = {gamma} must exceed 1")));
    }
    if !interior.len().is_multiple_of(2) {
        return Err(Error::domain(format!(
            "interior switch list must pair X->Y with Y->X switches, got {} points",
            interior.len()
        )));
    }
    let target = gamma * gamma + 2.0 / gamma;
    let mut segments = Vec::with_capacity(interior.len() + 2);
    let mut switch_points = Vec::with_capacity(interior.len() + 1);
    let mut x_arc = Arc { u: U_X, anchor_x1: 1.0, anchor_x2_sq: 0.0 };
    let mut cur = 1.0;

    for pair in interior.chunks_exact(2) {
        let (xy, yx) = (pair[0], pair[1]);
        if !(xy > cur) || !xy.is_finite() {
            return Err(Error::Infeasible(format!("switch locus {xy} does not advance past {cur}")));
        }
        let v_xy = x_arc.x2_sq(xy);
        let y_const = v_xy + xy * xy + 2.0 / xy;
        if !(y_const < target) {
            return Err(Error::Infeasible(format!(
                "switching to Y at x1 = {xy} overshoots the terminal arc"
            )));
        }
        segments.push(Segment { u: U_X, duration: x_arc.time(cur, xy)? });
        switch_points.push(ReducedState::new(xy, v_xy.sqrt()));

        let y_arc = Arc { u: U_Y, anchor_x1: xy, anchor_x2_sq: v_xy };
        if !(yx > xy) || !yx.is_finite() {
            return Err(Error::Infeasible(format!("switch locus {yx} does not advance past {xy}")));
        }
        let v_yx = y_arc.x2_sq(yx);
        if !(v_yx > 0.0) {
            return Err(Error::Infeasible(format!(
                "Y-arc from x1 = {xy} reaches x2 = 0 before x1 = {yx}"
            )));
        }
        segments.push(Segment { u: U_Y, duration: y_arc.time(xy, yx)? });
        switch_points.push(ReducedState::new(yx, v_yx.sqrt()));

        x_arc = Arc { u: U_X, anchor_x1: yx, anchor_x2_sq: v_yx };
        cur = yx;
    }

    // Last X-arc meets the terminal Y-arc where x1² = (target − C)/2.
    let x_const = x_arc.anchor_x2_sq - x_arc.anchor_x1.powi(2) + 2.0 / x_arc.anchor_x1;
    let last = ((target - x_const) / 2.0).sqrt();
    if !(last > cur && last < gamma) {
        return Err(Error::Infeasible(format!(
            "final switch at x1 = {last} is not between {cur} and {gamma}"
        )));
    }
    let final_arc = Arc { u: U_Y, anchor_x1: gamma, anchor_x2_sq: 0.0 };
    segments.push(Segment { u: U_X, duration: x_arc.time(cur, last)? });
    switch_points.push(ReducedState::new(last, x_arc.x2_sq(last).max(0.0).sqrt()));
    segments.push(Segment { u: U_Y, duration: final_arc.time(last, gamma)? });

    Ok(MultiSwitchPath { schedule: BangBangSchedule::for_expansion(gamma, segments)?, switch_points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn vector_field_examples() {
        let r = vector_field(ReducedState::new(1.0, 0.0), 1.0).unwrap();
        assert_eq!((r.dx1, r.dx2), (0.0, 0.0));
        let r = vector_field(ReducedState::new(1.0, 0.0), -1.0).unwrap();
        assert_eq!((r.dx1, r.dx2), (0.0, 2.0));
        let r = vector_field(ReducedState::new(2.0, 1.0), -1.0).unwrap();
        assert_eq!((r.dx1, r.dx2), (1.0, 2.25));
        assert!(vector_field(ReducedState::new(0.0, 1.0), 0.0).is_err());
        assert!(vector_field(ReducedState::new(1.0, 1.0), 1.5).is_err());
    }

    #[test]
    fn first_integral_examples() {
        assert_eq!(first_integral_x(ReducedState::initial()).unwrap(), 1.0);
        // On the X-arc through (1, 0): x2² = 1 + x1² − 2/x1.
        let x1 = 2f64.sqrt();
        let x2 = (1.0 + 2.0 - 2.0 / x1).sqrt();
        assert!((first_integral_x(ReducedState::new(x1, x2)).unwrap() - 1.0).abs() < 1e-15);
        let g: f64 = 3.0;
        assert_eq!(first_integral_y(ReducedState::new(g, 0.0), g).unwrap(), g * g + 2.0 / g);
        assert!(first_integral_y(ReducedState::new(1.0, 0.0), 1.0).is_err());
    }

    #[test]
    fn equilibrium_is_held() {
        let s = BangBangSchedule::new(vec![Segment { u: 1.0, duration: 7.3 }], 1.0, 1.0).unwrap();
        let tr = propagate(ReducedState::initial(), &s, 1e-10).unwrap();
        assert!(tr.final_state().distance(&ReducedState::initial()) < 1e-10);
    }

    #[test]
    fn zero_duration_schedule_keeps_only_start() {
        let s = BangBangSchedule::new(vec![Segment { u: -1.0, duration: 0.0 }], 1.0, 1.0).unwrap();
        let tr = propagate(ReducedState::new(1.5, 0.2), &s, 1e-10).unwrap();
        assert_eq!(tr.points.len(), 1);
        assert_eq!(tr.final_state(), ReducedState::new(1.5, 0.2));
    }

    #[test]
    fn schedule_validation() {
        assert!(BangBangSchedule::new(vec![Segment { u: 2.0, duration: 1.0 }], 1.0, 1.0).is_err());
        assert!(BangBangSchedule::new(vec![Segment { u: 0.0, duration: -1.0 }], 1.0, 1.0).is_err());
        let s = BangBangSchedule::for_expansion(
            2.0,
            vec![Segment { u: -1.0, duration: 0.5 }, Segment { u: 1.0, duration: 0.25 }],
        )
        .unwrap();
        assert_eq!(s.total_duration(), 0.75);
        assert_eq!(s.control_at(-0.1), 1.0);
        assert_eq!(s.control_at(0.2), -1.0);
        assert_eq!(s.control_at(0.6), 1.0);
        assert_eq!(s.control_at(0.8), 0.125);
        assert_eq!(s.breakpoints(), vec![0.0, 0.5, 0.75]);
    }

    #[test]
    fn x_arc_conserves_its_integral() {
        let s = BangBangSchedule::new(vec![Segment { u: -1.0, duration: 2.5 }], 1.0, 1.0).unwrap();
        let tr = propagate(ReducedState::initial(), &s, 1e-10).unwrap();
        assert!(tr.points.len() > 10);
        for p in &tr.points {
            let c = first_integral_x(p.state()).unwrap();
            assert!((c - 1.0).abs() <= 1e-8 * p.x1.max(1.0).powi(2), "drift {} at t={}", c - 1.0, p.t);
        }
    }

    #[test]
    fn y_arc_conserves_its_integral() {
        let s = BangBangSchedule::new(vec![Segment { u: 1.0, duration: 3.0 }], 1.0, 1.0).unwrap();
        let start = ReducedState::new(1.7, 0.9);
        let c0 = first_integral_y(start, 2.0).unwrap();
        let tr = propagate(start, &s, 1e-10).unwrap();
        for p in &tr.points {
            assert!((first_integral_y(p.state(), 2.0).unwrap() - c0).abs() <= 1e-8);
        }
    }

    #[test]
    fn collapse_hits_the_floor() {
        // Strong confinement with inward velocity and no repulsion to speak of
        // at this scale: the floor must trip before the bounce.
        let s = BangBangSchedule::new(vec![Segment { u: 1.0, duration: 5.0 }], 1.0, 1.0).unwrap();
        let opts = PropagationOptions { x1_floor: 0.05, ..Default::default() };
        let err = propagate_with(ReducedState::new(1.0, -20.0), &s, &opts).unwrap_err();
        assert!(matches!(err, Error::ScaleFloor { .. }), "{err:?}");
    }

    #[test]
    fn sampled_states_match_trajectory_end() {
        let s = BangBangSchedule::for_expansion(
            2.0,
            vec![Segment { u: -1.0, duration: 0.6 }, Segment { u: 1.0, duration: 0.9 }],
        )
        .unwrap();
        let opts = PropagationOptions::with_tol(1e-11);
        let tr = propagate_with(ReducedState::initial(), &s, &opts).unwrap();
        let samples = sample_states(ReducedState::initial(), &s, &[0.0, 0.3, 0.6, 1.5], &opts).unwrap();
        assert_eq!(samples[0], ReducedState::initial());
        assert!(samples[3].distance(&tr.final_state()) < 1e-10);
    }

    #[test]
    fn empty_interior_is_single_switch() {
        let g: f64 = 2.0;
        let path = build_multiswitch_path(g, &[]).unwrap();
        assert_eq!(path.schedule.segments().len(), 2);
        let beta = ((g.powi(3) - g + 2.0) / (2.0 * g)).sqrt();
        assert!((path.switch_points[0].x1 - beta).abs() < 1e-14);
    }

    #[test]
    fn infeasible_switch_loci() {
        // The Y-arc leaving x1 = 1.05 stops long before x1 = 2.5.
        assert!(matches!(build_multiswitch(3.0, &[1.05, 2.5]), Err(Error::Infeasible(_))));
        // Switching to Y beyond the optimal locus overshoots the terminal arc.
        assert!(matches!(build_multiswitch(3.0, &[2.9, 2.95]), Err(Error::Infeasible(_))));
        assert!(matches!(build_multiswitch(3.0, &[1.5, 1.4]), Err(Error::Infeasible(_))));
        assert!(matches!(build_multiswitch(3.0, &[1.5]), Err(Error::Domain(_))));
        assert!(matches!(build_multiswitch(1.0, &[]), Err(Error::Domain(_))));
    }

    #[test]
    fn multiswitch_endpoint_reached_by_propagation() {
        let sched = build_multiswitch(3.0, &[1.3, 1.6]).unwrap();
        let tr = propagate(ReducedState::initial(), &sched, 1e-11).unwrap();
        assert!(tr.final_state().distance(&ReducedState::new(3.0, 0.0)) < 1e-6);
        assert!(tr.min_x2() >= -1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn forward_then_reversed_returns_to_start(
            x1 in 0.8f64..2.5,
            x2 in -0.5f64..0.5,
            d1 in 0.0f64..1.0,
            d2 in 0.0f64..1.0,
            d3 in 0.0f64..1.0,
        ) {
            let tol = 1e-10;
            let s = BangBangSchedule::new(
                vec![
                    Segment { u: -1.0, duration: d1 },
                    Segment { u: 1.0, duration: d2 },
                    Segment { u: 0.3, duration: d3 },
                ],
                1.0,
                1.0,
            )
            .unwrap();
            let start = ReducedState::new(x1, x2);
            let fwd = propagate(start, &s, tol).unwrap();
            let back = propagate(fwd.final_state().time_reversed(), &s.reversed(), tol).unwrap();
            let end = back.final_state().time_reversed();
            prop_assert!(end.distance(&start) <= 10.0 * tol, "miss {}", end.distance(&start));
        }

        #[test]
        fn scale_factor_stays_positive(
            x1 in 0.5f64..3.0,
            x2 in -2.0f64..2.0,
            controls in proptest::collection::vec((-1.0f64..=1.0, 0.0f64..1.5), 1..5),
        ) {
            let segs = controls.into_iter().map(|(u, d)| Segment { u, duration: d }).collect();
            let s = BangBangSchedule::new(segs, 1.0, 1.0).unwrap();
            let tr = propagate(ReducedState::new(x1, x2), &s, 1e-9).unwrap();
            prop_assert!(tr.min_x1() > 0.0);
        }
    }
}
