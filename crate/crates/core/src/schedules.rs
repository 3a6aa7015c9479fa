//! Smooth reference scale schedules `b(s)`, `s = t/T`, the trap control they
//! require, and the shortest duration for which that control stays within
//! `|u| ≤ bound`.
//!
//! For a scale function `b(t)` the reduced dynamics demand
//! `u(t) = 1/b³ − b̈/b`, so with `b̈ = b''(s)/T²` every sample of the control
//! is an affine function of `1/T²`.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::Execution;

/// Grid density used for the first feasibility pass.
pub const DEFAULT_GRID: usize = 4096;
/// Relative change between grid doublings accepted as converged.
pub const GRID_RTOL: f64 = 1e-6;
/// Longest duration searched before declaring a bound infeasible.
pub const DEFAULT_DURATION_CAP: f64 = 1e6;

/// `b` and its first two derivatives with respect to `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleDerivatives {
    pub b: f64,
    pub db: f64,
    pub d2b: f64,
}

fn check_unit(s: f64) -> Result<()> {
    if (0.0..=1.0).contains(&s) {
        Ok(())
    } else {
        Err(Error::domain(format!("s = {s} outside [0, 1]")))
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 1.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("gamma = {gamma} must be finite and > 1")))
    }
}

/// Smoothstep `6s⁵ − 15s⁴ + 10s³` and its derivatives.
fn smoothstep(s: f64) -> (f64, f64, f64) {
    let s2 = s * s;
    let p = s2 * s * (10.0 + s * (6.0 * s - 15.0));
    let dp = 30.0 * s2 * (s - 1.0) * (s - 1.0);
    let d2p = 60.0 * s * (s - 1.0) * (2.0 * s - 1.0);
    (p, dp, d2p)
}

/// `b_p(s) = (γ − 1)(6s⁵ − 15s⁴ + 10s³) + 1`.
pub fn eval_polynomial(s: f64, gamma: f64) -> Result<ScaleDerivatives> {
    check_unit(s)?;
    check_gamma(gamma)?;
    let (p, dp, d2p) = smoothstep(s);
    let g1 = gamma - 1.0;
    Ok(ScaleDerivatives { b: g1 * p + 1.0, db: g1 * dp, d2b: g1 * d2p })
}

/// `b_e(s) = γ^(6s⁵ − 15s⁴ + 10s³)`.
pub fn eval_exponential(s: f64, gamma: f64) -> Result<ScaleDerivatives> {
    check_unit(s)?;
    check_gamma(gamma)?;
    let (p, dp, d2p) = smoothstep(s);
    let lg = gamma.ln();
    let b = (p * lg).exp();
    Ok(ScaleDerivatives { b, db: lg * dp * b, d2b: b * (lg * d2p + (lg * dp).powi(2)) })
}

/// Clamped cubic spline (`b'(0) = b'(1) = 0`) through user samples of `b(s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedShape {
    s: Vec<f64>,
    b: Vec<f64>,
    // Second derivatives at the knots.
    m: Vec<f64>,
}

impl TabulatedShape {
    /// Knots must start at `s = 0` with `b = 1`, end at `s = 1`, and increase
    /// strictly. The spline is rejected if `b'(s) < 0` anywhere on a fine grid
    /// (the expansion must be monotone).
    pub fn new(s: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let n = s.len();
        if n < 3 || b.len() != n {
            return Err(Error::domain("tabulated schedule needs >= 3 matching (s, b) samples"));
        }
        if s[0] != 0.0 || s[n - 1] != 1.0 || s.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("tabulated s must increase strictly from 0 to 1"));
        }
        if (b[0] - 1.0).abs() > 1e-12 {
            return Err(Error::domain(format!("tabulated b(0) = {} must be 1", b[0])));
        }
        if !(b[n - 1] > 1.0) || b.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::domain("tabulated b must be positive and end above 1"));
        }
        // Tridiagonal system for knot curvatures with zero end slopes.
        let h: Vec<f64> = s.windows(2).map(|w| w[1] - w[0]).collect();
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        diag[0] = h[0] / 3.0;
        upper[0] = h[0] / 6.0;
        rhs[0] = (b[1] - b[0]) / h[0];
        for i in 1..n - 1 {
            diag[i] = (h[i - 1] + h[i]) / 3.0;
            upper[i] = h[i] / 6.0;
            rhs[i] = (b[i + 1] - b[i]) / h[i] - (b[i] - b[i - 1]) / h[i - 1];
        }
        diag[n - 1] = h[n - 2] / 3.0;
        rhs[n - 1] = -(b[n - 1] - b[n - 2]) / h[n - 2];
        // Thomas algorithm; the matrix is symmetric with lower = upper shifted.
        for i in 1..n {
            let w = upper[i - 1] / diag[i - 1];
            diag[i] -= w * upper[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        let mut m = vec![0.0; n];
        m[n - 1] = rhs[n - 1] / diag[n - 1];
        for i in (0..n - 1).rev() {
            m[i] = (rhs[i] - upper[i] * m[i + 1]) / diag[i];
        }
        let shape = Self { s, b, m };
        for i in 0..=10_000 {
            let d = shape.eval(i as f64 / 10_000.0);
            if d.db < -1e-12 {
                return Err(Error::domain(format!(
                    "tabulated schedule contracts (b' = {:e} at s = {}); x2 >= 0 is required",
                    d.db,
                    i as f64 / 10_000.0
                )));
            }
        }
        Ok(shape)
    }

    pub fn gamma(&self) -> f64 {
        *self.b.last().expect("validated non-empty")
    }

    fn eval(&self, s: f64) -> ScaleDerivatives {
        let i = match self.s.binary_search_by(|k| k.total_cmp(&s)) {
            Ok(i) => i.min(self.s.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.s.len() - 2),
        };
        let h = self.s[i + 1] - self.s[i];
        let a = (self.s[i + 1] - s) / h;
        let c = (s - self.s[i]) / h;
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        let b = a * self.b[i] + c * self.b[i + 1] + ((a * a * a - a) * m0 + (c * c * c - c) * m1) * h * h / 6.0;
        let db = (self.b[i + 1] - self.b[i]) / h - (3.0 * a * a - 1.0) * h * m0 / 6.0
            + (3.0 * c * c - 1.0) * h * m1 / 6.0;
        let d2b = a * m0 + c * m1;
        ScaleDerivatives { b, db, d2b }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScaleShape {
    Polynomial { gamma: f64 },
    ExponentialPolynomial { gamma: f64 },
    UserTabulated(TabulatedShape),
}

impl ScaleShape {
    pub fn gamma(&self) -> f64 {
        match self {
            ScaleShape::Polynomial { gamma } | ScaleShape::ExponentialPolynomial { gamma } => *gamma,
            ScaleShape::UserTabulated(t) => t.gamma(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScaleShape::Polynomial { .. } => "polynomial",
            ScaleShape::ExponentialPolynomial { .. } => "exponential_polynomial",
            ScaleShape::UserTabulated(_) => "user_tabulated",
        }
    }

    pub fn eval(&self, s: f64) -> Result<ScaleDerivatives> {
        match self {
            ScaleShape::Polynomial { gamma } => eval_polynomial(s, *gamma),
            ScaleShape::ExponentialPolynomial { gamma } => eval_exponential(s, *gamma),
            ScaleShape::UserTabulated(t) => {
                check_unit(s)?;
                Ok(t.eval(s))
            }
        }
    }
}

/// A shape traversed in a fixed (scaled) duration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleSchedule {
    pub shape: ScaleShape,
    pub duration: f64,
}

/// `b`, `ḃ`, `b̈` in scaled time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleState {
    pub b: f64,
    pub b_dot: f64,
    pub b_ddot: f64,
}

impl ScaleSchedule {
    pub fn new(shape: ScaleShape, duration: f64) -> Result<Self> {
        if !(duration > 0.0) || !duration.is_finite() {
            return Err(Error::domain(format!("duration {duration} must be finite and > 0")));
        }
        check_gamma(shape.gamma())?;
        Ok(Self { shape, duration })
    }

    pub fn state_at(&self, t: f64) -> Result<ScaleState> {
        let d = self.shape.eval(t / self.duration)?;
        let inv = 1.0 / self.duration;
        Ok(ScaleState { b: d.b, b_dot: d.db * inv, b_ddot: d.d2b * inv * inv })
    }

    /// Trap control `u = 1/b³ − b̈/b` that makes `b(t)` an exact solution of
    /// the scale equation.
    pub fn control_at(&self, t: f64) -> Result<f64> {
        let st = self.state_at(t)?;
        if !(st.b > 0.0) {
            return Err(Error::domain(format!("scale factor b = {} is not positive at t = {t}", st.b)));
        }
        Ok(1.0 / (st.b * st.b * st.b) - st.b_ddot / st.b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledControl {
    pub t: Vec<f64>,
    pub b: Vec<f64>,
    pub u: Vec<f64>,
}

impl SampledControl {
    pub fn max_abs(&self) -> f64 {
        self.u.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t[1/omega0],b[1],u[1]")?;
        for i in 0..self.t.len() {
            writeln!(w, "{},{},{}", self.t[i], self.b[i], self.u[i])?;
        }
        Ok(())
    }
}

/// Samples the implied control on `intervals + 1` evenly spaced times
/// covering `[0, T]`.
pub fn reconstruct_control(schedule: &ScaleSchedule, intervals: usize) -> Result<SampledControl> {
    if intervals == 0 {
        return Err(Error::domain("need at least one sampling interval"));
    }
    let n = intervals + 1;
    let mut out = SampledControl { t: Vec::with_capacity(n), b: Vec::with_capacity(n), u: Vec::with_capacity(n) };
    for i in 0..n {
        // Hit t = T exactly.
        let t = if i == intervals { schedule.duration } else { schedule.duration * i as f64 / intervals as f64 };
        out.t.push(t);
        out.b.push(schedule.state_at(t)?.b);
        out.u.push(schedule.control_at(t)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DurationSearch {
    pub bound: f64,
    pub cap: f64,
    pub initial_grid: usize,
    pub grid_rtol: f64,
    pub max_grid: usize,
}

impl Default for DurationSearch {
    fn default() -> Self {
        Self {
            bound: 1.0,
            cap: DEFAULT_DURATION_CAP,
            initial_grid: DEFAULT_GRID,
            grid_rtol: GRID_RTOL,
            max_grid: 1 << 22,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibleDuration {
    pub duration: f64,
    /// `max |u|` over the final grid at `duration`.
    pub max_abs_u: f64,
    /// Time of the sample that fixes the duration, i.e. where `|u|` reaches
    /// the bound.
    pub binding_time: f64,
    pub grid_intervals: usize,
}

/// Per-sample affine form `u = offset − curvature / T²`.
struct ControlGrid {
    offset: Vec<f64>,
    curvature: Vec<f64>,
}

impl ControlGrid {
    fn build(shape: &ScaleShape, intervals: usize, exec: Execution) -> Result<Self> {
        let cells: Vec<Result<(f64, f64)>> = exec.map_range(intervals + 1, |i| {
            let s = if i == intervals { 1.0 } else { i as f64 / intervals as f64 };
            let d = shape.eval(s)?;
            if !(d.b > 0.0) {
                return Err(Error::domain(format!("scale factor b = {} is not positive at s = {s}", d.b)));
            }
            Ok((1.0 / (d.b * d.b * d.b), d.d2b / d.b))
        });
        let mut offset = Vec::with_capacity(cells.len());
        let mut curvature = Vec::with_capacity(cells.len());
        for c in cells {
            let (o, k) = c?;
            offset.push(o);
            curvature.push(k);
        }
        Ok(Self { offset, curvature })
    }

    fn peak(&self, duration: f64, exec: Execution) -> (usize, f64) {
        let inv2 = 1.0 / (duration * duration);
        exec.argmax(self.offset.len(), |i| (self.offset[i] - self.curvature[i] * inv2).abs())
            .expect("grid is non-empty")
    }

    /// Peak over the samples whose control depends on the duration.
    fn binding(&self, duration: f64, exec: Execution) -> Option<(usize, f64)> {
        let inv2 = 1.0 / (duration * duration);
        exec.argmax(self.offset.len(), |i| {
            if self.curvature[i] == 0.0 {
                f64::NEG_INFINITY
            } else {
                (self.offset[i] - self.curvature[i] * inv2).abs()
            }
        })
        .filter(|(_, v)| v.is_finite())
    }

    fn feasible(&self, duration: f64, bound: f64, exec: Execution) -> bool {
        self.peak(duration, exec).1 <= bound
    }

    /// Smallest feasible duration on this grid by bisection. Feasibility is
    /// monotone in T: each sample moves towards `1/b³ ∈ (0, 1]` as T grows.
    fn bisect(&self, search: &DurationSearch, exec: Execution) -> Result<f64> {
        if !self.feasible(search.cap, search.bound, exec) {
            return Err(Error::Infeasible(format!(
                "no duration up to {} keeps |u| <= {}",
                search.cap, search.bound
            )));
        }
        let mut hi = 1.0f64.min(search.cap);
        while !self.feasible(hi, search.bound, exec) {
            hi = (hi * 2.0).min(search.cap);
        }
        let mut lo = 0.0;
        // Bisect down to a relative width of ~1e-14.
        while hi - lo > 1e-14 * hi {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.feasible(mid, search.bound, exec) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }
}

/// Shortest duration for which the reference shape keeps `|u| ≤ bound`,
/// refining the sampling grid until a doubling moves the answer by less than
/// `grid_rtol` (relative).
pub fn minimal_feasible_duration(shape: &ScaleShape, search: &DurationSearch, exec: Execution) -> Result<FeasibleDuration> {
    if !(search.bound > 0.0) {
        return Err(Error::domain(format!("control bound {} must be positive", search.bound)));
    }
    check_gamma(shape.gamma())?;
    let mut intervals = search.initial_grid.max(2);
    let mut grid = ControlGrid::build(shape, intervals, exec)?;
    let mut duration = grid.bisect(search, exec)?;
    loop {
        if intervals * 2 > search.max_grid {
            return Err(Error::Convergence(format!(
                "feasible duration not converged at {intervals} grid intervals"
            )));
        }
        let finer = ControlGrid::build(shape, intervals * 2, exec)?;
        let refined = finer.bisect(search, exec)?;
        let change = (refined - duration).abs() / refined;
        intervals *= 2;
        duration = refined;
        grid = finer;
        if change < search.grid_rtol {
            break;
        }
    }
    let (idx, peak) = grid.peak(duration, exec);
    let idx = grid.binding(duration, exec).map_or(idx, |(i, _)| i);
    Ok(FeasibleDuration {
        duration,
        max_abs_u: peak,
        binding_time: duration * idx as f64 / intervals as f64,
        grid_intervals: intervals,
    })
}
