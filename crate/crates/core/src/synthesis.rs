//! Time-optimal XY synthesis for expansion by a factor γ.
//!
//! The optimal path leaves `(1, 0)` on the X-arc `x2² − x1² + 2/x1 = 1`,
//! switches once at `x1 = β`, and reaches `(γ, 0)` on the Y-arc
//! `x2² + x1² + 2/x1 = γ² + 2/γ`. The two transit times are evaluated in
//! closed form through incomplete elliptic integrals and, independently, by
//! quadrature of their defining integrals.

use std::f64::consts::{FRAC_PI_4, SQRT_2};
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::dynamics::{BangBangSchedule, Segment, U_X, U_Y};
use crate::elliptic::{ellip_f_args, ellip_pi_args, EllipticArgs};
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::quadrature::integrate;

/// Below this `γ − 1` the closed form loses digits to cancellation and the
/// quadrature route is used instead.
pub const DEGENERATE_GAMMA_GAP: f64 = 1e-6;

/// Absolute tolerance of the quadrature oracles.
pub const QUADRATURE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    Quadrature,
}

/// Constants of the elliptic reduction, kept for inspection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipticChainConstants {
    // X-arc: Möbius map y = (x1 − b)/(x1 − a) and its companions.
    pub a: f64,
    pub b: f64,
    #[serde(rename = "B1")]
    pub b1: f64,
    #[serde(rename = "B2")]
    pub b2: f64,
    pub p2: f64,
    pub q2: f64,
    pub m: f64,
    pub n: f64,
    pub c: f64,
    pub d: f64,
    pub y_upper: f64,
    pub z_upper: f64,
    pub w_upper: f64,
    pub i1: f64,
    pub i2: f64,
    // Y-arc: cubic roots −ε < 0 < ζ and the reduced elliptic arguments.
    pub epsilon: f64,
    pub zeta: f64,
    pub mu: f64,
    pub nu: f64,
    pub x_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisResult {
    pub gamma: f64,
    /// `x1` at the X→Y switch.
    pub beta: f64,
    /// `x2` at the X→Y switch.
    pub x2_at_switch: f64,
    #[serde(rename = "T1")]
    pub t1: f64,
    #[serde(rename = "T2")]
    pub t2: f64,
    #[serde(rename = "T")]
    pub total: f64,
    pub method: Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chain: Option<EllipticChainConstants>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Synthesis {
    pub result: SynthesisResult,
    pub schedule: BangBangSchedule,
}

fn check_gamma_open(gamma: f64) -> Result<()> {
    if gamma > 1.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("gamma = {gamma} must be finite and > 1")))
    }
}

fn check_gamma_closed(gamma: f64) -> Result<()> {
    if gamma >= 1.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("gamma = {gamma} must be finite and >= 1")))
    }
}

/// `x1` of the X→Y switch, `√((γ³ − γ + 2)/(2γ))`.
pub fn switching_point(gamma: f64) -> Result<f64> {
    check_gamma_closed(gamma)?;
    Ok(((gamma * gamma * gamma - gamma + 2.0) / (2.0 * gamma)).sqrt())
}

/// `β − 1` without cancellation: `β² − 1 = (γ − 1)²(γ + 2)/(2γ)`.
fn beta_minus_one(gamma: f64, beta: f64) -> f64 {
    let g1 = gamma - 1.0;
    g1 * g1 * (gamma + 2.0) / (2.0 * gamma) / (beta + 1.0)
}

/// `γ − β` without cancellation: `γ² − β² = (γ − 1)(γ² + γ + 2)/(2γ)`.
fn gamma_minus_beta(gamma: f64, beta: f64) -> f64 {
    (gamma - 1.0) * (gamma * gamma + gamma + 2.0) / (2.0 * gamma) / (gamma + beta)
}

/// `x2` at the switch, from the X-arc integral in factored form.
pub fn switch_velocity(gamma: f64) -> Result<f64> {
    let beta = switching_point(gamma)?;
    let bm1 = beta_minus_one(gamma, beta);
    Ok((bm1 * (beta * beta + beta + 2.0) / beta).sqrt())
}

struct XArcChain {
    a: f64,
    b: f64,
    b1: f64,
    b2: f64,
    p2: f64,
    q2: f64,
    q: f64,
    m: f64,
    n: f64,
    c: f64,
    d: f64,
}

impl XArcChain {
    fn new() -> Self {
        // −(√2 − 1)/(3 − 2√2) = −(√2 + 1) and (1 + √2)/(3 + 2√2) = √2 − 1;
        // likewise (3 − 2√2)/(3 + 2√2) = (√2 − 1)⁴. The reduced forms avoid
        // the cancellation in 3 − 2√2.
        let r2 = SQRT_2;
        let a = -(r2 + 1.0);
        let b = r2 - 1.0;
        let b1 = (1.0 + 2.0 * r2) / (4.0 * r2);
        let b2 = (3.0 + 2.0 * r2) / (4.0 * r2);
        let p2 = (2.0 * r2 - 1.0) / (2.0 * r2 + 1.0);
        let q2 = (b * b) * (b * b);
        let m = p2 / (p2 + q2);
        let n = 1.0 / (1.0 - q2);
        let c = (1.0 + p2) * (1.0 - q2);
        let d = 2.0 + p2 - q2;
        Self { a, b, b1, b2, p2, q2, q: b * b, m, n, c, d }
    }
}

/// Möbius image of the lower limit `x1 = 1`; must equal `q`.
pub fn chain_lower_limit_image() -> (f64, f64) {
    let ch = XArcChain::new();
    ((1.0 - ch.b) / (1.0 - ch.a), ch.q)
}

/// Product of the Möbius parameters `a·b` (exactly −1).
pub fn chain_ab_product() -> f64 {
    let ch = XArcChain::new();
    ch.a * ch.b
}

struct X1Parts {
    t1: f64,
    y: f64,
    z: f64,
    w: f64,
    i1: f64,
    i2: f64,
}

fn t1_chain(gamma: f64) -> Result<(X1Parts, XArcChain)> {
    let ch = XArcChain::new();
    let (y_lo, q) = ((1.0 - ch.b) / (1.0 - ch.a), ch.q);
    if (y_lo - q).abs() > 1e-12 {
        return Err(Error::Consistency(format!("Möbius image of x1 = 1 is {y_lo}, expected q = {q}")));
    }
    let beta = switching_point(gamma)?;
    let bm1 = beta_minus_one(gamma, beta);
    let (a, b, q2) = (ch.a, ch.b, ch.q2);

    let y = (beta - b) / (beta - a);
    let one_minus_y = (b - a) / (beta - a);
    let one_minus_y2 = one_minus_y * (1.0 + y);
    // y − q = (b − a)(β − 1)/((β − a)(1 − a)).
    let y_minus_q = (b - a) * bm1 / ((beta - a) * (1.0 - a));
    let y2_minus_q2 = y_minus_q * (y + q);

    let z2 = y2_minus_q2 / (y * y);
    let z = z2.sqrt();
    let one_minus_z2 = q2 / (y * y);
    let one_minus_mz2 = 1.0 - ch.m * z2;
    let one_minus_nz2 = q2 * one_minus_y2 / (y * y * (1.0 - q2));
    let args = EllipticArgs::with_complements(z, ch.m, one_minus_z2, one_minus_mz2)?;
    let f = ellip_f_args(&args);
    let pi = ellip_pi_args(ch.n, &args, one_minus_nz2)?;
    let i1 = (b * f + (b - a) * q2 / (1.0 - q2) * pi) / (ch.p2 + q2).sqrt();

    // w − 1 = 2(1 + p²)(y² − q²)/((1 − y²)(p² + q²)); ln(w + √(w² − 1)) = acosh w.
    let w_minus_1 = 2.0 * (1.0 + ch.p2) * y2_minus_q2 / (one_minus_y2 * (ch.p2 + q2));
    let w = 1.0 + w_minus_1;
    let acosh_w = (w_minus_1 + (w_minus_1 * (w_minus_1 + 2.0)).sqrt()).ln_1p();
    let i2 = acosh_w / (2.0 * ch.c.sqrt());

    let t1 = (i1 / (b - a) + i2) / (ch.b1 * ch.b2).sqrt();
    Ok((X1Parts { t1, y, z, w, i1, i2 }, ch))
}

/// Time on the X-arc, closed form.
pub fn t1_closed_form(gamma: f64) -> Result<f64> {
    check_gamma_open(gamma)?;
    Ok(t1_chain(gamma)?.0.t1)
}

struct Y2Parts {
    t2: f64,
    epsilon: f64,
    zeta: f64,
    mu: f64,
    nu: f64,
    x: f64,
}

fn t2_chain(gamma: f64) -> Result<Y2Parts> {
    let beta = switching_point(gamma)?;
    let gmb = gamma_minus_beta(gamma, beta);
    // x1² + γx1 − 2/γ = (x1 + ε)(x1 − ζ); ε + ζ = s.
    let s = (gamma * gamma + 8.0 / gamma).sqrt();
    let epsilon = 0.5 * (gamma + s);
    let zeta = 4.0 / (gamma * (gamma + s));
    // γ − ζ = 4(γ³ − 1)/(γ(3γ + s)).
    let g_minus_zeta = 4.0 * (gamma - 1.0) * (gamma * gamma + gamma + 1.0) / (gamma * (3.0 * gamma + s));
    let mu = epsilon * g_minus_zeta / (gamma * s);
    let nu = -g_minus_zeta / s;
    let x2 = s * gmb / (g_minus_zeta * (beta + epsilon));
    let x = x2.sqrt();
    // Exact complements: 1 − x² = (β − ζ)(γ + ε)/((γ − ζ)(β + ε)),
    // 1 − μx² = β(γ + ε)/(γ(β + ε)), 1 − νx² = (γ + ε)/(β + ε).
    let beta_minus_zeta = g_minus_zeta - gmb;
    let one_minus_x2 = beta_minus_zeta * (gamma + epsilon) / (g_minus_zeta * (beta + epsilon));
    let one_minus_mux2 = beta * (gamma + epsilon) / (gamma * (beta + epsilon));
    let one_minus_nux2 = (gamma + epsilon) / (beta + epsilon);
    let args = EllipticArgs::with_complements(x, mu, one_minus_x2, one_minus_mux2)?;
    let f = ellip_f_args(&args);
    let pi = ellip_pi_args(nu, &args, one_minus_nux2)?;
    let t2 = 2.0 / (gamma * s).sqrt() * ((gamma + epsilon) * pi - epsilon * f);
    Ok(Y2Parts { t2, epsilon, zeta, mu, nu, x })
}

/// Time on the Y-arc, closed form.
pub fn t2_closed_form(gamma: f64) -> Result<f64> {
    check_gamma_open(gamma)?;
    Ok(t2_chain(gamma)?.t2)
}

/// Time on the X-arc by quadrature of `√(x/((x − 1)(x² + x + 2)))` over
/// `[1, β]`, with `x = 1 + s²` removing the endpoint singularity.
pub fn t1_quadrature(gamma: f64) -> Result<f64> {
    check_gamma_open(gamma)?;
    let beta = switching_point(gamma)?;
    let upper = beta_minus_one(gamma, beta).sqrt();
    let est = integrate(
        |s| {
            let x = 1.0 + s * s;
            2.0 * (x / (x * x + x + 2.0)).sqrt()
        },
        0.0,
        upper,
        QUADRATURE_TOL,
        0.0,
    )?;
    Ok(est.value)
}

/// Time on the Y-arc by quadrature of `√(x/((γ − x)(x² + γx − 2/γ)))` over
/// `[β, γ]`, with `x = γ − s²`.
pub fn t2_quadrature(gamma: f64) -> Result<f64> {
    check_gamma_open(gamma)?;
    let beta = switching_point(gamma)?;
    let upper = gamma_minus_beta(gamma, beta).sqrt();
    let s_root = (gamma * gamma + 8.0 / gamma).sqrt();
    let epsilon = 0.5 * (gamma + s_root);
    let g_minus_zeta = 4.0 * (gamma - 1.0) * (gamma * gamma + gamma + 1.0) / (gamma * (3.0 * gamma + s_root));
    let est = integrate(
        |s| {
            let s2 = s * s;
            let x = gamma - s2;
            2.0 * (x / ((x + epsilon) * (g_minus_zeta - s2))).sqrt()
        },
        0.0,
        upper,
        QUADRATURE_TOL,
        0.0,
    )?;
    Ok(est.value)
}

/// Leading large-γ model `ln γ + π/4`.
pub fn asymptotic_time(gamma: f64) -> f64 {
    gamma.ln() + FRAC_PI_4
}

/// Time-optimal XY schedule for expansion by `gamma`.
pub fn solve(gamma: f64) -> Result<Synthesis> {
    check_gamma_closed(gamma)?;
    if gamma == 1.0 {
        return Ok(Synthesis {
            result: SynthesisResult {
                gamma,
                beta: 1.0,
                x2_at_switch: 0.0,
                t1: 0.0,
                t2: 0.0,
                total: 0.0,
                method: Method::ClosedForm,
                chain: None,
            },
            schedule: BangBangSchedule::for_expansion(1.0, Vec::new())?,
        });
    }
    let beta = switching_point(gamma)?;
    let x2_at_switch = switch_velocity(gamma)?;
    let (t1, t2, method, chain) = if gamma - 1.0 < DEGENERATE_GAMMA_GAP {
        (t1_quadrature(gamma)?, t2_quadrature(gamma)?, Method::Quadrature, None)
    } else {
        let (x, ch) = t1_chain(gamma)?;
        let y = t2_chain(gamma)?;
        let consts = EllipticChainConstants {
            a: ch.a,
            b: ch.b,
            b1: ch.b1,
            b2: ch.b2,
            p2: ch.p2,
            q2: ch.q2,
            m: ch.m,
            n: ch.n,
            c: ch.c,
            d: ch.d,
            y_upper: x.y,
            z_upper: x.z,
            w_upper: x.w,
            i1: x.i1,
            i2: x.i2,
            epsilon: y.epsilon,
            zeta: y.zeta,
            mu: y.mu,
            nu: y.nu,
            x_upper: y.x,
        };
        (x.t1, y.t2, Method::ClosedForm, Some(consts))
    };
    let schedule = BangBangSchedule::for_expansion(
        gamma,
        vec![Segment { u: U_X, duration: t1 }, Segment { u: U_Y, duration: t2 }],
    )?;
    Ok(Synthesis {
        result: SynthesisResult { gamma, beta, x2_at_switch, t1, t2, total: t1 + t2, method, chain },
        schedule,
    })
}

/// One row of a γ sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub gamma: f64,
    pub beta: f64,
    #[serde(rename = "T1")]
    pub t1: f64,
    #[serde(rename = "T2")]
    pub t2: f64,
    #[serde(rename = "T")]
    pub total: f64,
    #[serde(rename = "T_asymptotic")]
    pub asymptotic: f64,
}

/// `count` values from `lo` to `hi` inclusive, linearly or logarithmically
/// spaced.
pub fn gamma_grid(lo: f64, hi: f64, count: usize, log: bool) -> Result<Vec<f64>> {
    check_gamma_closed(lo)?;
    check_gamma_closed(hi)?;
    if hi < lo || count == 0 {
        return Err(Error::domain(format!("empty gamma range [{lo}, {hi}] with {count} points")));
    }
    if count == 1 || lo == hi {
        return Ok(vec![lo]);
    }
    let last = (count - 1) as f64;
    Ok((0..count)
        .map(|i| {
            if i == count - 1 {
                hi
            } else if log {
                (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / last).exp()
            } else {
                lo + (hi - lo) * i as f64 / last
            }
        })
        .collect())
}

/// Solves every γ independently; rows come back in input order.
pub fn sweep(gammas: &[f64], exec: Execution) -> Result<Vec<SweepRow>> {
    exec.map(gammas, |&g| {
        let r = solve(g)?.result;
        Ok(SweepRow {
            gamma: g,
            beta: r.beta,
            t1: r.t1,
            t2: r.t2,
            total: r.total,
            asymptotic: if g > 1.0 { asymptotic_time(g) } else { 0.0 },
        })
    })
    .into_iter()
    .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut w: W) -> io::Result<()> {
    writeln!(w, "gamma[1],beta[1],T1[1/omega0],T2[1/omega0],T[1/omega0],T_asymptotic[1/omega0]")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{},{}", r.gamma, r.beta, r.t1, r.t2, r.total, r.asymptotic)?;
    }
    Ok(())
}
