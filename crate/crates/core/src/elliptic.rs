//! Incomplete elliptic integrals of the first and third kind in Jacobi's
//! form, with parameter `m` (not modulus) and upper limit `z = sin φ`:
//!
//! ```text
//! F(z, m)    = ∫₀ᶻ dx / √((1 − x²)(1 − m x²))
//! Π(n, z, m) = ∫₀ᶻ dx / ((1 − n x²) √((1 − x²)(1 − m x²)))
//! ```
//!
//! Both are evaluated through Carlson's symmetric forms R_F and R_J, reduced
//! by the duplication theorem until the truncated Taylor series is below the
//! requested relative error.

use crate::error::{Error, Result};

/// Relative truncation error targeted by each symmetric-form evaluation.
pub const KERNEL_RTOL: f64 = 1e-15;

/// Calls with `|1 − n z²|` below this are rejected instead of evaluated.
pub const POLE_GUARD: f64 = 1e-10;

/// Carlson's R_F(x, y, z) for non-negative arguments with at most one zero.
pub fn carlson_rf(x: f64, y: f64, z: f64) -> f64 {
    debug_assert!(x >= 0.0 && y >= 0.0 && z >= 0.0);
    let a0 = (x + y + z) / 3.0;
    let q = (3.0 * KERNEL_RTOL).powf(-1.0 / 6.0)
        * (a0 - x).abs().max((a0 - y).abs()).max((a0 - z).abs());
    let (mut xn, mut yn, mut zn, mut an) = (x, y, z, a0);
    let mut pow4 = 1.0;
    while pow4 * q >= an.abs() {
        let (sx, sy, sz) = (xn.sqrt(), yn.sqrt(), zn.sqrt());
        let lambda = sx * sy + sx * sz + sy * sz;
        xn = 0.25 * (xn + lambda);
        yn = 0.25 * (yn + lambda);
        zn = 0.25 * (zn + lambda);
        an = 0.25 * (an + lambda);
        pow4 *= 0.25;
    }
    let dx = (a0 - x) * pow4 / an;
    let dy = (a0 - y) * pow4 / an;
    let dz = -(dx + dy);
    let e2 = dx * dy - dz * dz;
    let e3 = dx * dy * dz;
    (1.0 - e2 / 10.0 + e3 / 14.0 + e2 * e2 / 24.0 - 3.0 * e2 * e3 / 44.0) / an.sqrt()
}

/// R_C(1, 1 + e) for e > −1.
fn carlson_rc_unit(e: f64) -> f64 {
    if e.abs() < 1e-4 {
        1.0 - e / 3.0 + e * e / 5.0 - e * e * e / 7.0 + e * e * e * e / 9.0
    } else if e > 0.0 {
        let s = e.sqrt();
        s.atan() / s
    } else {
        let s = (-e).sqrt();
        s.atanh() / s
    }
}

/// Carlson's R_J(x, y, z, p) for non-negative x, y, z (at most one zero) and
/// p > 0.
pub fn carlson_rj(x: f64, y: f64, z: f64, p: f64) -> f64 {
    debug_assert!(x >= 0.0 && y >= 0.0 && z >= 0.0 && p > 0.0);
    let a0 = (x + y + z + 2.0 * p) / 5.0;
    let delta = (p - x) * (p - y) * (p - z);
    let q = (0.25 * KERNEL_RTOL).powf(-1.0 / 6.0)
        * (a0 - x)
            .abs()
            .max((a0 - y).abs())
            .max((a0 - z).abs())
            .max((a0 - p).abs());
    let (mut xn, mut yn, mut zn, mut pn, mut an) = (x, y, z, p, a0);
    let mut pow4 = 1.0;
    let mut tail = 0.0;
    while pow4 * q >= an.abs() {
        let (sx, sy, sz, sp) = (xn.sqrt(), yn.sqrt(), zn.sqrt(), pn.sqrt());
        let lambda = sx * sy + sx * sz + sy * sz;
        let d = (sp + sx) * (sp + sy) * (sp + sz);
        let e = pow4 * pow4 * pow4 * delta / (d * d);
        tail += pow4 * carlson_rc_unit(e) / d;
        xn = 0.25 * (xn + lambda);
        yn = 0.25 * (yn + lambda);
        zn = 0.25 * (zn + lambda);
        pn = 0.25 * (pn + lambda);
        an = 0.25 * (an + lambda);
        pow4 *= 0.25;
    }
    let dx = (a0 - x) * pow4 / an;
    let dy = (a0 - y) * pow4 / an;
    let dz = (a0 - z) * pow4 / an;
    let dp = -0.5 * (dx + dy + dz);
    let e2 = dx * dy + dx * dz + dy * dz - 3.0 * dp * dp;
    let e3 = dx * dy * dz + 2.0 * e2 * dp + 4.0 * dp * dp * dp;
    let e4 = (2.0 * dx * dy * dz + e2 * dp + 3.0 * dp * dp * dp) * dp;
    let e5 = dx * dy * dz * dp * dp;
    let series = 1.0 - 3.0 * e2 / 14.0 + e3 / 6.0 + 9.0 * e2 * e2 / 88.0 - 3.0 * e4 / 22.0
        - 9.0 * e2 * e3 / 52.0
        + 3.0 * e5 / 26.0;
    pow4 * series / (an * an.sqrt()) + 6.0 * tail
}

/// Validated arguments of an incomplete integral with the complements
/// `1 − z²` and `1 − m z²` already formed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticArgs {
    pub z: f64,
    pub m: f64,
    pub one_minus_z2: f64,
    pub one_minus_mz2: f64,
}

impl EllipticArgs {
    pub fn new(z: f64, m: f64) -> Result<Self> {
        Self::with_complements(z, m, 1.0 - z * z, 1.0 - m * z * z)
    }

    /// Callers that know the complements in a cancellation-free form pass
    /// them here; they must be consistent with `z` and `m`.
    pub fn with_complements(z: f64, m: f64, one_minus_z2: f64, one_minus_mz2: f64) -> Result<Self> {
        if !(z.is_finite() && m.is_finite()) {
            return Err(Error::domain(format!("non-finite elliptic argument z={z}, m={m}")));
        }
        if !(0.0..=1.0).contains(&z) {
            return Err(Error::domain(format!("upper limit z={z} outside [0, 1]")));
        }
        if one_minus_mz2 <= 0.0 {
            return Err(Error::domain(format!("m z^2 = {} must be < 1", m * z * z)));
        }
        Ok(Self { z, m, one_minus_z2: one_minus_z2.max(0.0), one_minus_mz2 })
    }

    fn rf(&self) -> f64 {
        carlson_rf(self.one_minus_z2, self.one_minus_mz2, 1.0)
    }
}

/// Incomplete elliptic integral of the first kind, `F(z, m)`.
pub fn ellip_f(z: f64, m: f64) -> Result<f64> {
    Ok(ellip_f_args(&EllipticArgs::new(z, m)?))
}

pub fn ellip_f_args(args: &EllipticArgs) -> f64 {
    if args.z == 0.0 {
        return 0.0;
    }
    args.z * args.rf()
}

/// Incomplete elliptic integral of the third kind, `Π(n, z, m)`. Negative
/// characteristics are accepted; for `n > 0` the pole `n x² = 1` must lie
/// beyond the integration range.
pub fn ellip_pi(n: f64, z: f64, m: f64) -> Result<f64> {
    let args = EllipticArgs::new(z, m)?;
    ellip_pi_args(n, &args, 1.0 - n * z * z)
}

/// `Π(n, z, m)` with the characteristic complement `1 − n z²` supplied.
pub fn ellip_pi_args(n: f64, args: &EllipticArgs, one_minus_nz2: f64) -> Result<f64> {
    if !n.is_finite() {
        return Err(Error::domain(format!("non-finite characteristic n={n}")));
    }
    if args.z == 0.0 {
        return Ok(0.0);
    }
    if one_minus_nz2.abs() < POLE_GUARD || one_minus_nz2 < 0.0 {
        return Err(Error::Pole { gap: one_minus_nz2 });
    }
    let z = args.z;
    let rj = carlson_rj(args.one_minus_z2, args.one_minus_mz2, 1.0, one_minus_nz2);
    Ok(z * args.rf() + n / 3.0 * z * z * z * rj)
}
