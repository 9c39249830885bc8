//! Integer-order Bessel functions of the first kind, `J_n(x)`, and the
//! exponentially scaled modified Bessel functions `I_n(x) e^{-x}`.
//!
//! Both are computed for a whole table of orders `0..=max_order` at once by
//! Miller's downward recurrence, normalized with the generating-function sums
//!
//! ```text
//! J_0(x) + 2 Σ_{k≥1} J_{2k}(x) = 1
//! I_0(x) + 2 Σ_{k≥1} I_k(x)    = e^x
//! ```
//!
//! The scaled form of `I_n` falls out of the second sum directly, so large
//! arguments never overflow.

use crate::error::{Error, Result};

const RESCALE_ABOVE: f64 = 1e250;
const RESCALE_BY: f64 = 1e-250;

/// First order at which the downward recurrence is started.
fn start_order(x: f64, max_order: usize, accuracy: f64) -> usize {
    let base = (max_order as f64).max(x.ceil()).max(1.0);
    let start = base + (accuracy * base).sqrt().ceil() + 20.0;
    // even start keeps the J normalization sum aligned with even orders
    let start = start as usize;
    start + (start & 1)
}

fn check_argument(x: f64) -> Result<()> {
    if !x.is_finite() || x < 0.0 {
        return Err(Error::InvalidParameter(format!("Bessel argument must be finite and non-negative, got {x}")));
    }
    Ok(())
}

/// `J_0(x) ..= J_{max_order}(x)` for `x ≥ 0`.
pub fn bessel_j_table(x: f64, max_order: usize) -> Result<Vec<f64>> {
    check_argument(x)?;
    let mut out = vec![0.0; max_order + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return Ok(out);
    }
    let start = start_order(x, max_order, 160.0);
    let mut f = vec![0.0f64; start + 2];
    f[start] = 1e-300;
    for k in (1..=start).rev() {
        f[k - 1] = (2.0 * k as f64 / x) * f[k] - f[k + 1];
        if f[k - 1].abs() > RESCALE_ABOVE {
            f[k - 1..].iter_mut().for_each(|v| *v *= RESCALE_BY);
        }
    }
    let norm = f[0] + 2.0 * f.iter().skip(2).step_by(2).sum::<f64>();
    if !norm.is_finite() || norm == 0.0 {
        return Err(Error::BesselNonConvergent { x, residual: f64::NAN });
    }
    for (o, v) in out.iter_mut().zip(&f) {
        *o = v / norm;
    }
    let all: Vec<f64> = f.iter().map(|v| v / norm).collect();
    let parseval = all[0] * all[0] + 2.0 * all[1..].iter().map(|v| v * v).sum::<f64>();
    if (parseval - 1.0).abs() > 1e-12 {
        return Err(Error::BesselNonConvergent { x, residual: parseval - 1.0 });
    }
    Ok(out)
}

/// `I_0(x) e^{-x} ..= I_{max_order}(x) e^{-x}` for `x ≥ 0`.
pub fn scaled_bessel_i_table(x: f64, max_order: usize) -> Result<Vec<f64>> {
    check_argument(x)?;
    let mut out = vec![0.0; max_order + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return Ok(out);
    }
    let start = start_order(x, max_order, 200.0);
    let mut f = vec![0.0f64; start + 2];
    f[start] = 1e-300;
    for k in (1..=start).rev() {
        f[k - 1] = (2.0 * k as f64 / x) * f[k] + f[k + 1];
        if f[k - 1] > RESCALE_ABOVE {
            f[k - 1..].iter_mut().for_each(|v| *v *= RESCALE_BY);
        }
    }
    let norm = f[0] + 2.0 * f[1..].iter().sum::<f64>();
    if !norm.is_finite() || norm == 0.0 {
        return Err(Error::BesselNonConvergent { x, residual: f64::NAN });
    }
    for (o, v) in out.iter_mut().zip(&f) {
        *o = v / norm;
    }
    Ok(out)
}

/// `J_n(x)` for any integer order, using `J_{-n} = (-1)^n J_n`.
pub fn bessel_j(n: i64, x: f64) -> Result<f64> {
    let order = n.unsigned_abs() as usize;
    let v = bessel_j_table(x, order)?[order];
    Ok(if n < 0 && order % 2 == 1 { -v } else { v })
}

/// `I_n(x) e^{-x}` for any integer order (`I_{-n} = I_n`).
pub fn scaled_bessel_i(n: i64, x: f64) -> Result<f64> {
    let order = n.unsigned_abs() as usize;
    Ok(scaled_bessel_i_table(x, order)?[order])
}
