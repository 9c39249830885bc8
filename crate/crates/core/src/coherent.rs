//! Exact unitary propagation of the tight-binding walk
//! `H_{n,m} = J (δ_{n,m+1} + δ_{n,m-1})`.
//!
//! `exp(-iHt)` is translation invariant on the infinite lattice, with column
//! entries `(-i)^k J_k(2Jt)`. Propagating over an interval is therefore a
//! discrete convolution with a short Bessel kernel, exact up to the dropped
//! taps, with no time-stepping error.

use std::ops::Range;

use num_complex::Complex64 as C64;

use crate::bessel::bessel_j_table;
use crate::error::{Error, Result};
use crate::lattice::{coherent_half_extent, AmplitudeField, Moments, ProbabilityField, TruncationMonitor};

pub const DEFAULT_TAP_TOL: f64 = 1e-14;

/// Convolution kernel of `exp(-iH dt)`.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitaryKernel {
    hopping: f64,
    dt: f64,
    cutoff: usize,
    /// Taps for `k = -cutoff ..= cutoff`.
    taps: Vec<C64>,
}

/// `(-i)^k` for integer `k`.
fn minus_i_pow(k: i64) -> C64 {
    match k.rem_euclid(4) {
        0 => C64::new(1.0, 0.0),
        1 => C64::new(0.0, -1.0),
        2 => C64::new(-1.0, 0.0),
        _ => C64::new(0.0, 1.0),
    }
}

impl UnitaryKernel {
    /// Builds the kernel, keeping every tap up to the last order with
    /// `|J_k(2J dt)| ≥ tol`.
    pub fn new(hopping: f64, dt: f64, tol: f64) -> Result<Self> {
        if !(hopping >= 0.0 && hopping.is_finite()) {
            return Err(Error::InvalidParameter(format!("hopping rate must be ≥ 0, got {hopping}")));
        }
        if !(dt >= 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("propagation interval must be ≥ 0, got {dt}")));
        }
        if !(tol > 0.0 && tol <= 1e-8) {
            return Err(Error::InvalidParameter(format!("tap tolerance must lie in (0, 1e-8], got {tol}")));
        }
        let x = 2.0 * hopping * dt;
        // orders beyond x + 12 x^{1/3} + 40 are far below any admissible tol
        let max_order = (x + 12.0 * x.cbrt() + 40.0).ceil() as usize;
        let table = bessel_j_table(x, max_order)?;
        let cutoff = table.iter().rposition(|v| v.abs() >= tol).unwrap_or(0);
        let taps = (-(cutoff as i64)..=cutoff as i64)
            .map(|k| {
                let j = table[k.unsigned_abs() as usize];
                let jk = if k < 0 && k % 2 != 0 { -j } else { j };
                minus_i_pow(k) * jk
            })
            .collect::<Vec<_>>();
        let kernel = UnitaryKernel { hopping, dt, cutoff, taps };
        let residual = kernel.tap_norm_sqr() - 1.0;
        if residual.abs() > 1e-12 {
            return Err(Error::BesselNonConvergent { x, residual });
        }
        Ok(kernel)
    }

    pub fn with_default_tol(hopping: f64, dt: f64) -> Result<Self> {
        Self::new(hopping, dt, DEFAULT_TAP_TOL)
    }

    pub fn hopping(&self) -> f64 {
        self.hopping
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// Tap `K_k`, zero beyond the cutoff.
    pub fn tap(&self, k: i64) -> C64 {
        if k.unsigned_abs() as usize > self.cutoff {
            return C64::new(0.0, 0.0);
        }
        self.taps[(k + self.cutoff as i64) as usize]
    }

    pub fn taps(&self) -> &[C64] {
        &self.taps
    }

    pub fn tap_norm_sqr(&self) -> f64 {
        self.taps.iter().map(|t| t.norm_sqr()).sum()
    }

    /// `ψ'_n = Σ_k K_k ψ_{n-k}` on the same stored range. Amplitude that
    /// would leave the range is dropped (hard wall).
    pub fn propagate(&self, psi: &AmplitudeField) -> AmplitudeField {
        let mut out = AmplitudeField::from_values(psi.offset(), vec![C64::new(0.0, 0.0); psi.len()]);
        self.propagate_into(psi.values(), out.values_mut(), 0..psi.len());
        out
    }

    /// Convolves `src` into `dst` (same length) given that `src` is zero
    /// everywhere outside `support`. Only `dst[returned range]` is written;
    /// the rest of `dst` is left untouched and must already be zero.
    ///
    /// Mirror taps are paired as `K_k (ψ_{j-k} + ψ_{j+k})`, so a
    /// mirror-symmetric input stays bitwise symmetric.
    pub fn propagate_into(&self, src: &[C64], dst: &mut [C64], support: Range<usize>) -> Range<usize> {
        debug_assert_eq!(src.len(), dst.len());
        let len = src.len();
        let c = self.cutoff;
        let lo = support.start.saturating_sub(c);
        let hi = (support.end + c).min(len);
        let zero = C64::new(0.0, 0.0);
        let side = &self.taps[c..];
        for (j, d) in dst[lo..hi].iter_mut().enumerate().map(|(i, d)| (i + lo, d)) {
            let mut acc = side[0] * src[j];
            for (k, tap) in side.iter().enumerate().skip(1) {
                let left = if j >= k { src[j - k] } else { zero };
                let right = if j + k < len { src[j + k] } else { zero };
                acc += tap * (left + right);
            }
            *d = acc;
        }
        lo..hi
    }
}

/// `P_n(t) = J_n(2Jt)²`, the coherent profile from a single-site start.
pub fn analytic_coherent_probability(n: i64, hopping: f64, t: f64) -> f64 {
    let order = n.unsigned_abs() as usize;
    let table = bessel_j_table(2.0 * hopping * t, order).expect("finite non-negative argument");
    table[order].powi(2)
}

/// The closed-form coherent profile on `[-half_extent, half_extent]`.
pub fn coherent_profile(hopping: f64, t: f64, half_extent: usize) -> ProbabilityField {
    let table = bessel_j_table(2.0 * hopping * t, half_extent).expect("finite non-negative argument");
    let values =
        (-(half_extent as i64)..=half_extent as i64).map(|n| table[n.unsigned_abs() as usize].powi(2)).collect();
    ProbabilityField::from_values(-(half_extent as i64), values)
}

/// Moments of a coherent walk sampled every `dt` up to `t_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoherentRun {
    pub times: Vec<f64>,
    pub moments: Vec<Moments>,
    pub final_field: AmplitudeField,
    pub monitor: TruncationMonitor,
}

/// Propagates `δ_{n,0}` stride by stride on a lattice sized from the light
/// cone. Check `monitor.is_flagged()` before trusting the moments.
pub fn run_coherent(hopping: f64, dt: f64, t_max: f64) -> Result<CoherentRun> {
    if dt.is_nan() || dt <= 0.0 || t_max.is_nan() || t_max < dt {
        return Err(Error::InvalidParameter(format!("need 0 < dt ≤ t_max, got dt={dt}, t_max={t_max}")));
    }
    let kernel = UnitaryKernel::with_default_tol(hopping, dt)?;
    let steps = (t_max / dt).round() as usize;
    let half = coherent_half_extent(hopping, steps as f64 * dt);
    let mut psi = AmplitudeField::delta(half);
    let mut scratch = psi.clone();
    let mut support = half..half + 1;
    let mut monitor = TruncationMonitor::default();
    let mut times = Vec::with_capacity(steps);
    let mut moments = Vec::with_capacity(steps);
    for step in 1..=steps {
        support = kernel.propagate_into(psi.values(), scratch.values_mut(), support);
        std::mem::swap(&mut psi, &mut scratch);
        monitor.observe_amplitudes(psi.values());
        times.push(step as f64 * dt);
        moments.push(psi.moments());
    }
    Ok(CoherentRun { times, moments, final_field: psi, monitor })
}
