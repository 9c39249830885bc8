//! The classical master equation of the strongly dephased walk,
//!
//! ```text
//! dP_n/dt = J_e (P_{n+1} + P_{n-1} - 2 P_n),   J_e = J² Δt,
//! ```
//!
//! integrated with fixed-step RK4, and its closed-form solution
//! `P_n(t) = I_n(2 J_e t) e^{-2 J_e t}` from a single occupied site.
//!
//! The truncated lattice uses reflecting ends (no hop across the wall), so
//! the discrete right-hand side sums to zero and probability is conserved.

use crate::bessel::scaled_bessel_i_table;
use crate::error::{Error, Result};
use crate::lattice::{diffusive_half_extent, ProbabilityField, TruncationMonitor};

/// Largest admissible `J_e · dt_ode`.
pub const MAX_STEP_1D: f64 = 0.1;

/// Renormalize after clamping only when the clamp moved the total by more
/// than this.
const CLAMP_DRIFT_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MasterConfig {
    pub hop_rate: f64,
    pub dt_ode: f64,
    pub t_max: f64,
}

impl MasterConfig {
    /// Config with the default step `0.05 / J_e`.
    pub fn new(hop_rate: f64, t_max: f64) -> Result<Self> {
        let dt_ode = if hop_rate > 0.0 { 0.05 / hop_rate } else { t_max.max(1.0) };
        Self::with_step(hop_rate, dt_ode, t_max)
    }

    pub fn with_step(hop_rate: f64, dt_ode: f64, t_max: f64) -> Result<Self> {
        if !(hop_rate >= 0.0 && hop_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!("hop rate must be ≥ 0, got {hop_rate}")));
        }
        if !(t_max >= 0.0 && t_max.is_finite()) {
            return Err(Error::InvalidParameter(format!("t_max must be ≥ 0, got {t_max}")));
        }
        check_step(hop_rate, dt_ode, MAX_STEP_1D)?;
        Ok(MasterConfig { hop_rate, dt_ode, t_max })
    }

    pub fn steps(&self) -> usize {
        (self.t_max / self.dt_ode - 1e-9).ceil().max(0.0) as usize
    }
}

pub(crate) fn check_step(hop_rate: f64, dt: f64, max_product: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("integrator step must be > 0, got {dt}")));
    }
    if hop_rate > 0.0 {
        let limit = max_product / hop_rate;
        if dt > limit * (1.0 + 1e-12) {
            return Err(Error::StepPolicy { dt, limit, hop_rate });
        }
    }
    Ok(())
}

/// Right-hand side of the master equation with reflecting ends.
pub fn master_rhs(p: &[f64], hop_rate: f64, out: &mut [f64]) {
    let len = p.len();
    for j in 0..len {
        let mut flow = 0.0;
        if j > 0 {
            flow += p[j - 1] - p[j];
        }
        if j + 1 < len {
            flow += p[j + 1] - p[j];
        }
        out[j] = hop_rate * flow;
    }
}

/// Reusable RK4 stage buffers.
#[derive(Clone, Debug, Default)]
pub struct Rk4Scratch {
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl Rk4Scratch {
    fn resize(&mut self, len: usize) {
        for v in self.k.iter_mut().chain(std::iter::once(&mut self.tmp)) {
            v.resize(len, 0.0);
        }
    }
}

/// One classical RK4 step of `dy/dt = f(y)` in place.
pub(crate) fn rk4_in_place(y: &mut [f64], dt: f64, scratch: &mut Rk4Scratch, f: impl Fn(&[f64], &mut [f64])) {
    scratch.resize(y.len());
    let Rk4Scratch { k, tmp } = scratch;
    let [k1, k2, k3, k4] = k;
    f(y, k1);
    for ((t, &a), &d) in tmp.iter_mut().zip(y.iter()).zip(k1.iter()) {
        *t = a + 0.5 * dt * d;
    }
    f(tmp, k2);
    for ((t, &a), &d) in tmp.iter_mut().zip(y.iter()).zip(k2.iter()) {
        *t = a + 0.5 * dt * d;
    }
    f(tmp, k3);
    for ((t, &a), &d) in tmp.iter_mut().zip(y.iter()).zip(k3.iter()) {
        *t = a + dt * d;
    }
    f(tmp, k4);
    for (i, v) in y.iter_mut().enumerate() {
        *v += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// One RK4 step of the master equation. Negative round-off is clamped.
pub fn step_master(p: &ProbabilityField, hop_rate: f64, dt_ode: f64) -> Result<ProbabilityField> {
    check_step(hop_rate, dt_ode, MAX_STEP_1D)?;
    let mut next = p.clone();
    let mut scratch = Rk4Scratch::default();
    rk4_in_place(next.values_mut(), dt_ode, &mut scratch, |y, out| master_rhs(y, hop_rate, out));
    next.clamp_negatives(CLAMP_DRIFT_TOL);
    Ok(next)
}

/// `P_n(t) = I_n(2 J_e t) e^{-2 J_e t}`.
pub fn analytic_classical_probability(n: i64, hop_rate: f64, t: f64) -> f64 {
    let order = n.unsigned_abs() as usize;
    scaled_bessel_i_table(2.0 * hop_rate * t, order).expect("finite non-negative argument")[order]
}

pub fn analytic_classical_profile(hop_rate: f64, t: f64, half_extent: usize) -> ProbabilityField {
    let table = scaled_bessel_i_table(2.0 * hop_rate * t, half_extent).expect("finite non-negative argument");
    let values = (-(half_extent as i64)..=half_extent as i64).map(|n| table[n.unsigned_abs() as usize]).collect();
    ProbabilityField::from_values(-(half_extent as i64), values)
}

/// Snapshot of an RK4 run.
#[derive(Clone, Debug, PartialEq)]
pub struct MasterSample {
    pub t: f64,
    pub field: ProbabilityField,
}

/// Integrates from `δ_{n,0}` to `t_max`, calling `observe` after every step.
/// The last step is shortened to land on `t_max` exactly.
pub fn evolve_master(
    config: &MasterConfig,
    mut observe: impl FnMut(f64, &ProbabilityField),
) -> (ProbabilityField, TruncationMonitor) {
    let half = diffusive_half_extent(config.hop_rate, config.t_max, 0);
    let mut p = ProbabilityField::delta(half);
    let mut monitor = TruncationMonitor::default();
    let mut scratch = Rk4Scratch::default();
    let mut t = 0.0;
    let steps = config.steps();
    for step in 1..=steps {
        let dt = if step == steps { config.t_max - t } else { config.dt_ode };
        if dt > 0.0 {
            rk4_in_place(p.values_mut(), dt, &mut scratch, |y, out| master_rhs(y, config.hop_rate, out));
            p.clamp_negatives(CLAMP_DRIFT_TOL);
        }
        t = if step == steps { config.t_max } else { step as f64 * config.dt_ode };
        monitor.observe(p.values());
        observe(t, &p);
    }
    (p, monitor)
}
