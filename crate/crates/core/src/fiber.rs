//! Discrete-time walk of light pulses in two coupled fiber loops.
//!
//! Each round trip `m` maps the short-loop amplitudes `u_n` and long-loop
//! amplitudes `w_n` through a beam splitter of angle `β`:
//!
//! ```text
//! u'_n = (cos β · u_{n+1} + i sin β · w_n) e^{iφ_n}
//! w'_n =  i sin β · u_n   + cos β · w_{n-1}
//! ```
//!
//! A phase modulator in the short loop supplies `φ_n`. Without it the
//! variance grows like `2J²m²` with `J = ½ cos β`; with uniform random phases
//! the walk diffuses with `J_e = ½ cos² β`, matching the continuous-time
//! model at `Δt = 2`.

use num_complex::Complex64 as C64;
use rand::Rng;

use crate::dephasing::random_phase_factor;
use crate::ensemble::{run_parallel, EnsembleAccumulator, SeedPolicy, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::lattice::{Moments, ProbabilityField, TruncationMonitor};

/// Kick interval of the continuous-time walk that a round trip stands for.
pub const EQUIVALENT_KICK_INTERVAL: f64 = 2.0;

/// The 2×2 coupler `[[cos β, i sin β], [i sin β, cos β]]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coupler {
    beta: f64,
    cos: f64,
    sin: f64,
}

impl Coupler {
    pub fn new(beta: f64) -> Result<Self> {
        if !beta.is_finite() {
            return Err(Error::InvalidParameter(format!("coupling angle must be finite, got {beta}")));
        }
        let (sin, cos) = beta.sin_cos();
        Ok(Coupler { beta, cos, sin })
    }

    /// `β = fraction · π/2`.
    pub fn from_fraction(fraction: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::InvalidParameter(format!("beta fraction must lie in [0, 1], got {fraction}")));
        }
        Self::new(fraction * std::f64::consts::FRAC_PI_2)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn matrix(&self) -> [[C64; 2]; 2] {
        let c = C64::new(self.cos, 0.0);
        let s = C64::new(0.0, self.sin);
        [[c, s], [s, c]]
    }

    pub fn determinant(&self) -> C64 {
        let [[a, b], [c, d]] = self.matrix();
        a * d - b * c
    }

    /// Coherent hopping rate `J = ½ cos β` per round trip.
    pub fn equivalent_hopping(&self) -> f64 {
        0.5 * self.cos
    }

    /// `J_e = ½ cos² β`.
    pub fn effective_hop_rate(&self) -> f64 {
        0.5 * self.cos * self.cos
    }
}

/// Pulse amplitudes of both loops on sites `offset .. offset + len`.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoLoopState {
    offset: i64,
    u: Vec<C64>,
    w: Vec<C64>,
    step: u64,
}

impl TwoLoopState {
    /// A single pulse in the short loop at site 0.
    pub fn injected(half_extent: usize) -> Self {
        let len = 2 * half_extent + 1;
        let mut u = vec![C64::new(0.0, 0.0); len];
        u[half_extent] = C64::new(1.0, 0.0);
        TwoLoopState { offset: -(half_extent as i64), u, w: vec![C64::new(0.0, 0.0); len], step: 0 }
    }

    pub fn from_parts(offset: i64, u: Vec<C64>, w: Vec<C64>) -> Result<Self> {
        if u.len() != w.len() {
            return Err(Error::InvalidParameter(format!("loop arrays differ in length: {} vs {}", u.len(), w.len())));
        }
        Ok(TwoLoopState { offset, u, w, step: 0 })
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn u(&self) -> &[C64] {
        &self.u
    }

    pub fn w(&self) -> &[C64] {
        &self.w
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn norm_sqr(&self) -> f64 {
        self.u.iter().zip(&self.w).map(|(a, b)| a.norm_sqr() + b.norm_sqr()).sum()
    }

    /// `P_n = |u_n|² + |w_n|²`.
    pub fn probabilities(&self) -> ProbabilityField {
        let values = self.u.iter().zip(&self.w).map(|(a, b)| a.norm_sqr() + b.norm_sqr()).collect();
        ProbabilityField::from_values(self.offset, values)
    }

    pub fn moments(&self) -> Moments {
        let mut mean = 0.0;
        let mut second = 0.0;
        for (j, (a, b)) in self.u.iter().zip(&self.w).enumerate() {
            let n = (self.offset + j as i64) as f64;
            let p = a.norm_sqr() + b.norm_sqr();
            mean += n * p;
            second += n * n * p;
        }
        Moments { mean, second }
    }
}

/// One round trip. `phases`, when given, holds `φ_n` for every stored site.
/// Amplitude shifted past either end of the array is lost.
pub fn step_loops(state: &TwoLoopState, coupler: &Coupler, phases: Option<&[f64]>) -> Result<TwoLoopState> {
    if let Some(p) = phases {
        if p.len() != state.len() {
            return Err(Error::InvalidParameter(format!("{} phases for {} sites", p.len(), state.len())));
        }
    }
    let mut next = TwoLoopState {
        offset: state.offset,
        u: vec![C64::new(0.0, 0.0); state.len()],
        w: vec![C64::new(0.0, 0.0); state.len()],
        step: state.step + 1,
    };
    step_range(&state.u, &state.w, &mut next.u, &mut next.w, coupler, 0..state.len());
    if let Some(p) = phases {
        for (v, phi) in next.u.iter_mut().zip(p) {
            let (s, c) = phi.sin_cos();
            *v *= C64::new(c, s);
        }
    }
    Ok(next)
}

fn times_i(z: C64, s: f64) -> C64 {
    C64::new(-s * z.im, s * z.re)
}

/// Writes the coupler update for indices in `range` only.
fn step_range(u: &[C64], w: &[C64], nu: &mut [C64], nw: &mut [C64], coupler: &Coupler, range: std::ops::Range<usize>) {
    let len = u.len();
    let zero = C64::new(0.0, 0.0);
    let (c, s) = (coupler.cos, coupler.sin);
    for j in range {
        let right = if j + 1 < len { u[j + 1] } else { zero };
        let left = if j > 0 { w[j - 1] } else { zero };
        nu[j] = right * c + times_i(w[j], s);
        nw[j] = times_i(u[j], s) + left * c;
    }
}

/// Fixed-β loop experiment from a single injected pulse.
#[derive(Clone, Debug)]
pub struct FiberLoop {
    coupler: Coupler,
    m_max: usize,
    sample_stride: usize,
    dephased: bool,
    half_extent: usize,
}

impl FiberLoop {
    pub fn new(coupler: Coupler, m_max: usize, dephased: bool) -> Result<Self> {
        if m_max == 0 {
            return Err(Error::InvalidParameter("need at least one round trip".into()));
        }
        let monitor = TruncationMonitor::default();
        let full = m_max + monitor.edge_sites() + 1;
        let half_extent = if dephased {
            // diffusive spread is about cot β · √m; the ballistic remainder
            // decays like cos^{2m} β
            let cot = coupler.cos.abs() / coupler.sin.abs();
            let width = 10.0 * cot * (m_max as f64).sqrt();
            if width.is_finite() {
                (width.ceil() as usize + 20).min(full)
            } else {
                full
            }
        } else {
            full
        };
        Ok(FiberLoop { coupler, m_max, sample_stride: 1, dephased, half_extent })
    }

    pub fn with_sample_stride(mut self, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::InvalidParameter("sample stride must be ≥ 1".into()));
        }
        self.sample_stride = stride;
        Ok(self)
    }

    pub fn with_half_extent(mut self, half_extent: usize) -> Self {
        self.half_extent = half_extent;
        self
    }

    pub fn coupler(&self) -> &Coupler {
        &self.coupler
    }

    pub fn m_max(&self) -> usize {
        self.m_max
    }

    pub fn is_dephased(&self) -> bool {
        self.dephased
    }

    pub fn half_extent(&self) -> usize {
        self.half_extent
    }

    /// Sampled step indices `m`.
    pub fn sample_steps(&self) -> Vec<f64> {
        (1..=self.m_max).filter(|m| m % self.sample_stride == 0).map(|m| m as f64).collect()
    }

    pub fn run_trajectory<R: Rng + ?Sized>(&self, rng: &mut R) -> TrajectoryRecord {
        self.trajectory_with_state(rng).0
    }

    /// One trajectory plus its final state. The generator is untouched for a
    /// coherent run.
    pub fn trajectory_with_state<R: Rng + ?Sized>(&self, rng: &mut R) -> (TrajectoryRecord, TwoLoopState) {
        let half = self.half_extent;
        let len = 2 * half + 1;
        let mut state = TwoLoopState::injected(half);
        let mut nu = vec![C64::new(0.0, 0.0); len];
        let mut nw = vec![C64::new(0.0, 0.0); len];
        let mut support = half..half + 1;
        let mut monitor = TruncationMonitor::default();
        let cap = self.m_max / self.sample_stride;
        let mut record = TrajectoryRecord {
            times: Vec::with_capacity(cap),
            com: Vec::with_capacity(cap),
            second_moment: Vec::with_capacity(cap),
            valid: true,
            first_stride: None,
        };
        for m in 1..=self.m_max {
            support = support.start.saturating_sub(1)..(support.end + 1).min(len);
            step_range(&state.u, &state.w, &mut nu, &mut nw, &self.coupler, support.clone());
            std::mem::swap(&mut state.u, &mut nu);
            std::mem::swap(&mut state.w, &mut nw);
            state.step += 1;
            if self.dephased {
                for v in &mut state.u[support.clone()] {
                    *v *= random_phase_factor(rng);
                }
            }
            monitor.observe_pair(&state.u, &state.w);
            if m % self.sample_stride == 0 {
                let mo = state.moments();
                record.times.push(m as f64);
                record.com.push(mo.mean);
                record.second_moment.push(mo.second);
            }
        }
        record.valid = !monitor.is_flagged();
        (record, state)
    }

    /// Ensemble over phase realizations; fails above 1% flagged trajectories.
    pub fn run_ensemble(&self, n_traj: u64, policy: SeedPolicy, threads: Option<usize>) -> Result<EnsembleAccumulator> {
        let acc = self.run_ensemble_unchecked(n_traj, policy, threads)?;
        acc.check_invalid_fraction()?;
        Ok(acc)
    }

    pub fn run_ensemble_unchecked(
        &self,
        n_traj: u64,
        policy: SeedPolicy,
        threads: Option<usize>,
    ) -> Result<EnsembleAccumulator> {
        run_parallel(n_traj, &self.sample_steps(), policy, threads, |rng| self.run_trajectory(rng))
    }
}

/// Dephased loop ensemble from a single injected pulse, sampled every step.
pub fn run_loop_ensemble(
    beta: f64,
    m_max: usize,
    n_traj: u64,
    policy: SeedPolicy,
    threads: Option<usize>,
) -> Result<EnsembleAccumulator> {
    FiberLoop::new(Coupler::new(beta)?, m_max, true)?.run_ensemble(n_traj, policy, threads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn coherent(fraction: f64, m_max: usize) -> TrajectoryRecord {
        let f = FiberLoop::new(Coupler::from_fraction(fraction).unwrap(), m_max, false).unwrap();
        f.run_trajectory(&mut ChaCha8Rng::seed_from_u64(0))
    }

    #[test]
    fn coupler_is_unitary() {
        for frac in [0.0, 0.3, 0.8, 1.0] {
            let c = Coupler::from_fraction(frac).unwrap();
            assert!((c.determinant().norm() - 1.0).abs() < 1e-15);
            let m = c.matrix();
            let col0 = m[0][0].norm_sqr() + m[1][0].norm_sqr();
            let cross = m[0][0].conj() * m[0][1] + m[1][0].conj() * m[1][1];
            assert!((col0 - 1.0).abs() < 1e-15 && cross.norm() < 1e-15);
        }
        assert!(Coupler::from_fraction(1.2).is_err());
        assert!(Coupler::new(f64::NAN).is_err());
    }

    #[test]
    fn full_coupling_swaps_loops_in_place() {
        let c = Coupler::new(FRAC_PI_2).unwrap();
        let s0 = TwoLoopState::injected(3);
        let phases = vec![0.7; s0.len()];
        let s1 = step_loops(&s0, &c, Some(&phases)).unwrap();
        let i = C64::new(0.0, 1.0);
        assert!((s1.w()[3] - i).norm() < 1e-15);
        assert!(s1.u().iter().all(|z| z.norm() < 1e-15));
        let s2 = step_loops(&s1, &c, Some(&phases)).unwrap();
        let expected = i * i * C64::from_polar(1.0, 0.7);
        assert!((s2.u()[3] - expected).norm() < 1e-15);
        assert_eq!(s2.step(), 2);
        let r = coherent(1.0, 40);
        assert!(r.second_moment.iter().all(|&v| v.abs() < 1e-24));
    }

    #[test]
    fn no_coupling_is_a_pure_shift() {
        let r = coherent(0.0, 25);
        for (k, (&c, &s)) in r.com.iter().zip(&r.second_moment).enumerate() {
            let m = (k + 1) as f64;
            assert_eq!(c, -m);
            assert_eq!(s, m * m);
        }
        assert!(r.valid);
    }

    #[test]
    fn norm_is_kept_every_step() {
        let c = Coupler::from_fraction(0.8).unwrap();
        let mut s = TwoLoopState::injected(40);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut prev = s.norm_sqr();
        for _ in 0..30 {
            let phases: Vec<f64> = (0..s.len()).map(|_| rng.random_range(-3.1..3.1)).collect();
            s = step_loops(&s, &c, Some(&phases)).unwrap();
            let now = s.norm_sqr();
            assert!((now - prev).abs() <= 1e-13);
            prev = now;
        }
        assert!((prev - 1.0).abs() < 1e-12);
        assert!(step_loops(&s, &c, Some(&[0.0; 3])).is_err());
    }

    #[test]
    fn windowed_runner_matches_full_steps() {
        let c = Coupler::from_fraction(0.6).unwrap();
        let f = FiberLoop::new(c, 12, false).unwrap();
        let (_, fast) = f.trajectory_with_state(&mut ChaCha8Rng::seed_from_u64(0));
        let mut slow = TwoLoopState::injected(f.half_extent());
        for _ in 0..12 {
            slow = step_loops(&slow, &c, None).unwrap();
        }
        assert_eq!(fast, slow);
    }

    #[test]
    fn coherent_variance_tracks_continuous_time() {
        let mut prev = f64::INFINITY;
        for frac in [0.9, 0.95] {
            let r = coherent(frac, 300);
            let j = Coupler::from_fraction(frac).unwrap().equivalent_hopping();
            let m = 300.0;
            let var = r.second_moment[299] - r.com[299] * r.com[299];
            let dev = (var / (2.0 * j * j * m * m) - 1.0).abs();
            assert!(dev < 0.1, "{frac}: {dev}");
            assert!(dev < prev);
            prev = dev;
        }
    }

    #[test]
    fn dephased_window_is_clear_of_the_walls() {
        let f = FiberLoop::new(Coupler::from_fraction(0.8).unwrap(), 400, true).unwrap();
        assert!(f.half_extent() < 404);
        let acc = f.run_ensemble(64, SeedPolicy::new(3), Some(1)).unwrap();
        assert_eq!(acc.invalid(), 0);
        let j_e = f.coupler().effective_hop_rate();
        let last = *acc.mean_n2().last().unwrap();
        assert!((last / (2.0 * j_e * 400.0) - 1.0).abs() < 0.3, "{last}");
    }
}
