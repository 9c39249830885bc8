//! Monte Carlo trajectories of the walk with periodic random phase kicks.
//!
//! A trajectory starts from `δ_{n,0}` and repeats: propagate coherently for
//! `Δt`, multiply every amplitude by an independent phase uniform in
//! `(-π, π)`, record `⟨n⟩` and `⟨n²⟩`. Samples therefore sit at
//! `t_α = αΔt` just after the kick. Kicks do not change `|ψ_n|²`, so the
//! recorded moments equal the pre-kick ones.

use num_complex::Complex64 as C64;
use rand::distr::{Distribution, Uniform};
use rand::Rng;

use crate::coherent::UnitaryKernel;
use crate::ensemble::{run_parallel, EnsembleAccumulator, SeedPolicy};
use crate::error::{Error, Result};
use crate::lattice::{diffusive_half_extent, AmplitudeField, TruncationMonitor};

pub use crate::ensemble::TrajectoryRecord;

/// `e^{iφ}` with `φ ~ U(-π, π)`.
///
/// Draws a point uniformly in the unit disk and squares its direction, which
/// gives an exactly uniform angle without calling `sin_cos`.
pub fn random_phase_factor<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let side = Uniform::new(-1.0f64, 1.0).expect("finite bounds");
    loop {
        let x = side.sample(rng);
        let y = side.sample(rng);
        let r2 = x * x + y * y;
        if r2 > 1e-300 && r2 < 1.0 {
            return C64::new((x * x - y * y) / r2, 2.0 * x * y / r2);
        }
    }
}

/// `ψ_n → ψ_n e^{iφ_n}` with i.i.d. `φ_n ~ U(-π, π)`.
pub fn apply_random_phases<R: Rng + ?Sized>(values: &mut [C64], rng: &mut R) {
    for v in values {
        *v *= random_phase_factor(rng);
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KickSchedule {
    dt_kick: f64,
    t_max: f64,
    sample_stride: usize,
}

impl KickSchedule {
    pub fn new(dt_kick: f64, t_max: f64, sample_stride: usize) -> Result<Self> {
        if !(dt_kick > 0.0 && dt_kick.is_finite()) {
            return Err(Error::InvalidParameter(format!("kick interval must be > 0, got {dt_kick}")));
        }
        if !(t_max >= dt_kick && t_max.is_finite()) {
            return Err(Error::InvalidParameter(format!("t_max {t_max} shorter than one kick interval")));
        }
        if sample_stride == 0 {
            return Err(Error::InvalidParameter("sample stride must be ≥ 1".into()));
        }
        Ok(KickSchedule { dt_kick, t_max, sample_stride })
    }

    pub fn dt_kick(&self) -> f64 {
        self.dt_kick
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn sample_stride(&self) -> usize {
        self.sample_stride
    }

    /// Number of kicks, the last one at or just below `t_max`.
    pub fn n_kicks(&self) -> usize {
        ((self.t_max / self.dt_kick) * (1.0 + 1e-12)).floor() as usize
    }

    pub fn sample_times(&self) -> Vec<f64> {
        (1..=self.n_kicks()).filter(|a| a % self.sample_stride == 0).map(|a| a as f64 * self.dt_kick).collect()
    }
}

/// The kicked walk for a fixed hopping rate and schedule.
#[derive(Clone, Debug)]
pub struct DephasedWalk {
    hopping: f64,
    schedule: KickSchedule,
    kernel: UnitaryKernel,
    half_extent: usize,
    record_first_stride: bool,
}

impl DephasedWalk {
    pub fn new(hopping: f64, schedule: KickSchedule) -> Result<Self> {
        let kernel = UnitaryKernel::with_default_tol(hopping, schedule.dt_kick)?;
        let hop_rate = hopping * hopping * schedule.dt_kick;
        let half_extent = diffusive_half_extent(hop_rate, schedule.t_max, kernel.cutoff());
        Ok(DephasedWalk { hopping, schedule, kernel, half_extent, record_first_stride: false })
    }

    /// Overrides the lattice size; mostly useful to provoke truncation.
    pub fn with_half_extent(mut self, half_extent: usize) -> Self {
        self.half_extent = half_extent;
        self
    }

    /// Debug switch: keep the moments after the first coherent stride.
    pub fn with_first_stride(mut self, on: bool) -> Self {
        self.record_first_stride = on;
        self
    }

    pub fn hopping(&self) -> f64 {
        self.hopping
    }

    pub fn schedule(&self) -> &KickSchedule {
        &self.schedule
    }

    pub fn half_extent(&self) -> usize {
        self.half_extent
    }

    /// `J_e = J² Δt`.
    pub fn effective_hop_rate(&self) -> f64 {
        self.hopping * self.hopping * self.schedule.dt_kick
    }

    pub fn run_trajectory<R: Rng + ?Sized>(&self, rng: &mut R) -> TrajectoryRecord {
        self.trajectory_with_field(rng).0
    }

    /// Same as [`run_trajectory`](Self::run_trajectory), also returning the
    /// final amplitudes.
    pub fn trajectory_with_field<R: Rng + ?Sized>(&self, rng: &mut R) -> (TrajectoryRecord, AmplitudeField) {
        let half = self.half_extent;
        let mut psi = AmplitudeField::delta(half);
        let mut scratch = AmplitudeField::zeros(half);
        let mut support = half..half + 1;
        let mut monitor = TruncationMonitor::default();
        let stride = self.schedule.sample_stride;
        let n_kicks = self.schedule.n_kicks();
        let cap = n_kicks / stride;
        let mut record = TrajectoryRecord {
            times: Vec::with_capacity(cap),
            com: Vec::with_capacity(cap),
            second_moment: Vec::with_capacity(cap),
            valid: true,
            first_stride: None,
        };
        for kick in 1..=n_kicks {
            support = self.kernel.propagate_into(psi.values(), scratch.values_mut(), support.clone());
            std::mem::swap(&mut psi, &mut scratch);
            if kick == 1 && self.record_first_stride {
                let m = psi.moments();
                record.first_stride = Some((m.mean, m.second));
            }
            apply_random_phases(&mut psi.values_mut()[support.clone()], rng);
            monitor.observe_amplitudes(psi.values());
            if kick % stride == 0 {
                let m = psi.moments();
                record.times.push(kick as f64 * self.schedule.dt_kick);
                record.com.push(m.mean);
                record.second_moment.push(m.second);
            }
        }
        record.valid = !monitor.is_flagged();
        (record, psi)
    }

    /// Runs the ensemble and fails if more than 1% of the trajectories hit
    /// the boundary.
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
        let times = self.schedule.sample_times();
        run_parallel(n_traj, &times, policy, threads, |rng| self.run_trajectory(rng))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn walk(hopping: f64, dt: f64, t_max: f64) -> DephasedWalk {
        DephasedWalk::new(hopping, KickSchedule::new(dt, t_max, 1).unwrap()).unwrap()
    }

    #[test]
    fn schedule_sampling() {
        let s = KickSchedule::new(0.5, 5.0, 2).unwrap();
        assert_eq!(s.n_kicks(), 10);
        assert_eq!(s.sample_times(), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert!(KickSchedule::new(0.0, 5.0, 1).is_err());
        assert!(KickSchedule::new(1.0, 0.5, 1).is_err());
        assert!(KickSchedule::new(1.0, 5.0, 0).is_err());
    }

    #[test]
    fn phases_keep_magnitudes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut v: Vec<C64> = (0..20).map(|k| C64::new(0.1 * k as f64, -0.05 * k as f64)).collect();
        let before: Vec<f64> = v.iter().map(|z| z.norm_sqr()).collect();
        apply_random_phases(&mut v, &mut rng);
        for (z, b) in v.iter().zip(&before) {
            assert!((z.norm_sqr() - b).abs() <= 1e-15 * (1.0 + b));
        }
        let mut zero = vec![C64::new(0.0, 0.0); 4];
        apply_random_phases(&mut zero, &mut rng);
        assert!(zero.iter().all(|z| *z == C64::new(0.0, 0.0)));
    }

    #[test]
    fn phase_angles_are_uniform() {
        // circular moments of U(-π, π) vanish; a CDF check at a few angles
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 200_000;
        let mut m1 = C64::new(0.0, 0.0);
        let mut m2 = C64::new(0.0, 0.0);
        let mut below = [0usize; 3];
        let cuts = [-2.0, 0.3, 2.5];
        for _ in 0..n {
            let z = random_phase_factor(&mut rng);
            assert!((z.norm() - 1.0).abs() < 1e-15);
            m1 += z;
            m2 += z * z;
            for (b, c) in below.iter_mut().zip(cuts) {
                if z.arg() < c {
                    *b += 1;
                }
            }
        }
        let bound = 4.0 / (n as f64).sqrt();
        assert!(m1.norm() / (n as f64) < bound);
        assert!(m2.norm() / (n as f64) < bound);
        for (b, c) in below.iter().zip(cuts) {
            let expected = (c + std::f64::consts::PI) / (2.0 * std::f64::consts::PI);
            assert!((*b as f64 / n as f64 - expected).abs() < bound);
        }
    }

    #[test]
    fn kicks_average_out_coherences() {
        // fixed two-site amplitudes, fresh phases each draw
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (a, b) = (C64::new(0.6, 0.0), C64::new(0.0, 0.8));
        let n = 10_000;
        let mut sum = C64::new(0.0, 0.0);
        for _ in 0..n {
            let mut v = [a, b];
            apply_random_phases(&mut v, &mut rng);
            sum += v[0].conj() * v[1];
        }
        let mean = sum / n as f64;
        assert!(mean.norm() <= 3.0 / (n as f64).sqrt() * (a.norm() * b.norm()));
    }

    #[test]
    fn no_hopping_means_no_motion() {
        let w = walk(0.0, 0.5, 5.0);
        let r = w.run_trajectory(&mut ChaCha8Rng::seed_from_u64(0));
        assert!(r.valid);
        assert!(r.com.iter().all(|&c| c == 0.0));
        assert!(r.second_moment.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn first_stride_is_ballistic() {
        let w = walk(1.0, 0.5, 5.0).with_first_stride(true);
        let r = w.run_trajectory(&mut ChaCha8Rng::seed_from_u64(9));
        let (mean, second) = r.first_stride.unwrap();
        assert!(mean.abs() < 1e-14);
        assert!((second - 0.5).abs() < 1e-12);
        // kicks do not move probability: the first sample equals it
        assert!((r.second_moment[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let w = walk(1.0, 0.5, 10.0);
        let a = w.run_trajectory(&mut ChaCha8Rng::seed_from_u64(5));
        let b = w.run_trajectory(&mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }

    #[test]
    fn norm_survives_the_run() {
        let w = walk(1.0, 0.5, 50.0);
        let (r, psi) = w.trajectory_with_field(&mut ChaCha8Rng::seed_from_u64(2));
        assert!(r.valid);
        assert!((psi.norm_sqr() - 1.0).abs() < 1e-10);
        for (c, s) in r.com.iter().zip(&r.second_moment) {
            assert!(*s + 1e-9 >= c * c);
        }
    }

    #[test]
    fn single_trajectory_ensemble_equals_record() {
        let w = walk(1.0, 0.5, 5.0);
        let policy = SeedPolicy::new(4);
        let acc = w.run_ensemble(1, policy, Some(1)).unwrap();
        let r = w.run_trajectory(&mut policy.stream(0));
        assert_eq!(acc.mean_com(), r.com);
        assert_eq!(acc.mean_n2(), r.second_moment);
        assert_eq!(acc.times(), &r.times[..]);
    }

    #[test]
    fn tiny_lattice_is_rejected() {
        let w = walk(1.0, 0.5, 20.0).with_half_extent(6);
        let r = w.run_trajectory(&mut ChaCha8Rng::seed_from_u64(0));
        assert!(!r.valid);
        let err = w.run_ensemble(8, SeedPolicy::new(0), Some(1)).unwrap_err();
        assert!(matches!(err, Error::TooManyInvalid { invalid: 8, total: 8 }));
    }
}
