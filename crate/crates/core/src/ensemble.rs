//! Ensemble bookkeeping shared by the Monte Carlo drivers.
//!
//! Each trajectory reports `⟨n⟩` and `⟨n²⟩` at the sample times. The
//! accumulator keeps streaming means and variances of `⟨n⟩`, `⟨n²⟩` and
//! `⟨n⟩²` separately, so `E[n²]` and the averaged squared center of mass
//! come out of the same run.
//!
//! Reproducibility: trajectory `i` draws from ChaCha stream `i` of the master
//! seed, trajectories are grouped into fixed-size chunks independent of the
//! worker count, and chunk results are merged in chunk order. The output is
//! bit-identical for any number of workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Trajectories per work item.
pub const CHUNK_SIZE: u64 = 32;

/// Largest tolerated fraction of boundary-flagged trajectories.
pub const MAX_INVALID_FRACTION: f64 = 0.01;

/// Welford mean/variance accumulator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningStat {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningStat {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Chan et al. pairwise combination.
    pub fn merge(&mut self, other: &RunningStat) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n_a = self.count as f64;
        let n_b = other.count as f64;
        let n = n_a + n_b;
        let delta = other.mean - self.mean;
        self.mean += delta * n_b / n;
        self.m2 += other.m2 + delta * delta * n_a * n_b / n;
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero for fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

/// Per-trajectory moments at the sample times.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    /// `⟨n⟩` per sample.
    pub com: Vec<f64>,
    /// `⟨n²⟩` per sample.
    pub second_moment: Vec<f64>,
    /// False once the trajectory touched the lattice boundary.
    pub valid: bool,
    /// Debug only: `(⟨n⟩, ⟨n²⟩)` after the first coherent stride, before
    /// any kick.
    pub first_stride: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleAccumulator {
    times: Vec<f64>,
    invalid: u64,
    com: Vec<RunningStat>,
    n2: Vec<RunningStat>,
    com2: Vec<RunningStat>,
}

impl EnsembleAccumulator {
    pub fn new(times: Vec<f64>) -> Self {
        let n = times.len();
        EnsembleAccumulator {
            times,
            invalid: 0,
            com: vec![RunningStat::default(); n],
            n2: vec![RunningStat::default(); n],
            com2: vec![RunningStat::default(); n],
        }
    }

    /// Adds a trajectory; invalid ones are only counted.
    pub fn push(&mut self, record: &TrajectoryRecord) {
        if !record.valid {
            self.invalid += 1;
            return;
        }
        debug_assert_eq!(record.com.len(), self.times.len());
        for (i, (&c, &s)) in record.com.iter().zip(&record.second_moment).enumerate() {
            self.com[i].push(c);
            self.n2[i].push(s);
            self.com2[i].push(c * c);
        }
    }

    pub fn merge(&mut self, other: &EnsembleAccumulator) {
        debug_assert_eq!(self.times, other.times);
        self.invalid += other.invalid;
        for (a, b) in self.com.iter_mut().zip(&other.com) {
            a.merge(b);
        }
        for (a, b) in self.n2.iter_mut().zip(&other.n2) {
            a.merge(b);
        }
        for (a, b) in self.com2.iter_mut().zip(&other.com2) {
            a.merge(b);
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Valid trajectories accumulated.
    pub fn count(&self) -> u64 {
        self.com.first().map_or(0, RunningStat::count)
    }

    pub fn invalid(&self) -> u64 {
        self.invalid
    }

    pub fn total(&self) -> u64 {
        self.count() + self.invalid
    }

    pub fn com_stats(&self) -> &[RunningStat] {
        &self.com
    }

    pub fn n2_stats(&self) -> &[RunningStat] {
        &self.n2
    }

    pub fn com2_stats(&self) -> &[RunningStat] {
        &self.com2
    }

    /// Ensemble mean of `⟨n⟩`.
    pub fn mean_com(&self) -> Vec<f64> {
        self.com.iter().map(RunningStat::mean).collect()
    }

    pub fn mean_com_stderr(&self) -> Vec<f64> {
        self.com.iter().map(RunningStat::stderr).collect()
    }

    /// `E[n²]`, the ensemble mean of `⟨n²⟩`.
    pub fn mean_n2(&self) -> Vec<f64> {
        self.n2.iter().map(RunningStat::mean).collect()
    }

    pub fn mean_n2_stderr(&self) -> Vec<f64> {
        self.n2.iter().map(RunningStat::stderr).collect()
    }

    /// Ensemble mean of `⟨n⟩²`.
    pub fn mean_com2(&self) -> Vec<f64> {
        self.com2.iter().map(RunningStat::mean).collect()
    }

    pub fn mean_com2_stderr(&self) -> Vec<f64> {
        self.com2.iter().map(RunningStat::stderr).collect()
    }

    /// Errors if more than 1% of the trajectories were flagged.
    pub fn check_invalid_fraction(&self) -> Result<()> {
        let total = self.total();
        if total > 0 && self.invalid as f64 > MAX_INVALID_FRACTION * total as f64 {
            return Err(Error::TooManyInvalid { invalid: self.invalid, total });
        }
        Ok(())
    }
}

/// Derives one independent random stream per trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedPolicy {
    pub master_seed: u64,
}

impl SeedPolicy {
    pub fn new(master_seed: u64) -> Self {
        SeedPolicy { master_seed }
    }

    pub fn stream(&self, trajectory: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(trajectory);
        rng
    }
}

/// Runs `n_traj` trajectories on `threads` workers (the global rayon pool
/// when `None`) and merges them deterministically.
pub fn run_parallel<F>(
    n_traj: u64,
    times: &[f64],
    policy: SeedPolicy,
    threads: Option<usize>,
    trajectory: F,
) -> Result<EnsembleAccumulator>
where
    F: Fn(&mut ChaCha8Rng) -> TrajectoryRecord + Sync,
{
    if n_traj == 0 {
        return Err(Error::InvalidParameter("need at least one trajectory".into()));
    }
    let n_chunks = n_traj.div_ceil(CHUNK_SIZE);
    let work = || -> Vec<EnsembleAccumulator> {
        (0..n_chunks)
            .into_par_iter()
            .map(|chunk| {
                let mut acc = EnsembleAccumulator::new(times.to_vec());
                let end = ((chunk + 1) * CHUNK_SIZE).min(n_traj);
                for i in chunk * CHUNK_SIZE..end {
                    let mut rng = policy.stream(i);
                    acc.push(&trajectory(&mut rng));
                }
                acc
            })
            .collect()
    };
    let chunks = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let mut total = EnsembleAccumulator::new(times.to_vec());
    for c in &chunks {
        total.merge(c);
    }
    Ok(total)
}
