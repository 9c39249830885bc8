//! Site-indexed fields on a truncated one-dimensional lattice.
//!
//! Every field stores a contiguous block of sites starting at `offset`, so
//! array index `j` is lattice site `offset + j`. Runs preallocate a symmetric
//! range sized from their longest time and treat the ends as hard walls; a
//! [`TruncationMonitor`] flags runs whose probability reaches the walls.

use std::ops::Range;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Moments `Σ n P_n` and `Σ n² P_n` of a site distribution.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub second: f64,
}

fn moments_of(offset: i64, weights: impl Iterator<Item = f64>) -> Moments {
    let mut mean = 0.0;
    let mut second = 0.0;
    for (j, p) in weights.enumerate() {
        let n = (offset + j as i64) as f64;
        mean += n * p;
        second += n * n * p;
    }
    Moments { mean, second }
}

/// Complex amplitudes `ψ_n` of a single trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct AmplitudeField {
    offset: i64,
    values: Vec<C64>,
}

impl AmplitudeField {
    pub fn zeros(half_extent: usize) -> Self {
        AmplitudeField { offset: -(half_extent as i64), values: vec![C64::new(0.0, 0.0); 2 * half_extent + 1] }
    }

    /// Unit excitation at site 0 on the range `[-half_extent, half_extent]`.
    pub fn delta(half_extent: usize) -> Self {
        let mut field = Self::zeros(half_extent);
        field.values[half_extent] = C64::new(1.0, 0.0);
        field
    }

    pub fn from_values(offset: i64, values: Vec<C64>) -> Self {
        AmplitudeField { offset, values }
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sites(&self) -> Range<i64> {
        self.offset..self.offset + self.values.len() as i64
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    /// Amplitude at site `n`, zero outside the stored range.
    pub fn get(&self, n: i64) -> C64 {
        usize::try_from(n - self.offset).ok().and_then(|j| self.values.get(j).copied()).unwrap_or_default()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    /// `P_n = |ψ_n|²`, keeping the same offset.
    pub fn probabilities(&self) -> ProbabilityField {
        ProbabilityField { offset: self.offset, values: self.values.iter().map(|v| v.norm_sqr()).collect() }
    }

    /// Moments of `|ψ_n|²` without materializing the probability field.
    pub fn moments(&self) -> Moments {
        moments_of(self.offset, self.values.iter().map(|v| v.norm_sqr()))
    }
}

/// Real occupation probabilities `P_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityField {
    offset: i64,
    values: Vec<f64>,
}

impl ProbabilityField {
    pub fn zeros(half_extent: usize) -> Self {
        ProbabilityField { offset: -(half_extent as i64), values: vec![0.0; 2 * half_extent + 1] }
    }

    pub fn delta(half_extent: usize) -> Self {
        let mut field = Self::zeros(half_extent);
        field.values[half_extent] = 1.0;
        field
    }

    /// Point mass at an arbitrary `site` inside `[-half_extent, half_extent]`.
    pub fn point_mass(half_extent: usize, site: i64) -> Result<Self> {
        let mut field = Self::zeros(half_extent);
        let j = usize::try_from(site + half_extent as i64)
            .ok()
            .filter(|&j| j < field.values.len())
            .ok_or_else(|| Error::InvalidParameter(format!("site {site} outside ±{half_extent}")))?;
        field.values[j] = 1.0;
        Ok(field)
    }

    pub fn from_values(offset: i64, values: Vec<f64>) -> Self {
        ProbabilityField { offset, values }
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sites(&self) -> Range<i64> {
        self.offset..self.offset + self.values.len() as i64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, n: i64) -> f64 {
        usize::try_from(n - self.offset).ok().and_then(|j| self.values.get(j).copied()).unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// `⟨n⟩ = Σ n P_n`.
    pub fn mean_position(&self) -> f64 {
        self.moments().mean
    }

    /// `⟨n²⟩ = Σ n² P_n`. From a symmetric start this is the variance of the
    /// distribution, which is how the spreading curves are labelled.
    pub fn second_moment(&self) -> f64 {
        self.moments().second
    }

    pub fn moments(&self) -> Moments {
        moments_of(self.offset, self.values.iter().copied())
    }

    /// Clamps negative round-off to zero. The field is renormalized only if
    /// the clamp moved the total by more than `drift_tol`; returns whether it
    /// was.
    pub fn clamp_negatives(&mut self, drift_tol: f64) -> bool {
        let before = self.total();
        let mut touched = false;
        for v in self.values.iter_mut().filter(|v| **v < 0.0) {
            *v = 0.0;
            touched = true;
        }
        if !touched {
            return false;
        }
        let after = self.total();
        if (after - before).abs() > drift_tol && after > 0.0 {
            self.values.iter_mut().for_each(|v| *v *= before / after);
            return true;
        }
        false
    }
}

/// Watches the probability held in the outermost sites of a truncated
/// lattice. A run is invalid once that mass exceeds `threshold` at any
/// observed time.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncationMonitor {
    edge_sites: usize,
    threshold: f64,
    worst: f64,
}

impl Default for TruncationMonitor {
    fn default() -> Self {
        TruncationMonitor::new(3, 1e-8)
    }
}

impl TruncationMonitor {
    pub fn new(edge_sites: usize, threshold: f64) -> Self {
        TruncationMonitor { edge_sites, threshold, worst: 0.0 }
    }

    pub fn edge_sites(&self) -> usize {
        self.edge_sites
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Largest boundary mass seen so far.
    pub fn worst(&self) -> f64 {
        self.worst
    }

    pub fn is_flagged(&self) -> bool {
        self.worst > self.threshold
    }

    pub fn reset(&mut self) {
        self.worst = 0.0;
    }

    /// Records an externally computed boundary mass.
    pub fn record(&mut self, mass: f64) {
        self.worst = self.worst.max(mass);
    }

    /// Records the boundary mass of a probability array, returning it.
    pub fn observe(&mut self, probabilities: &[f64]) -> f64 {
        let mass = self.boundary_mass_by(probabilities.len(), |j| probabilities[j]);
        self.worst = self.worst.max(mass);
        mass
    }

    pub fn observe_amplitudes(&mut self, amplitudes: &[C64]) -> f64 {
        let mass = self.boundary_mass_by(amplitudes.len(), |j| amplitudes[j].norm_sqr());
        self.worst = self.worst.max(mass);
        mass
    }

    /// Boundary mass of a two-component field such as the fiber-loop state.
    pub fn observe_pair(&mut self, a: &[C64], b: &[C64]) -> f64 {
        let mass = self.boundary_mass_by(a.len(), |j| a[j].norm_sqr() + b[j].norm_sqr());
        self.worst = self.worst.max(mass);
        mass
    }

    fn boundary_mass_by(&self, len: usize, weight: impl Fn(usize) -> f64) -> f64 {
        let k = self.edge_sites.min(len / 2);
        (0..k).map(|j| weight(j) + weight(len - 1 - j)).sum()
    }
}

/// Half-extent for a coherent run up to `t_max`: the `2Jt` light cone plus
/// a margin that swallows the Bessel tail.
pub fn coherent_half_extent(hopping: f64, t_max: f64) -> usize {
    (3.0 * hopping * t_max).ceil() as usize + 10
}

/// Half-extent for a diffusive run: eight diffusion lengths plus room for one
/// kernel stride on each side.
pub fn diffusive_half_extent(hop_rate: f64, t_max: f64, kernel_cutoff: usize) -> usize {
    (8.0 * (hop_rate * t_max).max(0.0).sqrt()).ceil() as usize + 2 * kernel_cutoff + 10
}
