//! Occupation correlations `C_{n,m} = E[|ψ_n|² |ψ_m|²]` of the kicked walk.
//!
//! In the strong-dephasing limit `C` performs a classical random walk on the
//! square lattice with rate `J_e` in each of the four directions, except near
//! the main diagonal:
//!
//! ```text
//! dC_{n,m}/dt = J_e (C_{n,m+1} + C_{n,m-1} + C_{n+1,m} + C_{n-1,m} - 4 C_{n,m})
//!             + J_e δ_{n,m} (C_{n,n-1} + C_{n,n+1} + C_{n+1,n} + C_{n-1,n})
//!             - 2 J_e (δ_{n,m+1} + δ_{n,m-1}) C_{n,m}
//! ```
//!
//! Sites next to the diagonal leak extra probability onto it, which is what
//! makes `E[⟨n⟩²] = Σ n m C_{n,m}` grow like `√t` rather than stay at zero.

use std::io::Write;

use rayon::prelude::*;

use crate::bessel::scaled_bessel_i_table;
use crate::error::{Error, Result};
use crate::lattice::TruncationMonitor;
use crate::master::{check_step, rk4_in_place, Rk4Scratch};

/// Largest admissible `J_e · dt_ode` for the grid.
pub const MAX_STEP_2D: f64 = 0.05;

/// Strength of the diagonal defect terms: `gain` multiplies the inflow onto
/// `n = m`, `loss` the extra outflow from `|n - m| = 1`. Mass is conserved
/// when `loss = 2 gain`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DefectDescriptor {
    pub gain: f64,
    pub loss: f64,
}

impl DefectDescriptor {
    /// The defects of the kicked walk.
    pub const fn standard() -> Self {
        DefectDescriptor { gain: 1.0, loss: 2.0 }
    }

    /// Homogeneous 2D walk.
    pub const fn none() -> Self {
        DefectDescriptor { gain: 0.0, loss: 0.0 }
    }
}

impl Default for DefectDescriptor {
    fn default() -> Self {
        Self::standard()
    }
}

/// Dense `C_{n,m}` on `n, m ∈ [-N, N]`, row index `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationGrid {
    half_extent: usize,
    values: Vec<f64>,
}

impl CorrelationGrid {
    pub fn zeros(half_extent: usize) -> Self {
        let side = 2 * half_extent + 1;
        CorrelationGrid { half_extent, values: vec![0.0; side * side] }
    }

    /// `C_{n,m} = δ_{n,0} δ_{m,0}`.
    pub fn origin(half_extent: usize) -> Self {
        let mut g = Self::zeros(half_extent);
        let c = g.index(0, 0);
        g.values[c] = 1.0;
        g
    }

    pub fn from_fn(half_extent: usize, f: impl Fn(i64, i64) -> f64) -> Self {
        let mut g = Self::zeros(half_extent);
        let h = half_extent as i64;
        for n in -h..=h {
            for m in -h..=h {
                let i = g.index(n, m);
                g.values[i] = f(n, m);
            }
        }
        g
    }

    pub fn half_extent(&self) -> usize {
        self.half_extent
    }

    pub fn side(&self) -> usize {
        2 * self.half_extent + 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn index(&self, n: i64, m: i64) -> usize {
        let h = self.half_extent as i64;
        ((n + h) * (2 * h + 1) + (m + h)) as usize
    }

    /// `C_{n,m}`, zero outside the grid.
    pub fn get(&self, n: i64, m: i64) -> f64 {
        let h = self.half_extent as i64;
        if n.abs() > h || m.abs() > h {
            return 0.0;
        }
        self.values[self.index(n, m)]
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum()
    }

    /// `Σ n m C_{n,m}`, the ensemble average of `⟨n⟩²`.
    pub fn msd(&self) -> f64 {
        let h = self.half_extent as i64;
        let side = self.side();
        self.values
            .chunks(side)
            .enumerate()
            .map(|(r, row)| {
                let n = r as i64 - h;
                let inner: f64 = row.iter().enumerate().map(|(c, v)| (c as i64 - h) as f64 * v).sum();
                n as f64 * inner
            })
            .sum()
    }

    /// Mass held in the outermost `k` rows and columns.
    pub fn boundary_mass(&self, k: usize) -> f64 {
        let side = self.side();
        let k = k.min(side / 2);
        let mut total = 0.0;
        for (r, row) in self.values.chunks(side).enumerate() {
            if r < k || r >= side - k {
                total += row.iter().sum::<f64>();
            } else {
                total += row[..k].iter().sum::<f64>() + row[side - k..].iter().sum::<f64>();
            }
        }
        total
    }

    /// Largest violation of `C_{n,m} = C_{m,n} = C_{-n,-m}`.
    pub fn symmetry_violation(&self) -> f64 {
        let h = self.half_extent as i64;
        let mut worst: f64 = 0.0;
        for n in -h..=h {
            for m in -h..=h {
                let c = self.get(n, m);
                worst = worst.max((c - self.get(m, n)).abs()).max((c - self.get(-n, -m)).abs());
            }
        }
        worst
    }

    /// Writes `n,m,C` rows with a header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "m", "C"])?;
        let h = self.half_extent as i64;
        for n in -h..=h {
            for m in -h..=h {
                w.write_record([n.to_string(), m.to_string(), format!("{:e}", self.get(n, m))])?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Evaluates the right-hand side for the whole grid into `out`.
pub fn correlation_rhs(grid: &CorrelationGrid, hop_rate: f64, defects: DefectDescriptor, out: &mut [f64]) {
    rhs_slice(&grid.values, grid.half_extent, hop_rate, defects, out);
}

fn rhs_slice(c: &[f64], half_extent: usize, hop_rate: f64, defects: DefectDescriptor, out: &mut [f64]) {
    let side = 2 * half_extent + 1;
    out.par_chunks_mut(side).enumerate().for_each(|(r, row_out)| {
        let at = |i: usize, j: usize| c[i * side + j];
        for (j, o) in row_out.iter_mut().enumerate() {
            let here = at(r, j);
            let mut flow = 0.0;
            if r + 1 < side {
                flow += at(r + 1, j) - here;
            }
            if r > 0 {
                flow += at(r - 1, j) - here;
            }
            if j + 1 < side {
                flow += at(r, j + 1) - here;
            }
            if j > 0 {
                flow += at(r, j - 1) - here;
            }
            let mut d = hop_rate * flow;
            if r == j {
                let mut inflow = 0.0;
                if j > 0 {
                    inflow += at(r, j - 1) + at(r - 1, j);
                }
                if j + 1 < side {
                    inflow += at(r, j + 1) + at(r + 1, j);
                }
                d += defects.gain * hop_rate * inflow;
            } else if r.abs_diff(j) == 1 {
                d -= defects.loss * hop_rate * here;
            }
            *o = d;
        }
    });
}

/// One RK4 step, requiring `J_e · dt_ode ≤ 0.05`.
pub fn step_correlation(
    grid: &CorrelationGrid,
    hop_rate: f64,
    dt_ode: f64,
    defects: DefectDescriptor,
) -> Result<CorrelationGrid> {
    check_step(hop_rate, dt_ode, MAX_STEP_2D)?;
    let mut next = grid.clone();
    let mut scratch = Rk4Scratch::default();
    let h = grid.half_extent;
    rk4_in_place(&mut next.values, dt_ode, &mut scratch, |y, out| rhs_slice(y, h, hop_rate, defects, out));
    Ok(next)
}

/// Grid half-extent for a run to `t_max`.
pub fn grid_half_extent(hop_rate: f64, t_max: f64) -> usize {
    (8.0 * (hop_rate * t_max).max(0.0).sqrt()).ceil() as usize + 10
}

/// Integration settings for [`evolve_correlation`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrelationConfig {
    pub hop_rate: f64,
    pub dt_ode: f64,
    pub t_max: f64,
    pub defects: DefectDescriptor,
}

impl CorrelationConfig {
    /// Standard defects and the default step `0.05 / J_e`.
    pub fn new(hop_rate: f64, t_max: f64) -> Result<Self> {
        if !(hop_rate > 0.0 && hop_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!("hop rate must be > 0, got {hop_rate}")));
        }
        if !(t_max > 0.0 && t_max.is_finite()) {
            return Err(Error::InvalidParameter(format!("t_max must be > 0, got {t_max}")));
        }
        Ok(CorrelationConfig { hop_rate, dt_ode: MAX_STEP_2D / hop_rate, t_max, defects: DefectDescriptor::standard() })
    }

    pub fn with_defects(mut self, defects: DefectDescriptor) -> Self {
        self.defects = defects;
        self
    }

    pub fn steps(&self) -> usize {
        (self.t_max / self.dt_ode - 1e-9).ceil().max(0.0) as usize
    }
}

/// Integrates from the origin to `t_max`, calling `observe(t, grid)` after
/// every step.
pub fn evolve_correlation(
    config: &CorrelationConfig,
    mut observe: impl FnMut(f64, &CorrelationGrid),
) -> Result<(CorrelationGrid, TruncationMonitor)> {
    check_step(config.hop_rate, config.dt_ode, MAX_STEP_2D)?;
    let half = grid_half_extent(config.hop_rate, config.t_max);
    let mut grid = CorrelationGrid::origin(half);
    let mut monitor = TruncationMonitor::default();
    let mut scratch = Rk4Scratch::default();
    let steps = config.steps();
    let mut t = 0.0;
    for step in 1..=steps {
        let dt = if step == steps { config.t_max - t } else { config.dt_ode };
        if dt > 0.0 {
            rk4_in_place(&mut grid.values, dt, &mut scratch, |y, out| {
                rhs_slice(y, half, config.hop_rate, config.defects, out)
            });
        }
        t = if step == steps { config.t_max } else { step as f64 * config.dt_ode };
        monitor.record(grid.boundary_mass(monitor.edge_sites()));
        observe(t, &grid);
    }
    Ok((grid, monitor))
}

/// Homogeneous solution `e^{-4 J_e t} I_n(2 J_e t) I_m(2 J_e t)`.
pub fn defect_free_analytic(n: i64, m: i64, hop_rate: f64, t: f64) -> f64 {
    let (a, b) = (n.unsigned_abs() as usize, m.unsigned_abs() as usize);
    let table = scaled_bessel_i_table(2.0 * hop_rate * t, a.max(b)).expect("finite non-negative argument");
    table[a] * table[b]
}

/// Normalization constant of the asymptotic ansatz,
/// `β = 1 / (1 + 1/√(2π J_e t))`.
pub fn asymptotic_beta(jet: f64) -> f64 {
    1.0 / (1.0 + 2.0 / (2.0 * (2.0 * std::f64::consts::PI * jet).sqrt()))
}

/// Long-time ansatz: an isotropic Gaussian off the diagonal and twice the
/// neighbouring value on it. Only meaningful for `J_e t ≥ 1`.
pub fn asymptotic_correlation(n: i64, m: i64, hop_rate: f64, t: f64) -> Result<f64> {
    let jet = hop_rate * t;
    if jet.is_nan() || jet < 1.0 {
        return Err(Error::OutOfRegime(jet));
    }
    let beta = asymptotic_beta(jet);
    let pi = std::f64::consts::PI;
    let (n, m) = (n as f64, m as f64);
    Ok(if n == m {
        beta / (2.0 * pi * jet) * (-n * n / (2.0 * jet)).exp()
    } else {
        beta / (4.0 * pi * jet) * (-(n * n + m * m) / (4.0 * jet)).exp()
    })
}

/// Prefactor `α = 1/(2√(2π))` obtained by pushing the asymptotic ansatz
/// through `Σ n m C_{n,m}`. The evolved grid grows noticeably faster; both
/// values are reported side by side.
pub fn ansatz_alpha() -> f64 {
    1.0 / (2.0 * (2.0 * std::f64::consts::PI).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rhs_of(grid: &CorrelationGrid, defects: DefectDescriptor) -> CorrelationGrid {
        let mut out = vec![0.0; grid.values.len()];
        correlation_rhs(grid, 1.0, defects, &mut out);
        CorrelationGrid { half_extent: grid.half_extent, values: out }
    }

    #[test]
    fn origin_rhs_by_hand() {
        let d = rhs_of(&CorrelationGrid::origin(4), DefectDescriptor::standard());
        assert_eq!(d.get(0, 0), -4.0);
        for (n, m) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            assert_eq!(d.get(n, m), 1.0);
        }
        assert_eq!(d.mass(), 0.0);
        assert_eq!(d.get(1, 1), 0.0);
    }

    #[test]
    fn euler_limit_of_one_step() {
        let h = 1e-4;
        let next = step_correlation(&CorrelationGrid::origin(5), 1.0, h, DefectDescriptor::standard()).unwrap();
        assert!((next.get(0, 0) - (1.0 - 4.0 * h)).abs() < 20.0 * h * h);
        assert!((next.get(1, 0) - h).abs() < 10.0 * h * h);
        assert!((next.mass() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn defect_terms_move_mass_onto_the_diagonal() {
        let mut g = CorrelationGrid::zeros(3);
        let i = g.index(0, 1);
        g.values[i] = 1.0;
        let with = rhs_of(&g, DefectDescriptor::standard());
        let without = rhs_of(&g, DefectDescriptor::none());
        assert_eq!(with.get(0, 1) - without.get(0, 1), -2.0);
        assert_eq!(with.get(0, 0) - without.get(0, 0), 1.0);
        assert_eq!(with.get(1, 1) - without.get(1, 1), 1.0);
        assert!(with.mass().abs() < 1e-15);
    }

    #[test]
    fn uniform_interior_without_defects_is_stationary() {
        let g = CorrelationGrid::from_fn(6, |_, _| 1.0);
        let d = rhs_of(&g, DefectDescriptor::none());
        assert!(d.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_rate_is_identity() {
        let g = CorrelationGrid::from_fn(3, |n, m| ((n + 4) * (m + 5)) as f64 / 300.0);
        assert_eq!(step_correlation(&g, 0.0, 0.1, DefectDescriptor::standard()).unwrap(), g);
    }

    #[test]
    fn step_policy() {
        let g = CorrelationGrid::origin(2);
        assert!(matches!(step_correlation(&g, 1.0, 0.06, DefectDescriptor::standard()), Err(Error::StepPolicy { .. })));
    }

    #[test]
    fn homogeneous_oracle_and_moments() {
        assert_eq!(defect_free_analytic(0, 0, 1.0, 0.0), 1.0);
        assert_eq!(defect_free_analytic(1, 0, 1.0, 0.0), 0.0);
        let g = CorrelationGrid::from_fn(60, |n, m| defect_free_analytic(n, m, 1.0, 10.0));
        assert!((g.mass() - 1.0).abs() < 1e-10);
        assert!(g.msd().abs() < 1e-10);
    }

    #[test]
    fn homogeneous_oracle_approaches_gaussian() {
        let jet = 25.0;
        let gauss = 1.0 / (4.0 * std::f64::consts::PI * jet);
        let exact = defect_free_analytic(0, 0, 0.5, jet / 0.5);
        assert!((exact / gauss - 1.0).abs() < 0.02);
    }

    #[test]
    fn asymptotic_form() {
        assert!(matches!(asymptotic_correlation(0, 0, 1.0, 0.5), Err(Error::OutOfRegime(_))));
        assert!(asymptotic_beta(1e8) > 0.9999);
        assert!(asymptotic_beta(1e4) > asymptotic_beta(1e2));
        // on the diagonal: twice the neighbour in the large-t limit
        let t = 1e6;
        let diag = asymptotic_correlation(3, 3, 1.0, t).unwrap();
        let next = asymptotic_correlation(3, 4, 1.0, t).unwrap();
        assert!((diag / next - 2.0).abs() < 1e-5);
        assert!((ansatz_alpha() - 0.199_471).abs() < 1e-6);
    }

    #[test]
    fn csv_snapshot_has_header_and_all_sites() {
        let g = CorrelationGrid::origin(1);
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "n,m,C");
        assert_eq!(lines.len(), 10);
        assert!(lines.contains(&"0,0,1e0") && lines.contains(&"1,1,0e0"));
    }
}
