//! Power-law fits and curve comparisons for spreading data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Empirical prefactor of `E[⟨n⟩²] ≈ 0.72 √(J_e t)` used for theory overlays.
pub const REFERENCE_COM2_PREFACTOR: f64 = 0.72;

/// Fewest samples a power-law fit accepts.
pub const MIN_FIT_SAMPLES: usize = 10;

/// A measured curve `y(t)`, optionally with standard errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpreadingSeries {
    times: Vec<f64>,
    values: Vec<f64>,
    stderr: Option<Vec<f64>>,
}

impl SpreadingSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::build(times, values, None)
    }

    pub fn with_stderr(times: Vec<f64>, values: Vec<f64>, stderr: Vec<f64>) -> Result<Self> {
        Self::build(times, values, Some(stderr))
    }

    fn build(times: Vec<f64>, values: Vec<f64>, stderr: Option<Vec<f64>>) -> Result<Self> {
        if times.len() != values.len() || stderr.as_ref().is_some_and(|e| e.len() != times.len()) {
            return Err(Error::Series("times, values and errors differ in length".into()));
        }
        if times.is_empty() {
            return Err(Error::Series("empty series".into()));
        }
        if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Series("times must be finite and strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Series("values must be finite".into()));
        }
        Ok(SpreadingSeries { times, values, stderr })
    }

    /// Samples `f(t)` at the given times.
    pub fn from_fn(times: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = times.iter().map(|&t| f(t)).collect();
        Self::new(times, values)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn stderr(&self) -> Option<&[f64]> {
        self.stderr.as_deref()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn range(&self) -> (f64, f64) {
        (self.times[0], self.times[self.times.len() - 1])
    }

    /// Samples with `lo ≤ t ≤ hi`.
    pub fn restrict(&self, lo: f64, hi: f64) -> Result<Self> {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| self.times[i] >= lo && self.times[i] <= hi).collect();
        let pick = |v: &[f64]| keep.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Self::build(pick(&self.times), pick(&self.values), self.stderr.as_deref().map(pick))
    }

    /// Same values against `t · factor`.
    pub fn rescale_times(&self, factor: f64) -> Result<Self> {
        Self::build(self.times.iter().map(|t| t * factor).collect(), self.values.clone(), self.stderr.clone())
    }

    /// Linear interpolation; `None` outside the sampled range.
    pub fn interpolate(&self, t: f64) -> Option<f64> {
        let (lo, hi) = self.range();
        if !(t >= lo && t <= hi) {
            return None;
        }
        let k = self.times.partition_point(|&x| x < t);
        if self.times[k] == t {
            return Some(self.values[k]);
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let (y0, y1) = (self.values[k - 1], self.values[k]);
        Some(y0 + (y1 - y0) * (t - t0) / (t1 - t0))
    }
}

/// `y ≈ prefactor · t^exponent` fitted by least squares in log-log space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub window: (f64, f64),
    /// RMS residual of `ln y`.
    pub residual: f64,
    pub exponent_stderr: f64,
}

fn log_points(series: &SpreadingSeries, window: (f64, f64)) -> Result<(Vec<f64>, Vec<f64>)> {
    let (lo, hi) = window;
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo < hi) {
        return Err(Error::Fit(format!("bad window [{lo}, {hi}]")));
    }
    let (first, last) = series.range();
    let slack = 1e-9 * hi.abs().max(1.0);
    if lo < first - slack || hi > last + slack {
        return Err(Error::Fit(format!("window [{lo}, {hi}] exceeds series range [{first}, {last}]")));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&t, &y) in series.times.iter().zip(&series.values) {
        if t < lo || t > hi {
            continue;
        }
        if y <= 0.0 {
            return Err(Error::Fit(format!("non-positive value {y} at t = {t}")));
        }
        xs.push(t.ln());
        ys.push(y.ln());
    }
    if xs.len() < MIN_FIT_SAMPLES {
        return Err(Error::Fit(format!("{} samples in window, need {MIN_FIT_SAMPLES}", xs.len())));
    }
    Ok((xs, ys))
}

pub fn fit_power_law(series: &SpreadingSeries, window: (f64, f64)) -> Result<PowerLawFit> {
    let (xs, ys) = log_points(series, window)?;
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let ssr: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - exponent * x).powi(2)).sum();
    Ok(PowerLawFit {
        exponent,
        prefactor: intercept.exp(),
        window,
        residual: (ssr / n).sqrt(),
        exponent_stderr: (ssr / (n - 2.0) / sxx).sqrt(),
    })
}

/// Best prefactor `A` for `y ≈ A t^exponent` with the exponent held fixed.
pub fn fit_prefactor(series: &SpreadingSeries, window: (f64, f64), exponent: f64) -> Result<f64> {
    let (xs, ys) = log_points(series, window)?;
    let n = xs.len() as f64;
    Ok((xs.iter().zip(&ys).map(|(x, y)| y - exponent * x).sum::<f64>() / n).exp())
}

/// Outcome of [`compare_series`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub max_rel_dev: f64,
    pub mean_rel_dev: f64,
    /// Time of the largest deviation.
    pub worst_time: f64,
    pub points: usize,
    pub rel_tol: f64,
    pub pass: bool,
}

/// Relative deviation `|b - a| / |a|` at the times of `a` that fall inside
/// the range of `b`, with `b` interpolated linearly.
pub fn compare_series(a: &SpreadingSeries, b: &SpreadingSeries, rel_tol: f64) -> Result<Comparison> {
    let mut max_rel_dev: f64 = 0.0;
    let mut worst_time = f64::NAN;
    let mut sum = 0.0;
    let mut points = 0;
    for (&t, &ya) in a.times.iter().zip(&a.values) {
        let Some(yb) = b.interpolate(t) else { continue };
        let dev = if ya == yb { 0.0 } else { (yb - ya).abs() / ya.abs() };
        if dev > max_rel_dev || points == 0 {
            max_rel_dev = dev;
            worst_time = t;
        }
        sum += dev;
        points += 1;
    }
    if points == 0 {
        return Err(Error::Series("series have no common time range".into()));
    }
    Ok(Comparison {
        max_rel_dev,
        mean_rel_dev: sum / points as f64,
        worst_time,
        points,
        rel_tol,
        pass: max_rel_dev <= rel_tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn exact_square_root() {
        let s = SpreadingSeries::from_fn(grid(1.0, 60.0, 200), |t| 0.72 * t.sqrt()).unwrap();
        let f = fit_power_law(&s, (10.0, 50.0)).unwrap();
        assert!((f.exponent - 0.5).abs() < 1e-12);
        assert!((f.prefactor - 0.72).abs() < 1e-12);
        assert!(f.residual < 1e-12);
        assert!((fit_prefactor(&s, (10.0, 50.0), 0.5).unwrap() - 0.72).abs() < 1e-12);
    }

    #[test]
    fn exact_linear_law() {
        let j_e = 0.5;
        let s = SpreadingSeries::from_fn(grid(0.5, 50.0, 100), |t| 2.0 * j_e * t).unwrap();
        let f = fit_power_law(&s, (10.0, 50.0)).unwrap();
        assert!((f.exponent - 1.0).abs() < 1e-12);
        assert!((f.prefactor - 2.0 * j_e).abs() < 1e-12);
    }

    #[test]
    fn fit_preconditions() {
        let s = SpreadingSeries::from_fn(grid(1.0, 20.0, 20), |t| t - 5.0).unwrap();
        assert!(matches!(fit_power_law(&s, (2.0, 19.0)), Err(Error::Fit(_))));
        let s = SpreadingSeries::from_fn(grid(1.0, 20.0, 20), |t| t).unwrap();
        assert!(fit_power_law(&s, (2.0, 8.0)).is_err());
        assert!(fit_power_law(&s, (2.0, 30.0)).is_err());
        assert!(fit_power_law(&s, (5.0, 2.0)).is_err());
        assert!(fit_power_law(&s, (1.0, 20.0)).is_ok());
    }

    #[test]
    fn series_validation() {
        assert!(SpreadingSeries::new(vec![1.0, 1.0], vec![0.0, 0.0]).is_err());
        assert!(SpreadingSeries::new(vec![1.0, 2.0], vec![0.0]).is_err());
        assert!(SpreadingSeries::new(vec![1.0, 2.0], vec![0.0, f64::NAN]).is_err());
        assert!(SpreadingSeries::with_stderr(vec![1.0], vec![0.0], vec![]).is_err());
        assert!(SpreadingSeries::new(vec![], vec![]).is_err());
    }

    #[test]
    fn comparisons() {
        let a = SpreadingSeries::from_fn(grid(1.0, 10.0, 10), |t| t * t).unwrap();
        let same = compare_series(&a, &a, 0.0).unwrap();
        assert_eq!(same.max_rel_dev, 0.0);
        assert!(same.pass);
        let scaled = SpreadingSeries::from_fn(a.times().to_vec(), |t| 1.04 * t * t).unwrap();
        let c = compare_series(&a, &scaled, 0.05).unwrap();
        assert!(c.pass && (c.max_rel_dev - 0.04).abs() < 1e-12);
        let later = SpreadingSeries::from_fn(grid(20.0, 30.0, 5), |t| t).unwrap();
        assert!(compare_series(&a, &later, 0.1).is_err());
    }

    #[test]
    fn interpolation_between_samples() {
        let s = SpreadingSeries::new(vec![0.0, 1.0, 3.0], vec![0.0, 2.0, 6.0]).unwrap();
        assert_eq!(s.interpolate(2.0), Some(4.0));
        assert_eq!(s.interpolate(3.0), Some(6.0));
        assert_eq!(s.interpolate(3.5), None);
    }

    #[test]
    fn fit_report_json_fields() {
        let s = SpreadingSeries::from_fn(grid(1.0, 60.0, 50), |t| 0.5 * t.sqrt()).unwrap();
        let text = serde_json::to_string(&fit_power_law(&s, (10.0, 50.0)).unwrap()).unwrap();
        let at = |k: &str| text.find(&format!("\"{k}\":")).unwrap();
        let order = ["exponent", "prefactor", "window", "residual", "exponent_stderr"].map(at);
        assert!(order.windows(2).all(|w| w[0] < w[1]), "{text}");
    }

    proptest! {
        #[test]
        fn scale_covariance(c in 1e-3f64..1e3, a in 0.1f64..3.0, p in -1.0f64..2.0, noise in prop::collection::vec(-0.2f64..0.2, 30)) {
            let times = grid(1.0, 40.0, 30);
            let values: Vec<f64> = times.iter().zip(&noise).map(|(t, e)| a * t.powf(p) * e.exp()).collect();
            let s = SpreadingSeries::new(times.clone(), values.clone()).unwrap();
            let sc = SpreadingSeries::new(times, values.iter().map(|v| v * c).collect()).unwrap();
            let f = fit_power_law(&s, (1.0, 40.0)).unwrap();
            let g = fit_power_law(&sc, (1.0, 40.0)).unwrap();
            prop_assert!((g.exponent - f.exponent).abs() < 1e-12);
            prop_assert!((g.prefactor / (c * f.prefactor) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn time_rescaling(c in 0.1f64..10.0, a in 0.1f64..3.0, p in -1.0f64..2.0, noise in prop::collection::vec(-0.2f64..0.2, 30)) {
            let times = grid(1.0, 40.0, 30);
            let values: Vec<f64> = times.iter().zip(&noise).map(|(t, e)| a * t.powf(p) * e.exp()).collect();
            let s = SpreadingSeries::new(times, values).unwrap();
            let f = fit_power_law(&s, (1.0, 40.0)).unwrap();
            let g = fit_power_law(&s.rescale_times(c).unwrap(), (c, 40.0 * c)).unwrap();
            prop_assert!((g.exponent - f.exponent).abs() < 1e-10);
            prop_assert!((g.prefactor / (f.prefactor * c.powf(-f.exponent)) - 1.0).abs() < 1e-10);
        }
    }
}
