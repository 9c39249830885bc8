//! Oracles shared by the integration tests. Nothing here calls into the
//! crate's own Bessel or propagation code.
#![allow(dead_code)]

use dephase_walk::C64;

/// Dense `n × n` complex matrix, row major.
#[derive(Clone, Debug)]
pub struct Dense {
    pub n: usize,
    pub a: Vec<C64>,
}

impl Dense {
    pub fn zeros(n: usize) -> Self {
        Dense { n, a: vec![C64::new(0.0, 0.0); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.a[i * n + i] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn at(&self, i: usize, j: usize) -> C64 {
        self.a[i * self.n + j]
    }

    pub fn mul(&self, other: &Dense) -> Dense {
        let n = self.n;
        let mut out = Dense::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let x = self.a[i * n + k];
                if x == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..n {
                    out.a[i * n + j] += x * other.a[k * n + j];
                }
            }
        }
        out
    }

    pub fn scale(&self, s: C64) -> Dense {
        Dense { n: self.n, a: self.a.iter().map(|x| x * s).collect() }
    }

    pub fn add(&self, other: &Dense) -> Dense {
        Dense { n: self.n, a: self.a.iter().zip(&other.a).map(|(x, y)| x + y).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.a.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }
}

/// `exp(A)` by scaling and squaring with a 30-term Taylor series.
pub fn expm(a: &Dense) -> Dense {
    let norm = a.max_abs() * a.n as f64;
    let mut squarings = 0;
    while norm / 2f64.powi(squarings) > 0.5 {
        squarings += 1;
    }
    let scaled = a.scale(C64::new(2f64.powi(-squarings), 0.0));
    let mut term = Dense::identity(a.n);
    let mut sum = Dense::identity(a.n);
    for k in 1..=30 {
        term = term.mul(&scaled).scale(C64::new(1.0 / k as f64, 0.0));
        sum = sum.add(&term);
    }
    for _ in 0..squarings {
        sum = sum.mul(&sum);
    }
    sum
}

/// `U = exp(-i H t)` for the open chain `H_{n,m} = J(δ_{n,m+1} + δ_{n,m-1})`.
pub fn chain_propagator(sites: usize, hopping: f64, t: f64) -> Dense {
    let mut h = Dense::zeros(sites);
    for i in 0..sites - 1 {
        h.a[i * sites + i + 1] = C64::new(hopping, 0.0);
        h.a[(i + 1) * sites + i] = C64::new(hopping, 0.0);
    }
    expm(&h.scale(C64::new(0.0, -t)))
}

/// `J_n(x)` from its power series; fine for `x ≲ 10`.
pub fn bessel_j_series(n: u32, x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = half.powi(n as i32) / (1..=n).map(f64::from).product::<f64>();
    let mut sum = term;
    for k in 1..200 {
        term *= -half * half / (k as f64 * (k + n as usize) as f64);
        sum += term;
        if term.abs() < 1e-18 * sum.abs().max(1e-300) && k > 5 {
            break;
        }
    }
    sum
}

/// `I_n(x) e^{-x}` from its positive power series summed in log space.
pub fn scaled_bessel_i_series(n: u32, x: f64) -> f64 {
    if x == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let lh = (x / 2.0).ln();
    let nf: f64 = (1..=n).map(|i| f64::from(i).ln()).sum();
    let mut log_term = n as f64 * lh - nf - x;
    let mut sum = 0.0;
    for k in 0.. {
        let term = log_term.exp();
        sum += term;
        if k as f64 > x + f64::from(n) && term <= 1e-30 * sum {
            break;
        }
        log_term += 2.0 * lh - ((k + 1) as f64).ln() - ((k + 1 + n as usize) as f64).ln();
    }
    sum
}
