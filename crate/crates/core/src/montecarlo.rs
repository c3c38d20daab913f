//! Multi-time sampling of the stationary non-colliding Ornstein–Uhlenbeck
//! process through the Hermitian matrix model, and empirical cumulants of
//! linear statistics.

use crate::error::{Error, Result};
use crate::par::{map_indexed, pairwise_sum, Execution};
use crate::symbols::LayeredStatistic;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::time::Instant;

#[derive(Debug, Clone, PartialEq)]
pub struct OuConfig {
    pub n: usize,
    pub times: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    /// Report `ξ = x / √n` instead of raw eigenvalues.
    pub rescale: bool,
    pub evaluation: Evaluation,
}

/// How `Σ_j f(ξ_j)` is evaluated per sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Evaluation {
    /// Traces of `H` and `H²` when every layer has degree at most 2,
    /// eigenvalues otherwise.
    #[default]
    Auto,
    Eigenvalues,
}

impl OuConfig {
    pub fn new(n: usize, times: Vec<f64>, samples: usize, seed: u64) -> Self {
        OuConfig {
            n,
            times,
            samples,
            seed,
            rescale: true,
            evaluation: Evaluation::Auto,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParameter("matrix size must be positive".into()));
        }
        if self.samples < 2 {
            return Err(Error::InvalidParameter("at least two samples are needed".into()));
        }
        if self.times.is_empty() {
            return Err(Error::InvalidParameter("at least one time is needed".into()));
        }
        if self.times.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("times".into()));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::NonIncreasingTimes);
        }
        Ok(())
    }
}

/// Hermitian matrix stored as its real diagonal and strict upper triangle.
#[derive(Debug, Clone)]
struct Hermitian {
    n: usize,
    diag: Vec<f64>,
    upper: Vec<Complex64>,
}

impl Hermitian {
    /// Density `∝ exp(-Tr H² / 2)`.
    fn gaussian<R: Rng>(n: usize, rng: &mut R) -> Self {
        let diag = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let upper = (0..n * (n - 1) / 2)
            .map(|_| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(re * s, im * s)
            })
            .collect();
        Hermitian { n, diag, upper }
    }

    /// `H ← e^{-Δ} H + sqrt(1 - e^{-2Δ}) G` with fresh `G`.
    fn ou_step<R: Rng>(&mut self, delta: f64, rng: &mut R) {
        let decay = (-delta).exp();
        let noise = (-(-2.0 * delta).exp_m1()).sqrt();
        let s = std::f64::consts::FRAC_1_SQRT_2 * noise;
        for d in &mut self.diag {
            let g: f64 = rng.sample(StandardNormal);
            *d = decay * *d + noise * g;
        }
        for u in &mut self.upper {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *u = *u * decay + Complex64::new(re * s, im * s);
        }
    }

    fn trace(&self) -> f64 {
        self.diag.iter().sum()
    }

    fn trace_square(&self) -> f64 {
        self.diag.iter().map(|d| d * d).sum::<f64>() + 2.0 * self.upper.iter().map(|u| u.norm_sqr()).sum::<f64>()
    }

    fn dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::<Complex64>::zeros(self.n, self.n);
        let mut k = 0;
        for i in 0..self.n {
            m[(i, i)] = Complex64::new(self.diag[i], 0.0);
            for j in i + 1..self.n {
                m[(i, j)] = self.upper[k];
                m[(j, i)] = self.upper[k].conj();
                k += 1;
            }
        }
        m
    }

    fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.dense().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}

/// Sorted eigenvalues of the matrix OU path at each time, scaled by `1/√n`
/// when `rescale` is set.
pub fn sample_matrix_ou_path<R: Rng>(n: usize, times: &[f64], rescale: bool, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::InvalidParameter("matrix size must be positive".into()));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::NonIncreasingTimes);
    }
    let scale = if rescale { 1.0 / (n as f64).sqrt() } else { 1.0 };
    let mut h = Hermitian::gaussian(n, rng);
    let mut out = Vec::with_capacity(times.len());
    for (m, _) in times.iter().enumerate() {
        if m > 0 {
            let delta = times[m] - times[m - 1];
            if delta > 0.0 {
                h.ou_step(delta, rng);
            }
        }
        out.push(h.eigenvalues().into_iter().map(|x| x * scale).collect());
    }
    Ok(out)
}

fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Values of every statistic on one sampled path.
fn sample_statistics(cfg: &OuConfig, stats: &[LayeredStatistic], use_traces: bool, index: u64) -> Vec<f64> {
    let mut rng = sample_rng(cfg.seed, index);
    let n = cfg.n;
    let scale = if cfg.rescale { 1.0 / (n as f64).sqrt() } else { 1.0 };
    let mut h = Hermitian::gaussian(n, &mut rng);
    let mut acc = vec![0.0; stats.len()];
    for m in 0..cfg.times.len() {
        if m > 0 {
            h.ou_step(cfg.times[m] - cfg.times[m - 1], &mut rng);
        }
        if use_traces {
            let p1 = h.trace() * scale;
            let p2 = h.trace_square() * scale * scale;
            for (a, s) in acc.iter_mut().zip(stats) {
                let f = &s.layers[m];
                // Σ_j f(ξ_j) for deg f ≤ 2 from power sums, via exact interpolation.
                let (c0, c1, c2) = quadratic_coeffs(|x| f.eval(x));
                *a += c0 * n as f64 + c1 * p1 + c2 * p2;
            }
        } else {
            let ev: Vec<f64> = h.eigenvalues().into_iter().map(|x| x * scale).collect();
            for (a, s) in acc.iter_mut().zip(stats) {
                let f = &s.layers[m];
                *a += ev.iter().map(|&x| f.eval(x)).sum::<f64>();
            }
        }
    }
    acc
}

/// Monomial coefficients of a polynomial of degree at most 2.
fn quadratic_coeffs<F: Fn(f64) -> f64>(f: F) -> (f64, f64, f64) {
    let (fm, f0, fp) = (f(-1.0), f(0.0), f(1.0));
    (f0, 0.5 * (fp - fm), 0.5 * (fp + fm) - f0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatisticSummary {
    pub mean: f64,
    pub variance: f64,
    pub k3: f64,
    pub k4: f64,
    pub se_mean: f64,
    pub se_variance: f64,
    pub se_k3: f64,
    pub se_k4: f64,
}

/// Unbiased k-statistics up to order four with standard errors.
pub fn summarize(xs: &[f64]) -> Result<StatisticSummary> {
    let len = xs.len();
    if len < 4 {
        return Err(Error::InvalidParameter("k-statistics need at least four samples".into()));
    }
    let n = len as f64;
    let mean = pairwise_sum(xs) / n;
    let central = |k: i32| -> f64 {
        let v: Vec<f64> = xs.iter().map(|x| (x - mean).powi(k)).collect();
        pairwise_sum(&v) / n
    };
    let (m2, m3, m4) = (central(2), central(3), central(4));
    let k2 = n / (n - 1.0) * m2;
    let k3 = n * n / ((n - 1.0) * (n - 2.0)) * m3;
    let k4 = n * n * ((n + 1.0) * m4 - 3.0 * (n - 1.0) * m2 * m2) / ((n - 1.0) * (n - 2.0) * (n - 3.0));
    let se_variance = ((m4 - m2 * m2 * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt();
    Ok(StatisticSummary {
        mean,
        variance: k2,
        k3,
        k4,
        se_mean: (k2 / n).sqrt(),
        se_variance,
        se_k3: (6.0 * k2.powi(3) / n).sqrt(),
        se_k4: (24.0 * k2.powi(4) / n).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub config: OuConfig,
    pub statistics: Vec<StatisticSummary>,
    pub samples_completed: usize,
    pub wall_time_seconds: f64,
    /// Per-sample values, `samples[i][s]` for sample `i` and statistic `s`.
    pub samples: Option<Vec<Vec<f64>>>,
}

/// Sample `X = Σ_m Σ_j f(m, ξ_j(t_m))` for every statistic.
pub fn run_experiment(
    cfg: &OuConfig,
    stats: &[LayeredStatistic],
    exec: Execution,
    keep_samples: bool,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    if stats.is_empty() {
        return Err(Error::InvalidParameter("no statistics requested".into()));
    }
    for s in stats {
        if s.times != cfg.times {
            return Err(Error::Dimension("statistic times differ from the sampling times".into()));
        }
    }
    let use_traces = cfg.evaluation == Evaluation::Auto && stats.iter().all(|s| s.max_degree() <= 2);
    let start = Instant::now();
    let rows = map_indexed(cfg.samples, exec, |i| sample_statistics(cfg, stats, use_traces, i as u64));
    let statistics = (0..stats.len())
        .map(|s| {
            let col: Vec<f64> = rows.iter().map(|r| r[s]).collect();
            if col.iter().all(|v| *v == col[0]) {
                // Deterministic statistic: report exact zeros.
                return Ok(StatisticSummary {
                    mean: col[0],
                    variance: 0.0,
                    k3: 0.0,
                    k4: 0.0,
                    se_mean: 0.0,
                    se_variance: 0.0,
                    se_k3: 0.0,
                    se_k4: 0.0,
                });
            }
            summarize(&col)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport {
        config: cfg.clone(),
        statistics,
        samples_completed: rows.len(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        samples: keep_samples.then_some(rows),
    })
}
