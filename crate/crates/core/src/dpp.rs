//! Exact single-time oracles for discrete orthogonal polynomial ensembles:
//! kernel variance, brute-force enumeration and projection sampling.

use crate::banded::BandedMatrix;
use crate::cumulants::{moment_generating_det, CumulantRequest};
use crate::error::{Error, Result};
use crate::par::{map_indexed, Execution};
use crate::poly::{Basis, Polynomial};
use crate::stieltjes::{orthonormal_basis, Reorthogonalize};
use crate::symbols::LayeredStatistic;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Grids larger than this get a conditioning warning.
const CONDITIONING_GRID: usize = 2000;
const TAIL_MASS: f64 = 1e-15;
/// Largest `|λ (f - c)|` reached by the difference stencil.
const FD_REACH: f64 = 2.0;

#[derive(Debug, Clone)]
pub struct DiscreteOPE {
    grid: Vec<f64>,
    log_weights: Vec<f64>,
    n: usize,
    /// `q[j][i] = sqrt(w_i) p_j(x_i)` for `j < n`.
    q: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

fn ln_factorial(k: usize) -> f64 {
    (1..=k).map(|i| (i as f64).ln()).sum()
}

/// Points `0, 1, …` of a decreasing-tail weight until the remaining mass is
/// negligible; the tail after the last kept point is bounded geometrically.
fn truncate_tail<F: Fn(usize) -> f64>(log_w: F, hard_cap: usize) -> Result<Vec<f64>> {
    let mut out: Vec<f64> = Vec::new();
    let mut peak = f64::NEG_INFINITY;
    for x in 0..hard_cap {
        let l = log_w(x);
        peak = peak.max(l);
        out.push(l);
        if x > 0 {
            let ratio = (l - out[x - 1]).exp();
            if ratio < 0.9 {
                let tail = (l - peak).exp() * ratio / (1.0 - ratio);
                if tail < TAIL_MASS {
                    return Ok(out);
                }
            }
        }
    }
    Err(Error::InvalidParameter(format!(
        "weight tail not below {TAIL_MASS:e} within {hard_cap} points"
    )))
}

impl DiscreteOPE {
    /// Ensemble of `n` particles on `grid` with weights `exp(log_weights)`.
    pub fn new(grid: Vec<f64>, log_weights: Vec<f64>, n: usize) -> Result<Self> {
        if grid.len() != log_weights.len() {
            return Err(Error::Dimension("grid and weights differ in length".into()));
        }
        if n == 0 || n > grid.len() {
            return Err(Error::InvalidParameter(format!(
                "particle count {n} must be in 1..={}",
                grid.len()
            )));
        }
        if log_weights.iter().any(|l| !l.is_finite()) || grid.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("grid or weights".into()));
        }
        let basis = orthonormal_basis(&grid, &log_weights, n, Reorthogonalize::Full)?;
        let mut warnings = Vec::new();
        if grid.len() > CONDITIONING_GRID {
            let smallest = basis.recurrence.off.iter().cloned().fold(f64::INFINITY, f64::min);
            warnings.push(format!(
                "grid of {} points; smallest recurrence normalisation {smallest:e}",
                grid.len()
            ));
        }
        Ok(DiscreteOPE {
            grid,
            log_weights,
            n,
            q: basis.vectors,
            warnings,
        })
    }

    /// Binomial weight `C(M, x) p^x (1-p)^{M-x}` on `0..=M`.
    pub fn krawtchouk(m: usize, p: f64, n: usize) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidParameter("Krawtchouk requires 0 < p < 1".into()));
        }
        let lf: Vec<f64> = (0..=m).map(ln_factorial).collect();
        let grid = (0..=m).map(|x| x as f64).collect();
        let lw = (0..=m)
            .map(|x| lf[m] - lf[x] - lf[m - x] + x as f64 * p.ln() + (m - x) as f64 * (1.0 - p).ln())
            .collect();
        Self::new(grid, lw, n)
    }

    /// Poisson weight `μ^x / x!` on `0..=max_x`.
    pub fn charlier_on(mu: f64, max_x: usize, n: usize) -> Result<Self> {
        if !(mu > 0.0) {
            return Err(Error::InvalidParameter("Charlier requires mu > 0".into()));
        }
        let grid = (0..=max_x).map(|x| x as f64).collect();
        let lw = (0..=max_x).map(|x| x as f64 * mu.ln() - ln_factorial(x)).collect();
        Self::new(grid, lw, n)
    }

    /// Poisson weight truncated where the tail mass drops below `1e-15`.
    pub fn charlier(mu: f64, n: usize) -> Result<Self> {
        if !(mu > 0.0) {
            return Err(Error::InvalidParameter("Charlier requires mu > 0".into()));
        }
        let lw = truncate_tail(|x| x as f64 * mu.ln() - ln_factorial(x), 100_000)?;
        let grid = (0..lw.len()).map(|x| x as f64).collect();
        Self::new(grid, lw, n)
    }

    /// Negative-binomial weight `(β)_x μ^x / x!`, truncated as for Charlier.
    pub fn meixner(beta: f64, mu: f64, n: usize) -> Result<Self> {
        if !(mu > 0.0 && mu < 1.0) || !(beta > 0.0) {
            return Err(Error::InvalidParameter("Meixner requires beta > 0, 0 < mu < 1".into()));
        }
        let lw = truncate_tail(
            |x| {
                (0..x).map(|i| (beta + i as f64).ln()).sum::<f64>() + x as f64 * mu.ln()
                    - ln_factorial(x)
            },
            100_000,
        )?;
        let grid = (0..lw.len()).map(|x| x as f64).collect();
        Self::new(grid, lw, n)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn particles(&self) -> usize {
        self.n
    }

    /// Normalised weights `w_i / Σ w`.
    pub fn weights(&self) -> Vec<f64> {
        let top = self.log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let raw: Vec<f64> = self.log_weights.iter().map(|l| (l - top).exp()).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }

    /// `p_j(x_i)` for the normalised weights.
    pub fn polynomial_values(&self) -> Vec<Vec<f64>> {
        let w = self.weights();
        self.q
            .iter()
            .map(|qj| qj.iter().zip(&w).map(|(q, wi)| q / wi.sqrt()).collect())
            .collect()
    }

    /// `max_{j,k} |Σ_i p_j p_k w_i - δ_jk|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, a) in self.q.iter().enumerate() {
            for (k, b) in self.q.iter().enumerate() {
                let s: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                worst = worst.max((s - if j == k { 1.0 } else { 0.0 }).abs());
            }
        }
        worst
    }

    pub fn kernel(&self) -> KernelTable {
        let size = self.grid.len();
        let w = self.weights();
        let weighted = DMatrix::from_fn(size, size, |i, j| {
            self.q.iter().map(|q| q[i] * q[j]).sum::<f64>()
        });
        let kernel = DMatrix::from_fn(size, size, |i, j| weighted[(i, j)] / (w[i] * w[j]).sqrt());
        KernelTable {
            kernel,
            weights: w,
            weighted,
        }
    }

    /// Full Jacobi matrix of the weight (size `M + 1`), whose spectrum is the grid.
    pub fn full_jacobi(&self) -> Result<BandedMatrix> {
        let size = self.grid.len();
        let basis = orthonormal_basis(&self.grid, &self.log_weights, size, Reorthogonalize::Full)?;
        let r = basis.recurrence;
        Ok(BandedMatrix::from_fn(size, 1, |i, j| {
            if i == j {
                r.diag[i - 1]
            } else {
                r.off[i.min(j) - 1]
            }
        }))
    }

    /// Moment-determinant request for `X = Σ_j f(x_j)` on the exact operator.
    pub fn moment_request(&self, f: Polynomial) -> Result<CumulantRequest> {
        let j = self.full_jacobi()?;
        let stat = LayeredStatistic::uniform(f, vec![0.0])?;
        let mut req = CumulantRequest::new(vec![j], stat, self.n, 1);
        req.exact_operator = true;
        Ok(req)
    }
}

/// Kernel `K(x_i, x_j) = Σ_{k<n} p_k(x_i) p_k(x_j)` on the grid.
#[derive(Debug, Clone)]
pub struct KernelTable {
    pub kernel: DMatrix<f64>,
    pub weights: Vec<f64>,
    /// `sqrt(w_i w_j) K(x_i, x_j)`.
    weighted: DMatrix<f64>,
}

impl KernelTable {
    pub fn from_kernel(kernel: DMatrix<f64>, weights: Vec<f64>) -> Result<Self> {
        let m = weights.len();
        if kernel.nrows() != m || kernel.ncols() != m {
            return Err(Error::Dimension("kernel and weights disagree".into()));
        }
        let weighted = DMatrix::from_fn(m, m, |i, j| kernel[(i, j)] * (weights[i] * weights[j]).sqrt());
        Ok(KernelTable {
            kernel,
            weights,
            weighted,
        })
    }

    pub fn trace(&self) -> f64 {
        (0..self.weights.len()).map(|i| self.kernel[(i, i)] * self.weights[i]).sum()
    }

    /// Largest entry of `K̃² - K̃` for `K̃ = W^{1/2} K W^{1/2}`.
    pub fn idempotency_defect(&self) -> f64 {
        (&self.weighted * &self.weighted - &self.weighted).abs().max()
    }

    /// One-point intensities `K(x, x) w(x)`.
    pub fn intensity(&self) -> Vec<f64> {
        (0..self.weights.len()).map(|i| self.kernel[(i, i)] * self.weights[i]).collect()
    }
}

fn check_values(ope_len: usize, f_values: &[f64]) -> Result<()> {
    if f_values.len() != ope_len {
        return Err(Error::Dimension(format!(
            "{} function values for {ope_len} grid points",
            f_values.len()
        )));
    }
    Ok(())
}

/// `½ Σ_{i,j} (f_i - f_j)² K_ij² w_i w_j`.
pub fn variance_oracle(ope: &DiscreteOPE, f_values: &[f64]) -> Result<f64> {
    check_values(ope.grid.len(), f_values)?;
    if ope.grid.len() > 5000 {
        return Err(Error::InvalidParameter("grid larger than 5000 points".into()));
    }
    let kt = ope.kernel();
    let m = f_values.len();
    let mut acc = 0.0;
    for i in 0..m {
        for j in i + 1..m {
            let d = f_values[i] - f_values[j];
            acc += d * d * kt.weighted[(i, j)].powi(2);
        }
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnumerationReport {
    pub configurations: u64,
    pub mean: f64,
    pub variance: f64,
    pub third_cumulant: f64,
    pub fourth_cumulant: f64,
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) as u128 / (i + 1) as u128;
    }
    c
}

/// Law of `X = Σ f(x_j)` by summing `Π w(x_j) Π_{i<j} (x_i - x_j)²` over all
/// `n`-point configurations.
pub fn enumerate_small(ope: &DiscreteOPE, f_values: &[f64]) -> Result<EnumerationReport> {
    check_values(ope.grid.len(), f_values)?;
    let size = ope.grid.len();
    let n = ope.n;
    let count = binomial(size, n);
    if count > 1_000_000 {
        return Err(Error::EnumerationTooLarge(count));
    }
    let mut logs = Vec::with_capacity(count as usize);
    let mut values = Vec::with_capacity(count as usize);
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let mut lw: f64 = idx.iter().map(|&i| ope.log_weights[i]).sum();
        for a in 0..n {
            for b in a + 1..n {
                lw += 2.0 * (ope.grid[idx[a]] - ope.grid[idx[b]]).abs().ln();
            }
        }
        logs.push(lw);
        values.push(idx.iter().map(|&i| f_values[i]).sum::<f64>());
        let mut pos = n;
        while pos > 0 && idx[pos - 1] == size - n + pos - 1 {
            pos -= 1;
        }
        if pos == 0 {
            break;
        }
        idx[pos - 1] += 1;
        for k in pos..n {
            idx[k] = idx[k - 1] + 1;
        }
    }
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let probs: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let total = kahan(probs.iter().copied());
    let mean = kahan(probs.iter().zip(&values).map(|(p, v)| p * v)) / total;
    let central = |k: i32| kahan(probs.iter().zip(&values).map(|(p, v)| p * (v - mean).powi(k))) / total;
    let (m2, m3, m4) = (central(2), central(3), central(4));
    Ok(EnumerationReport {
        configurations: count as u64,
        mean,
        variance: m2,
        third_cumulant: m3,
        fourth_cumulant: m4 - 3.0 * m2 * m2,
    })
}

fn kahan<I: Iterator<Item = f64>>(it: I) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in it {
        let y = x - c;
        let t = s + y;
        c = (t - s) - y;
        s = t;
    }
    s
}

/// Finite-difference weights for derivatives `0..=max_order` at `x0` on the
/// given nodes.
pub fn fornberg_weights(x0: f64, nodes: &[f64], max_order: usize) -> Vec<Vec<f64>> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; n]; max_order + 1];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    for i in 1..n {
        let mn = i.min(max_order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Cumulants `κ_1..κ_4` of `Σ f(x_j)` from central differences of
/// `ln det P_n e^{λ f(J)} P_n` at `λ = 0`. `f` is centred at its exact mean
/// first, so only the linear term carries the shift.
pub fn determinant_cumulants_fd(ope: &DiscreteOPE, f: &Polynomial) -> Result<[f64; 4]> {
    let values: Vec<f64> = ope.grid.iter().map(|&x| f.eval(x)).collect();
    let intensity = ope.kernel().intensity();
    let mean: f64 = values.iter().zip(&intensity).map(|(v, p)| v * p).sum();
    let shift = mean / ope.n as f64;
    let mut coeffs = f.coeffs().to_vec();
    coeffs[0] -= shift;
    let centred = match *f.basis() {
        Basis::Monomial => Polynomial::monomial(coeffs),
        Basis::Chebyshev { lo, hi } => Polynomial::chebyshev(coeffs, lo, hi)?,
    };
    let req = ope.moment_request(centred)?;
    let scale = values.iter().map(|v| (v - shift).abs()).fold(0.0, f64::max).max(1e-300);
    let half = 6i32;
    let h = FD_REACH / (half as f64 * scale);
    let nodes: Vec<f64> = (-half..=half).map(|j| j as f64 * h).collect();
    let logs = nodes
        .iter()
        .map(|&l| {
            let (sign, log_abs) = moment_generating_det(&req, l)?;
            if sign <= 0.0 {
                return Err(Error::NotConverged("moment determinant not positive".into()));
            }
            Ok(log_abs)
        })
        .collect::<Result<Vec<f64>>>()?;
    let w = fornberg_weights(0.0, &nodes, 4);
    let mut out = [0.0; 4];
    for (k, slot) in out.iter_mut().enumerate() {
        *slot = w[k + 1].iter().zip(&logs).map(|(a, b)| a * b).sum();
    }
    out[0] += mean;
    Ok(out)
}

/// Sequential conditional sampler for a projection kernel.
#[derive(Debug, Clone)]
pub struct ProjectionSampler {
    /// Orthonormal basis of the range of `W^{1/2} K W^{1/2}`, one column per particle.
    basis: DMatrix<f64>,
}

impl ProjectionSampler {
    pub fn new(kernel: &KernelTable) -> Result<Self> {
        let eig = SymmetricEigen::new(kernel.weighted.clone());
        let mut cols = Vec::new();
        for (i, &ev) in eig.eigenvalues.iter().enumerate() {
            if (ev - 1.0).abs() <= 1e-6 {
                cols.push(eig.eigenvectors.column(i).into_owned());
            } else if ev.abs() > 1e-6 {
                return Err(Error::NotAProjection {
                    expected: kernel.trace().round() as usize,
                    detail: format!("eigenvalue {ev} is neither 0 nor 1"),
                });
            }
        }
        if cols.is_empty() {
            return Err(Error::NotAProjection {
                expected: 0,
                detail: "kernel has rank zero".into(),
            });
        }
        Ok(ProjectionSampler {
            basis: DMatrix::from_columns(&cols),
        })
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    /// One configuration (sorted grid indices) from its own stream `(seed, index)`.
    pub fn sample(&self, seed: u64, index: u64) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let mut v = self.basis.clone();
        let mut picked = Vec::with_capacity(v.ncols());
        while v.ncols() > 0 {
            let d = v.ncols() as f64;
            let u: f64 = rng.random::<f64>() * d;
            let mut acc = 0.0;
            let mut x = v.nrows() - 1;
            for r in 0..v.nrows() {
                acc += v.row(r).norm_squared();
                if acc > u {
                    x = r;
                    break;
                }
            }
            picked.push(x);
            let (mut pivot, mut best) = (0, 0.0);
            for c in 0..v.ncols() {
                if v[(x, c)].abs() > best {
                    best = v[(x, c)].abs();
                    pivot = c;
                }
            }
            let pv = v.column(pivot).into_owned();
            let px = pv[x];
            let mut rest: Vec<_> = (0..v.ncols())
                .filter(|&c| c != pivot)
                .map(|c| {
                    let col = v.column(c).into_owned();
                    &col - &pv * (col[x] / px)
                })
                .collect();
            for i in 0..rest.len() {
                for j in 0..i {
                    let proj = rest[j].dot(&rest[i]);
                    let prev = rest[j].clone();
                    rest[i] -= prev * proj;
                }
                let nrm = rest[i].norm();
                rest[i] /= nrm;
            }
            v = if rest.is_empty() {
                DMatrix::zeros(v.nrows(), 0)
            } else {
                DMatrix::from_columns(&rest)
            };
        }
        picked.sort_unstable();
        picked
    }

    /// `count` configurations, sample `i` on stream `i`.
    pub fn sample_many(&self, seed: u64, count: usize, exec: Execution) -> Vec<Vec<usize>> {
        map_indexed(count, exec, |i| self.sample(seed, i as u64))
    }
}
