//! Finite-n moments and cumulants of multi-layer linear statistics from the
//! determinant `E e^{λX} = det P_n e^{λA_1} ⋯ e^{λA_N} P_n`, with
//! `A_m = f(m, 𝕁_m)`.

use crate::banded::{poly_apply, BandedMatrix, LogDetParts};
use crate::dense::{expm, leading_log_det};
use crate::error::{Error, Result};
use crate::par::{map_indexed, Execution};
use crate::symbols::LayeredStatistic;
use nalgebra::DMatrix;
use num_complex::Complex64;
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Radius {
    /// `0.5 / (2 Σ_m bound_m)` with `bound_m` the largest absolute row sum.
    Auto,
    Fixed(f64),
}

/// How `e^{λA}` is formed on the full truncation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExpBackend {
    /// Banded Taylor series; valid because `|λ| ‖A‖ ≤ 1/4` on the contour.
    #[default]
    BandedTaylor,
    /// Dense Padé on the whole truncation (cubic cost).
    DensePade,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CumulantRequest {
    /// Weighted recurrence matrices, one per layer, all of the same size.
    pub matrices: Vec<BandedMatrix>,
    pub stat: LayeredStatistic,
    pub n: usize,
    pub k_max: usize,
    pub radius: Radius,
    pub quad_points: usize,
    /// The matrices are the complete finite operators, so no truncation
    /// margin is needed.
    pub exact_operator: bool,
    pub execution: Execution,
}

impl CumulantRequest {
    pub fn new(matrices: Vec<BandedMatrix>, stat: LayeredStatistic, n: usize, k_max: usize) -> Self {
        CumulantRequest {
            matrices,
            stat,
            n,
            k_max,
            radius: Radius::Auto,
            quad_points: 64,
            exact_operator: false,
            execution: Execution::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.matrices.len() != self.stat.layers.len() || self.matrices.is_empty() {
            return Err(Error::Dimension(format!(
                "{} matrices for {} layers",
                self.matrices.len(),
                self.stat.layers.len()
            )));
        }
        let s = self.matrices[0].dim();
        if self.matrices.iter().any(|m| m.dim() != s) {
            return Err(Error::Dimension("all layer matrices must share one size".into()));
        }
        if self.k_max == 0 {
            return Err(Error::InvalidParameter("k_max must be at least 1".into()));
        }
        if self.k_max > 8 {
            return Err(Error::InvalidParameter("cumulants above order 8 are not supported".into()));
        }
        if self.n == 0 || self.n > s {
            return Err(Error::Dimension(format!("cut {} outside 1..={s}", self.n)));
        }
        if !self.quad_points.is_power_of_two() || self.quad_points < 8 * self.k_max {
            return Err(Error::InvalidParameter(format!(
                "quad_points must be a power of two and at least {}",
                8 * self.k_max
            )));
        }
        if let Radius::Fixed(r) = self.radius {
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::InvalidParameter("radius must be positive".into()));
            }
        }
        Ok(())
    }

    fn max_layer_bandwidth(&self) -> usize {
        self.matrices
            .iter()
            .zip(&self.stat.layers)
            .map(|(j, f)| j.bandwidth() * f.degree())
            .max()
            .unwrap_or(0)
            .max(1)
    }

    /// Size required by the truncation-margin policy.
    pub fn required_size(&self) -> usize {
        let n_layers = self.matrices.len();
        self.n + (self.k_max + 2) * n_layers * self.max_layer_bandwidth() + 64
    }

    fn check_margin(&self) -> Result<()> {
        let s = self.matrices[0].dim();
        if !self.exact_operator && s < self.required_size() {
            return Err(Error::TruncationTooSmall(format!(
                "size {s} below required {} for cut {} and k_max {}",
                self.required_size(),
                self.n,
                self.k_max
            )));
        }
        Ok(())
    }

    /// `A_m = f(m, 𝕁_m)` on the full truncation.
    pub fn layer_operators(&self) -> Result<Vec<BandedMatrix>> {
        self.matrices
            .iter()
            .zip(&self.stat.layers)
            .map(|(j, f)| poly_apply(j, f))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CumulantMethod {
    ContourFull,
    ContourWindowed,
    CompositionSeries,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CumulantDiagnostics {
    pub radius: f64,
    pub truncation: usize,
    pub window: Option<usize>,
    /// Largest imaginary part among the extracted cumulants.
    pub quadrature_residual: f64,
    pub quad_points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CumulantReport {
    pub method: CumulantMethod,
    /// `(k, 𝒞_k)`; windowed reports start at `k = 2`.
    pub values: Vec<(usize, f64)>,
    pub diagnostics: CumulantDiagnostics,
}

impl CumulantReport {
    pub fn get(&self, k: usize) -> Option<f64> {
        self.values.iter().find(|(j, _)| *j == k).map(|(_, v)| *v)
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// `ln E e^{λX}` as `(sign, log|·|)` for real `λ`, via dense exponentials.
pub fn moment_generating_det(req: &CumulantRequest, lambda: f64) -> Result<(f64, f64)> {
    req.validate()?;
    if !req.exact_operator {
        let n_layers = req.matrices.len();
        let need = req.n + 2 * n_layers * req.max_layer_bandwidth();
        if req.matrices[0].dim() < need {
            return Err(Error::TruncationTooSmall(format!(
                "size {} below {need}",
                req.matrices[0].dim()
            )));
        }
    }
    let ops = req.layer_operators()?;
    let s = ops[0].dim();
    let mut prod = DMatrix::<f64>::identity(s, s);
    for a in &ops {
        prod *= expm(&(a.to_dense() * lambda))?;
    }
    let parts = leading_log_det(&prod, req.n)?;
    Ok((parts.sign(), parts.log_abs_or_neg_inf()))
}

fn auto_radius(bounds: &[f64]) -> f64 {
    let total: f64 = bounds.iter().sum();
    if total > 0.0 {
        0.5 / (2.0 * total)
    } else {
        1.0
    }
}

fn wrap_phase(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y == -PI {
        PI
    } else {
        y
    }
}

/// Taylor coefficients `c_1..c_{k_max}` of `L(λ)` from samples on a circle
/// of `radius`, times `k!`, plus the largest imaginary residual.
fn extract(samples: &[Complex64], radius: f64, k_max: usize) -> Result<(Vec<f64>, f64)> {
    let m = samples.len();
    for j in 0..m {
        let d = samples[(j + 1) % m] - samples[j];
        if !d.re.is_finite() || !d.im.is_finite() || d.norm() > 1.0 {
            return Err(Error::ContourHitsZero);
        }
    }
    let mut out = Vec::with_capacity(k_max);
    let mut resid: f64 = 0.0;
    for k in 1..=k_max {
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, s) in samples.iter().enumerate() {
            let ang = -2.0 * PI * ((j * k) % m) as f64 / m as f64;
            acc += s * Complex64::from_polar(1.0, ang);
        }
        let scale = factorial(k) / (m as f64 * radius.powi(k as i32));
        out.push(acc.re * scale);
        resid = resid.max((acc.im * scale).abs());
    }
    Ok((out, resid))
}

fn contour_points(m: usize, radius: f64) -> Vec<Complex64> {
    (0..m)
        .map(|j| Complex64::from_polar(radius, 2.0 * PI * j as f64 / m as f64))
        .collect()
}

/// `e^{λA}` for banded `A` and `|λ| ‖A‖ ≤ 1/4`, by a truncated Taylor series.
fn banded_exp_taylor(a: &BandedMatrix<Complex64>) -> BandedMatrix<Complex64> {
    let dim = a.dim();
    let mut sum = BandedMatrix::<Complex64>::identity(dim);
    let mut term = sum.clone();
    for m in 1..60 {
        term = term
            .matmul(a)
            .scale_by(Complex64::new(1.0 / m as f64, 0.0))
            .drop_below(1e-20);
        if term.bandwidth() == 0 && term.max_row_sum() == 0.0 {
            break;
        }
        sum = sum.sum(&term);
        if term.max_row_sum() < 1e-18 {
            break;
        }
    }
    sum
}

fn log_det_sample(parts: LogDetParts) -> Result<Complex64> {
    if parts.singular {
        return Err(Error::ContourHitsZero);
    }
    Ok(Complex64::new(parts.log_abs, wrap_phase(parts.phase())))
}

/// Cumulants `𝒞_1..𝒞_{k_max}` by contour quadrature on the full truncation.
pub fn cumulants_contour(req: &CumulantRequest, backend: ExpBackend) -> Result<CumulantReport> {
    req.validate()?;
    req.check_margin()?;
    let ops = req.layer_operators()?;
    let n = req.n;
    let means: Vec<f64> = ops.iter().map(|a| a.trace_leading(n) / n as f64).collect();
    let c1: f64 = ops.iter().map(|a| a.trace_leading(n)).sum();
    let shifted: Vec<BandedMatrix> = ops
        .iter()
        .zip(&means)
        .map(|(a, c)| {
            use crate::poly::Algebra;
            a.add_unit(-c)
        })
        .collect();
    let bounds: Vec<f64> = shifted.iter().map(|a| a.max_row_sum()).collect();
    let radius = match req.radius {
        Radius::Auto => auto_radius(&bounds),
        Radius::Fixed(r) => r,
    };
    let complex: Vec<BandedMatrix<Complex64>> = shifted
        .iter()
        .map(|a| a.map(|x| Complex64::new(x, 0.0)))
        .collect();
    let dense: Vec<DMatrix<Complex64>> = match backend {
        ExpBackend::DensePade => complex.iter().map(|a| a.to_dense()).collect(),
        ExpBackend::BandedTaylor => vec![],
    };
    let sample = |lambda: Complex64| -> Result<Complex64> {
        match backend {
            ExpBackend::BandedTaylor => {
                let mut prod: Option<BandedMatrix<Complex64>> = None;
                for a in &complex {
                    let e = banded_exp_taylor(&a.scale_by(lambda));
                    prod = Some(match prod {
                        None => e,
                        Some(p) => p.matmul(&e).drop_below(1e-20),
                    });
                }
                log_det_sample(prod.expect("at least one layer").leading_log_det(n)?)
            }
            ExpBackend::DensePade => {
                let s = dense[0].nrows();
                let mut prod = DMatrix::<Complex64>::identity(s, s);
                for a in &dense {
                    prod *= expm(&(a * lambda))?;
                }
                log_det_sample(leading_log_det(&prod, n)?)
            }
        }
    };
    let (values, resid, points) = run_contour(req, radius, &sample)?;
    let mut all = vec![(1, c1)];
    all.extend(values.iter().enumerate().skip(1).map(|(i, v)| (i + 1, *v)));
    Ok(CumulantReport {
        method: CumulantMethod::ContourFull,
        values: all,
        diagnostics: CumulantDiagnostics {
            radius,
            truncation: req.matrices[0].dim(),
            window: None,
            quadrature_residual: resid,
            quad_points: points,
        },
    })
}

fn run_contour<F>(req: &CumulantRequest, radius: f64, sample: &F) -> Result<(Vec<f64>, f64, usize)>
where
    F: Fn(Complex64) -> Result<Complex64> + Sync,
{
    let mut m = req.quad_points;
    let mut last = None;
    for _ in 0..2 {
        let pts = contour_points(m, radius);
        let samples: Vec<Complex64> = map_indexed(m, req.execution, |j| sample(pts[j]))
            .into_iter()
            .collect::<Result<_>>()?;
        let (vals, resid) = extract(&samples, radius, req.k_max)?;
        if resid <= 1e-8 {
            return Ok((vals, resid, m));
        }
        last = Some((vals, resid, m));
        m *= 2;
    }
    Ok(last.expect("two attempts"))
}

/// Window half-width `2a(k+1)` for the largest layer bandwidth `a`.
pub fn window_width(req: &CumulantRequest, k: usize) -> usize {
    2 * req.max_layer_bandwidth() * (k + 1)
}

/// Dense windowed layer operators on the index block `(n - ℓ, n + ℓ]`, with
/// the local cut position.
struct LocalBlock {
    ops: Vec<DMatrix<f64>>,
    cut: usize,
    lo: usize,
}

fn local_block(req: &CumulantRequest, width: usize) -> Result<LocalBlock> {
    let s = req.matrices[0].dim();
    let n = req.n;
    let lo = n.saturating_sub(width) + 1;
    let hi = n + width;
    let reach = req
        .matrices
        .iter()
        .zip(&req.stat.layers)
        .map(|(j, f)| j.bandwidth() * f.degree())
        .max()
        .unwrap_or(0);
    let top = hi + reach;
    if hi > s || (!req.exact_operator && top > s) {
        return Err(Error::TruncationTooSmall(format!(
            "window up to index {} needs size {} (have {s})",
            hi,
            if req.exact_operator { hi } else { top }
        )));
    }
    let big_lo = lo.saturating_sub(reach).max(1);
    let big_hi = top.min(s);
    let mut ops = Vec::with_capacity(req.matrices.len());
    for (j, f) in req.matrices.iter().zip(&req.stat.layers) {
        let dense = j.dense_block(big_lo, big_hi);
        let local = BandedMatrix::from_dense(&dense, j.bandwidth())?;
        let a = poly_apply_clipped(&local, f)?;
        let off = lo - big_lo + 1;
        ops.push(a.dense_block(off, off + (hi - lo)));
    }
    Ok(LocalBlock {
        ops,
        cut: n - lo + 1,
        lo,
    })
}

/// `p(J)` without the truncation guard: entries within `deg · bandwidth` of
/// the block edge are discarded by the caller.
fn poly_apply_clipped(j: &BandedMatrix, p: &crate::poly::Polynomial) -> Result<BandedMatrix> {
    if p.degree() * j.bandwidth() < j.dim() {
        return poly_apply(j, p);
    }
    let out = p.apply(j);
    if !out.is_finite() {
        return Err(Error::NonFinite("windowed layer operator".into()));
    }
    Ok(out)
}

fn windowed_contour(req: &CumulantRequest, width: usize) -> Result<(Vec<f64>, f64, f64, usize)> {
    let block = local_block(req, width)?;
    let cut = block.cut;
    let shifted: Vec<DMatrix<f64>> = block
        .ops
        .iter()
        .map(|a| {
            let c = (0..cut).map(|i| a[(i, i)]).sum::<f64>() / cut as f64;
            a - DMatrix::<f64>::identity(a.nrows(), a.ncols()) * c
        })
        .collect();
    let bounds: Vec<f64> = shifted
        .iter()
        .map(|a| {
            a.row_iter()
                .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
                .fold(0.0, f64::max)
        })
        .collect();
    let radius = match req.radius {
        Radius::Auto => auto_radius(&bounds),
        Radius::Fixed(r) => r,
    };
    let complex: Vec<DMatrix<Complex64>> = shifted
        .iter()
        .map(|a| a.map(|x| Complex64::new(x, 0.0)))
        .collect();
    let sample = |lambda: Complex64| -> Result<Complex64> {
        let size = complex[0].nrows();
        let mut prod = DMatrix::<Complex64>::identity(size, size);
        for a in &complex {
            prod *= expm(&(a * lambda))?;
        }
        log_det_sample(leading_log_det(&prod, cut)?)
    };
    let (vals, resid, points) = run_contour(req, radius, &sample)?;
    Ok((vals, resid, radius, points))
}

/// `𝒞_k` (`k ≥ 2`) from the windowed operators `R A_m R`, `R = P_{n+ℓ} - P_{n-ℓ}`,
/// `ℓ = 2a(k+1)`; the cost does not depend on `n`.
pub fn cumulants_windowed(req: &CumulantRequest, k: usize) -> Result<f64> {
    if k < 2 {
        return Err(Error::WindowOrder(k));
    }
    let mut r = req.clone();
    r.k_max = k;
    r.validate()?;
    let (vals, _, _, _) = windowed_contour(&r, window_width(&r, k))?;
    Ok(vals[k - 1])
}

/// `𝒞_2..𝒞_{k_max}` from a single window sized for `k_max`.
pub fn cumulants_windowed_report(req: &CumulantRequest) -> Result<CumulantReport> {
    if req.k_max < 2 {
        return Err(Error::WindowOrder(req.k_max));
    }
    req.validate()?;
    let width = window_width(req, req.k_max);
    let (vals, resid, radius, points) = windowed_contour(req, width)?;
    Ok(CumulantReport {
        method: CumulantMethod::ContourWindowed,
        values: vals.iter().enumerate().skip(1).map(|(i, v)| (i + 1, *v)).collect(),
        diagnostics: CumulantDiagnostics {
            radius,
            truncation: req.matrices[0].dim(),
            window: Some(width),
            quadrature_residual: resid,
            quad_points: points,
        },
    })
}

/// `𝒞_1 = Σ_m Σ_{j ≤ n} f(m, 𝕁_m)_{jj}`.
pub fn first_cumulant(req: &CumulantRequest) -> Result<f64> {
    req.validate()?;
    Ok(req.layer_operators()?.iter().map(|a| a.trace_leading(req.n)).sum())
}

/// `𝒞_2` from the second-order composition sum
/// `2 [Tr P(Σ_m A_m²/2 + Σ_{u<v} A_u A_v)P - ½ Tr (P Σ_m A_m P)²]`
/// on the windowed operators.
pub fn composition_series_c2(req: &CumulantRequest) -> Result<f64> {
    let mut r = req.clone();
    r.k_max = 2;
    r.quad_points = r.quad_points.max(16);
    r.validate()?;
    let block = local_block(&r, window_width(&r, 2))?;
    let p = block.cut;
    let ops = &block.ops;
    let lead = |m: &DMatrix<f64>| (0..p).map(|i| m[(i, i)]).sum::<f64>();
    let mut second = 0.0;
    for (u, a) in ops.iter().enumerate() {
        second += 0.5 * lead(&(a * a));
        for b in &ops[u + 1..] {
            second += lead(&(a * b));
        }
    }
    let total = ops
        .iter()
        .fold(DMatrix::<f64>::zeros(ops[0].nrows(), ops[0].ncols()), |acc, a| acc + a);
    let pt = total.view((0, 0), (p, p)).into_owned();
    let square = lead(&(&pt * &pt));
    let _ = block.lo;
    Ok(2.0 * (second - 0.5 * square))
}

/// Upper bound on `|C_k(A) - C_k(B)|` in power-series normalisation
/// (`𝒞_k / k!`), using spectral-norm bounds on the windowed operators.
pub fn comparison_bound(a: &[BandedMatrix], b: &[BandedMatrix], n: usize, k: usize) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension("operator lists differ in length".into()));
    }
    let c = a
        .iter()
        .chain(b)
        .map(|m| m.effective_bandwidth())
        .max()
        .unwrap_or(0)
        .max(1);
    let w = 2 * c * (k + 1);
    let norm_sum = |xs: &[BandedMatrix]| -> f64 {
        xs.iter().map(|m| m.window(n, w).operator_norm_bound()).sum()
    };
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x.sum(&y.scale_by(-1.0));
            d.window(n, w).operator_norm_bound()
        })
        .sum();
    let base = norm_sum(a).max(norm_sum(b));
    let e = std::f64::consts::E;
    let factor = 2f64.powi(k as i32 + 2) * c as f64 * (k + 1) as f64 * e / (2.0 - e.sqrt()).powi(2);
    Ok(base.powi(k as i32 - 1) * factor * diff)
}

/// Grid regularity `N Σ_m (t_{m+1} - t_m)²` of a layer-time grid.
pub fn grid_regularity(times: &[f64]) -> f64 {
    let n = times.len() as f64;
    n * times.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>()
}
