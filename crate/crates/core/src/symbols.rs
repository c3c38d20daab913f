//! Laurent symbol calculus, Toeplitz/Hankel traces and limiting variances.

use crate::ensembles::LimitData;
use crate::error::{Error, Result};
use crate::poly::{Algebra, Polynomial};
use crate::quad::{breakpoints, GaussLegendre};
use nalgebra::DMatrix;

/// Laurent polynomial `Σ_j a_j z^j` with `j` in `[lo, lo + coeffs.len())`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaurentSymbol {
    lo: i64,
    coeffs: Vec<f64>,
}

impl LaurentSymbol {
    pub fn new(lo: i64, coeffs: Vec<f64>) -> Self {
        let mut s = LaurentSymbol { lo, coeffs };
        s.trim();
        s
    }

    pub fn zero() -> Self {
        LaurentSymbol { lo: 0, coeffs: vec![] }
    }

    pub fn constant(c: f64) -> Self {
        LaurentSymbol::new(0, vec![c])
    }

    /// `a1 e^{-τ} z + a0 + a1 e^{τ} / z`.
    pub fn three_term(a0: f64, a1: f64, tau: f64) -> Self {
        LaurentSymbol::new(-1, vec![a1 * tau.exp(), a0, a1 * (-tau).exp()])
    }

    pub fn from_limit(l: &LimitData) -> Self {
        Self::three_term(l.a0, l.a1, l.tau)
    }

    fn trim(&mut self) {
        while self.coeffs.last() == Some(&0.0) {
            self.coeffs.pop();
        }
        let lead = self.coeffs.iter().take_while(|c| **c == 0.0).count();
        self.coeffs.drain(..lead);
        self.lo += lead as i64;
        if self.coeffs.is_empty() {
            self.lo = 0;
        }
    }

    pub fn coeff(&self, j: i64) -> f64 {
        let i = j - self.lo;
        if i < 0 || i as usize >= self.coeffs.len() {
            0.0
        } else {
            self.coeffs[i as usize]
        }
    }

    /// Smallest power with a nonzero coefficient (0 for the zero symbol).
    pub fn min_power(&self) -> i64 {
        self.lo
    }

    pub fn max_power(&self) -> i64 {
        self.lo + self.coeffs.len() as i64 - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Coefficients reflected: `ã_j = a_{-j}`.
    pub fn reflected(&self) -> Self {
        if self.is_zero() {
            return self.clone();
        }
        let mut c = self.coeffs.clone();
        c.reverse();
        LaurentSymbol::new(-self.max_power(), c)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn eval_on_circle(&self, theta: f64) -> num_complex::Complex64 {
        (self.lo..=self.max_power())
            .map(|j| num_complex::Complex64::from_polar(self.coeff(j), j as f64 * theta))
            .sum()
    }

    /// `T(a)_{ij} = a_{i-j}`, 1-based, size `n`.
    pub fn toeplitz(&self, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |i, j| self.coeff(i as i64 - j as i64))
    }

    /// `H(a)_{ij} = a_{i+j-1}`, 1-based, size `n`.
    pub fn hankel(&self, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |i, j| self.coeff(i as i64 + j as i64 + 1))
    }
}

impl Algebra for LaurentSymbol {
    fn unit_like(&self) -> Self {
        LaurentSymbol::constant(1.0)
    }
    fn mul(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return LaurentSymbol::zero();
        }
        let mut c = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                c[i + j] += a * b;
            }
        }
        LaurentSymbol::new(self.lo + other.lo, c)
    }
    fn add(&self, other: &Self) -> Self {
        if self.is_zero() {
            return other.clone();
        }
        if other.is_zero() {
            return self.clone();
        }
        let lo = self.lo.min(other.lo);
        let hi = self.max_power().max(other.max_power());
        LaurentSymbol::new(lo, (lo..=hi).map(|j| self.coeff(j) + other.coeff(j)).collect())
    }
    fn scale(&self, c: f64) -> Self {
        LaurentSymbol::new(self.lo, self.coeffs.iter().map(|x| x * c).collect())
    }
}

/// `[z^k] f(a(z))` by exact symbolic composition.
pub fn fourier_coeff(f: &Polynomial, symbol: &LaurentSymbol, k: i64) -> f64 {
    f.apply(symbol).coeff(k)
}

/// `(1/π) ∫_0^π f(a0 + 2 a1 cos θ) cos kθ dθ` for `k = 0..=k_max`, by a
/// cosine transform on `nodes` midpoint Chebyshev angles.
pub fn chebyshev_coeffs<F: Fn(f64) -> f64>(f: F, a0: f64, a1: f64, k_max: usize, nodes: usize) -> Vec<f64> {
    let m = nodes.max(1);
    let vals: Vec<(f64, f64)> = (0..m)
        .map(|j| {
            let th = std::f64::consts::PI * (j as f64 + 0.5) / m as f64;
            (th, f(a0 + 2.0 * a1 * th.cos()))
        })
        .collect();
    (0..=k_max)
        .map(|k| vals.iter().map(|(th, v)| v * (k as f64 * th).cos()).sum::<f64>() / m as f64)
        .collect()
}

pub fn chebyshev_coeff<F: Fn(f64) -> f64>(f: F, a0: f64, a1: f64, k: usize, nodes: usize) -> f64 {
    chebyshev_coeffs(f, a0, a1, k, nodes)[k]
}

/// `Σ_{ℓ ≥ 1} ℓ a_ℓ b_{-ℓ}`, which equals `Tr H(a) H(b̃)`.
pub fn hankel_product_trace(a: &LaurentSymbol, b: &LaurentSymbol) -> f64 {
    let top = a.max_power().min(-b.min_power());
    (1..=top.max(0)).map(|l| l as f64 * a.coeff(l) * b.coeff(-l)).sum()
}

/// `Tr [T(a), T(b)]`.
pub fn toeplitz_commutator_trace(a: &LaurentSymbol, b: &LaurentSymbol) -> f64 {
    hankel_product_trace(b, a) - hankel_product_trace(a, b)
}

/// `log det (e^{T(a_1)} ⋯ e^{T(a_N)})` for symbols summing to zero.
pub fn ehrhardt_log_det(symbols: &[LaurentSymbol]) -> Result<f64> {
    let total = symbols
        .iter()
        .fold(LaurentSymbol::zero(), |acc, s| acc.add(s));
    let scale = symbols.iter().map(|s| s.max_abs_coeff()).fold(1.0, f64::max);
    let resid = total.max_abs_coeff();
    if resid > 1e-12 * scale {
        return Err(Error::NonZeroSymbolSum(resid));
    }
    let mut acc = 0.0;
    for i in 0..symbols.len() {
        for j in i + 1..symbols.len() {
            acc += toeplitz_commutator_trace(&symbols[i], &symbols[j]);
        }
    }
    Ok(0.5 * acc)
}

/// Limiting second cumulant `Σ_m hpt(A_m, A_m) + 2 Σ_{m1<m2} hpt(A_{m2}, A_{m1})`
/// for layer symbols `A_m` listed in increasing time.
pub fn toeplitz_variance_limit(symbols: &[LaurentSymbol]) -> f64 {
    let mut v = 0.0;
    for (i, a) in symbols.iter().enumerate() {
        v += hankel_product_trace(a, a);
        for b in &symbols[i + 1..] {
            v += 2.0 * hankel_product_trace(b, a);
        }
    }
    v
}

/// Statistic `Σ_m Σ_j f(m, x_j(t_m))` with polynomial layers.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredStatistic {
    pub layers: Vec<Polynomial>,
    pub times: Vec<f64>,
}

impl LayeredStatistic {
    pub fn new(layers: Vec<Polynomial>, times: Vec<f64>) -> Result<Self> {
        if layers.len() != times.len() || layers.is_empty() {
            return Err(Error::Dimension(format!(
                "{} layers but {} times",
                layers.len(),
                times.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::NonIncreasingTimes);
        }
        Ok(LayeredStatistic { layers, times })
    }

    /// Same polynomial on every layer.
    pub fn uniform(f: Polynomial, times: Vec<f64>) -> Result<Self> {
        let layers = vec![f; times.len()];
        Self::new(layers, times)
    }

    /// Project continuous layer functions to Chebyshev series of `degree`
    /// on the given intervals.
    pub fn from_functions<F: Fn(f64) -> f64>(
        fs: &[F],
        intervals: &[(f64, f64)],
        degree: usize,
        times: Vec<f64>,
    ) -> Result<Self> {
        if fs.len() != intervals.len() {
            return Err(Error::Dimension("one interval per layer function".into()));
        }
        let layers = fs
            .iter()
            .zip(intervals)
            .map(|(f, (lo, hi))| Polynomial::chebyshev_fit(f, degree, *lo, *hi))
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers, times)
    }

    /// Riemann-weighted statistic `Σ_m g(t_m) Δt_m` for growing numbers of
    /// layers. `Δt_m` is the width of the cell around `t_m`, with cell edges
    /// at midpoints between times, clamped to `interval`.
    pub fn riemann<G: Fn(f64) -> Polynomial>(g: G, times: Vec<f64>, interval: (f64, f64)) -> Result<Self> {
        let (lo, hi) = interval;
        if times.is_empty() || !(lo < hi) || times[0] < lo || times[times.len() - 1] > hi {
            return Err(Error::InvalidParameter(format!(
                "times must be non-empty and inside [{lo}, {hi}]"
            )));
        }
        let m = times.len();
        let edge = |i: usize| match i {
            0 => lo,
            i if i == m => hi,
            i => 0.5 * (times[i - 1] + times[i]),
        };
        let layers = (0..m).map(|i| g(times[i]).scaled(edge(i + 1) - edge(i))).collect();
        Self::new(layers, times)
    }

    pub fn max_degree(&self) -> usize {
        self.layers.iter().map(|p| p.degree()).max().unwrap_or(0)
    }

    pub fn default_series_k(&self) -> usize {
        32usize.max(2 * self.max_degree())
    }
}

fn check_taus(limits: &[LimitData], layers: usize) -> Result<()> {
    if limits.len() != layers {
        return Err(Error::Dimension(format!(
            "{} limit entries for {layers} layers",
            limits.len()
        )));
    }
    if limits.windows(2).any(|w| !(w[1].tau > w[0].tau)) {
        return Err(Error::NonIncreasingTimes);
    }
    Ok(())
}

/// Per-`k` contributions to the symmetric variance, `k = 1..=k_max`.
pub fn variance_terms(stat: &LayeredStatistic, limits: &[LimitData], k_max: usize) -> Result<Vec<f64>> {
    check_taus(limits, stat.layers.len())?;
    let hats: Vec<LaurentSymbol> = stat
        .layers
        .iter()
        .zip(limits)
        .map(|(f, l)| f.apply(&LaurentSymbol::three_term(l.a0, l.a1, 0.0)))
        .collect();
    Ok((1..=k_max as i64)
        .map(|k| {
            let mut s = 0.0;
            for (i, a) in hats.iter().enumerate() {
                for (j, b) in hats.iter().enumerate() {
                    let d = (limits[i].tau - limits[j].tau).abs();
                    s += k as f64 * (-d * k as f64).exp() * a.coeff(k) * b.coeff(k);
                }
            }
            s
        })
        .collect())
}

/// `Σ_{m1,m2} Σ_k k e^{-|τ_{m1} - τ_{m2}| k} f̂_k^{(m1)} f̂_k^{(m2)}`.
pub fn variance_fixed_n(stat: &LayeredStatistic, limits: &[LimitData], k_max: Option<usize>) -> Result<f64> {
    let k = k_max.unwrap_or_else(|| stat.default_series_k());
    Ok(variance_terms(stat, limits, k)?.iter().sum())
}

/// General form `2 Σ_{m1<m2} Σ_k k f_{-k}^{(m1)} f_k^{(m2)} + Σ_m Σ_k k f_k^{(m)} f_{-k}^{(m)}`
/// with `f_k^{(m)} = [z^k] f(m, a_m(z))`; valid for arbitrary Laurent symbols.
pub fn variance_asymmetric(stat: &LayeredStatistic, symbols: &[LaurentSymbol]) -> Result<f64> {
    if symbols.len() != stat.layers.len() {
        return Err(Error::Dimension("one symbol per layer".into()));
    }
    let composed: Vec<LaurentSymbol> = stat
        .layers
        .iter()
        .zip(symbols)
        .map(|(f, a)| f.apply(a))
        .collect();
    Ok(toeplitz_variance_limit(&composed))
}

/// Settings for the double time integral of the growing-layer variance.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowingQuadrature {
    pub order: usize,
    pub panels: usize,
    /// Points where the integrand may be discontinuous in time.
    pub breakpoints: Vec<f64>,
    pub series_k: usize,
    pub theta_nodes: usize,
}

impl Default for GrowingQuadrature {
    fn default() -> Self {
        GrowingQuadrature {
            order: 32,
            panels: 4,
            breakpoints: vec![],
            series_k: 32,
            theta_nodes: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowingVariance {
    pub value: f64,
    /// Contribution of each `k = 1..=series_k`.
    pub terms: Vec<f64>,
    pub tail_estimate: f64,
}

fn barycentric_weights(x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|j| {
            1.0 / (0..x.len())
                .filter(|&i| i != j)
                .map(|i| x[j] - x[i])
                .product::<f64>()
        })
        .collect()
}

fn barycentric_eval(x: &[f64], w: &[f64], y: &[f64], t: f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for j in 0..x.len() {
        let d = t - x[j];
        if d == 0.0 {
            return y[j];
        }
        let c = w[j] / d;
        num += c * y[j];
        den += c;
    }
    num / den
}

/// `Σ_k k ∬_{I×I} e^{-|τ(t2) - τ(t1)| k} g_k(t1) g_k(t2) dt1 dt2`, where
/// `coeffs(t)` returns `[g_1(t), …, g_K(t)]`.
pub fn variance_growing_coeffs<C, T>(
    coeffs: C,
    tau: T,
    interval: (f64, f64),
    quad: &GrowingQuadrature,
) -> Result<GrowingVariance>
where
    C: Fn(f64) -> Vec<f64>,
    T: Fn(f64) -> f64,
{
    let kk = quad.series_k;
    let (a, b) = interval;
    if !(b >= a) {
        return Err(Error::InvalidParameter("interval end before start".into()));
    }
    if b == a || kk == 0 {
        return Ok(GrowingVariance {
            value: 0.0,
            terms: vec![0.0; kk],
            tail_estimate: 0.0,
        });
    }
    let gl = GaussLegendre::new(quad.order)?;
    let bw = barycentric_weights(gl.nodes());
    let breaks = breakpoints(a, b, &quad.breakpoints);
    let mut panels = Vec::new();
    for w in breaks.windows(2) {
        let h = (w[1] - w[0]) / quad.panels.max(1) as f64;
        for p in 0..quad.panels.max(1) {
            let lo = w[0] + p as f64 * h;
            panels.push((lo, lo + h));
        }
    }
    struct Panel {
        lo: f64,
        hi: f64,
        t: Vec<f64>,
        w: Vec<f64>,
        tau: Vec<f64>,
        g: Vec<Vec<f64>>,
    }
    let data: Vec<Panel> = panels
        .iter()
        .map(|&(lo, hi)| {
            let pts: Vec<(f64, f64)> = gl.on(lo, hi).collect();
            let t: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let g: Vec<Vec<f64>> = t
                .iter()
                .map(|&ti| {
                    let mut v = coeffs(ti);
                    v.resize(kk, 0.0);
                    v
                })
                .collect();
            Panel {
                lo,
                hi,
                tau: t.iter().map(|&x| tau(x)).collect(),
                w: pts.iter().map(|p| p.1).collect(),
                t,
                g,
            }
        })
        .collect();
    if data.iter().any(|p| p.g.iter().flatten().any(|x| !x.is_finite())) {
        return Err(Error::NonFinite("growing-layer coefficients".into()));
    }
    let mut terms = vec![0.0; kk];
    for (pi, p) in data.iter().enumerate() {
        for q in &data[pi + 1..] {
            for i in 0..p.t.len() {
                for j in 0..q.t.len() {
                    let d = (q.tau[j] - p.tau[i]).abs();
                    let wij = 2.0 * p.w[i] * q.w[j];
                    for k in 0..kk {
                        let kf = (k + 1) as f64;
                        terms[k] += wij * kf * (-d * kf).exp() * p.g[i][k] * q.g[j][k];
                    }
                }
            }
        }
        // Same panel: integrate over the triangle t2 < t1 and double.
        let node_vals: Vec<Vec<f64>> = (0..kk)
            .map(|k| p.g.iter().map(|gi| gi[k]).collect())
            .collect();
        let unit: Vec<f64> = p
            .t
            .iter()
            .map(|x| 2.0 * (x - p.lo) / (p.hi - p.lo) - 1.0)
            .collect();
        for i in 0..p.t.len() {
            let t1 = p.t[i];
            for (t2, w2) in gl.on(p.lo, t1) {
                let u2 = 2.0 * (t2 - p.lo) / (p.hi - p.lo) - 1.0;
                let d = (p.tau[i] - tau(t2)).abs();
                let wij = 2.0 * p.w[i] * w2;
                for k in 0..kk {
                    let kf = (k + 1) as f64;
                    let g2 = barycentric_eval(&unit, &bw, &node_vals[k], u2);
                    terms[k] += wij * kf * (-d * kf).exp() * p.g[i][k] * g2;
                }
            }
        }
    }
    let value: f64 = terms.iter().sum();
    let tail_estimate = match terms.len() {
        0 => 0.0,
        1 => terms[0].abs(),
        n => {
            let (last, prev) = (terms[n - 1].abs(), terms[n - 2].abs());
            if prev > 0.0 && last < prev {
                let r = last / prev;
                last * r / (1.0 - r)
            } else {
                last * n as f64
            }
        }
    };
    Ok(GrowingVariance {
        value,
        terms,
        tail_estimate,
    })
}

/// Growing-layer variance for `g(t, x)` with symbol data `a0(t), a1(t), τ(t)`.
pub fn variance_growing<G, A0, A1, T>(
    g: G,
    a0: A0,
    a1: A1,
    tau: T,
    interval: (f64, f64),
    quad: &GrowingQuadrature,
) -> Result<GrowingVariance>
where
    G: Fn(f64, f64) -> f64,
    A0: Fn(f64) -> f64,
    A1: Fn(f64) -> f64,
    T: Fn(f64) -> f64,
{
    let coeffs = |t: f64| {
        let c = chebyshev_coeffs(|x| g(t, x), a0(t), a1(t), quad.series_k, quad.theta_nodes);
        c[1..].to_vec()
    };
    variance_growing_coeffs(coeffs, tau, interval, quad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lim(a0: f64, a1: f64, tau: f64) -> LimitData {
        LimitData {
            a0,
            a1,
            tau,
            time_map: None,
            kappa_n: 1.0,
        }
    }

    fn x() -> Polynomial {
        Polynomial::monomial(vec![0.0, 1.0])
    }

    #[test]
    fn fourier_coefficients_of_simple_compositions() {
        let a = LaurentSymbol::three_term(0.0, 1.0, 0.0);
        assert_eq!(fourier_coeff(&x(), &a, 1), 1.0);
        assert_eq!(fourier_coeff(&x(), &a, -1), 1.0);
        assert_eq!(fourier_coeff(&x(), &a, 0), 0.0);
        let sq = Polynomial::monomial(vec![0.0, 0.0, 1.0]);
        assert_eq!(fourier_coeff(&sq, &a, 2), 1.0);
        assert_eq!(fourier_coeff(&sq, &a, -2), 1.0);
        assert_eq!(fourier_coeff(&sq, &a, 0), 2.0);
        let ab = LaurentSymbol::three_term(0.3, 0.7, 0.0);
        assert_eq!(fourier_coeff(&x(), &ab, 0), 0.3);
        assert_eq!(fourier_coeff(&x(), &ab, 1), 0.7);
    }

    #[test]
    fn chebyshev_coefficients() {
        let c = chebyshev_coeffs(|x| x, 0.4, 1.3, 4, 16);
        assert!((c[0] - 0.4).abs() < 1e-14 && (c[1] - 1.3).abs() < 1e-14);
        assert!(c[2..].iter().all(|v| v.abs() < 1e-14));
        let one = chebyshev_coeffs(|_| 1.0, 0.0, 1.0, 3, 8);
        assert!((one[0] - 1.0).abs() < 1e-15 && one[1..].iter().all(|v| v.abs() < 1e-15));
        let sq = chebyshev_coeffs(|x| x * x, 0.0, 1.0, 3, 8);
        assert!((sq[0] - 2.0).abs() < 1e-14 && (sq[2] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn variance_examples() {
        let one = LayeredStatistic::uniform(x(), vec![0.0]).unwrap();
        assert!((variance_fixed_n(&one, &[lim(0.0, 1.0, 0.0)], None).unwrap() - 1.0).abs() < 1e-15);
        let tau = 0.5;
        let two = LayeredStatistic::uniform(x(), vec![0.0, tau]).unwrap();
        let l = [lim(0.0, 1.0, 0.0), lim(0.0, 1.0, tau)];
        let v = variance_fixed_n(&two, &l, None).unwrap();
        assert!((v - (2.0 + 2.0 * (-tau).exp())).abs() < 1e-14);
        let c = LayeredStatistic::uniform(Polynomial::monomial(vec![3.0]), vec![0.0]).unwrap();
        assert_eq!(variance_fixed_n(&c, &[lim(0.0, 1.0, 0.0)], None).unwrap(), 0.0);
        let bad = [lim(0.0, 1.0, 0.5), lim(0.0, 1.0, 0.5)];
        assert!(matches!(variance_fixed_n(&two, &bad, None), Err(Error::NonIncreasingTimes)));
    }

    #[test]
    fn gue_trace_variance_oracle() {
        // Tr H over n with H having N(0,1) diagonal entries: Var(Σ H_jj / sqrt(n)) = 1.
        let n = 7.0;
        let var_trace = n * 1.0;
        let one = LayeredStatistic::uniform(x(), vec![0.0]).unwrap();
        let v = variance_fixed_n(&one, &[lim(0.0, 1.0, 0.0)], None).unwrap();
        assert!((v - var_trace / n).abs() < 1e-15);
    }

    #[test]
    fn hankel_traces() {
        let a = LaurentSymbol::three_term(0.0, 1.0, 0.0);
        assert_eq!(hankel_product_trace(&a, &a), 1.0);
        let z2 = LaurentSymbol::new(2, vec![1.0]);
        let zm2 = LaurentSymbol::new(-2, vec![1.0]);
        assert_eq!(hankel_product_trace(&z2, &zm2), 2.0);
    }

    #[test]
    fn ehrhardt_examples() {
        let a = LaurentSymbol::new(-1, vec![0.3, 0.1, -0.7]);
        assert_eq!(ehrhardt_log_det(&[a.clone(), a.scale(-1.0)]).unwrap(), 0.0);
        assert_eq!(ehrhardt_log_det(&[LaurentSymbol::zero(), LaurentSymbol::zero()]).unwrap(), 0.0);
        assert!(matches!(
            ehrhardt_log_det(&[a.clone(), a.clone()]),
            Err(Error::NonZeroSymbolSum(_))
        ));
    }

    #[test]
    fn ehrhardt_matches_dense_truncation() {
        let s = [
            LaurentSymbol::new(1, vec![1.0]),
            LaurentSymbol::new(-1, vec![1.0]),
            LaurentSymbol::new(-1, vec![-1.0, 0.0, -1.0]),
        ];
        let analytic = ehrhardt_log_det(&s).unwrap();
        let size = 400;
        let mut prod = DMatrix::<f64>::identity(size, size);
        for a in &s {
            prod *= crate::dense::expm(&a.toeplitz(size)).unwrap();
        }
        let (sign, logdet) = crate::dense::principal_block_det(&prod, size / 2).unwrap();
        assert_eq!(sign, 1.0);
        assert!((analytic - logdet).abs() < 1e-8, "{analytic} vs {logdet}");
    }

    #[test]
    fn toeplitz_limit_examples() {
        let a = LaurentSymbol::three_term(0.0, 1.0, 0.0);
        assert_eq!(toeplitz_variance_limit(&[a]), 1.0);
        let lowf = LaurentSymbol::new(-1, vec![1.0, 0.0, 1.0]);
        let highf = LaurentSymbol::new(-3, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let both = toeplitz_variance_limit(&[lowf.clone(), highf.clone()]);
        assert_eq!(both, toeplitz_variance_limit(&[lowf]) + toeplitz_variance_limit(&[highf]));
        let tau = 0.8;
        let s = [
            LaurentSymbol::three_term(0.0, 1.0, 0.0),
            LaurentSymbol::three_term(0.0, 1.0, tau),
        ];
        assert!((toeplitz_variance_limit(&s) - (2.0 + 2.0 * (-tau).exp())).abs() < 1e-14);
    }

    #[test]
    fn growing_closed_form() {
        let big_t: f64 = 1.5;
        let quad = GrowingQuadrature {
            series_k: 3,
            theta_nodes: 16,
            ..Default::default()
        };
        let v = variance_growing(|_, x| x, |_| 0.0, |_| 1.0, |t| t, (0.0, big_t), &quad).unwrap();
        let want = 2.0 * (big_t - 1.0 + (-big_t).exp());
        assert!((v.value - want).abs() < 1e-12, "{} vs {want}", v.value);
        let zero = variance_growing(|_, _| 2.0, |_| 0.0, |_| 1.0, |t| t, (0.0, 1.0), &quad).unwrap();
        assert!(zero.value.abs() < 1e-14);
        let empty = variance_growing(|_, x| x, |_| 0.0, |_| 1.0, |t| t, (0.3, 0.3), &quad).unwrap();
        assert_eq!(empty.value, 0.0);
    }

    #[test]
    fn growing_matches_fixed_riemann_sum_for_piecewise_constant_data() {
        // g(t, x) = x on [0, 1/2), x² on [1/2, 1]: the double integral equals the
        // fixed-layer variance of the Riemann sum as the grid refines.
        let g = |t: f64, x: f64| if t < 0.5 { x } else { x * x };
        let quad = GrowingQuadrature {
            series_k: 4,
            theta_nodes: 16,
            breakpoints: vec![0.5],
            ..Default::default()
        };
        let exact = variance_growing(g, |_| 0.0, |_| 1.0, |t| t, (0.0, 1.0), &quad).unwrap().value;
        let mut errs = vec![];
        for n in [8usize, 32, 128] {
            let h = 1.0 / n as f64;
            let times: Vec<f64> = (0..n).map(|m| (m as f64 + 0.5) * h).collect();
            let stat = LayeredStatistic::riemann(
                |t| {
                    if t < 0.5 {
                        Polynomial::monomial(vec![0.0, 1.0])
                    } else {
                        Polynomial::monomial(vec![0.0, 0.0, 1.0])
                    }
                },
                times.clone(),
                (0.0, 1.0),
            )
            .unwrap();
            assert!((stat.layers[0].coeffs().iter().sum::<f64>() - h).abs() < 1e-15);
            let limits: Vec<LimitData> = times.iter().map(|&t| lim(0.0, 1.0, t)).collect();
            errs.push((variance_fixed_n(&stat, &limits, Some(4)).unwrap() - exact).abs());
        }
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
        assert!(errs[2] < 1e-3);
    }

    #[test]
    fn bridge_preset_two_times() {
        // a1² = t(1 - t) = 3/16 at both times, Δτ = ln 3.
        let times = vec![0.25, 0.75];
        let limits: Vec<LimitData> = times.iter().map(|&t| crate::ensembles::bridge_limit(t).unwrap()).collect();
        assert!((limits[1].tau - limits[0].tau - 3f64.ln()).abs() < 1e-14);
        let stat = LayeredStatistic::uniform(Polynomial::monomial(vec![0.0, 1.0]), times).unwrap();
        let v = variance_fixed_n(&stat, &limits, None).unwrap();
        let want = 3.0 / 16.0 * (2.0 + 2.0 / 3.0);
        assert!((v - want).abs() < 1e-12, "{v}");
    }

    #[test]
    fn riemann_weights_cover_the_interval() {
        let times = vec![0.1, 0.3, 0.8];
        let stat = LayeredStatistic::riemann(|_| Polynomial::monomial(vec![1.0]), times, (0.0, 1.0)).unwrap();
        let widths: Vec<f64> = stat.layers.iter().map(|p| p.coeffs()[0]).collect();
        assert!((widths.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((widths[1] - 0.35).abs() < 1e-15);
    }

    #[test]
    fn frequency_form_on_three_points() {
        // g_k(t) = Σ_j c_j δ(t - t_j): (1/π) ∫ k²/(ω²+k²) |Σ_j c_j e^{-iωτ_j}|² dω
        // equals Σ_{i,j} c_i c_j k e^{-k|τ_i - τ_j|}.
        let c = [0.7, -0.4, 1.1];
        let taus = [0.0, 0.35, 1.2];
        let k = 2.0;
        let gl = GaussLegendre::new(8).unwrap();
        let cutoff = 4000.0;
        let panels = 32000;
        let h = 2.0 * cutoff / panels as f64;
        let mut integral = 0.0;
        for p in 0..panels {
            let lo = -cutoff + p as f64 * h;
            integral += gl.integrate(lo, lo + h, |omega| {
                let (mut re, mut im) = (0.0, 0.0);
                for j in 0..3 {
                    re += c[j] * (omega * taus[j]).cos();
                    im -= c[j] * (omega * taus[j]).sin();
                }
                k * k / (omega * omega + k * k) * (re * re + im * im)
            });
        }
        // Non-oscillating tail beyond the cutoff, in closed form.
        let diag: f64 = c.iter().map(|x| x * x).sum();
        integral += diag * 2.0 * k * (std::f64::consts::FRAC_PI_2 - (cutoff / k).atan());
        integral /= std::f64::consts::PI;
        let mut direct = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                direct += c[i] * c[j] * k * (-(k * (taus[i] - taus[j]).abs())).exp();
            }
        }
        assert!((integral - direct).abs() < 1e-6, "{integral} vs {direct}");
    }

    fn symbol_strategy(deg: i64) -> impl Strategy<Value = LaurentSymbol> {
        prop::collection::vec(-1.0f64..1.0, (2 * deg + 1) as usize)
            .prop_map(move |c| LaurentSymbol::new(-deg, c))
    }

    proptest! {
        #[test]
        fn hankel_trace_equals_matrix_trace(a in symbol_strategy(3), b in symbol_strategy(3)) {
            let h = a.hankel(6) * b.reflected().hankel(6);
            prop_assert!((h.trace() - hankel_product_trace(&a, &b)).abs() < 1e-12);
        }

        #[test]
        fn chebyshev_coefficients_are_even(a0 in -1.0f64..1.0, a1 in 0.1f64..2.0, k in 1usize..6) {
            let f = |x: f64| x.powi(3) - 0.5 * x;
            let pos = chebyshev_coeff(f, a0, a1, k, 32);
            let sym = LaurentSymbol::three_term(a0, a1, 0.0);
            let p = Polynomial::monomial(vec![0.0, -0.5, 0.0, 1.0]);
            prop_assert!((pos - fourier_coeff(&p, &sym, -(k as i64))).abs() < 1e-12);
            prop_assert!((pos - fourier_coeff(&p, &sym, k as i64)).abs() < 1e-12);
        }

        #[test]
        fn weighted_symbol_coefficients(a0 in -1.0f64..1.0, a1 in 0.1f64..1.5, tau in -1.0f64..1.0, k in -4i64..5) {
            let p = Polynomial::monomial(vec![0.2, -1.0, 0.5, 0.3]);
            let f = fourier_coeff(&p, &LaurentSymbol::three_term(a0, a1, tau), k);
            let hat = chebyshev_coeff(|x| p.eval(x), a0, a1, k.unsigned_abs() as usize, 32);
            prop_assert!((f - (-tau * k as f64).exp() * hat).abs() < 1e-12 * (1.0 + f.abs()));
        }

        #[test]
        fn variance_nonnegative_and_forms_agree(
            coeffs in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 4), 1..4),
            a0 in -1.0f64..1.0,
            a1 in 0.2f64..1.5,
            dt in prop::collection::vec(0.05f64..0.8, 3),
        ) {
            let n = coeffs.len();
            let mut taus = vec![0.0];
            for m in 1..n { taus.push(taus[m - 1] + dt[m - 1]); }
            let layers: Vec<Polynomial> = coeffs.into_iter().map(Polynomial::monomial).collect();
            let stat = LayeredStatistic::new(layers, taus.clone()).unwrap();
            let limits: Vec<LimitData> = taus.iter().map(|&t| lim(a0, a1, t)).collect();
            let sym = variance_fixed_n(&stat, &limits, None).unwrap();
            let syms: Vec<LaurentSymbol> = limits.iter().map(LaurentSymbol::from_limit).collect();
            let asym = variance_asymmetric(&stat, &syms).unwrap();
            prop_assert!(sym >= -1e-12);
            prop_assert!((sym - asym).abs() < 1e-10 * (1.0 + sym.abs()), "{} vs {}", sym, asym);
        }
    }
}
