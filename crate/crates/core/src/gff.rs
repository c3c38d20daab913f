//! Gaussian free field correspondence: coordinates `(t, x) ↔ (τ, θ)`, the
//! linear statistic induced by a test function, and the two quadratic forms
//! that must agree.

use crate::error::{Error, Result};
use crate::quad::GaussLegendre;
use crate::symbols::{variance_growing_coeffs, GrowingQuadrature, GrowingVariance};
use std::f64::consts::PI;
use std::sync::Arc;

pub type Curve = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type Field = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type GradientField = Arc<dyn Fn(f64, f64) -> (f64, f64) + Send + Sync>;

/// Band edges `a0(t) ± 2 a1(t)` and the time change `τ(t)` on `[start, end]`.
#[derive(Clone)]
pub struct GffGeometry {
    pub a0: Curve,
    pub a1: Curve,
    pub tau: Curve,
    pub tau_prime: Curve,
    pub tau_inverse: Curve,
    pub interval: (f64, f64),
}

impl std::fmt::Debug for GffGeometry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GffGeometry").field("interval", &self.interval).finish_non_exhaustive()
    }
}

impl GffGeometry {
    /// Stationary Ornstein–Uhlenbeck geometry: `a0 = 0`, `a1 = 1`, `τ = t`.
    pub fn ornstein_uhlenbeck(interval: (f64, f64)) -> Result<Self> {
        let g = GffGeometry {
            a0: Arc::new(|_| 0.0),
            a1: Arc::new(|_| 1.0),
            tau: Arc::new(|t| t),
            tau_prime: Arc::new(|_| 1.0),
            tau_inverse: Arc::new(|s| s),
            interval,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.interval;
        if !(b > a) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidParameter("geometry interval must be nondegenerate".into()));
        }
        for i in 0..=64 {
            let t = a + (b - a) * i as f64 / 64.0;
            if !((self.a1)(t) > 0.0) {
                return Err(Error::InvalidParameter(format!("a1({t}) must be positive")));
            }
            if !((self.tau_prime)(t) > 0.0) {
                return Err(Error::InvalidParameter(format!("tau is not increasing at {t}")));
            }
        }
        Ok(())
    }

    /// `θ(t, x) = arccos((x - a0) / 2a1)`, clamped to `[0, π]`.
    pub fn theta(&self, t: f64, x: f64) -> f64 {
        let c = (x - (self.a0)(t)) / (2.0 * (self.a1)(t));
        c.clamp(-1.0, 1.0).acos()
    }

    /// `Ω(t, x) = (τ(t), θ(t, x))`.
    pub fn omega(&self, t: f64, x: f64) -> (f64, f64) {
        ((self.tau)(t), self.theta(t, x))
    }

    /// `Ω^{-1}(τ, θ) = (t, a0(t) + 2 a1(t) cos θ)`.
    pub fn omega_inverse(&self, tau: f64, theta: f64) -> (f64, f64) {
        let t = (self.tau_inverse)(tau);
        (t, (self.a0)(t) + 2.0 * (self.a1)(t) * theta.cos())
    }

    fn tau_range(&self) -> (f64, f64) {
        ((self.tau)(self.interval.0), (self.tau)(self.interval.1))
    }
}

/// Closed box `[tau.0, tau.1] × [theta.0, theta.1]` outside which φ vanishes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportBox {
    pub tau: (f64, f64),
    pub theta: (f64, f64),
}

#[derive(Clone)]
pub struct TestFunction {
    value: Field,
    laplacian: Option<Field>,
    gradient: Option<GradientField>,
    pub support: SupportBox,
}

impl std::fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TestFunction")
            .field("support", &self.support)
            .field("analytic_laplacian", &self.laplacian.is_some())
            .finish_non_exhaustive()
    }
}

/// `(1 - u²)^p` and its first two derivatives, zero for `|u| ≥ 1`.
fn poly_bump(u: f64, p: i32) -> (f64, f64, f64) {
    if u.abs() >= 1.0 {
        return (0.0, 0.0, 0.0);
    }
    let s = 1.0 - u * u;
    let pf = p as f64;
    let v = s.powi(p);
    let d1 = -2.0 * pf * u * s.powi(p - 1);
    let d2 = -2.0 * pf * s.powi(p - 1) + 4.0 * pf * (pf - 1.0) * u * u * s.powi(p - 2);
    (v, d1, d2)
}

const FD_STEP: f64 = 1e-4;

impl TestFunction {
    pub fn new(value: Field, support: SupportBox) -> Self {
        TestFunction {
            value,
            laplacian: None,
            gradient: None,
            support,
        }
    }

    pub fn with_laplacian(mut self, laplacian: Field) -> Self {
        self.laplacian = Some(laplacian);
        self
    }

    pub fn with_gradient(mut self, gradient: GradientField) -> Self {
        self.gradient = Some(gradient);
        self
    }

    pub fn zero() -> Self {
        let support = SupportBox {
            tau: (0.0, 0.0),
            theta: (0.0, 0.0),
        };
        TestFunction::new(Arc::new(|_, _| 0.0), support)
            .with_laplacian(Arc::new(|_, _| 0.0))
            .with_gradient(Arc::new(|_, _| (0.0, 0.0)))
    }

    /// `A (1 - u²)^p (1 - v²)^p` with `u = (τ - τc)/rτ`, `v = (θ - θc)/rθ`;
    /// `C²` for `p ≥ 3`.
    pub fn bump(center: (f64, f64), radii: (f64, f64), amplitude: f64, power: i32) -> Result<Self> {
        let (tc, hc) = center;
        let (rt, rh) = radii;
        if !(rt > 0.0 && rh > 0.0) || power < 3 {
            return Err(Error::InvalidParameter("bump needs positive radii and power ≥ 3".into()));
        }
        if hc - rh < 0.0 || hc + rh > PI {
            return Err(Error::InvalidParameter("bump support leaves (0, π) in θ".into()));
        }
        let parts = move |tau: f64, theta: f64| {
            (poly_bump((tau - tc) / rt, power), poly_bump((theta - hc) / rh, power))
        };
        let value: Field = Arc::new(move |tau, theta| {
            let ((a, _, _), (b, _, _)) = parts(tau, theta);
            amplitude * a * b
        });
        let lap: Field = Arc::new(move |tau, theta| {
            let ((a, _, a2), (b, _, b2)) = parts(tau, theta);
            amplitude * (a2 * b / (rt * rt) + a * b2 / (rh * rh))
        });
        let grad: GradientField = Arc::new(move |tau, theta| {
            let ((a, a1, _), (b, b1, _)) = parts(tau, theta);
            (amplitude * a1 * b / rt, amplitude * a * b1 / rh)
        });
        Ok(TestFunction::new(
            value,
            SupportBox {
                tau: (tc - rt, tc + rt),
                theta: (hc - rh, hc + rh),
            },
        )
        .with_laplacian(lap)
        .with_gradient(grad))
    }

    /// `c φ`.
    pub fn scaled(&self, c: f64) -> Self {
        let v = self.value.clone();
        let mut out = TestFunction::new(Arc::new(move |a, b| c * v(a, b)), self.support);
        if let Some(l) = self.laplacian.clone() {
            out.laplacian = Some(Arc::new(move |a, b| c * l(a, b)));
        }
        if let Some(g) = self.gradient.clone() {
            out.gradient = Some(Arc::new(move |a, b| {
                let (x, y) = g(a, b);
                (c * x, c * y)
            }));
        }
        out
    }

    pub fn value(&self, tau: f64, theta: f64) -> f64 {
        (self.value)(tau, theta)
    }

    /// Analytic Laplacian when given, else a Richardson-corrected five-point stencil.
    pub fn laplacian(&self, tau: f64, theta: f64) -> f64 {
        if let Some(l) = &self.laplacian {
            return l(tau, theta);
        }
        let f = &self.value;
        let stencil = |h: f64| {
            (f(tau + h, theta) + f(tau - h, theta) + f(tau, theta + h) + f(tau, theta - h) - 4.0 * f(tau, theta))
                / (h * h)
        };
        (4.0 * stencil(FD_STEP / 2.0) - stencil(FD_STEP)) / 3.0
    }

    pub fn gradient(&self, tau: f64, theta: f64) -> (f64, f64) {
        if let Some(g) = &self.gradient {
            return g(tau, theta);
        }
        let f = &self.value;
        let central = |h: f64| {
            (
                (f(tau + h, theta) - f(tau - h, theta)) / (2.0 * h),
                (f(tau, theta + h) - f(tau, theta - h)) / (2.0 * h),
            )
        };
        let (a, b) = central(FD_STEP / 2.0);
        let (c, d) = central(FD_STEP);
        ((4.0 * a - c) / 3.0, (4.0 * b - d) / 3.0)
    }

    fn check_inside(&self, geom: &GffGeometry) -> Result<()> {
        let (lo, hi) = geom.tau_range();
        let s = self.support;
        if s.tau.0 < lo || s.tau.1 > hi || s.theta.0 < 0.0 || s.theta.1 > PI {
            return Err(Error::InvalidParameter(format!(
                "support {s:?} not inside the domain ({lo}, {hi}) × (0, π)"
            )));
        }
        Ok(())
    }

    fn is_empty(&self) -> bool {
        self.support.tau.0 >= self.support.tau.1 || self.support.theta.0 >= self.support.theta.1
    }
}

/// Tensor Gauss–Legendre rule on the support box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxQuadrature {
    pub order: usize,
    pub panels: usize,
}

impl Default for BoxQuadrature {
    fn default() -> Self {
        BoxQuadrature { order: 32, panels: 2 }
    }
}

fn box_integral<F: Fn(f64, f64) -> f64>(s: &SupportBox, q: BoxQuadrature, f: F) -> Result<f64> {
    let gl = GaussLegendre::new(q.order)?;
    let tau_nodes = gl.composite(&[s.tau.0, s.tau.1], q.panels);
    let theta_nodes = gl.composite(&[s.theta.0, s.theta.1], q.panels);
    let mut acc = 0.0;
    for (a, wa) in &tau_nodes {
        for (b, wb) in &theta_nodes {
            acc += wa * wb * f(*a, *b);
        }
    }
    Ok(acc)
}

/// `‖φ‖²_∇ = π ∬ |∇φ|²`; errors if doubling the panels moves the value by
/// more than `1e-6` relative.
pub fn dirichlet_norm(phi: &TestFunction, quad: BoxQuadrature) -> Result<f64> {
    if phi.is_empty() {
        return Ok(0.0);
    }
    let integrand = |a: f64, b: f64| {
        let (x, y) = phi.gradient(a, b);
        x * x + y * y
    };
    let coarse = PI * box_integral(&phi.support, quad, integrand)?;
    let fine_q = BoxQuadrature {
        panels: quad.panels * 2,
        ..quad
    };
    let fine = PI * box_integral(&phi.support, fine_q, integrand)?;
    if (fine - coarse).abs() > 1e-6 * fine.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::NotConverged(format!(
            "Dirichlet norm changed from {coarse} to {fine} under refinement"
        )));
    }
    Ok(fine)
}

/// `∫_{lo}^{hi} Δφ(τ, θ) w(θ) dθ` clipped to the θ-support.
fn theta_integral<W: Fn(f64) -> f64>(phi: &TestFunction, gl: &GaussLegendre, tau: f64, lo: f64, hi: f64, w: W) -> f64 {
    let a = lo.max(phi.support.theta.0);
    let b = hi.min(phi.support.theta.1);
    if b <= a {
        return 0.0;
    }
    gl.composite(&[a, b], 4)
        .iter()
        .map(|(th, wt)| wt * phi.laplacian(tau, *th) * w(*th))
        .sum()
}

fn in_tau_support(phi: &TestFunction, tau: f64) -> bool {
    !phi.is_empty() && tau >= phi.support.tau.0 && tau <= phi.support.tau.1
}

/// `g(t, x) = π τ'(t) ∫_{θ(t,x)}^{π} Δφ(τ(t), θ) dθ`, so `g(t, a0 - 2a1) = 0`.
pub fn g_from_phi(phi: &TestFunction, geom: &GffGeometry, t: f64, x: f64) -> Result<f64> {
    let (a, b) = geom.interval;
    if t < a || t > b {
        return Err(Error::InvalidParameter(format!("time {t} outside [{a}, {b}]")));
    }
    let tau = (geom.tau)(t);
    if !in_tau_support(phi, tau) {
        return Ok(0.0);
    }
    let gl = GaussLegendre::new(48)?;
    let th = geom.theta(t, x);
    Ok(PI * (geom.tau_prime)(t) * theta_integral(phi, &gl, tau, th, PI, |_| 1.0))
}

/// Chebyshev coefficients `g_1(t)..g_K(t)` of `g(t, ·)` from
/// `k g_k = τ'(t) ∫_0^π Δφ(τ(t), θ) sin kθ dθ`.
pub fn g_coefficients(phi: &TestFunction, geom: &GffGeometry, t: f64, k_max: usize, gl: &GaussLegendre) -> Vec<f64> {
    let tau = (geom.tau)(t);
    if !in_tau_support(phi, tau) {
        return vec![0.0; k_max];
    }
    let tp = (geom.tau_prime)(t);
    (1..=k_max)
        .map(|k| {
            let kf = k as f64;
            tp * theta_integral(phi, gl, tau, 0.0, PI, |th| (kf * th).sin()) / kf
        })
        .collect()
}

/// `σ(g)²` for the statistic induced by `φ`, through the growing-layer
/// variance with `series_k` terms and quadrature `order`.
pub fn sigma_from_phi(phi: &TestFunction, geom: &GffGeometry, series_k: usize, order: usize) -> Result<GrowingVariance> {
    geom.validate()?;
    if phi.is_empty() {
        return Ok(GrowingVariance {
            value: 0.0,
            terms: vec![0.0; series_k],
            tail_estimate: 0.0,
        });
    }
    phi.check_inside(geom)?;
    let gl = GaussLegendre::new(order)?;
    let inv = &geom.tau_inverse;
    let quad = GrowingQuadrature {
        order,
        panels: 2,
        breakpoints: vec![inv(phi.support.tau.0), inv(phi.support.tau.1)],
        series_k,
        theta_nodes: 0,
    };
    variance_growing_coeffs(|t| g_coefficients(phi, geom, t, series_k, &gl), |t| (geom.tau)(t), geom.interval, &quad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GffComparison {
    pub sigma2: f64,
    pub dirichlet: f64,
    pub relative_gap: f64,
}

/// Both quadratic forms and their relative gap.
pub fn compare(phi: &TestFunction, geom: &GffGeometry, series_k: usize, order: usize) -> Result<GffComparison> {
    let sigma2 = sigma_from_phi(phi, geom, series_k, order)?.value;
    let dirichlet = dirichlet_norm(phi, BoxQuadrature::default())?;
    let relative_gap = if dirichlet == 0.0 {
        sigma2.abs()
    } else {
        (sigma2 - dirichlet).abs() / dirichlet
    };
    Ok(GffComparison {
        sigma2,
        dirichlet,
        relative_gap,
    })
}

/// Five `C²` bumps inside `(0, 1) × (0, π)`.
pub fn standard_bumps() -> Vec<TestFunction> {
    [
        ((0.5, 1.5), (0.3, 0.8), 1.0, 3),
        ((0.4, 1.0), (0.25, 0.6), -0.7, 4),
        ((0.6, 2.0), (0.35, 0.9), 1.3, 3),
        ((0.5, 1.57), (0.45, 1.4), 0.5, 5),
        ((0.3, 2.4), (0.2, 0.5), 2.0, 4),
    ]
    .into_iter()
    .map(|(c, r, a, p)| TestFunction::bump(c, r, a, p).expect("bump parameters are valid"))
    .collect()
}
