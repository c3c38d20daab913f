//! Catalogue of recurrence families: scaled Jacobi matrices, time weights,
//! limiting symbol data and the non-stationary construction.

use crate::banded::{poly_apply, BandedMatrix};
use crate::error::{Error, Result};
use crate::poly::Polynomial;
use crate::quad::GaussLegendre;
use crate::stieltjes::{orthonormal_basis, Reorthogonalize};

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    HermiteOU,
    LaguerreSquaredOU { r: f64 },
    JacobiDiffusion { alpha: f64, beta: f64 },
    Meixner { gamma: f64, mu: f64 },
    /// Variable `(x - n) / sqrt(n)`.
    CharlierEdge { mu: f64 },
    /// Rate `mu_tilde * n`, variable `x / n`.
    CharlierBulk { mu_tilde: f64 },
    /// `M = floor(gamma * n)` sites.
    Krawtchouk { p: f64, gamma: f64 },
    /// Lozenge tilings of the hexagon with sides `n, floor(nB), floor(nC)`;
    /// the layer parameter is `rho`.
    Hahn { b: f64, c: f64 },
    NonStationaryHermite { potential: Polynomial },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub family: Family,
    pub n: usize,
}

/// Monotone map from layer time to limiting symbol time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeMap {
    Linear { scale: f64 },
    /// Brownian-bridge preset on `(0, 1)`: `½ ln(t / (1 - t))`.
    Bridge,
}

impl TimeMap {
    pub fn tau(&self, t: f64) -> f64 {
        match *self {
            TimeMap::Linear { scale } => scale * t,
            TimeMap::Bridge => 0.5 * (t / (1.0 - t)).ln(),
        }
    }

    pub fn tau_prime(&self, t: f64) -> f64 {
        match *self {
            TimeMap::Linear { scale } => scale,
            TimeMap::Bridge => 0.5 / (t * (1.0 - t)),
        }
    }

    pub fn inverse(&self, tau: f64) -> f64 {
        match *self {
            TimeMap::Linear { scale } => tau / scale,
            TimeMap::Bridge => 1.0 / (1.0 + (-2.0 * tau).exp()),
        }
    }
}

/// Limiting symbol `a1 e^{-τ} z + a0 + a1 e^{τ} / z` at one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitData {
    pub a0: f64,
    pub a1: f64,
    pub tau: f64,
    pub time_map: Option<TimeMap>,
    /// Time-rescaling factor applied to the eigenvalue gaps at size `n`.
    pub kappa_n: f64,
}

/// Bridge preset: `a0 = 0`, `a1 = sqrt(t(1-t))`, `τ = ½ ln(t/(1-t))`.
pub fn bridge_limit(t: f64) -> Result<LimitData> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::InvalidParameter(format!("bridge time {t} must lie in (0, 1)")));
    }
    Ok(LimitData {
        a0: 0.0,
        a1: (t * (1.0 - t)).sqrt(),
        tau: TimeMap::Bridge.tau(t),
        time_map: Some(TimeMap::Bridge),
        kappa_n: 1.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HahnLimits {
    pub a_inf: f64,
    pub b_inf: f64,
    /// `½ ln((1 + B + C - ρ) / (1 + ρ))`.
    pub tau: f64,
    /// Consecutive weight ratio at the cut, `½ ln((B + C - ρ) / ρ)`.
    pub tau_at_cut: f64,
    pub a_raw: (f64, f64),
    pub b_raw: (f64, f64),
}

struct HahnLayer {
    big_m: f64,
    alpha: f64,
    beta: f64,
    a: f64,
    b: f64,
    c: f64,
    r: f64,
}

impl HahnLayer {
    fn new(n: usize, bb: f64, cc: f64, rho: f64) -> Self {
        let a = n as f64;
        let b = (n as f64 * bb).floor();
        let c = (n as f64 * cc).floor();
        let r = (n as f64 * rho).floor();
        let big_m = if r <= b {
            r + a - 1.0
        } else if r <= c {
            b + a - 1.0
        } else {
            a + b + c - 1.0 - r
        };
        HahnLayer {
            big_m,
            alpha: (c - r).abs(),
            beta: (b - r).abs(),
            a,
            b,
            c,
            r,
        }
    }

    /// Off-diagonal coupling degrees `k - 1` and `k`.
    fn off(&self, k: f64) -> f64 {
        let (m, al, be) = (self.big_m, self.alpha, self.beta);
        let s = al + be;
        let num = (m - k + 1.0)
            * k
            * (m - k + 1.0 + al)
            * (m - k + 1.0 + be)
            * (m - k + 1.0 + s)
            * (2.0 * m - k + 2.0 + s);
        let d = 2.0 + 2.0 * m - 2.0 * k + s;
        let den = (1.0 + 2.0 * m - 2.0 * k + s) * d * d * (3.0 + 2.0 * m - 2.0 * k + s);
        (num / den).sqrt()
    }

    fn diag(&self, k: f64) -> f64 {
        let (m, al, be) = (self.big_m, self.alpha, self.beta);
        let s = al + be;
        let first = (2.0 * m + s + 1.0 - k) * (m + be - k) * (m - k)
            / ((2.0 * m - 2.0 * k + s) * (2.0 * m - 2.0 * k + s + 1.0));
        let second = k * (m + s + 1.0 - k) * (m - k + al + 1.0)
            / ((2.0 * m - 2.0 * k + s + 2.0) * (2.0 * m - 2.0 * k + s + 1.0));
        first + second
    }

    /// `ln c_k - ln c_{k+1}` for degree `k`.
    fn log_gap(&self, k: f64) -> Option<f64> {
        let up = self.a + self.b + self.c - self.r - 1.0 - k;
        let down = self.a + self.r - 1.0 - k;
        (up > 0.0 && down > 0.0).then(|| 0.5 * (up / down).ln())
    }
}

fn check(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg.into()))
    }
}

impl EnsembleSpec {
    pub fn new(family: Family, n: usize) -> Result<Self> {
        let spec = EnsembleSpec { family, n };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        check(self.n >= 1, "n must be at least 1")?;
        match &self.family {
            Family::HermiteOU => Ok(()),
            Family::LaguerreSquaredOU { r } => check(*r > -1.0, "Laguerre requires r > -1"),
            Family::JacobiDiffusion { alpha, beta } => {
                check(*alpha > -1.0 && *beta > -1.0, "Jacobi requires alpha, beta > -1")
            }
            Family::Meixner { gamma, mu } => {
                check(*mu > 0.0 && *mu < 1.0, "Meixner requires 0 < mu < 1")?;
                check(*gamma > 0.0, "Meixner requires gamma > 0")
            }
            Family::CharlierEdge { mu } => check(*mu > 0.0, "Charlier requires mu > 0"),
            Family::CharlierBulk { mu_tilde } => check(*mu_tilde > 0.0, "Charlier requires mu > 0"),
            Family::Krawtchouk { p, gamma } => {
                check(*p > 0.0 && *p < 1.0, "Krawtchouk requires 0 < p < 1")?;
                check(*gamma > 1.0, "Krawtchouk requires gamma > 1")
            }
            Family::Hahn { b, c } => {
                check(*b > 0.0 && *c > 0.0, "Hahn requires B, C > 0")?;
                check(b <= c, "Hahn requires B <= C")
            }
            Family::NonStationaryHermite { potential } => {
                let d = potential.degree();
                let lead = potential.coeffs().last().copied().unwrap_or(0.0);
                check(
                    matches!(potential.basis(), crate::poly::Basis::Monomial),
                    "potential must be given in monomial form",
                )?;
                check(d >= 2 && d % 2 == 0, "potential must have even degree")?;
                check(lead > 0.0, "potential must have a positive leading coefficient")
            }
        }
    }

    fn check_layer(&self, layer: f64) -> Result<()> {
        if !layer.is_finite() {
            return Err(Error::InvalidParameter("layer time must be finite".into()));
        }
        if let Family::Hahn { b, c } = self.family {
            check(layer > 0.0 && layer < b + c, "Hahn layer requires 0 < rho < B + C")?;
        }
        Ok(())
    }

    /// `(b_k, a)` where `a` couples degrees `k` and `k + 1`.
    pub fn coefficients(&self, layer: f64, k: usize) -> Result<(f64, f64)> {
        let n = self.n as f64;
        let kf = k as f64;
        Ok(match &self.family {
            Family::HermiteOU => (0.0, ((kf + 1.0) / n).sqrt()),
            Family::LaguerreSquaredOU { r } => (
                (2.0 * kf + r + 1.0) / n,
                ((kf + 1.0) * (kf + 1.0 + r)).sqrt() / n,
            ),
            Family::JacobiDiffusion { alpha, beta } => jacobi_unit_interval(*alpha, *beta, k),
            Family::Meixner { gamma, mu } => (
                (kf * (1.0 + mu) + mu * gamma) / ((1.0 - mu) * n),
                (mu * (kf + gamma) * (kf + 1.0)).sqrt() / (n * (1.0 - mu)),
            ),
            Family::CharlierEdge { mu } => ((kf + mu - n) / n.sqrt(), (mu * (kf + 1.0) / n).sqrt()),
            Family::CharlierBulk { mu_tilde } => (
                (kf + mu_tilde * n) / n,
                (mu_tilde * n * (kf + 1.0)).sqrt() / n,
            ),
            Family::Krawtchouk { p, gamma } => {
                let m = (gamma * n).floor();
                if kf > m {
                    return Err(Error::TruncationTooSmall(format!(
                        "Krawtchouk has only {} polynomials",
                        m + 1.0
                    )));
                }
                let off = if kf < m {
                    (p * (1.0 - p) * (kf + 1.0) * (m - kf)).sqrt() / n
                } else {
                    0.0
                };
                ((p * m - 2.0 * p * kf + kf) / n, off)
            }
            Family::Hahn { b, c } => {
                self.check_layer(layer)?;
                let h = HahnLayer::new(self.n, *b, *c, layer);
                if kf > h.big_m {
                    return Err(Error::TruncationTooSmall(format!(
                        "Hahn layer has only {} polynomials",
                        h.big_m + 1.0
                    )));
                }
                let off = if kf < h.big_m { h.off(kf + 1.0) / n } else { 0.0 };
                (h.diag(kf) / n, off)
            }
            Family::NonStationaryHermite { .. } => {
                let j = self.jacobi_matrix(layer, k + 2)?;
                (j.get(k + 1, k + 1), j.get(k + 1, k + 2))
            }
        })
    }

    /// Symmetric tridiagonal Jacobi matrix of size `size` (1-based index `j`
    /// corresponds to degree `j - 1`).
    pub fn jacobi_matrix(&self, layer: f64, size: usize) -> Result<BandedMatrix> {
        self.validate()?;
        self.check_layer(layer)?;
        if size == 0 {
            return Err(Error::InvalidParameter("size must be at least 1".into()));
        }
        if let Family::NonStationaryHermite { potential } = &self.family {
            return potential_jacobi(potential, self.n, size);
        }
        let mut m = BandedMatrix::zeros(size, 1);
        for j in 1..=size {
            let (b, a) = self.coefficients(layer, j - 1)?;
            m.set(j, j, b)?;
            if j < size {
                m.set(j, j + 1, a)?;
                m.set(j + 1, j, a)?;
            }
        }
        Ok(m)
    }

    /// `ln(c_k / c_{k+1})` for degree `k`, where `c` are the time weights.
    pub fn log_weight_gap(&self, layer: f64, k: usize) -> Result<f64> {
        let kf = k as f64;
        match &self.family {
            Family::JacobiDiffusion { alpha, beta } => {
                Ok(self.kappa_n() * layer * (2.0 * kf + alpha + beta + 2.0))
            }
            Family::Hahn { b, c } => {
                self.check_layer(layer)?;
                HahnLayer::new(self.n, *b, *c, layer).log_gap(kf).ok_or_else(|| {
                    Error::TruncationTooSmall(format!(
                        "Hahn weights undefined at degree {k}; increase n * rho"
                    ))
                })
            }
            Family::NonStationaryHermite { .. } => Err(Error::InvalidParameter(
                "non-stationary weights are not a diagonal conjugation".into(),
            )),
            _ => Ok(layer),
        }
    }

    fn kappa_n(&self) -> f64 {
        match &self.family {
            Family::JacobiDiffusion { alpha, beta } => 1.0 / (self.n as f64 * (alpha + beta + 2.0)),
            _ => 1.0,
        }
    }

    /// Conjugate the Jacobi matrix by the time weights:
    /// `(𝕁)_{kl} = (c_k / c_l) 𝒥_{kl}`.
    pub fn weighted_recurrence(&self, layer: f64, size: usize) -> Result<BandedMatrix> {
        if let Family::NonStationaryHermite { potential } = &self.family {
            let extra = potential.degree();
            let jac = self.jacobi_matrix(layer, size + extra)?;
            return nonstationary_j(&jac, &potential.derivative(), layer)
                .map(|m| m.leading(size).compact());
        }
        let jac = self.jacobi_matrix(layer, size)?;
        let mut out = jac.clone();
        for j in 1..size {
            let g = self.log_weight_gap(layer, j - 1)?;
            out.set(j, j + 1, jac.get(j, j + 1) * g.exp())?;
            out.set(j + 1, j, jac.get(j + 1, j) * (-g).exp())?;
        }
        Ok(out)
    }

    /// Limiting symbol data at layer time `t` (for Hahn, `t` is `rho`).
    pub fn limit_symbol(&self, t: f64) -> Result<LimitData> {
        self.validate()?;
        let linear = |a0: f64, a1: f64| LimitData {
            a0,
            a1,
            tau: t,
            time_map: Some(TimeMap::Linear { scale: 1.0 }),
            kappa_n: 1.0,
        };
        Ok(match &self.family {
            Family::HermiteOU => linear(0.0, 1.0),
            Family::LaguerreSquaredOU { .. } => linear(2.0, 1.0),
            Family::JacobiDiffusion { alpha, beta } => {
                let scale = 2.0 / (alpha + beta + 2.0);
                LimitData {
                    a0: 0.5,
                    a1: 0.25,
                    tau: scale * t,
                    time_map: Some(TimeMap::Linear { scale }),
                    kappa_n: self.kappa_n(),
                }
            }
            Family::Meixner { mu, .. } => linear((1.0 + mu) / (1.0 - mu), mu.sqrt() / (1.0 - mu)),
            Family::CharlierEdge { mu } => linear(0.0, mu.sqrt()),
            Family::CharlierBulk { mu_tilde } => linear(1.0 + mu_tilde, mu_tilde.sqrt()),
            Family::Krawtchouk { p, gamma } => {
                linear(p * gamma - 2.0 * p + 1.0, (p * (1.0 - p) * (gamma - 1.0)).sqrt())
            }
            Family::Hahn { b, c } => {
                let h = hahn_limits(*b, *c, t, self.n.max(64))?;
                LimitData {
                    a0: h.b_inf,
                    a1: h.a_inf,
                    tau: h.tau_at_cut,
                    time_map: None,
                    kappa_n: 1.0,
                }
            }
            Family::NonStationaryHermite { .. } => {
                let (b, a) = self.coefficients(t, self.n)?;
                linear(b, a)
            }
        })
    }
}

/// Recurrence of the orthonormal Jacobi polynomials on `[0, 1]` with weight
/// `y^alpha (1 - y)^beta`: `(b_k, a)` with `a` coupling `k` and `k + 1`.
fn jacobi_unit_interval(alpha: f64, beta: f64, k: usize) -> (f64, f64) {
    let (al, be) = (alpha, beta);
    let s = al + be;
    let kf = k as f64;
    let bx = if k == 0 {
        (be - al) / (s + 2.0)
    } else {
        (be * be - al * al) / ((2.0 * kf + s) * (2.0 * kf + s + 2.0))
    };
    let j = kf + 1.0;
    let a2 = if k == 0 {
        4.0 * (1.0 + al) * (1.0 + be) / ((2.0 + s).powi(2) * (3.0 + s))
    } else {
        4.0 * j * (j + al) * (j + be) * (j + s)
            / ((2.0 * j + s).powi(2) * (2.0 * j + s + 1.0) * (2.0 * j + s - 1.0))
    };
    ((1.0 - bx) / 2.0, a2.sqrt() / 2.0)
}

/// Off-diagonal and diagonal of the hexagon recurrence near the cut, with one
/// Richardson step between sizes `n` and `2n`.
pub fn hahn_limits(b: f64, c: f64, rho: f64, n: usize) -> Result<HahnLimits> {
    check(b > 0.0 && c > 0.0 && b <= c, "Hahn requires 0 < B <= C")?;
    check(rho > 0.0 && rho < b + c, "Hahn layer requires 0 < rho < B + C")?;
    check(n >= 2, "Hahn extrapolation needs n >= 2")?;
    let eval = |m: usize| {
        let h = HahnLayer::new(m, b, c, rho);
        let k = m as f64;
        (h.off(k) / k, h.diag(k) / k)
    };
    let (a1, b1) = eval(n);
    let (a2, b2) = eval(2 * n);
    if ![a1, a2, b1, b2].iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "Hahn coefficients at n = {n}; the layer is too close to the boundary"
        )));
    }
    Ok(HahnLimits {
        a_inf: 2.0 * a2 - a1,
        b_inf: 2.0 * b2 - b1,
        tau: 0.5 * ((1.0 + b + c - rho) / (1.0 + rho)).ln(),
        tau_at_cut: 0.5 * ((b + c - rho) / rho).ln(),
        a_raw: (a1, a2),
        b_raw: (b1, b2),
    })
}

/// Jacobi matrix for the weight `exp(-n V(x)) dx`, by discretised Stieltjes
/// on Gauss–Legendre panels over `[-L, L]`.
fn potential_jacobi(v: &Polynomial, n: usize, size: usize) -> Result<BandedMatrix> {
    let nf = n as f64;
    let vmin = {
        let g = GaussLegendre::new(64)?;
        g.nodes()
            .iter()
            .map(|x| v.eval(8.0 * x))
            .fold(f64::INFINITY, f64::min)
    };
    let mut l: f64 = 1.0;
    while nf * (v.eval(l).min(v.eval(-l)) - vmin) - 2.0 * size as f64 * (2.0 * l).ln() < 45.0 {
        l *= 1.1;
        if l > 1e6 {
            return Err(Error::NotConverged("potential confinement radius".into()));
        }
    }
    let order = 20;
    let panels = (4 * size + 200).div_ceil(order).max(8);
    let g = GaussLegendre::new(order)?;
    let breaks: Vec<f64> = (0..=panels)
        .map(|i| -l + 2.0 * l * i as f64 / panels as f64)
        .collect();
    let pts = g.composite(&breaks, 1);
    let nodes: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let logw: Vec<f64> = pts.iter().map(|(x, w)| w.ln() - nf * (v.eval(*x) - vmin)).collect();
    let basis = orthonormal_basis(&nodes, &logw, size, Reorthogonalize::Local)?;
    let rec = basis.recurrence;
    BandedMatrix::from_dense(
        &nalgebra::DMatrix::from_fn(size, size, |i, j| {
            if i == j {
                rec.diag[i]
            } else if i.abs_diff(j) == 1 {
                rec.off[i.min(j)]
            } else {
                0.0
            }
        }),
        1,
    )
}

/// Non-stationary recurrence: `e^{-t} 𝒥` strictly below the diagonal and
/// `e^{-t} 𝒥 + 2 sinh(t) V'(𝒥)` on and above it.
pub fn nonstationary_j(jacobi: &BandedMatrix, vprime: &Polynomial, t: f64) -> Result<BandedMatrix> {
    let vj = poly_apply(jacobi, vprime)?;
    let w = vj.bandwidth().max(jacobi.bandwidth()).max(1);
    let (e, s) = ((-t).exp(), 2.0 * t.sinh());
    let out = BandedMatrix::from_fn(jacobi.dim(), w, |r, c| {
        if r > c {
            e * jacobi.get(r, c)
        } else {
            e * jacobi.get(r, c) + s * vj.get(r, c)
        }
    });
    Ok(out.compact())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stieltjes::orthonormal_basis;

    fn spec(f: Family, n: usize) -> EnsembleSpec {
        EnsembleSpec::new(f, n).unwrap()
    }

    #[test]
    fn hermite_small_matrix() {
        let j = spec(Family::HermiteOU, 4).jacobi_matrix(0.0, 3).unwrap();
        assert!((j.get(1, 2) - 0.5).abs() < 1e-15);
        assert!((j.get(2, 3) - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(j.get(2, 2), 0.0);
    }

    #[test]
    fn laguerre_small_matrix() {
        let j = spec(Family::LaguerreSquaredOU { r: 0.0 }, 2).jacobi_matrix(0.0, 2).unwrap();
        assert_eq!(j.get(1, 1), 0.5);
        assert_eq!(j.get(2, 2), 1.5);
        assert_eq!(j.get(1, 2), 0.5);
    }

    #[test]
    fn krawtchouk_entries_near_cut() {
        let n = 4000;
        let s = spec(Family::Krawtchouk { p: 0.5, gamma: 2.0 }, n);
        let j = s.jacobi_matrix(0.0, n + 5).unwrap();
        assert!((j.get(n + 1, n + 1) - 1.0).abs() < 1e-3);
        assert!((j.get(n, n + 1) - 0.5).abs() < 1e-3);
        let lim = s.limit_symbol(0.0).unwrap();
        assert!((lim.a1 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn invalid_parameters_named() {
        let e = EnsembleSpec::new(Family::Meixner { gamma: 1.0, mu: 1.5 }, 5).unwrap_err();
        assert!(e.to_string().contains("mu"));
        assert!(EnsembleSpec::new(Family::Hahn { b: 2.0, c: 1.0 }, 5).is_err());
        let odd = Polynomial::monomial(vec![0.0, 0.0, 0.0, 1.0]);
        assert!(EnsembleSpec::new(Family::NonStationaryHermite { potential: odd }, 5).is_err());
    }

    #[test]
    fn weighted_identity_at_time_zero() {
        let s = spec(Family::LaguerreSquaredOU { r: 0.5 }, 10);
        assert_eq!(s.weighted_recurrence(0.0, 12).unwrap(), s.jacobi_matrix(0.0, 12).unwrap());
    }

    #[test]
    fn hermite_weights_scale_off_diagonals() {
        let s = spec(Family::HermiteOU, 10);
        let t = 0.7;
        let j = s.jacobi_matrix(t, 8).unwrap();
        let w = s.weighted_recurrence(t, 8).unwrap();
        assert!((w.get(3, 4) - j.get(3, 4) * t.exp()).abs() < 1e-14);
        assert!((w.get(4, 3) - j.get(4, 3) * (-t).exp()).abs() < 1e-14);
        assert_eq!(w.get(4, 4), j.get(4, 4));
    }

    #[test]
    fn weighting_preserves_block_spectrum() {
        let s = spec(Family::JacobiDiffusion { alpha: 1.0, beta: 0.5 }, 20);
        let t = 0.3;
        let j = s.jacobi_matrix(t, 12).unwrap().dense_block(1, 8);
        let w = s.weighted_recurrence(t, 12).unwrap().dense_block(1, 8);
        let mut ej: Vec<f64> = j.symmetric_eigenvalues().iter().copied().collect();
        let mut ew: Vec<f64> = w.complex_eigenvalues().iter().map(|z| z.re).collect();
        ej.sort_by(f64::total_cmp);
        ew.sort_by(f64::total_cmp);
        for (a, b) in ej.iter().zip(&ew) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn jacobi_matches_stieltjes_on_unit_interval() {
        let (al, be) = (2.0f64, 1.0f64);
        let g = GaussLegendre::new(60).unwrap();
        let pts: Vec<(f64, f64)> = g.on(0.0, 1.0).collect();
        let nodes: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let lw: Vec<f64> = pts
            .iter()
            .map(|(y, w)| w.ln() + al * y.ln() + be * (1.0 - y).ln())
            .collect();
        let b = orthonormal_basis(&nodes, &lw, 10, Reorthogonalize::Full).unwrap();
        for k in 0..9 {
            let (d, o) = jacobi_unit_interval(al, be, k);
            assert!((d - b.recurrence.diag[k]).abs() < 1e-12, "diag {k}");
            assert!((o - b.recurrence.off[k]).abs() < 1e-12, "off {k}");
        }
    }

    #[test]
    fn hahn_recurrence_matches_stieltjes() {
        let h = HahnLayer::new(6, 1.0, 1.5, 0.5);
        let m = h.big_m as usize;
        let lf = |x: f64| -> f64 {
            (1..=x as usize).map(|i| (i as f64).ln()).sum::<f64>()
        };
        let nodes: Vec<f64> = (0..=m).map(|x| x as f64).collect();
        let lw: Vec<f64> = nodes
            .iter()
            .map(|&x| -(lf(x) + lf(x + h.alpha) + lf(h.big_m + h.beta - x) + lf(h.big_m - x)))
            .collect();
        let b = orthonormal_basis(&nodes, &lw, m + 1, Reorthogonalize::Full).unwrap();
        for k in 0..m {
            assert!((h.off(k as f64 + 1.0) - b.recurrence.off[k]).abs() < 1e-10);
            assert!((h.diag(k as f64) - b.recurrence.diag[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn hahn_tau_values() {
        let h = hahn_limits(1.0, 1.0, 1.0, 200).unwrap();
        assert!(h.tau.abs() < 1e-15);
        let h = hahn_limits(1.0, 1.0, 0.5, 200).unwrap();
        assert!((h.tau - 0.5 * (2.5f64 / 1.5).ln()).abs() < 1e-15);
        assert!((h.tau - 0.2554).abs() < 1e-4);
        assert!(hahn_limits(1.0, 1.0, 2.5, 200).is_err());
    }

    #[test]
    fn hahn_cauchy_sequence() {
        let d: Vec<f64> = [50, 100, 200, 400]
            .iter()
            .map(|&n| {
                let h = hahn_limits(1.0, 1.0, 1.0, n).unwrap();
                (h.a_raw.0 - h.a_raw.1).abs()
            })
            .collect();
        assert!(d.windows(2).all(|w| w[1] < w[0]), "{d:?}");
    }

    #[test]
    fn gaussian_potential_reproduces_hermite() {
        let v = Polynomial::monomial(vec![0.0, 0.0, 0.5]);
        let n = 30;
        let ns = spec(Family::NonStationaryHermite { potential: v }, n);
        let st = spec(Family::HermiteOU, n);
        for &t in &[0.0, 0.4] {
            let a = ns.weighted_recurrence(t, 40).unwrap();
            let b = st.weighted_recurrence(t, 40).unwrap();
            for r in 1..=40 {
                for c in a.cols(r) {
                    assert!((a.get(r, c) - b.get(r, c)).abs() < 1e-8, "({r},{c}) t={t}");
                }
            }
        }
    }

    #[test]
    fn quartic_upper_part_is_masked_cube() {
        let jac = BandedMatrix::from_fn(12, 1, |r, c| if r == c { 0.0 } else { 1.0 });
        let cube = Polynomial::monomial(vec![0.0, 0.0, 0.0, 1.0]);
        let t = 0.3;
        let got = nonstationary_j(&jac, &cube, t).unwrap();
        let d = jac.to_dense();
        let d3 = &d * &d * &d;
        assert_eq!(got.bandwidth(), 3);
        for r in 1..=12 {
            for c in 1..=12 {
                let want = if r > c {
                    (-t).exp() * d[(r - 1, c - 1)]
                } else {
                    (-t).exp() * d[(r - 1, c - 1)] + 2.0 * t.sinh() * d3[(r - 1, c - 1)]
                };
                assert!((got.get(r, c) - want).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn nonstationary_time_zero_is_identity_map() {
        let jac = BandedMatrix::from_fn(8, 1, |r, c| if r == c { 0.2 } else { 0.9 });
        let vp = Polynomial::monomial(vec![0.0, 1.0, 0.0, 2.0]);
        assert_eq!(nonstationary_j(&jac, &vp, 0.0).unwrap().to_dense(), jac.to_dense());
    }
}
