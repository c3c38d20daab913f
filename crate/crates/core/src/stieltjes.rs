//! Discretised Stieltjes procedure: three-term recurrence coefficients of the
//! orthonormal polynomials of a discrete measure.

use crate::error::{Error, Result};

/// Jacobi-matrix data: `diag[k] = b_k`, `off[k]` couples degrees `k` and `k + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Recurrence {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

/// Recurrence plus the orthonormal vectors `q[j][i] = sqrt(w_i) p_j(x_i)`.
#[derive(Debug, Clone)]
pub struct OrthonormalBasis {
    pub recurrence: Recurrence,
    pub vectors: Vec<Vec<f64>>,
    /// Total mass of the (unshifted) weights.
    pub mass: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reorthogonalize {
    /// Once against the two previous vectors.
    Local,
    /// Once against every previous vector.
    Full,
}

fn kahan_dot(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    let (mut s, mut comp) = (0.0f64, 0.0f64);
    for i in 0..a.len() {
        let y = a[i] * b[i] * c[i] - comp;
        let t = s + y;
        comp = (t - s) - y;
        s = t;
    }
    s
}

fn kahan_norm2(a: &[f64]) -> f64 {
    let (mut s, mut comp) = (0.0f64, 0.0f64);
    for &x in a {
        let y = x * x - comp;
        let t = s + y;
        comp = (t - s) - y;
        s = t;
    }
    s
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let (mut s, mut comp) = (0.0f64, 0.0f64);
    for i in 0..a.len() {
        let y = a[i] * b[i] - comp;
        let t = s + y;
        comp = (t - s) - y;
        s = t;
    }
    s
}

/// Orthonormalise `1, x, x², …` against `Σ_i w_i δ_{x_i}` with
/// `w_i = exp(log_weights[i])`. Weights may be given up to a common shift.
pub fn orthonormal_basis(
    nodes: &[f64],
    log_weights: &[f64],
    count: usize,
    reorth: Reorthogonalize,
) -> Result<OrthonormalBasis> {
    if nodes.len() != log_weights.len() {
        return Err(Error::Dimension("nodes and weights differ in length".into()));
    }
    let support = log_weights.iter().filter(|w| **w > f64::NEG_INFINITY).count();
    if count == 0 || count > support {
        return Err(Error::InvalidParameter(format!(
            "requested {count} orthonormal polynomials from a measure with {support} atoms"
        )));
    }
    let shift = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return Err(Error::NonFinite("log weights".into()));
    }
    let sqrt_w: Vec<f64> = log_weights.iter().map(|l| (0.5 * (l - shift)).exp()).collect();
    let scaled_mass = kahan_norm2(&sqrt_w);
    let mass = scaled_mass * shift.exp();
    let mut q0: Vec<f64> = sqrt_w.iter().map(|s| s / scaled_mass.sqrt()).collect();
    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(count);
    let mut diag = Vec::with_capacity(count);
    let mut off = Vec::with_capacity(count);
    let mut prev: Vec<f64> = vec![0.0; nodes.len()];
    let mut prev_off = 0.0;
    for k in 0..count {
        let b = kahan_dot(&q0, &q0, nodes);
        diag.push(b);
        vectors.push(q0.clone());
        if k + 1 == count {
            break;
        }
        let mut r: Vec<f64> = (0..nodes.len())
            .map(|i| (nodes[i] - b) * q0[i] - prev_off * prev[i])
            .collect();
        match reorth {
            Reorthogonalize::Local => {
                for v in [&q0, &prev] {
                    let c = dot(&r, v);
                    r.iter_mut().zip(v.iter()).for_each(|(x, y)| *x -= c * y);
                }
            }
            Reorthogonalize::Full => {
                for v in &vectors {
                    let c = dot(&r, v);
                    r.iter_mut().zip(v.iter()).for_each(|(x, y)| *x -= c * y);
                }
            }
        }
        let a = kahan_norm2(&r).sqrt();
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::NonFinite(format!("Stieltjes step {k} lost positivity")));
        }
        off.push(a);
        r.iter_mut().for_each(|x| *x /= a);
        prev = std::mem::replace(&mut q0, r);
        prev_off = a;
    }
    Ok(OrthonormalBasis {
        recurrence: Recurrence { diag, off },
        vectors,
        mass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::GaussLegendre;

    #[test]
    fn legendre_recurrence() {
        let g = GaussLegendre::new(40).unwrap();
        let lw: Vec<f64> = g.weights().iter().map(|w| w.ln()).collect();
        let b = orthonormal_basis(g.nodes(), &lw, 10, Reorthogonalize::Local).unwrap();
        for (k, a) in b.recurrence.off.iter().enumerate() {
            let k1 = (k + 1) as f64;
            let want = k1 / ((2.0 * k1 - 1.0) * (2.0 * k1 + 1.0)).sqrt();
            assert!((a - want).abs() < 1e-13);
        }
        assert!(b.recurrence.diag.iter().all(|d| d.abs() < 1e-14));
        assert!((b.mass - 2.0).abs() < 1e-13);
    }

    #[test]
    fn too_many_polynomials_rejected() {
        let r = orthonormal_basis(&[0.0, 1.0], &[0.0, 0.0], 3, Reorthogonalize::Full);
        assert!(r.is_err());
    }

    #[test]
    fn binomial_weights_give_krawtchouk() {
        let m = 6usize;
        let p: f64 = 0.3;
        let nodes: Vec<f64> = (0..=m).map(|x| x as f64).collect();
        let lw: Vec<f64> = (0..=m)
            .map(|x| {
                let binom = (1..=x).fold(1.0, |acc, i| acc * (m + 1 - i) as f64 / i as f64);
                binom.ln() + x as f64 * p.ln() + (m - x) as f64 * (1.0 - p).ln()
            })
            .collect();
        let b = orthonormal_basis(&nodes, &lw, m + 1, Reorthogonalize::Full).unwrap();
        for k in 0..m {
            let want = (p * (1.0 - p) * ((k + 1) * (m - k)) as f64).sqrt();
            assert!((b.recurrence.off[k] - want).abs() < 1e-12);
            let dwant = p * (m - k) as f64 + k as f64 * (1.0 - p);
            assert!((b.recurrence.diag[k] - dwant).abs() < 1e-12);
        }
    }
}
