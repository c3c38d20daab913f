//! Dense matrix exponential and determinants.

use crate::banded::{LogDetParts, Scalar};
use crate::error::{Error, Result};
use nalgebra::DMatrix;

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

fn one_norm<T: Scalar>(a: &DMatrix<T>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|x| x.modulus()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by degree-13 Padé approximation with scaling and squaring.
pub fn expm<T: Scalar>(a: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Dimension("expm needs a square matrix".into()));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("expm input".into()));
    }
    if n == 0 {
        return Ok(a.clone());
    }
    let norm = one_norm(a);
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a * T::from_real(0.5f64.powi(squarings));
    let b = |k: usize| T::from_real(PADE13[k]);
    let id = DMatrix::<T>::identity(n, n);
    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * b(13) + &a4 * b(11) + &a2 * b(9));
    let u = &scaled
        * (u_inner + &a6 * b(7) + &a4 * b(5) + &a2 * b(3) + &id * b(1));
    let v_inner = &a6 * (&a6 * b(12) + &a4 * b(10) + &a2 * b(8));
    let v = v_inner + &a6 * b(6) + &a4 * b(4) + &a2 * b(2) + &id * b(0);
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .ok_or_else(|| Error::NonFinite("singular Padé denominator".into()))?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    if r.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("expm result".into()));
    }
    Ok(r)
}

/// LU with partial pivoting on the leading `n × n` block.
pub fn leading_log_det<T: Scalar>(a: &DMatrix<T>, n: usize) -> Result<LogDetParts> {
    if n > a.nrows() || n > a.ncols() {
        return Err(Error::Dimension(format!("block {n} exceeds matrix size")));
    }
    let mut m = a.view((0, 0), (n, n)).into_owned();
    let mut parts = LogDetParts::default();
    for k in 0..n {
        let (mut piv, mut best) = (k, m[(k, k)].modulus());
        for i in k + 1..n {
            let v = m[(i, k)].modulus();
            if v > best {
                best = v;
                piv = i;
            }
        }
        if !best.is_finite() {
            return Err(Error::NonFinite("LU pivot".into()));
        }
        if best == 0.0 {
            parts.singular = true;
            return Ok(parts);
        }
        if piv != k {
            m.swap_rows(k, piv);
            parts.swaps += 1;
        }
        let p = m[(k, k)];
        parts.log_abs += p.modulus().ln();
        parts.arg += p.argument();
        for i in k + 1..n {
            let l = m[(i, k)] / p;
            if l == T::zero() {
                continue;
            }
            for j in k + 1..n {
                let u = m[(k, j)];
                m[(i, j)] -= l * u;
            }
        }
    }
    Ok(parts)
}

/// `(sign, log|det|)` of the leading `n × n` block of a real matrix; a
/// singular block gives `(0, -inf)`.
pub fn principal_block_det(a: &DMatrix<f64>, n: usize) -> Result<(f64, f64)> {
    let parts = leading_log_det(a, n)?;
    Ok((parts.sign(), parts.log_abs_or_neg_inf()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn expm_of_diagonal() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -2.0, 30.0]));
        let e = expm(&a).unwrap();
        assert!((e[(0, 0)] - 1f64.exp()).abs() < 1e-13);
        assert!((e[(1, 1)] - (-2f64).exp()).abs() < 1e-15);
        assert!((e[(2, 2)] / 30f64.exp() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn expm_rotation_generator() {
        let t: f64 = 2.5;
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -t, t, 0.0]);
        let e = expm(&a).unwrap();
        assert!((e[(0, 0)] - t.cos()).abs() < 1e-13);
        assert!((e[(1, 0)] - t.sin()).abs() < 1e-13);
    }

    #[test]
    fn expm_complex_nilpotent() {
        let z = Complex64::new(0.3, -1.2);
        let zero = Complex64::new(0.0, 0.0);
        let a = DMatrix::from_row_slice(2, 2, &[zero, z, zero, zero]);
        let e = expm(&a).unwrap();
        assert!((e[(0, 1)] - z).norm() < 1e-15);
        assert!((e[(0, 0)] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn expm_rejects_nan() {
        let a = DMatrix::from_element(2, 2, f64::NAN);
        assert!(matches!(expm(&a), Err(Error::NonFinite(_))));
    }

    #[test]
    fn block_det_sign_and_singular() {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 2.0, 1.0, 3.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
        let (s, l) = principal_block_det(&a, 2).unwrap();
        assert_eq!(s, -1.0);
        assert!((l - 6f64.ln()).abs() < 1e-14);
        let z = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let (s, l) = principal_block_det(&z, 2).unwrap();
        assert_eq!(s, 0.0);
        assert_eq!(l, f64::NEG_INFINITY);
    }
}
