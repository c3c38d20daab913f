//! Finite banded matrices with 1-based indexing.

use crate::error::{Error, Result};
use crate::poly::{Algebra, Polynomial};
use nalgebra::{ComplexField, DMatrix};
use num_complex::Complex64;

/// Scalars usable in banded and dense routines.
pub trait Scalar: ComplexField<RealField = f64> + Copy {}
impl<T: ComplexField<RealField = f64> + Copy> Scalar for T {}

/// Square matrix with `entry(r, s) == 0` whenever `|r - s| > bandwidth`.
/// Row `r` stores columns `r - bandwidth ..= r + bandwidth`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedMatrix<T: Scalar = f64> {
    dim: usize,
    bandwidth: usize,
    data: Vec<T>,
}

impl<T: Scalar> BandedMatrix<T> {
    pub fn zeros(dim: usize, bandwidth: usize) -> Self {
        let bandwidth = bandwidth.min(dim.saturating_sub(1));
        BandedMatrix {
            dim,
            bandwidth,
            data: vec![T::zero(); dim * (2 * bandwidth + 1)],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, 0);
        m.data.iter_mut().for_each(|x| *x = T::one());
        m
    }

    /// Build from a function of 1-based `(row, col)`, queried only inside the band.
    pub fn from_fn<F: FnMut(usize, usize) -> T>(dim: usize, bandwidth: usize, mut f: F) -> Self {
        let mut m = Self::zeros(dim, bandwidth);
        let w = m.bandwidth;
        for r in 1..=dim {
            for s in r.saturating_sub(w).max(1)..=(r + w).min(dim) {
                let v = f(r, s);
                let k = m.slot(r, s);
                m.data[k] = v;
            }
        }
        m
    }

    pub fn from_dense(dense: &DMatrix<T>, bandwidth: usize) -> Result<Self> {
        let dim = dense.nrows();
        if dense.ncols() != dim {
            return Err(Error::Dimension("banded matrices are square".into()));
        }
        for r in 0..dim {
            for s in 0..dim {
                if r.abs_diff(s) > bandwidth && dense[(r, s)] != T::zero() {
                    return Err(Error::InvalidParameter(format!(
                        "entry ({}, {}) lies outside bandwidth {bandwidth}",
                        r + 1,
                        s + 1
                    )));
                }
            }
        }
        Ok(Self::from_fn(dim, bandwidth, |r, s| dense[(r - 1, s - 1)]))
    }

    #[inline]
    fn slot(&self, r: usize, s: usize) -> usize {
        (r - 1) * (2 * self.bandwidth + 1) + (s + self.bandwidth - r)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Declared (storage) bandwidth.
    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    /// Largest `|r - s|` carrying a nonzero entry.
    pub fn effective_bandwidth(&self) -> usize {
        let mut best = 0;
        for r in 1..=self.dim {
            for s in self.cols(r) {
                if self.data[self.slot(r, s)] != T::zero() {
                    best = best.max(r.abs_diff(s));
                }
            }
        }
        best
    }

    /// Column range stored for row `r`.
    #[inline]
    pub fn cols(&self, r: usize) -> std::ops::RangeInclusive<usize> {
        r.saturating_sub(self.bandwidth).max(1)..=(r + self.bandwidth).min(self.dim)
    }

    #[inline]
    pub fn get(&self, r: usize, s: usize) -> T {
        assert!(r >= 1 && s >= 1 && r <= self.dim && s <= self.dim, "index out of range");
        if r.abs_diff(s) > self.bandwidth {
            T::zero()
        } else {
            self.data[self.slot(r, s)]
        }
    }

    pub fn set(&mut self, r: usize, s: usize, v: T) -> Result<()> {
        if r == 0 || s == 0 || r > self.dim || s > self.dim {
            return Err(Error::Dimension(format!("index ({r}, {s}) outside 1..={}", self.dim)));
        }
        if r.abs_diff(s) > self.bandwidth {
            return Err(Error::InvalidParameter(format!(
                "entry ({r}, {s}) lies outside bandwidth {}",
                self.bandwidth
            )));
        }
        let k = self.slot(r, s);
        self.data[k] = v;
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn map<U: Scalar, F: Fn(T) -> U>(&self, f: F) -> BandedMatrix<U> {
        BandedMatrix {
            dim: self.dim,
            bandwidth: self.bandwidth,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn scale_by(&self, c: T) -> Self {
        let mut m = self.clone();
        m.data.iter_mut().for_each(|x| *x *= c);
        m
    }

    pub fn sum(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        let w = self.bandwidth.max(other.bandwidth);
        Self::from_fn(self.dim, w, |r, s| self.get(r, s) + other.get(r, s))
    }

    /// Product; the result bandwidth is the sum of the two (capped at `dim - 1`).
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        let mut out = Self::zeros(self.dim, self.bandwidth + other.bandwidth);
        for r in 1..=self.dim {
            for k in self.cols(r) {
                let a = self.data[self.slot(r, k)];
                if a == T::zero() {
                    continue;
                }
                for s in other.cols(k) {
                    let idx = out.slot(r, s);
                    out.data[idx] += a * other.data[other.slot(k, s)];
                }
            }
        }
        out
    }

    /// Shrink storage to the effective bandwidth.
    pub fn compact(&self) -> Self {
        let w = self.effective_bandwidth();
        if w == self.bandwidth {
            return self.clone();
        }
        Self::from_fn(self.dim, w, |r, s| self.get(r, s))
    }

    /// Zero every entry whose magnitude is at most `tol`, then compact.
    pub fn drop_below(&self, tol: f64) -> Self {
        let mut m = self.clone();
        m.data.iter_mut().for_each(|x| {
            if x.modulus() <= tol {
                *x = T::zero()
            }
        });
        m.compact()
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let mut d = DMatrix::zeros(self.dim, self.dim);
        for r in 1..=self.dim {
            for s in self.cols(r) {
                d[(r - 1, s - 1)] = self.data[self.slot(r, s)];
            }
        }
        d
    }

    /// Dense copy of rows/columns `lo..=hi`.
    pub fn dense_block(&self, lo: usize, hi: usize) -> DMatrix<T> {
        assert!(lo >= 1 && hi <= self.dim && lo <= hi, "block out of range");
        let m = hi - lo + 1;
        DMatrix::from_fn(m, m, |i, j| self.get(lo + i, lo + j))
    }

    /// Principal `n × n` leading block.
    pub fn leading(&self, n: usize) -> Self {
        assert!(n <= self.dim, "leading block larger than matrix");
        Self::from_fn(n, self.bandwidth, |r, s| self.get(r, s))
    }

    pub fn trace_leading(&self, n: usize) -> T {
        (1..=n.min(self.dim)).fold(T::zero(), |acc, j| acc + self.get(j, j))
    }

    /// Keep only entries with both indices in `(n - width, n + width]`.
    pub fn window(&self, n: usize, width: usize) -> Self {
        let lo = n.saturating_sub(width) + 1;
        let hi = n + width;
        Self::from_fn(self.dim, self.bandwidth, |r, s| {
            if r >= lo && r <= hi && s >= lo && s <= hi {
                self.get(r, s)
            } else {
                T::zero()
            }
        })
    }

    /// `sqrt(Σ |entry(r,s)|²)` over pairs with exactly one of `r, s` at most `n`.
    pub fn hs_commutator_norm(&self, n: usize) -> Result<f64> {
        if n == 0 || n + self.bandwidth > self.dim {
            return Err(Error::TruncationTooSmall(format!(
                "cut {n} needs dimension at least {}",
                n + self.bandwidth
            )));
        }
        let mut acc = 0.0;
        for r in 1..=self.dim {
            for s in self.cols(r) {
                if (r <= n) != (s <= n) {
                    acc += self.get(r, s).modulus_squared();
                }
            }
        }
        Ok(acc.sqrt())
    }

    /// Largest absolute row sum (an upper bound for every eigenvalue modulus).
    pub fn max_row_sum(&self) -> f64 {
        (1..=self.dim)
            .map(|r| self.cols(r).map(|s| self.get(r, s).modulus()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Largest absolute column sum.
    pub fn max_col_sum(&self) -> f64 {
        let mut sums = vec![0.0; self.dim + 1];
        for r in 1..=self.dim {
            for s in self.cols(r) {
                sums[s] += self.get(r, s).modulus();
            }
        }
        sums.into_iter().fold(0.0, f64::max)
    }

    /// `sqrt(‖·‖₁ ‖·‖∞)`, an upper bound on the spectral norm.
    pub fn operator_norm_bound(&self) -> f64 {
        (self.max_row_sum() * self.max_col_sum()).sqrt()
    }

    /// Matrix-vector product.
    pub fn apply_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.dim);
        (1..=self.dim)
            .map(|r| {
                self.cols(r)
                    .fold(T::zero(), |acc, s| acc + self.get(r, s) * v[s - 1])
            })
            .collect()
    }

    /// Log-determinant of the leading `n × n` block by banded LU with
    /// partial pivoting.
    pub fn leading_log_det(&self, n: usize) -> Result<LogDetParts> {
        if n > self.dim {
            return Err(Error::Dimension(format!("block {n} exceeds dimension {}", self.dim)));
        }
        let bl = self.bandwidth;
        let width = 3 * bl + 1;
        // Row r holds columns r - bl ..= r + 2 bl, offset by r - bl.
        let mut work = vec![T::zero(); n * width];
        let at = |r: usize, c: usize| (r - 1) * width + (c + bl - r);
        for r in 1..=n {
            for s in r.saturating_sub(bl).max(1)..=(r + bl).min(n) {
                work[at(r, s)] = self.get(r, s);
            }
        }
        let mut parts = LogDetParts::default();
        for k in 1..=n {
            let last_row = (k + bl).min(n);
            let last_col = (k + 2 * bl).min(n);
            let mut piv = k;
            let mut best = work[at(k, k)].modulus();
            for i in k + 1..=last_row {
                let m = work[at(i, k)].modulus();
                if m > best {
                    best = m;
                    piv = i;
                }
            }
            if !best.is_finite() {
                return Err(Error::NonFinite("banded LU pivot".into()));
            }
            if best == 0.0 {
                parts.singular = true;
                return Ok(parts);
            }
            if piv != k {
                for c in k..=last_col {
                    work.swap(at(k, c), at(piv, c));
                }
                parts.swaps += 1;
            }
            let p = work[at(k, k)];
            parts.log_abs += p.modulus().ln();
            parts.arg += p.argument();
            for i in k + 1..=last_row {
                let l = work[at(i, k)] / p;
                if l == T::zero() {
                    continue;
                }
                for c in k + 1..=last_col {
                    let u = work[at(k, c)];
                    work[at(i, c)] -= l * u;
                }
            }
        }
        Ok(parts)
    }
}

/// Pieces of `log det` from an LU factorisation: `log|det|`, the sum of pivot
/// arguments and the number of row swaps.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LogDetParts {
    pub log_abs: f64,
    pub arg: f64,
    pub swaps: usize,
    pub singular: bool,
}

impl LogDetParts {
    /// Total phase including `π` per row swap.
    pub fn phase(&self) -> f64 {
        self.arg + std::f64::consts::PI * self.swaps as f64
    }

    /// Sign for real matrices (0 when singular).
    pub fn sign(&self) -> f64 {
        if self.singular {
            return 0.0;
        }
        let turns = (self.phase() / std::f64::consts::PI).round() as i64;
        if turns.rem_euclid(2) == 0 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn log_abs_or_neg_inf(&self) -> f64 {
        if self.singular {
            f64::NEG_INFINITY
        } else {
            self.log_abs
        }
    }

    pub fn as_complex(&self) -> Complex64 {
        Complex64::new(self.log_abs_or_neg_inf(), self.phase())
    }
}

impl<T: Scalar> Algebra for BandedMatrix<T> {
    fn unit_like(&self) -> Self {
        Self::identity(self.dim)
    }
    fn mul(&self, other: &Self) -> Self {
        self.matmul(other)
    }
    fn add(&self, other: &Self) -> Self {
        self.sum(other)
    }
    fn scale(&self, c: f64) -> Self {
        self.scale_by(T::from_real(c))
    }
    fn add_unit(&self, c: f64) -> Self {
        let mut m = self.clone();
        for j in 1..=m.dim {
            let k = m.slot(j, j);
            m.data[k] += T::from_real(c);
        }
        m
    }
}

/// `p(J)` for a banded `J`; requires `deg(p) · bandwidth(J) < dim(J)`.
pub fn poly_apply(j: &BandedMatrix<f64>, p: &Polynomial) -> Result<BandedMatrix<f64>> {
    let reach = p.degree() * j.bandwidth();
    if reach >= j.dim() {
        return Err(Error::TruncationTooSmall(format!(
            "degree {} times bandwidth {} must stay below dimension {}",
            p.degree(),
            j.bandwidth(),
            j.dim()
        )));
    }
    let out = p.apply(j);
    if !out.is_finite() {
        return Err(Error::NonFinite("poly_apply".into()));
    }
    Ok(out.compact())
}
