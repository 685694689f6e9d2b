//! Compressed-row complex operators and dense amplitude vectors.

use std::ops::{Index, IndexMut};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Entrywise tolerance below which an operator is flagged hermitian.
pub const HERMITIAN_TOLERANCE: f64 = 1e-12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Sparse complex matrix in CSR layout.
///
/// Column indices inside a row are strictly increasing and explicit zeros are
/// never stored. The hermitian flag is recomputed by every constructor.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseOperator {
    dim: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<Complex64>,
    hermitian: bool,
}

impl SparseOperator {
    pub fn zero(dim: usize) -> Self {
        Self::from_csr(dim, vec![0; dim + 1], Vec::new(), Vec::new())
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diagonal(&vec![Complex64::new(1.0, 0.0); dim])
    }

    pub fn from_diagonal(diag: &[Complex64]) -> Self {
        let dim = diag.len();
        let mut indptr = Vec::with_capacity(dim + 1);
        let mut indices = Vec::with_capacity(dim);
        let mut values = Vec::with_capacity(dim);
        indptr.push(0);
        for (i, &d) in diag.iter().enumerate() {
            if d != ZERO {
                indices.push(i);
                values.push(d);
            }
            indptr.push(indices.len());
        }
        Self::from_csr(dim, indptr, indices, values)
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let diag: Vec<Complex64> = diag.iter().map(|&d| Complex64::new(d, 0.0)).collect();
        Self::from_diagonal(&diag)
    }

    /// Builds an operator from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(dim: usize, triplets: &[(usize, usize, Complex64)]) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); dim];
        for &(r, c, v) in triplets {
            if r >= dim || c >= dim {
                return Err(Error::DimensionMismatch { left: dim, right: r.max(c) + 1 });
            }
            rows[r].push((c, v));
        }
        let mut indptr = Vec::with_capacity(dim + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut iter = row.into_iter().peekable();
            while let Some((c, mut v)) = iter.next() {
                while let Some(&(c2, v2)) = iter.peek() {
                    if c2 != c {
                        break;
                    }
                    v += v2;
                    iter.next();
                }
                if v != ZERO {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Ok(Self::from_csr(dim, indptr, indices, values))
    }

    fn from_csr(dim: usize, indptr: Vec<usize>, indices: Vec<usize>, values: Vec<Complex64>) -> Self {
        let mut op = Self { dim, indptr, indices, values, hermitian: false };
        op.hermitian = op.hermitian_residual() <= HERMITIAN_TOLERANCE;
        op
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    /// All stored entries as `(row, col, value)`.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.dim).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        let span = self.indptr[i]..self.indptr[i + 1];
        match self.indices[span.clone()].binary_search(&j) {
            Ok(k) => self.values[span.start + k],
            Err(_) => ZERO,
        }
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Largest entrywise modulus of `A - A†`.
    pub fn hermitian_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, j, v) in self.entries() {
            worst = worst.max((v - self.get(j, i).conj()).norm());
        }
        worst
    }

    fn check_dim(&self, other_dim: usize) -> Result<()> {
        if self.dim != other_dim {
            return Err(Error::DimensionMismatch { left: self.dim, right: other_dim });
        }
        Ok(())
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        if factor == ZERO {
            return Self::zero(self.dim);
        }
        let values = self.values.iter().map(|v| v * factor).collect();
        Self::from_csr(self.dim, self.indptr.clone(), self.indices.clone(), values)
    }

    pub fn scale_real(&self, factor: f64) -> Self {
        self.scale(Complex64::new(factor, 0.0))
    }

    /// `self + factor * other`.
    pub fn add_scaled(&self, other: &Self, factor: Complex64) -> Result<Self> {
        self.check_dim(other.dim)?;
        let mut indptr = Vec::with_capacity(self.dim + 1);
        let mut indices = Vec::with_capacity(self.nnz() + other.nnz());
        let mut values = Vec::with_capacity(self.nnz() + other.nnz());
        indptr.push(0);
        for i in 0..self.dim {
            let mut a = self.row(i).peekable();
            let mut b = other.row(i).map(|(j, v)| (j, v * factor)).peekable();
            loop {
                let next = match (a.peek(), b.peek()) {
                    (Some(&(ja, va)), Some(&(jb, vb))) => {
                        if ja == jb {
                            a.next();
                            b.next();
                            (ja, va + vb)
                        } else if ja < jb {
                            a.next();
                            (ja, va)
                        } else {
                            b.next();
                            (jb, vb)
                        }
                    }
                    (Some(&e), None) => {
                        a.next();
                        e
                    }
                    (None, Some(&e)) => {
                        b.next();
                        e
                    }
                    (None, None) => break,
                };
                if next.1 != ZERO {
                    indices.push(next.0);
                    values.push(next.1);
                }
            }
            indptr.push(indices.len());
        }
        Ok(Self::from_csr(self.dim, indptr, indices, values))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.add_scaled(other, Complex64::new(1.0, 0.0))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add_scaled(other, Complex64::new(-1.0, 0.0))
    }

    /// Matrix product `self * other`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        self.check_dim(other.dim)?;
        let mut acc = vec![ZERO; self.dim];
        let mut touched = vec![false; self.dim];
        let mut cols: Vec<usize> = Vec::new();
        let mut indptr = Vec::with_capacity(self.dim + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for i in 0..self.dim {
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    if !touched[j] {
                        touched[j] = true;
                        cols.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            cols.sort_unstable();
            for &j in &cols {
                if acc[j] != ZERO {
                    indices.push(j);
                    values.push(acc[j]);
                }
                acc[j] = ZERO;
                touched[j] = false;
            }
            cols.clear();
            indptr.push(indices.len());
        }
        Ok(Self::from_csr(self.dim, indptr, indices, values))
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let mut counts = vec![0usize; self.dim + 1];
        for &j in &self.indices {
            counts[j + 1] += 1;
        }
        for k in 0..self.dim {
            counts[k + 1] += counts[k];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0; self.nnz()];
        let mut values = vec![ZERO; self.nnz()];
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                let slot = next[j];
                indices[slot] = i;
                values[slot] = v.conj();
                next[j] += 1;
            }
        }
        Self::from_csr(self.dim, indptr, indices, values)
    }

    /// `(A + A†) / 2`, exactly hermitian by construction.
    pub fn hermitian_part(&self) -> Self {
        self.add(&self.adjoint())
            .expect("adjoint has the same dimension")
            .scale_real(0.5)
    }

    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![ZERO; self.dim];
        self.apply_into(x, &mut y);
        y
    }

    /// `y = A x`; panics if the lengths disagree with the dimension.
    pub fn apply_into(&self, x: &[Complex64], y: &mut [Complex64]) {
        assert_eq!(x.len(), self.dim, "operand length");
        assert_eq!(y.len(), self.dim, "output length");
        for (i, out) in y.iter_mut().enumerate() {
            let mut s = ZERO;
            for k in self.indptr[i]..self.indptr[i + 1] {
                s += self.values[k] * x[self.indices[k]];
            }
            *out = s;
        }
    }

    /// `⟨x|A|x⟩`.
    pub fn expectation(&self, x: &[Complex64]) -> Complex64 {
        let ax = self.apply(x);
        inner(x, &ax)
    }

    pub fn diagonal(&self) -> Vec<Complex64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn is_diagonal(&self) -> bool {
        self.entries().all(|(i, j, _)| i == j)
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (i, j, v) in self.entries() {
            m[(i, j)] = v;
        }
        m
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        Ok(self.sub(other)?.max_abs_entry())
    }

    /// Compresses onto the basis states listed in `keep`.
    ///
    /// Fails with [`Error::NotInvariant`] when the operator maps the kept
    /// subspace outside itself by more than `tolerance`.
    pub fn restrict(&self, keep: &[usize], tolerance: f64) -> Result<Self> {
        let mut position = vec![usize::MAX; self.dim];
        for (new, &old) in keep.iter().enumerate() {
            if old >= self.dim {
                return Err(Error::DimensionMismatch { left: self.dim, right: old + 1 });
            }
            position[old] = new;
        }
        let adj = self.adjoint();
        let mut leak: f64 = 0.0;
        let mut triplets = Vec::new();
        for (new_col, &old_col) in keep.iter().enumerate() {
            // column old_col of A = conjugated row old_col of A†
            for (old_row, v) in adj.row(old_col) {
                let v = v.conj();
                match position[old_row] {
                    usize::MAX => leak = leak.max(v.norm()),
                    new_row => triplets.push((new_row, new_col, v)),
                }
            }
        }
        if leak > tolerance {
            return Err(Error::NotInvariant(leak));
        }
        Self::from_triplets(keep.len(), &triplets)
    }
}

/// `⟨x|y⟩`, conjugate-linear in the first argument.
pub fn inner(x: &[Complex64], y: &[Complex64]) -> Complex64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

pub fn norm(x: &[Complex64]) -> f64 {
    x.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

/// Dense amplitude vector over an enumerated basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    pub fn new(amplitudes: Vec<Complex64>) -> Self {
        Self { amplitudes }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { amplitudes: vec![ZERO; dim] }
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        let mut s = Self::zeros(dim);
        s.amplitudes[index] = Complex64::new(1.0, 0.0);
        s
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        norm(&self.amplitudes)
    }

    pub fn inner(&self, other: &Self) -> Complex64 {
        inner(&self.amplitudes, &other.amplitudes)
    }

    /// Returns the unit vector along `self`; a zero vector is an error.
    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::NotNormalized(n));
        }
        Ok(Self { amplitudes: self.amplitudes.iter().map(|a| a / n).collect() })
    }

    /// Multiplies by a global phase so the first amplitude above `1e-12` is real positive.
    pub fn fix_phase(&mut self) {
        if let Some(first) = self.amplitudes.iter().find(|a| a.norm() > 1e-12) {
            let phase = first.conj() / first.norm();
            for a in &mut self.amplitudes {
                *a *= phase;
            }
        }
    }
}

impl Index<usize> for StateVector {
    type Output = Complex64;
    fn index(&self, i: usize) -> &Complex64 {
        &self.amplitudes[i]
    }
}

impl IndexMut<usize> for StateVector {
    fn index_mut(&mut self, i: usize) -> &mut Complex64 {
        &mut self.amplitudes[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn sample() -> SparseOperator {
        SparseOperator::from_triplets(
            3,
            &[(0, 1, c(1.0, 2.0)), (1, 0, c(3.0, 0.0)), (2, 2, c(0.0, -1.0)), (0, 1, c(1.0, 0.0))],
        )
        .unwrap()
    }

    #[test]
    fn duplicates_are_summed() {
        assert_eq!(sample().get(0, 1), c(2.0, 2.0));
        assert_eq!(sample().nnz(), 3);
    }

    #[test]
    fn a_minus_a_is_zero() {
        let a = sample();
        let z = a.add_scaled(&a, c(-1.0, 0.0)).unwrap();
        assert_eq!(z.nnz(), 0);
        assert!(z.is_hermitian());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let a = SparseOperator::identity(2);
        let b = SparseOperator::identity(3);
        assert!(matches!(a.add(&b), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(a.matmul(&b), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn restrict_detects_leakage() {
        let a = sample();
        assert!(matches!(a.restrict(&[0], 1e-12), Err(Error::NotInvariant(_))));
        let r = a.restrict(&[2], 1e-12).unwrap();
        assert_eq!(r.get(0, 0), c(0.0, -1.0));
    }

    fn arb_op(dim: usize) -> impl Strategy<Value = SparseOperator> {
        prop::collection::vec((0..dim, 0..dim, -2.0..2.0f64, -2.0..2.0f64), 0..12).prop_map(
            move |t| {
                let t: Vec<_> = t.into_iter().map(|(i, j, re, im)| (i, j, c(re, im))).collect();
                SparseOperator::from_triplets(dim, &t).unwrap()
            },
        )
    }

    proptest! {
        #[test]
        fn product_adjoint_identity(a in arb_op(5), b in arb_op(5)) {
            let lhs = a.matmul(&b).unwrap().adjoint();
            let rhs = b.adjoint().matmul(&a.adjoint()).unwrap();
            prop_assert!(lhs.max_abs_diff(&rhs).unwrap() <= 1e-12);
        }

        #[test]
        fn matmul_matches_dense(a in arb_op(4), b in arb_op(4)) {
            let sparse = a.matmul(&b).unwrap().to_dense();
            let dense = a.to_dense() * b.to_dense();
            prop_assert!((sparse - dense).iter().all(|v| v.norm() <= 1e-12));
        }

        #[test]
        fn hermitian_part_is_flagged(a in arb_op(6)) {
            let h = a.hermitian_part();
            prop_assert!(h.is_hermitian());
            prop_assert_eq!(h.hermitian_residual(), 0.0);
        }
    }
}
