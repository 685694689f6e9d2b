//! Hermitian eigen-solvers and Krylov propagation.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::sparse::{inner, norm, SparseOperator};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Anything that can act on a dense amplitude vector.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply_into(&self, x: &[Complex64], y: &mut [Complex64]);

    fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![ZERO; self.dim()];
        self.apply_into(x, &mut y);
        y
    }
}

impl LinearOperator for SparseOperator {
    fn dim(&self) -> usize {
        SparseOperator::dim(self)
    }

    fn apply_into(&self, x: &[Complex64], y: &mut [Complex64]) {
        SparseOperator::apply_into(self, x, y)
    }
}

/// Real linear combination `Σ c_k A_k` applied term by term.
pub struct Combination<'a> {
    terms: Vec<(f64, &'a SparseOperator)>,
    scratch: std::cell::RefCell<Vec<Complex64>>,
}

impl<'a> Combination<'a> {
    pub fn new(terms: Vec<(f64, &'a SparseOperator)>) -> Result<Self> {
        let dim = terms.first().map(|t| t.1.dim()).unwrap_or(0);
        if let Some(bad) = terms.iter().find(|t| t.1.dim() != dim) {
            return Err(Error::DimensionMismatch { left: dim, right: bad.1.dim() });
        }
        Ok(Self { terms, scratch: std::cell::RefCell::new(vec![ZERO; dim]) })
    }
}

impl LinearOperator for Combination<'_> {
    fn dim(&self) -> usize {
        self.terms.first().map(|t| t.1.dim()).unwrap_or(0)
    }

    fn apply_into(&self, x: &[Complex64], y: &mut [Complex64]) {
        y.iter_mut().for_each(|v| *v = ZERO);
        let mut scratch = self.scratch.borrow_mut();
        for &(c, op) in &self.terms {
            if c == 0.0 {
                continue;
            }
            op.apply_into(x, &mut scratch);
            for (out, s) in y.iter_mut().zip(scratch.iter()) {
                *out += s * c;
            }
        }
    }
}

/// Eigenvalues in ascending order with matching unit eigenvectors.
#[derive(Clone, Debug)]
pub struct Eigenpairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<Complex64>>,
}

/// Full eigendecomposition of a hermitian matrix, ascending.
pub fn dense_hermitian_eigen(matrix: DMatrix<Complex64>) -> Eigenpairs {
    let eig = SymmetricEigen::new(matrix);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    Eigenpairs {
        values: order.iter().map(|&i| eig.eigenvalues[i]).collect(),
        vectors: order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
            .collect(),
    }
}

/// Ascending eigenvalues and eigenvectors (as columns) of a real symmetric matrix.
pub fn real_symmetric_eigen(matrix: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(matrix);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(eig.eigenvectors.nrows(), order.len());
    for (new, &old) in order.iter().enumerate() {
        vectors.set_column(new, &eig.eigenvectors.column(old));
    }
    (values, vectors)
}

fn tridiagonal(alpha: &[f64], beta: &[f64]) -> DMatrix<f64> {
    let m = alpha.len();
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    t
}

/// Deterministic pseudo-random start vector (splitmix64).
fn start_vector(dim: usize, seed: u64) -> Vec<Complex64> {
    let mut state = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut next = move || {
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        (z >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    (0..dim).map(|_| Complex64::new(next(), next())).collect()
}

fn orthogonalize(v: &mut [Complex64], against: &[Vec<Complex64>]) {
    // two passes of classical Gram-Schmidt
    for _ in 0..2 {
        for q in against {
            let c = inner(q, v);
            for (x, y) in v.iter_mut().zip(q) {
                *x -= c * y;
            }
        }
    }
}

fn scale_in_place(v: &mut [Complex64], s: f64) {
    v.iter_mut().for_each(|x| *x *= s);
}

/// Settings for [`lowest_eigenpairs`].
#[derive(Clone, Copy, Debug)]
pub struct LanczosOptions {
    /// Relative residual `‖Ax − λx‖ / max(1, |λ|)` accepted as converged.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Dimensions at or below this are diagonalized densely.
    pub dense_threshold: usize,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self { tolerance: 1e-10, max_iterations: 600, dense_threshold: 400 }
    }
}

/// Lowest `k` eigenpairs of a hermitian operator.
///
/// Small problems go to a dense solver. Larger ones use Lanczos with full
/// reorthogonalization, locking one converged pair at a time and restarting in
/// the orthogonal complement, so exactly degenerate levels are all found.
pub fn lowest_eigenpairs<A: LinearOperator + ?Sized>(
    op: &A,
    k: usize,
    options: &LanczosOptions,
) -> Result<Eigenpairs> {
    let dim = op.dim();
    let k = k.min(dim);
    if dim <= options.dense_threshold {
        let mut m = DMatrix::zeros(dim, dim);
        let mut e = vec![ZERO; dim];
        for j in 0..dim {
            e.iter_mut().for_each(|x| *x = ZERO);
            e[j] = Complex64::new(1.0, 0.0);
            let col = op.apply(&e);
            for i in 0..dim {
                m[(i, j)] = col[i];
            }
        }
        let m = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
        let mut pairs = dense_hermitian_eigen(m);
        pairs.values.truncate(k);
        pairs.vectors.truncate(k);
        return Ok(pairs);
    }
    let mut locked: Vec<Vec<Complex64>> = Vec::with_capacity(k);
    let mut values = Vec::with_capacity(k);
    for round in 0..k {
        let (value, vector) = lowest_in_complement(op, &locked, options, round as u64 + 1)?;
        values.push(value);
        locked.push(vector);
    }
    // locking can deliver nearly equal values out of order
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    Ok(Eigenpairs {
        values: order.iter().map(|&i| values[i]).collect(),
        vectors: order.iter().map(|&i| locked[i].clone()).collect(),
    })
}

fn lowest_in_complement<A: LinearOperator + ?Sized>(
    op: &A,
    locked: &[Vec<Complex64>],
    options: &LanczosOptions,
    seed: u64,
) -> Result<(f64, Vec<Complex64>)> {
    let dim = op.dim();
    let available = dim - locked.len();
    let max_iter = options.max_iterations.min(available).max(1);
    let mut v = start_vector(dim, seed);
    orthogonalize(&mut v, locked);
    let n0 = norm(&v);
    scale_in_place(&mut v, 1.0 / n0);

    let mut basis: Vec<Vec<Complex64>> = vec![v];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![ZERO; dim];
    let mut best_residual = f64::INFINITY;
    for j in 0..max_iter {
        op.apply_into(&basis[j], &mut w);
        let a = inner(&basis[j], &w).re;
        alpha.push(a);
        orthogonalize(&mut w, locked);
        orthogonalize(&mut w, &basis);
        // the basis pass reintroduces locked components, which otherwise compound
        orthogonalize(&mut w, locked);
        let b = norm(&w);
        let exhausted = j + 1 == max_iter;
        let check = j % 4 == 3 || exhausted || b < 1e-12;
        if check {
            let (theta, s) = real_symmetric_eigen(tridiagonal(&alpha, &beta));
            let residual = b * s[(j, 0)].abs();
            best_residual = residual;
            let scale = theta[0].abs().max(1.0);
            let invariant = b < 1e-12 * scale && basis.len() == available;
            if residual <= options.tolerance * scale || invariant || (exhausted && max_iter == available)
            {
                let mut x = vec![ZERO; dim];
                for (i, q) in basis.iter().enumerate() {
                    let c = s[(i, 0)];
                    for (xi, qi) in x.iter_mut().zip(q) {
                        *xi += qi * c;
                    }
                }
                orthogonalize(&mut x, locked);
                let nx = norm(&x);
                scale_in_place(&mut x, 1.0 / nx);
                let value = {
                    let ax = op.apply(&x);
                    inner(&x, &ax).re
                };
                log::debug!("lanczos converged after {} steps: {value}", j + 1);
                return Ok((value, x));
            }
        }
        if b < 1e-12 {
            // invariant subspace found: continue from a fresh orthogonal direction
            let mut fresh = start_vector(dim, seed.wrapping_mul(31).wrapping_add(j as u64));
            orthogonalize(&mut fresh, locked);
            orthogonalize(&mut fresh, &basis);
            let nf = norm(&fresh);
            if nf < 1e-12 {
                break;
            }
            scale_in_place(&mut fresh, 1.0 / nf);
            beta.push(0.0);
            basis.push(fresh);
        } else {
            beta.push(b);
            scale_in_place(&mut w, 1.0 / b);
            basis.push(w.clone());
        }
    }
    Err(Error::NoConvergence { iterations: alpha.len(), residual: best_residual })
}

/// Settings for [`expm_krylov`].
#[derive(Clone, Copy, Debug)]
pub struct KrylovOptions {
    /// Accepted a-posteriori error of one exponential action.
    pub tolerance: f64,
    pub max_dimension: usize,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        Self { tolerance: 1e-13, max_dimension: 40 }
    }
}

/// `exp(-i t A) v` for hermitian `A` via a Lanczos basis of at most
/// `max_dimension` vectors; returns `None` when the error estimate is not met.
pub fn expm_krylov_once<A: LinearOperator + ?Sized>(
    op: &A,
    v: &[Complex64],
    t: f64,
    options: &KrylovOptions,
) -> Option<Vec<Complex64>> {
    let dim = op.dim();
    let beta0 = norm(v);
    if beta0 == 0.0 || t == 0.0 {
        return Some(v.to_vec());
    }
    let mut basis: Vec<Vec<Complex64>> = vec![v.iter().map(|x| x / beta0).collect()];
    let mut alpha = Vec::new();
    let mut beta = Vec::new();
    let mut w = vec![ZERO; dim];
    let max_m = options.max_dimension.min(dim);
    for j in 0..max_m {
        op.apply_into(&basis[j], &mut w);
        let a = inner(&basis[j], &w).re;
        alpha.push(a);
        orthogonalize(&mut w, &basis);
        let b = norm(&w);
        let breakdown = b <= 1e-14 * (a.abs().max(1.0));
        let m = j + 1;
        if m >= 2 || breakdown || m == max_m {
            let (theta, s) = real_symmetric_eigen(tridiagonal(&alpha, &beta));
            // y = S exp(-i t Θ) Sᵀ e1
            let mut y = DVector::<Complex64>::zeros(m);
            for (l, &th) in theta.iter().enumerate() {
                let coef = Complex64::from_polar(1.0, -t * th) * s[(0, l)];
                for r in 0..m {
                    y[r] += coef * s[(r, l)];
                }
            }
            let error = if breakdown || m == dim { 0.0 } else { b * y[m - 1].norm() };
            if error <= options.tolerance {
                let mut out = vec![ZERO; dim];
                for (r, q) in basis.iter().enumerate() {
                    let c = y[r] * beta0;
                    for (o, qi) in out.iter_mut().zip(q) {
                        *o += qi * c;
                    }
                }
                return Some(out);
            }
        }
        if breakdown {
            break;
        }
        beta.push(b);
        basis.push(w.iter().map(|x| x / b).collect());
    }
    None
}

/// `exp(-i t A) v`, splitting `t` into substeps until each Krylov action converges.
pub fn expm_krylov<A: LinearOperator + ?Sized>(
    op: &A,
    v: &[Complex64],
    t: f64,
    options: &KrylovOptions,
) -> Result<Vec<Complex64>> {
    let mut pieces = 1usize;
    loop {
        let h = t / pieces as f64;
        let mut current = v.to_vec();
        let mut ok = true;
        for _ in 0..pieces {
            match expm_krylov_once(op, &current, h, options) {
                Some(next) => current = next,
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return Ok(current);
        }
        pieces *= 2;
        if pieces > 1 << 16 {
            return Err(Error::NoConvergence { iterations: options.max_dimension, residual: f64::NAN });
        }
    }
}
