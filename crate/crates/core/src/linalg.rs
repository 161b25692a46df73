//! Dense and sparse complex linear algebra used by the solvers.

use matrixmultiply::CGemmOption;
use nalgebra::linalg::Schur;
use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// How an operand enters a product.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    None,
    Adjoint,
}

/// `c ← alpha·op(a)·op(b) + beta·c` on column-major matrices.
pub fn gemm(alpha: Complex64, a: &CMatrix, op_a: Op, b: &CMatrix, op_b: Op, beta: Complex64, c: &mut CMatrix) {
    // the kernel has no conjugating variant, so adjoints read a conjugated copy
    // through transposed strides
    let a_conj;
    let (m, k, rsa, csa, pa) = match op_a {
        Op::None => (a.nrows(), a.ncols(), 1, a.nrows() as isize, a.as_ptr()),
        Op::Adjoint => {
            a_conj = a.map(|z| z.conj());
            (a.ncols(), a.nrows(), a.nrows() as isize, 1, a_conj.as_ptr())
        }
    };
    let b_conj;
    let (kb, n, rsb, csb, pb) = match op_b {
        Op::None => (b.nrows(), b.ncols(), 1, b.nrows() as isize, b.as_ptr()),
        Op::Adjoint => {
            b_conj = b.map(|z| z.conj());
            (b.ncols(), b.nrows(), b.nrows() as isize, 1, b_conj.as_ptr())
        }
    };
    assert_eq!(k, kb, "gemm inner dimensions");
    assert_eq!((c.nrows(), c.ncols()), (m, n), "gemm output shape");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        *c *= beta;
        return;
    }
    // SAFETY: Complex64 is repr(C) {re, im}, layout-identical to [f64; 2];
    // the strides describe the column-major storage of each operand.
    unsafe {
        matrixmultiply::zgemm(
            CGemmOption::Standard,
            CGemmOption::Standard,
            m,
            k,
            n,
            [alpha.re, alpha.im],
            pa as *const [f64; 2],
            rsa,
            csa,
            pb as *const [f64; 2],
            rsb,
            csb,
            [beta.re, beta.im],
            c.as_mut_ptr() as *mut [f64; 2],
            1,
            m as isize,
        );
    }
}

/// `y ← y + a·x`.
pub fn axpy(y: &mut CMatrix, a: Complex64, x: &CMatrix) {
    assert_eq!(y.shape(), x.shape(), "axpy shapes");
    for (yi, xi) in y.iter_mut().zip(x.iter()) {
        *yi += a * xi;
    }
}

/// `op(a)·op(b)` as a fresh matrix.
pub fn matmul(a: &CMatrix, op_a: Op, b: &CMatrix, op_b: Op) -> CMatrix {
    let m = if op_a == Op::None { a.nrows() } else { a.ncols() };
    let n = if op_b == Op::None { b.ncols() } else { b.nrows() };
    let mut c = CMatrix::zeros(m, n);
    gemm(ONE, a, op_a, b, op_b, ZERO, &mut c);
    c
}

/// Largest deviation from Hermiticity, `max |A − A†|`.
pub fn hermiticity_defect(a: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut worst: f64 = 0.0;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Replaces `a` by `(a + a†)/2`.
pub fn hermitize(a: &mut CMatrix) {
    let n = a.nrows();
    for j in 0..n {
        for i in 0..j {
            let avg = (a[(i, j)] + a[(j, i)].conj()) * 0.5;
            a[(i, j)] = avg;
            a[(j, i)] = avg.conj();
        }
        a[(j, j)] = Complex64::new(a[(j, j)].re, 0.0);
    }
}

pub fn trace(a: &CMatrix) -> Complex64 {
    a.diagonal().iter().sum()
}

/// Compressed-sparse-row complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<Complex64>,
}

impl SparseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds from `(row, col, value)` triplets; duplicates are summed and
    /// exact zeros dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, Complex64)>) -> Self {
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0; nrows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<Complex64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) outside {nrows}x{ncols}");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        let mut out = Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        };
        out.prune();
        out
    }

    fn prune(&mut self) {
        if self.values.iter().all(|v| *v != ZERO) {
            return;
        }
        let mut triplets = Vec::with_capacity(self.values.len());
        for (r, c, v) in self.iter() {
            if v != ZERO {
                triplets.push((r, c, v));
            }
        }
        let mut indptr = vec![0; self.nrows + 1];
        for &(r, _, _) in &triplets {
            indptr[r + 1] += 1;
        }
        for r in 0..self.nrows {
            indptr[r + 1] += indptr[r];
        }
        self.indices = triplets.iter().map(|t| t.1).collect();
        self.values = triplets.iter().map(|t| t.2).collect();
        self.indptr = indptr;
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates over stored `(row, col, value)` entries in row order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            (self.indptr[r]..self.indptr[r + 1]).map(move |p| (r, self.indices[p], self.values[p]))
        })
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        (self.indptr[r]..self.indptr[r + 1]).map(move |p| (self.indices[p], self.values[p]))
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.row(r).find(|&(cc, _)| cc == c).map_or(ZERO, |(_, v)| v)
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.iter() {
            m[(r, c)] += v;
        }
        m
    }

    pub fn adjoint(&self) -> SparseMatrix {
        SparseMatrix::from_triplets(
            self.ncols,
            self.nrows,
            self.iter().map(|(r, c, v)| (c, r, v.conj())).collect(),
        )
    }

    pub fn scale(&self, s: Complex64) -> SparseMatrix {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out.prune();
        out
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: Complex64, other: &SparseMatrix, b: Complex64) -> SparseMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut t: Vec<_> = self.iter().map(|(r, c, v)| (r, c, a * v)).collect();
        t.extend(other.iter().map(|(r, c, v)| (r, c, b * v)));
        SparseMatrix::from_triplets(self.nrows, self.ncols, t)
    }

    /// Sparse product `self·other`.
    pub fn matmul(&self, other: &SparseMatrix) -> SparseMatrix {
        assert_eq!(self.ncols, other.nrows);
        let mut t = Vec::new();
        for (r, k, v) in self.iter() {
            for (c, w) in other.row(k) {
                t.push((r, c, v * w));
            }
        }
        SparseMatrix::from_triplets(self.nrows, other.ncols, t)
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    /// `out ← out + alpha·self·x` for dense `x`.
    pub fn mul_dense_acc(&self, alpha: Complex64, x: &CMatrix, out: &mut CMatrix) {
        assert_eq!(x.nrows(), self.ncols);
        assert_eq!((out.nrows(), out.ncols()), (self.nrows, x.ncols()));
        let nr = self.nrows;
        let xs = x.as_slice();
        let os = out.as_mut_slice();
        for col in 0..x.ncols() {
            let xc = &xs[col * self.ncols..(col + 1) * self.ncols];
            let oc = &mut os[col * nr..(col + 1) * nr];
            for (r, o) in oc.iter_mut().enumerate() {
                let mut acc = ZERO;
                for p in self.indptr[r]..self.indptr[r + 1] {
                    acc += self.values[p] * xc[self.indices[p]];
                }
                *o += alpha * acc;
            }
        }
    }

    /// `self·x`.
    pub fn mul_dense(&self, x: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.nrows, x.ncols());
        self.mul_dense_acc(ONE, x, &mut out);
        out
    }

    /// `x·self†`, computed as `(self·x†)†`.
    pub fn dense_mul_adjoint(&self, x: &CMatrix) -> CMatrix {
        self.mul_dense(&x.adjoint()).adjoint()
    }

    /// `self·x·self†`.
    pub fn sandwich(&self, x: &CMatrix) -> CMatrix {
        let y = self.mul_dense(x);
        self.dense_mul_adjoint(&y)
    }
}

/// Eigen-decomposition of a general complex matrix.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<Complex64>,
    /// Unit-norm right eigenvectors as columns.
    pub vectors: CMatrix,
}

/// Complex Schur form `a = Q T Q†` with `T` upper triangular.
pub fn schur(a: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    assert!(a.is_square());
    if a.nrows() == 0 {
        return Ok((CMatrix::zeros(0, 0), CMatrix::zeros(0, 0)));
    }
    let scale = a.camax().max(f64::MIN_POSITIVE);
    let decomposition = Schur::try_new(a.clone(), f64::EPSILON * scale, 100 * a.nrows().max(10))
        .ok_or_else(|| {
            Error::Numeric(format!(
                "Schur decomposition of a {0}x{0} matrix did not converge (max |a| = {scale:e})",
                a.nrows()
            ))
        })?;
    let (q, mut t) = decomposition.unpack();
    for j in 0..t.ncols() {
        for i in j + 1..t.nrows() {
            t[(i, j)] = ZERO;
        }
    }
    Ok((q, t))
}

/// Eigenvalues and eigenvectors via the complex Schur form and triangular
/// back-substitution. Near-degenerate denominators are clamped to a tiny
/// multiple of the norm, as LAPACK's `trevc` does.
pub fn eig(a: &CMatrix) -> Result<Eigen> {
    let n = a.nrows();
    let (q, t) = schur(a)?;
    let values: Vec<Complex64> = (0..n).map(|i| t[(i, i)]).collect();
    let small = f64::EPSILON * t.camax().max(f64::MIN_POSITIVE);
    let mut y = CMatrix::zeros(n, n);
    for k in 0..n {
        y[(k, k)] = ONE;
        for i in (0..k).rev() {
            let mut s = ZERO;
            for j in i + 1..=k {
                s += t[(i, j)] * y[(j, k)];
            }
            let mut den = values[k] - t[(i, i)];
            if den.norm() < small {
                den = Complex64::new(small, 0.0);
            }
            y[(i, k)] = s / den;
        }
    }
    let mut vectors = matmul(&q, Op::None, &y, Op::None);
    for mut col in vectors.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= Complex64::from(norm);
        }
    }
    Ok(Eigen { values, vectors })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize, m: usize, seed: u64) -> CMatrix {
        let mut s = seed;
        CMatrix::from_fn(n, m, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let a = ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5;
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let b = ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5;
            Complex64::new(a, b)
        })
    }

    #[test]
    fn gemm_matches_nalgebra() {
        let a = sample(7, 5, 1);
        let b = sample(5, 4, 2);
        let c = matmul(&a, Op::None, &b, Op::None);
        assert!((c - &a * &b).norm() < 1e-12);
        let d = matmul(&a, Op::Adjoint, &a, Op::None);
        assert!((d - a.adjoint() * &a).norm() < 1e-12);
        let f = sample(4, 5, 3);
        let e = matmul(&a, Op::None, &f, Op::Adjoint);
        assert!((e - &a * f.adjoint()).norm() < 1e-12);
        let g = matmul(&f, Op::Adjoint, &b, Op::Adjoint);
        assert!((g - f.adjoint() * b.adjoint()).norm() < 1e-12);
    }

    #[test]
    fn sparse_products() {
        let dense = CMatrix::from_fn(5, 5, |i, j| {
            if (i + 2 * j) % 3 == 0 {
                Complex64::new(i as f64, j as f64 - 1.0)
            } else {
                ZERO
            }
        });
        let sp = SparseMatrix::from_triplets(
            5,
            5,
            (0..5)
                .flat_map(|i| (0..5).map(move |j| (i, j)))
                .map(|(i, j)| (i, j, dense[(i, j)]))
                .collect(),
        );
        assert_eq!(sp.to_dense(), dense);
        let x = sample(5, 3, 9);
        assert!((sp.mul_dense(&x) - &dense * &x).norm() < 1e-12);
        let y = sample(4, 5, 3);
        assert!((sp.dense_mul_adjoint(&y) - &y * dense.adjoint()).norm() < 1e-12);
        assert_eq!(sp.adjoint().to_dense(), dense.adjoint());
        assert!((sp.matmul(&sp).to_dense() - &dense * &dense).norm() < 1e-12);
    }

    #[test]
    fn duplicate_triplets_sum() {
        let sp = SparseMatrix::from_triplets(2, 2, vec![(0, 1, ONE), (0, 1, ONE), (1, 0, ONE), (1, 0, -ONE)]);
        assert_eq!(sp.get(0, 1), Complex64::new(2.0, 0.0));
        assert_eq!(sp.nnz(), 1);
    }

    #[test]
    fn eigenpairs_satisfy_definition() {
        let a = sample(12, 12, 5);
        let e = eig(&a).unwrap();
        for k in 0..12 {
            let v = e.vectors.column(k).into_owned();
            let r = &a * &v - v * e.values[k];
            assert!(r.norm() < 1e-10);
        }
    }

    #[test]
    fn eig_handles_exact_degeneracy() {
        let a = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![ONE, ONE, I]));
        let e = eig(&a).unwrap();
        let mut vals: Vec<_> = e.values.iter().map(|v| (v.re, v.im)).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(vals, vec![(0.0, 1.0), (1.0, 0.0), (1.0, 0.0)]);
        assert!(e.vectors.determinant().norm() > 0.5);
    }

    #[test]
    fn hermitize_and_defect() {
        let mut a = sample(4, 4, 11);
        assert!(hermiticity_defect(&a) > 0.0);
        hermitize(&mut a);
        assert_eq!(hermiticity_defect(&a), 0.0);
    }
}
