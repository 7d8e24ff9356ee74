//! Symmetric matrices, their isometric vectorization, and the spectral
//! projections used by the solver.
//!
//! `svec` maps an `n x n` symmetric matrix to `R^d`, `d = n(n+1)/2`, by
//! walking the upper triangle row by row and scaling off-diagonal entries by
//! `sqrt(2)`. With that scaling the Euclidean inner product of two vectors
//! equals `trace(M N)`, so projections in `R^d` are Frobenius projections.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of free entries of an `n x n` symmetric matrix.
pub fn tri_dim(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Inverse of [`tri_dim`]; `None` when `d` is not a triangular number.
pub fn tri_side(d: usize) -> Option<usize> {
    let n = (((8 * d + 1) as f64).sqrt() as usize).saturating_sub(1) / 2;
    (n..=n + 1).find(|&k| tri_dim(k) == d)
}

#[inline]
fn packed_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * n - i * (i + 1) / 2 + j
}

/// Symmetric matrix stored as its packed upper triangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    n: usize,
    upper: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1, "symmetric matrix needs n >= 1");
        Self { n, upper: vec![0.0; tri_dim(n)] }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    /// Builds from a dense row-major array, which must be exactly symmetric.
    pub fn from_row_major(n: usize, entries: &[f64]) -> Result<Self> {
        if n == 0 || entries.len() != n * n {
            return Err(Error::Dimension(format!(
                "expected {} entries for a {n}x{n} matrix, got {}",
                n * n,
                entries.len()
            )));
        }
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                let (a, b) = (entries[i * n + j], entries[j * n + i]);
                if a != b {
                    return Err(Error::Parameter(format!("entry ({i},{j}) is not symmetric: {a} vs {b}")));
                }
                m.set(i, j, a);
            }
        }
        Ok(m)
    }

    /// Symmetric part `(M + M^T)/2` of a dense square matrix.
    pub fn symmetrize(dense: &DMatrix<f64>) -> Self {
        let n = dense.nrows();
        assert_eq!(n, dense.ncols(), "matrix must be square");
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                m.set(i, j, 0.5 * (dense[(i, j)] + dense[(j, i)]));
            }
        }
        m
    }

    /// Rank-one matrix `v v^T`.
    pub fn outer(v: &[f64]) -> Self {
        let n = v.len();
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                m.set(i, j, v[i] * v[j]);
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.upper[packed_index(self.n, i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = packed_index(self.n, i, j);
        self.upper[k] = v;
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn is_finite(&self) -> bool {
        self.upper.iter().all(|v| v.is_finite())
    }

    pub fn frobenius_norm(&self) -> f64 {
        svec(self).norm()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { n: self.n, upper: self.upper.iter().map(|v| v * c).collect() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        Self {
            n: self.n,
            upper: self.upper.iter().zip(&other.upper).map(|(a, b)| a - b).collect(),
        }
    }

    /// `trace(self * other)`.
    pub fn trace_product(&self, other: &Self) -> f64 {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += self.get(i, j) * other.get(j, i);
            }
        }
        s
    }

    /// Quadratic form `v^T M v`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        assert_eq!(v.len(), self.n);
        let mut s = 0.0;
        for i in 0..self.n {
            s += self.get(i, i) * v[i] * v[i];
            for j in i + 1..self.n {
                s += 2.0 * self.get(i, j) * v[i] * v[j];
            }
        }
        s
    }
}

/// Vectorized symmetric matrix (see module docs for the scaling).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SymMatrixVec(pub Vec<f64>);

impl SymMatrixVec {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, other: &Self) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn svec(m: &SymMatrix) -> SymMatrixVec {
    let n = m.n;
    let mut out = Vec::with_capacity(tri_dim(n));
    for i in 0..n {
        out.push(m.get(i, i));
        for j in i + 1..n {
            out.push(std::f64::consts::SQRT_2 * m.get(i, j));
        }
    }
    SymMatrixVec(out)
}

/// `svec(v v^T)` without forming the matrix.
pub fn svec_outer(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut out = Vec::with_capacity(tri_dim(n));
    for i in 0..n {
        out.push(v[i] * v[i]);
        for j in i + 1..n {
            out.push(std::f64::consts::SQRT_2 * v[i] * v[j]);
        }
    }
    out
}

pub fn smat(v: &SymMatrixVec) -> Result<SymMatrix> {
    smat_slice(&v.0)
}

pub(crate) fn smat_slice(v: &[f64]) -> Result<SymMatrix> {
    let n = tri_side(v.len())
        .filter(|&n| n >= 1)
        .ok_or_else(|| Error::Dimension(format!("length {} is not a triangular number", v.len())))?;
    let mut m = SymMatrix::zeros(n);
    let mut k = 0;
    for i in 0..n {
        m.set(i, i, v[k]);
        k += 1;
        for j in i + 1..n {
            m.set(i, j, v[k] / std::f64::consts::SQRT_2);
            k += 1;
        }
    }
    Ok(m)
}

/// Eigenvalues in ascending order with matching orthonormal eigenvectors
/// stored as columns.
#[derive(Debug, Clone)]
pub struct EigDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl EigDecomposition {
    /// `Q diag(f(lambda)) Q^T`, symmetrized.
    pub fn reassemble(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let n = self.eigenvalues.len();
        let q = &self.eigenvectors;
        let mut m = SymMatrix::zeros(n);
        let mapped: Vec<f64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for (k, &l) in mapped.iter().enumerate() {
                    s += q[(i, k)] * l * q[(j, k)];
                }
                m.set(i, j, s);
            }
        }
        m
    }
}

pub fn sym_eig(m: &SymMatrix) -> Result<EigDecomposition> {
    if !m.is_finite() {
        return Err(Error::Numeric("matrix has non-finite entries".into()));
    }
    let n = m.n;
    let max_iter = 100 * n * n;
    let eig = SymmetricEigen::try_new(m.to_dense(), f64::EPSILON, max_iter)
        .ok_or_else(|| Error::Numeric(format!("symmetric eigensolver did not converge in {max_iter} iterations")))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let eigenvectors = DMatrix::from_fn(n, n, |i, c| eig.eigenvectors[(i, order[c])]);
    Ok(EigDecomposition { eigenvalues, eigenvectors })
}

/// Frobenius-nearest matrix with every eigenvalue at least 1.
pub fn proj_psd_shifted(q: &SymMatrix) -> Result<SymMatrix> {
    let eig = sym_eig(q)?;
    if eig.eigenvalues[0] >= 1.0 {
        return Ok(q.clone());
    }
    Ok(eig.reassemble(|l| l.max(1.0)))
}

/// Radial projection onto the Frobenius ball of radius `radius`.
pub fn proj_fro_ball(q: &SymMatrix, radius: f64) -> Result<SymMatrix> {
    if !(radius > 0.0) {
        return Err(Error::Parameter(format!("ball radius must be positive, got {radius}")));
    }
    let norm = q.frobenius_norm();
    Ok(if norm <= radius { q.clone() } else { q.scaled(radius / norm) })
}

/// Projection onto `{P >= I} ∩ {||P||_F <= radius}`.
///
/// Both sets are spectral, so the projection keeps the eigenvectors and maps
/// each eigenvalue to `max(1, t lambda)` with the largest `t <= 1` that meets
/// the norm cap.
pub fn proj_psd_shifted_ball(q: &SymMatrix, radius: f64) -> Result<SymMatrix> {
    let n = q.n as f64;
    if !(radius >= n.sqrt()) {
        return Err(Error::Parameter(format!("radius {radius} is below ||I||_F = {}", n.sqrt())));
    }
    let eig = sym_eig(q)?;
    let norm_at = |t: f64| eig.eigenvalues.iter().map(|&l| (t * l).max(1.0).powi(2)).sum::<f64>().sqrt();
    if eig.eigenvalues[0] >= 1.0 && norm_at(1.0) <= radius {
        return Ok(q.clone());
    }
    let t = if norm_at(1.0) <= radius {
        1.0
    } else {
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if norm_at(mid) <= radius {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    Ok(eig.reassemble(|l| (t * l).max(1.0)))
}

pub fn min_eig(m: &SymMatrix) -> Result<f64> {
    Ok(sym_eig(m)?.eigenvalues[0])
}

pub fn det(m: &SymMatrix) -> Result<f64> {
    Ok(sym_eig(m)?.eigenvalues.iter().product())
}
