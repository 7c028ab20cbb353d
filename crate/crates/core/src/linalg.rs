//! Dense symmetric matrices of the sizes that appear in this crate
//! (k x k coefficient matrices with k <= 10, and (k*d) x (k*d) pair-candidate
//! matrices), with a self-contained cyclic Jacobi eigensolver.

use crate::error::{Error, Result};

/// A real symmetric matrix, stored dense row-major. Symmetry is maintained by
/// construction: every mutator writes both (i, j) and (j, i).
#[derive(Debug, Clone, PartialEq)]
pub struct SymMat {
    n: usize,
    data: Vec<f64>,
}

/// Eigendecomposition of a symmetric matrix: `a = v * diag(values) * v^T`.
/// Column `j` of `vectors` is the eigenvector for `values[j]`.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    /// Row-major n x n matrix of eigenvector columns.
    pub vectors: Vec<f64>,
}

const JACOBI_THRESHOLD: f64 = 1e-13;
const JACOBI_MAX_SWEEPS: usize = 100;

impl SymMat {
    pub fn zeros(n: usize) -> Self {
        SymMat {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds the matrix from `f(i, j)`; only `i <= j` is evaluated and the
    /// value is mirrored, so the result is symmetric regardless of `f`.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                m.data[i * n + j] = v;
                m.data[j * n + i] = v;
            }
        }
        m
    }

    /// Validates a row-major nested representation: square, finite, and
    /// symmetric within `tol` (absolute).
    pub fn from_rows(rows: &[Vec<f64>], tol: f64) -> Result<Self> {
        let n = rows.len();
        for row in rows {
            if row.len() != n {
                return Err(Error::InvalidData(format!(
                    "matrix is not square: {} rows but a row of length {}",
                    n,
                    row.len()
                )));
            }
        }
        for i in 0..n {
            for j in 0..n {
                if !rows[i][j].is_finite() {
                    return Err(Error::InvalidData(format!(
                        "matrix entry ({i},{j}) is not finite"
                    )));
                }
                if (rows[i][j] - rows[j][i]).abs() > tol {
                    return Err(Error::InvalidData(format!(
                        "matrix is not symmetric at ({i},{j}): {} vs {}",
                        rows[i][j], rows[j][i]
                    )));
                }
            }
        }
        Ok(Self::from_fn(n, |i, j| 0.5 * (rows[i][j] + rows[j][i])))
    }

    /// Rank-one matrix `v * v^T`.
    pub fn outer(v: &[f64]) -> Self {
        Self::from_fn(v.len(), |i, j| v[i] * v[j])
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set_sym(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| self.data[i * self.n..(i + 1) * self.n].to_vec())
            .collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Frobenius inner product `sum_ij a_ij b_ij`.
    pub fn dot(&self, other: &SymMat) -> f64 {
        debug_assert_eq!(self.n, other.n);
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Quadratic form `x^T A x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.n);
        let mut acc = 0.0;
        for i in 0..self.n {
            let mut row = 0.0;
            for j in 0..self.n {
                row += self.get(i, j) * x[j];
            }
            acc += x[i] * row;
        }
        acc
    }

    /// Bilinear form `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n {
            let mut row = 0.0;
            for j in 0..self.n {
                row += self.get(i, j) * y[j];
            }
            acc += x[i] * row;
        }
        acc
    }

    pub fn scaled(&self, s: f64) -> SymMat {
        SymMat {
            n: self.n,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    pub fn scale_mut(&mut self, s: f64) {
        for x in &mut self.data {
            *x *= s;
        }
    }

    /// `self + s * other`, in place.
    pub fn add_scaled_mut(&mut self, other: &SymMat, s: f64) {
        debug_assert_eq!(self.n, other.n);
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += s * b;
        }
    }

    pub fn add_scaled(&self, other: &SymMat, s: f64) -> SymMat {
        let mut out = self.clone();
        out.add_scaled_mut(other, s);
        out
    }

    /// Adds `s` to every diagonal entry.
    pub fn shift_diag_mut(&mut self, s: f64) {
        for i in 0..self.n {
            self.data[i * self.n + i] += s;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// Cyclic Jacobi eigendecomposition. Rotations are applied in a fixed
    /// row-major order over the strict upper triangle; the sweep stops when
    /// the off-diagonal Frobenius norm falls below `1e-13 * (1 + ||A||_F)`.
    /// Failure to converge within 100 sweeps signals non-finite input.
    pub fn jacobi_eigen(&self) -> Result<Eigen> {
        let n = self.n;
        let mut a = self.data.clone();
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            v[i * n + i] = 1.0;
        }
        if n <= 1 {
            return Ok(Eigen {
                values: (0..n).map(|i| a[i * n + i]).collect(),
                vectors: v,
            });
        }
        let scale = 1.0 + self.frobenius_norm();
        if !scale.is_finite() {
            return Err(Error::JacobiNoConvergence(0));
        }
        for _sweep in 0..JACOBI_MAX_SWEEPS {
            let off: f64 = {
                let mut s = 0.0;
                for p in 0..n {
                    for q in (p + 1)..n {
                        s += 2.0 * a[p * n + q] * a[p * n + q];
                    }
                }
                s.sqrt()
            };
            if off <= JACOBI_THRESHOLD * scale {
                return Ok(Eigen {
                    values: (0..n).map(|i| a[i * n + i]).collect(),
                    vectors: v,
                });
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[p * n + q];
                    if apq.abs() <= f64::MIN_POSITIVE {
                        continue;
                    }
                    let tau = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                    let t = if tau >= 0.0 {
                        1.0 / (tau + (1.0 + tau * tau).sqrt())
                    } else {
                        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                    };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = t * c;
                    // Rotate rows/columns p and q of A.
                    for i in 0..n {
                        let aip = a[i * n + p];
                        let aiq = a[i * n + q];
                        a[i * n + p] = c * aip - s * aiq;
                        a[i * n + q] = s * aip + c * aiq;
                    }
                    for j in 0..n {
                        let apj = a[p * n + j];
                        let aqj = a[q * n + j];
                        a[p * n + j] = c * apj - s * aqj;
                        a[q * n + j] = s * apj + c * aqj;
                    }
                    // Accumulate the rotation into the eigenvector columns.
                    for i in 0..n {
                        let vip = v[i * n + p];
                        let viq = v[i * n + q];
                        v[i * n + p] = c * vip - s * viq;
                        v[i * n + q] = s * vip + c * viq;
                    }
                }
            }
        }
        Err(Error::JacobiNoConvergence(JACOBI_MAX_SWEEPS))
    }

    /// Eigenvalues sorted ascending.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let mut vals = self.jacobi_eigen()?.values;
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(vals)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self
            .jacobi_eigen()?
            .values
            .into_iter()
            .fold(f64::INFINITY, f64::min))
    }

    /// Projection onto the PSD cone: eigendecompose, clip negative
    /// eigenvalues to zero, recompose.
    pub fn psd_clip(&self) -> Result<SymMat> {
        let eig = self.jacobi_eigen()?;
        let n = self.n;
        let mut out = SymMat::zeros(n);
        for (idx, &lam) in eig.values.iter().enumerate() {
            if lam <= 0.0 {
                continue;
            }
            for i in 0..n {
                let vi = eig.vectors[i * n + idx];
                if vi == 0.0 {
                    continue;
                }
                for j in i..n {
                    let add = lam * vi * eig.vectors[j * n + idx];
                    out.data[i * n + j] += add;
                    if j != i {
                        out.data[j * n + i] += add;
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Euclidean norm of a vector.
pub fn vec_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn vec_dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
