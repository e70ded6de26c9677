//! Small dense real matrices and the symplectic predicates built on them.
//!
//! Everything here works on matrices of side `2n` or `4n` with `n` a handful
//! at most, so storage is a flat row-major `Vec<f64>` with the side carried at
//! runtime. Inverses are always realized through an LU factorization with
//! partial pivoting.
//!
//! Phase-space coordinates are ordered `(q_1..q_n, p_1..p_n)`. The symplectic
//! form matrix is
//!
//! ```text
//! Ω = [ 0  -I ]
//!     [ I   0 ]
//! ```
//!
//! and the product space `(q, p, Q, P)` carries `Ω̃ = diag(Ω, -Ω)`.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Default tolerance for the structural predicates.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Pivots below this magnitude are treated as singular by [`SquareMatrix::solve`].
pub const PIVOT_FLOOR: f64 = 1e-14;

#[derive(Clone, PartialEq)]
pub struct SquareMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(dim: usize) -> Self {
        SquareMatrix {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Builds a matrix from row-major entries, rejecting wrong lengths and
    /// non-finite values.
    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("matrix side must be positive".into()));
        }
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: data.len(),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("matrix entries"));
        }
        Ok(SquareMatrix { dim, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_row_major(dim, data)
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        SquareMatrix { dim, data }
    }

    /// Assembles a `2k x 2k` matrix from four `k x k` blocks.
    pub fn from_blocks(
        top_left: &SquareMatrix,
        top_right: &SquareMatrix,
        bottom_left: &SquareMatrix,
        bottom_right: &SquareMatrix,
    ) -> Self {
        let k = top_left.dim;
        assert!(
            top_right.dim == k && bottom_left.dim == k && bottom_right.dim == k,
            "block sides must agree"
        );
        Self::from_fn(2 * k, |i, j| match (i < k, j < k) {
            (true, true) => top_left[(i, j)],
            (true, false) => top_right[(i, j - k)],
            (false, true) => bottom_left[(i - k, j)],
            (false, false) => bottom_right[(i - k, j - k)],
        })
    }

    /// Block-diagonal matrix `diag(a, b)`.
    pub fn block_diag(a: &SquareMatrix, b: &SquareMatrix) -> Self {
        let (ka, kb) = (a.dim, b.dim);
        Self::from_fn(ka + kb, |i, j| match (i < ka, j < ka) {
            (true, true) => a[(i, j)],
            (false, false) => b[(i - ka, j - ka)],
            _ => 0.0,
        })
    }

    /// The `size x size` sub-block starting at `(row, col)`.
    pub fn block(&self, row: usize, col: usize, size: usize) -> SquareMatrix {
        assert!(row + size <= self.dim && col + size <= self.dim);
        Self::from_fn(size, |i, j| self[(row + i, col + j)])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.dim).map(|r| r.to_vec()).collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.dim).map(|i| self[(i, j)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn transpose(&self) -> SquareMatrix {
        Self::from_fn(self.dim, |i, j| self[(j, i)])
    }

    pub fn scale(&self, s: f64) -> SquareMatrix {
        SquareMatrix {
            dim: self.dim,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    pub fn matmul(&self, rhs: &SquareMatrix) -> SquareMatrix {
        assert_eq!(self.dim, rhs.dim, "matmul side mismatch");
        let n = self.dim;
        let mut out = SquareMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.dim, v.len(), "matrix-vector side mismatch");
        self.data
            .chunks(self.dim)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Largest absolute entrywise difference to `other`.
    pub fn max_abs_diff(&self, other: &SquareMatrix) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Induced 1-norm (max column sum).
    pub fn norm_one(&self) -> f64 {
        (0..self.dim)
            .map(|j| (0..self.dim).map(|i| self[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn symmetric_part(&self) -> SquareMatrix {
        (self + &self.transpose()).scale(0.5)
    }

    pub fn antisymmetric_part(&self) -> SquareMatrix {
        (self - &self.transpose()).scale(0.5)
    }

    pub fn lu(&self) -> Result<Lu> {
        Lu::factor(self)
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: rhs.len(),
            });
        }
        self.lu()?.solve(rhs)
    }

    pub fn inverse(&self) -> Result<SquareMatrix> {
        self.lu()?.inverse()
    }

    /// Determinant from the pivoted elimination. Never fails; a vanishing
    /// pivot yields zero.
    pub fn det(&self) -> f64 {
        let n = self.dim;
        let mut a = self.data.clone();
        let mut det = 1.0;
        for k in 0..n {
            let p = (k..n)
                .max_by(|&x, &y| a[x * n + k].abs().total_cmp(&a[y * n + k].abs()))
                .unwrap_or(k);
            if a[p * n + k] == 0.0 {
                return 0.0;
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                det = -det;
            }
            let pivot = a[k * n + k];
            det *= pivot;
            for i in k + 1..n {
                let f = a[i * n + k] / pivot;
                for j in k..n {
                    a[i * n + j] -= f * a[k * n + j];
                }
            }
        }
        det
    }

    /// Matrix exponential by scaling and squaring of a truncated Taylor series.
    pub fn expm(&self) -> SquareMatrix {
        let norm = self.norm_one();
        let mut squarings = 0u32;
        if norm > 0.5 {
            squarings = (norm / 0.5).log2().ceil() as u32;
        }
        let scaled = self.scale(0.5f64.powi(squarings as i32));
        let mut result = SquareMatrix::identity(self.dim);
        let mut term = SquareMatrix::identity(self.dim);
        for k in 1..=40 {
            term = term.matmul(&scaled).scale(1.0 / k as f64);
            result = &result + &term;
            if term.max_abs() <= 1e-18 {
                break;
            }
        }
        for _ in 0..squarings {
            result = result.matmul(&result);
        }
        result
    }
}

impl Index<(usize, usize)> for SquareMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for SquareMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.dim + j]
    }
}

impl Add for &SquareMatrix {
    type Output = SquareMatrix;
    fn add(self, rhs: &SquareMatrix) -> SquareMatrix {
        assert_eq!(self.dim, rhs.dim, "add side mismatch");
        SquareMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &SquareMatrix {
    type Output = SquareMatrix;
    fn sub(self, rhs: &SquareMatrix) -> SquareMatrix {
        assert_eq!(self.dim, rhs.dim, "sub side mismatch");
        SquareMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &SquareMatrix {
    type Output = SquareMatrix;
    fn mul(self, rhs: &SquareMatrix) -> SquareMatrix {
        self.matmul(rhs)
    }
}

impl Neg for &SquareMatrix {
    type Output = SquareMatrix;
    fn neg(self) -> SquareMatrix {
        self.scale(-1.0)
    }
}

impl fmt::Debug for SquareMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.data.chunks(self.dim)).finish()
    }
}

impl fmt::Display for SquareMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (r, row) in self.data.chunks(self.dim).enumerate() {
            if r > 0 {
                writeln!(f)?;
            }
            write!(f, "[")?;
            for (c, x) in row.iter().enumerate() {
                if c > 0 {
                    write!(f, ", ")?;
                }
                // avoid printing "-0"
                let x = if *x == 0.0 { 0.0 } else { *x };
                write!(f, "{x:>12.6}")?;
            }
            write!(f, "]")?;
        }
        Ok(())
    }
}

impl Serialize for SquareMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SquareMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        SquareMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// LU factorization `PA = LU` with partial pivoting.
#[derive(Debug, Clone)]
pub struct Lu {
    dim: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(m: &SquareMatrix) -> Result<Lu> {
        let n = m.dim;
        let mut lu = m.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&x, &y| lu[x * n + k].abs().total_cmp(&lu[y * n + k].abs()))
                .unwrap_or(k);
            let pivot = lu[p * n + k];
            if !(pivot.abs() > PIVOT_FLOOR) {
                return Err(Error::Singular { pivot: pivot.abs() });
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            for i in k + 1..n {
                let f = lu[i * n + k] / pivot;
                lu[i * n + k] = f;
                for j in k + 1..n {
                    lu[i * n + j] -= f * lu[k * n + j];
                }
            }
        }
        Ok(Lu { dim: n, lu, perm })
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim;
        if rhs.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: rhs.len(),
            });
        }
        let mut x: Vec<f64> = self.perm.iter().map(|&p| rhs[p]).collect();
        for i in 0..n {
            for j in 0..i {
                x[i] -= self.lu[i * n + j] * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                x[i] -= self.lu[i * n + j] * x[j];
            }
            x[i] /= self.lu[i * n + i];
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("linear solve"));
        }
        Ok(x)
    }

    pub fn inverse(&self) -> Result<SquareMatrix> {
        let n = self.dim;
        let mut inv = SquareMatrix::zeros(n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|x| *x = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e)?;
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        Ok(inv)
    }
}

fn half_dim(m: &SquareMatrix) -> Result<usize> {
    if !m.dim.is_multiple_of(2) {
        Err(Error::OddDimension(m.dim))
    } else {
        Ok(m.dim / 2)
    }
}

/// The `2n x 2n` symplectic form matrix with blocks `[[0, -I], [I, 0]]`.
pub fn omega_matrix(n: usize) -> SquareMatrix {
    let mut m = SquareMatrix::zeros(2 * n);
    for i in 0..n {
        m[(i, n + i)] = -1.0;
        m[(n + i, i)] = 1.0;
    }
    m
}

/// `-Ω = [[0, I], [-I, 0]]`: maps the gradient of `H` to the Hamiltonian
/// vector field `(∂H/∂p, -∂H/∂q)`.
pub fn complex_structure(n: usize) -> SquareMatrix {
    -&omega_matrix(n)
}

/// Twisted product structure `diag(Ω, -Ω)` of side `4n`.
pub fn jtilde_matrix(n: usize) -> SquareMatrix {
    let omega = omega_matrix(n);
    SquareMatrix::block_diag(&omega, &-&omega)
}

pub fn is_symmetric(m: &SquareMatrix, tol: f64) -> bool {
    symmetry_residual(m) <= tol
}

pub fn symmetry_residual(m: &SquareMatrix) -> f64 {
    m.max_abs_diff(&m.transpose())
}

/// Max asymmetry of `Ω·M`; zero exactly for Hamiltonian matrices.
pub fn hamiltonian_residual(m: &SquareMatrix) -> Result<f64> {
    let n = half_dim(m)?;
    Ok(symmetry_residual(&omega_matrix(n).matmul(m)))
}

pub fn is_hamiltonian(m: &SquareMatrix, tol: f64) -> Result<bool> {
    Ok(hamiltonian_residual(m)? <= tol)
}

/// `max |MᵀΩM - Ω|`.
pub fn symplectic_residual(m: &SquareMatrix) -> Result<f64> {
    let n = half_dim(m)?;
    let omega = omega_matrix(n);
    Ok(m.transpose().matmul(&omega).matmul(m).max_abs_diff(&omega))
}

pub fn is_symplectic(m: &SquareMatrix, tol: f64) -> Result<bool> {
    Ok(symplectic_residual(m)? <= tol)
}

pub fn is_non_exceptional(m: &SquareMatrix, tol: f64) -> bool {
    (&SquareMatrix::identity(m.dim) + m).det().abs() > tol
}

/// Cayley transform `(I - M)(I + M)⁻¹`.
///
/// The two factors commute, so this equals `(I + M)⁻¹(I - M)`, and the map is
/// an involution on non-exceptional matrices.
pub fn cayley(m: &SquareMatrix, tol: f64) -> Result<SquareMatrix> {
    let id = SquareMatrix::identity(m.dim);
    let plus = &id + m;
    let det = plus.det();
    if !(det.abs() > tol) {
        return Err(Error::Exceptional { det: det.abs() });
    }
    let inv = match plus.inverse() {
        Ok(inv) => inv,
        Err(Error::Singular { .. }) => return Err(Error::Exceptional { det: det.abs() }),
        Err(e) => return Err(e),
    };
    Ok((&id - m).matmul(&inv))
}

/// Numerical rank of the row set by Gaussian elimination with pivot
/// threshold `tol`.
pub fn rank(rows: &[Vec<f64>], tol: f64) -> usize {
    let mut a: Vec<Vec<f64>> = rows.to_vec();
    let cols = a.first().map_or(0, Vec::len);
    let mut rank = 0;
    for c in 0..cols {
        if rank == a.len() {
            break;
        }
        let p = (rank..a.len())
            .max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs()))
            .unwrap();
        if a[p][c].abs() <= tol {
            continue;
        }
        a.swap(rank, p);
        for i in rank + 1..a.len() {
            let f = a[i][c] / a[rank][c];
            for j in c..cols {
                let v = a[rank][j];
                a[i][j] -= f * v;
            }
        }
        rank += 1;
    }
    rank
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
