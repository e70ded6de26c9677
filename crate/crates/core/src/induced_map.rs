//! The intermediate-point map `ρ(z, Z) = B z + C Z` induced by a compatible
//! product form.
//!
//! With `𝒥 = -Ω = [[0, I], [-I, 0]]` and a symmetric `S`,
//!
//! ```text
//! B = ½I - 𝒥S,    C = ½I + 𝒥S.
//! ```
//!
//! The sign of `𝒥` is pinned by requiring the type II form to give
//! `ρ = (Q, p)` and the type III form to give `ρ = (q, P)`.

use std::fmt;

use crate::error::{Error, Result};
use crate::forms::ProductForm;
use crate::linalg::{
    self, complex_structure, hamiltonian_residual, jtilde_matrix, omega_matrix, SquareMatrix,
    DEFAULT_TOL,
};

/// Symmetry tolerance when building a map from `S`.
pub const S_SYMMETRY_TOL: f64 = 1e-10;

/// Rounds `b` to a multiple of the spacing of floats near `max(|b|, |1 - b|, 1)`,
/// so that `1 - b` is exact and `b + (1 - b)` evaluates to exactly 1. Moves
/// `b` by at most one ulp.
fn snap_diagonal(b: f64) -> f64 {
    let mag = b.abs().max((1.0 - b).abs()).max(1.0);
    let quantum = 2f64.powi(mag.log2().floor() as i32 + 1 - f64::MANTISSA_DIGITS as i32);
    (b / quantum).round() * quantum
}

#[derive(Debug, Clone, PartialEq)]
pub struct InducedMap {
    n: usize,
    s: SquareMatrix,
    b: SquareMatrix,
    c: SquareMatrix,
}

impl InducedMap {
    pub fn from_s(s: &SquareMatrix) -> Result<Self> {
        if !s.dim().is_multiple_of(2) {
            return Err(Error::OddDimension(s.dim()));
        }
        let max = linalg::symmetry_residual(s);
        if max > S_SYMMETRY_TOL {
            return Err(Error::NotSymmetric { max });
        }
        let n = s.dim() / 2;
        let s = s.symmetric_part();
        let js = complex_structure(n).matmul(&s);
        let id = SquareMatrix::identity(2 * n);
        let mut b = &id.scale(0.5) - &js;
        for i in 0..2 * n {
            b[(i, i)] = snap_diagonal(b[(i, i)]);
        }
        let c = &id - &b;
        Ok(InducedMap { n, s, b, c })
    }

    pub fn from_form(pf: &ProductForm) -> Result<Self> {
        Self::from_s(&pf.extract_s()?)
    }

    /// Builds the map from a Hamiltonian matrix `H = C - B = 2𝒥S`.
    pub fn from_hamiltonian_matrix(h: &SquareMatrix) -> Result<Self> {
        let max = hamiltonian_residual(h)?;
        if max > DEFAULT_TOL {
            return Err(Error::NotHamiltonian { max });
        }
        let n = h.dim() / 2;
        let s = complex_structure(n).matmul(h).scale(-0.5).symmetric_part();
        Self::from_s(&s)
    }

    /// The implicit midpoint map, `S = 0`.
    pub fn midpoint(n: usize) -> Self {
        Self::from_s(&SquareMatrix::zeros(2 * n)).expect("zero is symmetric")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn s(&self) -> &SquareMatrix {
        &self.s
    }

    /// `∂ρ/∂z`.
    pub fn b(&self) -> &SquareMatrix {
        &self.b
    }

    /// `∂ρ/∂Z`.
    pub fn c(&self) -> &SquareMatrix {
        &self.c
    }

    /// `H = C - B = 2𝒥S`.
    pub fn hamiltonian_matrix(&self) -> SquareMatrix {
        &self.c - &self.b
    }

    pub fn evaluate(&self, z: &[f64], big_z: &[f64]) -> Result<Vec<f64>> {
        let m = 2 * self.n;
        for v in [z, big_z] {
            if v.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    found: v.len(),
                });
            }
        }
        Ok(self.evaluate_unchecked(z, big_z))
    }

    pub(crate) fn evaluate_unchecked(&self, z: &[f64], big_z: &[f64]) -> Vec<f64> {
        let bz = self.b.mul_vec(z);
        let cz = self.c.mul_vec(big_z);
        bz.iter().zip(&cz).map(|(a, b)| a + b).collect()
    }

    /// Explicit map `ψ = (I + H)⁻¹(I - H)` taking `z` to `Z` through the
    /// shared intermediate point.
    pub fn consistency_map(&self, tol: f64) -> Result<SquareMatrix> {
        linalg::cayley(&self.hamiltonian_matrix(), tol)
    }

    pub fn classify(&self, tol: f64) -> Classification {
        classify(&self.b, &self.c, tol)
    }

    /// Whether the map coincides with one of the classical schemes.
    pub fn classical_kind(&self) -> Option<ClassicalMap> {
        let n = self.n;
        if self.s.max_abs() == 0.0 {
            return Some(ClassicalMap::Midpoint);
        }
        let ea = InducedMap::euler_a(n);
        if self.b == ea.b && self.c == ea.c {
            return Some(ClassicalMap::EulerA);
        }
        let eb = InducedMap::euler_b(n);
        if self.b == eb.b && self.c == eb.c {
            return Some(ClassicalMap::EulerB);
        }
        None
    }

    /// `ρ = (Q, p)`, induced by the type II form.
    pub fn euler_a(n: usize) -> Self {
        Self::from_s(&pair_offdiag(n, 0.5)).expect("symmetric")
    }

    /// `ρ = (q, P)`, induced by the type III form.
    pub fn euler_b(n: usize) -> Self {
        Self::from_s(&pair_offdiag(n, -0.5)).expect("symmetric")
    }
}

fn pair_offdiag(n: usize, v: f64) -> SquareMatrix {
    let mut s = SquareMatrix::zeros(2 * n);
    for i in 0..n {
        s[(i, n + i)] = v;
        s[(n + i, i)] = v;
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassicalMap {
    EulerA,
    EulerB,
    Midpoint,
}

impl fmt::Display for InducedMap {
    /// Prints the coordinates of `ρ` as linear combinations of `q, p, Q, P`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.n;
        let names: Vec<String> = (0..4 * n)
            .map(|k| format!("{}{}", ["q", "p", "Q", "P"][k / n], k % n + 1))
            .collect();
        write!(f, "rho = (")?;
        for row in 0..2 * n {
            if row > 0 {
                write!(f, ", ")?;
            }
            let coeffs = (0..2 * n)
                .map(|j| self.b[(row, j)])
                .chain((0..2 * n).map(|j| self.c[(row, j)]));
            let mut first = true;
            for (k, c) in coeffs.enumerate() {
                if c.abs() < 1e-15 {
                    continue;
                }
                let neg = c < 0.0;
                if first {
                    if neg {
                        write!(f, "-")?;
                    }
                } else {
                    write!(f, " {} ", if neg { "-" } else { "+" })?;
                }
                first = false;
                if (c.abs() - 1.0).abs() > 1e-15 {
                    write!(f, "{:.6}*", c.abs())?;
                }
                write!(f, "{}", names[k])?;
            }
            if first {
                write!(f, "0")?;
            }
        }
        write!(f, ")")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapClass {
    /// `b₁ - b₂` Hamiltonian but neither part is.
    NotConsistentSymplectic,
    /// Both parts Hamiltonian and `b₁ ≠ -b₂`.
    TwoDistinctSymplectic,
    /// Both parts Hamiltonian and `b₁ = -b₂`: `z`, `ρ`, `Z` lie on one flow line.
    SingleFlowLine,
    /// `B + C ≠ I` or `B - C` not Hamiltonian.
    NotInterleaving,
}

impl fmt::Display for MapClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MapClass::NotConsistentSymplectic => "not-consistent-symplectic",
            MapClass::TwoDistinctSymplectic => "two-distinct-symplectic",
            MapClass::SingleFlowLine => "single-flow-line",
            MapClass::NotInterleaving => "not-interleaving",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub class: MapClass,
    /// Largest residual that decided a branch lies within a factor 10 of `tol`.
    pub near_tie: bool,
    pub sum_residual: f64,
    pub b1_residual: f64,
    pub b2_residual: f64,
    pub opposite_residual: f64,
}

/// Sorts an implicit linear map by the Hamiltonian structure of
/// `b₁ = B - ½I` and `b₂ = C - ½I`.
pub fn classify(b: &SquareMatrix, c: &SquareMatrix, tol: f64) -> Classification {
    let m = b.dim();
    let id = SquareMatrix::identity(m);
    let sum_residual = (b + c).max_abs_diff(&id);
    let half = id.scale(0.5);
    let b1 = b - &half;
    let b2 = c - &half;
    let res = |x: &SquareMatrix| hamiltonian_residual(x).unwrap_or(f64::INFINITY);
    let diff_residual = res(&(&b1 - &b2));
    let b1_residual = res(&b1);
    let b2_residual = res(&b2);
    let opposite_residual = (&b1 + &b2).max_abs();

    let mut decisive = vec![sum_residual];
    let class = if sum_residual > tol || diff_residual > tol {
        decisive.push(diff_residual);
        MapClass::NotInterleaving
    } else if b1_residual > tol || b2_residual > tol {
        decisive.extend([diff_residual, b1_residual, b2_residual]);
        MapClass::NotConsistentSymplectic
    } else {
        decisive.extend([diff_residual, b1_residual, b2_residual, opposite_residual]);
        if opposite_residual > tol {
            MapClass::TwoDistinctSymplectic
        } else {
            MapClass::SingleFlowLine
        }
    };
    let near_tie = decisive
        .iter()
        .any(|&r| r > tol / 10.0 && r < tol * 10.0);
    Classification {
        class,
        near_tie,
        sum_residual,
        b1_residual,
        b2_residual,
        opposite_residual,
    }
}

/// Both sides of the projection identity `P̂·(J̃ v) = Ω·(P̂₋ v)` with
/// `P̂ = [I I]` and `P̂₋ = [I -I]`.
pub fn projection_commutes(n: usize, v: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if v.len() != 4 * n {
        return Err(Error::DimensionMismatch {
            expected: 4 * n,
            found: v.len(),
        });
    }
    let m = 2 * n;
    let jv = jtilde_matrix(n).mul_vec(v);
    let lhs: Vec<f64> = (0..m).map(|i| jv[i] + jv[m + i]).collect();
    let diff: Vec<f64> = (0..m).map(|i| v[i] - v[m + i]).collect();
    let rhs = omega_matrix(n).mul_vec(&diff);
    Ok((lhs, rhs))
}
