//! Constant Liouvillian one-forms as coefficient matrices.
//!
//! A one-form on phase space is stored as the matrix `A` with
//! `θ(z) = Σᵢ (A z)ᵢ dzᵢ`, so the canonical form `p dq` has the single entry
//! `A[q][p] = 1`. Exactness `dθ = ω` reads `Aᵀ - A = Ω` at the matrix level.
//! On the product space `(q, p, Q, P)` the target is the twisted form with
//! matrix `Ω̃ = diag(Ω, -Ω)`.
//!
//! Any valid form splits into a free symmetric part and the fixed
//! antisymmetric part `-½Ω`, which is why the valid forms make an affine space
//! of dimension `n(2n + 1)`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    self, cayley, complex_structure, is_symplectic, jtilde_matrix, omega_matrix, symmetry_residual,
    SquareMatrix, DEFAULT_TOL,
};

/// Tolerance on the exactness residual `Aᵀ - A - Ω`.
pub const EXACTNESS_TOL: f64 = 1e-12;

/// Default tolerance of [`ProductForm::compat_check`].
pub const COMPAT_TOL: f64 = DEFAULT_TOL;

/// Symmetry tolerance on matrices handed to [`LiouvillianForm::add_symmetric`].
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Dimension `n(2n + 1)` of the space of constant Liouvillian forms.
pub fn dim_liouvillian_space(n: usize) -> usize {
    n * (2 * n + 1)
}

fn exactness_residual(coeffs: &SquareMatrix, target: &SquareMatrix) -> SquareMatrix {
    &(&coeffs.transpose() - coeffs) - target
}

/// A constant one-form `θ` on the `2n`-dimensional phase space with `dθ = ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiouvillianForm {
    n: usize,
    coeffs: SquareMatrix,
}

impl LiouvillianForm {
    pub fn new(n: usize, coeffs: SquareMatrix) -> Result<Self> {
        if n == 0 || coeffs.dim() != 2 * n {
            return Err(Error::DimensionMismatch {
                expected: 2 * n,
                found: coeffs.dim(),
            });
        }
        let residual = exactness_residual(&coeffs, &omega_matrix(n));
        let max = residual.max_abs();
        if max > EXACTNESS_TOL {
            return Err(Error::NotExact { residual, max });
        }
        Ok(LiouvillianForm { n, coeffs })
    }

    /// The canonical form `Σ pᵢ dqᵢ`.
    pub fn canonical(n: usize) -> Self {
        let mut a = SquareMatrix::zeros(2 * n);
        for i in 0..n {
            a[(i, n + i)] = 1.0;
        }
        LiouvillianForm { n, coeffs: a }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn coeffs(&self) -> &SquareMatrix {
        &self.coeffs
    }

    /// Splits `A` into its symmetric and antisymmetric parts. The second is
    /// always `-½Ω` up to rounding.
    pub fn decompose(&self) -> (SquareMatrix, SquareMatrix) {
        (self.coeffs.symmetric_part(), self.coeffs.antisymmetric_part())
    }

    /// Adds the differential of a quadratic function, i.e. a symmetric matrix.
    pub fn add_symmetric(&self, sym: &SquareMatrix) -> Result<Self> {
        if sym.dim() != self.coeffs.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.coeffs.dim(),
                found: sym.dim(),
            });
        }
        let max = symmetry_residual(sym);
        if max > SYMMETRY_TOL {
            return Err(Error::NotSymmetric { max });
        }
        LiouvillianForm::new(self.n, &self.coeffs + sym)
    }
}

/// Product-space form kinds named after the generating-function types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FormKind {
    /// `p dq - P dQ`.
    I,
    /// `p dq + Q dP`; induces symplectic Euler A.
    II,
    /// `-q dp - P dQ`; induces symplectic Euler B.
    III,
    /// `-q dp + Q dP`.
    IV,
    /// The twisted canonical form; coincides with [`FormKind::I`].
    Minus,
}

impl std::str::FromStr for FormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "i" | "1" => Ok(FormKind::I),
            "ii" | "2" => Ok(FormKind::II),
            "iii" | "3" => Ok(FormKind::III),
            "iv" | "4" => Ok(FormKind::IV),
            "minus" => Ok(FormKind::Minus),
            other => Err(Error::InvalidParameter(format!("unknown form kind `{other}`"))),
        }
    }
}

impl fmt::Display for FormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FormKind::I => "I",
            FormKind::II => "II",
            FormKind::III => "III",
            FormKind::IV => "IV",
            FormKind::Minus => "minus",
        };
        f.write_str(s)
    }
}

/// Symmetric blocks of `sym(R)` on the product space.
#[derive(Debug, Clone, PartialEq)]
pub struct Blocks {
    pub k1: SquareMatrix,
    pub k2: SquareMatrix,
    pub k3: SquareMatrix,
}

/// A constant one-form on the product space `(q, p, Q, P)` with `dθ = ω₁ - ω₂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProductForm", into = "RawProductForm")]
pub struct ProductForm {
    n: usize,
    coeffs: SquareMatrix,
    label: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct RawProductForm {
    n: usize,
    #[serde(rename = "R")]
    r: SquareMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

impl TryFrom<RawProductForm> for ProductForm {
    type Error = Error;
    fn try_from(raw: RawProductForm) -> Result<Self> {
        ProductForm::new(raw.n, raw.r, raw.label)
    }
}

impl From<ProductForm> for RawProductForm {
    fn from(pf: ProductForm) -> Self {
        RawProductForm {
            n: pf.n,
            r: pf.coeffs,
            label: pf.label,
        }
    }
}

/// Indices of the `i`-th coordinate quadruple `(qᵢ, pᵢ, Qᵢ, Pᵢ)`.
fn quad(n: usize, i: usize) -> (usize, usize, usize, usize) {
    (i, n + i, 2 * n + i, 3 * n + i)
}

fn broadcast<T: Copy>(n: usize, values: &[T], what: &str) -> Result<Vec<T>> {
    match values.len() {
        1 => Ok(vec![values[0]; n]),
        len if len == n => Ok(values.to_vec()),
        len => Err(Error::InvalidParameter(format!(
            "{what}: expected 1 or {n} values, got {len}"
        ))),
    }
}

impl ProductForm {
    pub fn new(n: usize, coeffs: SquareMatrix, label: Option<String>) -> Result<Self> {
        if n == 0 || coeffs.dim() != 4 * n {
            return Err(Error::DimensionMismatch {
                expected: 4 * n,
                found: coeffs.dim(),
            });
        }
        let residual = exactness_residual(&coeffs, &jtilde_matrix(n));
        let max = residual.max_abs();
        if max > EXACTNESS_TOL {
            return Err(Error::NotExact { residual, max });
        }
        Ok(ProductForm { n, coeffs, label })
    }

    /// The form with `sym(R) = diag(S, S)`, whose induced symmetric matrix is `S`.
    pub fn from_symmetric(sym: &SquareMatrix, label: Option<String>) -> Result<Self> {
        if !sym.dim().is_multiple_of(2) {
            return Err(Error::OddDimension(sym.dim()));
        }
        let max = symmetry_residual(sym);
        if max > 1e-10 {
            return Err(Error::NotSymmetric { max });
        }
        let n = sym.dim() / 2;
        let sym = sym.symmetric_part();
        let k = SquareMatrix::block_diag(&sym, &sym);
        let r = &k - &jtilde_matrix(n).scale(0.5);
        ProductForm::new(n, r, label)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn coeffs(&self) -> &SquareMatrix {
        &self.coeffs
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn blocks(&self) -> Blocks {
        let k = self.coeffs.symmetric_part();
        let m = 2 * self.n;
        Blocks {
            k1: k.block(0, 0, m),
            k2: k.block(0, m, m),
            k3: k.block(m, m, m),
        }
    }

    /// `max(|K₁ - K₃|, asym(K₂))`: zero when the form projects onto a
    /// symplectic submanifold consistent with the limit `Z → z`.
    pub fn compat_residual(&self) -> f64 {
        let b = self.blocks();
        b.k1.max_abs_diff(&b.k3).max(symmetry_residual(&b.k2))
    }

    pub fn compat_check(&self, tol: f64) -> bool {
        self.compat_residual() <= tol
    }

    fn require_compat(&self) -> Result<Blocks> {
        let max = self.compat_residual();
        if max > COMPAT_TOL {
            return Err(Error::Incompatible { max });
        }
        Ok(self.blocks())
    }

    /// The symmetric matrix `S = K₁ - K₂` driving the induced map.
    pub fn extract_s(&self) -> Result<SquareMatrix> {
        let b = self.require_compat()?;
        Ok((&b.k1 - &b.k2).symmetric_part())
    }

    /// Moves `τ·K₂` from the off-diagonal blocks onto the diagonal. `τ = 1`
    /// yields a block-diagonal `K`; the induced `S` never changes.
    pub fn tau_reduce(&self, tau: f64) -> Result<ProductForm> {
        let b = self.require_compat()?;
        let diag = &b.k1 - &b.k2.scale(tau);
        let off = b.k2.scale(1.0 - tau);
        let k = SquareMatrix::from_blocks(&diag, &off, &off.transpose(), &diag);
        let r = &k - &jtilde_matrix(self.n).scale(0.5);
        ProductForm::new(self.n, r, self.label.clone())
    }
}

impl fmt::Display for ProductForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.n;
        let name = |k: usize| -> String {
            let (block, i) = (k / n, k % n + 1);
            let sym = ["q", "p", "Q", "P"][block];
            format!("{sym}{i}")
        };
        let mut first = true;
        for row in 0..4 * n {
            for col in 0..4 * n {
                let c = self.coeffs[(row, col)];
                if c == 0.0 {
                    continue;
                }
                let sign = if c < 0.0 { "-" } else { "+" };
                if first {
                    if c < 0.0 {
                        write!(f, "-")?;
                    }
                    first = false;
                } else {
                    write!(f, " {sign} ")?;
                }
                let mag = c.abs();
                if (mag - 1.0).abs() > 1e-15 {
                    write!(f, "{mag:.6} ")?;
                }
                write!(f, "{} d{}", name(col), name(row))?;
            }
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

/// Adds the term `c · x dy` (coefficient of `dy` is `c·x`).
fn term(r: &mut SquareMatrix, c: f64, x: usize, dy: usize) {
    r[(dy, x)] += c;
}

pub fn named_form(kind: FormKind, n: usize) -> ProductForm {
    let mut r = SquareMatrix::zeros(4 * n);
    for i in 0..n {
        let (q, p, bq, bp) = quad(n, i);
        match kind {
            FormKind::I | FormKind::Minus => {
                term(&mut r, 1.0, p, q);
                term(&mut r, -1.0, bp, bq);
            }
            FormKind::II => {
                term(&mut r, 1.0, p, q);
                term(&mut r, 1.0, bq, bp);
            }
            FormKind::III => {
                term(&mut r, -1.0, q, p);
                term(&mut r, -1.0, bp, bq);
            }
            FormKind::IV => {
                term(&mut r, -1.0, q, p);
                term(&mut r, 1.0, bq, bp);
            }
        }
    }
    ProductForm::new(n, r, Some(format!("type {kind}"))).expect("named forms are exact")
}

/// `½(p dq - q dp - P dQ + Q dP)`, the form of the implicit midpoint rule.
pub fn midpoint_form(n: usize) -> ProductForm {
    ProductForm::new(n, jtilde_matrix(n).scale(-0.5), Some("midpoint".into()))
        .expect("midpoint form is exact")
}

/// One-parameter family rotating between the type II (`φ = 0`) and type III
/// (`φ = π/2`) forms. One angle per coordinate pair, or a single angle for all.
pub fn phi_family(n: usize, phis: &[f64]) -> Result<ProductForm> {
    let phis = broadcast(n, phis, "phi family")?;
    let mut r = SquareMatrix::zeros(4 * n);
    for (i, &phi) in phis.iter().enumerate() {
        let (q, p, bq, bp) = quad(n, i);
        let (s, c) = phi.sin_cos();
        let (c2, s2, cs) = (c * c, s * s, c * s);
        term(&mut r, c2, p, q);
        term(&mut r, -s2, bp, bq);
        term(&mut r, -s2, q, p);
        term(&mut r, c2, bq, bp);
        term(&mut r, cs, q, q);
        term(&mut r, -cs, p, p);
        term(&mut r, cs, bq, bq);
        term(&mut r, -cs, bp, bp);
    }
    ProductForm::new(n, r, Some(format!("phi{phis:?}")))
}

/// Three-parameter family `α p dq - (1-α) q dp - (1-α) P dQ + α Q dP
/// + β (q dq + Q dQ) - γ (p dp + P dP)`, broadcast over coordinate pairs.
pub fn abg_family(n: usize, alpha: f64, beta: f64, gamma: f64) -> Result<ProductForm> {
    abg_family_per_pair(n, &[(alpha, beta, gamma)])
}

pub fn abg_family_per_pair(n: usize, params: &[(f64, f64, f64)]) -> Result<ProductForm> {
    let params = broadcast(n, params, "abg family")?;
    let mut r = SquareMatrix::zeros(4 * n);
    for (i, &(a, b, g)) in params.iter().enumerate() {
        let (q, p, bq, bp) = quad(n, i);
        term(&mut r, a, p, q);
        term(&mut r, -(1.0 - a), q, p);
        term(&mut r, -(1.0 - a), bp, bq);
        term(&mut r, a, bq, bp);
        term(&mut r, b, q, q);
        term(&mut r, b, bq, bq);
        term(&mut r, -g, p, p);
        term(&mut r, -g, bp, bp);
    }
    ProductForm::new(n, r, Some(format!("abg{params:?}")))
}

/// Signed permutation `(q, p, Q, P) ↦ (q, -Q, p, P)` onto cotangent
/// coordinates `(x, X, y, Y)` of the doubled configuration space.
pub fn e1_matrix(n: usize) -> SquareMatrix {
    let mut e = SquareMatrix::zeros(4 * n);
    for i in 0..n {
        let (q, p, bq, bp) = quad(n, i);
        let (x, bx, y, by) = (i, n + i, 2 * n + i, 3 * n + i);
        e[(x, q)] = 1.0;
        e[(bx, bq)] = -1.0;
        e[(y, p)] = 1.0;
        e[(by, bp)] = 1.0;
    }
    e
}

/// Matrix of the canonical symplectic form on the cotangent bundle of the
/// doubled configuration space, coordinates `(x, X, y, Y)`.
pub fn cotangent_form_matrix(n: usize) -> SquareMatrix {
    omega_matrix(2 * n)
}

/// For a symplectic `ψ`, returns the Hamiltonian matrix `H = cayley(ψ)` and the
/// symmetric `S` with `2𝒥S = H`, where `𝒥 = -Ω`. The induced map built from
/// `S` has consistency map `ψ`.
pub fn form_for_symplectic(psi: &SquareMatrix, tol: f64) -> Result<(SquareMatrix, SquareMatrix)> {
    let max = linalg::symplectic_residual(psi)?;
    if !is_symplectic(psi, tol)? {
        return Err(Error::NotSymplectic { max });
    }
    let h = cayley(psi, tol)?;
    let n = psi.dim() / 2;
    // 𝒥⁻¹ = -𝒥
    let s = complex_structure(n).matmul(&h).scale(-0.5).symmetric_part();
    Ok((h, s))
}
