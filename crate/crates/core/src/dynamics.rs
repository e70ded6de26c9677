//! Hamiltonian test systems.
//!
//! States are `z = (q_1..q_n, p_1..p_n)` and the vector field is
//! `X_H = (∂H/∂p, -∂H/∂q)`, i.e. `X_H = 𝒥 ∇H` with `𝒥 = [[0, I], [-I, 0]]`.

use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::{complex_structure, symmetry_residual, SquareMatrix};

/// Step of the central differences used when a system has no analytic Hessian.
pub const HESSIAN_FD_STEP: f64 = 1e-6;

/// Kepler states with `|q|` at or below this radius are rejected.
pub const KEPLER_MIN_RADIUS: f64 = 1e-8;

pub trait HamiltonianSystem: Send + Sync + fmt::Debug {
    /// Degrees of freedom; states have length `2n`.
    fn n(&self) -> usize;

    fn name(&self) -> &str;

    fn energy(&self, z: &[f64]) -> Result<f64>;

    /// `∇H = (∂H/∂q, ∂H/∂p)`.
    fn gradient(&self, z: &[f64]) -> Result<Vec<f64>>;

    fn hessian(&self, _z: &[f64]) -> Option<Result<SquareMatrix>> {
        None
    }

    /// Derivatives of `T(p)` and `V(q)` when `H = T(p) + V(q)`.
    fn separable(&self) -> Option<&dyn Separable> {
        None
    }

    fn exact_flow(&self, _z: &[f64], _t: f64) -> Option<Result<Vec<f64>>> {
        None
    }

    fn vector_field(&self, z: &[f64]) -> Result<Vec<f64>> {
        let n = self.n();
        let g = self.gradient(z)?;
        let mut x = Vec::with_capacity(2 * n);
        x.extend_from_slice(&g[n..]);
        x.extend(g[..n].iter().map(|v| -v));
        Ok(x)
    }

    /// Jacobian of `X_H`, from the analytic Hessian when available and
    /// central differences of the gradient otherwise.
    fn vector_field_jacobian(&self, z: &[f64]) -> Result<SquareMatrix> {
        let hess = match self.hessian(z) {
            Some(h) => h?,
            None => fd_hessian(self, z, HESSIAN_FD_STEP)?,
        };
        Ok(complex_structure(self.n()).matmul(&hess))
    }
}

pub trait Separable {
    /// `T'(p)`.
    fn kinetic_gradient(&self, p: &[f64]) -> Vec<f64>;
    /// `V'(q)`.
    fn potential_gradient(&self, q: &[f64]) -> Result<Vec<f64>>;
}

fn fd_hessian<S: HamiltonianSystem + ?Sized>(sys: &S, z: &[f64], step: f64) -> Result<SquareMatrix> {
    let m = z.len();
    let mut hess = SquareMatrix::zeros(m);
    let mut zp = z.to_vec();
    for j in 0..m {
        zp[j] = z[j] + step;
        let gp = sys.gradient(&zp)?;
        zp[j] = z[j] - step;
        let gm = sys.gradient(&zp)?;
        zp[j] = z[j];
        for i in 0..m {
            hess[(i, j)] = (gp[i] - gm[i]) / (2.0 * step);
        }
    }
    Ok(hess.symmetric_part())
}

fn check_len(z: &[f64], n: usize) -> Result<()> {
    if z.len() != 2 * n {
        return Err(Error::DimensionMismatch {
            expected: 2 * n,
            found: z.len(),
        });
    }
    Ok(())
}

/// `H = (p² + q²)/2`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Harmonic;

impl HamiltonianSystem for Harmonic {
    fn n(&self) -> usize {
        1
    }

    fn name(&self) -> &str {
        "harmonic"
    }

    fn energy(&self, z: &[f64]) -> Result<f64> {
        check_len(z, 1)?;
        Ok(0.5 * (z[0] * z[0] + z[1] * z[1]))
    }

    fn gradient(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len(z, 1)?;
        Ok(vec![z[0], z[1]])
    }

    fn hessian(&self, _z: &[f64]) -> Option<Result<SquareMatrix>> {
        Some(Ok(SquareMatrix::identity(2)))
    }

    fn separable(&self) -> Option<&dyn Separable> {
        Some(self)
    }

    fn exact_flow(&self, z: &[f64], t: f64) -> Option<Result<Vec<f64>>> {
        Some(check_len(z, 1).map(|_| {
            let (s, c) = t.sin_cos();
            vec![z[0] * c + z[1] * s, -z[0] * s + z[1] * c]
        }))
    }
}

impl Separable for Harmonic {
    fn kinetic_gradient(&self, p: &[f64]) -> Vec<f64> {
        p.to_vec()
    }

    fn potential_gradient(&self, q: &[f64]) -> Result<Vec<f64>> {
        Ok(q.to_vec())
    }
}

/// `H = p²/2 - cos q`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Pendulum;

impl HamiltonianSystem for Pendulum {
    fn n(&self) -> usize {
        1
    }

    fn name(&self) -> &str {
        "pendulum"
    }

    fn energy(&self, z: &[f64]) -> Result<f64> {
        check_len(z, 1)?;
        Ok(0.5 * z[1] * z[1] - z[0].cos())
    }

    fn gradient(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len(z, 1)?;
        Ok(vec![z[0].sin(), z[1]])
    }

    fn hessian(&self, z: &[f64]) -> Option<Result<SquareMatrix>> {
        Some(check_len(z, 1).map(|_| SquareMatrix::from_diagonal(&[z[0].cos(), 1.0])))
    }

    fn separable(&self) -> Option<&dyn Separable> {
        Some(self)
    }
}

impl Separable for Pendulum {
    fn kinetic_gradient(&self, p: &[f64]) -> Vec<f64> {
        p.to_vec()
    }

    fn potential_gradient(&self, q: &[f64]) -> Result<Vec<f64>> {
        Ok(q.iter().map(|x| x.sin()).collect())
    }
}

/// Planar Kepler problem `H = |p|²/2 - 1/|q|`, `n = 2`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Kepler;

impl Kepler {
    fn radius(q: &[f64]) -> Result<f64> {
        let r = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(r > KEPLER_MIN_RADIUS) {
            return Err(Error::DomainError {
                system: "kepler".into(),
                reason: format!("|q| = {r:.3e} at or below {KEPLER_MIN_RADIUS:e}"),
            });
        }
        Ok(r)
    }
}

impl HamiltonianSystem for Kepler {
    fn n(&self) -> usize {
        2
    }

    fn name(&self) -> &str {
        "kepler"
    }

    fn energy(&self, z: &[f64]) -> Result<f64> {
        check_len(z, 2)?;
        let r = Self::radius(&z[..2])?;
        Ok(0.5 * (z[2] * z[2] + z[3] * z[3]) - 1.0 / r)
    }

    fn gradient(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len(z, 2)?;
        let mut g = self.potential_gradient(&z[..2])?;
        g.extend_from_slice(&z[2..]);
        Ok(g)
    }

    fn hessian(&self, z: &[f64]) -> Option<Result<SquareMatrix>> {
        let build = || -> Result<SquareMatrix> {
            check_len(z, 2)?;
            let r = Self::radius(&z[..2])?;
            let (r3, r5) = (r.powi(3), r.powi(5));
            let mut h = SquareMatrix::zeros(4);
            for i in 0..2 {
                for j in 0..2 {
                    let delta = if i == j { 1.0 } else { 0.0 };
                    h[(i, j)] = delta / r3 - 3.0 * z[i] * z[j] / r5;
                }
                h[(2 + i, 2 + i)] = 1.0;
            }
            Ok(h)
        };
        Some(build())
    }

    fn separable(&self) -> Option<&dyn Separable> {
        Some(self)
    }
}

impl Separable for Kepler {
    fn kinetic_gradient(&self, p: &[f64]) -> Vec<f64> {
        p.to_vec()
    }

    fn potential_gradient(&self, q: &[f64]) -> Result<Vec<f64>> {
        let r3 = Self::radius(q)?.powi(3);
        Ok(q.iter().map(|x| x / r3).collect())
    }
}

/// Quadratic Hamiltonian `H = ½ zᵀ Σ z` with linear field `L z`, `L = 𝒥Σ`.
#[derive(Debug, Clone)]
pub struct Linear {
    n: usize,
    sigma: SquareMatrix,
    generator: SquareMatrix,
}

impl Linear {
    pub fn new(sigma: SquareMatrix) -> Result<Self> {
        if !sigma.dim().is_multiple_of(2) {
            return Err(Error::OddDimension(sigma.dim()));
        }
        let max = symmetry_residual(&sigma);
        if max > 1e-12 {
            return Err(Error::NotSymmetric { max });
        }
        let n = sigma.dim() / 2;
        let sigma = sigma.symmetric_part();
        let generator = complex_structure(n).matmul(&sigma);
        Ok(Linear {
            n,
            sigma,
            generator,
        })
    }

    pub fn sigma(&self) -> &SquareMatrix {
        &self.sigma
    }

    /// The field matrix `L`, Hamiltonian by construction.
    pub fn generator(&self) -> &SquareMatrix {
        &self.generator
    }
}

impl HamiltonianSystem for Linear {
    fn n(&self) -> usize {
        self.n
    }

    fn name(&self) -> &str {
        "linear"
    }

    fn energy(&self, z: &[f64]) -> Result<f64> {
        check_len(z, self.n)?;
        let sz = self.sigma.mul_vec(z);
        Ok(0.5 * z.iter().zip(&sz).map(|(a, b)| a * b).sum::<f64>())
    }

    fn gradient(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len(z, self.n)?;
        Ok(self.sigma.mul_vec(z))
    }

    fn hessian(&self, _z: &[f64]) -> Option<Result<SquareMatrix>> {
        Some(Ok(self.sigma.clone()))
    }

    fn vector_field(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len(z, self.n)?;
        Ok(self.generator.mul_vec(z))
    }

    fn exact_flow(&self, z: &[f64], t: f64) -> Option<Result<Vec<f64>>> {
        Some(check_len(z, self.n).map(|_| self.generator.scale(t).expm().mul_vec(z)))
    }
}

/// Looks up a system that needs no parameters.
pub fn builtin(name: &str) -> Result<Box<dyn HamiltonianSystem>> {
    match name {
        "harmonic" => Ok(Box::new(Harmonic)),
        "pendulum" => Ok(Box::new(Pendulum)),
        "kepler" => Ok(Box::new(Kepler)),
        "linear" => Err(Error::InvalidParameter(
            "the linear system needs a symmetric matrix Σ".into(),
        )),
        other => Err(Error::InvalidParameter(format!("unknown system `{other}`"))),
    }
}
