//! The generalized implicit symplectic Euler scheme
//!
//! ```text
//! z_h = z₀ + h X_H(ρ(z₀, z_h)),    ρ(z, Z) = B z + C Z,
//! ```
//!
//! solved by fixed-point iteration with an automatic Newton fallback, plus the
//! explicit staggered Euler schemes for separable Hamiltonians.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::dynamics::HamiltonianSystem;
use crate::error::{Error, Result};
use crate::induced_map::InducedMap;
use crate::linalg::{norm_inf, SquareMatrix};

pub const DEFAULT_SOLVER_TOL: f64 = 1e-13;
pub const DEFAULT_MAX_ITER: usize = 100;

/// Fixed-point iteration is declared stalled when the residual shrinks by
/// less than this factor over [`STALL_WINDOW`] iterations.
pub const STALL_FACTOR: f64 = 0.9;
pub const STALL_WINDOW: usize = 5;

/// Iterates with norm above `DIVERGENCE_FACTOR · (1 + |z₀|)` abort the solve.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    EulerA,
    EulerB,
    Midpoint,
    ExplicitStaggeredA,
    ExplicitStaggeredB,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::EulerA,
        Preset::EulerB,
        Preset::Midpoint,
        Preset::ExplicitStaggeredA,
        Preset::ExplicitStaggeredB,
    ];

    pub fn map(self, n: usize) -> InducedMap {
        match self {
            Preset::EulerA | Preset::ExplicitStaggeredA => InducedMap::euler_a(n),
            Preset::EulerB | Preset::ExplicitStaggeredB => InducedMap::euler_b(n),
            Preset::Midpoint => InducedMap::midpoint(n),
        }
    }

    pub fn stagger(self) -> Option<Stagger> {
        match self {
            Preset::ExplicitStaggeredA => Some(Stagger::A),
            Preset::ExplicitStaggeredB => Some(Stagger::B),
            _ => None,
        }
    }
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler_a" => Ok(Preset::EulerA),
            "euler_b" => Ok(Preset::EulerB),
            "midpoint" => Ok(Preset::Midpoint),
            "explicit_staggered_a" => Ok(Preset::ExplicitStaggeredA),
            "explicit_staggered_b" => Ok(Preset::ExplicitStaggeredB),
            other => Err(Error::InvalidParameter(format!("unknown preset `{other}`"))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::EulerA => "euler_a",
            Preset::EulerB => "euler_b",
            Preset::Midpoint => "midpoint",
            Preset::ExplicitStaggeredA => "explicit_staggered_a",
            Preset::ExplicitStaggeredB => "explicit_staggered_b",
        })
    }
}

/// Which half of a separable step goes first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stagger {
    /// `Q = q + h T'(p)`, then `P = p - h V'(Q)`.
    A,
    /// `P = p - h V'(q)`, then `Q = q + h T'(P)`.
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverKind {
    /// Fixed-point iteration, switching to Newton when it stalls.
    #[default]
    FixedPoint,
    Newton,
}

impl FromStr for SolverKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed_point" => Ok(SolverKind::FixedPoint),
            "newton" => Ok(SolverKind::Newton),
            other => Err(Error::InvalidParameter(format!("unknown solver `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorSpec {
    pub map: InducedMap,
    /// Explicit evaluation for separable systems; `map` then holds the
    /// matching implicit Euler map.
    pub explicit: Option<Stagger>,
    pub h: f64,
    pub solver: SolverKind,
    pub solver_tol: f64,
    pub max_iter: usize,
}

impl IntegratorSpec {
    pub fn new(map: InducedMap, h: f64) -> Self {
        IntegratorSpec {
            map,
            explicit: None,
            h,
            solver: SolverKind::default(),
            solver_tol: DEFAULT_SOLVER_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }

    pub fn preset(preset: Preset, n: usize, h: f64) -> Self {
        IntegratorSpec {
            explicit: preset.stagger(),
            ..Self::new(preset.map(n), h)
        }
    }

    pub fn with_step(&self, h: f64) -> Self {
        IntegratorSpec { h, ..self.clone() }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.solver_tol = tol;
        self
    }

    pub fn with_solver(mut self, solver: SolverKind) -> Self {
        self.solver = solver;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub z: Vec<f64>,
    /// Implicit-equation residual evaluations, fixed-point and Newton combined.
    pub iterations: usize,
    pub used_newton: bool,
}

fn check_state(sys: &dyn HamiltonianSystem, spec: &IntegratorSpec, z0: &[f64]) -> Result<()> {
    let m = 2 * sys.n();
    if spec.map.n() != sys.n() {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: 2 * spec.map.n(),
        });
    }
    if z0.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: z0.len(),
        });
    }
    if !spec.h.is_finite() {
        return Err(Error::InvalidParameter(format!("step size {} is not finite", spec.h)));
    }
    if z0.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("initial state"));
    }
    Ok(())
}

fn axpy(z0: &[f64], h: f64, f: &[f64]) -> Vec<f64> {
    z0.iter().zip(f).map(|(a, b)| a + h * b).collect()
}

enum FixedPointFailure {
    Stalled(usize),
    Failed(Error),
}

/// One step of the scheme described by `spec`.
pub fn step(spec: &IntegratorSpec, sys: &dyn HamiltonianSystem, z0: &[f64]) -> Result<StepOutcome> {
    check_state(sys, spec, z0)?;
    if spec.h == 0.0 {
        return Ok(StepOutcome {
            z: z0.to_vec(),
            iterations: 0,
            used_newton: false,
        });
    }
    if spec.explicit.is_some() {
        return explicit_staggered(spec, sys, z0).map(|z| StepOutcome {
            z,
            iterations: 0,
            used_newton: false,
        });
    }
    match spec.solver {
        SolverKind::Newton => newton(spec, sys, z0, 0),
        SolverKind::FixedPoint => match fixed_point(spec, sys, z0) {
            Ok(out) => Ok(out),
            Err(FixedPointFailure::Stalled(spent)) => newton(spec, sys, z0, spent),
            Err(FixedPointFailure::Failed(e)) => Err(e),
        },
    }
}

fn fixed_point(
    spec: &IntegratorSpec,
    sys: &dyn HamiltonianSystem,
    z0: &[f64],
) -> std::result::Result<StepOutcome, FixedPointFailure> {
    let guard = DIVERGENCE_FACTOR * (1.0 + norm_inf(z0));
    let mut z = z0.to_vec();
    let mut history = Vec::with_capacity(spec.max_iter);
    for k in 0..spec.max_iter {
        let rho = spec.map.evaluate_unchecked(z0, &z);
        let f = sys.vector_field(&rho).map_err(FixedPointFailure::Failed)?;
        let next = axpy(z0, spec.h, &f);
        let residual = z
            .iter()
            .zip(&next)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if residual <= spec.solver_tol {
            return Ok(StepOutcome {
                z,
                iterations: k + 1,
                used_newton: false,
            });
        }
        if !residual.is_finite() {
            return Err(FixedPointFailure::Stalled(k + 1));
        }
        history.push(residual);
        if k >= STALL_WINDOW && residual > STALL_FACTOR * history[k - STALL_WINDOW] {
            return Err(FixedPointFailure::Stalled(k + 1));
        }
        z = next;
        if norm_inf(&z) > guard {
            return Err(FixedPointFailure::Failed(Error::NoConvergence {
                residual,
                iterations: k + 1,
                iterate: z,
            }));
        }
    }
    let residual = history.last().copied().unwrap_or(f64::INFINITY);
    Err(FixedPointFailure::Failed(Error::NoConvergence {
        residual,
        iterations: spec.max_iter,
        iterate: z,
    }))
}

/// Newton on `G(z) = z - z₀ - h X_H(ρ(z₀, z))` from the explicit Euler
/// predictor, with Jacobian `I - h DX_H(ρ) C`.
fn newton(
    spec: &IntegratorSpec,
    sys: &dyn HamiltonianSystem,
    z0: &[f64],
    spent: usize,
) -> Result<StepOutcome> {
    let m = z0.len();
    let guard = DIVERGENCE_FACTOR * (1.0 + norm_inf(z0));
    let mut z = axpy(z0, spec.h, &sys.vector_field(z0)?);
    let id = SquareMatrix::identity(m);
    let mut residual = f64::INFINITY;
    for k in 0..spec.max_iter {
        let rho = spec.map.evaluate_unchecked(z0, &z);
        let f = sys.vector_field(&rho)?;
        let g: Vec<f64> = (0..m).map(|i| z[i] - z0[i] - spec.h * f[i]).collect();
        residual = norm_inf(&g);
        if residual <= spec.solver_tol {
            return Ok(StepOutcome {
                z,
                iterations: spent + k + 1,
                used_newton: true,
            });
        }
        let dx = sys.vector_field_jacobian(&rho)?;
        let jac = &id - &dx.matmul(spec.map.c()).scale(spec.h);
        let delta = jac.solve(&g).map_err(|_| Error::NoConvergence {
            residual,
            iterations: spent + k + 1,
            iterate: z.clone(),
        })?;
        for (zi, di) in z.iter_mut().zip(&delta) {
            *zi -= di;
        }
        if !(norm_inf(&z) <= guard) {
            return Err(Error::NoConvergence {
                residual,
                iterations: spent + k + 1,
                iterate: z,
            });
        }
    }
    Err(Error::NoConvergence {
        residual,
        iterations: spent + spec.max_iter,
        iterate: z,
    })
}

/// Explicit staggered Euler step for `H = T(p) + V(q)`.
pub fn explicit_staggered(
    spec: &IntegratorSpec,
    sys: &dyn HamiltonianSystem,
    z0: &[f64],
) -> Result<Vec<f64>> {
    let kind = spec.explicit.ok_or_else(|| {
        Error::InvalidParameter("integrator spec is not an explicit staggered preset".into())
    })?;
    check_state(sys, spec, z0)?;
    let split = sys
        .separable()
        .ok_or_else(|| Error::NotSeparable(sys.name().to_string()))?;
    let n = sys.n();
    let h = spec.h;
    let (q, p) = z0.split_at(n);
    let (big_q, big_p) = match kind {
        Stagger::A => {
            let big_q = axpy(q, h, &split.kinetic_gradient(p));
            let big_p = axpy(p, -h, &split.potential_gradient(&big_q)?);
            (big_q, big_p)
        }
        Stagger::B => {
            let big_p = axpy(p, -h, &split.potential_gradient(q)?);
            let big_q = axpy(q, h, &split.kinetic_gradient(&big_p));
            (big_q, big_p)
        }
    };
    Ok([big_q, big_p].concat())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub max_energy_drift: f64,
    pub failures: usize,
    pub newton_fallbacks: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub energies: Vec<f64>,
    pub solver_iters: Vec<usize>,
    pub diagnostics: Diagnostics,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    fn push(&mut self, t: f64, z: Vec<f64>, energy: f64, iters: usize) {
        let drift = (energy - self.energies.first().copied().unwrap_or(energy)).abs();
        self.diagnostics.max_energy_drift = self.diagnostics.max_energy_drift.max(drift);
        self.times.push(t);
        self.states.push(z);
        self.energies.push(energy);
        self.solver_iters.push(iters);
    }

    /// CSV with columns `step, t, q1..qn, p1..pn, H, iters`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let n = self.states.first().map_or(0, |z| z.len() / 2);
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["step".to_string(), "t".to_string()];
        header.extend((1..=n).map(|i| format!("q{i}")));
        header.extend((1..=n).map(|i| format!("p{i}")));
        header.extend(["H".to_string(), "iters".to_string()]);
        w.write_record(&header)?;
        for (k, z) in self.states.iter().enumerate() {
            let mut rec = vec![k.to_string(), format!("{:?}", self.times[k])];
            rec.extend(z.iter().map(|x| format!("{x:?}")));
            rec.push(format!("{:?}", self.energies[k]));
            rec.push(self.solver_iters[k].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// An integration that stopped early; carries everything computed so far.
#[derive(Debug, Error)]
#[error("integration stopped after {} of {requested} steps: {source}", partial.len().saturating_sub(1))]
pub struct Interrupted {
    pub partial: Trajectory,
    pub requested: usize,
    #[source]
    pub source: Error,
}

pub fn integrate(
    spec: &IntegratorSpec,
    sys: &dyn HamiltonianSystem,
    z0: &[f64],
    steps: usize,
) -> std::result::Result<Trajectory, Box<Interrupted>> {
    let mut traj = Trajectory::default();
    let fail = |mut partial: Trajectory, source: Error| {
        partial.diagnostics.failures += 1;
        Box::new(Interrupted {
            partial,
            requested: steps,
            source,
        })
    };
    if steps == 0 {
        return Err(fail(
            traj,
            Error::InvalidParameter("number of steps must be at least 1".into()),
        ));
    }
    if let Err(e) = check_state(sys, spec, z0) {
        return Err(fail(traj, e));
    }
    let e0 = match sys.energy(z0) {
        Ok(e) => e,
        Err(e) => return Err(fail(traj, e)),
    };
    traj.push(0.0, z0.to_vec(), e0, 0);
    let mut z = z0.to_vec();
    for k in 1..=steps {
        let out = match step(spec, sys, &z) {
            Ok(out) => out,
            Err(e) => return Err(fail(traj, e)),
        };
        let energy = match sys.energy(&out.z) {
            Ok(e) => e,
            Err(e) => return Err(fail(traj, e)),
        };
        if out.used_newton {
            traj.diagnostics.newton_fallbacks += 1;
        }
        traj.push(k as f64 * spec.h, out.z.clone(), energy, out.iterations);
        z = out.z;
    }
    Ok(traj)
}
