//! Run configuration: a JSON document merged with command-line overrides,
//! resolved into a system, an integration scheme and an initial state.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use liouform::dynamics::{builtin, HamiltonianSystem, Linear};
use liouform::forms::{abg_family_per_pair, form_for_symplectic, named_form, phi_family, FormKind, ProductForm};
use liouform::integrate::{IntegratorSpec, Preset, SolverKind, DEFAULT_MAX_ITER, DEFAULT_SOLVER_TOL};
use liouform::linalg::{DEFAULT_TOL, SquareMatrix};
use liouform::{Error, InducedMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::Value;

use crate::CommonArgs;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub kind: Option<String>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub kind: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: Option<Value>,
    pub family: Option<String>,
    pub params: Option<Value>,
    pub h: Option<f64>,
    pub steps: Option<usize>,
    pub z0: Option<Vec<f64>>,
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub eps_fd: Option<f64>,
    pub drift_tol: Option<f64>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub outputs: Vec<OutputConfig>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    /// Command-line values win over the document.
    pub fn merge(mut self, args: &CommonArgs) -> Result<Self, Error> {
        if let Some(s) = &args.system {
            self.system = Some(Value::String(s.clone()));
        }
        if let Some(f) = &args.family {
            self.family = Some(f.clone());
        }
        if let Some(p) = &args.param {
            self.params = Some(params_from_cli(p));
        }
        if let Some(h) = args.h {
            self.h = Some(h);
        }
        if let Some(k) = args.steps {
            self.steps = Some(k);
        }
        if let Some(z) = &args.z0 {
            self.z0 = Some(parse_numbers(z)?);
        }
        if let Some(n) = args.n {
            self.n = Some(n);
        }
        if let Some(s) = args.seed {
            self.seed = Some(s);
        }
        if let Some(k) = &args.solver {
            self.solver.kind = Some(k.clone());
        }
        if let Some(t) = args.solver_tol {
            self.solver.tol = Some(t);
        }
        Ok(self)
    }

    pub fn output_for(&self, kind: &str) -> Option<PathBuf> {
        self.outputs.iter().find(|o| o.kind == kind).map(|o| o.path.clone())
    }
}

pub fn parse_numbers(text: &str) -> Result<Vec<f64>, Error> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidParameter(format!("`{t}` is not a number")))
        })
        .collect()
}

fn params_from_cli(text: &str) -> Value {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    match parts.iter().map(|p| p.parse::<f64>()).collect::<Result<Vec<_>, _>>() {
        Ok(nums) => Value::from(nums),
        Err(_) => Value::from(parts.iter().map(|s| s.to_string()).collect::<Vec<_>>()),
    }
}

/// Family parameters in a normalized shape.
#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    None,
    Numbers(Vec<f64>),
    Words(Vec<String>),
    Matrix(Vec<Vec<f64>>),
}

impl Params {
    pub fn from_value(v: Option<&Value>) -> Result<Self, Error> {
        let bad = || Error::InvalidParameter("params must be numbers, words or a matrix".into());
        match v {
            None | Some(Value::Null) => Ok(Params::None),
            Some(Value::Number(x)) => Ok(Params::Numbers(vec![x.as_f64().ok_or_else(bad)?])),
            Some(Value::String(s)) => Ok(Params::Words(vec![s.clone()])),
            Some(Value::Array(items)) if items.is_empty() => Ok(Params::None),
            Some(Value::Array(items)) => match &items[0] {
                Value::Number(_) => items
                    .iter()
                    .map(|x| x.as_f64().ok_or_else(bad))
                    .collect::<Result<_, _>>()
                    .map(Params::Numbers),
                Value::String(_) => items
                    .iter()
                    .map(|x| x.as_str().map(str::to_string).ok_or_else(bad))
                    .collect::<Result<_, _>>()
                    .map(Params::Words),
                Value::Array(_) => serde_json::from_value(Value::Array(items.clone()))
                    .map(Params::Matrix)
                    .map_err(|_| bad()),
                _ => Err(bad()),
            },
            Some(_) => Err(bad()),
        }
    }

    /// Square matrix from nested rows or a row-major list.
    fn matrix(&self) -> Result<SquareMatrix, Error> {
        match self {
            Params::Matrix(rows) => SquareMatrix::from_rows(rows),
            Params::Numbers(v) => {
                let d = (v.len() as f64).sqrt().round() as usize;
                SquareMatrix::from_row_major(d, v.clone())
            }
            _ => Err(Error::InvalidParameter("expected a square matrix".into())),
        }
    }
}

pub enum Scheme {
    Form(ProductForm),
    Preset(Preset),
}

impl Scheme {
    pub fn integrator(&self, n: usize, h: f64) -> Result<IntegratorSpec, Error> {
        match self {
            Scheme::Form(f) => Ok(IntegratorSpec::new(InducedMap::from_form(f)?, h)),
            Scheme::Preset(p) => Ok(IntegratorSpec::preset(*p, n, h)),
        }
    }

    pub fn map(&self, n: usize) -> Result<InducedMap, Error> {
        match self {
            Scheme::Form(f) => InducedMap::from_form(f),
            Scheme::Preset(p) => Ok(p.map(n)),
        }
    }
}

fn arity(family: &str, expected: &str, found: usize) -> Error {
    Error::InvalidParameter(format!("family {family} takes {expected}, got {found} values"))
}

/// Builds the scheme of a single (non-grid) family member.
pub fn scheme(family: &str, params: &Params, n: usize) -> Result<Scheme, Error> {
    match family {
        "phi" => match params {
            Params::Numbers(v) if v.len() == 1 || v.len() == n => Ok(Scheme::Form(phi_family(n, v)?)),
            Params::Numbers(v) => Err(arity(family, "1 or n angles", v.len())),
            _ => Err(arity(family, "1 or n angles", 0)),
        },
        "abg" => match params {
            Params::Numbers(v) if v.len() == 3 || v.len() == 3 * n => {
                let triples: Vec<(f64, f64, f64)> = v.chunks(3).map(|c| (c[0], c[1], c[2])).collect();
                Ok(Scheme::Form(abg_family_per_pair(n, &triples)?))
            }
            Params::Numbers(v) => Err(arity(family, "3 or 3n reals", v.len())),
            _ => Err(arity(family, "3 or 3n reals", 0)),
        },
        "named" => match params {
            Params::Words(w) if w.len() == 1 => Ok(Scheme::Form(named_form(w[0].parse::<FormKind>()?, n))),
            _ => Err(Error::InvalidParameter("family named takes one kind: I, II, III, IV or minus".into())),
        },
        "matrix-S" => {
            let s = params.matrix()?;
            if s.dim() != 2 * n {
                return Err(Error::InvalidParameter(format!(
                    "S must be {0}x{0}, got {1}x{1}",
                    2 * n,
                    s.dim()
                )));
            }
            Ok(Scheme::Form(ProductForm::from_symmetric(&s, Some("matrix S".into()))?))
        }
        "from-symplectic" => {
            let psi = params.matrix()?;
            if psi.dim() != 2 * n {
                return Err(Error::InvalidParameter(format!(
                    "symplectic matrix must be {0}x{0}, got {1}x{1}",
                    2 * n,
                    psi.dim()
                )));
            }
            let (_, s) = form_for_symplectic(&psi, DEFAULT_TOL)?;
            Ok(Scheme::Form(ProductForm::from_symmetric(&s, Some("from symplectic".into()))?))
        }
        "preset" => match params {
            Params::Words(w) if w.len() == 1 => Ok(Scheme::Preset(w[0].parse()?)),
            _ => Err(Error::InvalidParameter("family preset takes one preset name".into())),
        },
        other => Err(Error::InvalidParameter(format!("unknown family `{other}`"))),
    }
}

/// Default one-parameter and three-parameter grids for sweeps.
pub fn default_phi_grid() -> Vec<f64> {
    (0..5).map(|k| k as f64 * PI / 8.0).collect()
}

pub fn default_abg_grid() -> Vec<f64> {
    let mut v = Vec::new();
    for a in [0.0, 0.25, 0.5, 0.75, 1.0] {
        for b in [-0.5, 0.0, 0.5] {
            for g in [-0.5, 0.0, 0.5] {
                v.extend([a, b, g]);
            }
        }
    }
    v
}

/// `AᵀA + I` with entries of `A` uniform in `[-1, 1]`.
pub fn random_sigma(n: usize, seed: u64) -> SquareMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = SquareMatrix::from_fn(2 * n, |_, _| rng.gen_range(-1.0..1.0));
    &a.transpose().matmul(&a) + &SquareMatrix::identity(2 * n)
}

pub fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> SquareMatrix {
    SquareMatrix::from_fn(2 * n, |_, _| rng.gen_range(-0.5..0.5)).symmetric_part()
}

/// Parses `linear:a,b;c,d` into Σ.
fn inline_sigma(rows: &str) -> Result<SquareMatrix, Error> {
    let rows = rows
        .split(';')
        .map(parse_numbers)
        .collect::<Result<Vec<_>, _>>()?;
    SquareMatrix::from_rows(&rows)
}

pub struct Resolved {
    pub system: Option<Box<dyn HamiltonianSystem>>,
    pub n: usize,
}

/// Determines the system and the number of degrees of freedom.
pub fn resolve_system(cfg: &RunConfig) -> Result<Resolved, Error> {
    let hint = cfg.n.or_else(|| cfg.z0.as_ref().map(|z| z.len() / 2));
    let system: Option<Box<dyn HamiltonianSystem>> = match &cfg.system {
        None => None,
        Some(Value::String(s)) if s == "linear-random" => {
            let n = hint.unwrap_or(1);
            Some(Box::new(Linear::new(random_sigma(n, cfg.seed.unwrap_or(0)))?))
        }
        Some(Value::String(s)) if s.starts_with("linear:") => Some(Box::new(Linear::new(inline_sigma(&s[7..])?)?)),
        Some(Value::String(s)) => Some(builtin(s)?),
        Some(Value::Object(o)) if o.len() == 1 && o.contains_key("linear") => {
            let rows: Vec<Vec<f64>> = serde_json::from_value(o["linear"].clone())
                .map_err(|e| Error::Parse(format!("linear system matrix: {e}")))?;
            Some(Box::new(Linear::new(SquareMatrix::from_rows(&rows)?)?))
        }
        Some(_) => {
            return Err(Error::InvalidParameter(
                "system must be a name or {\"linear\": [[...]]}".into(),
            ))
        }
    };
    let n = match (&system, hint) {
        (Some(sys), Some(k)) if sys.n() != k => {
            return Err(Error::DimensionMismatch {
                expected: 2 * sys.n(),
                found: 2 * k,
            })
        }
        (Some(sys), _) => sys.n(),
        (None, Some(k)) => k,
        (None, None) => 1,
    };
    if n == 0 {
        return Err(Error::InvalidParameter("state must have at least one coordinate pair".into()));
    }
    Ok(Resolved { system, n })
}

pub fn default_z0(sys: &dyn HamiltonianSystem) -> Vec<f64> {
    match sys.name() {
        "harmonic" => vec![1.0, 0.0],
        "pendulum" => vec![0.8, 0.3],
        "kepler" => vec![1.0, 0.0, 0.0, 1.1],
        _ => (0..2 * sys.n()).map(|i| if i % 2 == 0 { 1.0 } else { 0.5 }).collect(),
    }
}

pub fn integrator(cfg: &RunConfig, scheme: &Scheme, n: usize) -> Result<IntegratorSpec, Error> {
    let h = cfg.h.unwrap_or(0.01);
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidParameter(format!("step size must be positive, got {h}")));
    }
    let solver = match cfg.solver.kind.as_deref() {
        None => SolverKind::FixedPoint,
        Some(k) => k.parse()?,
    };
    Ok(scheme
        .integrator(n, h)?
        .with_solver(solver)
        .with_tol(cfg.solver.tol.unwrap_or(DEFAULT_SOLVER_TOL))
        .with_max_iter(cfg.solver.max_iter.unwrap_or(DEFAULT_MAX_ITER)))
}
