use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use liouform::dynamics::HamiltonianSystem;
use liouform::forms::ProductForm;
use liouform::induced_map::InducedMap;
use liouform::integrate::{integrate, step, Trajectory};
use liouform::linalg::{cayley, hamiltonian_residual, is_non_exceptional, symplectic_residual, SquareMatrix};
use liouform::verify::{
    energy_drift, reports_to_json, step_jacobian_checked, step_residual, summarize, sweep_symplecticity,
    write_reports_csv, GridPoint, ReportMetadata, VerifyReport, DEFAULT_EPS_FD, SYMPLECTIC_TOL,
};
use liouform::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use crate::config::{
    default_abg_grid, default_phi_grid, default_z0, integrator, random_symmetric, resolve_system, scheme, Params,
    RunConfig, Scheme,
};
use crate::{Failure, EXIT_ASSERTION, EXIT_OK};

/// Exceptional-set threshold for `det(I + M)`.
const CAYLEY_TOL: f64 = 1e-12;

fn require_system(sys: Option<Box<dyn HamiltonianSystem>>) -> Result<Box<dyn HamiltonianSystem>, Failure> {
    sys.ok_or_else(|| Failure::usage("this command needs --system"))
}

fn require_family(cfg: &RunConfig) -> Result<&str, Failure> {
    cfg.family
        .as_deref()
        .ok_or_else(|| Failure::usage("this command needs --family"))
}

fn initial_state(cfg: &RunConfig, sys: &dyn HamiltonianSystem) -> Vec<f64> {
    cfg.z0.clone().unwrap_or_else(|| default_z0(sys))
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Failure::from(Error::Io(format!("{}: {e}", p.display()))))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

/// Reads a form document `{"n": .., "R": [[..]], "label": ..}`, checking
/// exactness separately from syntax.
fn read_form(path: &Path) -> Result<ProductForm, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let n = doc
        .get("n")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::Parse("form document needs an integer `n`".into()))? as usize;
    let rows: Vec<Vec<f64>> = serde_json::from_value(doc.get("R").cloned().unwrap_or(Value::Null))
        .map_err(|e| Error::Parse(format!("form matrix `R`: {e}")))?;
    let label = doc.get("label").and_then(Value::as_str).map(str::to_string);
    ProductForm::new(n, SquareMatrix::from_rows(&rows)?, label)
}

pub fn check_form(cfg: &RunConfig, form_file: Option<&Path>, emit: Option<&Path>) -> Result<u8, Failure> {
    let (scheme, n) = match form_file {
        Some(path) => {
            let form = read_form(path)?;
            let n = form.n();
            (Scheme::Form(form), n)
        }
        None => {
            let n = resolve_system(cfg)?.n;
            let params = Params::from_value(cfg.params.as_ref())?;
            (scheme(require_family(cfg)?, &params, n)?, n)
        }
    };
    let mut out = io::stdout().lock();
    let w = |e: io::Error| Failure::from(Error::Io(e.to_string()));
    if let Scheme::Form(form) = &scheme {
        writeln!(out, "form: {form}").map_err(w)?;
        writeln!(out, "exact: yes").map_err(w)?;
        writeln!(out, "compatibility residual: {:.3e}", form.compat_residual()).map_err(w)?;
        if let Some(path) = emit {
            let text = serde_json::to_string_pretty(form).map_err(Error::from)?;
            fs::write(path, text + "\n").map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        }
    }
    let map = scheme.map(n)?;
    writeln!(out, "S =\n{}", map.s()).map_err(w)?;
    writeln!(out, "B =\n{}", map.b()).map_err(w)?;
    writeln!(out, "C =\n{}", map.c()).map_err(w)?;
    writeln!(out, "{map}").map_err(w)?;
    if let Some(kind) = map.classical_kind() {
        writeln!(out, "classical map: {kind:?}").map_err(w)?;
    }
    let class = map.classify(liouform::linalg::DEFAULT_TOL);
    writeln!(
        out,
        "classification: {}{}",
        class.class,
        if class.near_tie { " (near tie)" } else { "" }
    )
    .map_err(w)?;
    match map.consistency_map(CAYLEY_TOL) {
        Ok(psi) => writeln!(
            out,
            "consistency map =\n{psi}\nconsistency map symplectic residual: {:.3e}",
            symplectic_residual(&psi)?
        )
        .map_err(w)?,
        Err(Error::Exceptional { det }) => {
            writeln!(out, "consistency map: undefined, C - B is exceptional (|det| = {det:.3e})").map_err(w)?
        }
        Err(e) => return Err(e.into()),
    }
    Ok(EXIT_OK)
}

fn write_plot(traj: &Trajectory, path: &Path) -> Result<(), Error> {
    let io_err = |e: io::Error| Error::Io(format!("{}: {e}", path.display()));
    let mut data = BufWriter::new(File::create(path).map_err(io_err)?);
    let n = traj.states.first().map_or(1, |z| z.len() / 2);
    for z in &traj.states {
        writeln!(data, "{} {}", z[0], z[n]).map_err(io_err)?;
    }
    data.flush().map_err(io_err)?;
    let script = PathBuf::from(format!("{}.gp", path.display()));
    let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    fs::write(
        &script,
        format!("set xlabel 'q1'\nset ylabel 'p1'\nset size ratio -1\nplot '{name}' using 1:2 with lines title 'phase portrait'\n"),
    )
    .map_err(|e| Error::Io(format!("{}: {e}", script.display())))
}

pub fn integrate_cmd(cfg: &RunConfig, out: Option<PathBuf>, plot: Option<&Path>) -> Result<u8, Failure> {
    let resolved = resolve_system(cfg)?;
    let sys = require_system(resolved.system)?;
    let params = Params::from_value(cfg.params.as_ref())?;
    let scheme = scheme(require_family(cfg)?, &params, resolved.n)?;
    let spec = integrator(cfg, &scheme, resolved.n)?;
    let z0 = initial_state(cfg, sys.as_ref());
    let steps = cfg.steps.unwrap_or(1000);
    if steps == 0 {
        return Err(Failure::usage("--steps must be at least 1"));
    }
    let out = out.or_else(|| cfg.output_for("trajectory"));
    let (traj, failure) = match integrate(&spec, sys.as_ref(), &z0, steps) {
        Ok(t) => (t, None),
        Err(interrupted) => {
            let interrupted = *interrupted;
            (interrupted.partial, Some(interrupted.source))
        }
    };
    if traj.is_empty() {
        return Err(failure.map(Failure::from).unwrap_or_else(|| Failure::usage("empty trajectory")));
    }
    traj.write_csv(open_output(out.as_deref())?)?;
    if let Some(p) = plot {
        write_plot(&traj, p)?;
    }
    let (drift, slope) = energy_drift(&traj);
    match failure {
        None => {
            eprintln!(
                "integrated {steps} steps of {} with h = {}: max energy drift {drift:.3e}, drift slope {slope:.3e}, newton fallbacks {}",
                sys.name(),
                spec.h,
                traj.diagnostics.newton_fallbacks
            );
            Ok(EXIT_OK)
        }
        Some(e) => {
            let target = out.map_or("stdout".to_string(), |p| p.display().to_string());
            eprintln!(
                "warning: PARTIAL trajectory, {} of {steps} steps written to {target}",
                traj.len() - 1
            );
            Err(e.into())
        }
    }
}

fn emit_reports(reports: &[VerifyReport], path: Option<&Path>) -> Result<(), Failure> {
    let json = path.is_some_and(|p| p.extension().is_some_and(|e| e == "json"));
    let mut w = open_output(path)?;
    if json {
        writeln!(w, "{}", reports_to_json(reports)?).map_err(|e| Error::Io(e.to_string()))?;
        w.flush().map_err(|e| Error::Io(e.to_string()))?;
    } else {
        write_reports_csv(reports, w)?;
    }
    Ok(())
}

fn finish(reports: &[VerifyReport], assert: bool) -> u8 {
    let s = summarize(reports);
    let violations = reports.iter().filter(|r| r.is_violation()).count();
    eprintln!(
        "{} checks: {} passed, {} failed ({} exploratory)",
        reports.len(),
        s.passed,
        s.failed,
        s.exploratory_failures
    );
    if assert && violations > 0 {
        eprintln!("assertion failed: {violations} mandated checks did not pass");
        EXIT_ASSERTION
    } else {
        EXIT_OK
    }
}

pub fn verify_cmd(cfg: &RunConfig, out: Option<PathBuf>, assert: bool) -> Result<u8, Failure> {
    let resolved = resolve_system(cfg)?;
    let sys = require_system(resolved.system)?;
    let params = Params::from_value(cfg.params.as_ref())?;
    let family = require_family(cfg)?;
    let scheme = scheme(family, &params, resolved.n)?;
    let spec = integrator(cfg, &scheme, resolved.n)?;
    let z0 = initial_state(cfg, sys.as_ref());
    let eps = cfg.eps_fd.unwrap_or(DEFAULT_EPS_FD);
    let steps = cfg.steps.unwrap_or(1000);
    let subject = format!("{}/{family}", sys.name());
    let asserted = resolved.n == 1 || spec.map.classical_kind().is_some();
    let meta = |asserted: bool, note: Option<String>| ReportMetadata {
        h: Some(spec.h),
        eps_fd: Some(eps),
        params: match &params {
            Params::Numbers(v) => v.clone(),
            _ => Vec::new(),
        },
        asserted,
        note,
    };

    let mut reports = Vec::new();
    let first = step(&spec, sys.as_ref(), &z0)?;
    let residual_tol = (10.0 * spec.solver_tol).max(1e-12);
    reports.push(
        VerifyReport::new(&subject, "step_residual", step_residual(&spec, sys.as_ref(), &z0, &first.z)?, residual_tol)
            .with_metadata(meta(true, None)),
    );
    let jac = step_jacobian_checked(&spec, sys.as_ref(), &z0, eps)?;
    reports.push(
        VerifyReport::new(&subject, "symplectic_residual", symplectic_residual(&jac.jacobian)?, SYMPLECTIC_TOL)
            .with_metadata(meta(asserted, None)),
    );
    reports.push(
        VerifyReport::new(&subject, "jacobian_cross_check", jac.cross_check, SYMPLECTIC_TOL)
            .with_metadata(meta(true, Some("max |D(eps) - D(2 eps)|".into()))),
    );
    let traj = integrate(&spec, sys.as_ref(), &z0, steps).map_err(|e| Failure::from(e.source))?;
    let (drift, slope) = energy_drift(&traj);
    reports.push(
        VerifyReport::new(&subject, "energy_drift", drift, cfg.drift_tol.unwrap_or(spec.h))
            .with_metadata(meta(true, Some(format!("{steps} steps, secular slope {slope:.3e}")))),
    );
    if let Ok(psi) = spec.map.consistency_map(CAYLEY_TOL) {
        reports.push(
            VerifyReport::new(&subject, "consistency_map_symplectic", symplectic_residual(&psi)?, 1e-10)
                .with_metadata(meta(true, None)),
        );
    }
    emit_reports(&reports, out.or_else(|| cfg.output_for("verify")).as_deref())?;
    Ok(finish(&reports, assert))
}

fn sweep_grid(family: &str, params: &Params, n: usize, seed: u64) -> Result<(Vec<GridPoint>, Vec<VerifyReport>), Failure> {
    let point = |label: String, params: Vec<f64>, sch: Result<Scheme, Error>| -> Result<GridPoint, (String, Vec<f64>, Error)> {
        match sch.and_then(|s| s.map(n)) {
            Ok(map) => Ok(GridPoint { label, params, map }),
            Err(e) => Err((label, params, e)),
        }
    };
    let mut grid = Vec::new();
    let mut refused = Vec::new();
    let mut push = |r: Result<GridPoint, (String, Vec<f64>, Error)>| match r {
        Ok(g) => grid.push(g),
        Err((label, params, e)) => refused.push(
            VerifyReport::new(label, "symplectic_residual", f64::INFINITY, SYMPLECTIC_TOL).with_metadata(
                ReportMetadata {
                    params,
                    asserted: true,
                    note: Some(e.to_string()),
                    ..ReportMetadata::default()
                },
            ),
        ),
    };
    match (family, params) {
        ("phi", Params::None) | ("phi", Params::Numbers(_)) => {
            let angles = match params {
                Params::Numbers(v) => v.clone(),
                _ => default_phi_grid(),
            };
            for a in angles {
                push(point(format!("phi={a}"), vec![a], scheme("phi", &Params::Numbers(vec![a]), n)));
            }
        }
        ("abg", Params::None) | ("abg", Params::Numbers(_)) => {
            let flat = match params {
                Params::Numbers(v) => v.clone(),
                _ => default_abg_grid(),
            };
            if flat.len() % 3 != 0 {
                return Err(Failure::usage("abg sweep takes triples of reals"));
            }
            for t in flat.chunks(3) {
                push(point(
                    format!("abg=({},{},{})", t[0], t[1], t[2]),
                    t.to_vec(),
                    scheme("abg", &Params::Numbers(t.to_vec()), n),
                ));
            }
        }
        ("named", Params::Words(kinds)) | ("preset", Params::Words(kinds)) => {
            for k in kinds {
                push(point(
                    format!("{family}={k}"),
                    Vec::new(),
                    scheme(family, &Params::Words(vec![k.clone()]), n),
                ));
            }
        }
        ("random-S", Params::None) | ("random-S", Params::Numbers(_)) => {
            let count = match params {
                Params::Numbers(v) if v.len() == 1 && v[0] >= 1.0 && v[0].fract() == 0.0 => v[0] as usize,
                Params::None => 20,
                _ => return Err(Failure::usage("random-S sweep takes one positive integer count")),
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for k in 0..count {
                let s = random_symmetric(n, &mut rng);
                let map = InducedMap::from_s(&s)?;
                grid.push(GridPoint {
                    label: format!("random{k}"),
                    params: s.as_slice().to_vec(),
                    map,
                });
            }
        }
        ("matrix-S", _) | ("from-symplectic", _) => {
            push(point(family.to_string(), Vec::new(), scheme(family, params, n)));
        }
        _ => {
            return Err(Failure::usage(format!(
                "cannot build a sweep grid for family `{family}` with these params"
            )))
        }
    }
    Ok((grid, refused))
}

pub fn sweep_cmd(cfg: &RunConfig, out: Option<PathBuf>, assert: bool) -> Result<u8, Failure> {
    let resolved = resolve_system(cfg)?;
    let sys = require_system(resolved.system)?;
    let params = Params::from_value(cfg.params.as_ref())?;
    let (grid, refused) = sweep_grid(require_family(cfg)?, &params, resolved.n, cfg.seed.unwrap_or(0))?;
    let z0 = initial_state(cfg, sys.as_ref());
    let h = cfg.h.unwrap_or(0.01);
    if !(h.is_finite() && h > 0.0) {
        return Err(Failure::usage(format!("step size must be positive, got {h}")));
    }
    let eps = cfg.eps_fd.unwrap_or(DEFAULT_EPS_FD);
    let mut reports = sweep_symplecticity(&grid, sys.as_ref(), &z0, h, eps, SYMPLECTIC_TOL);
    reports.extend(refused);
    emit_reports(&reports, out.or_else(|| cfg.output_for("sweep")).as_deref())?;
    Ok(finish(&reports, assert))
}

pub fn cayley_cmd(path: &Path) -> Result<u8, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let m: SquareMatrix = serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    if !is_non_exceptional(&m, CAYLEY_TOL) {
        let det = (&SquareMatrix::identity(m.dim()) + &m).det().abs();
        return Err(Error::Exceptional { det }.into());
    }
    let image = cayley(&m, CAYLEY_TOL)?;
    println!("M =\n{m}");
    println!("cayley(M) =\n{image}");
    if m.dim().is_multiple_of(2) {
        let (h_in, s_in) = (hamiltonian_residual(&m)?, symplectic_residual(&m)?);
        let (h_out, s_out) = (hamiltonian_residual(&image)?, symplectic_residual(&image)?);
        println!("hamiltonian residual: M {h_in:.3e}, cayley(M) {h_out:.3e}");
        println!("symplectic residual: M {s_in:.3e}, cayley(M) {s_out:.3e}");
    }
    let back = cayley(&image, CAYLEY_TOL)?;
    println!("involution residual: {:.3e}", back.max_abs_diff(&m));
    Ok(EXIT_OK)
}
