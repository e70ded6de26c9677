//! Acceptance suite. Prints one line per criterion and exits nonzero when an
//! asserted criterion fails. Criterion 11 is exploratory and never fails.
//!
//! Run alone with `cargo test -p liouform --test acceptance`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_8, PI};
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use liouform::dynamics::{HamiltonianSystem, Harmonic, Kepler, Linear, Pendulum};
use liouform::forms::{
    abg_family, cotangent_form_matrix, dim_liouvillian_space, e1_matrix, named_form, phi_family, FormKind,
    LiouvillianForm, COMPAT_TOL,
};
use liouform::induced_map::{projection_commutes, InducedMap};
use liouform::integrate::{integrate, step, IntegratorSpec, Preset};
use liouform::linalg::{
    cayley, complex_structure, hamiltonian_residual, is_non_exceptional, jtilde_matrix, omega_matrix, rank,
    symplectic_residual, SquareMatrix,
};
use liouform::verify::{convergence_study, energy_drift, pullback_check, step_jacobian, sweep_symplecticity, GridPoint};
use liouform::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PENDULUM_Z0: [f64; 2] = [0.8, 0.3];
const FD_EPS: f64 = 1e-6;
const SYMPLECTIC_TOL: f64 = 1e-6;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn random_symmetric(rng: &mut ChaCha8Rng, m: usize, scale: f64) -> SquareMatrix {
    let a = SquareMatrix::from_fn(m, |_, _| rng.gen_range(-scale..scale));
    a.symmetric_part()
}

fn random_sigma(seed: u64, n: usize) -> SquareMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = SquareMatrix::from_fn(2 * n, |_, _| rng.gen_range(-1.0..1.0));
    &a.transpose().matmul(&a) + &SquareMatrix::identity(2 * n)
}

/// Exact one-step Jacobian by implicit differentiation,
/// `(I - hFC)⁻¹(I + hFB)` with `F = DX_H(ρ)`.
fn implicit_jacobian(map: &InducedMap, sys: &dyn HamiltonianSystem, z0: &[f64], zh: &[f64], h: f64) -> SquareMatrix {
    let rho = map.evaluate(z0, zh).unwrap();
    let f = sys.vector_field_jacobian(&rho).unwrap();
    let id = SquareMatrix::identity(z0.len());
    let lhs = &id - &f.matmul(map.c()).scale(h);
    let rhs = &id + &f.matmul(map.b()).scale(h);
    lhs.inverse().unwrap().matmul(&rhs)
}

/// Classical RK4 on the pendulum, used as an independent reference.
fn rk4_pendulum(z0: [f64; 2], t_end: f64, steps: usize) -> [f64; 2] {
    let f = |z: [f64; 2]| [z[1], -z[0].sin()];
    let h = t_end / steps as f64;
    let mut z = z0;
    for _ in 0..steps {
        let k1 = f(z);
        let k2 = f([z[0] + 0.5 * h * k1[0], z[1] + 0.5 * h * k1[1]]);
        let k3 = f([z[0] + 0.5 * h * k2[0], z[1] + 0.5 * h * k2[1]]);
        let k4 = f([z[0] + h * k3[0], z[1] + h * k3[1]]);
        for i in 0..2 {
            z[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    z
}

fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let k = x.len() as f64;
    let mx = x.iter().sum::<f64>() / k;
    let my = y.iter().sum::<f64>() / k;
    let num: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    num / den
}

fn euler_recovery() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for n in 1..=3 {
        let a = InducedMap::from_form(&named_form(FormKind::II, n)).unwrap();
        let b = InducedMap::from_form(&named_form(FormKind::III, n)).unwrap();
        // ρ_A = (Q, p): q-rows read from Z, p-rows from z; ρ_B the reverse
        let top = |v: f64| SquareMatrix::from_fn(2 * n, move |i, j| if i == j && i < n { v } else { 0.0 });
        let bottom = |v: f64| SquareMatrix::from_fn(2 * n, move |i, j| if i == j && i >= n { v } else { 0.0 });
        ok &= a.b() == &bottom(1.0) && a.c() == &top(1.0);
        ok &= b.b() == &top(1.0) && b.c() == &bottom(1.0);
    }
    notes.push(format!("map coefficients exact: {ok}"));

    let h = 0.05;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let z0 = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        let (q, p) = (z0[0], z0[1]);
        let za = step(&IntegratorSpec::preset(Preset::EulerA, 1, h), &Pendulum, &z0).unwrap().z;
        // Q = q + h p,  P = p - h sin Q
        let qa = q + h * p;
        let oracle_a = [qa, p - h * qa.sin()];
        let zb = step(&IntegratorSpec::preset(Preset::EulerB, 1, h), &Pendulum, &z0).unwrap().z;
        // P = p - h sin q,  Q = q + h P
        let pb = p - h * q.sin();
        let oracle_b = [q + h * pb, pb];
        for i in 0..2 {
            worst = worst.max((za[i] - oracle_a[i]).abs()).max((zb[i] - oracle_b[i]).abs());
        }
    }
    ok &= worst <= 1e-12;
    notes.push(format!("pendulum step vs closed form max err {worst:.2e}"));
    outcome(ok, notes.join(", "))
}

fn pendulum_jacobian_residuals(map: &InducedMap, h: f64) -> (f64, f64) {
    let spec = IntegratorSpec::new(map.clone(), h);
    let fd = step_jacobian(&spec, &Pendulum, &PENDULUM_Z0, FD_EPS).unwrap();
    let zh = step(&spec.clone().with_tol(1e-15), &Pendulum, &PENDULUM_Z0).unwrap().z;
    let exact = implicit_jacobian(map, &Pendulum, &PENDULUM_Z0, &zh, h);
    (symplectic_residual(&fd).unwrap(), symplectic_residual(&exact).unwrap())
}

fn phi_family_symplectic() -> Outcome {
    let mut worst = (0.0f64, 0.0f64);
    for phi in [0.0, FRAC_PI_8, FRAC_PI_4, 3.0 * FRAC_PI_8, FRAC_PI_2] {
        let map = InducedMap::from_form(&phi_family(1, &[phi]).unwrap()).unwrap();
        let (fd, exact) = pendulum_jacobian_residuals(&map, 0.01);
        worst = (worst.0.max(fd), worst.1.max(exact));
    }
    outcome(
        worst.0 <= SYMPLECTIC_TOL && worst.1 <= SYMPLECTIC_TOL,
        format!("5 angles, max FD residual {:.2e}, implicit-derivative residual {:.2e}", worst.0, worst.1),
    )
}

fn abg_family_symplectic() -> Outcome {
    let linear = Linear::new(random_sigma(3, 1)).unwrap();
    let h = 0.01;
    let mut worst = [0.0f64; 3];
    let mut count = 0;
    for alpha in [0.0, 0.25, 0.5, 0.75, 1.0] {
        for beta in [-0.5, 0.0, 0.5] {
            for gamma in [-0.5, 0.0, 0.5] {
                let map = InducedMap::from_form(&abg_family(1, alpha, beta, gamma).unwrap()).unwrap();
                worst[0] = worst[0].max(pendulum_jacobian_residuals(&map, h).0);
                let spec = IntegratorSpec::new(map.clone(), h);
                let fd = step_jacobian(&spec, &linear, &PENDULUM_Z0, FD_EPS).unwrap();
                worst[1] = worst[1].max(symplectic_residual(&fd).unwrap());
                // closed-form one-step matrix on ż = Lz
                let l = complex_structure(1).matmul(linear.sigma());
                let id = SquareMatrix::identity(2);
                let d = (&id - &l.matmul(map.c()).scale(h))
                    .inverse()
                    .unwrap()
                    .matmul(&(&id + &l.matmul(map.b()).scale(h)));
                worst[2] = worst[2].max(symplectic_residual(&d).unwrap());
                count += 1;
            }
        }
    }
    outcome(
        worst.iter().all(|&w| w <= SYMPLECTIC_TOL),
        format!(
            "{count} points, pendulum FD {:.2e}, linear FD {:.2e}, linear closed form {:.2e}",
            worst[0], worst[1], worst[2]
        ),
    )
}

fn family_embedding() -> Outcome {
    let mut worst = 0.0f64;
    for k in 0..50 {
        let phi = PI * k as f64 / 49.0;
        let s_phi = phi_family(1, &[phi]).unwrap().extract_s().unwrap();
        let (s, c) = phi.sin_cos();
        let s_abg = abg_family(1, c * c, s * c, s * c).unwrap().extract_s().unwrap();
        worst = worst.max(s_phi.max_abs_diff(&s_abg));
    }
    outcome(worst <= 1e-13, format!("50 angles on [0, pi], max |S_phi - S_abg| {worst:.2e}"))
}

fn cayley_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = [0.0f64; 4];
    let mut redraws = 0;
    for n in 1..=3 {
        let m = 2 * n;
        let j = complex_structure(n);
        for _ in 0..200 {
            let general = loop {
                let g = SquareMatrix::from_fn(m, |_, _| rng.gen_range(-0.5..0.5));
                if is_non_exceptional(&g, 1e-2) {
                    break g;
                }
                redraws += 1;
            };
            let back = cayley(&cayley(&general, 1e-12).unwrap(), 1e-12).unwrap();
            worst[0] = worst[0].max(back.max_abs_diff(&general));

            let ham = loop {
                let h = j.matmul(&random_symmetric(&mut rng, m, 1.0));
                if is_non_exceptional(&h, 1e-2) {
                    break h;
                }
                redraws += 1;
            };
            let psi = cayley(&ham, 1e-12).unwrap();
            worst[1] = worst[1].max(symplectic_residual(&psi).unwrap());
            worst[0] = worst[0].max(cayley(&psi, 1e-12).unwrap().max_abs_diff(&ham));

            // symplectic → Hamiltonian, starting from exp of a Hamiltonian matrix
            let sympl = j.matmul(&random_symmetric(&mut rng, m, 0.5)).expm();
            if is_non_exceptional(&sympl, 1e-2) {
                worst[2] = worst[2].max(hamiltonian_residual(&cayley(&sympl, 1e-12).unwrap()).unwrap());
            } else {
                redraws += 1;
            }

            let s = random_symmetric(&mut rng, m, 0.5);
            let map = InducedMap::from_s(&s).unwrap();
            if is_non_exceptional(&map.hamiltonian_matrix(), 1e-2) {
                let psi = map.consistency_map(1e-12).unwrap();
                worst[3] = worst[3].max(symplectic_residual(&psi).unwrap());
            } else {
                redraws += 1;
            }
        }
    }
    outcome(
        worst.iter().all(|&w| w <= 1e-10),
        format!(
            "600 draws, involution {:.2e}, ham->sympl {:.2e}, sympl->ham {:.2e}, consistency map {:.2e}, {redraws} near-exceptional draws skipped",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

fn midpoint_identification() -> Outcome {
    let s = abg_family(1, 0.5, 0.0, 0.0).unwrap().extract_s().unwrap();
    let s_zero = s.max_abs() == 0.0;
    let map = InducedMap::from_s(&s).unwrap();
    let spec = IntegratorSpec::new(map, 0.1).with_tol(1e-14);
    let traj = integrate(&spec, &Harmonic, &[1.0, 0.0], 10_000).unwrap();
    let (drift, _) = energy_drift(&traj);

    let mut sym = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..20 {
        let z0 = [rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)];
        for sys in [&Harmonic as &dyn HamiltonianSystem, &Pendulum] {
            let fwd = step(&spec, sys, &z0).unwrap().z;
            let back = step(&spec.with_step(-0.1), sys, &fwd).unwrap().z;
            sym = sym.max((back[0] - z0[0]).abs()).max((back[1] - z0[1]).abs());
        }
    }
    outcome(
        s_zero && drift <= 1e-10 && sym <= 1e-11,
        format!("S = 0: {s_zero}, energy drift over 1e4 steps {drift:.2e}, time symmetry {sym:.2e}"),
    )
}

fn convergence_orders() -> Outcome {
    let hs = [0.02, 0.01, 0.005, 0.0025];
    let reference = rk4_pendulum(PENDULUM_Z0, 1.0, 20_000);
    let phi8 = InducedMap::from_form(&phi_family(1, &[FRAC_PI_8]).unwrap()).unwrap();
    let cases: [(&str, IntegratorSpec, f64, f64); 4] = [
        ("euler_a", IntegratorSpec::preset(Preset::EulerA, 1, 0.02), 0.9, 1.1),
        ("euler_b", IntegratorSpec::preset(Preset::EulerB, 1, 0.02), 0.9, 1.1),
        ("midpoint", IntegratorSpec::preset(Preset::Midpoint, 1, 0.02), 1.9, 2.1),
        ("phi=pi/8", IntegratorSpec::new(phi8, 0.02), 0.9, f64::INFINITY),
    ];
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, spec, lo, hi) in cases {
        let study = convergence_study(&spec, &Pendulum, &PENDULUM_Z0, 1.0, &hs).unwrap();
        // same slope against the RK4 reference
        let errs: Vec<f64> = hs
            .iter()
            .map(|&h| {
                let steps = (1.0 / h).round() as usize;
                let z = integrate(&spec.with_step(h), &Pendulum, &PENDULUM_Z0, steps).unwrap();
                let last = z.states.last().unwrap();
                (last[0] - reference[0]).abs().max((last[1] - reference[1]).abs())
            })
            .collect();
        let lx: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
        let ly: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
        let oracle = ls_slope(&lx, &ly);
        ok &= (lo..=hi).contains(&study.order) && (lo..=hi).contains(&oracle);
        notes.push(format!("{name} {:.3} (rk4 ref {:.3})", study.order, oracle));
    }
    outcome(ok, notes.join(", "))
}

fn rejection() -> Outcome {
    let mut ok = true;
    for kind in [FormKind::I, FormKind::IV] {
        for n in 1..=2 {
            let form = named_form(kind, n);
            ok &= !form.compat_check(COMPAT_TOL);
            ok &= matches!(InducedMap::from_form(&form), Err(Error::Incompatible { .. }));
            ok &= matches!(form.extract_s(), Err(Error::Incompatible { .. }));
        }
    }
    outcome(ok, "types I and IV refused as Incompatible at n = 1, 2".into())
}

fn dimension_formula() -> Outcome {
    let dims_ok = dim_liouvillian_space(1) == 3 && dim_liouvillian_space(2) == 10;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut ranks = Vec::new();
    for n in 1..=2 {
        let m = 2 * n;
        let base = LiouvillianForm::canonical(n);
        // any valid coefficient matrix is A = Sym - ½Ω; build candidates that way
        let deltas: Vec<Vec<f64>> = (0..3 * m * m)
            .map(|_| {
                let cand = &random_symmetric(&mut rng, m, 1.0) - &omega_matrix(n).scale(0.5);
                let form = LiouvillianForm::new(n, cand).unwrap();
                (form.coeffs() - base.coeffs()).as_slice().to_vec()
            })
            .collect();
        ranks.push(rank(&deltas, 1e-9));
    }
    outcome(
        dims_ok && ranks == [3, 10],
        format!("dim(1) = {}, dim(2) = {}, delta ranks {ranks:?}", dim_liouvillian_space(1), dim_liouvillian_space(2)),
    )
}

fn structural_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut exact_sum = true;
    let mut ham = 0.0f64;
    for n in 1..=3 {
        let m = 2 * n;
        for _ in 0..200 {
            let map = InducedMap::from_s(&random_symmetric(&mut rng, m, 2.0)).unwrap();
            exact_sum &= (map.b() + map.c()) == SquareMatrix::identity(m);
            let om = omega_matrix(n).matmul(&(map.c() - map.b()));
            ham = ham.max(om.max_abs_diff(&om.transpose()));
        }
    }
    let mut proj = 0.0f64;
    for k in 0..100 {
        let n = 1 + k % 3;
        let v: Vec<f64> = (0..4 * n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let (lhs, rhs) = projection_commutes(n, &v).unwrap();
        proj = proj.max(lhs.iter().zip(&rhs).fold(0.0, |a, (x, y)| a.max((x - y).abs())));
    }
    let e1 = (1..=3).all(|n| pullback_check(&e1_matrix(n), &jtilde_matrix(n), &cotangent_form_matrix(n), 1e-14).unwrap());
    outcome(
        exact_sum && ham <= 1e-13 && proj <= 1e-14 && e1,
        format!("B + C = I exact: {exact_sum}, Omega(C - B) asymmetry {ham:.2e}, projection {proj:.2e}, E1 pullback: {e1}"),
    )
}

/// Exploratory n = 2 sweep: the one-step Jacobian of generic symmetric S on
/// nonlinear and linear systems.
fn exploratory_sweep() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut grid = vec![
        GridPoint {
            label: "midpoint".into(),
            params: vec![],
            map: InducedMap::midpoint(2),
        },
        GridPoint {
            label: "euler_a".into(),
            params: vec![],
            map: InducedMap::euler_a(2),
        },
    ];
    for k in 0..20 {
        let s = random_symmetric(&mut rng, 4, 0.5);
        grid.push(GridPoint {
            label: format!("random{k}"),
            params: s.as_slice().to_vec(),
            map: InducedMap::from_s(&s).unwrap(),
        });
    }
    let linear = Linear::new(random_sigma(12, 2)).unwrap();
    let kepler_z0 = [1.0, 0.0, 0.0, 1.1];
    let linear_z0 = [0.8, 0.3, -0.2, 0.5];
    let mut lines = Vec::new();
    for h in [0.01, 0.1] {
        for (sys, z0) in [(&Kepler as &dyn HamiltonianSystem, &kepler_z0[..]), (&linear, &linear_z0[..])] {
            let reports = sweep_symplecticity(&grid, sys, z0, h, FD_EPS, SYMPLECTIC_TOL);
            let exact: Vec<f64> = grid
                .iter()
                .map(|g| {
                    let spec = IntegratorSpec::new(g.map.clone(), h).with_tol(1e-15);
                    let zh = step(&spec, sys, z0).unwrap().z;
                    symplectic_residual(&implicit_jacobian(&g.map, sys, z0, &zh, h)).unwrap()
                })
                .collect();
            let classical = exact[..2].iter().cloned().fold(0.0, f64::max);
            let generic = &exact[2..];
            let gmin = generic.iter().cloned().fold(f64::INFINITY, f64::min);
            let gmax = generic.iter().cloned().fold(0.0, f64::max);
            let fd_fail = reports[2..].iter().filter(|r| !r.pass).count();
            lines.push(format!(
                "{} h={h}: classical {classical:.1e}, generic {gmin:.1e}..{gmax:.1e} ({fd_fail}/20 above 1e-6 by FD)",
                sys.name()
            ));
        }
    }
    outcome(true, lines.join("; "))
}

/// Name, check, and whether a failure fails the suite.
type Criterion = (&'static str, fn() -> Outcome, bool);

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("Euler A/B recovery", euler_recovery, true),
        ("phi-family symplecticity, n = 1", phi_family_symplectic, true),
        ("(alpha, beta, gamma)-family symplecticity, n = 1", abg_family_symplectic, true),
        ("family embedding", family_embedding, true),
        ("Cayley suite", cayley_suite, true),
        ("midpoint identification", midpoint_identification, true),
        ("convergence orders", convergence_orders, true),
        ("rejection of types I and IV", rejection, true),
        ("dimension formula", dimension_formula, true),
        ("structural identities", structural_identities, true),
        ("exploratory n = 2 sweep", exploratory_sweep, false),
    ];
    let mut failures = 0;
    for (i, (name, run, asserted)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let tag = match (asserted, result.pass) {
            (false, _) => "INFO",
            (true, true) => "PASS",
            (true, false) => {
                failures += 1;
                "FAIL"
            }
        };
        println!(
            "criterion {:>2} [{tag}] {name} ({:.1}s): {}",
            i + 1,
            start.elapsed().as_secs_f64(),
            result.detail
        );
    }
    println!("acceptance: {} asserted criteria, {failures} failed", criteria.iter().filter(|c| c.2).count());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
