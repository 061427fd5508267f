//! Acceptance criteria 1–10. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any fails.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wavemorse::fourier::FourierBasis;
use wavemorse::index::{
    gap_nondegeneracy_check, projection_index, relative_morse_index, spectral_flow, IndexPair,
};
use wavemorse::operator::{multiplication_operator_flat, TruncatedOperator};
use wavemorse::reduction::{fixed_point_z, reduced_gradient, reduced_value};
use wavemorse::wave::{forcing_shape, solve_wave, Condition, Evidence, Method, WaveProblem};
use wavemorse_cli::config::{self, LoadedConfig};

// Pinned tolerances.
const PAIRS_FLOW_INDEX: usize = 50;
const MAX_DIM_FLOW_INDEX: usize = 40;
const RUNTIME_FLOW_INDEX: Duration = Duration::from_secs(10);
const PAIRS_PROJECTION: usize = 50;
const MAX_DIM_PROJECTION: usize = 30;
const RUNTIME_PROJECTION: Duration = Duration::from_secs(5);
const PAIRS_ADDITIVITY: usize = 20;
const SPLIT_POINT: f64 = 0.37;
/// Endpoints and the split slice must keep every eigenvalue this far from 0.
const NONDEGENERACY_MARGIN: f64 = 1e-3;
const FLOW_STEPS: usize = 64;
const CONTRACTION_SAMPLES: usize = 100;
const CONTRACTION_SLACK: f64 = 1e-8;
const RUNTIME_CONTRACTION: Duration = Duration::from_secs(60);
const GRADIENT_POINTS: usize = 50;
const GRADIENT_REL_TOL: f64 = 1e-6;
const LINEAR_ORACLE_TOL: f64 = 1e-8;
const GAP_SAMPLES: usize = 50;
const GAP_MARGIN: f64 = 1e-3;
const NONTRIVIAL_NORM: f64 = 1e-4;
const DISTINCT_TOL: f64 = 1e-4;
const SOLUTION_RESIDUAL: f64 = 1e-6;
const RUNTIME_MULTIPLICITY: Duration = Duration::from_secs(300);
const LIMIT_RESIDUAL: f64 = 1e-6;
const REFINED_MODES: usize = 10;

struct Outcome {
    pass: bool,
    detail: String,
}

type Check = fn() -> Result<Outcome, String>;

fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn load(name: &str) -> LoadedConfig {
    config::load(&config_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn problem(name: &str, force: bool) -> Result<WaveProblem, String> {
    load(name).config.wave_problem(force).map_err(|e| e.to_string())
}

fn problem_at(name: &str, modes: usize, force: bool) -> Result<WaveProblem, String> {
    let mut cfg = load(name).config;
    let p = cfg.problem.as_mut().expect("problem section");
    p.j_max = modes;
    p.k_max = modes;
    p.nx = None;
    p.nt = None;
    cfg.wave_problem(force).map_err(|e| e.to_string())
}

fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    (&m + m.transpose()) * 0.5
}

fn min_abs_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(f64::INFINITY, |a, v| a.min(v.abs()))
}

/// Random symmetric pair whose path A − tB is nondegenerate at every `t`.
fn nondegenerate_pair(n: usize, at: &[f64], rng: &mut ChaCha8Rng) -> (TruncatedOperator, TruncatedOperator) {
    loop {
        let a = random_symmetric(n, rng);
        let b = random_symmetric(n, rng) * 2.0;
        if at.iter().all(|&t| min_abs_eigenvalue(&(&a - &b * t)) >= NONDEGENERACY_MARGIN) {
            return (
                TruncatedOperator::from_matrix(a).unwrap(),
                TruncatedOperator::from_matrix(b).unwrap(),
            );
        }
    }
}

fn random_orthonormal(n: usize, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    g.qr().q().columns(0, k).into_owned()
}

fn random_vector(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| scale * rng.random_range(-1.0..1.0))
}

fn criterion_1() -> Result<Outcome, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut mismatches = 0;
    for _ in 0..PAIRS_FLOW_INDEX {
        let n = rng.random_range(2..=MAX_DIM_FLOW_INDEX);
        let (a, b) = nondegenerate_pair(n, &[0.0, 1.0], &mut rng);
        let flow = spectral_flow(&a, &b, 0.0, 1.0, FLOW_STEPS).map_err(|e| e.to_string())?;
        let index = relative_morse_index(&a, &b).map_err(|e| e.to_string())?;
        if flow.flow != index.index {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    Ok(Outcome {
        pass: mismatches == 0 && elapsed < RUNTIME_FLOW_INDEX,
        detail: format!("{mismatches} mismatches over {PAIRS_FLOW_INDEX} pairs in {elapsed:.2?}"),
    })
}

fn criterion_2() -> Result<Outcome, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut failures = 0;
    for _ in 0..PAIRS_PROJECTION {
        let n = rng.random_range(2..=MAX_DIM_PROJECTION);
        let k1 = rng.random_range(1..=n);
        let k2 = rng.random_range(1..=n);
        let v = random_orthonormal(n, k1, &mut rng);
        let w = random_orthonormal(n, k2, &mut rng);
        let vw = projection_index(&v, &w).map_err(|e| e.to_string())?;
        let wv = projection_index(&w, &v).map_err(|e| e.to_string())?;
        if vw.index != -wv.index {
            failures += 1;
        }
    }
    let elapsed = start.elapsed();
    Ok(Outcome {
        pass: failures == 0 && elapsed < RUNTIME_PROJECTION,
        detail: format!("{failures} failures over {PAIRS_PROJECTION} pairs in {elapsed:.2?}"),
    })
}

fn criterion_3() -> Result<Outcome, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut failures = 0;
    let mut nonzero = 0;
    for _ in 0..PAIRS_ADDITIVITY {
        let n = rng.random_range(2..=MAX_DIM_FLOW_INDEX);
        let (a, b) = nondegenerate_pair(n, &[0.0, SPLIT_POINT, 1.0], &mut rng);
        let flow = |t0, t1| spectral_flow(&a, &b, t0, t1, FLOW_STEPS).map(|f| f.flow);
        let whole = flow(0.0, 1.0).map_err(|e| e.to_string())?;
        let left = flow(0.0, SPLIT_POINT).map_err(|e| e.to_string())?;
        let right = flow(SPLIT_POINT, 1.0).map_err(|e| e.to_string())?;
        if whole != left + right {
            failures += 1;
        }
        if left != 0 && right != 0 {
            nonzero += 1;
        }
    }
    Ok(Outcome {
        pass: failures == 0,
        detail: format!("{failures} failures over {PAIRS_ADDITIVITY} pairs, {nonzero} with flow on both halves"),
    })
}

fn criterion_4() -> Result<Outcome, String> {
    let start = Instant::now();
    let p = problem("ex_thm41_homotopy.json", false)?;
    let prob = &p.reduced;
    let l = prob.l();
    let l_f = prob.f.lipschitz_bound();
    let rate = l_f / (l - l_f);
    let f0 = prob.f.origin_norm().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst_lipschitz = f64::NEG_INFINITY;
    let mut worst_bound = f64::NEG_INFINITY;
    for i in 0..CONTRACTION_SAMPLES {
        let scale = 10f64.powi(i as i32 % 4 - 1);
        let x = random_vector(prob.dim_h0(), 3.0 * scale, &mut rng);
        let h = random_vector(prob.dim_h0(), scale, &mut rng);
        let a = fixed_point_z(prob, &x).map_err(|e| e.to_string())?;
        let b = fixed_point_z(prob, &(&x + &h)).map_err(|e| e.to_string())?;
        for (za, zb) in [(&a.z_plus, &b.z_plus), (&a.z_minus, &b.z_minus)] {
            worst_lipschitz = worst_lipschitz.max((zb - za).norm() - rate * h.norm());
            worst_bound = worst_bound.max(za.norm() - rate * x.norm() - f0 / (l - l_f));
        }
    }
    let elapsed = start.elapsed();
    Ok(Outcome {
        pass: worst_lipschitz <= CONTRACTION_SLACK
            && worst_bound <= CONTRACTION_SLACK
            && elapsed < RUNTIME_CONTRACTION,
        detail: format!(
            "J=K={}, largest excess over the Lipschitz bound {worst_lipschitz:.3e}, over the a priori bound {worst_bound:.3e}, {elapsed:.2?}",
            p.spec.j_max
        ),
    })
}

fn criterion_5() -> Result<Outcome, String> {
    let configs = [
        ("ex_thm41_homotopy.json", false),
        ("ex_thm42_minus_regularized.json", false),
        ("ex_thm42_plus_regularized.json", false),
        ("ex_thm43_solve.json", true),
        ("linear_solve.json", false),
    ];
    let mut worst = 0.0_f64;
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    for (name, force) in configs {
        let p = problem(name, force)?;
        let prob = &p.reduced;
        let dim = prob.dim_h0();
        for _ in 0..GRADIENT_POINTS {
            let x = random_vector(dim, 3.0, &mut rng);
            let g = reduced_gradient(prob, &x).map_err(|e| e.to_string())?;
            let mut fd = DVector::zeros(dim);
            for i in 0..dim {
                let step = 1e-5 * (1.0 + x[i].abs());
                let mut hi = x.clone();
                let mut lo = x.clone();
                hi[i] += step;
                lo[i] -= step;
                let vh = reduced_value(prob, &hi).map_err(|e| e.to_string())?;
                let vl = reduced_value(prob, &lo).map_err(|e| e.to_string())?;
                fd[i] = (vh - vl) / (2.0 * step);
            }
            worst = worst.max((&g - &fd).norm() / g.norm().max(1.0));
        }
    }
    Ok(Outcome {
        pass: worst <= GRADIENT_REL_TOL,
        detail: format!("largest relative gap {worst:.3e} over {} problems x {GRADIENT_POINTS} points", configs.len()),
    })
}

fn criterion_6() -> Result<Outcome, String> {
    let loaded = load("linear_solve.json");
    let p = loaded.config.wave_problem(false).map_err(|e| e.to_string())?;
    let opts = loaded.config.solve_options(loaded.config.seed, false);
    let sol = solve_wave(&p, Method::ReduceDirect, &opts).map_err(|e| e.to_string())?;

    // direct block solve (□ − b − g)c = P(h) with the assembled operator
    let nl = &p.nonlinearity;
    let basis = FourierBasis::new(p.spec).map_err(|e| e.to_string())?;
    let g = nl.comparison_field("g1").map_err(|e| e.to_string())?;
    let m = multiplication_operator_flat(&basis, &basis.sample(&g)).map_err(|e| e.to_string())?;
    let forcing = nl.params["forcing"];
    let omega = p.spec.omega();
    let rhs = basis.analyze(&basis.sample(|x, t| forcing * forcing_shape(x, t, omega)));
    let system = p.a.minus(&m).map_err(|e| e.to_string())?.matrix;
    let direct = system.lu().solve(&rhs).ok_or("singular linear system")?;

    let count = sol.solutions.len();
    let gap = sol
        .solutions
        .first()
        .map(|s| (s.point.z_vector() - &direct).norm())
        .unwrap_or(f64::INFINITY);
    Ok(Outcome {
        pass: count == 1 && gap <= LINEAR_ORACLE_TOL,
        detail: format!("{count} solution(s), coefficient distance to the direct solve {gap:.3e}"),
    })
}

fn gap_pair_indices(p: &WaveProblem) -> Result<(IndexPair, IndexPair), String> {
    Ok((
        p.field_index("g1").map_err(|e| e.to_string())?,
        p.field_index("g2").map_err(|e| e.to_string())?,
    ))
}

fn criterion_7() -> Result<Outcome, String> {
    let loaded = load("ex_thm41_check.json");
    let p = loaded.config.wave_problem(false).map_err(|e| e.to_string())?;
    let (i1, i2) = gap_pair_indices(&p)?;
    let b1 = p.field_operator("g1").map_err(|e| e.to_string())?;
    let b2 = p.field_operator("g2").map_err(|e| e.to_string())?;
    let check = gap_nondegeneracy_check(&p.a, &b1, &b2, GAP_SAMPLES, loaded.config.seed).map_err(|e| e.to_string())?;
    let eps = check.epsilon();
    Ok(Outcome {
        pass: i1.index == i2.index && i2.nullity == 0 && eps.is_some_and(|e| e >= GAP_MARGIN),
        detail: format!(
            "i(g1) = {}, i(g2) = {}, nu(g2) = {}, epsilon estimate {:?} over {GAP_SAMPLES} samples",
            i1.index, i2.index, i2.nullity, eps
        ),
    })
}

fn thm43_indices(p: &WaveProblem) -> Result<(IndexPair, IndexPair), String> {
    Ok((
        p.field_index("g0").map_err(|e| e.to_string())?,
        p.field_index("g3").map_err(|e| e.to_string())?,
    ))
}

fn criterion_8() -> Result<Outcome, String> {
    let start = Instant::now();
    let checked = load("ex_thm43_check.json");
    let p = checked.config.wave_problem(true).map_err(|e| e.to_string())?;
    let opts = checked.config.check_options(checked.config.seed);
    let report = &p
        .check_hypotheses(&[Condition::F4plus], &opts)
        .map_err(|e| e.to_string())?[0];
    let nu0 = match report.evidence.get("index_g0") {
        Some(Evidence::Index(pair)) => pair.nullity,
        _ => return Err("f4plus report lacks index_g0".into()),
    };

    let loaded = load("ex_thm43_solve.json");
    let cfg = &loaded.config;
    let solver = cfg.wave_problem(cfg.force).map_err(|e| e.to_string())?;
    let sol = solve_wave(&solver, Method::ReduceDirect, &cfg.solve_options(cfg.seed, cfg.force))
        .map_err(|e| e.to_string())?;
    let good: Vec<DVector<f64>> = sol
        .solutions
        .iter()
        .filter(|s| s.norm > NONTRIVIAL_NORM && s.residual <= SOLUTION_RESIDUAL)
        .map(|s| s.point.z_vector())
        .collect();
    let mut distinct: Vec<&DVector<f64>> = Vec::new();
    for z in &good {
        if distinct.iter().all(|d| (*d - z).norm() > DISTINCT_TOL) {
            distinct.push(z);
        }
    }
    let elapsed = start.elapsed();
    Ok(Outcome {
        pass: report.holds && nu0 == 0 && distinct.len() >= 2 && elapsed < RUNTIME_MULTIPLICITY,
        detail: format!(
            "f4plus holds = {}, nu(g0) = {nu0}, {} distinct nontrivial certified solutions of {} found, {elapsed:.2?}",
            report.holds,
            distinct.len(),
            sol.solutions.len()
        ),
    })
}

fn criterion_9() -> Result<Outcome, String> {
    let mut pass = true;
    let mut details = Vec::new();
    for name in ["ex_thm42_minus_regularized.json", "ex_thm42_plus_regularized.json"] {
        let loaded = load(name);
        let cfg = &loaded.config;
        let p = cfg.wave_problem(false).map_err(|e| e.to_string())?;
        let sol = solve_wave(&p, Method::Regularized, &cfg.solve_options(cfg.seed, false)).map_err(|e| e.to_string())?;
        let path = sol.regularization.as_ref().ok_or("no regularization path")?;
        let eps: Vec<f64> = path.steps.iter().map(|s| s.eps).collect();
        let decreasing = path.cauchy.windows(2).all(|w| w[1] < w[0]);
        let residual = sol.solutions[0].residual;
        let ok = eps == [1e-1, 1e-2, 1e-3, 1e-4] && decreasing && residual <= LIMIT_RESIDUAL;
        pass &= ok;
        details.push(format!(
            "{}: distances [{}], limit residual {residual:.3e}",
            p.nonlinearity.name,
            path.cauchy.iter().map(|d| format!("{d:.3e}")).collect::<Vec<_>>().join(", ")
        ));
    }
    Ok(Outcome {
        pass,
        detail: details.join("; "),
    })
}

fn criterion_10() -> Result<Outcome, String> {
    let mut changes = Vec::new();
    let coarse = problem("ex_thm41_check.json", false)?;
    let fine = problem_at("ex_thm41_check.json", REFINED_MODES, false)?;
    let (c1, c2) = gap_pair_indices(&coarse)?;
    let (f1, f2) = gap_pair_indices(&fine)?;
    let coarse43 = problem("ex_thm43_check.json", true)?;
    let fine43 = problem_at("ex_thm43_check.json", REFINED_MODES, true)?;
    let (c0, c3) = thm43_indices(&coarse43)?;
    let (f0, f3) = thm43_indices(&fine43)?;
    for (label, a, b) in [("g1", c1, f1), ("g2", c2, f2), ("g0", c0, f0), ("g3", c3, f3)] {
        if (a.index, a.nullity) != (b.index, b.nullity) {
            changes.push(format!(
                "{label}: ({}, {}) -> ({}, {})",
                a.index, a.nullity, b.index, b.nullity
            ));
        }
    }
    Ok(Outcome {
        pass: changes.is_empty(),
        detail: if changes.is_empty() {
            format!("(index, nullity) of g1, g2, g0, g3 unchanged from J=K=8 to J=K={REFINED_MODES}")
        } else {
            changes.join(", ")
        },
    })
}

fn main() {
    let criteria: [(&str, Check); 10] = [
        ("flow equals relative Morse index", criterion_1),
        ("projection index antisymmetry", criterion_2),
        ("flow additivity at t = 0.37", criterion_3),
        ("contraction constants of the fixed point", criterion_4),
        ("reduced gradient matches finite differences", criterion_5),
        ("linear oracle equivalence", criterion_6),
        ("gap nondegeneracy margin", criterion_7),
        ("two nontrivial solutions for ex_thm43", criterion_8),
        ("regularization path is Cauchy", criterion_9),
        ("truncation stability of indices", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = check().unwrap_or_else(|e| Outcome {
            pass: false,
            detail: format!("error: {e}"),
        });
        if !outcome.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {} {name}: {}",
            i + 1,
            if outcome.pass { "PASS" } else { "FAIL" },
            outcome.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
