use std::collections::BTreeMap;

use nalgebra::DVector;
use wavemorse::fourier::{FourierBasis, TruncationSpec};
use wavemorse::operator::multiplication_operator_flat;
use wavemorse::reduction::{SearchOptions, Strategy};
use wavemorse::wave::{
    example_nonlinearity, forcing_shape, solve_wave, CheckOptions, Condition, Evidence,
    ExampleName, Method, SolveOptions, WaveOptions, WaveProblem,
};
use wavemorse::Error;

fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn spec(modes: usize) -> TruncationSpec {
    TruncationSpec::with_min_grid(1, 1, modes, modes).unwrap()
}

fn thm41(s: &TruncationSpec) -> WaveProblem {
    let nl = example_nonlinearity(
        ExampleName::ExThm41,
        &params(&[
            ("b", 0.7),
            ("alpha", -0.2),
            ("beta", 0.2),
            ("eps1", 0.05),
            ("eps2", 0.05),
            ("forcing", 0.05),
        ]),
        s,
    )
    .unwrap();
    WaveProblem::new(*s, nl, WaveOptions::default()).unwrap()
}

fn thm42(name: ExampleName, s: &TruncationSpec) -> WaveProblem {
    let nl = example_nonlinearity(
        name,
        &params(&[("b", 0.7), ("g_inf", 0.3), ("eps", 0.1), ("forcing", 0.02)]),
        s,
    )
    .unwrap();
    WaveProblem::new(*s, nl, WaveOptions::default()).unwrap()
}

#[test]
fn shifted_operator_is_exact() {
    let s = spec(4);
    let p = thm41(&s);
    let box_op = wavemorse::operator::wave_operator(&s).unwrap();
    assert_eq!(p.a.matrix, box_op.shifted(-0.7).matrix);
    let l = p.reduced.l();
    assert!(l > p.nonlinearity.lipschitz_claimed && l < 0.7);
}

#[test]
fn homotopy_and_direct_reduction_agree() {
    let s = spec(5);
    let p = thm41(&s);
    let opts = SolveOptions::default();
    let direct = solve_wave(&p, Method::ReduceDirect, &opts).unwrap();
    let homotopy = solve_wave(&p, Method::Homotopy, &opts).unwrap();
    assert_eq!(direct.solutions.len(), 1);
    let a = direct.solutions[0].point.z_vector();
    let b = homotopy.solutions[0].point.z_vector();
    assert!((a - b).norm() < 1e-8);
    assert!(homotopy.solutions[0].residual < 1e-10);
}

#[test]
fn residuals_transfer_from_the_reduced_gradient() {
    let s = spec(5);
    let p = thm41(&s);
    let opts = SolveOptions::default();
    let sol = solve_wave(&p, Method::ReduceDirect, &opts).unwrap();
    let bound = 10.0 * opts.search.grad_tol * (1.0 + p.a.norm());
    for c in &sol.solutions {
        assert!(c.residual <= bound, "{} > {bound}", c.residual);
        assert!(c.oversampled_residual.is_finite());
    }
}

/// The reduced functional of ex_thm43 tends to −∞ along H⁰, so ascent
/// reaches the two nontrivial maxima that Newton also finds.
#[test]
fn maximize_strategy_reaches_the_nontrivial_solutions() {
    let s = spec(4);
    let nl = example_nonlinearity(
        ExampleName::ExThm43,
        &params(&[("k", 2.0), ("g0", 0.8), ("eps1", 0.1), ("eps2", 0.01)]),
        &s,
    )
    .unwrap();
    let p = WaveProblem::new(s, nl, WaveOptions { l: None, force: true }).unwrap();
    let newton_opts = SolveOptions {
        force: true,
        ..SolveOptions::default()
    };
    let mut max_opts = newton_opts.clone();
    max_opts.search = SearchOptions {
        strategy: Strategy::Maximize,
        starts: 8,
        ..SearchOptions::default()
    };
    let newton = solve_wave(&p, Method::ReduceDirect, &newton_opts).unwrap();
    let max = solve_wave(&p, Method::ReduceDirect, &max_opts).unwrap();
    let nontrivial: Vec<_> = max.solutions.iter().filter(|c| c.norm > 1e-4).collect();
    assert_eq!(nontrivial.len(), 2);
    for c in nontrivial {
        assert!(c.residual <= 1e-8);
        let z = c.point.z_vector();
        assert!(newton
            .solutions
            .iter()
            .any(|d| (d.point.z_vector() - &z).norm() < 1e-6));
    }
}

#[test]
fn regularized_solutions_are_certified() {
    let s = spec(5);
    for name in [ExampleName::ExThm42Minus, ExampleName::ExThm42Plus] {
        let p = thm42(name, &s);
        let reports = p
            .check_hypotheses(&[Condition::F1, Condition::F2pm], &CheckOptions::default())
            .unwrap();
        assert!(reports.iter().all(|r| r.holds), "{reports:?}");
        let sol = solve_wave(&p, Method::Regularized, &SolveOptions::default()).unwrap();
        let path = sol.regularization.unwrap();
        assert_eq!(path.kernel_dim, 1);
        assert!((path.eta - 1.0).abs() < 1e-10);
        assert!(sol.solutions[0].residual <= 1e-6);
    }
}

#[test]
fn thm43_reports_nondegenerate_g0() {
    let s = spec(5);
    let nl = example_nonlinearity(
        ExampleName::ExThm43,
        &params(&[("k", 2.0), ("g0", 0.8), ("eps1", 0.1), ("eps2", 0.01)]),
        &s,
    )
    .unwrap();
    let p = WaveProblem::new(s, nl, WaveOptions { l: None, force: true }).unwrap();
    let reports = p
        .check_hypotheses(&[Condition::F3plus, Condition::F4plus], &CheckOptions::default())
        .unwrap();
    assert!(reports.iter().all(|r| r.holds));
    match &reports[1].evidence["index_g0"] {
        Evidence::Index(pair) => assert_eq!((pair.index, pair.nullity), (-1, 0)),
        other => panic!("unexpected {other:?}"),
    }
    assert!(matches!(&reports[1].evidence["g0_evaluation"], Evidence::Text(_)));
}

#[test]
fn thm43_without_force_is_refused() {
    let s = spec(4);
    let nl = example_nonlinearity(
        ExampleName::ExThm43,
        &params(&[("k", 2.0), ("g0", 0.8), ("eps1", 0.1), ("eps2", 0.01)]),
        &s,
    )
    .unwrap();
    assert!(matches!(
        WaveProblem::new(s, nl, WaveOptions::default()),
        Err(Error::HypothesisFailure { .. })
    ));
}

#[test]
fn forced_linear_problem_matches_a_direct_solve() {
    let s = spec(5);
    let nl = example_nonlinearity(
        ExampleName::Linear,
        &params(&[("b", 0.7), ("g_mean", -0.1), ("g_amp", 0.25), ("forcing", 0.4)]),
        &s,
    )
    .unwrap();
    let p = WaveProblem::new(s, nl, WaveOptions::default()).unwrap();
    let sol = solve_wave(&p, Method::ReduceDirect, &SolveOptions::default()).unwrap();
    assert_eq!(sol.solutions.len(), 1);

    let basis = FourierBasis::new(s).unwrap();
    let g = basis.sample(|x, t| -0.1 + 0.25 * x.cos() * t.cos());
    let m = multiplication_operator_flat(&basis, &g).unwrap();
    let rhs: DVector<f64> = basis.analyze(&basis.sample(|x, t| 0.4 * forcing_shape(x, t, 1.0)));
    let direct = p.a.minus(&m).unwrap().matrix.lu().solve(&rhs).unwrap();
    assert!((sol.solutions[0].point.z_vector() - direct).norm() < 1e-8);
}

#[test]
fn grid_rows_cover_the_grid() {
    let s = spec(3);
    let p = thm41(&s);
    let z = DVector::from_fn(s.mode_count(), |i, _| (i as f64 * 0.3).sin());
    let rows = p.grid_rows(&z);
    assert_eq!(rows.len(), s.grid_len());
    assert!(rows.iter().all(|(x, t, _)| (0.0..std::f64::consts::PI).contains(x) && *t >= 0.0));
}
