use super::*;
use proptest::prelude::*;

fn sp() -> SolverParams {
    SolverParams::default()
}

fn max_of(name: &str) -> f64 {
    let np = catalog_problem(name, &ProblemParams::default()).unwrap();
    let sol = np.solve(&sp()).unwrap();
    assert!(sol.is_optimal(), "{name}: {:?}", sol.status);
    sol.objective()
}

#[test]
fn tsirelson_bounds() {
    let cases = [
        ("chsh", 2.0 * SQRT_2, 1e-7),
        ("bc3", 6.0 * (PI / 6.0).cos(), 1e-6),
        ("bc5", 10.0 * (PI / 10.0).cos(), 1e-6),
        ("modchsh", 1.0 + 2.0 * SQRT_2, 1e-6),
        ("t2", 2.0 * SQRT_2, 1e-6),
        ("t3", 4.0 * 3f64.sqrt(), 1e-6),
        ("i1", 1.0 + 6.0 * (PI / 6.0).cos(), 1e-6),
        ("i2", 2.0 + 4.0 * SQRT_2, 1e-6),
    ];
    for (name, want, tol) in cases {
        let got = max_of(name);
        assert!((got - want).abs() < tol, "{name}: {got} vs {want}");
    }
    let i3322 = max_of("i3322");
    assert!((0.25089 - 1e-4..=0.2515).contains(&i3322), "{i3322}");
}

#[test]
fn mermin_and_cglmp_reach_their_quantum_values() {
    assert!((max_of("mermin") - 1.0).abs() < 1e-6);
    // CGLMP for d = 3 exceeds its classical value 3
    assert!(max_of("cglmp") > 3.0 + 1e-3);
}

#[test]
fn reference_values_are_documented() {
    for e in catalog_entries() {
        let np = catalog_problem(e.name, &ProblemParams::default()).unwrap();
        assert_eq!(np.name.is_empty(), false);
    }
    let np = catalog_problem("bc7", &ProblemParams::default()).unwrap();
    assert!((np.reference.unwrap() - 14.0 * (PI / 14.0).cos()).abs() < 1e-12);
    assert_eq!(np.guess, Some(vec![0, 4]));
    assert_eq!(np.classical, Some(12.0));
}

#[test]
fn unknown_names_and_bad_parameters() {
    assert!(matches!(catalog_problem("nope", &ProblemParams::default()), Err(Error::UnknownProblem(_))));
    assert!(catalog_problem("chsh", &ProblemParams { p: 1.5, ..Default::default() }).is_err());
    assert!(catalog_problem("t13", &ProblemParams::default()).is_err());
    assert!(catalog_problem("bc1", &ProblemParams::default()).is_err());
    assert!(catalog_problem("t3c", &ProblemParams { c: 3.0, ..Default::default() }).is_err());
    let mut q = ProblemParams::default();
    assert!(q.set("h9", "0.1").is_err());
    q.set("n", "5").unwrap();
    assert_eq!(catalog_problem("bcn", &q).unwrap().name, "bc5");
}

#[test]
fn chsh_entropy_table() {
    let np = catalog_problem("chsh", &ProblemParams { p: 0.8, ..Default::default() }).unwrap();
    let m = certify_min_entropy(&np, None, None, &sp()).unwrap();
    assert!((m.h_global - 0.13510).abs() < 2e-3, "{}", m.h_global);
    assert!((m.h_local - 0.11362).abs() < 2e-3, "{}", m.h_local);
    assert_eq!(m.joint.len(), 4);
    assert_eq!(m.marginals.len(), 4);
}

#[test]
fn no_noise_budget_certifies_nothing() {
    let np = catalog_problem("chsh", &ProblemParams { p: 0.0, ..Default::default() }).unwrap();
    let m = certify_min_entropy(&np, None, None, &sp()).unwrap();
    assert!(m.h_global.abs() < 1e-8, "{}", m.h_global);
    assert!(m.h_local.abs() < 1e-8, "{}", m.h_local);
}

#[test]
fn entropy_grows_with_purity() {
    let h = |p: f64| {
        let np = catalog_problem("chsh", &ProblemParams { p, ..Default::default() }).unwrap();
        certify_min_entropy(&np, None, None, &sp()).unwrap()
    };
    let (a, b, c) = (h(0.8), h(0.9), h(0.95));
    assert!(a.h_global <= b.h_global && b.h_global <= c.h_global);
    assert!(a.h_local <= b.h_local && b.h_local <= c.h_local);
    assert!(a.h_local <= a.h_global + 1e-9);
}

#[test]
fn unreachable_bound_is_reported_as_infeasible() {
    let mut np = catalog_problem("chsh", &ProblemParams::default()).unwrap();
    np.certification = vec![SideConstraint::new(chsh(), Relation::Ge, 2.9)];
    let err = certify_min_entropy(&np, None, None, &sp()).unwrap_err();
    assert!(matches!(err, Error::CertificationInfeasible(_)), "{err}");
}

#[test]
fn guess_settings_are_checked() {
    let np = catalog_problem("chsh", &ProblemParams::default()).unwrap();
    assert!(certify_min_entropy(&np, Some(&[0, 2]), None, &sp()).is_err());
    let np = catalog_problem("i3322", &ProblemParams::default()).unwrap();
    assert!(certify_min_entropy(&np, None, None, &sp()).is_err());
}

fn correlator_functional(c: &[[f64; 2]; 2]) -> LinearFunctional {
    let mut f = LinearFunctional::new();
    for x in 0..2 {
        for y in 0..2 {
            if c[x][y] != 0.0 {
                f.add_correlator(x, y, c[x][y]);
            }
        }
    }
    f
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Relabeling Alice's outcomes at one setting flips the sign of that
    /// row of correlators without changing the optimum.
    #[test]
    fn outcome_relabeling_keeps_the_optimum(
        signs in proptest::collection::vec(prop_oneof![Just(-1.0), Just(0.0), Just(1.0)], 4),
        flip_x in 0usize..2,
        flip_y in 0usize..2,
    ) {
        let c = [[signs[0], signs[1]], [signs[2], signs[3]]];
        let mut d = c;
        for y in 0..2 {
            d[flip_x][y] = -d[flip_x][y];
        }
        for x in 0..2 {
            d[x][flip_y] = -d[x][flip_y];
        }
        let value = |c: &[[f64; 2]; 2]| {
            let mut np = NamedProblem::new("r", Scenario::bipartite(2, 2, 2, 2).unwrap(), correlator_functional(c));
            np.level = LevelSpec::parse("1+AB").unwrap();
            np.solve(&sp()).unwrap().objective()
        };
        prop_assert!((value(&c) - value(&d)).abs() < 1e-6);
    }
}

#[test]
fn t3_given_chsh_is_capped_and_monotone() {
    let t = 4.0 * 3f64.sqrt();
    assert_eq!(t3_max_given_chsh(2.0, &sp()).unwrap(), t);
    let a = t3_max_given_chsh(2.55, &sp()).unwrap();
    let b = t3_max_given_chsh(2.75, &sp()).unwrap();
    assert!(a <= t + 1e-7 && b < a, "{a} {b}");
}

#[test]
fn hardy_realization_is_pinned() {
    let q = hardy_q();
    let target = 5f64.sqrt() - 2.0;
    let mut width = f64::INFINITY;
    for eps in [1e-4, 1e-6, 1e-8] {
        let h = [q - eps, eps, eps, eps];
        let hi = hardy_nu_bound(h, (0.0, 0.0), None, Goal::Max, &sp()).unwrap();
        let lo = hardy_nu_bound(h, (0.0, 0.0), None, Goal::Min, &sp()).unwrap();
        assert!(lo <= target && target <= hi, "{lo} {hi}");
        assert!(hi - lo < width, "{lo} {hi}");
        width = hi - lo;
    }
    assert!(width < 0.02, "{width}");
}

#[test]
fn hardy_maximizer_is_the_hardy_realization() {
    let target = 5f64.sqrt() - 2.0;
    for eps in [0.0, 1e-8] {
        let pt = hardy_maximizer(eps, None, &sp()).unwrap();
        assert!((pt.success - hardy_q()).abs() < 1e-4, "{eps}: {pt:?}");
        assert!((pt.p00_11 - target).abs() < 1e-4, "{eps}: {pt:?}");
    }
    assert!(hardy_maximizer(-1.0, None, &sp()).is_err());
}

#[test]
fn hardy_vacuous_bounds_saturate() {
    let w = (0.3, 0.6);
    let v = hardy_nu_bound([0.0, 1.0, 1.0, 1.0], w, None, Goal::Max, &sp()).unwrap();
    assert!((v - (1.0 - w.0)).abs() < 1e-6, "{v}");
    assert!(hardy_nu_bound([1.2, 0.0, 0.0, 0.0], w, None, Goal::Max, &sp()).is_err());
}

#[test]
fn hardy_beyond_quantum_is_infeasible() {
    let err = hardy_nu_bound([0.2, 0.0, 0.0, 0.0], (0.0, 0.0), None, Goal::Max, &sp()).unwrap_err();
    assert!(matches!(err, Error::CertificationInfeasible(_)), "{err}");
}

fn point(h: [f64; 4], g0: f64, g1: f64) -> GridPoint {
    GridPoint { h, gamma0: g0, gamma1: g1 }
}

#[test]
fn grid_lp_single_point() {
    let h = [0.1, 0.2, 0.3, 0.4];
    let v = guessing_grid_lp(&[point(h, 0.7, 0.6)], h, GuessMode::Plain, &sp()).unwrap();
    assert!((v - 0.7).abs() < 1e-6, "{v}");
}

#[test]
fn grid_lp_interpolates_between_bracketing_points() {
    let a = point([0.0, 0.0, 0.0, 0.0], 0.9, 0.5);
    let b = point([0.2, 0.0, 0.0, 0.0], 0.5, 0.6);
    let v = guessing_grid_lp(&[a, b], [0.05, 0.0, 0.0, 0.0], GuessMode::Plain, &sp()).unwrap();
    assert!((v - (0.75 * 0.9 + 0.25 * 0.6)).abs() < 1e-6, "{v}");
}

#[test]
fn grid_lp_dropping_rescales_halves() {
    let h = [0.1, 0.2, 0.3, 0.4];
    let v = guessing_grid_lp(&[point(h, 0.4, 0.3)], h, GuessMode::Dropping { p0: 0.5, p1: 0.25 }, &sp()).unwrap();
    assert!((v - 0.6).abs() < 1e-6, "{v}");
    assert!(guessing_grid_lp(&[point(h, 0.4, 0.3)], h, GuessMode::Dropping { p0: 0.0, p1: 1.0 }, &sp()).is_err());
}

#[test]
fn grid_lp_outside_hull_is_infeasible() {
    let a = point([0.0, 0.0, 0.0, 0.0], 0.9, 0.5);
    let b = point([0.2, 0.0, 0.0, 0.0], 0.5, 0.6);
    let err = guessing_grid_lp(&[a, b], [0.3, 0.0, 0.0, 0.0], GuessMode::Plain, &sp()).unwrap_err();
    assert!(matches!(err, Error::CertificationInfeasible(_)), "{err}");
    let err = guessing_grid_lp(&[a, b], [0.1, 0.1, 0.0, 0.0], GuessMode::Plain, &sp()).unwrap_err();
    assert!(matches!(err, Error::CertificationInfeasible(_)), "{err}");
    assert!(guessing_grid_lp(&[], [0.0; 4], GuessMode::Plain, &sp()).is_err());
}

#[test]
fn mermin_bias_vanishes_for_a_perfect_device() {
    let g = mermin_amplification_bound(0.0, 1.0, None, &sp()).unwrap();
    assert!(g <= 1e-4, "{g}");
}

#[test]
fn mermin_vacuous_region() {
    assert_eq!(mermin_amplification_bound(0.3, 0.9, None, &sp()).unwrap(), 0.5);
    assert_eq!(mermin_amplification_bound(0.0, 0.5, None, &sp()).unwrap(), 0.5);
    assert!(mermin_amplification_bound(0.5, 1.0, None, &sp()).is_err());
}

#[test]
fn mermin_bias_shrinks_with_success() {
    let grid = [0.96, 0.97, 0.98, 0.99, 1.0];
    let g: Vec<f64> = grid.iter().map(|&ps| mermin_amplification_bound(0.3, ps, None, &sp()).unwrap()).collect();
    for w in g.windows(2) {
        assert!(w[1] <= w[0] + 1e-6, "{g:?}");
    }
    assert!(g[0] == 0.5 && g[4] < 0.5, "{g:?}");
}

#[test]
fn lovasz_theta_small_graphs() {
    let k3 = lovasz_theta(3, &[(0, 1), (1, 2), (0, 2)], &sp()).unwrap();
    assert!((k3 - 1.0).abs() < 1e-6, "{k3}");
    let empty = lovasz_theta(4, &[], &sp()).unwrap();
    assert!((empty - 4.0).abs() < 1e-6, "{empty}");
    let c5 = lovasz_theta(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)], &sp()).unwrap();
    assert!((c5 - 5f64.sqrt()).abs() < 1e-6, "{c5}");
    assert!(lovasz_theta(0, &[], &sp()).is_err());
    assert!(lovasz_theta(3, &[(1, 1)], &sp()).is_err());
    assert!(lovasz_theta(3, &[(0, 3)], &sp()).is_err());
}

#[test]
fn lovasz_theta_cross_checks() {
    let edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)];
    let (theta, sol) = lovasz_theta_solution(5, &edges, &sp()).unwrap();
    // the free entries sit in y after the scale variable
    let mut a = nalgebra::DMatrix::from_element(5, 5, 1.0);
    for (k, &(i, j)) in edges.iter().enumerate() {
        a[(i, j)] = 1.0 + sol.y[k + 1];
        a[(j, i)] = 1.0 + sol.y[k + 1];
    }
    let lmax = a.symmetric_eigenvalues().max();
    assert!((lmax - theta).abs() < 1e-6, "{lmax} {theta}");
    // primal: Tr(J X) with Tr X = 1 and X zero on edges
    let x = sol.x.as_matrix();
    assert!((x.trace() - 1.0).abs() < 1e-7);
    assert!((x.sum() - theta).abs() < 1e-6);
}

fn t2_terms() -> Vec<(usize, usize, f64)> {
    vec![(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, -1.0)]
}

#[test]
fn symmetric_witness_reduces_to_correlator_form() {
    let full = WitnessSpec::symmetric_from_correlators(2, 2, &t2_terms()).unwrap();
    assert!(full.is_symmetric() && full.is_zero_summing());
    let reduced = reduce_symmetric_witness(&full, &[0, 1]).unwrap();
    assert_eq!(reduced, WitnessSpec::reduced_from_correlators(2, 2, &t2_terms()).unwrap());
    assert!(reduce_symmetric_witness(&reduced, &[0]).is_err());
    assert!(reduce_symmetric_witness(&full, &[0, 2]).is_err());
    assert!(reduce_symmetric_witness(&full, &[0]).is_err());
}

#[test]
fn bc3_witness_reduction() {
    let mut terms: Vec<(usize, usize, f64)> = (0..3).map(|k| (k, k, 1.0)).collect();
    terms.extend((0..2).map(|k| (k, k + 1, 1.0)));
    terms.push((2, 0, -1.0));
    let full = WitnessSpec::symmetric_from_correlators(3, 3, &terms).unwrap();
    let reduced = reduce_symmetric_witness(&full, &[0, 1, 2]).unwrap();
    // D = 2 P(0|x,y) − 1, so the reduced value is 2(sum of signed P(0)) − (sum of signs)
    let value = reduced.evaluate(|b, _, _| if b == 0 { 1.0 } else { 0.0 });
    assert!((value - 4.0).abs() < 1e-12);
    let value = reduced.evaluate(|_, _, _| 0.5);
    assert!(value.abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// On boxes respecting the pairing both witnesses agree.
    #[test]
    fn reduction_preserves_values_on_symmetric_boxes(p in proptest::collection::vec(0.0f64..1.0, 9)) {
        let mut terms: Vec<(usize, usize, f64)> = (0..3).map(|k| (k, k, 1.0)).collect();
        terms.extend((0..2).map(|k| (k, k + 1, 1.0)));
        terms.push((2, 0, -1.0));
        let full = WitnessSpec::symmetric_from_correlators(3, 3, &terms).unwrap();
        let (sx, sy) = full.settings();
        let half = sx / 2;
        let p0 = |x: usize, y: usize| p[(x * sy + y) % p.len()];
        let boxed = |b: usize, x: usize, y: usize| {
            let (x, flip) = if x < half { (x, false) } else { (x - half, true) };
            let q = p0(x, y);
            if (b == 0) != flip { q } else { 1.0 - q }
        };
        let reduced = reduce_symmetric_witness(&full, &(0..half).collect::<Vec<_>>()).unwrap();
        let lhs = full.evaluate(boxed);
        let rhs = reduced.evaluate(|b, x, y| boxed(b, x, y));
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }
}

#[test]
fn witness_validation() {
    assert!(WitnessSpec::new(1, 2, 2, vec![0.0; 4], 0.0).is_err());
    assert!(WitnessSpec::new(2, 2, 2, vec![0.0; 7], 0.0).is_err());
    let w = WitnessSpec::new(2, 2, 1, vec![1.0, 0.0, 0.0, 0.0], 0.0).unwrap();
    assert!(w.clone().with_pairing(vec![1, 0]).is_err());
    assert!(w.clone().with_pairing(vec![0, 1]).is_err());
    assert!(!w.is_zero_summing());
    assert!(zero_sum_relaxation(&w, 1.0, 0).is_err());
    assert!(WitnessSpec::reduced_from_correlators(2, 2, &[(2, 0, 1.0)]).is_err());
}

#[test]
fn dimension_witness_relaxation_of_t2() {
    let w = WitnessSpec::reduced_from_correlators(2, 2, &t2_terms()).unwrap();
    let np = dw_to_bell_relaxation(&w, 2).unwrap();
    let v = np.solve(&sp()).unwrap().objective();
    // the relaxation drops the dimension bound on Bob's side, so it reaches the algebraic maximum
    assert!(v >= 2.0 * SQRT_2 && (v - 4.0).abs() < 1e-6, "{v}");
    assert!(dw_to_bell_relaxation(&w, 1).is_err());

    let zero = WitnessSpec::reduced_from_correlators(2, 2, &[]).unwrap();
    let v = dw_to_bell_relaxation(&zero, 2).unwrap().solve(&sp()).unwrap().objective();
    assert!(v.abs() < 1e-6, "{v}");
}

#[test]
fn dimension_witness_guessing() {
    let w = WitnessSpec::reduced_from_correlators(2, 2, &t2_terms()).unwrap();
    let top = dw_certify(&w, 2, 4.0 - 1e-3, 0, 0, &sp()).unwrap();
    let loose = dw_certify(&w, 2, 2.0, 0, 0, &sp()).unwrap();
    assert!(top <= loose + 1e-6, "{top} {loose}");
    // deterministic strategies reach the relaxed maximum, so nothing is certified
    assert!(top > 1.0 - 1e-6, "{top}");
    assert!(dw_certify(&w, 2, 4.5, 0, 0, &sp()).is_err());
    assert!(dw_certify(&w, 2, 2.0, 2, 0, &sp()).is_err());
}

#[test]
fn zero_sum_guessing() {
    let full = WitnessSpec::symmetric_from_correlators(2, 2, &t2_terms()).unwrap();
    assert_eq!(zero_sum_certify(&full, 0.0, 0.0, 0, 0, &sp()).unwrap(), 1.0);
    let s = 2.0 * SQRT_2 - 1e-3;
    let zs = zero_sum_certify(&full, 1.0, s, 0, 0, &sp()).unwrap();
    assert!((0.5..=1.0).contains(&zs), "{zs}");
    let half = zero_sum_certify(&full, 0.5, s / 2.0 + 0.5 * 0.0, 0, 0, &sp()).unwrap();
    assert!(half >= 0.5 && half <= 1.0, "{half}");
    assert!(zero_sum_certify(&full, 1.5, s, 0, 0, &sp()).is_err());
}
