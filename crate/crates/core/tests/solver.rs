use perheat::geometry::BoundaryMap;
use perheat::neumann::{epsilon_estimate, series_solve, NeumannOperators, NormKind, SeriesConfig};
use perheat::potentials::{DensityGrid, OperatorKind};
use perheat::sensitivity::{
    fd_operator_derivative, fd_solution_derivative, linearity_check, vq_derivative_action, SolutionDirection,
    DEFAULT_STEPS,
};
use perheat::transmission::{
    manufactured_space_ladder, ProblemSetup, SmoothDensity, TransmissionData, TransmissionSystem,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn smooth_pair(seed: u64, t_end: f64) -> (SmoothDensity, SmoothDensity) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (SmoothDensity::random(&mut rng, 1, t_end), SmoothDensity::random(&mut rng, 2, t_end))
}

fn manufactured(sys: &TransmissionSystem, seed: u64, lp: f64, lm: f64) -> (TransmissionData, DensityGrid, DensityGrid) {
    let (a, b) = smooth_pair(seed, sys.tg.t_end);
    let mp = a.sample(&sys.tg, &sys.grid.s);
    let mm = b.sample(&sys.tg, &sys.grid.s);
    (sys.manufactured(&mp, &mm, lp, lm).unwrap(), mp, mm)
}

#[test]
fn zero_data_gives_zero_densities() {
    let sys = ProblemSetup::desk().system(16, 4).unwrap();
    let z = DensityGrid::zeros(4, 16);
    let data = TransmissionData { lambda_plus: 1.0, lambda_minus: 3.0, f: z.clone(), g: z };
    for sol in [sys.solve_full(&data).unwrap(), sys.solve_reduced(&data).unwrap()] {
        assert_eq!(sol.rho_plus.max_abs(), 0.0);
        assert_eq!(sol.rho_minus.max_abs(), 0.0);
    }
}

#[test]
fn manufactured_round_trip_recovers_densities() {
    let sys = ProblemSetup::desk().system(32, 8).unwrap();
    let (data, mp, mm) = manufactured(&sys, 11, 1.0, 3.0);
    let sol = sys.solve_full(&data).unwrap();
    assert!(sol.rho_plus.max_abs_diff(&mp) < 1e-10);
    assert!(sol.rho_minus.max_abs_diff(&mm) < 1e-10);
    let res = sys.residuals(&sol, &data).unwrap();
    assert!(res.trace_max < 1e-12 && res.flux_max < 1e-12, "{res:?}");
}

#[test]
fn space_ladder_converges_at_least_quadratically() {
    let setup = ProblemSetup::desk();
    let (a, b) = smooth_pair(5, setup.t_end);
    let rows = manufactured_space_ladder(&setup, &[32, 64], 8, (&a, &b), (1.0, 3.0)).unwrap();
    assert!(rows[1].error < rows[0].error);
    assert!(rows[1].order.unwrap() >= 2.0, "{rows:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn reduced_route_matches_full(lp in 0.2f64..5.0, lm in 0.2f64..5.0, seed in 0u64..100) {
        let sys = ProblemSetup::desk().system(16, 4).unwrap();
        let (data, _, _) = manufactured(&sys, seed, lp, lm);
        let full = sys.solve_full(&data).unwrap();
        let red = sys.solve_reduced(&data).unwrap();
        let scale = full.rho_plus.max_abs().max(full.rho_minus.max_abs());
        prop_assert!(full.rho_plus.max_abs_diff(&red.rho_plus) <= 1e-9 * scale);
        prop_assert!(full.rho_minus.max_abs_diff(&red.rho_minus) <= 1e-9 * scale);
    }

    #[test]
    fn solution_is_linear_in_data(alpha in -3.0f64..3.0, beta in -3.0f64..3.0, seed in 0u64..100) {
        let sys = ProblemSetup::desk().system(16, 4).unwrap();
        let (d1, _, _) = manufactured(&sys, seed, 1.0, 2.0);
        let (d2, _, _) = manufactured(&sys, seed + 1, 1.0, 2.0);
        prop_assert!(linearity_check(&sys, &d1, &d2, alpha, beta).unwrap() < 1e-10);
    }

    #[test]
    fn gamma_probe_residual_is_small(gamma in -1.0f64..=1.0, seed in 0u64..100) {
        let sys = ProblemSetup::desk().system(16, 4).unwrap();
        let (a, _) = smooth_pair(seed, sys.tg.t_end);
        let rhs = a.sample(&sys.tg, &sys.grid.s);
        let p = sys.gamma_probe(gamma, &rhs).unwrap();
        prop_assert!(p.residual < 1e-10);
    }
}

#[test]
fn epsilon_is_stable_under_refinement() {
    let setup = ProblemSetup::desk();
    let coarse = epsilon_estimate(&setup.system(32, 16).unwrap(), 1.0, 1.0, NormKind::Inf).unwrap();
    let fine_n = epsilon_estimate(&setup.system(64, 16).unwrap(), 1.0, 1.0, NormKind::Inf).unwrap();
    let fine_m = epsilon_estimate(&setup.system(32, 32).unwrap(), 1.0, 1.0, NormKind::Inf).unwrap();
    assert!((fine_n / coarse - 1.0).abs() < 0.05, "{coarse} {fine_n}");
    assert!((fine_m / coarse - 1.0).abs() < 0.05, "{coarse} {fine_m}");
}

#[test]
fn series_converges_to_direct_solve_inside_the_radius() {
    let sys = ProblemSetup::desk().system(32, 8).unwrap();
    let eps = epsilon_estimate(&sys, 1.0, 1.0, NormKind::Inf).unwrap();
    // λ_c = −ε/2 with λ⁺ = 1
    let lc = -0.5 * eps.min(1.0);
    let lm = (1.0 + lc) / (1.0 - lc);
    let (data, _, _) = manufactured(&sys, 3, 1.0, lm);
    let sc = SeriesConfig {
        lambda0_plus: 1.0,
        lambda0_minus: 1.0,
        lambda_plus: 1.0,
        lambda_minus: lm,
        terms: 12,
        norm: NormKind::Inf,
    };
    let r = series_solve(&sys, &data, &sc).unwrap();
    assert!(r.within_radius);
    let direct = sys.solve_full(&data).unwrap().rho_minus;
    let errs = r.partial_errors(&direct);
    assert!(errs[12] < 1e-6 * direct.max_abs(), "{errs:?}");
    for w in errs.windows(2) {
        assert!(w[1] < w[0]);
    }
}

#[test]
fn kj_matches_repeated_resolvent() {
    let sys = ProblemSetup::desk().system(16, 4).unwrap();
    let ops = NeumannOperators::new(sys.wstar.clone(), 1.0, 2.0).unwrap();
    let (a, _) = smooth_pair(9, sys.tg.t_end);
    let rho = a.sample(&sys.tg, &sys.grid.s);
    let rw = ops.resolvent_wstar().unwrap();
    let expected = rw.apply(&rw.apply(&rw.apply(&rho).unwrap()).unwrap()).unwrap().scale(8.0);
    assert!(ops.apply_kj(3, &rho).unwrap().max_abs_diff(&expected) < 1e-12 * expected.max_abs());
    assert!(ops.factorization_check(0.4, &[rho]).unwrap() < 1e-12);
}

#[test]
fn translation_leaves_operators_unchanged() {
    let setup = ProblemSetup::desk();
    let (n, m) = (32, 4);
    let tg = setup.time_grid(m).unwrap();
    let grid = setup.grid(n).unwrap();
    let mu = DensityGrid::sample(&tg, &grid.s, |t, s| (t / setup.t_end) * (2.0 + s.cos()));
    let dir = BoundaryMap::translation([0.3, -0.2]);
    let fd = fd_operator_derivative(&setup, &dir, OperatorKind::Vq, &mu, m, &DEFAULT_STEPS).unwrap();
    assert!(fd.quotient_norms.iter().all(|&q| q < 1e-6), "{:?}", fd.quotient_norms);
    let an = vq_derivative_action(&setup, &dir, &mu, m).unwrap();
    assert!(an.max_abs() < 1e-10);
}

#[test]
fn dilation_derivative_matches_extrapolated_differences() {
    let setup = ProblemSetup::desk();
    let (n, m) = (32, 4);
    let tg = setup.time_grid(m).unwrap();
    let grid = setup.grid(n).unwrap();
    let mu = DensityGrid::sample(&tg, &grid.s, |t, s| (t / setup.t_end) * (2.0 + s.cos()));
    let dir = BoundaryMap::dilation(&setup.shape);
    let h = [2e-2, 1e-2];
    let fd = fd_operator_derivative(&setup, &dir, OperatorKind::Vq, &mu, m, &h).unwrap();
    let an = vq_derivative_action(&setup, &dir, &mu, m).unwrap();
    let rich: Vec<f64> = fd.quotients[1]
        .iter()
        .zip(&fd.quotients[0])
        .map(|(fine, coarse)| (4.0 * fine - coarse) / 3.0)
        .collect();
    let raw_err = fd.quotients[1].iter().zip(an.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let rich_err = rich.iter().zip(an.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(rich_err < 1e-3 * an.max_abs(), "{rich_err} {}", an.max_abs());
    assert!(rich_err < raw_err);
}

#[test]
fn probes_show_second_order() {
    let setup = ProblemSetup::desk();
    let (n, m) = (32, 4);
    let sys = setup.system(n, m).unwrap();
    let tg = sys.tg;
    let mu = DensityGrid::sample(&tg, &sys.grid.s, |t, s| (t / setup.t_end) * (2.0 + s.cos()));
    let op = fd_operator_derivative(&setup, &BoundaryMap::dilation(&setup.shape), OperatorKind::Vq, &mu, m, &DEFAULT_STEPS)
        .unwrap();
    assert!(op.pass, "{:?}", op.orders);
    assert!(op.orders.iter().flatten().count() > 0);

    let (data, _, _) = manufactured(&sys, 4, 1.0, 3.0);
    let targets = [(0.05, [0.5, 0.5]), (0.05, [0.05, 0.1])];
    let sol = fd_solution_derivative(&setup, &SolutionDirection::LambdaMinus, &data, &targets, &DEFAULT_STEPS).unwrap();
    assert!(sol.pass, "{:?}", sol.orders);
}
