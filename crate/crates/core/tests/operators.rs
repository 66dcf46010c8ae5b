use perheat::geometry::{locate, BoundaryMap, Region};
use perheat::potentials::{assemble, splitting_check, DensityGrid, OperatorKind};
use perheat::transmission::{contrast, ProblemSetup, SmoothDensity};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_density(seed: u64, m: usize, n: usize) -> DensityGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = (0..m * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    DensityGrid::from_values(m, n, v).unwrap()
}

#[test]
fn splitting_is_exact_on_the_desk_circle() {
    let setup = ProblemSetup::desk();
    let grid = setup.grid(32).unwrap();
    let tg = setup.time_grid(8).unwrap();
    let r = splitting_check(&grid, &tg, &setup.cell, &setup.lattice).unwrap();
    assert!(r.max_abs_discrepancy < 1e-12, "{}", r.max_abs_discrepancy);
    assert_eq!(r.rows.len(), 8 * 32);
}

#[test]
fn vq_of_constant_density_matches_line_integral_on_first_slab() {
    // block 0 on a constant density approximates ∫∫ S over the first slab, which
    // for a short slab is dominated by the local 1-D term √(Δt/π)
    let setup = ProblemSetup::desk();
    let tg = setup.time_grid(64).unwrap();
    let grid = setup.grid(64).unwrap();
    let op = assemble(OperatorKind::V, &grid, &tg, &setup.cell, &setup.lattice).unwrap();
    let ones = DensityGrid::sample(&tg, &grid.s, |_, _| 1.0);
    let v = op.apply(&ones).unwrap();
    let local = (tg.dt() / std::f64::consts::PI).sqrt();
    for i in 0..grid.len() {
        assert!((v.get(0, i) / local - 1.0).abs() < 0.05, "{}", v.get(0, i) / local);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn apply_is_linear_and_causal(seed in 0u64..1000, alpha in -2.0f64..2.0, k in 0usize..4) {
        let setup = ProblemSetup::desk();
        let (n, m) = (16, 4);
        let grid = setup.grid(n).unwrap();
        let tg = setup.time_grid(m).unwrap();
        for kind in [OperatorKind::Vq, OperatorKind::WstarQ, OperatorKind::Wq] {
            let op = assemble(kind, &grid, &tg, &setup.cell, &setup.lattice).unwrap();
            let a = random_density(seed, m, n);
            let b = random_density(seed + 7919, m, n);
            let lhs = op.apply(&a.axpy(alpha, &b)).unwrap();
            let rhs = op.apply(&a).unwrap().axpy(alpha, &op.apply(&b).unwrap());
            prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-12 * rhs.max_abs().max(1.0));

            // changing ρ on slabs ≥ k leaves slabs < k untouched
            let mut c = a.clone();
            for kk in k..m {
                for v in c.slab_mut(kk) {
                    *v += 1.0;
                }
            }
            let (ya, yc) = (op.apply(&a).unwrap(), op.apply(&c).unwrap());
            for kk in 0..k {
                prop_assert_eq!(ya.slab(kk), yc.slab(kk));
            }
        }
    }

    #[test]
    fn locate_is_consistent_under_translation(
        x in 0.0f64..1.0,
        y in 0.0f64..1.0,
        cx in -0.2f64..0.2,
        cy in -0.2f64..0.2,
        z0 in -3i32..3,
        z1 in -3i32..3,
    ) {
        let setup = ProblemSetup::desk();
        let grid = setup.grid(64).unwrap();
        let moved = setup
            .with_map(setup.map.axpy(&BoundaryMap::translation([cx, cy]), 1.0))
            .grid(64)
            .unwrap();
        let base = locate(&[x, y], &grid, &setup.cell);
        prop_assert_eq!(base, locate(&[x + cx, y + cy], &moved, &setup.cell));
        prop_assert_eq!(base, locate(&[x + z0 as f64, y + z1 as f64], &grid, &setup.cell));
        let r = ((x - 0.5).powi(2) + (y - 0.5).powi(2)).sqrt();
        match base {
            Region::Interior => prop_assert!(r < 0.25),
            Region::Exterior => prop_assert!(r > 0.25),
            Region::NearBoundary => prop_assert!((r - 0.25).abs() < 0.05),
        }
    }

    #[test]
    fn contrast_is_scale_invariant_and_bounded(lp in 1e-3f64..1e3, lm in 1e-3f64..1e3, s in 1e-3f64..1e3) {
        let c = contrast(lp, lm).unwrap();
        prop_assert!(c > -1.0 && c < 1.0);
        prop_assert!((contrast(s * lp, s * lm).unwrap() - c).abs() < 1e-13);
        prop_assert!((contrast(lm, lp).unwrap() + c).abs() < 1e-13);
    }
}

#[test]
fn contrast_rejects_non_positive() {
    assert!(contrast(0.0, 1.0).is_err());
    assert!(contrast(1.0, -1.0).is_err());
    assert!(contrast(f64::NAN, 1.0).is_err());
}

#[test]
fn smooth_density_samples_are_deterministic() {
    let setup = ProblemSetup::desk();
    let tg = setup.time_grid(4).unwrap();
    let grid = setup.grid(16).unwrap();
    let a = SmoothDensity::random(&mut ChaCha8Rng::seed_from_u64(3), 1, setup.t_end).sample(&tg, &grid.s);
    let b = SmoothDensity::random(&mut ChaCha8Rng::seed_from_u64(3), 1, setup.t_end).sample(&tg, &grid.s);
    assert_eq!(a, b);
}
