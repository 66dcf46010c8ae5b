//! Acceptance criteria 1–10; one PASS/FAIL line each.

mod common;

use std::time::Instant;

use perheat::geometry::BoundaryMap;
use perheat::kernel::{free_kernel, periodic_kernel, remainder_kernel, LatticeSumConfig, PeriodicityCell};
use perheat::neumann::{lambda_minus_for_contrast, series_solve, NeumannOperators, NormKind, SeriesConfig};
use perheat::potentials::{jump_check, splitting_check, DensityGrid, JumpKind, OperatorKind};
use perheat::sensitivity::{
    fd_operator_derivative, fd_solution_derivative, linearity_check, vq_derivative_action, SolutionDirection,
    DEFAULT_STEPS,
};
use perheat::transmission::{
    fitted_order, manufactured_space_ladder, manufactured_time_ladder, ProblemSetup, SmoothDensity, TransmissionData,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn smooth_pair(seed: u64, t_end: f64) -> (SmoothDensity, SmoothDensity) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (SmoothDensity::random(&mut rng, 1, t_end), SmoothDensity::random(&mut rng, 2, t_end))
}

fn kernel_cloud() -> Outcome {
    let cell = PeriodicityCell::unit(2);
    let cfg = LatticeSumConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut period, mut split) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let t = 10f64.powf(rng.gen_range(-2.0..0.0));
        let x = [rng.gen_range(-0.49..0.49), rng.gen_range(-0.49..0.49)];
        let s = periodic_kernel(t, &x, &cell, &cfg).unwrap();
        for z0 in -3i32..=3 {
            for z1 in -3i32..=3 {
                let v = periodic_kernel(t, &[x[0] + z0 as f64, x[1] + z1 as f64], &cell, &cfg).unwrap();
                period = period.max((v - s).abs());
            }
        }
        let r = s - free_kernel(t, &x).unwrap() - remainder_kernel(t, &x, &cell, &cfg).unwrap();
        split = split.max(r.abs());
    }
    outcome(
        period < 1e-12 && split < 1e-12,
        format!("periodicity {period:.2e}, splitting {split:.2e} (< 1e-12)"),
    )
}

fn operator_splitting() -> Outcome {
    let setup = ProblemSetup::desk();
    let grid = setup.grid(64).unwrap();
    let tg = setup.time_grid(32).unwrap();
    let r = splitting_check(&grid, &tg, &setup.cell, &setup.lattice).unwrap();
    outcome(r.max_abs_discrepancy < 1e-10, format!("max discrepancy {:.2e} (< 1e-10)", r.max_abs_discrepancy))
}

fn jump_relations() -> Outcome {
    let setup = ProblemSetup::desk();
    let mut pass = true;
    let mut parts = Vec::new();
    for kind in [JumpKind::SingleNormalDerivative, JumpKind::DoubleTrace] {
        let mut errs = Vec::new();
        for (n, m) in [(32, 16), (64, 32), (128, 64)] {
            let grid = setup.grid(n).unwrap();
            let tg = setup.time_grid(m).unwrap();
            let rho = DensityGrid::sample(&tg, &grid.s, |t, s| t * (2.0 + s.cos()));
            errs.push(jump_check(kind, &grid, &tg, &setup.cell, &setup.lattice, &rho).unwrap().max_error);
        }
        let monotone = errs.windows(2).all(|w| w[1] < w[0]);
        pass &= monotone && errs[2] < 1e-2;
        parts.push(format!("{kind:?} {}", sci(&errs)));
    }
    outcome(pass, format!("{} (monotone, final < 1e-2)", parts.join("; ")))
}

fn manufactured_orders() -> Outcome {
    let setup = ProblemSetup::desk();
    let (a, b) = smooth_pair(2, setup.t_end);
    let space = manufactured_space_ladder(&setup, &[32, 64, 128], 16, (&a, &b), (1.0, 3.0)).unwrap();
    let time = manufactured_time_ladder(&setup, 32, &[16, 32, 64], (&a, &b), (1.0, 3.0)).unwrap();
    let p_space = fitted_order(&space, |r| r.n as f64).unwrap();
    let p_time = fitted_order(&time, |r| r.m as f64).unwrap();
    let space_local = space.iter().filter_map(|r| r.order).fold(f64::INFINITY, f64::min);
    let time_local: Vec<f64> = time.iter().filter_map(|r| r.order).collect();
    let pass = space_local >= 2.0 && p_time >= 1.0;
    let errs = |rows: &[perheat::transmission::ConvergenceRow]| rows.iter().map(|r| r.error).collect::<Vec<_>>();
    outcome(
        pass,
        format!(
            "space errors {} min local order {space_local:.2} (fit {p_space:.2}) >= 2; time errors {} local orders {:.3?} fitted order {p_time:.3} >= 1",
            sci(&errs(&space)),
            sci(&errs(&time)),
            time_local
        ),
    )
}

fn reduced_equivalence() -> Outcome {
    let sys = ProblemSetup::desk().system(64, 32).unwrap();
    let (a, b) = smooth_pair(3, sys.tg.t_end);
    let mp = a.sample(&sys.tg, &sys.grid.s);
    let mm = b.sample(&sys.tg, &sys.grid.s);
    let mut worst = 0.0f64;
    for (lp, lm) in [(1.0, 1.0), (1.0, 3.0), (2.5, 0.4)] {
        let data = sys.manufactured(&mp, &mm, lp, lm).unwrap();
        let full = sys.solve_full(&data).unwrap();
        let red = sys.solve_reduced(&data).unwrap();
        worst = worst
            .max(full.rho_plus.max_abs_diff(&red.rho_plus))
            .max(full.rho_minus.max_abs_diff(&red.rho_minus));
    }
    outcome(worst < 1e-8, format!("max |reduced - full| {worst:.2e} (< 1e-8)"))
}

fn gamma_invertibility() -> Outcome {
    let sys = ProblemSetup::desk().system(64, 32).unwrap();
    let (a, _) = smooth_pair(4, sys.tg.t_end);
    let rhs = a.sample(&sys.tg, &sys.grid.s);
    let mut worst = 0.0f64;
    for gamma in [-1.0, -0.9, 0.0, 0.9, 1.0] {
        match sys.gamma_probe(gamma, &rhs) {
            Ok(p) => worst = worst.max(p.residual),
            Err(e) => return outcome(false, format!("gamma {gamma}: {e}")),
        }
    }
    outcome(worst < 1e-10, format!("max residual {worst:.2e} (< 1e-10)"))
}

fn neumann_series() -> Outcome {
    let sys = ProblemSetup::desk().system(64, 32).unwrap();
    let (lp0, lm0) = (1.0, 3.0);
    let ops = NeumannOperators::new(sys.wstar.clone(), lp0, lm0).unwrap();
    let eps = ops.epsilon(NormKind::Inf).unwrap();
    let lc0 = ops.base_contrast();
    let delta = 0.5 * eps;
    let lc = if lc0 - delta > -1.0 { lc0 - delta } else { lc0 + delta };
    let lm = lambda_minus_for_contrast(1.0, lc).unwrap();
    let (a, b) = smooth_pair(5, sys.tg.t_end);
    let data = sys
        .manufactured(&a.sample(&sys.tg, &sys.grid.s), &b.sample(&sys.tg, &sys.grid.s), 1.0, lm)
        .unwrap();
    let sc = SeriesConfig {
        lambda0_plus: lp0,
        lambda0_minus: lm0,
        lambda_plus: 1.0,
        lambda_minus: lm,
        terms: 12,
        norm: NormKind::Inf,
    };
    let r = series_solve(&sys, &data, &sc).unwrap();
    let max_ratio = r.ratios()[..8].iter().copied().fold(0.0, f64::max);
    let direct = sys.solve_reduced(&data).unwrap().rho_minus;
    let errs = r.partial_errors(&direct);
    let slope = log_slope(&errs);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let probes: Vec<DensityGrid> = (0..3)
        .map(|_| {
            let v = (0..sys.tg.steps * sys.grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            DensityGrid::from_values(sys.tg.steps, sys.grid.len(), v).unwrap()
        })
        .collect();
    let fact = ops.factorization_check(lc, &probes).unwrap();
    let pass = max_ratio <= 0.55 && slope <= 0.6f64.ln() && fact < 1e-11;
    outcome(
        pass,
        format!(
            "eps {eps:.4}, max ratio j<=8 {max_ratio:.3} (<= 0.55), log-error slope {slope:.3} (<= {:.3}), factorization {fact:.2e} (< 1e-11)",
            0.6f64.ln()
        ),
    )
}

/// Least-squares slope of log(e_J) against J.
fn log_slope(errs: &[f64]) -> f64 {
    let n = errs.len() as f64;
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let mx = (n - 1.0) / 2.0;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (j, y) in ys.iter().enumerate() {
        sxy += (j as f64 - mx) * (y - my);
        sxx += (j as f64 - mx) * (j as f64 - mx);
    }
    sxy / sxx
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.2e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn linearity() -> Outcome {
    let sys = ProblemSetup::desk().system(64, 32).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut random = || {
        let v = (0..sys.tg.steps * sys.grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        DensityGrid::from_values(sys.tg.steps, sys.grid.len(), v).unwrap()
    };
    let d1 = TransmissionData { lambda_plus: 1.0, lambda_minus: 3.0, f: random(), g: random() };
    let d2 = TransmissionData { lambda_plus: 1.0, lambda_minus: 3.0, f: random(), g: random() };
    let worst = linearity_check(&sys, &d1, &d2, 0.7, -1.3)
        .unwrap()
        .max(linearity_check(&sys, &d2, &d1, 2.0, 0.5).unwrap());
    outcome(worst < 1e-10, format!("superposition discrepancy {worst:.2e} (< 1e-10)"))
}

fn smoothness() -> Outcome {
    let setup = ProblemSetup::desk();
    let (n, m) = (32, 8);
    let sys = setup.system(n, m).unwrap();
    let mu = DensityGrid::sample(&sys.tg, &sys.grid.s, |t, s| (t / setup.t_end) * (2.0 + s.cos()));
    let dil = BoundaryMap::dilation(&setup.shape);
    let op = fd_operator_derivative(&setup, &dil, OperatorKind::Vq, &mu, m, &DEFAULT_STEPS).unwrap();

    let (a, b) = smooth_pair(8, setup.t_end);
    let data = sys
        .manufactured(&a.sample(&sys.tg, &sys.grid.s), &b.sample(&sys.tg, &sys.grid.s), 1.0, 3.0)
        .unwrap();
    let interior = [(0.05, [0.5, 0.5]), (0.05, [0.55, 0.45]), (0.04, [0.45, 0.6])];
    let sol = fd_solution_derivative(&setup, &SolutionDirection::Shape(dil), &data, &interior, &DEFAULT_STEPS).unwrap();

    let tr = BoundaryMap::translation([0.3, -0.2]);
    let fd = fd_operator_derivative(&setup, &tr, OperatorKind::Vq, &mu, m, &DEFAULT_STEPS).unwrap();
    let analytic = vq_derivative_action(&setup, &tr, &mu, m).unwrap();
    let oracle = fd
        .quotients
        .iter()
        .map(|q| q.iter().zip(analytic.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max);

    let orders = |r: &perheat::sensitivity::ProbeReport| r.orders.iter().flatten().copied().collect::<Vec<_>>();
    let pass = op.pass && sol.pass && !orders(&op).is_empty() && !orders(&sol).is_empty() && oracle < 1e-6;
    outcome(
        pass,
        format!(
            "operator orders {:.3?}, interior u+ orders {:.3?} (>= 2 within threshold), translation oracle {oracle:.2e} (< 1e-6)",
            orders(&op),
            orders(&sol)
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let small = json!({"version": 1, "N": 16, "M": 4, "seed": 11, "targets": [[0.05, 0.5, 0.5], [0.05, 0.05, 0.05]],
        "f_spec": {"kind": "separable", "terms": [{"coef": 1.0, "t_power": 1, "trig": "cos", "k": 1}]},
        "g_spec": {"kind": "separable", "terms": [{"coef": 0.5, "t_power": 1, "trig": "one", "k": 0}]},
        "kernel": {"random": 50},
        "converge": {"pipeline": "manufactured", "ladder": [[16, 4], [32, 4]]}});
    let cfg = common::write_config(dir.path(), "c.json", &small);
    let pipelines = [
        ("kernel-eval", vec!["kernel.csv"]),
        ("split-check", vec!["split.csv"]),
        ("jump-check", vec!["jump.csv"]),
        ("solve", vec!["densities.csv", "field.csv", "residuals.csv"]),
        ("neumann", vec!["neumann.csv"]),
        ("shape-derivative", vec!["shape_derivative.csv"]),
        ("converge", vec!["converge.csv"]),
    ];
    let mut bad = Vec::new();
    for (cmd, files) in &pipelines {
        let (a, b) = (dir.path().join(format!("{cmd}-a")), dir.path().join(format!("{cmd}-b")));
        for out in [&a, &b] {
            let o = common::perheat(&[cmd], Some(&cfg), out);
            if !o.status.success() {
                bad.push(format!("{cmd} exited {:?}", o.status.code()));
            }
        }
        for f in files {
            if std::fs::read(a.join(f)).ok() != std::fs::read(b.join(f)).ok() || !a.join(f).exists() {
                bad.push(format!("{cmd}/{f} differs"));
            }
        }
    }
    outcome(
        bad.is_empty(),
        if bad.is_empty() {
            format!("{} pipelines byte-identical across two runs", pipelines.len())
        } else {
            bad.join(", ")
        },
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("kernel periodicity and splitting", kernel_cloud),
        ("operator splitting", operator_splitting),
        ("jump relations", jump_relations),
        ("manufactured round trip orders", manufactured_orders),
        ("reduced/full equivalence", reduced_equivalence),
        ("invertibility across gamma", gamma_invertibility),
        ("contrast series", neumann_series),
        ("linearity in (f, g)", linearity),
        ("smoothness witnesses", smoothness),
        ("CLI determinism", determinism),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("{tag} criterion {}: {name}: {} [{:.1?}]", k + 1, o.detail, start.elapsed());
        if !o.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
