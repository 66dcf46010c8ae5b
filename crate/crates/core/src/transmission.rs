//! Space-periodic transmission problem via single-layer densities ρ⁺ (interior) and ρ⁻ (exterior).
//!
//! The discrete system is
//!
//! ```text
//!   Vq ρ⁺ − Vq ρ⁻                                  = f
//!   λ⁻(−½ρ⁻ + W*q ρ⁻) − λ⁺(½ρ⁺ + W*q ρ⁺)           = g
//! ```
//!
//! and the reduced route eliminates ρ⁺ = ρ⁻ + Vq⁻¹f.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{build_grid, locate, BoundaryGrid, BoundaryMap, ReferenceShape, Region, Thresholds};
use crate::kernel::{LatticeSumConfig, PeriodicityCell};
use crate::potentials::{
    assemble, eval_field, CausalOperator, DensityGrid, FieldKind, OperatorKind, TimeGrid,
};

/// λ_c = (λ⁻ − λ⁺)/(λ⁻ + λ⁺).
pub fn contrast(lambda_plus: f64, lambda_minus: f64) -> Result<f64> {
    check_lambda("lambda_plus", lambda_plus)?;
    check_lambda("lambda_minus", lambda_minus)?;
    Ok((lambda_minus - lambda_plus) / (lambda_minus + lambda_plus))
}

fn check_lambda(field: &'static str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(invalid(field, format!("must be positive, got {v}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionData {
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    /// Trace jump u⁺ − u⁻.
    pub f: DensityGrid,
    /// Flux jump λ⁻∂νu⁻ − λ⁺∂νu⁺.
    pub g: DensityGrid,
}

impl TransmissionData {
    pub fn validate(&self) -> Result<()> {
        check_lambda("lambda_plus", self.lambda_plus)?;
        check_lambda("lambda_minus", self.lambda_minus)?;
        if self.f.steps() != self.g.steps() || self.f.nodes() != self.g.nodes() {
            return Err(Error::ShapeMismatch {
                expected: format!("g of shape {}x{}", self.f.steps(), self.f.nodes()),
                got: format!("{}x{}", self.g.steps(), self.g.nodes()),
            });
        }
        Ok(())
    }

    /// α·self + β·other, keeping the λ of `self`.
    pub fn combine(&self, alpha: f64, other: &Self, beta: f64) -> Self {
        TransmissionData {
            lambda_plus: self.lambda_plus,
            lambda_minus: self.lambda_minus,
            f: self.f.scale(alpha).axpy(beta, &other.f),
            g: self.g.scale(alpha).axpy(beta, &other.g),
        }
    }
}

/// Boundary grid, time grid and the two assembled periodic operators.
#[derive(Debug, Clone)]
pub struct TransmissionSystem {
    pub grid: BoundaryGrid,
    pub tg: TimeGrid,
    pub cell: PeriodicityCell,
    pub cfg: LatticeSumConfig,
    pub vq: CausalOperator,
    pub wstar: CausalOperator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionSolution {
    pub rho_plus: DensityGrid,
    pub rho_minus: DensityGrid,
    /// Condition estimates of the factored slab-0 blocks.
    pub conditions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaProbe {
    pub rho: DensityGrid,
    pub condition: f64,
    /// ‖(I − 2γW*q)ρ − rhs‖∞ / max(‖rhs‖∞, 1).
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub trace_max: f64,
    pub trace_l2: f64,
    pub flux_max: f64,
    pub flux_l2: f64,
}

/// Side of the interface on which a field is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Plus,
    Minus,
}

impl TransmissionSystem {
    pub fn new(
        grid: &BoundaryGrid,
        tg: &TimeGrid,
        cell: &PeriodicityCell,
        cfg: &LatticeSumConfig,
    ) -> Result<Self> {
        let vq = assemble(OperatorKind::Vq, grid, tg, cell, cfg)?;
        let wstar = assemble(OperatorKind::WstarQ, grid, tg, cell, cfg)?;
        Ok(TransmissionSystem {
            grid: grid.clone(),
            tg: *tg,
            cell: cell.clone(),
            cfg: *cfg,
            vq,
            wstar,
        })
    }

    fn n(&self) -> usize {
        self.grid.len()
    }

    fn check_data(&self, data: &TransmissionData) -> Result<()> {
        data.validate()?;
        if data.f.steps() != self.tg.steps || data.f.nodes() != self.n() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} slabs x {} nodes", self.tg.steps, self.n()),
                got: format!("{} slabs x {} nodes", data.f.steps(), data.f.nodes()),
            });
        }
        Ok(())
    }

    /// ±½I + W*q.
    pub fn flux_operator(&self, half: f64) -> CausalOperator {
        CausalOperator::scaled_identity(self.n(), self.tg.steps, half)
            .axpy(1.0, &self.wstar)
            .expect("shapes agree")
    }

    /// I − 2γW*q.
    pub fn gamma_operator(&self, gamma: f64) -> CausalOperator {
        CausalOperator::identity(self.n(), self.tg.steps)
            .axpy(-2.0 * gamma, &self.wstar)
            .expect("shapes agree")
    }

    /// The coupled 2N×2N causal operator acting on [ρ⁺; ρ⁻].
    pub fn coupled_operator(&self, lambda_plus: f64, lambda_minus: f64) -> CausalOperator {
        let plus = self.flux_operator(0.5).scale(-lambda_plus);
        let minus = self.flux_operator(-0.5).scale(lambda_minus);
        CausalOperator::block2(&self.vq, &self.vq.scale(-1.0), &plus, &minus).expect("shapes agree")
    }

    /// Time-marching solve of the coupled system.
    pub fn solve_full(&self, data: &TransmissionData) -> Result<TransmissionSolution> {
        self.check_data(data)?;
        let op = self.coupled_operator(data.lambda_plus, data.lambda_minus);
        let fac = op.factor()?;
        let x = fac.solve(&DensityGrid::stack(&data.f, &data.g))?;
        let (rho_plus, rho_minus) = x.split();
        Ok(TransmissionSolution {
            rho_plus,
            rho_minus,
            conditions: vec![fac.condition()],
        })
    }

    /// ρ⁻₀ = −2/(λ⁻+λ⁺)·(λ⁺(½σ + W*q σ) + g).
    pub fn rho_minus_zero(
        &self,
        sigma: &DensityGrid,
        g: &DensityGrid,
        lambda_plus: f64,
        lambda_minus: f64,
    ) -> Result<DensityGrid> {
        let flux = self.flux_operator(0.5).apply(sigma)?;
        Ok(flux
            .scale(lambda_plus)
            .axpy(1.0, g)
            .scale(-2.0 / (lambda_minus + lambda_plus)))
    }

    /// σ = Vq⁻¹f, with the condition estimate of the first-kind block.
    pub fn first_kind(&self, f: &DensityGrid) -> Result<(DensityGrid, f64)> {
        let fac = self.vq.factor()?;
        Ok((fac.solve(f)?, fac.condition()))
    }

    /// σ = Vq⁻¹f, (I − 2λ_c W*q)ρ⁻ = ρ⁻₀, ρ⁺ = ρ⁻ + σ.
    pub fn solve_reduced(&self, data: &TransmissionData) -> Result<TransmissionSolution> {
        self.check_data(data)?;
        let lc = contrast(data.lambda_plus, data.lambda_minus)?;
        let (sigma, c_v) = self.first_kind(&data.f)?;
        let rho0 = self.rho_minus_zero(&sigma, &data.g, data.lambda_plus, data.lambda_minus)?;
        let (rho_minus, c_g) = if lc == 0.0 {
            (rho0, 1.0)
        } else {
            let op = self.gamma_operator(lc);
            let fac = op.factor()?;
            (fac.solve(&rho0)?, fac.condition())
        };
        let rho_plus = rho_minus.axpy(1.0, &sigma);
        Ok(TransmissionSolution {
            rho_plus,
            rho_minus,
            conditions: vec![c_v, c_g],
        })
    }

    /// Solve (I − 2γW*q)ρ = rhs for γ ∈ [−1, 1].
    pub fn gamma_probe(&self, gamma: f64, rhs: &DensityGrid) -> Result<GammaProbe> {
        if !(-1.0..=1.0).contains(&gamma) {
            return Err(invalid("gamma", format!("must lie in [-1, 1], got {gamma}")));
        }
        let op = self.gamma_operator(gamma);
        let fac = op.factor()?;
        let rho = fac.solve(rhs)?;
        let residual = op.apply(&rho)?.max_abs_diff(rhs) / rhs.max_abs().max(1.0);
        Ok(GammaProbe {
            rho,
            condition: fac.condition(),
            residual,
        })
    }

    /// Data whose exact discrete solution is (μ⁺, μ⁻).
    pub fn manufactured(
        &self,
        mu_plus: &DensityGrid,
        mu_minus: &DensityGrid,
        lambda_plus: f64,
        lambda_minus: f64,
    ) -> Result<TransmissionData> {
        check_lambda("lambda_plus", lambda_plus)?;
        check_lambda("lambda_minus", lambda_minus)?;
        let f = self.vq.apply(mu_plus)?.axpy(-1.0, &self.vq.apply(mu_minus)?);
        let g = self
            .flux_operator(-0.5)
            .apply(mu_minus)?
            .scale(lambda_minus)
            .axpy(-lambda_plus, &self.flux_operator(0.5).apply(mu_plus)?);
        Ok(TransmissionData {
            lambda_plus,
            lambda_minus,
            f,
            g,
        })
    }

    /// Interface residuals from the boundary traces and jump relations.
    pub fn residuals(&self, sol: &TransmissionSolution, data: &TransmissionData) -> Result<ResidualReport> {
        self.check_data(data)?;
        let trace = self
            .vq
            .apply(&sol.rho_plus)?
            .axpy(-1.0, &self.vq.apply(&sol.rho_minus)?)
            .axpy(-1.0, &data.f);
        let flux = self
            .flux_operator(-0.5)
            .apply(&sol.rho_minus)?
            .scale(data.lambda_minus)
            .axpy(-data.lambda_plus, &self.flux_operator(0.5).apply(&sol.rho_plus)?)
            .axpy(-1.0, &data.g);
        let dt = self.tg.dt();
        Ok(ResidualReport {
            trace_max: trace.max_abs(),
            trace_l2: trace.l2_norm(&self.grid.weights, dt),
            flux_max: flux.max_abs(),
            flux_l2: flux.l2_norm(&self.grid.weights, dt),
        })
    }

    /// u⁺ = v_q[ρ⁺] in S[φ] or u⁻ = v_q[ρ⁻] in S[φ]⁻ at (t, x) targets.
    pub fn eval_solution(
        &self,
        sol: &TransmissionSolution,
        side: Side,
        targets: &[(f64, [f64; 2])],
    ) -> Result<Vec<f64>> {
        let expected = match side {
            Side::Plus => Region::Interior,
            Side::Minus => Region::Exterior,
        };
        for (index, (_, x)) in targets.iter().enumerate() {
            match locate(x, &self.grid, &self.cell) {
                r if r == expected => {}
                Region::NearBoundary => {
                    return Err(Error::TooCloseToBoundary {
                        index,
                        distance: crate::geometry::boundary_distance(x, &self.grid, &self.cell),
                        radius: self.grid.safety_radius(),
                    })
                }
                _ => {
                    return Err(Error::RegionMismatch {
                        index,
                        expected: match side {
                            Side::Plus => "interior",
                            Side::Minus => "exterior",
                        },
                    })
                }
            }
        }
        let rho = match side {
            Side::Plus => &sol.rho_plus,
            Side::Minus => &sol.rho_minus,
        };
        eval_field(FieldKind::Single, &self.grid, &self.tg, &self.cell, &self.cfg, rho, targets)
    }
}

pub fn solve_full(
    grid: &BoundaryGrid,
    tg: &TimeGrid,
    cell: &PeriodicityCell,
    cfg: &LatticeSumConfig,
    data: &TransmissionData,
) -> Result<TransmissionSolution> {
    TransmissionSystem::new(grid, tg, cell, cfg)?.solve_full(data)
}

pub fn solve_reduced(
    grid: &BoundaryGrid,
    tg: &TimeGrid,
    cell: &PeriodicityCell,
    cfg: &LatticeSumConfig,
    data: &TransmissionData,
) -> Result<TransmissionSolution> {
    TransmissionSystem::new(grid, tg, cell, cfg)?.solve_reduced(data)
}

pub fn solve_gamma_probe(
    grid: &BoundaryGrid,
    tg: &TimeGrid,
    cell: &PeriodicityCell,
    cfg: &LatticeSumConfig,
    gamma: f64,
    rhs: &DensityGrid,
) -> Result<GammaProbe> {
    TransmissionSystem::new(grid, tg, cell, cfg)?.gamma_probe(gamma, rhs)
}

/// Everything except the resolution needed to build a `TransmissionSystem`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSetup {
    pub cell: PeriodicityCell,
    pub shape: ReferenceShape,
    pub map: BoundaryMap,
    pub t_end: f64,
    pub lattice: LatticeSumConfig,
    pub thresholds: Thresholds,
}

impl ProblemSetup {
    /// Unit cell, centred circle of radius 0.25, identity map, T = 0.05.
    pub fn desk() -> Self {
        let cell = PeriodicityCell::unit(2);
        let shape = ReferenceShape::centered(&cell, 0.25).expect("valid radius");
        ProblemSetup {
            map: BoundaryMap::identity(&shape),
            shape,
            cell,
            t_end: 0.05,
            lattice: LatticeSumConfig::default(),
            thresholds: Thresholds::default(),
        }
    }

    pub fn with_map(&self, map: BoundaryMap) -> Self {
        ProblemSetup {
            map,
            ..self.clone()
        }
    }

    pub fn grid(&self, n: usize) -> Result<BoundaryGrid> {
        build_grid(&self.shape, &self.map, &self.cell, n, &self.thresholds)
    }

    pub fn time_grid(&self, m: usize) -> Result<TimeGrid> {
        TimeGrid::new(self.t_end, m)
    }

    pub fn system(&self, n: usize, m: usize) -> Result<TransmissionSystem> {
        TransmissionSystem::new(&self.grid(n)?, &self.time_grid(m)?, &self.cell, &self.lattice)
    }
}

/// μ(t, s) = (t/T)^p · (a₀ + Σ_k a_k cos ks + b_k sin ks).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothDensity {
    pub time_power: i32,
    pub t_end: f64,
    pub a0: f64,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl SmoothDensity {
    /// Three random modes with amplitudes decaying like 1/k.
    pub fn random(rng: &mut impl Rng, time_power: i32, t_end: f64) -> Self {
        let mut draw = |k: usize| rng.gen_range(-0.3..0.3) / k as f64;
        let cos: Vec<f64> = (1..=3).map(&mut draw).collect();
        let sin: Vec<f64> = (1..=3).map(&mut draw).collect();
        SmoothDensity {
            time_power,
            t_end,
            a0: 1.0 + rng.gen_range(0.0..1.0),
            cos,
            sin,
        }
    }

    pub fn eval(&self, t: f64, s: f64) -> f64 {
        let mut v = self.a0;
        for (k, (c, d)) in self.cos.iter().zip(&self.sin).enumerate() {
            let kf = (k + 1) as f64;
            v += c * (kf * s).cos() + d * (kf * s).sin();
        }
        (t / self.t_end).powi(self.time_power) * v
    }

    pub fn sample(&self, tg: &TimeGrid, s: &[f64]) -> DensityGrid {
        DensityGrid::sample(tg, s, |t, si| self.eval(t, si))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub m: usize,
    pub error: f64,
    /// log(e_{r−1}/e_r)/log(refinement ratio); absent on the first rung.
    pub order: Option<f64>,
}

/// Least-squares slope of −log(error) against log(resolution).
pub fn fitted_order(rows: &[ConvergenceRow], resolution: impl Fn(&ConvergenceRow) -> f64) -> Option<f64> {
    if rows.len() < 2 {
        return None;
    }
    let xs: Vec<f64> = rows.iter().map(|r| resolution(r).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| -r.error.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Some(sxy / sxx)
}

fn with_orders(rungs: Vec<(usize, usize, f64)>) -> Vec<ConvergenceRow> {
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(rungs.len());
    for (r, &(n, m, error)) in rungs.iter().enumerate() {
        let order = (r > 0).then(|| {
            let (pn, pm, pe) = rungs[r - 1];
            let ratio = (n as f64 / pn as f64).max(m as f64 / pm as f64);
            (pe / error).ln() / ratio.ln()
        });
        rows.push(ConvergenceRow { n, m, error, order });
    }
    rows
}

fn check_ladder(values: &[usize], what: &'static str) -> Result<()> {
    if values.is_empty() {
        return Err(invalid(what, "ladder is empty"));
    }
    if values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid(what, "ladder must be strictly refining"));
    }
    Ok(())
}

/// Manufactured round trip: data from a reference discretization restricted
/// to each rung, max error of the recovered densities relative to max|μ±|.
///
/// Node counts must divide `n_ref` and slab counts must divide `m_ref`.
pub fn manufactured_ladder(
    setup: &ProblemSetup,
    rungs: &[(usize, usize)],
    reference: (usize, usize),
    mu_plus: &SmoothDensity,
    mu_minus: &SmoothDensity,
    lambda_plus: f64,
    lambda_minus: f64,
) -> Result<Vec<ConvergenceRow>> {
    if rungs.is_empty() {
        return Err(invalid("ladder", "ladder is empty"));
    }
    let (n_ref, m_ref) = reference;
    for &(n, m) in rungs {
        if n_ref % n != 0 || m_ref % m != 0 {
            return Err(invalid("ladder", format!("rung ({n}, {m}) does not divide the reference ({n_ref}, {m_ref})")));
        }
    }
    let reference = setup.system(n_ref, m_ref)?;
    let mp = mu_plus.sample(&reference.tg, &reference.grid.s);
    let mm = mu_minus.sample(&reference.tg, &reference.grid.s);
    let data = reference.manufactured(&mp, &mm, lambda_plus, lambda_minus)?;
    let scale = mp.max_abs().max(mm.max_abs());
    let mut out = Vec::with_capacity(rungs.len());
    for &(n, m) in rungs {
        let sys = setup.system(n, m)?;
        let restrict = |d: &DensityGrid| d.restrict_nodes(n_ref / n).restrict_slabs(m_ref / m);
        let coarse = TransmissionData {
            lambda_plus,
            lambda_minus,
            f: restrict(&data.f),
            g: restrict(&data.g),
        };
        let sol = sys.solve_full(&coarse)?;
        let error = sol
            .rho_plus
            .max_abs_diff(&restrict(&mp))
            .max(sol.rho_minus.max_abs_diff(&restrict(&mm)))
            / scale;
        out.push((n, m, error));
    }
    Ok(with_orders(out))
}

/// Space ladder at fixed M with a twice finer node reference.
pub fn manufactured_space_ladder(
    setup: &ProblemSetup,
    ns: &[usize],
    m: usize,
    mu: (&SmoothDensity, &SmoothDensity),
    lambdas: (f64, f64),
) -> Result<Vec<ConvergenceRow>> {
    check_ladder(ns, "N")?;
    let rungs: Vec<(usize, usize)> = ns.iter().map(|&n| (n, m)).collect();
    let n_ref = 2 * ns[ns.len() - 1];
    manufactured_ladder(setup, &rungs, (n_ref, m), mu.0, mu.1, lambdas.0, lambdas.1)
}

/// Time ladder at fixed N with an eight times finer slab reference.
pub fn manufactured_time_ladder(
    setup: &ProblemSetup,
    n: usize,
    ms: &[usize],
    mu: (&SmoothDensity, &SmoothDensity),
    lambdas: (f64, f64),
) -> Result<Vec<ConvergenceRow>> {
    check_ladder(ms, "M")?;
    let rungs: Vec<(usize, usize)> = ms.iter().map(|&m| (n, m)).collect();
    let m_ref = 8 * ms[ms.len() - 1];
    manufactured_ladder(setup, &rungs, (n, m_ref), mu.0, mu.1, lambdas.0, lambdas.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn system(n: usize, m: usize) -> TransmissionSystem {
        let cell = PeriodicityCell::unit(2);
        let shape = ReferenceShape::centered(&cell, 0.25).unwrap();
        let grid = build_grid(&shape, &BoundaryMap::identity(&shape), &cell, n, &Thresholds::default())
            .unwrap();
        let tg = TimeGrid::new(0.05, m).unwrap();
        TransmissionSystem::new(&grid, &tg, &cell, &LatticeSumConfig::default()).unwrap()
    }

    #[test]
    fn fitted_order_of_exact_power_law() {
        let rows: Vec<ConvergenceRow> = [16usize, 32, 64]
            .iter()
            .map(|&n| ConvergenceRow {
                n,
                m: 4,
                error: 3.0 * (n as f64).powi(-2),
                order: None,
            })
            .collect();
        let p = fitted_order(&rows, |r| r.n as f64).unwrap();
        assert!((p - 2.0).abs() < 1e-12);
        assert!(fitted_order(&rows[..1], |r| r.n as f64).is_none());
    }

    #[test]
    fn single_rung_ladder_has_no_order() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let setup = ProblemSetup::desk();
        let mp = SmoothDensity::random(&mut rng, 1, setup.t_end);
        let mm = SmoothDensity::random(&mut rng, 2, setup.t_end);
        let rows = manufactured_space_ladder(&setup, &[16], 4, (&mp, &mm), (1.0, 2.0)).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].order.is_none());
        assert!(rows[0].error < 1e-2);
        assert!(manufactured_space_ladder(&setup, &[32, 16], 4, (&mp, &mm), (1.0, 2.0)).is_err());
    }

    #[test]
    fn contrast_examples() {
        assert_eq!(contrast(1.0, 1.0).unwrap(), 0.0);
        assert_eq!(contrast(1.0, 3.0).unwrap(), 0.5);
        assert_eq!(contrast(2.0, 6.0).unwrap(), 0.5);
        assert!(contrast(-1.0, 1.0).is_err());
        assert!(contrast(1.0, 0.0).is_err());
    }

    #[test]
    fn zero_data_gives_zero_densities() {
        let sys = system(16, 4);
        let data = TransmissionData {
            lambda_plus: 1.0,
            lambda_minus: 2.0,
            f: DensityGrid::zeros(4, 16),
            g: DensityGrid::zeros(4, 16),
        };
        let sol = sys.solve_full(&data).unwrap();
        assert_eq!(sol.rho_plus.max_abs(), 0.0);
        assert_eq!(sol.rho_minus.max_abs(), 0.0);
        let rep = sys.residuals(&sol, &data).unwrap();
        assert_eq!(rep.trace_max + rep.flux_max, 0.0);
    }

    #[test]
    fn manufactured_round_trip_on_the_same_grid() {
        let sys = system(32, 8);
        let mu_p = DensityGrid::sample(&sys.tg, &sys.grid.s, |t, s| t * (1.0 + 0.3 * s.cos()));
        let mu_m = DensityGrid::sample(&sys.tg, &sys.grid.s, |t, s| t * t * (2.0 - s.sin()));
        let data = sys.manufactured(&mu_p, &mu_m, 1.0, 3.0).unwrap();
        let full = sys.solve_full(&data).unwrap();
        let reduced = sys.solve_reduced(&data).unwrap();
        let scale = mu_p.max_abs().max(mu_m.max_abs());
        assert!(full.rho_plus.max_abs_diff(&mu_p) < 1e-9 * scale);
        assert!(full.rho_minus.max_abs_diff(&mu_m) < 1e-9 * scale);
        assert!(reduced.rho_plus.max_abs_diff(&full.rho_plus) < 1e-9 * scale);
        let rep = sys.residuals(&full, &data).unwrap();
        assert!(rep.trace_max < 1e-12 && rep.flux_max < 1e-12, "{rep:?}");
    }

    #[test]
    fn equal_densities_cancel_the_trace_datum() {
        let sys = system(16, 4);
        let mu = DensityGrid::sample(&sys.tg, &sys.grid.s, |t, s| t * (2.0 + s.cos()));
        let data = sys.manufactured(&mu, &mu, 1.0, 2.0).unwrap();
        assert_eq!(data.f.max_abs(), 0.0);
        // g = −(λ⁺+λ⁻)/2·μ + (λ⁻ − λ⁺)W*q μ
        let wmu = sys.wstar.apply(&mu).unwrap();
        let expect = mu.scale(-1.5).axpy(1.0, &wmu);
        assert!(data.g.max_abs_diff(&expect) < 1e-14);
    }

    #[test]
    fn gamma_probe_basics() {
        let sys = system(16, 4);
        let rhs = DensityGrid::sample(&sys.tg, &sys.grid.s, |t, s| t * s.sin());
        let p = sys.gamma_probe(0.0, &rhs).unwrap();
        assert_eq!(p.rho, rhs);
        assert!(sys.gamma_probe(1.5, &rhs).is_err());
    }

    #[test]
    fn solution_fields_respect_regions() {
        let sys = system(32, 4);
        let mu = DensityGrid::sample(&sys.tg, &sys.grid.s, |t, s| t * (2.0 + s.cos()));
        let sol = TransmissionSolution {
            rho_plus: mu.clone(),
            rho_minus: mu,
            conditions: vec![],
        };
        let inner = [(0.0, [0.5, 0.5]), (0.04, [0.45, 0.55])];
        let v = sys.eval_solution(&sol, Side::Plus, &inner).unwrap();
        assert_eq!(v[0], 0.0);
        assert!(matches!(
            sys.eval_solution(&sol, Side::Minus, &inner),
            Err(Error::RegionMismatch { .. })
        ));
    }
}
