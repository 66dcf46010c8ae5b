//! Finite-difference witnesses of smooth dependence on the interface and on λ⁻,
//! and the exact linearity of the solve in (f, g).
//!
//! A probe only tests the action on one fixed density or target set in the
//! grid max-norm.

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::geometry::{locate, perturb, BoundaryMap, Region};
use crate::potentials::{assemble, CausalOperator, DensityGrid, OperatorKind};
use crate::transmission::{ProblemSetup, Side, TransmissionData, TransmissionSolution, TransmissionSystem};

pub const DEFAULT_STEPS: [f64; 4] = [1e-2, 5e-3, 2.5e-3, 1.25e-3];
pub const DEFAULT_ORDER_THRESHOLD: f64 = 1.8;

/// Central quotients Q(h_m) and their consecutive differences.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeReport {
    pub h: Vec<f64>,
    pub quotient_norms: Vec<f64>,
    /// ‖Q(h_m) − Q(h_{m−1})‖∞, absent for m = 0.
    pub second_differences: Vec<Option<f64>>,
    /// log of consecutive second-difference ratios over log(h_{m−1}/h_m).
    pub orders: Vec<Option<f64>>,
    /// Differences below this are rounding noise and excluded from orders.
    pub noise_floor: f64,
    pub order_threshold: f64,
    pub pass: bool,
    pub quotients: Vec<Vec<f64>>,
}

impl ProbeReport {
    /// `values` holds (F(φ + hψ), F(φ − hψ)) per step.
    pub fn from_values(h: &[f64], values: &[(Vec<f64>, Vec<f64>)], order_threshold: f64) -> Self {
        let mut scale: f64 = 0.0;
        let quotients: Vec<Vec<f64>> = h
            .iter()
            .zip(values)
            .map(|(&hm, (p, m))| {
                p.iter()
                    .zip(m)
                    .map(|(a, b)| {
                        scale = scale.max(a.abs()).max(b.abs());
                        (a - b) / (2.0 * hm)
                    })
                    .collect()
            })
            .collect();
        let h_min = h.iter().copied().fold(f64::INFINITY, f64::min);
        let noise_floor = 64.0 * f64::EPSILON * scale.max(f64::MIN_POSITIVE) / h_min;
        let quotient_norms = quotients.iter().map(|q| max_abs(q)).collect();
        let second_differences: Vec<Option<f64>> = (0..h.len())
            .map(|m| {
                (m > 0).then(|| {
                    quotients[m]
                        .iter()
                        .zip(&quotients[m - 1])
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max)
                })
            })
            .collect();
        let orders: Vec<Option<f64>> = (0..h.len())
            .map(|m| {
                if m < 2 {
                    return None;
                }
                let (prev, cur) = (second_differences[m - 1]?, second_differences[m]?);
                if prev <= 10.0 * noise_floor || cur <= 10.0 * noise_floor {
                    return None;
                }
                Some((prev / cur).ln() / (h[m - 1] / h[m]).ln())
            })
            .collect();
        let pass = orders.iter().flatten().all(|&p| p >= order_threshold);
        ProbeReport {
            h: h.to_vec(),
            quotient_norms,
            second_differences,
            orders,
            noise_floor,
            order_threshold,
            pass,
            quotients,
        }
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

fn check_steps(h: &[f64]) -> Result<()> {
    if h.is_empty() {
        return Err(invalid("h", "step list is empty"));
    }
    if h.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
        return Err(invalid("h", "steps must be positive"));
    }
    if h.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid("h", "steps must be strictly decreasing"));
    }
    Ok(())
}

/// Op(φ)μ on the curve `map`.
fn operator_action(
    setup: &ProblemSetup,
    map: &BoundaryMap,
    kind: OperatorKind,
    mu: &DensityGrid,
    n: usize,
    m: usize,
) -> Result<Vec<f64>> {
    let grid = setup.with_map(map.clone()).grid(n)?;
    let tg = setup.time_grid(m)?;
    let op = assemble(kind, &grid, &tg, &setup.cell, &setup.lattice)?;
    Ok(op.apply(mu)?.values().to_vec())
}

/// Central quotients of φ ↦ Op(φ)μ along ψ.
pub fn fd_operator_derivative(
    setup: &ProblemSetup,
    dir: &BoundaryMap,
    kind: OperatorKind,
    mu: &DensityGrid,
    m: usize,
    h: &[f64],
) -> Result<ProbeReport> {
    check_steps(h)?;
    let n = mu.nodes();
    let values = h
        .iter()
        .map(|&hm| {
            let plus = perturb(&setup.map, dir, hm, &setup.shape, &setup.cell, n, &setup.thresholds)?;
            let minus = perturb(&setup.map, dir, -hm, &setup.shape, &setup.cell, n, &setup.thresholds)?;
            Ok((
                operator_action(setup, &plus, kind, mu, n, m)?,
                operator_action(setup, &minus, kind, mu, n, m)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProbeReport::from_values(h, &values, DEFAULT_ORDER_THRESHOLD))
}

/// Chain-rule derivative of φ ↦ Vq[φ]μ along ψ.
pub fn vq_derivative_action(
    setup: &ProblemSetup,
    dir: &BoundaryMap,
    mu: &DensityGrid,
    m: usize,
) -> Result<DensityGrid> {
    let grid = setup.grid(mu.nodes())?;
    let tg = setup.time_grid(m)?;
    let op: CausalOperator = crate::potentials::assemble_vq_derivative(&grid, dir, &tg, &setup.cell, &setup.lattice)?;
    op.apply(mu)
}

/// Direction of a solution probe.
#[derive(Debug, Clone, PartialEq)]
pub enum SolutionDirection {
    Shape(BoundaryMap),
    LambdaMinus,
}

/// u⁺ at interior targets and u⁻ at exterior targets.
fn target_values(sys: &TransmissionSystem, sol: &TransmissionSolution, targets: &[(f64, [f64; 2])], sides: &[Side]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; targets.len()];
    for side in [Side::Plus, Side::Minus] {
        let idx: Vec<usize> = (0..targets.len()).filter(|&i| sides[i] == side).collect();
        if idx.is_empty() {
            continue;
        }
        let sub: Vec<(f64, [f64; 2])> = idx.iter().map(|&i| targets[i]).collect();
        let vals = sys.eval_solution(sol, side, &sub)?;
        for (&i, v) in idx.iter().zip(vals) {
            out[i] = v;
        }
    }
    Ok(out)
}

/// Central quotients of the target values of u± along a shape or λ⁻ direction.
///
/// f and g are held fixed as functions of the reference parameter.
pub fn fd_solution_derivative(
    setup: &ProblemSetup,
    dir: &SolutionDirection,
    data: &TransmissionData,
    targets: &[(f64, [f64; 2])],
    h: &[f64],
) -> Result<ProbeReport> {
    check_steps(h)?;
    data.validate()?;
    let (m, n) = (data.f.steps(), data.f.nodes());
    let base = setup.grid(n)?;
    let sides = targets
        .iter()
        .enumerate()
        .map(|(index, (_, x))| match locate(x, &base, &setup.cell) {
            Region::Interior => Ok(Side::Plus),
            Region::Exterior => Ok(Side::Minus),
            Region::NearBoundary => Err(crate::Error::TooCloseToBoundary {
                index,
                distance: crate::geometry::boundary_distance(x, &base, &setup.cell),
                radius: base.safety_radius(),
            }),
        })
        .collect::<Result<Vec<_>>>()?;
    let eval = |s: &ProblemSetup, d: &TransmissionData| -> Result<Vec<f64>> {
        let sys = s.system(n, m)?;
        let sol = sys.solve_full(d)?;
        target_values(&sys, &sol, targets, &sides)
    };
    let values = h
        .iter()
        .map(|&hm| match dir {
            SolutionDirection::Shape(psi) => {
                let side = |sign: f64| -> Result<Vec<f64>> {
                    let map = perturb(&setup.map, psi, sign * hm, &setup.shape, &setup.cell, n, &setup.thresholds)?;
                    eval(&setup.with_map(map), data)
                };
                Ok((side(1.0)?, side(-1.0)?))
            }
            SolutionDirection::LambdaMinus => {
                let side = |sign: f64| -> Result<Vec<f64>> {
                    let d = TransmissionData {
                        lambda_minus: data.lambda_minus + sign * hm,
                        ..data.clone()
                    };
                    eval(setup, &d)
                };
                Ok((side(1.0)?, side(-1.0)?))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProbeReport::from_values(h, &values, DEFAULT_ORDER_THRESHOLD))
}

/// max|sol(αd₁ + βd₂) − (α sol(d₁) + β sol(d₂))| over ρ⁺ and ρ⁻.
pub fn linearity_check(
    sys: &TransmissionSystem,
    d1: &TransmissionData,
    d2: &TransmissionData,
    alpha: f64,
    beta: f64,
) -> Result<f64> {
    if d1.lambda_plus != d2.lambda_plus || d1.lambda_minus != d2.lambda_minus {
        return Err(invalid("lambda", "both data sets must share λ±"));
    }
    let s1 = sys.solve_full(d1)?;
    let s2 = sys.solve_full(d2)?;
    let s = sys.solve_full(&d1.combine(alpha, d2, beta))?;
    let plus = s1.rho_plus.scale(alpha).axpy(beta, &s2.rho_plus);
    let minus = s1.rho_minus.scale(alpha).axpy(beta, &s2.rho_minus);
    Ok(s.rho_plus.max_abs_diff(&plus).max(s.rho_minus.max_abs_diff(&minus)))
}
