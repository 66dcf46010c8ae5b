//! Off-boundary evaluation of v_q, w_q and ν·∇v_q, and the jump-relation check.

use std::cell::OnceCell;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{cutoff_r2, CausalOperator, DensityGrid, OperatorKind, TimeGrid};
use crate::error::{Error, Result};
use crate::geometry::{boundary_distance, BoundaryGrid, TrigInterpolator};
use crate::kernel::slab::{grad_bound, grad_factor, single, single_bound};
use crate::kernel::{shell_count, ImageSet, LatticeSumConfig, PeriodicityCell};

/// Potential evaluated by `eval_field`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Single,
    Double,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum TargetKernel {
    Single,
    Double,
    /// dir·∇ₓ of the single layer.
    Gradient,
}

impl From<FieldKind> for TargetKernel {
    fn from(k: FieldKind) -> Self {
        match k {
            FieldKind::Single => TargetKernel::Single,
            FieldKind::Double => TargetKernel::Double,
        }
    }
}

/// Upsampling used for slabs whose Gaussian width is below the node spacing.
const EVAL_UPSAMPLE: usize = 8;
const JUMP_UPSAMPLE: usize = 32;

/// Shared state for evaluating periodic potentials at arbitrary points.
pub(crate) struct FieldContext<'a> {
    grid: &'a BoundaryGrid,
    cell: &'a PeriodicityCell,
    cfg: &'a LatticeSumConfig,
    upsample: usize,
    h2: f64,
    images: ImageSet,
    fine: OnceCell<(BoundaryGrid, TrigInterpolator)>,
}

impl<'a> FieldContext<'a> {
    pub(crate) fn new(
        grid: &'a BoundaryGrid,
        cell: &'a PeriodicityCell,
        cfg: &'a LatticeSumConfig,
        t_max: f64,
        upsample: usize,
    ) -> Result<Self> {
        cfg.validate()?;
        let reach: Vec<f64> = cell.q().iter().map(|q| q / 2.0).collect();
        let zs = shell_count(cell, &reach, cfg, |d| single_bound(d, t_max))?;
        let zg = shell_count(cell, &reach, cfg, |d| grad_bound(d, t_max))?;
        let h = grid.max_weight();
        Ok(FieldContext {
            grid,
            cell,
            cfg,
            upsample,
            h2: h * h,
            images: ImageSet::new(cell, zs.max(zg)),
            fine: OnceCell::new(),
        })
    }

    fn fine(&self) -> &(BoundaryGrid, TrigInterpolator) {
        self.fine.get_or_init(|| {
            let n = self.grid.len();
            (
                self.grid.resample(n * self.upsample),
                TrigInterpolator::upsample(n, self.upsample),
            )
        })
    }

    fn shells(&self, kernel: TargetKernel, b: f64) -> Result<usize> {
        let reach: Vec<f64> = self.cell.q().iter().map(|q| q / 2.0).collect();
        match kernel {
            TargetKernel::Single => shell_count(self.cell, &reach, self.cfg, |d| single_bound(d, b)),
            _ => shell_count(self.cell, &reach, self.cfg, |d| grad_bound(d, b)),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn image_sum(
        &self,
        kernel: TargetKernel,
        x: [f64; 2],
        y: [f64; 2],
        nu_y: [f64; 2],
        dir: [f64; 2],
        shifts: &[f64],
        a: f64,
        b: f64,
    ) -> f64 {
        let r2cut = cutoff_r2(b);
        let mut d0 = [x[0] - y[0], x[1] - y[1]];
        self.cell.wrap_centered(&mut d0);
        let mut sum = 0.0;
        for s in shifts.chunks_exact(2) {
            let d = [d0[0] + s[0], d0[1] + s[1]];
            let r2 = d[0] * d[0] + d[1] * d[1];
            if r2 >= r2cut {
                continue;
            }
            let r = r2.sqrt();
            sum += match kernel {
                TargetKernel::Single => single(r, a, b),
                TargetKernel::Double => -(d[0] * nu_y[0] + d[1] * nu_y[1]) * grad_factor(r, a, b),
                TargetKernel::Gradient => (d[0] * dir[0] + d[1] * dir[1]) * grad_factor(r, a, b),
            };
        }
        sum
    }

    /// Per-node coefficients c_j with value = Σ_j c_j ρ_j for one slab [a, b].
    pub(crate) fn coefficients(
        &self,
        kernel: TargetKernel,
        x: [f64; 2],
        dir: [f64; 2],
        a: f64,
        b: f64,
        out: &mut [f64],
    ) -> Result<()> {
        out.fill(0.0);
        if b <= a {
            return Ok(());
        }
        let shifts = self.images.shells(0, self.shells(kernel, b)?);
        if a < self.h2 {
            let (fine, interp) = self.fine();
            let fc: Vec<f64> = (0..fine.len())
                .map(|f| {
                    fine.weights[f]
                        * self.image_sum(kernel, x, fine.points[f], fine.normals[f], dir, shifts, a, b)
                })
                .collect();
            interp.apply_transpose(&fc, out);
        } else {
            let g = self.grid;
            for (j, o) in out.iter_mut().enumerate() {
                *o = g.weights[j] * self.image_sum(kernel, x, g.points[j], g.normals[j], dir, shifts, a, b);
            }
        }
        Ok(())
    }

    /// Toeplitz operator from boundary densities to values at fixed targets at t_{k+1}.
    pub(crate) fn target_operator(
        &self,
        kernel: TargetKernel,
        targets: &[[f64; 2]],
        dirs: &[[f64; 2]],
        tg: &TimeGrid,
    ) -> Result<CausalOperator> {
        let n = self.grid.len();
        let mut blocks = Vec::with_capacity(tg.steps);
        let mut row = vec![0.0; n];
        for m in 0..tg.steps {
            let (a, b) = tg.block_interval(m);
            let mut block = DMatrix::zeros(targets.len(), n);
            for (t, x) in targets.iter().enumerate() {
                let dir = dirs.get(t).copied().unwrap_or([0.0, 0.0]);
                self.coefficients(kernel, *x, dir, a, b, &mut row)?;
                for (j, v) in row.iter().enumerate() {
                    block[(t, j)] = *v;
                }
            }
            blocks.push(block);
        }
        CausalOperator::new(OperatorKind::Composite, blocks)
    }

    pub(crate) fn value_at(
        &self,
        kernel: TargetKernel,
        t: f64,
        x: [f64; 2],
        dir: [f64; 2],
        tg: &TimeGrid,
        rho: &DensityGrid,
    ) -> Result<f64> {
        if t <= 0.0 {
            return Ok(0.0);
        }
        let mut row = vec![0.0; self.grid.len()];
        let mut value = 0.0;
        for j in 0..tg.steps {
            let tj = j as f64 * tg.dt();
            if tj >= t {
                break;
            }
            let a = (t - tg.slab_end(j)).max(0.0);
            let b = t - tj;
            self.coefficients(kernel, x, dir, a, b, &mut row)?;
            value += row.iter().zip(rho.slab(j)).map(|(c, r)| c * r).sum::<f64>();
        }
        Ok(value)
    }
}

pub(crate) fn check_targets(
    grid: &BoundaryGrid,
    cell: &PeriodicityCell,
    points: impl Iterator<Item = [f64; 2]>,
) -> Result<()> {
    let radius = grid.safety_radius();
    for (index, x) in points.enumerate() {
        let distance = boundary_distance(&x, grid, cell);
        if distance < radius {
            return Err(Error::TooCloseToBoundary {
                index,
                distance,
                radius,
            });
        }
    }
    Ok(())
}

/// v_q[ρ](t, x) or w_q[ρ](t, x) at off-boundary targets.
pub fn eval_field(
    kind: FieldKind,
    grid: &BoundaryGrid,
    tg: &TimeGrid,
    cell: &PeriodicityCell,
    cfg: &LatticeSumConfig,
    rho: &DensityGrid,
    targets: &[(f64, [f64; 2])],
) -> Result<Vec<f64>> {
    if rho.nodes() != grid.len() || rho.steps() != tg.steps {
        return Err(Error::ShapeMismatch {
            expected: format!("{} slabs x {} nodes", tg.steps, grid.len()),
            got: format!("{} slabs x {} nodes", rho.steps(), rho.nodes()),
        });
    }
    check_targets(grid, cell, targets.iter().map(|t| t.1))?;
    let t_max = targets.iter().map(|t| t.0).fold(tg.dt(), f64::max);
    let ctx = FieldContext::new(grid, cell, cfg, t_max, EVAL_UPSAMPLE)?;
    targets
        .iter()
        .map(|&(t, x)| ctx.value_at(kind.into(), t, x, [0.0, 0.0], tg, rho))
        .collect()
}

/// Layer whose boundary limits `jump_check` extrapolates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpKind {
    SingleNormalDerivative,
    DoubleTrace,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JumpRow {
    pub k: usize,
    pub i: usize,
    /// |(L⁺ − L⁻) − expected jump|.
    pub error: f64,
    /// Interior limit against its jump formula.
    pub plus_error: f64,
    /// Exterior limit against its jump formula.
    pub minus_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpReport {
    pub rows: Vec<JumpRow>,
    pub max_error: f64,
    pub max_side_error: f64,
    /// Offsets δ_m = m·w_i/DELTA_DIVISOR, m = 1..=DELTA_COUNT, extrapolated to 0.
    pub delta_count: usize,
    pub delta_divisor: f64,
}

const DELTA_COUNT: usize = 4;
const DELTA_DIVISOR: f64 = 8.0;

/// Polynomial extrapolation to 0 through (x_m, y_m) by Neville's scheme.
pub(crate) fn neville_at_zero(x: &[f64], y: &[f64]) -> f64 {
    let mut p = y.to_vec();
    let n = x.len();
    for level in 1..n {
        for i in 0..n - level {
            let (xi, xj) = (x[i], x[i + level]);
            p[i] = (xj * p[i] - xi * p[i + 1]) / (xj - xi);
        }
    }
    p[0]
}

/// Extrapolate one-sided boundary limits from p_i ∓ δν_i and compare with the jump formulas.
pub fn jump_check(
    kind: JumpKind,
    grid: &BoundaryGrid,
    tg: &TimeGrid,
    cell: &PeriodicityCell,
    cfg: &LatticeSumConfig,
    rho: &DensityGrid,
) -> Result<JumpReport> {
    let n = grid.len();
    if rho.nodes() != n || rho.steps() != tg.steps {
        return Err(Error::ShapeMismatch {
            expected: format!("{} slabs x {} nodes", tg.steps, n),
            got: format!("{} slabs x {} nodes", rho.steps(), rho.nodes()),
        });
    }
    let (op_kind, kernel, half) = match kind {
        JumpKind::SingleNormalDerivative => (OperatorKind::WstarQ, TargetKernel::Gradient, 0.5),
        JumpKind::DoubleTrace => (OperatorKind::Wq, TargetKernel::Double, -0.5),
    };
    let boundary = super::assemble(op_kind, grid, tg, cell, cfg)?.apply(rho)?;
    let ctx = FieldContext::new(grid, cell, cfg, tg.t_end, JUMP_UPSAMPLE)?;

    // limits[side][m]: side 0 interior (p − δν), side 1 exterior (p + δν)
    let mut limits: Vec<Vec<DensityGrid>> = Vec::with_capacity(2);
    for sign in [-1.0, 1.0] {
        let mut per_delta = Vec::with_capacity(DELTA_COUNT);
        for m in 1..=DELTA_COUNT {
            let targets: Vec<[f64; 2]> = (0..n)
                .map(|i| {
                    let delta = m as f64 * grid.weights[i] / DELTA_DIVISOR;
                    [
                        grid.points[i][0] + sign * delta * grid.normals[i][0],
                        grid.points[i][1] + sign * delta * grid.normals[i][1],
                    ]
                })
                .collect();
            let op = ctx.target_operator(kernel, &targets, &grid.normals, tg)?;
            per_delta.push(op.apply(rho)?);
        }
        limits.push(per_delta);
    }

    let xs: Vec<f64> = (1..=DELTA_COUNT).map(|m| m as f64).collect();
    let mut rows = Vec::with_capacity(tg.steps * n);
    let (mut max_error, mut max_side_error) = (0.0f64, 0.0f64);
    let mut ys = vec![0.0; DELTA_COUNT];
    for k in 0..tg.steps {
        for i in 0..n {
            let mut side = [0.0; 2];
            for (s, per_delta) in limits.iter().enumerate() {
                for (y, vals) in ys.iter_mut().zip(per_delta) {
                    *y = vals.get(k, i);
                }
                side[s] = neville_at_zero(&xs, &ys);
            }
            if !side.iter().all(|v| v.is_finite()) {
                return Err(Error::ExtrapolationFailed { slab: k, node: i });
            }
            let r = rho.get(k, i);
            let bv = boundary.get(k, i);
            let plus_error = (side[0] - (half * r + bv)).abs();
            let minus_error = (side[1] - (-half * r + bv)).abs();
            let error = ((side[0] - side[1]) - 2.0 * half * r).abs();
            max_error = max_error.max(error);
            max_side_error = max_side_error.max(plus_error).max(minus_error);
            rows.push(JumpRow {
                k,
                i,
                error,
                plus_error,
                minus_error,
            });
        }
    }
    Ok(JumpReport {
        rows,
        max_error,
        max_side_error,
        delta_count: DELTA_COUNT,
        delta_divisor: DELTA_DIVISOR,
    })
}
