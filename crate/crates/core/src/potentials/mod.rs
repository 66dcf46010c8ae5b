//! Discrete layer heat potentials on a periodic interface.
//!
//! Densities are piecewise constant in time on slabs (t_k, t_{k+1}] and
//! nodal in space. Collocation at t_{k+1} turns every layer operator into a
//! block-lower-triangular Toeplitz matrix whose block m carries the exact
//! kernel time integral over σ ∈ [mΔt, (m+1)Δt].
//!
//! The self-interaction of every kind is corrected so that a straight
//! (V kinds) or constant-curvature (gradient kinds) local model is
//! integrated exactly; this also covers slabs whose Gaussian width is below
//! the node spacing.

mod causal;
mod field;

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use causal::{CausalOperator, Factored, OperatorKind};
pub use field::{eval_field, jump_check, FieldKind, JumpKind, JumpReport};

use crate::error::{invalid, Error, Result};
use crate::geometry::{BoundaryGrid, BoundaryMap};
use crate::kernel::slab::{
    grad_bound, grad_factor, moment_line_integral, single, single_bound, single_line_integral,
};
use crate::kernel::{shell_count, ImageSet, LatticeSumConfig, PeriodicityCell};

/// Uniform time grid t_k = kT/M.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_end: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, steps: usize) -> Result<Self> {
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(invalid("T", "horizon must be positive"));
        }
        if steps < 2 {
            return Err(invalid("M", format!("need at least 2 time steps, got {steps}")));
        }
        Ok(TimeGrid { t_end, steps })
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.steps as f64
    }

    /// Collocation time of slab k.
    pub fn slab_end(&self, k: usize) -> f64 {
        (k + 1) as f64 * self.dt()
    }

    /// Time interval [mΔt, (m+1)Δt] integrated by block m.
    pub fn block_interval(&self, m: usize) -> (f64, f64) {
        (m as f64 * self.dt(), (m + 1) as f64 * self.dt())
    }
}

/// Slab-by-node values, row-major with the slab index outermost.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    steps: usize,
    nodes: usize,
    values: Vec<f64>,
}

impl DensityGrid {
    pub fn zeros(steps: usize, nodes: usize) -> Self {
        DensityGrid {
            steps,
            nodes,
            values: vec![0.0; steps * nodes],
        }
    }

    pub fn from_values(steps: usize, nodes: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != steps * nodes {
            return Err(Error::ShapeMismatch {
                expected: format!("{} values", steps * nodes),
                got: format!("{}", values.len()),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("density", "values must be finite"));
        }
        Ok(DensityGrid {
            steps,
            nodes,
            values,
        })
    }

    /// Sample f(t_{k+1}, s_i).
    pub fn sample(tg: &TimeGrid, s: &[f64], f: impl Fn(f64, f64) -> f64) -> Self {
        let mut d = Self::zeros(tg.steps, s.len());
        for k in 0..tg.steps {
            let t = tg.slab_end(k);
            for (v, si) in d.slab_mut(k).iter_mut().zip(s) {
                *v = f(t, *si);
            }
        }
        d
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn slab(&self, k: usize) -> &[f64] {
        &self.values[k * self.nodes..(k + 1) * self.nodes]
    }

    pub fn slab_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.values[k * self.nodes..(k + 1) * self.nodes]
    }

    pub fn get(&self, k: usize, i: usize) -> f64 {
        self.values[k * self.nodes + i]
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.steps != other.steps || self.nodes != other.nodes {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}", self.steps, self.nodes),
                got: format!("{}x{}", other.steps, other.nodes),
            });
        }
        Ok(())
    }

    /// self + s·other. Panics on shape mismatch.
    pub fn axpy(&self, s: f64, other: &Self) -> Self {
        self.check_same(other).expect("density shapes differ");
        DensityGrid {
            steps: self.steps,
            nodes: self.nodes,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + s * b)
                .collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        DensityGrid {
            steps: self.steps,
            nodes: self.nodes,
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.check_same(other).expect("density shapes differ");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Discrete L² norm over [0,T]×φ(∂Ω) with quadrature weights w_i.
    pub fn l2_norm(&self, weights: &[f64], dt: f64) -> f64 {
        let mut acc = 0.0;
        for k in 0..self.steps {
            for (v, w) in self.slab(k).iter().zip(weights) {
                acc += w * v * v;
            }
        }
        (acc * dt).sqrt()
    }

    /// Stack two densities node-wise per slab: [a_k; b_k].
    pub fn stack(a: &Self, b: &Self) -> Self {
        a.check_same(b).expect("density shapes differ");
        let mut out = Self::zeros(a.steps, 2 * a.nodes);
        for k in 0..a.steps {
            let slab = out.slab_mut(k);
            slab[..a.nodes].copy_from_slice(a.slab(k));
            slab[a.nodes..].copy_from_slice(b.slab(k));
        }
        out
    }

    pub fn split(&self) -> (Self, Self) {
        let n = self.nodes / 2;
        let mut a = Self::zeros(self.steps, n);
        let mut b = Self::zeros(self.steps, n);
        for k in 0..self.steps {
            a.slab_mut(k).copy_from_slice(&self.slab(k)[..n]);
            b.slab_mut(k).copy_from_slice(&self.slab(k)[n..]);
        }
        (a, b)
    }

    /// Every `factor`-th node.
    pub fn restrict_nodes(&self, factor: usize) -> Self {
        let n = self.nodes / factor;
        let mut out = Self::zeros(self.steps, n);
        for k in 0..self.steps {
            for i in 0..n {
                out.slab_mut(k)[i] = self.get(k, i * factor);
            }
        }
        out
    }

    /// Slabs whose end times coincide with a grid `factor` times coarser.
    pub fn restrict_slabs(&self, factor: usize) -> Self {
        let m = self.steps / factor;
        let mut out = Self::zeros(m, self.nodes);
        for k in 0..m {
            out.slab_mut(k).copy_from_slice(self.slab((k + 1) * factor - 1));
        }
        out
    }
}

/// Exponent u = r²/4b beyond which a single image term is below e^{-u}.
const CUTOFF_EXPONENT: f64 = 50.0;

#[inline]
pub(crate) fn cutoff_r2(b: f64) -> f64 {
    4.0 * b * CUTOFF_EXPONENT
}

/// D_V(h) = ∫_R single(|s|) ds − h Σ_{j≠0} single(|j|h).
pub(crate) fn v_self_correction(h: f64, a: f64, b: f64) -> f64 {
    let mut sum = 0.0;
    let r2cut = cutoff_r2(b);
    let mut j = 1.0;
    while (j * h) * (j * h) < r2cut {
        sum += single(j * h, a, b);
        j += 1.0;
    }
    single_line_integral(a, b) - 2.0 * h * sum
}

/// D_W(h)/(κ/2) = ∫_R s²c(|s|) ds − h Σ_{j≠0} (jh)² c(|j|h).
pub(crate) fn w_self_correction(h: f64, a: f64, b: f64) -> f64 {
    let mut sum = 0.0;
    let r2cut = cutoff_r2(b);
    let mut j = 1.0;
    while (j * h) * (j * h) < r2cut {
        let r = j * h;
        sum += r * r * grad_factor(r, a, b);
        j += 1.0;
    }
    moment_line_integral(a, b) - 2.0 * h * sum
}

/// Image layout of one assembly route.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ImageMode {
    /// z = 0 only, raw differences.
    Free,
    /// All images of the wrapped difference.
    Periodic,
    /// z ≠ 0 images of the raw difference.
    Remainder,
}

impl OperatorKind {
    pub(crate) fn image_mode(self) -> ImageMode {
        match self {
            OperatorKind::Remainder => ImageMode::Remainder,
            k if k.is_periodic() => ImageMode::Periodic,
            _ => ImageMode::Free,
        }
    }

    fn is_gradient(self) -> bool {
        !matches!(self, OperatorKind::Vq | OperatorKind::V | OperatorKind::Remainder)
    }
}

/// Shell count per block for one route.
pub(crate) fn block_shells(
    mode: ImageMode,
    gradient: bool,
    tg: &TimeGrid,
    cell: &PeriodicityCell,
    cfg: &LatticeSumConfig,
) -> Result<Vec<usize>> {
    let reach: Vec<f64> = match mode {
        ImageMode::Free => return Ok(vec![0; tg.steps]),
        ImageMode::Periodic => cell.q().iter().map(|q| q / 2.0).collect(),
        ImageMode::Remainder => cell.q().to_vec(),
    };
    (0..tg.steps)
        .map(|m| {
            let (_, b) = tg.block_interval(m);
            let z = if gradient {
                shell_count(cell, &reach, cfg, |d| grad_bound(d, b))?
            } else {
                shell_count(cell, &reach, cfg, |d| single_bound(d, b))?
            };
            // the remainder route always needs its first shell
            Ok(if mode == ImageMode::Remainder { z.max(1) } else { z })
        })
        .collect()
}

/// Assemble the causal matrix of a layer operator on the boundary grid.
pub fn assemble(
    kind: OperatorKind,
    grid: &BoundaryGrid,
    tg: &TimeGrid,
    cell: &PeriodicityCell,
    cfg: &LatticeSumConfig,
) -> Result<CausalOperator> {
    cfg.validate()?;
    if kind == OperatorKind::Composite {
        return Err(invalid("kind", "composite operators are not assembled"));
    }
    if let OperatorKind::Vql(l) | OperatorKind::Vl(l) = kind {
        if l > 1 {
            return Err(invalid("l", format!("component index must be 0 or 1, got {l}")));
        }
    }
    check_nodes(grid)?;
    let mode = kind.image_mode();
    let shells = block_shells(mode, kind.is_gradient(), tg, cell, cfg)?;
    let max_shell = shells.iter().copied().max().unwrap_or(0);
    let images = ImageSet::new(cell, max_shell);
    let blocks = (0..tg.steps)
        .into_par_iter()
        .map(|m| {
            let (a, b) = tg.block_interval(m);
            let first = if mode == ImageMode::Remainder { 1 } else { 0 };
            let last = if mode == ImageMode::Free { 0 } else { shells[m] };
            assemble_block(kind, mode, grid, cell, images.shells(first, last), a, b)
        })
        .collect();
    CausalOperator::new(kind, blocks)
}

fn check_nodes(grid: &BoundaryGrid) -> Result<()> {
    let n = grid.len();
    for i in 0..n {
        let j = (i + 1) % n;
        let d = (grid.points[i][0] - grid.points[j][0]).hypot(grid.points[i][1] - grid.points[j][1]);
        if d == 0.0 {
            return Err(invalid("grid", format!("nodes {i} and {j} coincide")));
        }
    }
    Ok(())
}

/// Kernel value of one image difference d for a boundary operator.
#[inline]
fn kernel_term(kind: OperatorKind, d: [f64; 2], nu_i: [f64; 2], nu_j: [f64; 2], a: f64, b: f64) -> f64 {
    let r = d[0].hypot(d[1]);
    match kind {
        OperatorKind::Vq | OperatorKind::V | OperatorKind::Remainder => single(r, a, b),
        OperatorKind::Vql(l) | OperatorKind::Vl(l) => d[l] * grad_factor(r, a, b),
        OperatorKind::WstarQ | OperatorKind::Wstar => {
            (d[0] * nu_i[0] + d[1] * nu_i[1]) * grad_factor(r, a, b)
        }
        OperatorKind::Wq | OperatorKind::W => {
            -(d[0] * nu_j[0] + d[1] * nu_j[1]) * grad_factor(r, a, b)
        }
        OperatorKind::Composite => unreachable!(),
    }
}

fn assemble_block(
    kind: OperatorKind,
    mode: ImageMode,
    grid: &BoundaryGrid,
    cell: &PeriodicityCell,
    shifts: &[f64],
    a: f64,
    b: f64,
) -> DMatrix<f64> {
    let n = grid.len();
    let r2cut = cutoff_r2(b);
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        let (pi, nu_i) = (grid.points[i], grid.normals[i]);
        for j in 0..n {
            let (pj, nu_j) = (grid.points[j], grid.normals[j]);
            let mut d0 = [pi[0] - pj[0], pi[1] - pj[1]];
            if mode == ImageMode::Periodic {
                cell.wrap_centered(&mut d0);
            }
            let mut sum = 0.0;
            for s in shifts.chunks_exact(2) {
                let d = [d0[0] + s[0], d0[1] + s[1]];
                let r2 = d[0] * d[0] + d[1] * d[1];
                if r2 >= r2cut || (i == j && r2 == 0.0) {
                    continue;
                }
                sum += kernel_term(kind, d, nu_i, nu_j, a, b);
            }
            let mut entry = grid.weights[j] * sum;
            if i == j && mode != ImageMode::Remainder {
                entry += self_term(kind, grid, i, a, b);
            }
            out[(i, j)] = entry;
        }
    }
    out
}

/// Corrected z = 0 self-interaction of node i.
pub(crate) fn self_term(kind: OperatorKind, grid: &BoundaryGrid, i: usize, a: f64, b: f64) -> f64 {
    let h = grid.weights[i];
    let kappa = grid.curvature[i];
    match kind {
        OperatorKind::Vq | OperatorKind::V => v_self_correction(h, a, b),
        OperatorKind::Vql(l) | OperatorKind::Vl(l) => {
            grid.normals[i][l] * 0.5 * kappa * w_self_correction(h, a, b)
        }
        OperatorKind::WstarQ | OperatorKind::Wstar | OperatorKind::Wq | OperatorKind::W => {
            0.5 * kappa * w_self_correction(h, a, b)
        }
        OperatorKind::Remainder | OperatorKind::Composite => 0.0,
    }
}

/// d/dh of the assembled Vq on the curve φ + hψ at h = 0.
///
/// Differentiates the kernel arguments, the quadrature weights and the
/// diagonal correction; the image cutoff is held fixed.
pub fn assemble_vq_derivative(
    grid: &BoundaryGrid,
    dir: &BoundaryMap,
    tg: &TimeGrid,
    cell: &PeriodicityCell,
    cfg: &LatticeSumConfig,
) -> Result<CausalOperator> {
    cfg.validate()?;
    check_nodes(grid)?;
    let n = grid.len();
    let (psi, dw): (Vec<[f64; 2]>, Vec<f64>) = grid
        .s
        .iter()
        .zip(&grid.tangents)
        .map(|(&s, tau)| {
            let c = dir.sample(s);
            (c.p, (tau[0] * c.dp[0] + tau[1] * c.dp[1]) * 2.0 * PI / n as f64)
        })
        .unzip();
    let shells = block_shells(ImageMode::Periodic, false, tg, cell, cfg)?;
    let images = ImageSet::new(cell, shells.iter().copied().max().unwrap_or(0));
    let blocks = (0..tg.steps)
        .into_par_iter()
        .map(|m| {
            let (a, b) = tg.block_interval(m);
            let shifts = images.shells(0, shells[m]);
            let r2cut = cutoff_r2(b);
            let mut out = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    let mut d0 = [grid.points[i][0] - grid.points[j][0], grid.points[i][1] - grid.points[j][1]];
                    cell.wrap_centered(&mut d0);
                    let dpsi = [psi[i][0] - psi[j][0], psi[i][1] - psi[j][1]];
                    let (mut value, mut slope) = (0.0, 0.0);
                    for sh in shifts.chunks_exact(2) {
                        let d = [d0[0] + sh[0], d0[1] + sh[1]];
                        let r2 = d[0] * d[0] + d[1] * d[1];
                        if r2 >= r2cut || (i == j && r2 == 0.0) {
                            continue;
                        }
                        let r = r2.sqrt();
                        value += single(r, a, b);
                        slope += (d[0] * dpsi[0] + d[1] * dpsi[1]) * grad_factor(r, a, b);
                    }
                    let mut entry = dw[j] * value + grid.weights[j] * slope;
                    if i == j {
                        entry += dw[i] * v_self_correction_dh(grid.weights[i], a, b);
                    }
                    out[(i, j)] = entry;
                }
            }
            out
        })
        .collect();
    CausalOperator::new(OperatorKind::Composite, blocks)
}

/// d/dh of `v_self_correction` with the cutoff index held fixed.
fn v_self_correction_dh(h: f64, a: f64, b: f64) -> f64 {
    let r2cut = cutoff_r2(b);
    let mut sum = 0.0;
    let mut j = 1.0;
    while (j * h) * (j * h) < r2cut {
        let r = j * h;
        sum += single(r, a, b) + r * r * grad_factor(r, a, b);
        j += 1.0;
    }
    -2.0 * sum
}

/// Result of comparing Vq with V + R.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitReport {
    pub max_abs_discrepancy: f64,
    /// (block, row, max over columns).
    pub rows: Vec<(usize, usize, f64)>,
}

/// Assemble Vq directly and as V plus the remainder-kernel operator.
pub fn splitting_check(
    grid: &BoundaryGrid,
    tg: &TimeGrid,
    cell: &PeriodicityCell,
    cfg: &LatticeSumConfig,
) -> Result<SplitReport> {
    let vq = assemble(OperatorKind::Vq, grid, tg, cell, cfg)?;
    let v = assemble(OperatorKind::V, grid, tg, cell, cfg)?;
    let r = assemble(OperatorKind::Remainder, grid, tg, cell, cfg)?;
    let mut rows = Vec::with_capacity(tg.steps * grid.len());
    let mut max = 0.0f64;
    for m in 0..tg.steps {
        let diff = vq.block(m) - (v.block(m) + r.block(m));
        for i in 0..grid.len() {
            let e = diff.row(i).amax();
            max = max.max(e);
            rows.push((m, i, e));
        }
    }
    Ok(SplitReport {
        max_abs_discrepancy: max,
        rows,
    })
}
