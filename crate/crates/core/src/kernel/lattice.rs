//! Shell-by-shell enumeration of lattice images with Gaussian tail bounds.

use super::{LatticeSumConfig, PeriodicityCell};
use crate::error::{Error, Result};

/// Number of integer vectors z ∈ Zⁿ with |z|_∞ = shell.
fn shell_size(dim: usize, shell: usize) -> f64 {
    if shell == 0 {
        return 1.0;
    }
    let outer = (2 * shell + 1) as f64;
    let inner = (2 * shell - 1) as f64;
    outer.powi(dim as i32) - inner.powi(dim as i32)
}

/// Integer vectors of one shell in a fixed lexicographic order.
fn shell_vectors(dim: usize, shell: usize) -> Vec<Vec<i64>> {
    let s = shell as i64;
    let mut out = Vec::new();
    let mut z = vec![-s; dim];
    loop {
        if z.iter().map(|v| v.abs()).max().unwrap_or(0) == s {
            out.push(z.clone());
        }
        let mut d = dim;
        loop {
            if d == 0 {
                return out;
            }
            d -= 1;
            if z[d] < s {
                z[d] += 1;
                break;
            }
            z[d] = -s;
        }
    }
}

/// Bound on everything beyond `shell` for a point with |x_d| ≤ `reach[d]`.
///
/// Every image in shell Z' is at distance ≥ min_d (q_d Z' − reach_d) from x;
/// `bound(d)` must dominate one image term at distance ≥ d.
pub(crate) fn tail_after(
    shell: usize,
    q: &[f64],
    reach: &[f64],
    bound: &impl Fn(f64) -> f64,
) -> f64 {
    let dim = q.len();
    let mut tail = 0.0;
    for s in shell + 1..shell + 400 {
        let dmin = q
            .iter()
            .zip(reach)
            .map(|(qd, rd)| qd * s as f64 - rd)
            .fold(f64::INFINITY, f64::min)
            .max(0.0);
        let term = shell_size(dim, s) * bound(dmin);
        if !term.is_finite() {
            return f64::INFINITY;
        }
        tail += term;
        if term <= 1e-30 * tail || term == 0.0 {
            break;
        }
    }
    tail
}

/// Visit x + qz shell by shell until the remaining tail is below `tail_tol`.
/// Returns the tail bound.
pub(crate) fn shell_sum(
    x: &[f64],
    cell: &PeriodicityCell,
    cfg: &LatticeSumConfig,
    include_zero: bool,
    bound: impl Fn(f64) -> f64,
    mut visit: impl FnMut(&[f64]),
) -> Result<f64> {
    let q = cell.q();
    let reach: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    let mut img = vec![0.0; x.len()];
    for shell in 0..=cfg.max_shell {
        if shell > 0 || include_zero {
            for z in shell_vectors(x.len(), shell) {
                for d in 0..x.len() {
                    img[d] = x[d] + q[d] * z[d] as f64;
                }
                visit(&img);
            }
        }
        let tail = tail_after(shell, q, &reach, &bound);
        if tail < cfg.tail_tol {
            return Ok(tail);
        }
    }
    Err(Error::TruncationFailed {
        tail_tol: cfg.tail_tol,
        max_shell: cfg.max_shell,
    })
}

/// Visit dual-lattice vectors k shell by shell; `bound(K)` dominates one
/// term with |k|_∞ = K.
pub(crate) fn dual_shell_sum(
    dim: usize,
    cfg: &LatticeSumConfig,
    bound: impl Fn(f64) -> f64,
    mut visit: impl FnMut(&[i64]),
) -> Result<f64> {
    for shell in 0..=cfg.max_shell {
        for k in shell_vectors(dim, shell) {
            visit(&k);
        }
        let mut tail = 0.0;
        for s in shell + 1..shell + 400 {
            let term = shell_size(dim, s) * bound(s as f64);
            tail += term;
            if term <= 1e-30 * tail || term == 0.0 {
                break;
            }
        }
        if tail < cfg.tail_tol {
            return Ok(tail);
        }
    }
    Err(Error::TruncationFailed {
        tail_tol: cfg.tail_tol,
        max_shell: cfg.max_shell,
    })
}

/// Smallest shell index Z such that the tail beyond Z is below `tail_tol`
/// for every point with |x_d| ≤ reach_d.
pub(crate) fn shell_count(
    cell: &PeriodicityCell,
    reach: &[f64],
    cfg: &LatticeSumConfig,
    bound: impl Fn(f64) -> f64,
) -> Result<usize> {
    for shell in 0..=cfg.max_shell {
        if tail_after(shell, cell.q(), reach, &bound) < cfg.tail_tol {
            return Ok(shell);
        }
    }
    Err(Error::TruncationFailed {
        tail_tol: cfg.tail_tol,
        max_shell: cfg.max_shell,
    })
}

/// Precomputed image shifts qz, grouped by shell.
#[derive(Debug, Clone)]
pub(crate) struct ImageSet {
    dim: usize,
    shifts: Vec<f64>,
    shell_end: Vec<usize>,
}

impl ImageSet {
    pub(crate) fn new(cell: &PeriodicityCell, max_shell: usize) -> Self {
        let dim = cell.dim();
        let q = cell.q();
        let mut shifts = Vec::new();
        let mut shell_end = Vec::with_capacity(max_shell + 1);
        for shell in 0..=max_shell {
            for z in shell_vectors(dim, shell) {
                shifts.extend(z.iter().zip(q).map(|(zd, qd)| *zd as f64 * qd));
            }
            shell_end.push(shifts.len() / dim);
        }
        ImageSet {
            dim,
            shifts,
            shell_end,
        }
    }

    pub(crate) fn max_shell(&self) -> usize {
        self.shell_end.len() - 1
    }

    /// Shifts of shells `first..=last`, flattened with stride `dim`.
    pub(crate) fn shells(&self, first: usize, last: usize) -> &[f64] {
        let start = if first == 0 { 0 } else { self.shell_end[first - 1] };
        let end = self.shell_end[last.min(self.max_shell())];
        &self.shifts[start * self.dim..end * self.dim]
    }
}
