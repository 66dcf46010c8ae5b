//! Exact time integrals of the planar heat kernel over one slab [a, b].

use std::f64::consts::PI;

use super::expint::{e1, e1_diff};
use crate::error::{invalid, Result};

/// Time-slab integrals of S₂ and of its spatial gradient at distance `r`.
///
/// `single = ∫_a^b S₂(σ, r) dσ` and, for any `d` with `|d| = r`,
/// `∫_a^b ∇ₓS₂(σ, d) dσ = d · grad_factor`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlabIntegrals {
    pub single: f64,
    pub grad_factor: f64,
}

/// Checked slab integrals. `b == a` is accepted and yields zeros.
pub fn slab_integrals(r: f64, a: f64, b: f64) -> Result<SlabIntegrals> {
    if !(r >= 0.0) {
        return Err(invalid("r", format!("distance must be non-negative, got {r}")));
    }
    if !(a >= 0.0) {
        return Err(invalid("a", format!("slab start must be non-negative, got {a}")));
    }
    if !(b >= a) {
        return Err(invalid("b", format!("slab end {b} precedes start {a}")));
    }
    if b == a {
        return Ok(SlabIntegrals {
            single: 0.0,
            grad_factor: 0.0,
        });
    }
    if r == 0.0 && a == 0.0 {
        return Err(invalid("r", "r = 0 on a slab touching σ = 0 is the kernel singularity"));
    }
    Ok(SlabIntegrals {
        single: single(r, a, b),
        grad_factor: grad_factor(r, a, b),
    })
}

/// ∫_a^b S₂(σ, r) dσ = (1/4π)[E₁(r²/4b) − E₁(r²/4a)]. Unchecked.
#[inline]
pub fn single(r: f64, a: f64, b: f64) -> f64 {
    let r2 = r * r;
    if a == 0.0 {
        return e1(r2 / (4.0 * b)) / (4.0 * PI);
    }
    if r2 == 0.0 {
        return (b / a).ln() / (4.0 * PI);
    }
    e1_diff(r2 / (4.0 * b), r2 / (4.0 * a)) / (4.0 * PI)
}

/// The factor c with ∫_a^b ∇S₂(σ, d) dσ = d·c(|d|, a, b). Unchecked.
#[inline]
pub fn grad_factor(r: f64, a: f64, b: f64) -> f64 {
    let r2 = r * r;
    if a == 0.0 {
        return -(-r2 / (4.0 * b)).exp() / (2.0 * PI * r2);
    }
    let span = 1.0 / a - 1.0 / b;
    if r2 < 1e-200 {
        return -span / (8.0 * PI);
    }
    let ub = r2 / (4.0 * b);
    let du = 0.25 * r2 * span;
    let diff = (-ub).exp() * (-(-du).exp_m1());
    -diff / (2.0 * PI * r2)
}

/// ∫_{−∞}^{∞} single(|s|, a, b) ds = (√b − √a)/√π.
#[inline]
pub fn single_line_integral(a: f64, b: f64) -> f64 {
    (b.sqrt() - a.sqrt()) / PI.sqrt()
}

/// ∫_{−∞}^{∞} s²·grad_factor(|s|, a, b) ds = −(√b − √a)/√π.
#[inline]
pub fn moment_line_integral(a: f64, b: f64) -> f64 {
    -(b.sqrt() - a.sqrt()) / PI.sqrt()
}

/// Upper bound on |single| for any image at distance ≥ `d`.
#[inline]
pub(crate) fn single_bound(d: f64, b: f64) -> f64 {
    let u = d * d / (4.0 * b);
    if u <= 1.0 {
        return f64::INFINITY;
    }
    // E1(u) < e^{-u}/u
    (-u).exp() / u / (4.0 * PI)
}

/// Upper bound on |d · grad_factor| for any image at distance ≥ `d`.
#[inline]
pub(crate) fn grad_bound(d: f64, b: f64) -> f64 {
    // |d|·|c| ≤ e^{-|d|²/4b}/(2π|d|), decreasing once |d|² ≥ 2b
    let d = d.max((2.0 * b).sqrt());
    (-d * d / (4.0 * b)).exp() / (2.0 * PI * d)
}
