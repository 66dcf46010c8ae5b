//! Exponential integral E₁ and the entire function Ein.
//!
//! E₁(x) = ∫ₓ^∞ e⁻ᵘ/u du = −γ − ln x + Ein(x), with
//! Ein(x) = Σ_{k≥1} (−1)^{k+1} x^k / (k·k!).
//!
//! The power series is used for x ≤ 1 and a modified-Lentz continued
//! fraction above that.

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const SERIES_LIMIT: f64 = 1.0;

/// Ein(x) by its alternating power series. Accurate for 0 ≤ x ≲ 2.
pub fn ein(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let mut term = x;
    let mut sum = x;
    let mut k = 1.0;
    loop {
        k += 1.0;
        term *= -x / k;
        let add = term / k;
        sum += add;
        if add.abs() <= f64::EPSILON * 0.25 * sum.abs() {
            break;
        }
    }
    sum
}

/// E₁(x) for x > 0. Returns `+inf` at 0 and `0` for very large x.
pub fn e1(x: f64) -> f64 {
    debug_assert!(x >= 0.0, "E1 is only evaluated on the positive axis");
    if x == 0.0 {
        return f64::INFINITY;
    }
    if x.is_infinite() {
        return 0.0;
    }
    if x <= SERIES_LIMIT {
        return -EULER_GAMMA - x.ln() + ein(x);
    }
    if x > 740.0 {
        return 0.0;
    }
    continued_fraction(x)
}

fn continued_fraction(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..1000 {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() <= f64::EPSILON {
            break;
        }
    }
    h * (-x).exp()
}

/// E₁(lo) − E₁(hi) for 0 ≤ lo ≤ hi, with `hi = +inf` allowed.
///
/// Small arguments go through `ln(hi/lo) + Ein(lo) − Ein(hi)`, which stays
/// accurate when both arguments shrink together (the r → 0 limit of a slab
/// integral with a > 0).
pub fn e1_diff(lo: f64, hi: f64) -> f64 {
    debug_assert!(lo <= hi);
    if hi.is_infinite() {
        return e1(lo);
    }
    if lo == hi {
        return 0.0;
    }
    if hi <= SERIES_LIMIT {
        if lo == 0.0 {
            return f64::INFINITY;
        }
        return (hi / lo).ln() + ein(lo) - ein(hi);
    }
    e1(lo) - e1(hi)
}
