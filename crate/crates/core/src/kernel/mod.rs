//! Free-space and q-periodic heat kernels.
//!
//! The periodic kernel is the image sum Σ_z S_n(t, x + qz) over the lattice
//! qZⁿ. Images are visited shell by shell (|z|_∞ = 0, 1, 2, …) and the sum
//! stops as soon as an analytic Gaussian bound on everything beyond the
//! current shell is below `tail_tol`. For large t the dual (Poisson
//! summation) series |Q|⁻¹ Σ_k exp(−4π²|q⁻¹k|²t) cos(2π q⁻¹k·x) converges
//! faster and can be selected explicitly or by `Representation::Auto`.

pub mod expint;
mod lattice;
pub mod slab;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
pub(crate) use lattice::{shell_count, ImageSet};
pub use slab::{slab_integrals, SlabIntegrals};

/// Diagonal periodicity cell Q = Π_j (0, q_jj).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CellSpec", into = "CellSpec")]
pub struct PeriodicityCell {
    q: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CellSpec {
    q: Vec<f64>,
}

impl TryFrom<CellSpec> for PeriodicityCell {
    type Error = Error;
    fn try_from(spec: CellSpec) -> Result<Self> {
        PeriodicityCell::new(&spec.q)
    }
}

impl From<PeriodicityCell> for CellSpec {
    fn from(cell: PeriodicityCell) -> Self {
        CellSpec { q: cell.q }
    }
}

impl PeriodicityCell {
    pub fn new(q: &[f64]) -> Result<Self> {
        if !(2..=3).contains(&q.len()) {
            return Err(invalid("q", format!("dimension must be 2 or 3, got {}", q.len())));
        }
        if let Some(bad) = q.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(invalid("q", format!("side lengths must be positive, got {bad}")));
        }
        Ok(PeriodicityCell { q: q.to_vec() })
    }

    pub fn unit(dim: usize) -> Self {
        PeriodicityCell { q: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    /// |Q|_n = Π q_jj.
    pub fn volume(&self) -> f64 {
        self.q.iter().product()
    }

    pub fn min_side(&self) -> f64 {
        self.q.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_side(&self) -> f64 {
        self.q.iter().copied().fold(0.0, f64::max)
    }

    /// Generators q_jj e_j of the lattice qZⁿ.
    pub fn lattice_generators(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|j| {
                let mut g = vec![0.0; self.dim()];
                g[j] = self.q[j];
                g
            })
            .collect()
    }

    /// Generators e_j / q_jj of the dual lattice q⁻¹Zⁿ.
    pub fn dual_generators(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|j| {
                let mut g = vec![0.0; self.dim()];
                g[j] = 1.0 / self.q[j];
                g
            })
            .collect()
    }

    /// Reduce `x` modulo the lattice into [−q/2, q/2).
    pub fn wrap_centered(&self, x: &mut [f64]) {
        for (xi, qi) in x.iter_mut().zip(&self.q) {
            *xi -= qi * (*xi / qi + 0.5).floor();
        }
    }

    /// Reduce `x` modulo the lattice into [0, q).
    pub fn wrap_into_cell(&self, x: &mut [f64]) {
        for (xi, qi) in x.iter_mut().zip(&self.q) {
            *xi -= qi * (*xi / qi).floor();
        }
    }

    pub fn is_lattice_point(&self, x: &[f64]) -> bool {
        let mut y = x.to_vec();
        self.wrap_centered(&mut y);
        y.iter().all(|v| *v == 0.0)
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::ShapeMismatch {
                expected: format!("point of dimension {}", self.dim()),
                got: format!("dimension {}", x.len()),
            });
        }
        Ok(())
    }
}

/// Which series evaluates the periodic kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    #[default]
    Direct,
    Spectral,
    Auto,
}

/// Truncation controls for lattice sums.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatticeSumConfig {
    pub tail_tol: f64,
    pub max_shell: usize,
    pub representation: Representation,
}

impl Default for LatticeSumConfig {
    fn default() -> Self {
        LatticeSumConfig {
            tail_tol: 1e-15,
            max_shell: 64,
            representation: Representation::Direct,
        }
    }
}

impl LatticeSumConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tail_tol > 0.0) {
            return Err(invalid("tail_tol", "must be positive"));
        }
        if self.max_shell < 1 {
            return Err(invalid("max_shell", "must be at least 1"));
        }
        Ok(())
    }

    pub fn with_tail_tol(mut self, tail_tol: f64) -> Self {
        self.tail_tol = tail_tol;
        self
    }

    pub fn with_representation(mut self, representation: Representation) -> Self {
        self.representation = representation;
        self
    }

    fn use_spectral(&self, t: f64, cell: &PeriodicityCell) -> bool {
        match self.representation {
            Representation::Direct => false,
            Representation::Spectral => true,
            Representation::Auto => {
                // compare the shell counts each series needs for tail_tol
                let log_tol = (1.0 / self.tail_tol).ln().max(1.0);
                let direct = 0.5 + (4.0 * t * log_tol).sqrt() / cell.min_side();
                let spectral = cell.max_side() * (log_tol / (4.0 * PI * PI * t)).sqrt();
                spectral < direct
            }
        }
    }
}

fn check_time(t: f64) -> Result<()> {
    if t.is_nan() {
        return Err(invalid("t", "time is NaN"));
    }
    Ok(())
}

/// Free-space heat kernel S_n(t, x) = (4πt)^{−n/2} exp(−|x|²/4t), zero for t ≤ 0.
pub fn free_kernel(t: f64, x: &[f64]) -> Result<f64> {
    check_time(t)?;
    let r2: f64 = x.iter().map(|v| v * v).sum();
    if t == 0.0 && r2 == 0.0 {
        return Err(Error::LatticeSingular);
    }
    if t <= 0.0 {
        return Ok(0.0);
    }
    Ok(gaussian(t, r2, x.len()))
}

/// ∇ₓS_n(t, x) = −x/(2t)·S_n(t, x), zero for t ≤ 0.
pub fn free_kernel_grad(t: f64, x: &[f64]) -> Result<Vec<f64>> {
    let s = free_kernel(t, x)?;
    if t <= 0.0 {
        return Ok(vec![0.0; x.len()]);
    }
    Ok(x.iter().map(|xi| -xi / (2.0 * t) * s).collect())
}

#[inline]
fn gaussian(t: f64, r2: f64, dim: usize) -> f64 {
    (4.0 * PI * t).powf(-(dim as f64) / 2.0) * (-r2 / (4.0 * t)).exp()
}

fn gaussian_bound(t: f64, dim: usize) -> impl Fn(f64) -> f64 {
    move |d: f64| gaussian(t, d * d, dim)
}

fn gaussian_grad_bound(t: f64, dim: usize) -> impl Fn(f64) -> f64 {
    move |d: f64| {
        let d = d.max((2.0 * t).sqrt());
        d / (2.0 * t) * gaussian(t, d * d, dim)
    }
}

/// A kernel value with the bound on the omitted lattice tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelValue {
    pub value: f64,
    pub est_tail: f64,
}

/// q-periodic heat kernel S_{q,n}(t, x).
pub fn periodic_kernel(
    t: f64,
    x: &[f64],
    cell: &PeriodicityCell,
    cfg: &LatticeSumConfig,
) -> Result<f64> {
    periodic_kernel_with_tail(t, x, cell, cfg).map(|v| v.value)
}

pub fn periodic_kernel_with_tail(
    t: f64,
    x: &[f64],
    cell: &PeriodicityCell,
    cfg: &LatticeSumConfig,
) -> Result<KernelValue> {
    check_time(t)?;
    cell.check_point(x)?;
    cfg.validate()?;
    if t == 0.0 && cell.is_lattice_point(x) {
        return Err(Error::LatticeSingular);
    }
    if t <= 0.0 {
        return Ok(KernelValue {
            value: 0.0,
            est_tail: 0.0,
        });
    }
    let mut y = x.to_vec();
    cell.wrap_centered(&mut y);
    if cfg.use_spectral(t, cell) {
        return spectral_value(t, &y, cell, cfg);
    }
    let dim = cell.dim();
    let mut value = 0.0;
    let est_tail = lattice::shell_sum(&y, cell, cfg, true, gaussian_bound(t, dim), |img| {
        let r2: f64 = img.iter().map(|v| v * v).sum();
        value += gaussian(t, r2, dim);
    })?;
    Ok(KernelValue { value, est_tail })
}

/// Spatial gradient of S_{q,n}, summed term by term.
pub fn periodic_kernel_grad(
    t: f64,
    x: &[f64],
    cell: &PeriodicityCell,
    cfg: &LatticeSumConfig,
) -> Result<Vec<f64>> {
    check_time(t)?;
    cell.check_point(x)?;
    cfg.validate()?;
    if t == 0.0 && cell.is_lattice_point(x) {
        return Err(Error::LatticeSingular);
    }
    let dim = cell.dim();
    if t <= 0.0 {
        return Ok(vec![0.0; dim]);
    }
    let mut y = x.to_vec();
    cell.wrap_centered(&mut y);
    if cfg.use_spectral(t, cell) {
        return spectral_grad(t, &y, cell, cfg);
    }
    let mut grad = vec![0.0; dim];
    lattice::shell_sum(&y, cell, cfg, true, gaussian_grad_bound(t, dim), |img| {
        let r2: f64 = img.iter().map(|v| v * v).sum();
        let s = gaussian(t, r2, dim);
        for (g, xi) in grad.iter_mut().zip(img) {
            *g -= xi / (2.0 * t) * s;
        }
    })?;
    Ok(grad)
}

/// R_{q,n} = S_{q,n} − S_n near the origin, continuously extended by 0 for t ≤ 0.
///
/// Only offered for |x| < min_j q_jj.
pub fn remainder_kernel(
    t: f64,
    x: &[f64],
    cell: &PeriodicityCell,
    cfg: &LatticeSumConfig,
) -> Result<f64> {
    check_time(t)?;
    cell.check_point(x)?;
    cfg.validate()?;
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let limit = cell.min_side();
    if norm >= limit {
        return Err(Error::OutsideValidity { norm, limit });
    }
    if t <= 0.0 {
        return Ok(0.0);
    }
    if cfg.use_spectral(t, cell) {
        let mut y = x.to_vec();
        cell.wrap_centered(&mut y);
        let p = spectral_value(t, &y, cell, cfg)?.value;
        return Ok(p - free_kernel(t, x)?);
    }
    let dim = cell.dim();
    let mut value = 0.0;
    lattice::shell_sum(x, cell, cfg, false, gaussian_bound(t, dim), |img| {
        let r2: f64 = img.iter().map(|v| v * v).sum();
        value += gaussian(t, r2, dim);
    })?;
    Ok(value)
}

fn spectral_value(
    t: f64,
    x: &[f64],
    cell: &PeriodicityCell,
    cfg: &LatticeSumConfig,
) -> Result<KernelValue> {
    let vol = cell.volume();
    let qmax = cell.max_side();
    let bound = move |k: f64| (-4.0 * PI * PI * (k / qmax).powi(2) * t).exp() / vol;
    let mut value = 0.0;
    let est_tail = lattice::dual_shell_sum(cell.dim(), cfg, bound, |k| {
        let (decay, phase) = dual_term(t, x, k, cell);
        value += decay * phase.cos();
    })?;
    Ok(KernelValue {
        value: value / vol,
        est_tail,
    })
}

fn spectral_grad(
    t: f64,
    x: &[f64],
    cell: &PeriodicityCell,
    cfg: &LatticeSumConfig,
) -> Result<Vec<f64>> {
    let vol = cell.volume();
    let qmax = cell.max_side();
    let qmin = cell.min_side();
    let bound = move |k: f64| {
        2.0 * PI * k / qmin * (-4.0 * PI * PI * (k / qmax).powi(2) * t).exp() / vol
    };
    let mut grad = vec![0.0; cell.dim()];
    lattice::dual_shell_sum(cell.dim(), cfg, bound, |k| {
        let (decay, phase) = dual_term(t, x, k, cell);
        let s = decay * phase.sin();
        for (j, g) in grad.iter_mut().enumerate() {
            *g -= 2.0 * PI * k[j] as f64 / cell.q[j] * s;
        }
    })?;
    Ok(grad.into_iter().map(|g| g / vol).collect())
}

fn dual_term(t: f64, x: &[f64], k: &[i64], cell: &PeriodicityCell) -> (f64, f64) {
    let mut k2 = 0.0;
    let mut phase = 0.0;
    for j in 0..k.len() {
        let kj = k[j] as f64 / cell.q[j];
        k2 += kj * kj;
        phase += kj * x[j];
    }
    ((-4.0 * PI * PI * k2 * t).exp(), 2.0 * PI * phase)
}
