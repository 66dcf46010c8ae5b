//! Expansion of ρ⁻ in powers of λ_c − λ_c₀ around a base contrast.
//!
//! With R = (I − 2λ_c₀W*q)⁻¹ and K_j = 2^j (R∘W*q)^j,
//!
//! ```text
//!   ρ⁻ = Σ_j (λ_c − λ_c₀)^j K_j R ρ⁻₀
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::potentials::{CausalOperator, DensityGrid};
use crate::transmission::{contrast, TransmissionData, TransmissionSystem};

/// Induced norm of the full causal matrix used for the radius estimate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    #[default]
    Inf,
    One,
}

impl NormKind {
    pub fn of(self, op: &CausalOperator) -> f64 {
        match self {
            NormKind::Inf => op.inf_norm(),
            NormKind::One => op.one_norm(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesConfig {
    pub lambda0_plus: f64,
    pub lambda0_minus: f64,
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub terms: usize,
    #[serde(default)]
    pub norm: NormKind,
}

impl SeriesConfig {
    pub fn validate(&self) -> Result<()> {
        contrast(self.lambda0_plus, self.lambda0_minus).map_err(|e| rename(e, "lambda0"))?;
        contrast(self.lambda_plus, self.lambda_minus)?;
        Ok(())
    }

    pub fn base_contrast(&self) -> f64 {
        (self.lambda0_minus - self.lambda0_plus) / (self.lambda0_minus + self.lambda0_plus)
    }

    pub fn contrast(&self) -> f64 {
        (self.lambda_minus - self.lambda_plus) / (self.lambda_minus + self.lambda_plus)
    }
}

fn rename(e: crate::Error, prefix: &'static str) -> crate::Error {
    match e {
        crate::Error::InvalidInput { field, reason } => crate::Error::InvalidInput {
            field: match field {
                "lambda_plus" => "lambda0_plus",
                "lambda_minus" => "lambda0_minus",
                other => other,
            },
            reason: format!("{prefix}: {reason}"),
        },
        other => other,
    }
}

/// λ⁻ such that contrast(λ⁺, λ⁻) = λ_c.
pub fn lambda_minus_for_contrast(lambda_plus: f64, lc: f64) -> Result<f64> {
    if !(lc > -1.0 && lc < 1.0) {
        return Err(invalid("contrast", format!("must lie in (-1, 1), got {lc}")));
    }
    Ok(lambda_plus * (1.0 + lc) / (1.0 - lc))
}

/// W*q together with the base operator I − 2λ_c₀W*q.
#[derive(Debug, Clone)]
pub struct NeumannOperators {
    wstar: CausalOperator,
    base: CausalOperator,
    lc0: f64,
}

impl NeumannOperators {
    pub fn new(wstar: CausalOperator, lambda0_plus: f64, lambda0_minus: f64) -> Result<Self> {
        let lc0 = contrast(lambda0_plus, lambda0_minus).map_err(|e| rename(e, "lambda0"))?;
        Self::with_contrast(wstar, lc0)
    }

    pub fn with_contrast(wstar: CausalOperator, lc0: f64) -> Result<Self> {
        if wstar.rows() != wstar.cols() {
            return Err(invalid("wstar", "operator must be square"));
        }
        if !(lc0 > -1.0 && lc0 < 1.0) {
            return Err(invalid("lambda0", format!("base contrast must lie in (-1, 1), got {lc0}")));
        }
        let base = CausalOperator::identity(wstar.rows(), wstar.steps()).axpy(-2.0 * lc0, &wstar)?;
        Ok(NeumannOperators { wstar, base, lc0 })
    }

    pub fn base_contrast(&self) -> f64 {
        self.lc0
    }

    pub fn wstar(&self) -> &CausalOperator {
        &self.wstar
    }

    /// R∘W*q as an assembled causal operator.
    pub fn resolvent_wstar(&self) -> Result<CausalOperator> {
        self.base.factor()?.solve_operator(&self.wstar)
    }

    /// ε = 1/(2‖R∘W*q‖); +∞ when the product vanishes.
    pub fn epsilon(&self, norm: NormKind) -> Result<f64> {
        let n = norm.of(&self.resolvent_wstar()?);
        Ok(if n == 0.0 { f64::INFINITY } else { 0.5 / n })
    }

    /// R ρ.
    pub fn resolve(&self, rho: &DensityGrid) -> Result<DensityGrid> {
        self.base.factor()?.solve(rho)
    }

    /// 2^j (R∘W*q)^j ρ, applied factor by factor.
    pub fn apply_kj(&self, j: usize, rho: &DensityGrid) -> Result<DensityGrid> {
        let fac = self.base.factor()?;
        let mut x = rho.clone();
        for _ in 0..j {
            x = fac.solve(&self.wstar.apply(&x)?)?.scale(2.0);
        }
        Ok(x)
    }

    /// max over probes of |(I − 2λ_cW*)ρ − B(I − 2(λ_c − λ_c₀)R W*)ρ|.
    pub fn factorization_check(&self, lc: f64, probes: &[DensityGrid]) -> Result<f64> {
        let fac = self.base.factor()?;
        let delta = lc - self.lc0;
        let mut worst: f64 = 0.0;
        for rho in probes {
            let w = self.wstar.apply(rho)?;
            let lhs = rho.axpy(-2.0 * lc, &w);
            let inner = rho.axpy(-2.0 * delta, &fac.solve(&w)?);
            let rhs = self.base.apply(&inner)?;
            worst = worst.max(lhs.max_abs_diff(&rhs));
        }
        Ok(worst)
    }

    /// Terms τ_j = (λ_c − λ_c₀)^j K_j w for j = 0..=terms.
    pub fn series(&self, w: &DensityGrid, lc: f64, terms: usize) -> Result<Vec<DensityGrid>> {
        let fac = self.base.factor()?;
        let factor = 2.0 * (lc - self.lc0);
        let mut out = Vec::with_capacity(terms + 1);
        out.push(w.clone());
        for j in 1..=terms {
            let next = fac.solve(&self.wstar.apply(&out[j - 1])?)?.scale(factor);
            out.push(next);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesResult {
    pub epsilon: f64,
    pub base_contrast: f64,
    pub contrast: f64,
    /// |λ_c − λ_c₀| < ε.
    pub within_radius: bool,
    pub terms: Vec<DensityGrid>,
    pub partial_sums: Vec<DensityGrid>,
    pub term_norms: Vec<f64>,
}

impl SeriesResult {
    /// ‖τ_{j+1}‖/‖τ_j‖, with NaN where ‖τ_j‖ = 0.
    pub fn ratios(&self) -> Vec<f64> {
        self.term_norms
            .windows(2)
            .map(|w| if w[0] == 0.0 { f64::NAN } else { w[1] / w[0] })
            .collect()
    }

    /// max|S_J − reference| for every J.
    pub fn partial_errors(&self, reference: &DensityGrid) -> Vec<f64> {
        self.partial_sums.iter().map(|s| s.max_abs_diff(reference)).collect()
    }
}

pub fn epsilon_estimate(sys: &TransmissionSystem, lambda0_plus: f64, lambda0_minus: f64, norm: NormKind) -> Result<f64> {
    NeumannOperators::new(sys.wstar.clone(), lambda0_plus, lambda0_minus)?.epsilon(norm)
}

/// Truncated series for ρ⁻; ρ⁻₀ uses the probe λ±, the operators K_j the base λ±₀.
pub fn series_solve(sys: &TransmissionSystem, data: &TransmissionData, sc: &SeriesConfig) -> Result<SeriesResult> {
    sc.validate()?;
    let probe = TransmissionData {
        lambda_plus: sc.lambda_plus,
        lambda_minus: sc.lambda_minus,
        ..data.clone()
    };
    probe.validate()?;
    let ops = NeumannOperators::new(sys.wstar.clone(), sc.lambda0_plus, sc.lambda0_minus)?;
    let epsilon = ops.epsilon(sc.norm)?;
    let lc = sc.contrast();
    let (sigma, _) = sys.first_kind(&probe.f)?;
    let rho0 = sys.rho_minus_zero(&sigma, &probe.g, sc.lambda_plus, sc.lambda_minus)?;
    let w = ops.resolve(&rho0)?;
    let terms = ops.series(&w, lc, sc.terms)?;
    let mut partial_sums: Vec<DensityGrid> = Vec::with_capacity(terms.len());
    for t in &terms {
        let next = match partial_sums.last() {
            Some(prev) => prev.axpy(1.0, t),
            None => t.clone(),
        };
        partial_sums.push(next);
    }
    let term_norms = terms.iter().map(DensityGrid::max_abs).collect();
    Ok(SeriesResult {
        epsilon,
        base_contrast: ops.base_contrast(),
        contrast: lc,
        within_radius: (lc - ops.base_contrast()).abs() < epsilon,
        terms,
        partial_sums,
        term_norms,
    })
}
