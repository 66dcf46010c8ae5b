//! Versioned JSON experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CliError;
use crate::geometry::{BoundaryMap, ReferenceShape, Thresholds};
use crate::kernel::{LatticeSumConfig, PeriodicityCell};
use crate::neumann::NormKind;
use crate::potentials::{DensityGrid, JumpKind, OperatorKind, TimeGrid};
use crate::sensitivity::DEFAULT_STEPS;
use crate::transmission::ProblemSetup;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_cell")]
    pub cell: PeriodicityCell,
    /// Reference circle; centred with radius 0.25 when absent.
    #[serde(default)]
    pub shape: Option<ReferenceShape>,
    /// Identity when absent.
    #[serde(default)]
    pub map: Option<BoundaryMap>,
    #[serde(rename = "N", default = "default_n")]
    pub n: usize,
    #[serde(rename = "M", default = "default_m")]
    pub m: usize,
    #[serde(rename = "T", default = "default_t")]
    pub t_end: f64,
    #[serde(default)]
    pub lattice: LatticeSumConfig,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default = "one")]
    pub lambda_plus: f64,
    #[serde(default = "three")]
    pub lambda_minus: f64,
    #[serde(default)]
    pub lambda0_plus: Option<f64>,
    #[serde(default)]
    pub lambda0_minus: Option<f64>,
    #[serde(rename = "J", default = "default_terms")]
    pub terms: usize,
    /// |λ_c − λ_c₀|/ε; replaces the probe λ⁻ when present.
    #[serde(default)]
    pub ratio_target: Option<f64>,
    #[serde(default)]
    pub norm: NormKind,
    #[serde(default)]
    pub f_spec: DensitySpec,
    #[serde(default)]
    pub g_spec: DensitySpec,
    /// (t, x, y) evaluation points.
    #[serde(default)]
    pub targets: Vec<[f64; 3]>,
    #[serde(default)]
    pub method: SolveMethod,
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub kernel: KernelEvalSpec,
    #[serde(default)]
    pub jump: JumpSpec,
    #[serde(default)]
    pub probe: ProbeSpec,
    #[serde(default)]
    pub converge: ConvergeSpec,
}

fn default_seed() -> u64 {
    0
}
fn default_cell() -> PeriodicityCell {
    PeriodicityCell::unit(2)
}
fn default_n() -> usize {
    64
}
fn default_m() -> usize {
    32
}
fn default_t() -> f64 {
    0.05
}
fn one() -> f64 {
    1.0
}
fn three() -> f64 {
    3.0
}
fn default_terms() -> usize {
    12
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str(&format!("{{\"version\": {SCHEMA_VERSION}}}")).expect("defaults parse")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    #[default]
    Full,
    Reduced,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trig {
    #[default]
    One,
    Cos,
    Sin,
}

/// coef · t^t_power · trig(k s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeparableTerm {
    pub coef: f64,
    #[serde(default)]
    pub t_power: u32,
    #[serde(default)]
    pub trig: Trig,
    #[serde(default)]
    pub k: u32,
}

impl SeparableTerm {
    fn eval(&self, t: f64, s: f64) -> f64 {
        let ks = self.k as f64 * s;
        let trig = match self.trig {
            Trig::One => 1.0,
            Trig::Cos => ks.cos(),
            Trig::Sin => ks.sin(),
        };
        self.coef * t.powi(self.t_power as i32) * trig
    }
}

/// Boundary data on the (slab end, node) grid.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensitySpec {
    #[default]
    Zero,
    Separable { terms: Vec<SeparableTerm> },
    /// Long-format CSV with header `k,i,value`; relative paths resolve against the config file.
    Csv { path: PathBuf },
}

impl DensitySpec {
    /// t·(2 + cos s).
    pub fn jump_default() -> Self {
        DensitySpec::Separable {
            terms: vec![
                SeparableTerm {
                    coef: 2.0,
                    t_power: 1,
                    trig: Trig::One,
                    k: 0,
                },
                SeparableTerm {
                    coef: 1.0,
                    t_power: 1,
                    trig: Trig::Cos,
                    k: 1,
                },
            ],
        }
    }

    pub fn grid(&self, field: &str, tg: &TimeGrid, s: &[f64], base: &Path) -> Result<DensityGrid, CliError> {
        match self {
            DensitySpec::Zero => Ok(DensityGrid::zeros(tg.steps, s.len())),
            DensitySpec::Separable { terms } => Ok(DensityGrid::sample(tg, s, |t, si| {
                terms.iter().map(|term| term.eval(t, si)).sum()
            })),
            DensitySpec::Csv { path } => read_grid(field, &base.join(path), tg.steps, s.len()),
        }
    }
}

fn read_grid(field: &str, path: &Path, m: usize, n: usize) -> Result<DensityGrid, CliError> {
    let schema = |message: String| CliError::schema(format!("{field}.path"), message);
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| schema(format!("{}: {e}", path.display())))?;
    let mut values = vec![f64::NAN; m * n];
    for record in reader.deserialize::<(usize, usize, f64)>() {
        let (k, i, v) = record.map_err(|e| schema(format!("{}: {e}", path.display())))?;
        if k >= m || i >= n {
            return Err(schema(format!("entry ({k}, {i}) outside the {m}x{n} grid")));
        }
        values[k * n + i] = v;
    }
    if let Some(pos) = values.iter().position(|v| v.is_nan()) {
        return Err(schema(format!("missing entry ({}, {})", pos / n, pos % n)));
    }
    DensityGrid::from_values(m, n, values).map_err(|e| schema(e.to_string()))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelChoice {
    #[default]
    Periodic,
    Free,
    Remainder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelEvalSpec {
    pub which: KernelChoice,
    /// (t, x₁, …, x_n) rows.
    pub points: Vec<Vec<f64>>,
    /// Additional seeded points: t log-uniform in [0.01, 1], x uniform in Q.
    pub random: usize,
}

impl Default for KernelEvalSpec {
    fn default() -> Self {
        KernelEvalSpec {
            which: KernelChoice::Periodic,
            points: Vec::new(),
            random: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JumpSpec {
    pub kind: JumpKind,
    pub density: DensitySpec,
}

impl Default for JumpSpec {
    fn default() -> Self {
        JumpSpec {
            kind: JumpKind::SingleNormalDerivative,
            density: DensitySpec::jump_default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeTarget {
    #[default]
    Operator,
    Solution,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DirectionSpec {
    #[default]
    Dilation,
    Translation {
        c: [f64; 2],
    },
    Map {
        map: BoundaryMap,
    },
    LambdaMinus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeSpec {
    pub target: ProbeTarget,
    pub direction: DirectionSpec,
    pub operator: OperatorKind,
    pub h: Vec<f64>,
    /// Density the operator probe acts on.
    pub density: DensitySpec,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        ProbeSpec {
            target: ProbeTarget::Operator,
            direction: DirectionSpec::Dilation,
            operator: OperatorKind::Vq,
            h: DEFAULT_STEPS.to_vec(),
            density: DensitySpec::jump_default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    #[default]
    JumpCheck,
    Manufactured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergeSpec {
    pub pipeline: Pipeline,
    /// (N, M) rungs.
    pub ladder: Vec<[usize; 2]>,
    /// Manufactured reference; derived from the ladder when absent.
    pub reference: Option<[usize; 2]>,
}

impl Default for ConvergeSpec {
    fn default() -> Self {
        ConvergeSpec {
            pipeline: Pipeline::JumpCheck,
            ladder: vec![[32, 16], [64, 32], [128, 64]],
            reference: None,
        }
    }
}

/// A parsed configuration with its hash and source directory.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub sha256: String,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn from_str(text: &str, base_dir: PathBuf) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::schema(if path == "." { String::new() } else { path }, e.into_inner().to_string())
        })?;
        Self::new(config, base_dir)
    }

    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::schema("config", format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_str(&text, base)
    }

    pub fn new(config: ExperimentConfig, base_dir: PathBuf) -> Result<Self, CliError> {
        config.validate()?;
        let canonical = serde_json::to_vec(&config).expect("config serializes");
        let sha256 = hex::encode(Sha256::digest(&canonical));
        Ok(LoadedConfig {
            config,
            sha256,
            base_dir,
        })
    }
}

fn positive(field: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(CliError::schema(field, format!("must be positive, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.version != SCHEMA_VERSION {
            return Err(CliError::schema(
                "version",
                format!("unsupported schema version {}, expected {SCHEMA_VERSION}", self.version),
            ));
        }
        positive("lambda_plus", self.lambda_plus)?;
        positive("lambda_minus", self.lambda_minus)?;
        if let Some(v) = self.lambda0_plus {
            positive("lambda0_plus", v)?;
        }
        if let Some(v) = self.lambda0_minus {
            positive("lambda0_minus", v)?;
        }
        if let Some(r) = self.ratio_target {
            positive("ratio_target", r)?;
        }
        if let Some(t) = self.tolerance {
            positive("tolerance", t)?;
        }
        positive("T", self.t_end)?;
        if self.m < 1 {
            return Err(CliError::schema("M", "at least one slab is required"));
        }
        self.lattice.validate().map_err(|e| CliError::from_core(e, "lattice"))?;
        for (i, p) in self.targets.iter().enumerate() {
            if p.iter().any(|v| !v.is_finite()) || p[0] < 0.0 {
                return Err(CliError::schema(format!("targets[{i}]"), "needs finite (t >= 0, x, y)"));
            }
        }
        let dim = self.cell.dim();
        for (i, p) in self.kernel.points.iter().enumerate() {
            if p.len() != dim + 1 {
                return Err(CliError::schema(
                    format!("kernel.points[{i}]"),
                    format!("expected {} entries (t and {dim} coordinates)", dim + 1),
                ));
            }
        }
        for (i, h) in self.probe.h.iter().enumerate() {
            positive(&format!("probe.h[{i}]"), *h)?;
        }
        if self.probe.h.windows(2).any(|w| w[1] >= w[0]) {
            return Err(CliError::schema("probe.h", "steps must be strictly decreasing"));
        }
        if self.converge.ladder.is_empty() {
            return Err(CliError::schema("converge.ladder", "ladder is empty"));
        }
        let strictly_refining = self.converge.ladder.windows(2).all(|w| {
            w[1][0] >= w[0][0] && w[1][1] >= w[0][1] && (w[1][0] > w[0][0] || w[1][1] > w[0][1])
        });
        if !strictly_refining {
            return Err(CliError::schema("converge.ladder", "rungs must be strictly refining"));
        }
        Ok(())
    }

    pub fn shape(&self) -> Result<ReferenceShape, CliError> {
        match self.shape {
            Some(s) => s.validate().map(|_| s).map_err(|e| CliError::from_core(e, "shape")),
            None => ReferenceShape::centered(&self.cell, 0.25).map_err(|e| CliError::from_core(e, "shape")),
        }
    }

    /// The cell must be planar for everything but `kernel-eval`.
    pub fn setup(&self) -> Result<ProblemSetup, CliError> {
        if self.cell.dim() != 2 {
            return Err(CliError::schema("cell.q", "boundary pipelines need a planar cell"));
        }
        let shape = self.shape()?;
        let map = self.map.clone().unwrap_or_else(|| BoundaryMap::identity(&shape));
        map.validate_shape().map_err(|e| CliError::from_core(e, "map"))?;
        Ok(ProblemSetup {
            cell: self.cell.clone(),
            shape,
            map,
            t_end: self.t_end,
            lattice: self.lattice,
            thresholds: self.thresholds,
        })
    }
}
