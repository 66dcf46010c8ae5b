//! Reference interface, Fourier boundary maps and discrete boundary grids (n = 2).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernel::PeriodicityCell;

/// Counterclockwise circle x(s) = c + r(cos s, sin s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceShape {
    pub center: [f64; 2],
    pub radius: f64,
}

impl ReferenceShape {
    pub fn circle(center: [f64; 2], radius: f64) -> Result<Self> {
        let shape = ReferenceShape { center, radius };
        shape.validate()?;
        Ok(shape)
    }

    /// Circle of radius `radius` centred in the cell.
    pub fn centered(cell: &PeriodicityCell, radius: f64) -> Result<Self> {
        let q = cell.q();
        Self::circle([q[0] / 2.0, q[1] / 2.0], radius)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(invalid("radius", "must be positive"));
        }
        if !self.center.iter().all(|c| c.is_finite()) {
            return Err(invalid("center", "must be finite"));
        }
        Ok(())
    }

    /// |x'(s)|, constant on a circle.
    pub fn speed(&self) -> f64 {
        self.radius
    }

    pub fn point(&self, s: f64) -> [f64; 2] {
        [
            self.center[0] + self.radius * s.cos(),
            self.center[1] + self.radius * s.sin(),
        ]
    }
}

/// φ∘x given by truncated Fourier series in the reference parameter s:
/// φ_x(x(s)) = Σ_k cos_x[k] cos ks + sin_x[k] sin ks, likewise for y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryMap {
    pub degree: usize,
    pub cos_x: Vec<f64>,
    pub sin_x: Vec<f64>,
    pub cos_y: Vec<f64>,
    pub sin_y: Vec<f64>,
}

/// Position and first two s-derivatives of φ∘x at one parameter value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveSample {
    pub p: [f64; 2],
    pub dp: [f64; 2],
    pub ddp: [f64; 2],
}

impl BoundaryMap {
    pub fn zero(degree: usize) -> Self {
        BoundaryMap {
            degree,
            cos_x: vec![0.0; degree + 1],
            sin_x: vec![0.0; degree + 1],
            cos_y: vec![0.0; degree + 1],
            sin_y: vec![0.0; degree + 1],
        }
    }

    /// φ = identity on the reference circle.
    pub fn identity(shape: &ReferenceShape) -> Self {
        Self::affine(shape, 1.0, 1.0)
    }

    /// φ(x) = c + (a(x₁ − c₁), b(x₂ − c₂)) about the circle centre c.
    pub fn affine(shape: &ReferenceShape, a: f64, b: f64) -> Self {
        let mut m = Self::zero(1);
        m.cos_x[0] = shape.center[0];
        m.cos_y[0] = shape.center[1];
        m.cos_x[1] = a * shape.radius;
        m.sin_y[1] = b * shape.radius;
        m
    }

    /// Constant displacement ψ ≡ c.
    pub fn translation(c: [f64; 2]) -> Self {
        let mut m = Self::zero(0);
        m.cos_x[0] = c[0];
        m.cos_y[0] = c[1];
        m
    }

    /// Radial displacement ψ(x) = x − c on the reference circle.
    pub fn dilation(shape: &ReferenceShape) -> Self {
        let mut m = Self::zero(1);
        m.cos_x[1] = shape.radius;
        m.sin_y[1] = shape.radius;
        m
    }

    pub fn validate_shape(&self) -> Result<()> {
        let n = self.degree + 1;
        for (name, v) in [
            ("cos_x", &self.cos_x),
            ("sin_x", &self.sin_x),
            ("cos_y", &self.cos_y),
            ("sin_y", &self.sin_y),
        ] {
            if v.len() != n {
                return Err(Error::InvalidMap(format!(
                    "{name} has {} coefficients, degree {} needs {n}",
                    v.len(),
                    self.degree
                )));
            }
            if v.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidMap(format!("{name} has a non-finite coefficient")));
            }
        }
        Ok(())
    }

    fn padded(&self, degree: usize) -> Self {
        let pad = |v: &Vec<f64>| {
            let mut w = v.clone();
            w.resize(degree + 1, 0.0);
            w
        };
        BoundaryMap {
            degree,
            cos_x: pad(&self.cos_x),
            sin_x: pad(&self.sin_x),
            cos_y: pad(&self.cos_y),
            sin_y: pad(&self.sin_y),
        }
    }

    /// Coefficientwise `self + h·dir`.
    pub fn axpy(&self, dir: &BoundaryMap, h: f64) -> Self {
        let degree = self.degree.max(dir.degree);
        let mut out = self.padded(degree);
        let d = dir.padded(degree);
        for (o, v) in [
            (&mut out.cos_x, &d.cos_x),
            (&mut out.sin_x, &d.sin_x),
            (&mut out.cos_y, &d.cos_y),
            (&mut out.sin_y, &d.sin_y),
        ] {
            for (a, b) in o.iter_mut().zip(v) {
                *a += h * b;
            }
        }
        out
    }

    /// Euclidean norm of the coefficient table.
    pub fn coeff_norm(&self) -> f64 {
        [&self.cos_x, &self.sin_x, &self.cos_y, &self.sin_y]
            .iter()
            .flat_map(|v| v.iter())
            .map(|c| c * c)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.coeff_norm() == 0.0
    }

    pub fn sample(&self, s: f64) -> CurveSample {
        let mut out = CurveSample {
            p: [0.0; 2],
            dp: [0.0; 2],
            ddp: [0.0; 2],
        };
        for k in 0..=self.degree {
            let kf = k as f64;
            let (sn, cs) = (kf * s).sin_cos();
            for (d, (cc, ss)) in [(&self.cos_x, &self.sin_x), (&self.cos_y, &self.sin_y)]
                .into_iter()
                .enumerate()
            {
                let (a, b) = (cc[k], ss[k]);
                out.p[d] += a * cs + b * sn;
                out.dp[d] += kf * (-a * sn + b * cs);
                out.ddp[d] -= kf * kf * (a * cs + b * sn);
            }
        }
        out
    }
}

/// φ ↦ φ + h·ψ, checked against `validate_map`.
pub fn perturb(
    map: &BoundaryMap,
    dir: &BoundaryMap,
    h: f64,
    shape: &ReferenceShape,
    cell: &PeriodicityCell,
    n: usize,
    thresholds: &Thresholds,
) -> Result<BoundaryMap> {
    let out = map.axpy(dir, h);
    validate_map(&out, shape, cell, n, thresholds).into_result()?;
    Ok(out)
}

/// Acceptance thresholds of `validate_map`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    /// Minimum chord/arc ratio, arc measured in mean-speed units.
    pub chord_arc: f64,
    /// Minimum |(φ∘x)'| relative to |x'|.
    pub min_speed: f64,
    /// Minimum distance of every node to ∂Q.
    pub margin: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            chord_arc: 0.1,
            min_speed: 1e-6,
            margin: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapDiagnostics {
    pub chord_arc: f64,
    pub min_speed: f64,
    pub margin: f64,
    pub signed_area: f64,
    pub pass: bool,
    pub failures: Vec<String>,
}

impl MapDiagnostics {
    pub fn into_result(self) -> Result<()> {
        if self.pass {
            Ok(())
        } else {
            Err(Error::InvalidMap(self.failures.join("; ")))
        }
    }
}

/// Injectivity, nondegeneracy, orientation and cell-margin diagnostics.
pub fn validate_map(
    map: &BoundaryMap,
    shape: &ReferenceShape,
    cell: &PeriodicityCell,
    n: usize,
    th: &Thresholds,
) -> MapDiagnostics {
    let mut failures = Vec::new();
    if let Err(e) = map.validate_shape() {
        failures.push(e.to_string());
        return MapDiagnostics {
            chord_arc: f64::NAN,
            min_speed: f64::NAN,
            margin: f64::NAN,
            signed_area: f64::NAN,
            pass: false,
            failures,
        };
    }
    let n = n.max(4);
    let samples: Vec<CurveSample> = (0..n).map(|i| map.sample(node(i, n))).collect();
    let speeds: Vec<f64> = samples.iter().map(|c| hypot(c.dp)).collect();
    let mean_speed = speeds.iter().sum::<f64>() / n as f64;
    let min_speed = speeds.iter().copied().fold(f64::INFINITY, f64::min) / shape.speed();

    let mut chord_arc = f64::INFINITY;
    if mean_speed > 0.0 {
        for i in 0..n {
            for j in i + 1..n {
                let gap = (j - i).min(n - j + i) as f64 * 2.0 * PI / n as f64;
                let chord = hypot([
                    samples[i].p[0] - samples[j].p[0],
                    samples[i].p[1] - samples[j].p[1],
                ]);
                chord_arc = chord_arc.min(chord / (gap * mean_speed));
            }
        }
    } else {
        chord_arc = 0.0;
    }

    let q = cell.q();
    let margin = samples
        .iter()
        .flat_map(|c| (0..2).map(move |d| c.p[d].min(q[d] - c.p[d])))
        .fold(f64::INFINITY, f64::min);

    let signed_area = 0.5
        * samples
            .iter()
            .map(|c| c.p[0] * c.dp[1] - c.p[1] * c.dp[0])
            .sum::<f64>()
        * 2.0
        * PI
        / n as f64;

    if !(min_speed >= th.min_speed) {
        failures.push(format!("differential vanishes (min speed ratio {min_speed:e})"));
    }
    if !(chord_arc >= th.chord_arc) {
        failures.push(format!("chord/arc ratio {chord_arc:e} below {}", th.chord_arc));
    }
    if !(margin >= th.margin) {
        failures.push(format!("cell margin {margin:e} below {}", th.margin));
    }
    if !(signed_area > 0.0) {
        failures.push(format!("curve is not counterclockwise (signed area {signed_area:e})"));
    }
    MapDiagnostics {
        chord_arc,
        min_speed,
        margin,
        signed_area,
        pass: failures.is_empty(),
        failures,
    }
}

#[inline]
fn hypot(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

#[inline]
pub(crate) fn node(i: usize, n: usize) -> f64 {
    2.0 * PI * i as f64 / n as f64
}

/// Nodes, outward normals, quadrature weights and area-element samples of φ(∂Ω).
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryGrid {
    pub shape: ReferenceShape,
    pub map: BoundaryMap,
    pub s: Vec<f64>,
    pub points: Vec<[f64; 2]>,
    pub tangents: Vec<[f64; 2]>,
    pub normals: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub sigma: Vec<f64>,
    pub curvature: Vec<f64>,
}

impl BoundaryGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn length(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn max_weight(&self) -> f64 {
        self.weights.iter().copied().fold(0.0, f64::max)
    }

    /// Targets closer than this to the node set are refused by field evaluation.
    pub fn safety_radius(&self) -> f64 {
        2.0 * self.max_weight()
    }

    /// The same curve sampled at `n` nodes.
    pub fn resample(&self, n: usize) -> BoundaryGrid {
        sample_grid(&self.shape, &self.map, n)
    }
}

/// Discretize φ(∂Ω) at N uniform parameter nodes.
pub fn build_grid(
    shape: &ReferenceShape,
    map: &BoundaryMap,
    cell: &PeriodicityCell,
    n: usize,
    th: &Thresholds,
) -> Result<BoundaryGrid> {
    shape.validate()?;
    if cell.dim() != 2 {
        return Err(invalid("q", "boundary grids are planar"));
    }
    if n < 16 || !n.is_multiple_of(2) {
        return Err(invalid("N", format!("node count must be even and at least 16, got {n}")));
    }
    validate_map(map, shape, cell, n, th).into_result()?;
    Ok(sample_grid(shape, map, n))
}

/// Same curve at a different node count; skips validation.
pub(crate) fn sample_grid(shape: &ReferenceShape, map: &BoundaryMap, n: usize) -> BoundaryGrid {
    let mut g = BoundaryGrid {
        shape: *shape,
        map: map.clone(),
        s: Vec::with_capacity(n),
        points: Vec::with_capacity(n),
        tangents: Vec::with_capacity(n),
        normals: Vec::with_capacity(n),
        weights: Vec::with_capacity(n),
        sigma: Vec::with_capacity(n),
        curvature: Vec::with_capacity(n),
    };
    for i in 0..n {
        let s = node(i, n);
        let c = map.sample(s);
        let speed = hypot(c.dp);
        let tau = [c.dp[0] / speed, c.dp[1] / speed];
        g.s.push(s);
        g.points.push(c.p);
        g.tangents.push(tau);
        g.normals.push([tau[1], -tau[0]]);
        g.weights.push(speed * 2.0 * PI / n as f64);
        g.sigma.push(speed / shape.speed());
        g.curvature
            .push((c.dp[0] * c.ddp[1] - c.dp[1] * c.ddp[0]) / speed.powi(3));
    }
    g
}

/// Region of a point relative to the periodic interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Interior,
    Exterior,
    NearBoundary,
}

/// Minimum-image distance from `pt` to the node set.
pub fn boundary_distance(pt: &[f64; 2], grid: &BoundaryGrid, cell: &PeriodicityCell) -> f64 {
    let mut best = f64::INFINITY;
    for p in &grid.points {
        let mut d = [pt[0] - p[0], pt[1] - p[1]];
        cell.wrap_centered(&mut d);
        best = best.min(hypot(d));
    }
    best
}

/// Classify `pt` as inside S[φ] (interior), S[φ]⁻ (exterior) or too close to call.
pub fn locate(pt: &[f64; 2], grid: &BoundaryGrid, cell: &PeriodicityCell) -> Region {
    if boundary_distance(pt, grid, cell) < grid.safety_radius() {
        return Region::NearBoundary;
    }
    let mut x = *pt;
    cell.wrap_into_cell(&mut x);
    if winding_number(&x, &grid.points).abs() > 0.5 {
        Region::Interior
    } else {
        Region::Exterior
    }
}

fn winding_number(x: &[f64; 2], poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    let mut total = 0.0;
    for i in 0..n {
        let a = [poly[i][0] - x[0], poly[i][1] - x[1]];
        let b = [poly[(i + 1) % n][0] - x[0], poly[(i + 1) % n][1] - x[1]];
        total += (a[0] * b[1] - a[1] * b[0]).atan2(a[0] * b[0] + a[1] * b[1]);
    }
    total / (2.0 * PI)
}

/// Trigonometric interpolation of N-periodic nodal data (N even).
#[derive(Debug, Clone)]
pub struct TrigInterpolator {
    n: usize,
    rows: Vec<Vec<f64>>,
}

impl TrigInterpolator {
    /// Interpolation matrix from N uniform nodes to the parameter values `s`.
    pub fn new(n: usize, s: &[f64]) -> Self {
        let rows = s.iter().map(|&si| cardinal_row(n, si)).collect();
        TrigInterpolator { n, rows }
    }

    /// Interpolation onto the uniform grid of N·factor nodes.
    pub fn upsample(n: usize, factor: usize) -> Self {
        let m = n * factor;
        let s: Vec<f64> = (0..m).map(|i| node(i, m)).collect();
        Self::new(n, &s)
    }

    pub fn source_len(&self) -> usize {
        self.n
    }

    pub fn target_len(&self) -> usize {
        self.rows.len()
    }

    /// out += Iᵀ·fine, folding fine-grid coefficients back onto the nodes.
    pub fn apply_transpose(&self, fine: &[f64], out: &mut [f64]) {
        for (row, f) in self.rows.iter().zip(fine) {
            for (o, c) in out.iter_mut().zip(row) {
                *o += c * f;
            }
        }
    }

    pub fn apply(&self, values: &[f64], out: &mut [f64]) {
        debug_assert_eq!(values.len(), self.n);
        for (o, row) in out.iter_mut().zip(&self.rows) {
            *o = row.iter().zip(values).map(|(a, b)| a * b).sum();
        }
    }
}

/// Weights c_j(s) with Σ_j c_j(s) v_j the even-N trigonometric interpolant.
fn cardinal_row(n: usize, s: f64) -> Vec<f64> {
    let half = n / 2;
    (0..n)
        .map(|j| {
            let d = s - node(j, n);
            let mut acc = 1.0;
            for k in 1..half {
                acc += 2.0 * (k as f64 * d).cos();
            }
            acc += (half as f64 * d).cos();
            acc / n as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (PeriodicityCell, ReferenceShape) {
        let cell = PeriodicityCell::unit(2);
        let shape = ReferenceShape::centered(&cell, 0.25).unwrap();
        (cell, shape)
    }

    #[test]
    fn identity_circle_grid() {
        let (cell, shape) = setup();
        let map = BoundaryMap::identity(&shape);
        let g = build_grid(&shape, &map, &cell, 64, &Thresholds::default()).unwrap();
        assert!((g.length() - 2.0 * PI * 0.25).abs() < 1e-12);
        for i in 0..64 {
            assert!((g.sigma[i] - 1.0).abs() < 1e-14);
            let radial = [
                (g.points[i][0] - 0.5) / 0.25,
                (g.points[i][1] - 0.5) / 0.25,
            ];
            assert!((g.normals[i][0] - radial[0]).abs() < 1e-14);
            assert!((g.normals[i][1] - radial[1]).abs() < 1e-14);
            assert!((g.curvature[i] - 4.0).abs() < 1e-12);
            let dot = g.normals[i][0] * g.tangents[i][0] + g.normals[i][1] * g.tangents[i][1];
            assert!(dot.abs() < 1e-15);
        }
    }

    #[test]
    fn validation_failures() {
        let (cell, shape) = setup();
        let th = Thresholds::default();
        let constant = BoundaryMap::translation([0.5, 0.5]);
        let d = validate_map(&constant, &shape, &cell, 32, &th);
        assert!(!d.pass);
        assert_eq!(d.min_speed, 0.0);

        let touching = BoundaryMap::affine(&shape, 2.0, 2.0);
        let d = validate_map(&touching, &shape, &cell, 32, &th);
        assert!(!d.pass);
        assert!(d.margin.abs() < 1e-15);

        let reversed = BoundaryMap::affine(&shape, 1.0, -1.0);
        assert!(!validate_map(&reversed, &shape, &cell, 32, &th).pass);

        let bad = BoundaryMap {
            degree: 1,
            cos_x: vec![0.5],
            sin_x: vec![0.0, 0.0],
            cos_y: vec![0.5, 0.0],
            sin_y: vec![0.0, 0.25],
        };
        assert!(!validate_map(&bad, &shape, &cell, 32, &th).pass);
        assert!(build_grid(&shape, &BoundaryMap::identity(&shape), &cell, 15, &th).is_err());
    }

    #[test]
    fn perturb_is_linear_in_coefficients() {
        let (cell, shape) = setup();
        let th = Thresholds::default();
        let map = BoundaryMap::identity(&shape);
        let mut psi = BoundaryMap::zero(3);
        psi.cos_x[2] = 0.01;
        psi.sin_y[3] = -0.02;
        assert_eq!(perturb(&map, &psi, 0.0, &shape, &cell, 64, &th).unwrap().cos_x[..2], map.cos_x[..]);
        let there = perturb(&map, &psi, 0.5, &shape, &cell, 64, &th).unwrap();
        let back = perturb(&there, &psi, -0.5, &shape, &cell, 64, &th).unwrap();
        let diff = back.axpy(&map, -1.0);
        assert!(diff.coeff_norm() < 1e-17);
        let step = there.axpy(&map, -1.0);
        assert!((step.coeff_norm() - 0.5 * psi.coeff_norm()).abs() < 1e-17);
    }

    #[test]
    fn locate_examples() {
        let (cell, shape) = setup();
        let g = build_grid(&shape, &BoundaryMap::identity(&shape), &cell, 64, &Thresholds::default())
            .unwrap();
        assert_eq!(locate(&[0.5, 0.5], &g, &cell), Region::Interior);
        assert_eq!(locate(&[0.0, 0.0], &g, &cell), Region::Exterior);
        assert_eq!(locate(&g.points[0], &g, &cell), Region::NearBoundary);
        assert_eq!(locate(&[1.5, -0.5], &g, &cell), Region::Interior);
    }

    #[test]
    fn trig_interpolation_is_exact_on_band_limited_data() {
        let n = 16;
        let f = |s: f64| 1.0 + (3.0 * s).cos() - 0.5 * (5.0 * s).sin();
        let vals: Vec<f64> = (0..n).map(|i| f(node(i, n))).collect();
        let s = [0.1, 1.3, 2.9, 6.0];
        let interp = TrigInterpolator::new(n, &s);
        let mut out = vec![0.0; 4];
        interp.apply(&vals, &mut out);
        for (o, si) in out.iter().zip(&s) {
            assert!((o - f(*si)).abs() < 1e-13);
        }
        let up = TrigInterpolator::upsample(n, 4);
        let mut fine = vec![0.0; 64];
        up.apply(&vals, &mut fine);
        assert!((fine[4] - vals[1]).abs() < 1e-14);
    }
}
