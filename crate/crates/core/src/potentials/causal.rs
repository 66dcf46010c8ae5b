//! Block-lower-triangular Toeplitz operators and causal time marching.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector, DVectorView, LU};
use serde::{Deserialize, Serialize};

use super::DensityGrid;
use crate::error::{invalid, Error, Result};

/// Which layer operator a causal matrix discretizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Vq,
    Vql(usize),
    WstarQ,
    Wq,
    V,
    Vl(usize),
    Wstar,
    W,
    /// Remainder-kernel part of Vq (images z ≠ 0, unwrapped).
    Remainder,
    /// Sums, products and block compositions of the above.
    Composite,
}

impl OperatorKind {
    pub fn is_periodic(self) -> bool {
        matches!(self, Self::Vq | Self::Vql(_) | Self::WstarQ | Self::Wq)
    }

    pub fn name(self) -> String {
        match self {
            Self::Vq => "Vq".into(),
            Self::Vql(l) => format!("Vq{l}"),
            Self::WstarQ => "WstarQ".into(),
            Self::Wq => "Wq".into(),
            Self::V => "V".into(),
            Self::Vl(l) => format!("V{l}"),
            Self::Wstar => "Wstar".into(),
            Self::W => "W".into(),
            Self::Remainder => "R".into(),
            Self::Composite => "composite".into(),
        }
    }
}

/// (Aρ)_k = Σ_{m ≤ k} A_m ρ_{k−m} with A_m the stored Toeplitz blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalOperator {
    pub kind: OperatorKind,
    blocks: Vec<DMatrix<f64>>,
}

impl CausalOperator {
    pub fn new(kind: OperatorKind, blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        let first = blocks
            .first()
            .ok_or_else(|| invalid("blocks", "a causal operator needs at least one block"))?;
        let shape = first.shape();
        if let Some(b) = blocks.iter().find(|b| b.shape() != shape) {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{} blocks", shape.0, shape.1),
                got: format!("{}x{}", b.nrows(), b.ncols()),
            });
        }
        Ok(CausalOperator { kind, blocks })
    }

    pub fn identity(n: usize, m: usize) -> Self {
        Self::scaled_identity(n, m, 1.0)
    }

    pub fn scaled_identity(n: usize, m: usize, s: f64) -> Self {
        let mut blocks = vec![DMatrix::zeros(n, n); m];
        blocks[0] = DMatrix::identity(n, n) * s;
        CausalOperator {
            kind: OperatorKind::Composite,
            blocks,
        }
    }

    pub fn zeros(rows: usize, cols: usize, m: usize) -> Self {
        CausalOperator {
            kind: OperatorKind::Composite,
            blocks: vec![DMatrix::zeros(rows, cols); m],
        }
    }

    pub fn steps(&self) -> usize {
        self.blocks.len()
    }

    pub fn rows(&self) -> usize {
        self.blocks[0].nrows()
    }

    pub fn cols(&self) -> usize {
        self.blocks[0].ncols()
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn block(&self, m: usize) -> &DMatrix<f64> {
        &self.blocks[m]
    }

    fn check_input(&self, rho: &DensityGrid) -> Result<()> {
        if rho.steps() != self.steps() || rho.nodes() != self.cols() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} slabs x {} nodes", self.steps(), self.cols()),
                got: format!("{} slabs x {} nodes", rho.steps(), rho.nodes()),
            });
        }
        Ok(())
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.steps() != other.steps() || self.rows() != other.rows() || self.cols() != other.cols() {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}x{}", self.steps(), self.rows(), self.cols()),
                got: format!("{}x{}x{}", other.steps(), other.rows(), other.cols()),
            });
        }
        Ok(())
    }

    /// Causal block convolution.
    pub fn apply(&self, rho: &DensityGrid) -> Result<DensityGrid> {
        self.check_input(rho)?;
        let mut out = DensityGrid::zeros(self.steps(), self.rows());
        for k in 0..self.steps() {
            let mut acc = DVector::zeros(self.rows());
            for j in 0..=k {
                let x = DVectorView::from_slice(rho.slab(j), self.cols());
                acc.gemv(1.0, &self.blocks[k - j], &x, 1.0);
            }
            out.slab_mut(k).copy_from_slice(acc.as_slice());
        }
        Ok(out)
    }

    /// self + s·other.
    pub fn axpy(&self, s: f64, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        Ok(CausalOperator {
            kind: OperatorKind::Composite,
            blocks: self
                .blocks
                .iter()
                .zip(&other.blocks)
                .map(|(a, b)| a + b * s)
                .collect(),
        })
    }

    pub fn scale(&self, s: f64) -> Self {
        CausalOperator {
            kind: OperatorKind::Composite,
            blocks: self.blocks.iter().map(|a| a * s).collect(),
        }
    }

    /// Causal product (self ∘ other)_m = Σ_l self_l other_{m−l}.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.steps() != other.steps() || self.cols() != other.rows() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} slabs, {} inner rows", self.steps(), self.cols()),
                got: format!("{} slabs, {} inner rows", other.steps(), other.rows()),
            });
        }
        let blocks = (0..self.steps())
            .map(|m| {
                let mut acc = DMatrix::zeros(self.rows(), other.cols());
                for l in 0..=m {
                    acc.gemm(1.0, &self.blocks[l], &other.blocks[m - l], 1.0);
                }
                acc
            })
            .collect();
        Ok(CausalOperator {
            kind: OperatorKind::Composite,
            blocks,
        })
    }

    /// 2×2 block operator [[a, b], [c, d]] acting on stacked densities.
    pub fn block2(a: &Self, b: &Self, c: &Self, d: &Self) -> Result<Self> {
        a.same_shape(b)?;
        a.same_shape(c)?;
        a.same_shape(d)?;
        let (r, k) = (a.rows(), a.cols());
        let blocks = (0..a.steps())
            .map(|m| {
                let mut out = DMatrix::zeros(2 * r, 2 * k);
                out.view_mut((0, 0), (r, k)).copy_from(&a.blocks[m]);
                out.view_mut((0, k), (r, k)).copy_from(&b.blocks[m]);
                out.view_mut((r, 0), (r, k)).copy_from(&c.blocks[m]);
                out.view_mut((r, k), (r, k)).copy_from(&d.blocks[m]);
                out
            })
            .collect();
        Ok(CausalOperator {
            kind: OperatorKind::Composite,
            blocks,
        })
    }

    /// Induced ∞-norm of the full (M·rows)×(M·cols) lower-triangular matrix.
    pub fn inf_norm(&self) -> f64 {
        (0..self.rows())
            .map(|i| {
                self.blocks
                    .iter()
                    .map(|b| b.row(i).iter().map(|v| v.abs()).sum::<f64>())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// Induced 1-norm of the full lower-triangular matrix.
    pub fn one_norm(&self) -> f64 {
        (0..self.cols())
            .map(|j| {
                self.blocks
                    .iter()
                    .map(|b| b.column(j).iter().map(|v| v.abs()).sum::<f64>())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.same_shape(other)?;
        Ok(self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max))
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks.iter().map(|b| b.amax()).fold(0.0, f64::max)
    }

    /// LU factorization of the slab-0 block, reused by every marching step.
    pub fn factor(&self) -> Result<Factored<'_>> {
        if self.rows() != self.cols() {
            return Err(invalid("operator", "only square causal operators can be inverted"));
        }
        let a0 = &self.blocks[0];
        let lu = a0.clone().lu();
        let inv = lu.try_inverse().ok_or(Error::SingularBlock {
            condition: f64::INFINITY,
        })?;
        let condition = one_norm(a0) * one_norm(&inv);
        if !condition.is_finite() || condition > 1e14 {
            return Err(Error::SingularBlock { condition });
        }
        Ok(Factored {
            op: self,
            lu,
            condition,
        })
    }

    pub fn solve(&self, rhs: &DensityGrid) -> Result<DensityGrid> {
        self.factor()?.solve(rhs)
    }

    /// Causal inverse, blocks B_m = −A_0⁻¹ Σ_{l=1..m} A_l B_{m−l}.
    pub fn inverse(&self) -> Result<Self> {
        let f = self.factor()?;
        let id = CausalOperator::identity(self.rows(), self.steps());
        f.solve_operator(&id)
    }

    /// Flat binary dump: magic "PHCO", u32 version, u32 steps, u32 rows, u32 cols,
    /// then f64 little-endian entries, block index outermost, rows row-major.
    pub fn write_binary(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(b"PHCO")?;
        for v in [1u32, self.steps() as u32, self.rows() as u32, self.cols() as u32] {
            w.write_all(&v.to_le_bytes())?;
        }
        for b in &self.blocks {
            for i in 0..b.nrows() {
                for j in 0..b.ncols() {
                    w.write_all(&b[(i, j)].to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_binary(mut r: impl Read) -> Result<Self> {
        let io = |e: std::io::Error| invalid("operator dump", e.to_string());
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != b"PHCO" {
            return Err(invalid("operator dump", "bad magic"));
        }
        let mut head = [0u32; 4];
        for h in head.iter_mut() {
            let mut b = [0u8; 4];
            r.read_exact(&mut b).map_err(io)?;
            *h = u32::from_le_bytes(b);
        }
        if head[0] != 1 {
            return Err(invalid("operator dump", format!("unsupported version {}", head[0])));
        }
        let (steps, rows, cols) = (head[1] as usize, head[2] as usize, head[3] as usize);
        let mut blocks = Vec::with_capacity(steps);
        for _ in 0..steps {
            let mut m = DMatrix::zeros(rows, cols);
            for i in 0..rows {
                for j in 0..cols {
                    let mut b = [0u8; 8];
                    r.read_exact(&mut b).map_err(io)?;
                    m[(i, j)] = f64::from_le_bytes(b);
                }
            }
            blocks.push(m);
        }
        CausalOperator::new(OperatorKind::Composite, blocks)
    }

    /// CSV dump with columns block,row,col,value.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "block,row,col,value")?;
        for (m, b) in self.blocks.iter().enumerate() {
            for i in 0..b.nrows() {
                for j in 0..b.ncols() {
                    writeln!(w, "{m},{i},{j},{:?}", b[(i, j)])?;
                }
            }
        }
        Ok(())
    }
}

fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// A causal operator with its slab-0 block factored.
pub struct Factored<'a> {
    op: &'a CausalOperator,
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    condition: f64,
}

impl Factored<'_> {
    /// ‖A₀‖₁‖A₀⁻¹‖₁.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// Time marching x_k = A₀⁻¹(b_k − Σ_{m=1..k} A_m x_{k−m}).
    pub fn solve(&self, rhs: &DensityGrid) -> Result<DensityGrid> {
        self.op.check_input(rhs)?;
        let n = self.op.rows();
        let mut x = DensityGrid::zeros(self.op.steps(), n);
        for k in 0..self.op.steps() {
            let mut b = DVector::from_column_slice(rhs.slab(k));
            for m in 1..=k {
                let xv = DVectorView::from_slice(x.slab(k - m), n);
                b.gemv(-1.0, &self.op.blocks[m], &xv, 1.0);
            }
            let sol = self.lu.solve(&b).ok_or(Error::SingularBlock {
                condition: self.condition,
            })?;
            x.slab_mut(k).copy_from_slice(sol.as_slice());
        }
        Ok(x)
    }

    /// Solve A X = B for a causal operator B.
    pub fn solve_operator(&self, rhs: &CausalOperator) -> Result<CausalOperator> {
        if rhs.steps() != self.op.steps() || rhs.rows() != self.op.rows() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} slabs x {} rows", self.op.steps(), self.op.rows()),
                got: format!("{} slabs x {} rows", rhs.steps(), rhs.rows()),
            });
        }
        let mut out: Vec<DMatrix<f64>> = Vec::with_capacity(rhs.steps());
        for m in 0..rhs.steps() {
            let mut b = rhs.blocks[m].clone();
            for l in 1..=m {
                b.gemm(-1.0, &self.op.blocks[l], &out[m - l], 1.0);
            }
            let x = self.lu.solve(&b).ok_or(Error::SingularBlock {
                condition: self.condition,
            })?;
            out.push(x);
        }
        Ok(CausalOperator {
            kind: OperatorKind::Composite,
            blocks: out,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_op(rng: &mut ChaCha8Rng, n: usize, m: usize, diag: f64) -> CausalOperator {
        let blocks = (0..m)
            .map(|l| {
                let mut b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0) / n as f64);
                if l == 0 {
                    for i in 0..n {
                        b[(i, i)] += diag;
                    }
                }
                b
            })
            .collect();
        CausalOperator::new(OperatorKind::Composite, blocks).unwrap()
    }

    fn random_density(rng: &mut ChaCha8Rng, m: usize, n: usize) -> DensityGrid {
        let mut d = DensityGrid::zeros(m, n);
        d.values_mut().iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        d
    }

    #[test]
    fn apply_is_linear_and_causal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let op = random_op(&mut rng, 5, 4, 1.0);
        let a = random_density(&mut rng, 4, 5);
        let b = random_density(&mut rng, 4, 5);
        let zero = op.apply(&DensityGrid::zeros(4, 5)).unwrap();
        assert!(zero.max_abs() == 0.0);
        let lhs = op.apply(&a.axpy(1.0, &b)).unwrap();
        let rhs = op.apply(&a).unwrap().axpy(1.0, &op.apply(&b).unwrap());
        assert!(lhs.max_abs_diff(&rhs) < 1e-14);
        let mut cut = a.clone();
        for k in 1..4 {
            cut.slab_mut(k).fill(0.0);
        }
        assert_eq!(op.apply(&cut).unwrap().slab(0), op.apply(&a).unwrap().slab(0));
    }

    #[test]
    fn solve_inverse_and_compose_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let op = random_op(&mut rng, 6, 5, 2.0);
        let rhs = random_density(&mut rng, 5, 6);
        let x = op.solve(&rhs).unwrap();
        assert!(op.apply(&x).unwrap().max_abs_diff(&rhs) < 1e-13);
        let inv = op.inverse().unwrap();
        assert!(inv.apply(&rhs).unwrap().max_abs_diff(&x) < 1e-13);
        let id = op.compose(&inv).unwrap();
        assert!(id.max_abs_diff(&CausalOperator::identity(6, 5)).unwrap() < 1e-13);
    }

    #[test]
    fn shape_errors() {
        let op = CausalOperator::identity(3, 2);
        assert!(matches!(
            op.apply(&DensityGrid::zeros(2, 4)),
            Err(Error::ShapeMismatch { .. })
        ));
        let singular = CausalOperator::zeros(3, 3, 2);
        assert!(matches!(singular.solve(&DensityGrid::zeros(2, 3)), Err(Error::SingularBlock { .. })));
    }

    #[test]
    fn binary_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let op = random_op(&mut rng, 3, 3, 1.0);
        let mut buf = Vec::new();
        op.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 20 + 8 * 27);
        let back = CausalOperator::read_binary(buf.as_slice()).unwrap();
        assert_eq!(back.blocks(), op.blocks());
    }

    #[test]
    fn inf_norm_of_full_matrix() {
        let blocks = vec![
            DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 0.0, 1.0]),
            DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, -4.0]),
        ];
        let op = CausalOperator::new(OperatorKind::Composite, blocks).unwrap();
        assert_eq!(op.inf_norm(), 5.0);
    }
}
