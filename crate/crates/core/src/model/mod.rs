//! Numerical layer: vertically partitioned data, the DEO-constrained
//! logistic objective, its Lagrangian and every partial gradient.
//!
//! Nothing in here knows about parties or servers. All functions are pure,
//! so they can be called from any number of workers at once.

pub(crate) mod grad;
mod loss;

pub use grad::{
    descent_step, finite_diff_check, grad_block, grad_block_at_margins, grad_lambda,
    grad_lambda_from_gap, grad_lambda_unregularized, logistic_derivative,
};
pub use loss::{
    deo_from_margins, deo_gap, group_loss, group_loss_from_margins, lagrangian, loss_from_margins,
    loss_value, margins, per_sample_loss, reg_lagrangian, regularizer, softplus,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Protected-group membership of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Group {
    A,
    B,
}

impl Group {
    pub fn other(self) -> Group {
        match self {
            Group::A => Group::B,
            Group::B => Group::A,
        }
    }

    pub fn tag(self) -> char {
        match self {
            Group::A => 'a',
            Group::B => 'b',
        }
    }
}

/// One party's feature matrix `(X)_k`, row-major `n x m_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBlock {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureBlock {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "block data has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Dimension(format!("row {i} has {} columns, expected {cols}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Per-sample contributions `(X_i)_k^T theta_k`, samples in index order.
    pub fn contributions(&self, theta_k: &[f64]) -> Vec<f64> {
        debug_assert_eq!(theta_k.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), theta_k)).collect()
    }

    /// `X_k^T w`, accumulated sample-major.
    pub fn transpose_mul(&self, w: &[f64]) -> Vec<f64> {
        debug_assert_eq!(w.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, &wi) in w.iter().enumerate() {
            for (o, &x) in out.iter_mut().zip(self.row(i)) {
                *o += wi * x;
            }
        }
        out
    }

    fn push_constant_column(&mut self, value: f64) {
        let mut data = Vec::with_capacity(self.rows * (self.cols + 1));
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.push(value);
        }
        self.cols += 1;
        self.data = data;
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// `n` samples whose features are split column-wise across `K` parties.
///
/// Labels live in `{-1, +1}`. The positive-label index sets per group are
/// derived once at construction and kept sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct VerticalDataset {
    blocks: Vec<FeatureBlock>,
    labels: Vec<f64>,
    groups: Vec<Group>,
    pos_idx_a: Vec<usize>,
    pos_idx_b: Vec<usize>,
    /// Coordinate `(party, column)` excluded from the regularizer.
    unpenalized: Option<(usize, usize)>,
}

impl VerticalDataset {
    pub fn new(blocks: Vec<FeatureBlock>, labels: Vec<f64>, groups: Vec<Group>) -> Result<Self> {
        let n = labels.len();
        if groups.len() != n {
            return Err(Error::Dimension(format!("{} group tags for {n} labels", groups.len())));
        }
        if blocks.is_empty() {
            return Err(Error::Config("a dataset needs at least one feature block".into()));
        }
        for (k, b) in blocks.iter().enumerate() {
            if b.rows() != n {
                return Err(Error::Dimension(format!("block {} has {} rows, expected {n}", k + 1, b.rows())));
            }
        }
        if let Some(i) = labels.iter().position(|&y| y != 1.0 && y != -1.0) {
            return Err(Error::Data(format!("label {} at sample {i} is not in {{-1, +1}}", labels[i])));
        }
        let positive_in = |g: Group| -> Vec<usize> {
            (0..n).filter(|&i| labels[i] == 1.0 && groups[i] == g).collect()
        };
        let pos_idx_a = positive_in(Group::A);
        let pos_idx_b = positive_in(Group::B);
        Ok(Self { blocks, labels, groups, pos_idx_a, pos_idx_b, unpenalized: None })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn parties(&self) -> usize {
        self.blocks.len()
    }

    pub fn widths(&self) -> Vec<usize> {
        self.blocks.iter().map(FeatureBlock::cols).collect()
    }

    pub fn m(&self) -> usize {
        self.blocks.iter().map(FeatureBlock::cols).sum()
    }

    pub fn block(&self, k: usize) -> &FeatureBlock {
        &self.blocks[k]
    }

    pub fn blocks(&self) -> &[FeatureBlock] {
        &self.blocks
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn pos_idx(&self, g: Group) -> &[usize] {
        match g {
            Group::A => &self.pos_idx_a,
            Group::B => &self.pos_idx_b,
        }
    }

    pub fn unpenalized(&self) -> Option<(usize, usize)> {
        self.unpenalized
    }

    /// Fails unless both protected index sets are non-empty.
    pub fn require_groups(&self) -> Result<()> {
        if self.pos_idx_a.is_empty() {
            return Err(Error::DegenerateGroup('a'));
        }
        if self.pos_idx_b.is_empty() {
            return Err(Error::DegenerateGroup('b'));
        }
        Ok(())
    }

    /// Appends an all-ones column to the last party's block and leaves that
    /// coordinate out of the regularizer.
    pub fn with_intercept(mut self) -> Self {
        let last = self.blocks.len() - 1;
        self.blocks[last].push_constant_column(1.0);
        self.unpenalized = Some((last, self.blocks[last].cols() - 1));
        self
    }

    /// Same samples with the two protected groups relabeled.
    pub fn swap_groups(&self) -> Self {
        let groups = self.groups.iter().map(|g| g.other()).collect();
        Self {
            blocks: self.blocks.clone(),
            labels: self.labels.clone(),
            groups,
            pos_idx_a: self.pos_idx_b.clone(),
            pos_idx_b: self.pos_idx_a.clone(),
            unpenalized: self.unpenalized,
        }
    }

    /// Row-major dense `n x m` copy with blocks concatenated in party order.
    pub fn dense(&self) -> Vec<Vec<f64>> {
        (0..self.n())
            .map(|i| self.blocks.iter().flat_map(|b| b.row(i).iter().copied()).collect())
            .collect()
    }
}

/// The `K` parameter blocks `theta_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBlocks {
    pub blocks: Vec<Vec<f64>>,
}

impl ParamBlocks {
    pub fn zeros(widths: &[usize]) -> Self {
        Self { blocks: widths.iter().map(|&w| vec![0.0; w]).collect() }
    }

    pub fn from_flat(widths: &[usize], flat: &[f64]) -> Result<Self> {
        let total: usize = widths.iter().sum();
        if flat.len() != total {
            return Err(Error::Dimension(format!("{} parameters for total width {total}", flat.len())));
        }
        let mut blocks = Vec::with_capacity(widths.len());
        let mut at = 0;
        for &w in widths {
            blocks.push(flat[at..at + w].to_vec());
            at += w;
        }
        Ok(Self { blocks })
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.blocks.iter().flatten().copied().collect()
    }

    pub fn widths(&self) -> Vec<usize> {
        self.blocks.iter().map(Vec::len).collect()
    }

    pub fn check_against(&self, data: &VerticalDataset) -> Result<()> {
        if self.blocks.len() != data.parties() {
            return Err(Error::Dimension(format!(
                "{} parameter blocks for {} parties",
                self.blocks.len(),
                data.parties()
            )));
        }
        for (k, (t, b)) in self.blocks.iter().zip(data.blocks()).enumerate() {
            if t.len() != b.cols() {
                return Err(Error::Dimension(format!(
                    "parameter block {} has length {}, party holds {} features",
                    k + 1,
                    t.len(),
                    b.cols()
                )));
            }
        }
        Ok(())
    }
}

/// Nonnegative multipliers for the two one-sided DEO constraints.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DualPair {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl DualPair {
    pub fn new(lambda1: f64, lambda2: f64) -> Result<Self> {
        let lam = Self { lambda1, lambda2 };
        lam.check()?;
        Ok(lam)
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// Projection onto the nonnegative orthant.
    pub fn projected(lambda1: f64, lambda2: f64) -> Self {
        Self { lambda1: lambda1.max(0.0), lambda2: lambda2.max(0.0) }
    }

    pub fn check(&self) -> Result<()> {
        // NaN fails both comparisons and is rejected too.
        if self.lambda1 >= 0.0 && self.lambda2 >= 0.0 {
            Ok(())
        } else {
            Err(Error::Invariant(format!(
                "dual variables must be nonnegative, got ({}, {})",
                self.lambda1, self.lambda2
            )))
        }
    }

    pub fn norm(&self) -> f64 {
        self.lambda1.hypot(self.lambda2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    Logistic,
}

/// Loss, regularizer weight `mu` (with `h_k = mu * ||theta_k||^2`) and the
/// fairness tolerance `epsilon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    pub reg_weight: f64,
    pub epsilon: f64,
}

impl LossSpec {
    pub fn new(reg_weight: f64, epsilon: f64) -> Result<Self> {
        let spec = Self { kind: LossKind::Logistic, reg_weight, epsilon };
        spec.check()?;
        Ok(spec)
    }

    /// `mu = 1/n`, which makes the objective `(1/n)(sum of log-losses + ||theta||^2)`.
    pub fn for_samples(n: usize, epsilon: f64) -> Result<Self> {
        Self::new(1.0 / n as f64, epsilon)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.reg_weight >= 0.0) {
            return Err(Error::Config(format!("reg_weight must be >= 0, got {}", self.reg_weight)));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::Config(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        Ok(())
    }
}
