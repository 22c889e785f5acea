//! Hierarchical baseline: `d` nested grids over a common leaf grid, each
//! coarser level grouping `b × b` cells of the next. Every level is released
//! with `ε/d` and the levels are reconciled by constrained inference.
//!
//! Also home to [`border_fraction`], the back-of-envelope comparison of how
//! many groups a query boundary cuts in one versus two dimensions.

use crate::error::{Error, Result};
use crate::geo::{EquiGrid, PointDataset, Rect};
use crate::privacy::{laplace_variance, noisy_count, Budget, NoiseSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HierConfig {
    /// Branching per axis.
    pub b: usize,
    /// Number of levels.
    pub d: usize,
    /// Leaf cells per axis; a multiple of `b^(d-1)`.
    pub leaf_m: usize,
    pub inference: bool,
}

impl HierConfig {
    pub fn new(b: usize, d: usize, leaf_m: usize) -> Self {
        HierConfig { b, d, leaf_m, inference: true }
    }

    pub fn validate(&self) -> Result<()> {
        if self.b < 2 {
            return Err(Error::param(format!("branching must be at least 2, got {}", self.b)));
        }
        if self.d < 2 {
            return Err(Error::param(format!("need at least 2 levels, got {}", self.d)));
        }
        let divisor = self.b.checked_pow((self.d - 1) as u32).ok_or_else(|| Error::param("b^(d-1) overflows"))?;
        if self.leaf_m == 0 || !self.leaf_m.is_multiple_of(divisor) {
            return Err(Error::NotDivisible { leaf_m: self.leaf_m, divisor });
        }
        Ok(())
    }

    /// Cells per axis at each level, coarsest first.
    pub fn level_sizes(&self) -> Vec<usize> {
        (0..self.d).map(|k| self.leaf_m / self.b.pow((self.d - 1 - k) as u32)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierLevel {
    pub grid: EquiGrid,
    /// Released counts, row-major.
    pub noisy: Vec<f64>,
    pub variance: f64,
    /// Counts after inference; equal to `noisy` before it.
    pub post: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierSynopsis {
    cfg: HierConfig,
    levels: Vec<HierLevel>,
    inferred: bool,
    budget: Budget,
    seed: u64,
}

impl HierSynopsis {
    pub const METHOD_TAG: &'static str = "hier";

    /// Reassembles a synopsis from its released levels and final leaves.
    /// Internal post-inference values are recovered by summing the leaves.
    pub fn from_parts(
        cfg: HierConfig,
        levels: Vec<(EquiGrid, Vec<f64>, f64)>,
        leaves: Vec<f64>,
        inferred: bool,
        budget: Budget,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        let sizes = cfg.level_sizes();
        if levels.len() != sizes.len() {
            return Err(Error::LengthMismatch { expected: sizes.len(), actual: levels.len() });
        }
        let mut out = Vec::with_capacity(levels.len());
        for ((grid, noisy, variance), m) in levels.into_iter().zip(sizes) {
            if grid.m != m || noisy.len() != m * m {
                return Err(Error::LengthMismatch { expected: m * m, actual: noisy.len() });
            }
            out.push(HierLevel { grid, post: noisy.clone(), noisy, variance });
        }
        let leaf = out.last_mut().expect("d >= 2");
        if leaves.len() != leaf.noisy.len() {
            return Err(Error::LengthMismatch { expected: leaf.noisy.len(), actual: leaves.len() });
        }
        leaf.post = leaves;
        let mut s = HierSynopsis { cfg, levels: out, inferred, budget, seed };
        if inferred {
            for k in (0..s.levels.len() - 1).rev() {
                let summed = s.aggregate_children(k, &s.levels[k + 1].post);
                s.levels[k].post = summed;
            }
        }
        Ok(s)
    }

    pub fn config(&self) -> &HierConfig {
        &self.cfg
    }

    pub fn domain(&self) -> Rect {
        self.levels[0].grid.domain
    }

    /// Levels, coarsest first.
    pub fn levels(&self) -> &[HierLevel] {
        &self.levels
    }

    pub fn leaf_grid(&self) -> &EquiGrid {
        &self.levels.last().expect("d >= 2").grid
    }

    /// Queryable leaf counts (post-inference when inference ran).
    pub fn leaves(&self) -> &[f64] {
        &self.levels.last().expect("d >= 2").post
    }

    pub fn is_inferred(&self) -> bool {
        self.inferred
    }

    pub fn budget(&self) -> &Budget {
        &self.budget
    }

    pub fn epsilon(&self) -> f64 {
        self.budget.total()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Flat indices of the `b²` children of node `node` at level `k`.
    pub fn children(&self, k: usize, node: usize) -> impl Iterator<Item = usize> + '_ {
        let b = self.cfg.b;
        let (i, j) = self.levels[k].grid.unflat(node);
        let child = self.levels[k + 1].grid;
        (0..b).flat_map(move |a| (0..b).map(move |c| child.flat(i * b + a, j * b + c)))
    }

    fn aggregate_children(&self, k: usize, child_values: &[f64]) -> Vec<f64> {
        (0..self.levels[k].grid.num_cells()).map(|node| self.children(k, node).map(|c| child_values[c]).sum()).collect()
    }
}

pub fn build_hierarchy(
    ds: &PointDataset,
    epsilon: f64,
    cfg: &HierConfig,
    src: &mut NoiseSource,
) -> Result<HierSynopsis> {
    cfg.validate()?;
    let mut budget = Budget::new(epsilon)?;
    let sizes = cfg.level_sizes();

    // One pass into the leaves; coarser levels are exact sums of b×b blocks.
    let leaf_grid = EquiGrid::new(ds.domain(), cfg.leaf_m)?;
    let mut exact: Vec<Vec<u64>> = vec![leaf_grid.histogram(ds.points())?];
    for k in (0..sizes.len() - 1).rev() {
        let m = sizes[k];
        let fine = exact.last().expect("leaf level");
        let fm = sizes[k + 1];
        let mut coarse = vec![0u64; m * m];
        for (idx, &c) in fine.iter().enumerate() {
            let (i, j) = (idx / fm, idx % fm);
            coarse[(i / cfg.b) * m + j / cfg.b] += c;
        }
        exact.push(coarse);
    }
    exact.reverse();

    let mut levels = Vec::with_capacity(cfg.d);
    for (k, (m, counts)) in sizes.iter().zip(&exact).enumerate() {
        let eps = budget.charge(format!("level{k}"), epsilon / cfg.d as f64)?;
        let noisy =
            counts.iter().map(|&c| noisy_count(c as f64, eps, src).map(|v| v.value)).collect::<Result<Vec<_>>>()?;
        levels.push(HierLevel {
            grid: EquiGrid::new(ds.domain(), *m)?,
            post: noisy.clone(),
            noisy,
            variance: laplace_variance(1.0 / eps),
        });
    }
    let s = HierSynopsis { cfg: *cfg, levels, inferred: false, budget, seed: src.seed() };
    Ok(if cfg.inference { hier_inference(&s) } else { s })
}

/// Two-pass constrained inference over the tree.
///
/// Bottom-up, each node's estimate becomes the inverse-variance weighted
/// mean of its released count and the sum of its children's estimates.
/// Top-down, each node's final value minus its children's estimates is
/// spread equally over those children.
pub fn hier_inference(s: &HierSynopsis) -> HierSynopsis {
    let d = s.levels.len();
    let mut est: Vec<Vec<f64>> = s.levels.iter().map(|l| l.noisy.clone()).collect();
    let mut var: Vec<Vec<f64>> = s.levels.iter().map(|l| vec![l.variance; l.noisy.len()]).collect();

    for k in (0..d - 1).rev() {
        for node in 0..est[k].len() {
            let (mut sub, mut sub_var) = (0.0, 0.0);
            for c in s.children(k, node) {
                sub += est[k + 1][c];
                sub_var += var[k + 1][c];
            }
            let (z, z_var) = (s.levels[k].noisy[node], s.levels[k].variance);
            est[k][node] = (z * sub_var + sub * z_var) / (z_var + sub_var);
            var[k][node] = z_var * sub_var / (z_var + sub_var);
        }
    }

    let share = (s.cfg.b * s.cfg.b) as f64;
    let mut post = est.clone();
    for k in 0..d - 1 {
        for node in 0..post[k].len() {
            let children: Vec<usize> = s.children(k, node).collect();
            let sub: f64 = children.iter().map(|&c| est[k + 1][c]).sum();
            let residual = (post[k][node] - sub) / share;
            for c in children {
                post[k + 1][c] = est[k + 1][c] + residual;
            }
        }
    }

    let mut out = s.clone();
    for (level, p) in out.levels.iter_mut().zip(post) {
        level.post = p;
    }
    out.inferred = true;
    out
}

/// Fraction of `b`-cell groups (out of `M` cells) that a query boundary cuts:
/// `2b/M` in one dimension, `4√b/√M` in two, and `2d·(b/M)^(1/d)` in general.
pub fn border_fraction(total_cells: f64, b: f64, dims: u32) -> Result<f64> {
    if !(total_cells > 0.0) || !(b > 0.0) || dims == 0 {
        return Err(Error::param("border_fraction needs M > 0, b > 0, dims >= 1"));
    }
    Ok(match dims {
        1 => 2.0 * b / total_cells,
        2 => 4.0 * b.sqrt() / total_cells.sqrt(),
        d => 2.0 * d as f64 * (b / total_cells).powf(1.0 / d as f64),
    })
}
