//! Adaptive grid: a coarse `m1 × m1` grid whose cells are each split into an
//! `m2 × m2` sub-grid chosen from the cell's own noisy count.
//!
//! The budget is divided between the levels by `alpha`: level one spends
//! `alpha·ε` and the leaves spend `(1 − alpha)·ε`. Because each level is a
//! partition, every point affects one cell per level. After both levels are
//! released, constrained inference merges the two estimates of each coarse
//! cell and pushes the correction down to its leaves so that they sum to it.

use crate::error::{Error, Result};
use crate::geo::{EquiGrid, PointDataset, Rect};
use crate::privacy::{noisy_count, sizing_total, Budget, NoiseSource, NoisyValue, SizingMode};
use crate::ugrid::round_half_up;

pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_MIN_M1: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AGConfig {
    pub alpha: f64,
    pub c: f64,
    pub c2: f64,
    pub min_m1: usize,
    pub m1_override: Option<usize>,
    pub sizing: SizingMode,
}

impl Default for AGConfig {
    fn default() -> Self {
        AGConfig {
            alpha: DEFAULT_ALPHA,
            c: crate::ugrid::DEFAULT_C,
            c2: crate::ugrid::DEFAULT_C / 2.0,
            min_m1: DEFAULT_MIN_M1,
            m1_override: None,
            sizing: SizingMode::default(),
        }
    }
}

impl AGConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::param(format!("alpha must lie in (0,1), got {}", self.alpha)));
        }
        if !(self.c > 0.0) || !(self.c2 > 0.0) {
            return Err(Error::param(format!("c and c2 must be positive, got {} and {}", self.c, self.c2)));
        }
        if self.min_m1 == 0 || self.m1_override == Some(0) {
            return Err(Error::param("first-level grid size must be at least 1"));
        }
        Ok(())
    }
}

/// First-level size: `max(10, ¼·⌈√(Nε/c)⌉)`, the quarter rounded half-up.
pub fn guideline_m1(n_points: f64, epsilon: f64, cfg: &AGConfig) -> usize {
    if let Some(m) = cfg.m1_override {
        return m;
    }
    let ug = (n_points.max(0.0) * epsilon / cfg.c).sqrt().ceil();
    (round_half_up(ug / 4.0) as usize).max(cfg.min_m1)
}

/// Second-level size for a cell with noisy count `noisy_count`: `⌈√(N'·ε₂/c₂)⌉`, at least 1.
pub fn guideline_m2(noisy_count: f64, epsilon_level2: f64, cfg: &AGConfig) -> usize {
    let m2 = (noisy_count.max(0.0) * epsilon_level2 / cfg.c2).sqrt().ceil();
    (m2 as usize).max(1)
}

/// Reconciles a coarse count `v` with its `m2²` leaf counts `u`.
///
/// Returns `v'`, the minimum-variance combination of `v` and `Σu`, and the
/// leaves shifted by an equal share of `v' − Σu` so that they sum to `v'`.
pub fn constrained_inference(v: NoisyValue, u: &[NoisyValue], alpha: f64, m2: usize) -> Result<(f64, Vec<f64>)> {
    let leaves = m2 * m2;
    if u.len() != leaves {
        return Err(Error::LengthMismatch { expected: leaves, actual: u.len() });
    }
    let a = alpha * alpha * (leaves as f64);
    let b = (1.0 - alpha) * (1.0 - alpha);
    let sum_u: f64 = u.iter().map(|x| x.value).sum();
    let v_prime = (a * v.value + b * sum_u) / (a + b);
    let share = (v_prime - sum_u) / leaves as f64;
    Ok((v_prime, u.iter().map(|x| x.value + share).collect()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveCell {
    /// Level-one noisy count.
    pub v: NoisyValue,
    pub m2: usize,
    /// Leaf noisy counts, row-major over the `m2 × m2` sub-grid.
    pub u: Vec<NoisyValue>,
    pub v_prime: f64,
    pub u_prime: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveSynopsis {
    grid: EquiGrid,
    alpha: f64,
    cells: Vec<AdaptiveCell>,
    budget: Budget,
    seed: u64,
}

impl AdaptiveSynopsis {
    pub const METHOD_TAG: &'static str = "ag";

    pub fn from_parts(grid: EquiGrid, alpha: f64, cells: Vec<AdaptiveCell>, budget: Budget, seed: u64) -> Result<Self> {
        if cells.len() != grid.num_cells() {
            return Err(Error::LengthMismatch { expected: grid.num_cells(), actual: cells.len() });
        }
        for c in &cells {
            let n = c.m2 * c.m2;
            if c.m2 == 0 || c.u.len() != n || c.u_prime.len() != n {
                return Err(Error::LengthMismatch { expected: n, actual: c.u.len() });
            }
        }
        Ok(AdaptiveSynopsis { grid, alpha, cells, budget, seed })
    }

    pub fn grid(&self) -> &EquiGrid {
        &self.grid
    }

    pub fn domain(&self) -> Rect {
        self.grid.domain
    }

    pub fn m1(&self) -> usize {
        self.grid.m
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// First-level cells, row-major.
    pub fn cells(&self) -> &[AdaptiveCell] {
        &self.cells
    }

    pub fn cell(&self, i: usize, j: usize) -> &AdaptiveCell {
        &self.cells[self.grid.flat(i, j)]
    }

    /// Sub-grid of first-level cell `(i, j)`.
    pub fn leaf_grid(&self, i: usize, j: usize) -> EquiGrid {
        EquiGrid { domain: self.grid.cell_rect(i, j), m: self.cell(i, j).m2 }
    }

    pub fn num_leaves(&self) -> usize {
        self.cells.iter().map(|c| c.m2 * c.m2).sum()
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
}

pub fn build_adaptive(
    ds: &PointDataset,
    epsilon: f64,
    cfg: &AGConfig,
    src: &mut NoiseSource,
) -> Result<AdaptiveSynopsis> {
    cfg.validate()?;
    let mut budget = Budget::new(epsilon)?;
    let m1 = match cfg.m1_override {
        Some(m) => m,
        None => {
            let n = sizing_total(ds, cfg.sizing, &mut budget, src)?;
            guideline_m1(n, epsilon, cfg)
        }
    };
    let available = budget.remaining();
    let eps1 = budget.charge("level1", cfg.alpha * available)?;
    let eps2 = budget.charge("level2", budget.remaining())?;

    let grid = EquiGrid::new(ds.domain(), m1)?;

    // Pass one: coarse histogram, remembering each point's cell.
    let mut owner = Vec::with_capacity(ds.len());
    let mut coarse = vec![0u64; grid.num_cells()];
    for p in ds.points() {
        let (i, j) = grid.cell_of(p)?;
        let k = grid.flat(i, j);
        coarse[k] += 1;
        owner.push(k);
    }
    let v: Vec<NoisyValue> = coarse.iter().map(|&c| noisy_count(c as f64, eps1, src)).collect::<Result<_>>()?;
    let leaf_grids: Vec<EquiGrid> = (0..grid.num_cells())
        .map(|k| {
            let (i, j) = grid.unflat(k);
            let m2 = guideline_m2(v[k].value, (1.0 - cfg.alpha) * epsilon, cfg);
            EquiGrid::new(grid.cell_rect(i, j), m2)
        })
        .collect::<Result<_>>()?;

    // Pass two: leaf histograms inside each coarse cell.
    let mut fine: Vec<Vec<u64>> = leaf_grids.iter().map(|g| vec![0u64; g.num_cells()]).collect();
    for (p, &k) in ds.points().iter().zip(&owner) {
        let g = &leaf_grids[k];
        let (a, b) = g.cell_of(p)?;
        fine[k][g.flat(a, b)] += 1;
    }

    let mut cells = Vec::with_capacity(grid.num_cells());
    for ((v, g), counts) in v.into_iter().zip(&leaf_grids).zip(&fine) {
        let u: Vec<NoisyValue> = counts.iter().map(|&c| noisy_count(c as f64, eps2, src)).collect::<Result<_>>()?;
        let (v_prime, u_prime) = constrained_inference(v, &u, cfg.alpha, g.m)?;
        cells.push(AdaptiveCell { v, m2: g.m, u, v_prime, u_prime });
    }

    Ok(AdaptiveSynopsis { grid, alpha: cfg.alpha, cells, budget, seed: src.seed() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{gen_synthetic, true_count, Cluster, Point, SyntheticKind, SyntheticSpec};
    use crate::privacy::laplace_sample;
    use proptest::prelude::*;

    fn nv(value: f64) -> NoisyValue {
        NoisyValue { value, variance: 2.0 }
    }

    #[test]
    fn m1_reference_values() {
        let cfg = AGConfig::default();
        assert_eq!(guideline_m1(1e6, 0.1, &cfg), 25);
        assert_eq!(guideline_m1(1e6, 1.0, &cfg), 79);
        assert_eq!(guideline_m1(9e5, 1.0, &cfg), 75);
        assert_eq!(guideline_m1(9e3, 0.1, &cfg), 10);
        assert_eq!(guideline_m1(1e6, 1.0, &AGConfig { m1_override: Some(16), ..cfg }), 16);
    }

    #[test]
    fn m2_cases() {
        let cfg = AGConfig::default();
        assert_eq!(guideline_m2(-12.0, 0.5, &cfg), 1);
        assert_eq!(guideline_m2(0.0, 0.5, &cfg), 1);
        assert_eq!(guideline_m2(1000.0, 0.5, &cfg), 10);
        assert_eq!(guideline_m2(41.0, 0.5, &cfg), 3);
        assert_eq!(guideline_m2(10.0, 0.5, &cfg), 1);
        assert_eq!(guideline_m2(10.5, 0.5, &cfg), 2);
    }

    #[test]
    fn inference_consistent_inputs_unchanged() {
        let u = vec![nv(1.0), nv(2.0), nv(3.0), nv(4.0)];
        let (vp, up) = constrained_inference(nv(10.0), &u, 0.3, 2).unwrap();
        assert!((vp - 10.0).abs() < 1e-12);
        for (a, b) in up.iter().zip(&u) {
            assert!((a - b.value).abs() < 1e-12);
        }
    }

    #[test]
    fn inference_hand_case() {
        let u = vec![nv(2.0); 4];
        let (vp, up) = constrained_inference(nv(10.0), &u, 0.5, 2).unwrap();
        assert!((vp - 9.6).abs() < 1e-12);
        for x in up {
            assert!((x - 2.4).abs() < 1e-12);
        }
    }

    #[test]
    fn inference_single_leaf_is_plain_average() {
        let (vp, up) = constrained_inference(nv(4.0), &[nv(6.0)], 0.5, 1).unwrap();
        assert!((vp - 5.0).abs() < 1e-12);
        assert!((up[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn inference_length_mismatch() {
        let err = constrained_inference(nv(1.0), &[nv(1.0); 3], 0.5, 2).unwrap_err();
        assert!(matches!(err, Error::LengthMismatch { expected: 4, actual: 3 }));
    }

    proptest! {
        #[test]
        fn inference_leaves_sum_to_v_prime(
            v in -1e4f64..1e4,
            alpha in 0.01f64..0.99,
            m2 in 1usize..7,
            seed in any::<u64>(),
        ) {
            let mut src = NoiseSource::laplace(seed);
            let u: Vec<NoisyValue> = (0..m2 * m2)
                .map(|_| nv(laplace_sample(50.0, &mut src).unwrap()))
                .collect();
            let (vp, up) = constrained_inference(nv(v), &u, alpha, m2).unwrap();
            let s: f64 = up.iter().sum();
            prop_assert!((s - vp).abs() <= 1e-9 * vp.abs().max(1.0));
        }
    }

    fn analytical_var(alpha: f64, m2: usize, var_v: f64, var_u: f64) -> f64 {
        let a = alpha * alpha * (m2 * m2) as f64;
        let b = (1.0 - alpha).powi(2);
        let w = a + b;
        (a * a * var_v + b * b * (m2 * m2) as f64 * var_u) / (w * w)
    }

    #[test]
    fn analytical_variance_reduction() {
        for alpha in [0.2f64, 0.5, 0.8] {
            for m2 in 1..8 {
                let var_v = 2.0 / alpha.powi(2);
                let var_u = 2.0 / (1.0 - alpha).powi(2);
                let merged = analytical_var(alpha, m2, var_v, var_u);
                assert!(merged < var_v.min((m2 * m2) as f64 * var_u));
            }
        }
    }

    /// Paired gap between the sample variances of `a` and `b`, with its standard error.
    fn variance_gap(a: &[f64], b: &[f64]) -> (f64, f64) {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - ma).powi(2) - (y - mb).powi(2)).collect();
        let md = d.iter().sum::<f64>() / n;
        let sd = (d.iter().map(|x| (x - md).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        (md, sd / n.sqrt())
    }

    #[test]
    fn monte_carlo_variance_reduction() {
        let (alpha, m2, trials) = (0.5, 4usize, 10_000);
        let eps = 1.0;
        let mut src = NoiseSource::laplace(2024);
        let (mut vs, mut sums, mut vps) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..trials {
            let v = noisy_count(100.0, alpha * eps, &mut src).unwrap();
            let u: Vec<_> =
                (0..m2 * m2).map(|_| noisy_count(100.0 / 16.0, (1.0 - alpha) * eps, &mut src).unwrap()).collect();
            let (vp, _) = constrained_inference(v, &u, alpha, m2).unwrap();
            vs.push(v.value);
            sums.push(u.iter().map(|x| x.value).sum::<f64>());
            vps.push(vp);
        }
        let (gap_v, se_v) = variance_gap(&vs, &vps);
        assert!(gap_v > 3.0 * se_v, "{gap_v} vs se {se_v}");
        let (gap_sum, se_sum) = variance_gap(&sums, &vps);
        assert!(gap_sum > 3.0 * se_sum, "{gap_sum} vs se {se_sum}");
        let n = trials as f64;
        let mean = vps.iter().sum::<f64>() / n;
        let var_vp = vps.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let expected = analytical_var(alpha, m2, 8.0, 8.0);
        assert!((var_vp - expected).abs() < 0.1 * expected, "{var_vp} vs {expected}");
    }

    #[test]
    fn empty_dataset_zero_source() {
        let ds = PointDataset::new(vec![], Rect::new(0.0, 0.0, 1.0, 1.0).unwrap()).unwrap();
        let s = build_adaptive(&ds, 1.0, &AGConfig::default(), &mut NoiseSource::zero()).unwrap();
        assert_eq!(s.m1(), 10);
        for c in s.cells() {
            assert_eq!(c.v.value, 0.0);
            assert_eq!(c.m2, 1);
            assert_eq!(c.u_prime, vec![0.0]);
        }
    }

    fn clustered(n: usize, seed: u64) -> PointDataset {
        let spec = SyntheticSpec {
            kind: SyntheticKind::GaussianMixture(vec![
                Cluster { center: Point::new(30.0, 30.0), std: 6.0, weight: 0.6 },
                Cluster { center: Point::new(70.0, 65.0), std: 10.0, weight: 0.4 },
            ]),
            n,
            domain: Rect::new(0.0, 0.0, 100.0, 100.0).unwrap(),
        };
        gen_synthetic(&spec, seed).unwrap()
    }

    #[test]
    fn zero_noise_build_is_exact_and_consistent() {
        let ds = clustered(20_000, 4);
        let cfg = AGConfig { sizing: SizingMode::ExactN, ..Default::default() };
        let s = build_adaptive(&ds, 1.0, &cfg, &mut NoiseSource::zero()).unwrap();
        assert_eq!(s.m1(), guideline_m1(20_000.0, 1.0, &cfg));
        for i in 0..s.m1() {
            for j in 0..s.m1() {
                let c = s.cell(i, j);
                let truth = true_count(&ds, &s.grid().cell_rect(i, j)) as f64;
                assert_eq!(c.v.value, truth);
                let sum_u: f64 = c.u.iter().map(|x| x.value).sum();
                assert_eq!(sum_u, truth);
                assert!((c.v_prime - truth).abs() < 1e-9);
                let lg = s.leaf_grid(i, j);
                for (k, up) in c.u_prime.iter().enumerate() {
                    let (a, b) = lg.unflat(k);
                    assert!((up - true_count(&ds, &lg.cell_rect(a, b)) as f64).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn dense_cells_split_sparse_cells_do_not() {
        let ds = clustered(100_000, 11);
        let s = build_adaptive(&ds, 1.0, &AGConfig::default(), &mut NoiseSource::laplace(3)).unwrap();
        let threshold = 5.0 / (0.5 * 1.0);
        let mut split = 0;
        for c in s.cells() {
            if c.v.value <= threshold {
                assert_eq!(c.m2, 1);
            } else {
                assert!(c.m2 > 1);
                split += 1;
            }
            let sum: f64 = c.u_prime.iter().sum();
            assert!((sum - c.v_prime).abs() < 1e-9 * c.v_prime.abs().max(1.0));
        }
        assert!(split > 0);
        let ledger: Vec<&str> = s.budget().allocations().iter().map(|(l, _)| l.as_str()).collect();
        assert_eq!(ledger, ["estimate_n", "level1", "level2"]);
        assert!((s.budget().spent() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn level_budgets_split_by_alpha() {
        let ds = clustered(1000, 1);
        let cfg = AGConfig { sizing: SizingMode::ExactN, alpha: 0.25, ..Default::default() };
        let s = build_adaptive(&ds, 2.0, &cfg, &mut NoiseSource::laplace(9)).unwrap();
        let parts = s.budget().allocations();
        assert!((parts[0].1 - 0.5).abs() < 1e-12);
        assert!((parts[1].1 - 1.5).abs() < 1e-12);
        assert!((s.cells()[0].v.variance - 2.0 / 0.25).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_alpha() {
        let ds = clustered(10, 1);
        for alpha in [0.0, 1.0, -0.2] {
            let cfg = AGConfig { alpha, ..Default::default() };
            assert!(build_adaptive(&ds, 1.0, &cfg, &mut NoiseSource::zero()).is_err());
        }
    }
}
