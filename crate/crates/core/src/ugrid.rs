//! Uniform grid: one equi-width `m × m` partition with an independent noisy
//! count per cell.

use crate::error::{Error, Result};
use crate::geo::{EquiGrid, Point, PointDataset, Rect};
use crate::privacy::{laplace_variance, noisy_count, sizing_total, Budget, NoiseSource, SizingMode};

pub const DEFAULT_C: f64 = 10.0;
pub const DEFAULT_MIN_M: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UGConfig {
    pub c: f64,
    pub min_m: usize,
    pub m_override: Option<usize>,
    pub sizing: SizingMode,
}

impl Default for UGConfig {
    fn default() -> Self {
        UGConfig { c: DEFAULT_C, min_m: DEFAULT_MIN_M, m_override: None, sizing: SizingMode::default() }
    }
}

impl UGConfig {
    pub fn with_m(m: usize) -> Self {
        UGConfig { m_override: Some(m), ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) {
            return Err(Error::param(format!("c must be positive, got {}", self.c)));
        }
        if self.min_m == 0 {
            return Err(Error::param("min_m must be at least 1"));
        }
        if self.m_override == Some(0) {
            return Err(Error::param("grid size override must be at least 1"));
        }
        Ok(())
    }
}

pub(crate) fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

/// Grid size `√(N·ε/c)`, rounded half-up and clamped below by `cfg.min_m`.
pub fn guideline_grid_size(n_points: f64, epsilon: f64, cfg: &UGConfig) -> usize {
    if let Some(m) = cfg.m_override {
        return m;
    }
    let raw = (n_points.max(0.0) * epsilon / cfg.c).sqrt();
    (round_half_up(raw) as usize).max(cfg.min_m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSynopsis {
    grid: EquiGrid,
    counts: Vec<f64>,
    variance: f64,
    budget: Budget,
    seed: u64,
}

impl GridSynopsis {
    pub const METHOD_TAG: &'static str = "ug";

    pub fn from_parts(grid: EquiGrid, counts: Vec<f64>, variance: f64, budget: Budget, seed: u64) -> Result<Self> {
        if counts.len() != grid.num_cells() {
            return Err(Error::LengthMismatch { expected: grid.num_cells(), actual: counts.len() });
        }
        Ok(GridSynopsis { grid, counts, variance, budget, seed })
    }

    pub fn grid(&self) -> &EquiGrid {
        &self.grid
    }

    pub fn domain(&self) -> Rect {
        self.grid.domain
    }

    pub fn m(&self) -> usize {
        self.grid.m
    }

    /// Row-major noisy counts, index `i * m + j`.
    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn count(&self, i: usize, j: usize) -> f64 {
        self.counts[self.grid.flat(i, j)]
    }

    pub fn variance_per_cell(&self) -> f64 {
        self.variance
    }

    pub fn budget(&self) -> &Budget {
        &self.budget
    }

    pub fn epsilon(&self) -> f64 {
        self.budget.total()
    }

    pub fn epsilon_used(&self) -> f64 {
        self.budget.spent()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

pub fn build_uniform(ds: &PointDataset, epsilon: f64, cfg: &UGConfig, src: &mut NoiseSource) -> Result<GridSynopsis> {
    cfg.validate()?;
    let mut budget = Budget::new(epsilon)?;
    let m = match cfg.m_override {
        Some(m) => m,
        None => {
            let n = sizing_total(ds, cfg.sizing, &mut budget, src)?;
            guideline_grid_size(n, epsilon, cfg)
        }
    };
    let eps_cells = budget.charge("cells", budget.remaining())?;
    let grid = EquiGrid::new(ds.domain(), m)?;
    let exact = grid.histogram(ds.points())?;
    let counts =
        exact.iter().map(|&c| noisy_count(c as f64, eps_cells, src).map(|v| v.value)).collect::<Result<Vec<_>>>()?;
    Ok(GridSynopsis { grid, counts, variance: laplace_variance(1.0 / eps_cells), budget, seed: src.seed() })
}

pub fn cell_index(p: &Point, s: &GridSynopsis) -> Result<(usize, usize)> {
    s.grid.cell_of(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{gen_synthetic, true_count, SyntheticKind, SyntheticSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit() -> Rect {
        Rect::new(0.0, 0.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn grid_size_reference_values() {
        let cfg = UGConfig::default();
        assert_eq!(guideline_grid_size(1.6e6, 1.0, &cfg), 400);
        assert_eq!(guideline_grid_size(1e6, 0.1, &cfg), 100);
        assert_eq!(guideline_grid_size(9e3, 1.0, &cfg), 30);
        assert_eq!(guideline_grid_size(0.0, 1.0, &cfg), 10);
        assert_eq!(guideline_grid_size(-50.0, 1.0, &cfg), 10);
        assert_eq!(guideline_grid_size(1e6, 1.0, &UGConfig::with_m(7)), 7);
        let loose = UGConfig { min_m: 1, ..cfg };
        assert_eq!(guideline_grid_size(0.0, 1.0, &loose), 1);
    }

    #[test]
    fn guideline_monotone() {
        let cfg = UGConfig::default();
        let mut last = 0;
        for k in 0..200 {
            let m = guideline_grid_size(k as f64 * 5000.0, 0.5, &cfg);
            assert!(m >= last);
            last = m;
        }
        let strict = UGConfig { c: 20.0, ..cfg };
        for n in [1e4, 1e5, 1e6] {
            assert!(guideline_grid_size(n, 1.0, &strict) <= guideline_grid_size(n, 1.0, &cfg));
            assert!(guideline_grid_size(n, 0.1, &cfg) <= guideline_grid_size(n, 1.0, &cfg));
        }
    }

    #[test]
    fn empty_dataset_override() {
        let ds = PointDataset::new(vec![], unit()).unwrap();
        let s = build_uniform(&ds, 1.0, &UGConfig::with_m(2), &mut NoiseSource::zero()).unwrap();
        assert_eq!(s.counts(), &[0.0; 4]);
        assert_eq!(s.variance_per_cell(), 2.0);
        assert_eq!(s.epsilon_used(), 1.0);
    }

    #[test]
    fn one_point_per_quadrant() {
        let pts = vec![Point::new(0.1, 0.1), Point::new(0.9, 0.1), Point::new(0.1, 0.9), Point::new(0.5, 0.5)];
        let ds = PointDataset::new(pts, unit()).unwrap();
        let s = build_uniform(&ds, 1.0, &UGConfig::with_m(2), &mut NoiseSource::zero()).unwrap();
        assert_eq!(s.counts(), &[1.0; 4]);
    }

    #[test]
    fn uniform_synthetic_exact_n() {
        let spec = SyntheticSpec { kind: SyntheticKind::Uniform, n: 100_000, domain: unit() };
        let ds = gen_synthetic(&spec, 5).unwrap();
        let cfg = UGConfig { sizing: SizingMode::ExactN, ..Default::default() };
        let s = build_uniform(&ds, 1.0, &cfg, &mut NoiseSource::zero()).unwrap();
        assert_eq!(s.m(), 100);
        let p: f64 = 1.0 / 10_000.0;
        let sigma = (1e5 * p * (1.0 - p)).sqrt();
        for &c in s.counts() {
            assert!((c - 10.0).abs() < 5.0 * sigma, "cell count {c}");
        }
        assert_eq!(s.counts().iter().sum::<f64>(), 1e5);
        for k in (0..s.grid().num_cells()).step_by(97) {
            let (i, j) = s.grid().unflat(k);
            assert_eq!(s.count(i, j), true_count(&ds, &s.grid().cell_rect(i, j)) as f64);
        }
    }

    #[test]
    fn noisy_sizing_spends_estimate() {
        let spec = SyntheticSpec { kind: SyntheticKind::Uniform, n: 1000, domain: unit() };
        let ds = gen_synthetic(&spec, 5).unwrap();
        let s = build_uniform(&ds, 1.0, &UGConfig::default(), &mut NoiseSource::laplace(3)).unwrap();
        assert_eq!(s.budget().allocations().len(), 2);
        assert!((s.epsilon_used() - 1.0).abs() < 1e-12);
        assert!((s.variance_per_cell() - 2.0 / 0.98f64.powi(2)).abs() < 1e-12);
    }

    #[test]
    fn cell_index_cases() {
        let ds = PointDataset::new(vec![], unit()).unwrap();
        let s = build_uniform(&ds, 1.0, &UGConfig::with_m(4), &mut NoiseSource::zero()).unwrap();
        assert_eq!(cell_index(&Point::new(0.0, 0.0), &s).unwrap(), (0, 0));
        assert_eq!(cell_index(&Point::new(0.25, 0.1), &s).unwrap().0, 1);
        assert!(cell_index(&Point::new(1.0, 0.5), &s).is_err());
    }

    #[test]
    fn cell_index_matches_linear_scan() {
        let domain = Rect::new(-3.7, 2.1, 11.3, 9.9).unwrap();
        let ds = PointDataset::new(vec![], domain).unwrap();
        let s = build_uniform(&ds, 1.0, &UGConfig::with_m(13), &mut NoiseSource::zero()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..1000 {
            let p = Point::new(
                domain.x0 + rng.random::<f64>() * domain.width(),
                domain.y0 + rng.random::<f64>() * domain.height(),
            );
            let scan: Vec<_> = (0..13)
                .flat_map(|i| (0..13).map(move |j| (i, j)))
                .filter(|&(i, j)| s.grid().cell_rect(i, j).contains(&p))
                .collect();
            assert_eq!(scan, vec![cell_index(&p, &s).unwrap()]);
        }
    }
}
