//! Error evaluation over random range-query workloads.
//!
//! A workload has six query shapes, each doubling both sides of the previous
//! one, with a fixed number of uniformly placed queries per shape. Every
//! `(method, ε, seed)` trial builds one synopsis, answers the whole workload
//! and records relative and absolute errors, reduced per shape to
//! candlestick statistics.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::agrid::{build_adaptive, AGConfig};
use crate::error::{Error, Result};
use crate::geo::{true_count, EquiGrid, PointDataset, Rect};
use crate::hierarchy::{build_hierarchy, HierConfig};
use crate::privacy::{NoiseFactory, NoiseSource};
use crate::query::{AnySynopsis, Synopsis};
use crate::ugrid::{build_uniform, UGConfig};

pub const NUM_SIZES: usize = 6;
pub const DEFAULT_QUERIES_PER_SIZE: usize = 200;
pub const DEFAULT_NUM_SEEDS: u64 = 10;
/// ρ as a fraction of the dataset size.
pub const RHO_FRACTION: f64 = 0.001;

// Query placement draws from its own ChaCha stream so it never overlaps
// the noise streams of the same seed.
const QUERY_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct QuerySchedule {
    /// `(width, height)` of q1..q6.
    pub sizes: [(f64, f64); NUM_SIZES],
    pub queries_per_size: usize,
    /// When set, query corners snap to an `n × n` lattice over the domain.
    pub lattice: Option<usize>,
}

impl QuerySchedule {
    /// Schedule whose smallest query is `q1`, doubling per step.
    pub fn from_q1(q1: (f64, f64), queries_per_size: usize) -> Self {
        let mut sizes = [(0.0, 0.0); NUM_SIZES];
        for (k, s) in sizes.iter_mut().enumerate() {
            let f = (1u32 << k) as f64;
            *s = (q1.0 * f, q1.1 * f);
        }
        QuerySchedule { sizes, queries_per_size, lattice: None }
    }

    pub fn validate(&self, domain: &Rect) -> Result<()> {
        for (k, &(w, h)) in self.sizes.iter().enumerate() {
            if !(w > 0.0 && h > 0.0) {
                return Err(Error::param(format!("q{} has non-positive extent", k + 1)));
            }
            if k > 0 {
                let (pw, ph) = self.sizes[k - 1];
                if w != 2.0 * pw || h != 2.0 * ph {
                    return Err(Error::param(format!("q{} does not double q{}", k + 1, k)));
                }
            }
        }
        let (w, h) = self.sizes[NUM_SIZES - 1];
        if w > domain.width() || h > domain.height() {
            return Err(Error::param(format!("q6 {w}x{h} does not fit in domain {domain}")));
        }
        Ok(())
    }
}

/// q1 is 1/64 of the domain per axis, so q6 covers a quarter of its area.
pub fn default_schedule(domain: &Rect) -> QuerySchedule {
    QuerySchedule::from_q1((domain.width() / 64.0, domain.height() / 64.0), DEFAULT_QUERIES_PER_SIZE)
}

/// `n` rectangles of exactly `size`, lower corners uniform over all
/// positions that keep the rectangle inside `domain`.
pub fn gen_queries<R: Rng>(domain: &Rect, size: (f64, f64), n: usize, rng: &mut R) -> Result<Vec<Rect>> {
    let (w, h) = size;
    if !(w > 0.0 && h > 0.0) || w > domain.width() || h > domain.height() {
        return Err(Error::param(format!("query size {w}x{h} does not fit in domain {domain}")));
    }
    let (slack_x, slack_y) = (domain.width() - w, domain.height() - h);
    (0..n)
        .map(|_| {
            let x0 = domain.x0 + rng.random::<f64>() * slack_x;
            let y0 = domain.y0 + rng.random::<f64>() * slack_y;
            Rect::new(x0, y0, (x0 + w).min(domain.x1), (y0 + h).min(domain.y1))
        })
        .collect()
}

/// Like [`gen_queries`], but every corner lies on the `lattice × lattice`
/// partition of `domain`, with `size` rounded to whole lattice steps.
pub fn gen_aligned_queries<R: Rng>(
    domain: &Rect,
    size: (f64, f64),
    n: usize,
    lattice: usize,
    rng: &mut R,
) -> Result<Vec<Rect>> {
    let grid = EquiGrid::new(*domain, lattice)?;
    let steps_x = (size.0 / grid.cell_width()).round() as usize;
    let steps_y = (size.1 / grid.cell_height()).round() as usize;
    if steps_x == 0 || steps_y == 0 || steps_x > lattice || steps_y > lattice {
        return Err(Error::param(format!(
            "query size {}x{} is not a positive number of lattice steps within the domain",
            size.0, size.1
        )));
    }
    (0..n)
        .map(|_| {
            let i = rng.random_range(0..=lattice - steps_x);
            let j = rng.random_range(0..=lattice - steps_y);
            Rect::new(grid.edge_x(i), grid.edge_y(j), grid.edge_x(i + steps_x), grid.edge_y(j + steps_y))
        })
        .collect()
}

pub fn relative_error(answer: f64, truth: f64, rho: f64) -> f64 {
    (answer - truth).abs() / truth.max(rho)
}

pub fn absolute_error(answer: f64, truth: f64) -> f64 {
    (answer - truth).abs()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorStats {
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
    pub p95: f64,
    pub mean: f64,
}

/// Nearest-rank percentile of an ascending slice: element `⌈pct·n/100⌉`.
fn nearest_rank(sorted: &[f64], pct: usize) -> f64 {
    let n = sorted.len();
    let rank = ((pct * n).div_ceil(100)).max(1);
    sorted[rank - 1]
}

pub fn candlestick(samples: &[f64]) -> Result<ErrorStats> {
    if samples.is_empty() {
        return Err(Error::param("candlestick needs at least one sample"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(ErrorStats {
        p25: nearest_rank(&sorted, 25),
        median: nearest_rank(&sorted, 50),
        p75: nearest_rank(&sorted, 75),
        p95: nearest_rank(&sorted, 95),
        mean: samples.iter().sum::<f64>() / samples.len() as f64,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    Uniform(UGConfig),
    Adaptive(AGConfig),
    Hierarchy(HierConfig),
}

impl Method {
    pub fn tag(&self) -> String {
        match self {
            Method::Uniform(c) => match c.m_override {
                Some(m) => format!("ug_m{m}"),
                None => "ug".to_string(),
            },
            Method::Adaptive(c) => match c.m1_override {
                Some(m) => format!("ag_m{m}"),
                None => "ag".to_string(),
            },
            Method::Hierarchy(c) => format!("hier_b{}_d{}_m{}", c.b, c.d, c.leaf_m),
        }
    }

    pub fn build(&self, ds: &PointDataset, epsilon: f64, src: &mut NoiseSource) -> Result<AnySynopsis> {
        Ok(match self {
            Method::Uniform(c) => build_uniform(ds, epsilon, c, src)?.into(),
            Method::Adaptive(c) => build_adaptive(ds, epsilon, c, src)?.into(),
            Method::Hierarchy(c) => build_hierarchy(ds, epsilon, c, src)?.into(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorKind {
    Relative,
    Absolute,
}

impl ErrorKind {
    pub const ALL: [ErrorKind; 2] = [ErrorKind::Relative, ErrorKind::Absolute];
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorKind::Relative => "relative",
            ErrorKind::Absolute => "absolute",
        })
    }
}

impl FromStr for ErrorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relative" => Ok(ErrorKind::Relative),
            "absolute" => Ok(ErrorKind::Absolute),
            _ => Err(Error::param(format!("unknown error kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedTag {
    Seed(u64),
    Pooled,
}

impl fmt::Display for SeedTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SeedTag::Seed(s) => write!(f, "{s}"),
            SeedTag::Pooled => f.write_str("pooled"),
        }
    }
}

impl FromStr for SeedTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "pooled" {
            return Ok(SeedTag::Pooled);
        }
        s.parse().map(SeedTag::Seed).map_err(|_| Error::param(format!("bad seed {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub dataset: String,
    pub method: String,
    pub epsilon: f64,
    /// 1-based query size index.
    pub size_index: usize,
    pub kind: ErrorKind,
    pub stats: ErrorStats,
    pub seed: SeedTag,
}

/// Raw per-query errors for one `(method, ε, seed, size, kind)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub method: String,
    pub epsilon: f64,
    pub seed: u64,
    pub size_index: usize,
    pub kind: ErrorKind,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub dataset_tag: String,
    pub methods: Vec<Method>,
    pub epsilons: Vec<f64>,
    pub schedule: QuerySchedule,
    pub seeds: Vec<u64>,
    pub noise: NoiseFactory,
    /// Overrides `0.001·N`.
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    pub samples: Vec<SampleSet>,
}

impl ExperimentReport {
    /// Mean of all raw errors for a method/ε/kind over size indices `sizes`,
    /// restricted to one seed when given.
    pub fn pooled_mean(
        &self,
        method: &str,
        epsilon: f64,
        seed: Option<u64>,
        kind: ErrorKind,
        sizes: std::ops::RangeInclusive<usize>,
    ) -> Option<f64> {
        let (mut total, mut n) = (0.0, 0usize);
        for s in &self.samples {
            if s.method == method
                && s.epsilon == epsilon
                && s.kind == kind
                && sizes.contains(&s.size_index)
                && seed.is_none_or(|x| x == s.seed)
            {
                total += s.values.iter().sum::<f64>();
                n += s.values.len();
            }
        }
        (n > 0).then(|| total / n as f64)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.dataset,
                r.method,
                r.epsilon,
                r.size_index,
                r.kind,
                r.stats.p25,
                r.stats.median,
                r.stats.p75,
                r.stats.p95,
                r.stats.mean,
                r.seed
            )?;
        }
        Ok(())
    }

    /// Raw samples as `method,epsilon,seed,size_index,kind,query,error`.
    pub fn write_samples_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "method,epsilon,seed,size_index,kind,query,error")?;
        for s in &self.samples {
            for (k, v) in s.values.iter().enumerate() {
                writeln!(out, "{},{},{},{},{},{},{}", s.method, s.epsilon, s.seed, s.size_index, s.kind, k, v)?;
            }
        }
        Ok(())
    }
}

pub const CSV_HEADER: &str = "dataset,method,epsilon,size_index,kind,p25,median,p75,p95,mean,seed";

pub fn parse_report_csv(text: &str) -> Result<Vec<ReportRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == CSV_HEADER => {}
        _ => return Err(Error::Parse { line: 1, msg: "missing report header".into() }),
    }
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(idx, line)| {
            let bad = |msg: String| Error::Parse { line: idx + 1, msg };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 11 {
                return Err(bad(format!("expected 11 fields, found {}", f.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
            Ok(ReportRow {
                dataset: f[0].to_string(),
                method: f[1].to_string(),
                epsilon: num(f[2])?,
                size_index: f[3].parse().map_err(|_| bad(format!("bad size index {:?}", f[3])))?,
                kind: f[4].parse().map_err(|e: Error| bad(e.to_string()))?,
                stats: ErrorStats {
                    p25: num(f[5])?,
                    median: num(f[6])?,
                    p75: num(f[7])?,
                    p95: num(f[8])?,
                    mean: num(f[9])?,
                },
                seed: f[10].parse().map_err(|e: Error| bad(e.to_string()))?,
            })
        })
        .collect()
}

/// The scheduled queries for one seed together with their true answers.
struct Workload {
    queries: Vec<Vec<Rect>>,
    truths: Vec<Vec<f64>>,
}

fn workload(ds: &PointDataset, schedule: &QuerySchedule, seed: u64) -> Result<Workload> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(QUERY_STREAM);
    let queries = schedule
        .sizes
        .iter()
        .map(|&size| match schedule.lattice {
            Some(l) => gen_aligned_queries(&ds.domain(), size, schedule.queries_per_size, l, &mut rng),
            None => gen_queries(&ds.domain(), size, schedule.queries_per_size, &mut rng),
        })
        .collect::<Result<Vec<_>>>()?;
    let truths = queries.iter().map(|qs| qs.par_iter().map(|q| true_count(ds, q) as f64).collect()).collect();
    Ok(Workload { queries, truths })
}

/// Runs every `(method, ε, seed)` trial. Trial noise comes from stream
/// `1 + method·|ε| + ε_index` under the trial seed, so results do not depend
/// on scheduling.
pub fn run_experiment(ds: &PointDataset, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.schedule.validate(&ds.domain())?;
    if cfg.methods.is_empty() || cfg.epsilons.is_empty() || cfg.seeds.is_empty() {
        return Err(Error::param("experiment needs at least one method, epsilon and seed"));
    }
    let rho = cfg.rho.unwrap_or(RHO_FRACTION * ds.len() as f64);
    if !(rho > 0.0) {
        return Err(Error::param(format!("rho must be positive, got {rho} (empty dataset?)")));
    }
    let workloads = cfg.seeds.iter().map(|&s| workload(ds, &cfg.schedule, s)).collect::<Result<Vec<_>>>()?;

    let mut trials = Vec::new();
    for (mi, method) in cfg.methods.iter().enumerate() {
        for (ei, &eps) in cfg.epsilons.iter().enumerate() {
            for (si, &seed) in cfg.seeds.iter().enumerate() {
                let stream = 1 + (mi * cfg.epsilons.len() + ei) as u64;
                trials.push((method, eps, si, seed, stream));
            }
        }
    }

    let per_trial: Vec<Vec<SampleSet>> = trials
        .par_iter()
        .map(|&(method, eps, si, seed, stream)| {
            let mut src = cfg.noise.make(seed, stream);
            let syn = method.build(ds, eps, &mut src)?;
            let w = &workloads[si];
            let tag = method.tag();
            let mut sets = Vec::with_capacity(2 * NUM_SIZES);
            for (k, (qs, truths)) in w.queries.iter().zip(&w.truths).enumerate() {
                let answers: Vec<f64> = qs.iter().map(|q| syn.answer(q).value).collect();
                for kind in ErrorKind::ALL {
                    let values = answers
                        .iter()
                        .zip(truths)
                        .map(|(&a, &t)| match kind {
                            ErrorKind::Relative => relative_error(a, t, rho),
                            ErrorKind::Absolute => absolute_error(a, t),
                        })
                        .collect();
                    sets.push(SampleSet { method: tag.clone(), epsilon: eps, seed, size_index: k + 1, kind, values });
                }
            }
            Ok(sets)
        })
        .collect::<Result<_>>()?;
    let samples: Vec<SampleSet> = per_trial.into_iter().flatten().collect();

    let mut rows = Vec::new();
    let row = |s: &SampleSet, values: &[f64], seed: SeedTag| -> Result<ReportRow> {
        Ok(ReportRow {
            dataset: cfg.dataset_tag.clone(),
            method: s.method.clone(),
            epsilon: s.epsilon,
            size_index: s.size_index,
            kind: s.kind,
            stats: candlestick(values)?,
            seed,
        })
    };
    for s in &samples {
        rows.push(row(s, &s.values, SeedTag::Seed(s.seed))?);
    }
    // Pooled rows: samples are ordered method, ε, seed, size, kind, so the
    // sets for one (method, ε) are a contiguous block of seeds.
    let block = 2 * NUM_SIZES;
    for group in samples.chunks(block * cfg.seeds.len()) {
        for offset in 0..block {
            let pooled: Vec<f64> =
                group.iter().skip(offset).step_by(block).flat_map(|s| s.values.iter().copied()).collect();
            rows.push(row(&group[offset], &pooled, SeedTag::Pooled)?);
        }
    }
    Ok(ExperimentReport { rows, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{gen_synthetic, SyntheticKind, SyntheticSpec};
    use crate::privacy::SizingMode;

    #[test]
    fn schedules() {
        let road = QuerySchedule::from_q1((0.5, 0.5), 200);
        assert_eq!(road.sizes[5], (16.0, 16.0));
        road.validate(&Rect::new(0.0, 0.0, 25.0, 20.0).unwrap()).unwrap();
        let checkin = QuerySchedule::from_q1((6.0, 3.0), 200);
        assert_eq!(checkin.sizes[5], (192.0, 96.0));
        checkin.validate(&Rect::new(-180.0, -60.0, 180.0, 90.0).unwrap()).unwrap();

        let d = Rect::new(0.0, 0.0, 64.0, 64.0).unwrap();
        let s = default_schedule(&d);
        assert_eq!(s.sizes[0], (1.0, 1.0));
        assert_eq!(s.sizes[5], (32.0, 32.0));
        assert_eq!(s.sizes[5].0 * s.sizes[5].1 / d.area(), 0.25);
        assert_eq!(s.queries_per_size, 200);
        assert!(QuerySchedule::from_q1((3.0, 3.0), 1).validate(&d).is_err());
    }

    #[test]
    fn gen_queries_cases() {
        let d = Rect::new(0.0, 0.0, 4.0, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let full = gen_queries(&d, (4.0, 2.0), 5, &mut rng).unwrap();
        assert!(full.iter().all(|q| *q == d));
        assert!(gen_queries(&d, (1.0, 1.0), 0, &mut rng).unwrap().is_empty());
        assert!(gen_queries(&d, (5.0, 1.0), 1, &mut rng).is_err());
        let qs = gen_queries(&d, (1.0, 0.5), 1000, &mut rng).unwrap();
        assert!(qs.iter().all(|q| d.covers(q)));
        let a = gen_queries(&d, (1.0, 1.0), 10, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = gen_queries(&d, (1.0, 1.0), 10, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gen_queries_uniform_placement() {
        let d = Rect::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 10_000;
        let qs = gen_queries(&d, (0.5, 0.5), n, &mut rng).unwrap();
        let mean = qs.iter().map(|q| q.x0).sum::<f64>() / n as f64;
        // x0 ~ U(0, 0.5): mean 0.25, sd 0.5/√12.
        let sigma = 0.5 / 12f64.sqrt() / (n as f64).sqrt();
        assert!((mean - 0.25).abs() < 3.0 * sigma, "mean {mean}");
    }

    #[test]
    fn error_formulas() {
        assert_eq!(relative_error(5.0, 5.0, 10.0), 0.0);
        assert_eq!(relative_error(15.0, 5.0, 10.0), 1.0);
        assert_eq!(relative_error(2.0, 0.0, 10.0), 0.2);
        assert_eq!(relative_error(150.0, 100.0, 10.0), 0.5);
        assert_eq!(absolute_error(5.0, 5.0), 0.0);
        assert_eq!(absolute_error(15.0, 5.0), 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let (a, t): (f64, f64) = (rng.random_range(-1e3..1e3), rng.random_range(0.0..1e3));
            assert_eq!(absolute_error(a, t), if a > t { a - t } else { t - a });
        }
    }

    #[test]
    fn candlestick_cases() {
        let s = candlestick(&[7.0]).unwrap();
        assert_eq!(s, ErrorStats { p25: 7.0, median: 7.0, p75: 7.0, p95: 7.0, mean: 7.0 });
        let seq: Vec<f64> = (1..=100).map(f64::from).collect();
        let s = candlestick(&seq).unwrap();
        assert_eq!(s, ErrorStats { p25: 25.0, median: 50.0, p75: 75.0, p95: 95.0, mean: 50.5 });
        assert!(candlestick(&[]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn candlestick_ordering(xs in proptest::collection::vec(-1e6f64..1e6, 1..300)) {
            let s = candlestick(&xs).unwrap();
            let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            proptest::prop_assert!(lo <= s.p25 && s.p25 <= s.median && s.median <= s.p75 && s.p75 <= s.p95 && s.p95 <= hi);
            proptest::prop_assert!(lo <= s.mean + 1e-6 && s.mean <= hi + 1e-6);
        }
    }

    fn small_config(noise: NoiseFactory) -> (PointDataset, ExperimentConfig) {
        let domain = Rect::new(0.0, 0.0, 64.0, 64.0).unwrap();
        let ds = gen_synthetic(&SyntheticSpec { kind: SyntheticKind::Uniform, n: 2000, domain }, 1).unwrap();
        let cfg = ExperimentConfig {
            dataset_tag: "toy".into(),
            methods: vec![
                Method::Uniform(UGConfig { sizing: SizingMode::ExactN, ..Default::default() }),
                Method::Adaptive(AGConfig::default()),
                Method::Hierarchy(HierConfig::new(2, 3, 16)),
            ],
            epsilons: vec![0.5, 1.0],
            schedule: QuerySchedule::from_q1((1.0, 1.0), 20),
            seeds: vec![1, 2],
            noise,
            rho: None,
        };
        (ds, cfg)
    }

    #[test]
    fn report_shape_and_determinism() {
        let (ds, cfg) = small_config(NoiseFactory::Laplace);
        let a = run_experiment(&ds, &cfg).unwrap();
        let b = run_experiment(&ds, &cfg).unwrap();
        assert_eq!(a, b);
        // 3 methods × 2 ε × (2 seeds + pooled) × 6 sizes × 2 kinds
        assert_eq!(a.rows.len(), 3 * 2 * 3 * 6 * 2);
        for r in &a.rows {
            if let SeedTag::Seed(seed) = r.seed {
                let raw = a
                    .samples
                    .iter()
                    .find(|s| {
                        s.method == r.method
                            && s.epsilon == r.epsilon
                            && s.seed == seed
                            && s.size_index == r.size_index
                            && s.kind == r.kind
                    })
                    .unwrap();
                assert_eq!(candlestick(&raw.values).unwrap(), r.stats);
            }
        }
        let pooled = a
            .rows
            .iter()
            .find(|r| {
                r.method == "ag"
                    && r.epsilon == 1.0
                    && r.size_index == 3
                    && r.kind == ErrorKind::Relative
                    && r.seed == SeedTag::Pooled
            })
            .unwrap();
        let direct = a.pooled_mean("ag", 1.0, None, ErrorKind::Relative, 3..=3).unwrap();
        assert!((pooled.stats.mean - direct).abs() < 1e-12);
        let mut csv = Vec::new();
        a.write_csv(&mut csv).unwrap();
        let parsed = parse_report_csv(std::str::from_utf8(&csv).unwrap()).unwrap();
        assert_eq!(parsed, a.rows);
    }

    #[test]
    fn aligned_queries_sit_on_lattice() {
        let d = Rect::new(-1.0, 2.0, 9.0, 7.0).unwrap();
        let g = EquiGrid::new(d, 20).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let qs = gen_aligned_queries(&d, (2.0, 1.0), 50, 20, &mut rng).unwrap();
        for q in qs {
            let (xs, ys) = g.span(&q).unwrap();
            assert_eq!((xs.len(), ys.len()), (4, 4));
            assert_eq!(q.x0, g.edge_x(xs.start));
            assert_eq!(q.x1, g.edge_x(xs.end));
            assert_eq!(q.y1, g.edge_y(ys.end));
        }
        assert!(gen_aligned_queries(&d, (0.1, 1.0), 1, 20, &mut rng).is_err());
    }

    #[test]
    fn zero_noise_aligned_schedule_has_no_error() {
        let (ds, mut cfg) = small_config(NoiseFactory::Zero);
        cfg.methods = vec![Method::Uniform(UGConfig::with_m(64)), Method::Hierarchy(HierConfig::new(2, 3, 64))];
        cfg.schedule.lattice = Some(64);
        let rep = run_experiment(&ds, &cfg).unwrap();
        assert!(rep.rows.iter().all(|r| r.stats.mean < 1e-9 && r.stats.p95 < 1e-9));
    }
}
