//! Planar geometry, point datasets, exact counting and synthetic data.
//!
//! Every rectangle is half-open, `[x0, x1) × [y0, y1)`, so a partition of a
//! domain into cells places each point in exactly one cell.

use std::fmt;
use std::io::Write;
use std::ops::Range;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use crate::error::{Error, Result};

/// Relative padding applied to an inferred bounding box.
pub const DOMAIN_PAD: f64 = 1e-9;

/// Intersections smaller than this fraction of a cell's area are ignored.
pub const SLIVER_FRACTION: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        let r = Rect { x0, y0, x1, y1 };
        if ![x0, y0, x1, y1].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidRect(format!("non-finite corner in {r}")));
        }
        if !(x0 < x1 && y0 < y1) {
            return Err(Error::InvalidRect(format!("empty extent {r}")));
        }
        Ok(r)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.x0 <= p.x && p.x < self.x1 && self.y0 <= p.y && p.y < self.y1
    }

    /// True when `other` lies entirely inside `self`.
    pub fn covers(&self, other: &Rect) -> bool {
        self.x0 <= other.x0 && other.x1 <= self.x1 && self.y0 <= other.y0 && other.y1 <= self.y1
    }

    /// Intersection with positive area, if any.
    pub fn intersection(&self, other: &Rect) -> Option<Rect> {
        let x0 = self.x0.max(other.x0);
        let y0 = self.y0.max(other.y0);
        let x1 = self.x1.min(other.x1);
        let y1 = self.y1.min(other.y1);
        (x0 < x1 && y0 < y1).then_some(Rect { x0, y0, x1, y1 })
    }
}

impl fmt::Display for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{})x[{},{})", self.x0, self.x1, self.y0, self.y1)
    }
}

impl std::str::FromStr for Rect {
    type Err = Error;

    /// Parses `x0,y0,x1,y1`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidRect(format!("{s:?}: {e}")))?;
        match parts[..] {
            [x0, y0, x1, y1] => Rect::new(x0, y0, x1, y1),
            _ => Err(Error::InvalidRect(format!("{s:?}: expected x0,y0,x1,y1"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointDataset {
    points: Vec<Point>,
    domain: Rect,
}

impl PointDataset {
    pub fn new(points: Vec<Point>, domain: Rect) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| !p.is_finite() || !domain.contains(p)) {
            return Err(Error::OutsideDomain { x: p.x, y: p.y });
        }
        Ok(PointDataset { points, domain })
    }

    /// Builds a dataset whose domain is the bounding box of `points`, padded
    /// on each side so that the maximal coordinates stay inside.
    pub fn with_tight_domain(points: Vec<Point>) -> Result<Self> {
        let first = points.first().ok_or(Error::EmptyWithoutDomain)?;
        let (mut x0, mut y0, mut x1, mut y1) = (first.x, first.y, first.x, first.y);
        for p in &points {
            if !p.is_finite() {
                return Err(Error::OutsideDomain { x: p.x, y: p.y });
            }
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
        }
        let pad = |lo: f64, hi: f64| DOMAIN_PAD * (hi - lo).max(lo.abs()).max(hi.abs()).max(1.0);
        let (px, py) = (pad(x0, x1), pad(y0, y1));
        let domain = Rect::new(x0 - px, y0 - py, x1 + px, y1 + py)?;
        PointDataset::new(points, domain)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn domain(&self) -> Rect {
        self.domain
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Parses a point CSV: one `x,y` per line, with an optional header line that
/// is recognised by failing to parse as numbers.
pub fn load_points(text: &str, domain: Option<Rect>) -> Result<PointDataset> {
    let mut points = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        match parse_point(line) {
            Some(p) => points.push(p),
            None if idx == 0 && looks_like_header(line) => continue,
            None => return Err(Error::Parse { line: idx + 1, msg: format!("expected `x,y`, found {line:?}") }),
        }
    }
    match domain {
        Some(d) => PointDataset::new(points, d),
        None => PointDataset::with_tight_domain(points),
    }
}

fn parse_point(line: &str) -> Option<Point> {
    let (xs, ys) = line.split_once(',')?;
    let x = xs.trim().parse::<f64>().ok()?;
    let y = ys.trim().parse::<f64>().ok()?;
    Point::new(x, y).is_finite().then_some(Point::new(x, y))
}

// A header line has no numeric fields.
fn looks_like_header(line: &str) -> bool {
    line.split(',').all(|f| f.trim().parse::<f64>().is_err())
}

pub fn write_points<W: Write>(ds: &PointDataset, mut out: W) -> std::io::Result<()> {
    writeln!(out, "x,y")?;
    for p in ds.points() {
        writeln!(out, "{},{}", p.x, p.y)?;
    }
    Ok(())
}

/// Exact number of points inside `q`.
pub fn true_count(ds: &PointDataset, q: &Rect) -> u64 {
    ds.points().iter().filter(|p| q.contains(p)).count() as u64
}

/// Share of `count` that falls in `q`, assuming points spread uniformly over `cell`.
pub fn uniform_estimate(count: f64, cell: &Rect, q: &Rect) -> f64 {
    if q.covers(cell) {
        return count;
    }
    match cell.intersection(q) {
        Some(inter) => count * (inter.area() / cell.area()),
        None => 0.0,
    }
}

/// An `m × m` equi-width partition of a rectangle.
///
/// Cell `(i, j)` spans `[edge_x(i), edge_x(i+1)) × [edge_y(j), edge_y(j+1))`,
/// `i` along x and `j` along y. The outermost edges are the domain's own
/// bounds so the cells tile it exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquiGrid {
    pub domain: Rect,
    pub m: usize,
}

impl EquiGrid {
    pub fn new(domain: Rect, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::param("grid size must be at least 1"));
        }
        Ok(EquiGrid { domain, m })
    }

    pub fn num_cells(&self) -> usize {
        self.m * self.m
    }

    pub fn cell_width(&self) -> f64 {
        self.domain.width() / self.m as f64
    }

    pub fn cell_height(&self) -> f64 {
        self.domain.height() / self.m as f64
    }

    pub fn edge_x(&self, k: usize) -> f64 {
        if k >= self.m {
            self.domain.x1
        } else {
            self.domain.x0 + k as f64 * self.cell_width()
        }
    }

    pub fn edge_y(&self, k: usize) -> f64 {
        if k >= self.m {
            self.domain.y1
        } else {
            self.domain.y0 + k as f64 * self.cell_height()
        }
    }

    pub fn cell_rect(&self, i: usize, j: usize) -> Rect {
        Rect { x0: self.edge_x(i), y0: self.edge_y(j), x1: self.edge_x(i + 1), y1: self.edge_y(j + 1) }
    }

    /// Row-major flat index of cell `(i, j)`.
    pub fn flat(&self, i: usize, j: usize) -> usize {
        i * self.m + j
    }

    pub fn unflat(&self, k: usize) -> (usize, usize) {
        (k / self.m, k % self.m)
    }

    fn locate(&self, v: f64, lo: f64, step: f64, edge: impl Fn(usize) -> f64) -> usize {
        let guess = ((v - lo) / step).floor();
        let mut k = if guess.is_nan() || guess < 0.0 { 0 } else { (guess as usize).min(self.m - 1) };
        // floor() can land one cell off when the division rounds; settle
        // against the edges actually used by cell_rect.
        while k > 0 && v < edge(k) {
            k -= 1;
        }
        while k + 1 < self.m && v >= edge(k + 1) {
            k += 1;
        }
        k
    }

    fn locate_x(&self, x: f64) -> usize {
        self.locate(x, self.domain.x0, self.cell_width(), |k| self.edge_x(k))
    }

    fn locate_y(&self, y: f64) -> usize {
        self.locate(y, self.domain.y0, self.cell_height(), |k| self.edge_y(k))
    }

    /// Cell holding `p`.
    pub fn cell_of(&self, p: &Point) -> Result<(usize, usize)> {
        if !self.domain.contains(p) {
            return Err(Error::OutsideDomain { x: p.x, y: p.y });
        }
        Ok((self.locate_x(p.x), self.locate_y(p.y)))
    }

    /// Index ranges of the cells that intersect `q`, or `None` if `q` misses the domain.
    pub fn span(&self, q: &Rect) -> Option<(Range<usize>, Range<usize>)> {
        let q = self.domain.intersection(q)?;
        let i0 = self.locate_x(q.x0);
        let j0 = self.locate_y(q.y0);
        let mut i1 = self.locate_x(q.x1);
        if i1 > i0 && self.edge_x(i1) >= q.x1 {
            i1 -= 1;
        }
        let mut j1 = self.locate_y(q.y1);
        if j1 > j0 && self.edge_y(j1) >= q.y1 {
            j1 -= 1;
        }
        Some((i0..i1 + 1, j0..j1 + 1))
    }

    /// Exact per-cell counts of `points`, row-major.
    pub fn histogram(&self, points: &[Point]) -> Result<Vec<u64>> {
        let mut counts = vec![0u64; self.num_cells()];
        for p in points {
            let (i, j) = self.cell_of(p)?;
            counts[self.flat(i, j)] += 1;
        }
        Ok(counts)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub center: Point,
    pub std: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SyntheticKind {
    Uniform,
    GaussianMixture(Vec<Cluster>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub n: usize,
    pub domain: Rect,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if let SyntheticKind::GaussianMixture(clusters) = &self.kind {
            if clusters.is_empty() {
                return Err(Error::param("mixture needs at least one cluster"));
            }
            for c in clusters {
                if !(c.weight > 0.0) || !(c.std > 0.0) || !c.center.is_finite() {
                    return Err(Error::param(format!("bad cluster {c:?}")));
                }
            }
            let total: f64 = clusters.iter().map(|c| c.weight).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::param(format!("cluster weights sum to {total}, not 1")));
            }
        }
        Ok(())
    }
}

const MAX_REJECTIONS: usize = 1_000_000;

/// Draws `spec.n` points deterministically from `seed`. Mixture draws that
/// fall outside the domain are redrawn from the same cluster.
pub fn gen_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<PointDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = spec.domain;
    let mut points = Vec::with_capacity(spec.n);
    match &spec.kind {
        SyntheticKind::Uniform => {
            while points.len() < spec.n {
                let p = Point::new(d.x0 + rng.random::<f64>() * d.width(), d.y0 + rng.random::<f64>() * d.height());
                if d.contains(&p) {
                    points.push(p);
                }
            }
        }
        SyntheticKind::GaussianMixture(clusters) => {
            let pick =
                WeightedIndex::new(clusters.iter().map(|c| c.weight)).map_err(|e| Error::param(e.to_string()))?;
            let normals: Vec<_> = clusters
                .iter()
                .map(|c| Normal::new(0.0, c.std).map_err(|e| Error::param(e.to_string())))
                .collect::<Result<_>>()?;
            while points.len() < spec.n {
                let k = pick.sample(&mut rng);
                let c = &clusters[k];
                let mut tries = 0;
                loop {
                    let p =
                        Point::new(c.center.x + normals[k].sample(&mut rng), c.center.y + normals[k].sample(&mut rng));
                    if d.contains(&p) {
                        points.push(p);
                        break;
                    }
                    tries += 1;
                    if tries >= MAX_REJECTIONS {
                        return Err(Error::param(format!(
                            "cluster at ({}, {}) almost never lands inside the domain",
                            c.center.x, c.center.y
                        )));
                    }
                }
            }
        }
    }
    PointDataset::new(points, d)
}
