//! Line-oriented text format for published synopses.
//!
//! ```text
//! dpgrid-synopsis v1
//! method=ug|ag|hier
//! domain=x0,y0,x1,y1
//! epsilon=<total ε>
//! seed=<noise seed>
//! budget=<label>:<ε>;<label>:<ε>...
//! ```
//!
//! followed by a method-specific body:
//!
//! * `ug`: `m=<m>` then `m²` lines `i,j,count,variance`, row-major;
//! * `ag`: `alpha=`, `m1=`, `var_v=`, `var_u=`, then per first-level cell
//!   `cell i,j m2=<m2> v=<v> vprime=<v'>` followed by `m2²` lines
//!   `a,b,u,uprime`;
//! * `hier`: `b=`, `d=`, `leaf_m=`, `inference=`, then per level
//!   `level k m=<m>` with `i,j,count,variance` lines, and finally
//!   `leaves m=<m>` with `i,j,value` lines holding the queryable leaves.
//!
//! Reals are written in shortest round-trip form, so parsing and writing
//! again reproduces the file byte for byte.

use std::io::Write;

use crate::agrid::{AdaptiveCell, AdaptiveSynopsis};
use crate::error::{Error, Result};
use crate::geo::{EquiGrid, Rect};
use crate::hierarchy::{HierConfig, HierSynopsis};
use crate::privacy::{Budget, NoisyValue};
use crate::query::AnySynopsis;
use crate::ugrid::GridSynopsis;

pub const MAGIC: &str = "dpgrid-synopsis v1";

fn write_header<W: Write>(out: &mut W, method: &str, domain: &Rect, budget: &Budget, seed: u64) -> std::io::Result<()> {
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "method={method}")?;
    writeln!(out, "domain={},{},{},{}", domain.x0, domain.y0, domain.x1, domain.y1)?;
    writeln!(out, "epsilon={}", budget.total())?;
    writeln!(out, "seed={seed}")?;
    writeln!(out, "budget={budget}")
}

pub fn write_synopsis<W: Write>(s: &AnySynopsis, mut out: W) -> std::io::Result<()> {
    match s {
        AnySynopsis::Uniform(g) => {
            write_header(&mut out, GridSynopsis::METHOD_TAG, &g.domain(), g.budget(), g.seed())?;
            writeln!(out, "m={}", g.m())?;
            for (k, c) in g.counts().iter().enumerate() {
                let (i, j) = g.grid().unflat(k);
                writeln!(out, "{i},{j},{c},{}", g.variance_per_cell())?;
            }
        }
        AnySynopsis::Adaptive(a) => {
            write_header(&mut out, AdaptiveSynopsis::METHOD_TAG, &a.domain(), a.budget(), a.seed())?;
            writeln!(out, "alpha={}", a.alpha())?;
            writeln!(out, "m1={}", a.m1())?;
            let first = &a.cells()[0];
            writeln!(out, "var_v={}", first.v.variance)?;
            writeln!(out, "var_u={}", first.u[0].variance)?;
            for (k, c) in a.cells().iter().enumerate() {
                let (i, j) = a.grid().unflat(k);
                writeln!(out, "cell {i},{j} m2={} v={} vprime={}", c.m2, c.v.value, c.v_prime)?;
                for (l, (u, up)) in c.u.iter().zip(&c.u_prime).enumerate() {
                    writeln!(out, "{},{},{},{up}", l / c.m2, l % c.m2, u.value)?;
                }
            }
        }
        AnySynopsis::Hierarchy(h) => {
            write_header(&mut out, HierSynopsis::METHOD_TAG, &h.domain(), h.budget(), h.seed())?;
            let cfg = h.config();
            writeln!(out, "b={}", cfg.b)?;
            writeln!(out, "d={}", cfg.d)?;
            writeln!(out, "leaf_m={}", cfg.leaf_m)?;
            writeln!(out, "inference={}", h.is_inferred())?;
            for (k, level) in h.levels().iter().enumerate() {
                writeln!(out, "level {k} m={}", level.grid.m)?;
                for (idx, c) in level.noisy.iter().enumerate() {
                    let (i, j) = level.grid.unflat(idx);
                    writeln!(out, "{i},{j},{c},{}", level.variance)?;
                }
            }
            let leaf = h.leaf_grid();
            writeln!(out, "leaves m={}", leaf.m)?;
            for (idx, v) in h.leaves().iter().enumerate() {
                let (i, j) = leaf.unflat(idx);
                writeln!(out, "{i},{j},{v}")?;
            }
        }
    }
    Ok(())
}

pub fn synopsis_to_string(s: &AnySynopsis) -> String {
    let mut buf = Vec::new();
    write_synopsis(s, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("synopsis text is UTF-8")
}

struct Lines<'a> {
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines { iter: text.lines().enumerate(), line: 0 }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Format { line: self.line, msg: msg.into() }
    }

    fn next(&mut self) -> Result<&'a str> {
        match self.iter.next() {
            Some((k, l)) => {
                self.line = k + 1;
                Ok(l.trim_end_matches('\r'))
            }
            None => {
                self.line += 1;
                Err(self.err("unexpected end of file"))
            }
        }
    }

    fn key(&mut self, key: &str) -> Result<&'a str> {
        let l = self.next()?;
        l.strip_prefix(key)
            .and_then(|r| r.strip_prefix('='))
            .ok_or_else(|| self.err(format!("expected `{key}=`, found {l:?}")))
    }

    fn parse<T: std::str::FromStr>(&self, s: &str, what: &str) -> Result<T> {
        s.trim().parse().map_err(|_| self.err(format!("bad {what} {s:?}")))
    }

    fn key_parse<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let v = self.key(key)?;
        self.parse(v, key)
    }

    fn fields<const N: usize>(&mut self) -> Result<[&'a str; N]> {
        let l = self.next()?;
        let parts: Vec<&str> = l.split(',').collect();
        parts.try_into().map_err(|_| self.err(format!("expected {N} comma-separated fields, found {l:?}")))
    }

    /// Reads an `i,j` pair and checks it against the expected position.
    fn expect_index(&self, i: &str, j: &str, at: (usize, usize)) -> Result<()> {
        let got: (usize, usize) = (self.parse(i, "row index")?, self.parse(j, "column index")?);
        if got != at {
            return Err(self.err(format!("expected cell {},{} but found {},{}", at.0, at.1, got.0, got.1)));
        }
        Ok(())
    }

    fn finish(&mut self) -> Result<()> {
        for (k, l) in self.iter.by_ref() {
            if !l.trim().is_empty() {
                return Err(Error::Format { line: k + 1, msg: format!("trailing content {l:?}") });
            }
        }
        Ok(())
    }
}

fn parse_budget(lines: &Lines, total: f64, text: &str) -> Result<Budget> {
    let mut parts = Vec::new();
    for item in text.split(';').filter(|s| !s.is_empty()) {
        let (label, e) = item.split_once(':').ok_or_else(|| lines.err(format!("bad budget entry {item:?}")))?;
        parts.push((label.to_string(), lines.parse::<f64>(e, "budget amount")?));
    }
    Budget::from_parts(total, parts).map_err(|e| lines.err(e.to_string()))
}

pub fn parse_synopsis(text: &str) -> Result<AnySynopsis> {
    let mut lines = Lines::new(text);
    if lines.next()? != MAGIC {
        return Err(lines.err(format!("missing `{MAGIC}` header")));
    }
    let method = lines.key("method")?;
    let domain: Rect = {
        let d = lines.key("domain")?;
        d.parse().map_err(|e: Error| lines.err(e.to_string()))?
    };
    let epsilon: f64 = lines.key_parse("epsilon")?;
    let seed: u64 = lines.key_parse("seed")?;
    let budget = {
        let b = lines.key("budget")?;
        parse_budget(&lines, epsilon, b)?
    };
    let wrap = |lines: &Lines, e: Error| lines.err(e.to_string());

    let syn = match method {
        "ug" => {
            let m: usize = lines.key_parse("m")?;
            let grid = EquiGrid::new(domain, m).map_err(|e| wrap(&lines, e))?;
            let mut counts = Vec::with_capacity(grid.num_cells());
            let mut variance = None;
            for k in 0..grid.num_cells() {
                let [i, j, c, v] = lines.fields::<4>()?;
                lines.expect_index(i, j, grid.unflat(k))?;
                counts.push(lines.parse::<f64>(c, "count")?);
                let v: f64 = lines.parse(v, "variance")?;
                if variance.is_some_and(|prev| prev != v) {
                    return Err(lines.err("cells carry different variances"));
                }
                variance = Some(v);
            }
            let g = GridSynopsis::from_parts(grid, counts, variance.unwrap_or(0.0), budget, seed)
                .map_err(|e| wrap(&lines, e))?;
            AnySynopsis::Uniform(g)
        }
        "ag" => {
            let alpha: f64 = lines.key_parse("alpha")?;
            let m1: usize = lines.key_parse("m1")?;
            let var_v: f64 = lines.key_parse("var_v")?;
            let var_u: f64 = lines.key_parse("var_u")?;
            let grid = EquiGrid::new(domain, m1).map_err(|e| wrap(&lines, e))?;
            let mut cells = Vec::with_capacity(grid.num_cells());
            for k in 0..grid.num_cells() {
                let head = lines.next()?;
                let rest = head
                    .strip_prefix("cell ")
                    .ok_or_else(|| lines.err(format!("expected `cell` block, found {head:?}")))?;
                let mut it = rest.split(' ');
                let (Some(pos), Some(m2), Some(v), Some(vp), None) =
                    (it.next(), it.next(), it.next(), it.next(), it.next())
                else {
                    return Err(lines.err(format!("malformed cell line {head:?}")));
                };
                let (i, j) = pos.split_once(',').ok_or_else(|| lines.err("bad cell position"))?;
                lines.expect_index(i, j, grid.unflat(k))?;
                let field = |s: &'_ str, key: &str| -> Result<String> {
                    s.strip_prefix(key)
                        .and_then(|r| r.strip_prefix('='))
                        .map(str::to_string)
                        .ok_or_else(|| lines.err(format!("expected `{key}=`, found {s:?}")))
                };
                let m2: usize = lines.parse(&field(m2, "m2")?, "m2")?;
                if m2 == 0 {
                    return Err(lines.err("m2 must be at least 1"));
                }
                let v: f64 = lines.parse(&field(v, "v")?, "v")?;
                let v_prime: f64 = lines.parse(&field(vp, "vprime")?, "vprime")?;
                let mut u = Vec::with_capacity(m2 * m2);
                let mut u_prime = Vec::with_capacity(m2 * m2);
                for l in 0..m2 * m2 {
                    let [a, b, uv, upv] = lines.fields::<4>()?;
                    lines.expect_index(a, b, (l / m2, l % m2))?;
                    u.push(NoisyValue { value: lines.parse(uv, "u")?, variance: var_u });
                    u_prime.push(lines.parse(upv, "uprime")?);
                }
                cells.push(AdaptiveCell { v: NoisyValue { value: v, variance: var_v }, m2, u, v_prime, u_prime });
            }
            let a = AdaptiveSynopsis::from_parts(grid, alpha, cells, budget, seed).map_err(|e| wrap(&lines, e))?;
            AnySynopsis::Adaptive(a)
        }
        "hier" => {
            let b: usize = lines.key_parse("b")?;
            let d: usize = lines.key_parse("d")?;
            let leaf_m: usize = lines.key_parse("leaf_m")?;
            let inferred: bool = lines.key_parse("inference")?;
            let cfg = HierConfig { b, d, leaf_m, inference: inferred };
            cfg.validate().map_err(|e| wrap(&lines, e))?;
            let mut levels = Vec::with_capacity(d);
            for (k, m) in cfg.level_sizes().into_iter().enumerate() {
                let head = lines.next()?;
                if head != format!("level {k} m={m}") {
                    return Err(lines.err(format!("expected `level {k} m={m}`, found {head:?}")));
                }
                let grid = EquiGrid::new(domain, m).map_err(|e| wrap(&lines, e))?;
                let mut counts = Vec::with_capacity(m * m);
                let mut variance = 0.0;
                for idx in 0..m * m {
                    let [i, j, c, v] = lines.fields::<4>()?;
                    lines.expect_index(i, j, grid.unflat(idx))?;
                    counts.push(lines.parse::<f64>(c, "count")?);
                    variance = lines.parse(v, "variance")?;
                }
                levels.push((grid, counts, variance));
            }
            let head = lines.next()?;
            if head != format!("leaves m={leaf_m}") {
                return Err(lines.err(format!("expected `leaves m={leaf_m}`, found {head:?}")));
            }
            let leaf_grid = EquiGrid::new(domain, leaf_m).map_err(|e| wrap(&lines, e))?;
            let mut leaves = Vec::with_capacity(leaf_m * leaf_m);
            for idx in 0..leaf_m * leaf_m {
                let [i, j, v] = lines.fields::<3>()?;
                lines.expect_index(i, j, leaf_grid.unflat(idx))?;
                leaves.push(lines.parse::<f64>(v, "leaf value")?);
            }
            let h =
                HierSynopsis::from_parts(cfg, levels, leaves, inferred, budget, seed).map_err(|e| wrap(&lines, e))?;
            AnySynopsis::Hierarchy(h)
        }
        other => return Err(lines.err(format!("unknown method {other:?}"))),
    };
    lines.finish()?;
    Ok(syn)
}
