//! Range-query answering over released synopses.
//!
//! Cells inside the query contribute their whole count; cells cut by the
//! query boundary contribute in proportion to the covered area. Only the
//! index range of cells that can intersect the query is visited.

use std::ops::AddAssign;

use crate::agrid::AdaptiveSynopsis;
use crate::geo::{EquiGrid, Rect, SLIVER_FRACTION};
use crate::hierarchy::HierSynopsis;
use crate::ugrid::GridSynopsis;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Answer {
    pub value: f64,
    pub cells_full: usize,
    pub cells_partial: usize,
}

impl AddAssign for Answer {
    fn add_assign(&mut self, rhs: Answer) {
        self.value += rhs.value;
        self.cells_full += rhs.cells_full;
        self.cells_partial += rhs.cells_partial;
    }
}

pub trait Synopsis {
    fn domain(&self) -> Rect;

    fn num_leaves(&self) -> usize;

    /// Estimated number of points in `q`. Queries are clipped to the domain.
    fn answer(&self, q: &Rect) -> Answer;
}

pub fn answer<S: Synopsis + ?Sized>(s: &S, q: &Rect) -> Answer {
    s.answer(q)
}

/// Answers `q` over an equi-width grid with row-major `counts`.
pub fn answer_grid(grid: &EquiGrid, counts: &[f64], q: &Rect) -> Answer {
    let mut out = Answer::default();
    let Some((xs, ys)) = grid.span(q) else {
        return out;
    };
    for i in xs {
        for j in ys.clone() {
            let cell = grid.cell_rect(i, j);
            let count = counts[grid.flat(i, j)];
            if q.covers(&cell) {
                out.value += count;
                out.cells_full += 1;
            } else if let Some(inter) = cell.intersection(q) {
                let frac = inter.area() / cell.area();
                if frac >= SLIVER_FRACTION {
                    out.value += count * frac;
                    out.cells_partial += 1;
                }
            }
        }
    }
    out
}

impl Synopsis for GridSynopsis {
    fn domain(&self) -> Rect {
        GridSynopsis::domain(self)
    }

    fn num_leaves(&self) -> usize {
        self.grid().num_cells()
    }

    fn answer(&self, q: &Rect) -> Answer {
        answer_grid(self.grid(), self.counts(), q)
    }
}

impl Synopsis for AdaptiveSynopsis {
    fn domain(&self) -> Rect {
        AdaptiveSynopsis::domain(self)
    }

    fn num_leaves(&self) -> usize {
        AdaptiveSynopsis::num_leaves(self)
    }

    fn answer(&self, q: &Rect) -> Answer {
        let mut out = Answer::default();
        let Some((xs, ys)) = self.grid().span(q) else {
            return out;
        };
        for i in xs {
            for j in ys.clone() {
                out += answer_grid(&self.leaf_grid(i, j), &self.cell(i, j).u_prime, q);
            }
        }
        out
    }
}

impl Synopsis for HierSynopsis {
    fn domain(&self) -> Rect {
        HierSynopsis::domain(self)
    }

    fn num_leaves(&self) -> usize {
        self.leaves().len()
    }

    fn answer(&self, q: &Rect) -> Answer {
        answer_grid(self.leaf_grid(), self.leaves(), q)
    }
}

/// Any of the supported synopsis kinds.
#[derive(Debug, Clone, PartialEq)]
pub enum AnySynopsis {
    Uniform(GridSynopsis),
    Adaptive(AdaptiveSynopsis),
    Hierarchy(HierSynopsis),
}

impl AnySynopsis {
    pub fn method_tag(&self) -> &'static str {
        match self {
            AnySynopsis::Uniform(_) => GridSynopsis::METHOD_TAG,
            AnySynopsis::Adaptive(_) => AdaptiveSynopsis::METHOD_TAG,
            AnySynopsis::Hierarchy(_) => HierSynopsis::METHOD_TAG,
        }
    }

    fn inner(&self) -> &dyn Synopsis {
        match self {
            AnySynopsis::Uniform(s) => s,
            AnySynopsis::Adaptive(s) => s,
            AnySynopsis::Hierarchy(s) => s,
        }
    }
}

impl Synopsis for AnySynopsis {
    fn domain(&self) -> Rect {
        self.inner().domain()
    }

    fn num_leaves(&self) -> usize {
        self.inner().num_leaves()
    }

    fn answer(&self, q: &Rect) -> Answer {
        self.inner().answer(q)
    }
}

impl From<GridSynopsis> for AnySynopsis {
    fn from(s: GridSynopsis) -> Self {
        AnySynopsis::Uniform(s)
    }
}

impl From<AdaptiveSynopsis> for AnySynopsis {
    fn from(s: AdaptiveSynopsis) -> Self {
        AnySynopsis::Adaptive(s)
    }
}

impl From<HierSynopsis> for AnySynopsis {
    fn from(s: HierSynopsis) -> Self {
        AnySynopsis::Hierarchy(s)
    }
}
