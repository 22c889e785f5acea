//! Differentially private grid synopses for two-dimensional point data.
//!
//! A synopsis partitions the data domain into cells, releases a
//! Laplace-noised count per cell and answers rectangular range queries by
//! summing covered cells and pro-rating partially covered ones. Three
//! partitioning strategies are provided:
//!
//! * [`ugrid`]: a single equi-width `m × m` grid sized from `√(Nε/c)`;
//! * [`agrid`]: a coarse grid whose cells are each re-split according to their
//!   own noisy counts, followed by constrained inference between the levels;
//! * [`hierarchy`]: a fixed `b × b`-branching tree over a leaf grid, used as a
//!   baseline.
//!
//! [`bench`] reproduces the relative/absolute error evaluation over query
//! workloads of six doubling sizes, and [`io`] holds the text formats.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agrid;
pub mod bench;
pub mod cli;
pub mod error;
pub mod geo;
pub mod hierarchy;
pub mod io;
pub mod privacy;
pub mod query;
pub mod ugrid;

pub use error::{Error, Result};
pub use geo::{Point, PointDataset, Rect};
pub use privacy::{NoiseSource, SizingMode};
pub use query::{answer, Answer, Synopsis};
