//! Classical and weighted star-discrepancy of finite point sets in `[0,1]^d`,
//! the explicit upper and lower bounds that govern its tractability, and
//! randomized union-bound constructions that realize those bounds.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, reporting, the
//! Monte Carlo harness and the command-line tool live in the companion
//! `stardisc-cli` crate.
//!
//! Module map:
//!
//! * [`geometry`]: points, point sets, anchored boxes, counting and projection.
//! * [`subset`]: coordinate subsets as bitmasks.
//! * [`weights`]: weight systems, subset enumeration, weight-derived constants
//!   and summability conditions.
//! * [`discrepancy`]: local discrepancy, exact and estimated star-discrepancy,
//!   weighted star-discrepancy with subset pruning.
//! * [`oracle`]: an independent brute-force reference for the exact algorithm.
//! * [`bounds`]: every explicit bound, tail estimate and proof inequality.
//! * [`construct`]: sample-test-accept constructions.
//! * [`rng`]: the counter-based random streams everything above draws from.
#![no_std]
#![forbid(unsafe_code)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bounds;
pub mod construct;
pub mod discrepancy;
pub mod geometry;
pub mod oracle;
pub mod rng;
pub mod subset;
pub mod weights;

pub use bounds::{BoundParams, BoundReport, TheoremId};
pub use construct::ConstructionOutcome;
pub use discrepancy::{DiscrepancyResult, ExactBudget, Mode};
pub use geometry::{AnchoredBox, Boundary, GeometryError, Point, PointSet};
pub use subset::SubsetMask;
pub use weights::{ProductWeights, Tail, WeightConstants, WeightError, WeightSystem};
