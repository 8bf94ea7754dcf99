//! Brute-force reference values for tiny instances.
//!
//! Every grid node is recounted from scratch with [`PointSet::count_in_box`];
//! no state is shared between nodes. The grid uses every coordinate of every
//! point (plus 1), a superset of the grid used by the fast algorithm.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::geometry::{AnchoredBox, Boundary, GeometryError, PointSet};
use crate::subset::SubsetMask;
use crate::weights::{enumerate_subsets_wide, SubsetOrder, WeightError, WeightSystem};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("oracle is limited to N <= {max_points} and d <= {max_dim}; got N = {n}, d = {d}")]
    TooLarge { n: usize, d: usize, max_points: usize, max_dim: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Weight(#[from] WeightError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleLimits {
    pub max_points: usize,
    pub max_dim: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        Self { max_points: 8, max_dim: 3 }
    }
}

fn check(ps: &PointSet, limits: OracleLimits) -> Result<(), OracleError> {
    if ps.len() > limits.max_points || ps.dim() > limits.max_dim {
        return Err(OracleError::TooLarge {
            n: ps.len(),
            d: ps.dim(),
            max_points: limits.max_points,
            max_dim: limits.max_dim,
        });
    }
    Ok(())
}

fn axis_values(ps: &PointSet, j: usize) -> Vec<f64> {
    let mut v: Vec<f64> = ps.points().map(|p| p[j]).collect();
    v.push(1.0);
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Maximum of both grid terms over nodes whose coordinates outside `free`
/// are fixed to 1.
fn padded_max(ps: &PointSet, free: &[usize]) -> Result<f64, GeometryError> {
    let d = ps.dim();
    let axes: Vec<Vec<f64>> = free.iter().map(|&j| axis_values(ps, j)).collect();
    let n = ps.len() as f64;
    let mut idx = vec![0usize; free.len()];
    let mut best = 0.0f64;
    loop {
        let mut y = vec![1.0; d];
        for (k, &j) in free.iter().enumerate() {
            y[j] = axes[k][idx[k]];
        }
        let closure: Vec<Boundary> =
            y.iter().map(|&v| if v < 1.0 { Boundary::Closed } else { Boundary::Open }).collect();
        let all_open = vec![Boundary::Open; d];
        let anchor = AnchoredBox::new(y)?;
        let vol = anchor.volume();
        let open = ps.count_in_box(&anchor, &all_open)? as f64 / n;
        let closed = ps.count_in_box(&anchor, &closure)? as f64 / n;
        best = best.max(vol - open).max(closed - vol);

        let mut k = 0;
        loop {
            if k == free.len() {
                return Ok(best);
            }
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Star-discrepancy by exhaustive recount, for instances within `limits`.
pub fn star_discrepancy_oracle_with(ps: &PointSet, limits: OracleLimits) -> Result<f64, OracleError> {
    check(ps, limits)?;
    let all: Vec<usize> = (0..ps.dim()).collect();
    Ok(padded_max(ps, &all)?)
}

/// Star-discrepancy by exhaustive recount (`N <= 8`, `d <= 3`).
pub fn star_discrepancy_oracle(ps: &PointSet) -> Result<f64, OracleError> {
    star_discrepancy_oracle_with(ps, OracleLimits::default())
}

/// Weighted star-discrepancy straight from the padded-anchor definition:
/// for every subset, anchors `(z(u); 1)` in the full dimension.
pub fn weighted_star_discrepancy_oracle(
    ps: &PointSet,
    ws: &WeightSystem,
    limits: OracleLimits,
) -> Result<(f64, Option<SubsetMask>), OracleError> {
    check(ps, limits)?;
    let mut best = (0.0, None);
    for mask in enumerate_subsets_wide(ps.dim(), SubsetOrder::ByCardinality)? {
        let w = ws.weight_of(&mask)?;
        if w == 0.0 {
            continue;
        }
        let free: Vec<usize> = mask.indices().map(|j| j - 1).collect();
        let v = w * padded_max(ps, &free)?;
        let better = match &best.1 {
            None => true,
            Some(m) => v > best.0 || (v == best.0 && mask < *m),
        };
        if better {
            best = (v, Some(mask));
        }
    }
    Ok(best)
}
