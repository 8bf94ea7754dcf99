//! Local discrepancy, exact and estimated star-discrepancy, and weighted
//! star-discrepancy.
//!
//! The exact algorithm evaluates the critical grid: with `G_j` the distinct
//! `j`-th coordinates of the points together with 1, the supremum of
//! `|count([0,z))/N - vol(z)|` equals the maximum over `y` in
//! `G_1 x ... x G_d` of
//!
//! * `vol(y) - count([0,y))/N` (open term), and
//! * `count([0,y])/N - vol(y)` (closed term).
//!
//! A point with a coordinate equal to 1 lies in no box `[0,z)`. Such points
//! are kept in `N` but never counted.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{AnchoredBox, Boundary, GeometryError, PointSet};
use crate::rng::{mix64, Domain, Stream};
use crate::subset::SubsetMask;
use crate::weights::{enumerate_subsets_wide, subset_count, SubsetOrder, WeightError, WeightSystem};

/// Default ceiling on critical-grid nodes for one exact evaluation.
pub const DEFAULT_MAX_NODES: u64 = 100_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiscrepancyError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Weight(#[from] WeightError),
    #[error("critical grid has {nodes} nodes, budget is {budget}")]
    BudgetExceeded { nodes: u128, budget: u64 },
    #[error("estimator effort must be at least 1")]
    ZeroEffort,
}

/// Resources for exact evaluation and the estimator used when they run out.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactBudget {
    pub max_nodes: u64,
    pub fallback_effort: u64,
    pub fallback_seed: u64,
}

impl Default for ExactBudget {
    fn default() -> Self {
        Self { max_nodes: DEFAULT_MAX_NODES, fallback_effort: 100_000, fallback_seed: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Mode {
    Exact,
    Estimate { effort: u64, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyResult {
    pub value: f64,
    pub witness_anchor: Option<AnchoredBox>,
    /// Which grid term attained the value.
    pub witness_term: Option<Boundary>,
    pub witness_subset: Option<SubsetMask>,
    pub exact: bool,
    pub subsets_evaluated: u64,
    pub subsets_pruned: u64,
}

/// `count([0,z))/N - vol(z)`.
pub fn local_discrepancy(ps: &PointSet, z: &AnchoredBox) -> Result<f64, GeometryError> {
    let count = ps.count_open(z)?;
    Ok(count as f64 / ps.len() as f64 - z.volume())
}

/// Points that can be counted: no coordinate equals 1.
fn live_flags(ps: &PointSet) -> Vec<bool> {
    (0..ps.len()).map(|i| !ps.touches_upper_face(i)).collect()
}

/// Critical grid of the live points, one ascending level per dimension.
fn grid_levels(ps: &PointSet, live: &[bool]) -> Vec<Vec<f64>> {
    (0..ps.dim())
        .map(|j| {
            let mut level: Vec<f64> = Vec::new();
            for &i in ps.sorted(j) {
                let x = ps.coord(i as usize, j);
                if live[i as usize] && level.last() != Some(&x) {
                    level.push(x);
                }
            }
            if level.last() != Some(&1.0) {
                level.push(1.0);
            }
            level
        })
        .collect()
}

fn node_count(levels: &[Vec<f64>]) -> u128 {
    levels.iter().fold(1u128, |acc, l| acc.saturating_mul(l.len() as u128))
}

/// Number of nodes the exact algorithm visits for `ps`.
pub fn grid_size(ps: &PointSet) -> u128 {
    node_count(&grid_levels(ps, &live_flags(ps)))
}

/// Best grid term found so far.
#[derive(Clone, Debug)]
struct Best {
    value: f64,
    anchor: Vec<f64>,
    term: Boundary,
}

impl Best {
    fn new(d: usize) -> Self {
        Self { value: 0.0, anchor: vec![1.0; d], term: Boundary::Open }
    }

    #[inline]
    fn offer(&mut self, value: f64, term: Boundary, anchor: &[f64]) {
        if value > self.value {
            self.value = value;
            self.term = term;
            self.anchor.clear();
            self.anchor.extend_from_slice(anchor);
        }
    }
}

/// Row-major traversal of the critical grid. Level `j` holds membership flags
/// for the points inside the open and closed boxes of the fixed prefix
/// `y_0..y_{j-1}`; stepping `y_j` upward only ever adds members, so each
/// level is filled incrementally from the per-dimension sort order.
struct Traversal<'a> {
    ps: &'a PointSet,
    levels: &'a [Vec<f64>],
    inv_n: f64,
    open: Vec<Vec<bool>>,
    closed: Vec<Vec<bool>>,
    scratch_open: Vec<Vec<u32>>,
    scratch_closed: Vec<Vec<u32>>,
    y: Vec<f64>,
    best: Best,
}

impl<'a> Traversal<'a> {
    fn new(ps: &'a PointSet, levels: &'a [Vec<f64>], live: &[bool]) -> Self {
        let (n, d) = (ps.len(), ps.dim());
        let mut open = vec![vec![false; n]; d];
        let mut closed = vec![vec![false; n]; d];
        open[0].copy_from_slice(live);
        closed[0].copy_from_slice(live);
        Self {
            ps,
            levels,
            inv_n: 1.0 / n as f64,
            open,
            closed,
            scratch_open: vec![Vec::with_capacity(n); d],
            scratch_closed: vec![Vec::with_capacity(n); d],
            y: vec![0.0; d],
            best: Best::new(d),
        }
    }

    fn run(mut self) -> Best {
        self.visit(0, 1.0);
        self.best
    }

    fn members_sorted(&mut self, j: usize) {
        let order = self.ps.sorted(j);
        let (so, sc) = (&mut self.scratch_open[j], &mut self.scratch_closed[j]);
        so.clear();
        sc.clear();
        for &i in order {
            if self.open[j][i as usize] {
                so.push(i);
            }
            if self.closed[j][i as usize] {
                sc.push(i);
            }
        }
    }

    fn visit(&mut self, j: usize, vol_prefix: f64) {
        let d = self.ps.dim();
        self.members_sorted(j);
        let level = &self.levels[j];
        let (so, sc) = (
            core::mem::take(&mut self.scratch_open[j]),
            core::mem::take(&mut self.scratch_closed[j]),
        );
        let (mut po, mut pc) = (0usize, 0usize);
        if j + 1 == d {
            for &yv in level {
                while po < so.len() && self.ps.coord(so[po] as usize, j) < yv {
                    po += 1;
                }
                while pc < sc.len() && self.ps.coord(sc[pc] as usize, j) <= yv {
                    pc += 1;
                }
                self.y[j] = yv;
                let vol = vol_prefix * yv;
                let closed_term = pc as f64 * self.inv_n - vol;
                let open_term = vol - po as f64 * self.inv_n;
                self.best.offer(closed_term, Boundary::Closed, &self.y);
                self.best.offer(open_term, Boundary::Open, &self.y);
            }
        } else {
            self.open[j + 1].iter_mut().for_each(|f| *f = false);
            self.closed[j + 1].iter_mut().for_each(|f| *f = false);
            for k in 0..level.len() {
                let yv = self.levels[j][k];
                while po < so.len() && self.ps.coord(so[po] as usize, j) < yv {
                    self.open[j + 1][so[po] as usize] = true;
                    po += 1;
                }
                while pc < sc.len() && self.ps.coord(sc[pc] as usize, j) <= yv {
                    self.closed[j + 1][sc[pc] as usize] = true;
                    pc += 1;
                }
                self.y[j] = yv;
                self.visit(j + 1, vol_prefix * yv);
            }
        }
        self.scratch_open[j] = so;
        self.scratch_closed[j] = sc;
    }
}

/// Exact value of one (projected) point set with an explicit live mask.
fn exact_with_live(ps: &PointSet, live: &[bool], max_nodes: u64) -> Result<Best, DiscrepancyError> {
    let levels = grid_levels(ps, live);
    let nodes = node_count(&levels);
    if nodes > max_nodes as u128 {
        return Err(DiscrepancyError::BudgetExceeded { nodes, budget: max_nodes });
    }
    Ok(Traversal::new(ps, &levels, live).run())
}

/// Evaluates both grid terms at one node by a full recount.
fn node_terms(ps: &PointSet, live: &[bool], y: &[f64], inv_n: f64) -> (f64, f64) {
    let (mut open, mut closed) = (0usize, 0usize);
    for (i, p) in ps.points().enumerate() {
        if !live[i] {
            continue;
        }
        let mut in_open = true;
        let mut in_closed = true;
        for (&x, &z) in p.iter().zip(y) {
            in_open &= x < z;
            in_closed &= x <= z;
            if !in_closed {
                break;
            }
        }
        open += in_open as usize;
        closed += in_closed as usize;
    }
    let vol = crate::geometry::volume(y);
    (closed as f64 * inv_n - vol, vol - open as f64 * inv_n)
}

/// Best node among estimator trials `trials`, drawn from per-trial streams.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatePartial {
    pub value: f64,
    pub anchor: Vec<f64>,
    pub term: Boundary,
}

impl EstimatePartial {
    /// Combines partials from disjoint trial ranges, keeping the earlier range
    /// on ties, so the result does not depend on how trials were split.
    pub fn merge(self, later: EstimatePartial) -> EstimatePartial {
        if later.value > self.value {
            later
        } else {
            self
        }
    }
}

fn estimate_range(ps: &PointSet, live: &[bool], levels: &[Vec<f64>], seed: u64, trials: core::ops::Range<u64>) -> EstimatePartial {
    let d = ps.dim();
    let inv_n = 1.0 / ps.len() as f64;
    let mut best = Best::new(d);
    let mut y = vec![0.0; d];
    for t in trials {
        let mut stream = Stream::new(seed, Domain::Estimator, t);
        for (j, level) in levels.iter().enumerate() {
            y[j] = level[stream.below(level.len() as u64) as usize];
        }
        let (closed_term, open_term) = node_terms(ps, live, &y, inv_n);
        best.offer(closed_term, Boundary::Closed, &y);
        best.offer(open_term, Boundary::Open, &y);
    }
    EstimatePartial { value: best.value, anchor: best.anchor, term: best.term }
}

/// Estimator trials `trials` for `ps`; deterministic in `(seed, trial index)`.
pub fn star_discrepancy_estimate_range(ps: &PointSet, seed: u64, trials: core::ops::Range<u64>) -> EstimatePartial {
    let live = live_flags(ps);
    let levels = grid_levels(ps, &live);
    estimate_range(ps, &live, &levels, seed, trials)
}

fn result_from(best: Best, exact: bool) -> Result<DiscrepancyResult, DiscrepancyError> {
    Ok(DiscrepancyResult {
        value: best.value,
        witness_anchor: Some(AnchoredBox::new(best.anchor)?),
        witness_term: Some(best.term),
        witness_subset: None,
        exact,
        subsets_evaluated: 0,
        subsets_pruned: 0,
    })
}

/// Exact star-discrepancy. Grids larger than `budget.max_nodes` fall back to
/// the estimator and come back with `exact = false`.
pub fn star_discrepancy_exact(ps: &PointSet, budget: &ExactBudget) -> Result<DiscrepancyResult, DiscrepancyError> {
    let live = live_flags(ps);
    match exact_with_live(ps, &live, budget.max_nodes) {
        Ok(best) => result_from(best, true),
        Err(DiscrepancyError::BudgetExceeded { .. }) => {
            star_discrepancy_estimate(ps, budget.fallback_effort.max(1), budget.fallback_seed)
        }
        Err(e) => Err(e),
    }
}

/// Exact star-discrepancy or an error when the grid exceeds `max_nodes`.
pub fn star_discrepancy_strict(ps: &PointSet, max_nodes: u64) -> Result<DiscrepancyResult, DiscrepancyError> {
    let live = live_flags(ps);
    result_from(exact_with_live(ps, &live, max_nodes)?, true)
}

/// Certified lower bound from `effort` random critical-grid nodes. When
/// `effort` covers the whole grid the grid is enumerated and the result is
/// exact.
pub fn star_discrepancy_estimate(ps: &PointSet, effort: u64, seed: u64) -> Result<DiscrepancyResult, DiscrepancyError> {
    if effort == 0 {
        return Err(DiscrepancyError::ZeroEffort);
    }
    let live = live_flags(ps);
    let levels = grid_levels(ps, &live);
    if node_count(&levels) <= effort as u128 {
        return result_from(Traversal::new(ps, &levels, &live).run(), true);
    }
    let part = estimate_range(ps, &live, &levels, seed, 0..effort);
    result_from(Best { value: part.value, anchor: part.anchor, term: part.term }, false)
}

/// Discrepancy of one coordinate subset under the padded-anchor definition:
/// anchors `(z(u); 1)`, so a point with any coordinate equal to 1 is never
/// counted. For points inside `[0,1)^d` this is the star-discrepancy of the
/// projection.
#[derive(Clone, Debug, PartialEq)]
pub struct SubsetValue {
    pub value: f64,
    /// Anchor in the full dimension, padded with 1 outside the subset.
    pub anchor: Vec<f64>,
    pub term: Boundary,
    pub exact: bool,
}

/// Evaluates subsets of one point set; keeps the live mask of the full set.
pub struct SubsetEvaluator<'a> {
    ps: &'a PointSet,
    live: Vec<bool>,
}

impl<'a> SubsetEvaluator<'a> {
    pub fn new(ps: &'a PointSet) -> Self {
        Self { live: live_flags(ps), ps }
    }

    pub fn point_set(&self) -> &PointSet {
        self.ps
    }

    /// True when some coordinate equals 1, so padded anchors differ from the
    /// plain projection.
    pub fn has_boundary_points(&self) -> bool {
        self.live.iter().any(|&l| !l)
    }

    fn pad(&self, mask: &SubsetMask, local: &[f64]) -> Vec<f64> {
        let mut anchor = vec![1.0; self.ps.dim()];
        for (&v, j) in local.iter().zip(mask.indices()) {
            anchor[j - 1] = v;
        }
        anchor
    }

    pub fn grid_size(&self, mask: &SubsetMask) -> Result<u128, DiscrepancyError> {
        let proj = self.ps.project(mask)?;
        Ok(node_count(&grid_levels(&proj, &self.live)))
    }

    /// Exact value, or an error if the projected grid exceeds `max_nodes`.
    pub fn exact(&self, mask: &SubsetMask, max_nodes: u64) -> Result<SubsetValue, DiscrepancyError> {
        let proj = self.ps.project(mask)?;
        let best = exact_with_live(&proj, &self.live, max_nodes)?;
        Ok(SubsetValue { value: best.value, anchor: self.pad(mask, &best.anchor), term: best.term, exact: true })
    }

    /// Estimator lower bound (exact if `effort` covers the grid).
    pub fn estimate(&self, mask: &SubsetMask, effort: u64, seed: u64) -> Result<SubsetValue, DiscrepancyError> {
        if effort == 0 {
            return Err(DiscrepancyError::ZeroEffort);
        }
        let proj = self.ps.project(mask)?;
        let levels = grid_levels(&proj, &self.live);
        if node_count(&levels) <= effort as u128 {
            let best = Traversal::new(&proj, &levels, &self.live).run();
            return Ok(SubsetValue { value: best.value, anchor: self.pad(mask, &best.anchor), term: best.term, exact: true });
        }
        let part = estimate_range(&proj, &self.live, &levels, subset_seed(seed, mask), 0..effort);
        Ok(SubsetValue { value: part.value, anchor: self.pad(mask, &part.anchor), term: part.term, exact: false })
    }

    /// Exact when the grid fits `budget.max_nodes`, estimated otherwise.
    pub fn evaluate(&self, mask: &SubsetMask, budget: &ExactBudget) -> Result<SubsetValue, DiscrepancyError> {
        match self.exact(mask, budget.max_nodes) {
            Err(DiscrepancyError::BudgetExceeded { .. }) => {
                self.estimate(mask, budget.fallback_effort.max(1), budget.fallback_seed)
            }
            other => other,
        }
    }
}

fn subset_seed(seed: u64, mask: &SubsetMask) -> u64 {
    mask.indices().fold(mix64(seed), |h, j| mix64(h ^ j as u64))
}

/// Running maximum of `gamma_u * D(u)` with smallest-mask tie-breaking.
struct WeightedBest {
    value: f64,
    subset: Option<(SubsetMask, SubsetValue)>,
}

impl WeightedBest {
    fn offer(&mut self, weight: f64, mask: &SubsetMask, v: SubsetValue) {
        let candidate = weight * v.value;
        let better = match &self.subset {
            None => candidate > 0.0 || (candidate == 0.0 && weight > 0.0),
            Some((m, _)) => candidate > self.value || (candidate == self.value && mask < m),
        };
        if better {
            self.value = candidate;
            self.subset = Some((mask.clone(), v));
        }
    }

    fn into_result(self, exact: bool, evaluated: u64, d: usize) -> Result<DiscrepancyResult, DiscrepancyError> {
        let total = subset_count(d).min(u64::MAX as u128) as u64;
        let (anchor, term, subset) = match self.subset {
            Some((m, v)) => (Some(AnchoredBox::new(v.anchor)?), Some(v.term), Some(m)),
            None => (None, None, None),
        };
        Ok(DiscrepancyResult {
            value: self.value,
            witness_anchor: anchor,
            witness_term: term,
            witness_subset: subset,
            exact,
            subsets_evaluated: evaluated,
            subsets_pruned: total.saturating_sub(evaluated),
        })
    }
}

/// `max_u gamma_u D(u)` over non-empty `u` of `{1..d}`.
///
/// Subsets are visited by non-increasing weight. Since every `D(u) <= 1`, the
/// walk stops at the first weight below the running best, and skips equal
/// weights that could only tie with a larger mask. Subsets whose grid exceeds
/// the budget (or all subsets in estimate mode) are estimated and then raised
/// to the largest exact value of an already evaluated subset contained in
/// them, using `D(v) <= D(u)` for `v` a subset of `u`.
pub fn weighted_star_discrepancy(
    ps: &PointSet,
    ws: &WeightSystem,
    mode: Mode,
    budget: &ExactBudget,
) -> Result<DiscrepancyResult, DiscrepancyError> {
    let d = ps.dim();
    let eval = SubsetEvaluator::new(ps);
    let mut best = WeightedBest { value: 0.0, subset: None };
    let mut evaluated: Vec<(SubsetMask, f64)> = Vec::new();
    let mut all_exact = true;
    for mask in enumerate_subsets_wide(d, SubsetOrder::ByWeightDescending(ws))? {
        let weight = ws.weight_of(&mask)?;
        if weight <= 0.0 || weight < best.value {
            break;
        }
        if let Some((m, _)) = &best.subset {
            if weight == best.value && mask > *m {
                continue;
            }
        }
        let mut v = match mode {
            Mode::Exact => eval.evaluate(&mask, budget)?,
            Mode::Estimate { effort, seed } => eval.estimate(&mask, effort, seed)?,
        };
        if !v.exact {
            all_exact = false;
            for (m, dv) in &evaluated {
                if m.is_subset_of(&mask) && *dv > v.value {
                    v.value = *dv;
                }
            }
        }
        evaluated.push((mask.clone(), v.value));
        best.offer(weight, &mask, v);
    }
    let n_eval = evaluated.len() as u64;
    best.into_result(all_exact, n_eval, d)
}

/// Reference implementation: every subset evaluated exactly, no ordering or
/// pruning.
pub fn weighted_star_discrepancy_naive(
    ps: &PointSet,
    ws: &WeightSystem,
    max_nodes: u64,
) -> Result<DiscrepancyResult, DiscrepancyError> {
    let d = ps.dim();
    let eval = SubsetEvaluator::new(ps);
    let mut best = WeightedBest { value: 0.0, subset: None };
    let mut n = 0u64;
    for mask in enumerate_subsets_wide(d, SubsetOrder::ByCardinality)? {
        let weight = ws.weight_of(&mask)?;
        let v = eval.exact(&mask, max_nodes)?;
        best.offer(weight, &mask, v);
        n += 1;
    }
    let mut r = best.into_result(true, n, d)?;
    r.subsets_pruned = 0;
    Ok(r)
}
