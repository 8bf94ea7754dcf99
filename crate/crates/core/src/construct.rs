//! Randomized constructions: sample uniform point sets and accept the first
//! one that avoids every per-subset bad event of the union-bound argument.

use alloc::boxed::Box;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{inverse_n_upper, theorem1_max, BoundError, ConstantKind};
use crate::discrepancy::{weighted_star_discrepancy, DiscrepancyError, ExactBudget, Mode, SubsetEvaluator};
use crate::geometry::{GeometryError, PointSet};
use crate::rng::{mix64, Domain, Stream};
use crate::subset::SubsetMask;
use crate::weights::{corollary1_constants, enumerate_subsets_wide, union_bound_factor, SubsetOrder, WeightError, WeightSystem};

pub const DEFAULT_MAX_ATTEMPTS: u64 = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstructError {
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    #[error("no accepted sample in {attempts} attempts")]
    Exhausted { attempts: u64, best: Box<ConstructionOutcome> },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Weight(#[from] WeightError),
    #[error(transparent)]
    Discrepancy(#[from] DiscrepancyError),
    #[error(transparent)]
    Bound(#[from] BoundError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstructionOutcome {
    pub points: PointSet,
    /// Attempts used, counting the accepted one.
    pub attempts: u64,
    /// Bound the accepted set is guaranteed to meet.
    pub target: f64,
    /// Weighted star-discrepancy of the set, computed exactly.
    pub achieved: f64,
    pub seed: u64,
    pub accepted: bool,
}

/// `n` points in `[0,1)^d` from stream `index` of `seed`.
pub fn sample_attempt(d: usize, n: usize, seed: u64, index: u64) -> Result<PointSet, ConstructError> {
    if d == 0 || n == 0 {
        return Err(ConstructError::InvalidArgument("d and N must be at least 1"));
    }
    let mut s = Stream::new(seed, Domain::Points, index);
    let coords = (0..n * d).map(|_| s.uniform()).collect();
    Ok(PointSet::from_flat(d, coords)?)
}

/// `n` i.i.d. uniform points; the same `(d, n, seed)` always gives the same set.
pub fn sample_uniform(d: usize, n: usize, seed: u64) -> Result<PointSet, ConstructError> {
    sample_attempt(d, n, seed, 0)
}

/// Per-subset acceptance thresholds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum AcceptanceRule {
    /// `D*(P_u) <= 5.7 sqrt(4.9 + 2 ln(e d/|u|)) sqrt|u| / sqrt N`.
    Theorem1,
    /// `D*(P_u) <= sqrt(c_hat) / (gamma_u sqrt N)`.
    Theorem4 { c_hat: f64 },
}

impl AcceptanceRule {
    pub fn threshold(&self, d: usize, n: usize, size: usize, weight: f64) -> f64 {
        let sqrt_n = libm::sqrt(n as f64);
        match *self {
            AcceptanceRule::Theorem1 => 5.7 * union_bound_factor(d, size) / sqrt_n,
            AcceptanceRule::Theorem4 { c_hat } => libm::sqrt(c_hat) / (weight * sqrt_n),
        }
    }

    /// Bound on the weighted discrepancy implied by acceptance.
    pub fn target(&self, ws: &WeightSystem, d: usize, n: usize) -> Result<f64, ConstructError> {
        let sqrt_n = libm::sqrt(n as f64);
        Ok(match *self {
            AcceptanceRule::Theorem1 => 5.7 / sqrt_n * theorem1_max(ws, d)?.0,
            AcceptanceRule::Theorem4 { c_hat } => {
                if ws.max_weight(d)? == 0.0 {
                    0.0
                } else {
                    libm::sqrt(c_hat) / sqrt_n
                }
            }
        })
    }
}

/// Outcome of testing one sample against every subset event.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttemptReport {
    pub attempt: u64,
    pub accepted: bool,
    /// Largest `D*(P_u) / threshold(u)` among the subsets checked.
    pub worst_ratio: f64,
    pub first_violation: Option<SubsetMask>,
    pub subsets_checked: u64,
}

/// Tests `ps` subset by subset (by cardinality), stopping at the first
/// violated event. Subsets with zero weight are unconstrained, and subsets
/// whose threshold is at least 1 hold automatically.
pub fn check_events(
    ps: &PointSet,
    ws: &WeightSystem,
    rule: &AcceptanceRule,
    attempt: u64,
    max_nodes: u64,
) -> Result<AttemptReport, ConstructError> {
    let (d, n) = (ps.dim(), ps.len());
    let eval = SubsetEvaluator::new(ps);
    let mut report = AttemptReport { attempt, accepted: true, worst_ratio: 0.0, first_violation: None, subsets_checked: 0 };
    for mask in enumerate_subsets_wide(d, SubsetOrder::ByCardinality)? {
        let w = ws.weight_of(&mask)?;
        if w <= 0.0 {
            continue;
        }
        let t = rule.threshold(d, n, mask.len(), w);
        if t >= 1.0 {
            continue;
        }
        report.subsets_checked += 1;
        let v = eval.exact(&mask, max_nodes)?.value;
        let ratio = if t > 0.0 { v / t } else { f64::INFINITY };
        report.worst_ratio = report.worst_ratio.max(ratio);
        if v > t {
            report.accepted = false;
            report.first_violation = Some(mask);
            break;
        }
    }
    Ok(report)
}

/// Samples attempt `attempt` and checks it.
pub fn evaluate_attempt(
    ws: &WeightSystem,
    rule: &AcceptanceRule,
    d: usize,
    n: usize,
    seed: u64,
    attempt: u64,
    max_nodes: u64,
) -> Result<(AttemptReport, PointSet), ConstructError> {
    let ps = sample_attempt(d, n, seed, attempt)?;
    let r = check_events(&ps, ws, rule, attempt, max_nodes)?;
    Ok((r, ps))
}

/// Builds the outcome for an accepted (or best rejected) attempt.
pub fn finish_outcome(
    ps: PointSet,
    ws: &WeightSystem,
    rule: &AcceptanceRule,
    attempts: u64,
    seed: u64,
    accepted: bool,
    max_nodes: u64,
) -> Result<ConstructionOutcome, ConstructError> {
    let (d, n) = (ps.dim(), ps.len());
    let target = rule.target(ws, d, n)?;
    let budget = ExactBudget { max_nodes, ..ExactBudget::default() };
    let r = weighted_star_discrepancy(&ps, ws, Mode::Exact, &budget)?;
    if !r.exact {
        return Err(DiscrepancyError::BudgetExceeded { nodes: u128::MAX, budget: max_nodes }.into());
    }
    Ok(ConstructionOutcome { points: ps, attempts, target, achieved: r.value, seed, accepted })
}

/// Runs attempts `0..max_attempts` in order and returns the first accepted.
pub fn construct_with_rule(
    ws: &WeightSystem,
    rule: AcceptanceRule,
    d: usize,
    n: usize,
    seed: u64,
    max_attempts: u64,
    max_nodes: u64,
) -> Result<ConstructionOutcome, ConstructError> {
    if max_attempts == 0 {
        return Err(ConstructError::InvalidArgument("max_attempts must be at least 1"));
    }
    let mut best: Option<(f64, PointSet)> = None;
    for a in 0..max_attempts {
        let (r, ps) = evaluate_attempt(ws, &rule, d, n, seed, a, max_nodes)?;
        if r.accepted {
            return finish_outcome(ps, ws, &rule, a + 1, seed, true, max_nodes);
        }
        if best.as_ref().is_none_or(|(b, _)| r.worst_ratio < *b) {
            best = Some((r.worst_ratio, ps));
        }
    }
    let (_, ps) = best.expect("at least one attempt");
    let outcome = finish_outcome(ps, ws, &rule, max_attempts, seed, false, max_nodes)?;
    Err(ConstructError::Exhausted { attempts: max_attempts, best: Box::new(outcome) })
}

pub fn construct_theorem1(
    ws: &WeightSystem,
    d: usize,
    n: usize,
    seed: u64,
    max_attempts: u64,
) -> Result<ConstructionOutcome, ConstructError> {
    let max_nodes = ExactBudget::default().max_nodes;
    construct_with_rule(ws, AcceptanceRule::Theorem1, d, n, seed, max_attempts, max_nodes)
}

pub fn construct_theorem4(
    ws: &WeightSystem,
    c_hat: f64,
    d: usize,
    n: usize,
    seed: u64,
    max_attempts: u64,
) -> Result<ConstructionOutcome, ConstructError> {
    if !(c_hat > 0.0) {
        return Err(ConstructError::InvalidArgument("c_hat must be positive"));
    }
    let max_nodes = ExactBudget::default().max_nodes;
    construct_with_rule(ws, AcceptanceRule::Theorem4 { c_hat }, d, n, seed, max_attempts, max_nodes)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InverseSearchOptions {
    /// Random sets tried per cardinality; the best one counts.
    pub tries: u64,
    pub max_n: u64,
    pub budget: ExactBudget,
}

impl Default for InverseSearchOptions {
    fn default() -> Self {
        Self { tries: 8, max_n: 1 << 16, budget: ExactBudget::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InverseSearch {
    /// Smallest cardinality for which this search found a set within `eps`.
    pub n_achieved: u64,
    /// `ceil(36 C_hat^2 / eps^2)` with `C_hat` evaluated over `d' <= d`.
    pub upper_bound_formula: Option<u64>,
    pub c_hat_gamma: f64,
    pub c_hat_stabilized: bool,
    /// Best weighted discrepancy found at `n_achieved`.
    pub achieved: f64,
    /// Some value was an estimator lower bound, so acceptance is not certified.
    pub caveat: bool,
    /// Every `(N, best value)` evaluated, in search order.
    pub trace: Vec<(u64, f64)>,
}

/// Doubling then bisection on `N` for the smallest set size whose best of
/// `opts.tries` uniform samples has weighted discrepancy at most `eps`.
pub fn search_inverse_n(
    ws: &WeightSystem,
    d: usize,
    eps: f64,
    seed: u64,
    opts: &InverseSearchOptions,
) -> Result<InverseSearch, ConstructError> {
    if d == 0 || !(eps > 0.0) || opts.tries == 0 {
        return Err(ConstructError::InvalidArgument("search needs d >= 1, eps > 0 and tries >= 1"));
    }
    let consts = corollary1_constants(ws, d)?;
    let formula = if eps < 1.0 { Some(inverse_n_upper(&consts, d as u64, eps, ConstantKind::CHat)?) } else { None };
    let mut trace = Vec::new();
    let mut caveat = false;
    let best_at = |n: u64, trace: &mut Vec<(u64, f64)>, caveat: &mut bool| -> Result<f64, ConstructError> {
        let stream_seed = mix64(seed ^ n);
        let mut best = f64::INFINITY;
        for t in 0..opts.tries {
            let ps = sample_attempt(d, n as usize, stream_seed, t)?;
            let r = weighted_star_discrepancy(&ps, ws, Mode::Exact, &opts.budget)?;
            *caveat |= !r.exact;
            best = best.min(r.value);
        }
        trace.push((n, best));
        Ok(best)
    };

    let mut hi = 1u64;
    let mut at_hi = best_at(hi, &mut trace, &mut caveat)?;
    let max_w = ws.max_weight(d)?;
    if eps >= max_w {
        return Ok(InverseSearch {
            n_achieved: 1,
            upper_bound_formula: formula,
            c_hat_gamma: consts.c_hat_gamma,
            c_hat_stabilized: consts.stabilized,
            achieved: at_hi,
            caveat,
            trace,
        });
    }
    let mut lo = 0u64;
    while at_hi > eps {
        lo = hi;
        hi *= 2;
        if hi > opts.max_n {
            return Err(ConstructError::InvalidArgument("no set within eps up to max_n"));
        }
        at_hi = best_at(hi, &mut trace, &mut caveat)?;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let v = best_at(mid, &mut trace, &mut caveat)?;
        if v <= eps {
            hi = mid;
            at_hi = v;
        } else {
            lo = mid;
        }
    }
    Ok(InverseSearch {
        n_achieved: hi,
        upper_bound_formula: formula,
        c_hat_gamma: consts.c_hat_gamma,
        c_hat_stabilized: consts.stabilized,
        achieved: at_hi,
        caveat,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::{ExplicitWeights, ProductWeights};

    #[test]
    fn sampling_is_deterministic_and_in_range() {
        let a = sample_uniform(3, 50, 11).unwrap();
        let b = sample_uniform(3, 50, 11).unwrap();
        assert_eq!(a.flat(), b.flat());
        assert!(a.flat().iter().all(|&x| (0.0..1.0).contains(&x)));
        assert_ne!(a.flat(), sample_uniform(3, 50, 12).unwrap().flat());
    }

    #[test]
    fn zero_weights_accept_first_sample() {
        let ws: WeightSystem = ExplicitWeights::default().into();
        let t1 = construct_theorem1(&ws, 3, 8, 1, 5).unwrap();
        assert_eq!((t1.attempts, t1.achieved, t1.target), (1, 0.0, 0.0));
        let t4 = construct_theorem4(&ws, 2.0, 3, 8, 1, 5).unwrap();
        assert_eq!(t4.attempts, 1);
    }

    #[test]
    fn theorem1_classical_accepts_and_meets_target() {
        let ws = WeightSystem::classical(2).unwrap();
        let out = construct_theorem1(&ws, 2, 64, 3, 20).unwrap();
        assert!(out.accepted);
        assert!(out.achieved <= out.target);
    }

    #[test]
    fn theorem4_accepted_sets_meet_target() {
        let ws: WeightSystem = ProductWeights::geometric(0.5).unwrap().into();
        let out = construct_theorem4(&ws, 1.0, 3, 64, 9, 64).unwrap();
        assert!(out.achieved <= out.target);
        assert_eq!(out.target, 1.0 / 8.0);
    }

    #[test]
    fn exhaustion_reports_best_attempt() {
        let ws = WeightSystem::classical(1).unwrap();
        // threshold sqrt(1e-6) / 2 is far below any two-point discrepancy
        let err = construct_theorem4(&ws, 1e-6, 1, 4, 0, 3).unwrap_err();
        match err {
            ConstructError::Exhausted { attempts, best } => {
                assert_eq!(attempts, 3);
                assert!(!best.accepted);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn inverse_search_trivial_eps() {
        let ws = WeightSystem::classical(2).unwrap();
        let r = search_inverse_n(&ws, 2, 1.0, 4, &InverseSearchOptions::default()).unwrap();
        assert_eq!(r.n_achieved, 1);
        assert_eq!(r.upper_bound_formula, None);
    }

    #[test]
    fn inverse_search_one_dimension() {
        let ws = WeightSystem::classical(1).unwrap();
        let r = search_inverse_n(&ws, 1, 0.1, 4, &InverseSearchOptions::default()).unwrap();
        assert!(r.n_achieved <= 100);
        assert!(r.achieved <= 0.1);
        assert!(!r.caveat);
    }
}
