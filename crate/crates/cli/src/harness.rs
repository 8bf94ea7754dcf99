//! Parallel experiment drivers.
//!
//! Work is split by trial index and every trial draws from its own stream, so
//! results are the same for any number of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use stardisc_core::bounds::{lemma1_threshold, lemma2_tail, BoundError};
use stardisc_core::construct::{evaluate_attempt, finish_outcome, sample_attempt, AcceptanceRule, AttemptReport, ConstructError};
use stardisc_core::discrepancy::{
    grid_size, star_discrepancy_estimate, star_discrepancy_estimate_range, star_discrepancy_exact, weighted_star_discrepancy,
    weighted_star_discrepancy_naive, DiscrepancyError, EstimatePartial,
};
use stardisc_core::oracle::{star_discrepancy_oracle, weighted_star_discrepancy_oracle, OracleError, OracleLimits};
use stardisc_core::rng::{Domain, Stream};
use stardisc_core::{AnchoredBox, DiscrepancyResult, ExactBudget, Mode, PointSet, ProductWeights, WeightSystem};
use stardisc_core::weights::ExplicitWeights;
use stardisc_core::SubsetMask;
use thiserror::Error;

/// Two-sided 95% normal quantile.
pub const WILSON_Z: f64 = 1.959964;

/// Trials per estimator work item.
const ESTIMATE_CHUNK: u64 = 4096;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Discrepancy(#[from] DiscrepancyError),
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error(transparent)]
    Construct(#[from] ConstructError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

/// Runs `f` on a pool of `workers` threads (`None`: one per core).
pub fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R, HarnessError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.unwrap_or(0)).build()?;
    Ok(pool.install(f))
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson(k: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let (k, n) = (k as f64, n as f64);
    let p = k / n;
    let z2 = WILSON_Z * WILSON_Z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = WILSON_Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if k == 0.0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if k == n { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

/// Same result as the sequential estimator, with trials spread over threads.
pub fn estimate_parallel(ps: &PointSet, effort: u64, seed: u64) -> Result<DiscrepancyResult, HarnessError> {
    if effort == 0 || grid_size(ps) <= effort as u128 {
        return Ok(star_discrepancy_estimate(ps, effort, seed)?);
    }
    let chunks: Vec<u64> = (0..effort.div_ceil(ESTIMATE_CHUNK)).collect();
    let parts: Vec<EstimatePartial> = chunks
        .par_iter()
        .map(|&c| star_discrepancy_estimate_range(ps, seed, c * ESTIMATE_CHUNK..((c + 1) * ESTIMATE_CHUNK).min(effort)))
        .collect();
    let best = parts.into_iter().reduce(EstimatePartial::merge).expect("effort > 0");
    Ok(DiscrepancyResult {
        value: best.value,
        witness_anchor: Some(AnchoredBox::new(best.anchor).map_err(DiscrepancyError::from)?),
        witness_term: Some(best.term),
        witness_subset: None,
        exact: false,
        subsets_evaluated: 0,
        subsets_pruned: 0,
    })
}

/// Checks attempts `0..trials` of a construction.
pub fn attempt_reports(
    ws: &WeightSystem,
    rule: &AcceptanceRule,
    d: usize,
    n: usize,
    seed: u64,
    trials: u64,
    max_nodes: u64,
) -> Result<Vec<AttemptReport>, HarnessError> {
    let reports: Result<Vec<_>, ConstructError> =
        (0..trials).into_par_iter().map(|a| evaluate_attempt(ws, rule, d, n, seed, a, max_nodes).map(|(r, _)| r)).collect();
    Ok(reports?)
}

/// Parallel version of the sequential construction: the lowest accepted
/// attempt index wins, and on exhaustion the attempt with the smallest worst
/// ratio (lowest index on ties) is returned as the best effort.
pub fn construct_parallel(
    ws: &WeightSystem,
    rule: AcceptanceRule,
    d: usize,
    n: usize,
    seed: u64,
    max_attempts: u64,
    max_nodes: u64,
) -> Result<stardisc_core::ConstructionOutcome, ConstructError> {
    if max_attempts == 0 {
        return Err(ConstructError::InvalidArgument("max_attempts must be at least 1"));
    }
    let batch = 2 * rayon::current_num_threads().max(1) as u64;
    let mut best: Option<(f64, u64)> = None;
    let mut start = 0;
    while start < max_attempts {
        let end = (start + batch).min(max_attempts);
        let reports: Vec<(AttemptReport, PointSet)> = (start..end)
            .into_par_iter()
            .map(|a| evaluate_attempt(ws, &rule, d, n, seed, a, max_nodes))
            .collect::<Result<_, _>>()?;
        for (r, ps) in reports {
            if r.accepted {
                return finish_outcome(ps, ws, &rule, r.attempt + 1, seed, true, max_nodes);
            }
            if best.is_none_or(|(b, _)| r.worst_ratio < b) {
                best = Some((r.worst_ratio, r.attempt));
            }
        }
        start = end;
    }
    let (_, a) = best.expect("at least one attempt");
    let ps = sample_attempt(d, n, seed, a)?;
    let outcome = finish_outcome(ps, ws, &rule, max_attempts, seed, false, max_nodes)?;
    Err(ConstructError::Exhausted { attempts: max_attempts, best: Box::new(outcome) })
}

/// Star-discrepancy of attempts `0..trials` of uniform samples, with whether
/// each value is exact.
pub fn sample_discrepancies(d: usize, n: usize, seed: u64, trials: u64, budget: &ExactBudget) -> Result<Vec<(f64, bool)>, HarnessError> {
    let out: Result<Vec<_>, HarnessError> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let ps = sample_attempt(d, n, seed, t)?;
            let r = star_discrepancy_exact(&ps, budget)?;
            Ok((r.value, r.exact))
        })
        .collect();
    out
}

/// Empirical probability that `D*` of `n` uniform points reaches `t / sqrt(n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub d: u64,
    pub n: u64,
    pub t: f64,
    /// `t / sqrt(n)`.
    pub threshold: f64,
    pub trials: u64,
    pub exceed_count: u64,
    pub p_hat: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
    pub k: f64,
    pub bound_raw: f64,
    /// `bound_raw` clamped to `[0,1]`.
    pub bound_value: f64,
    /// The lower end of the interval does not exceed the bound.
    pub holds: bool,
    /// Every sample was evaluated exactly.
    pub exact: bool,
}

pub fn tail_experiment(
    d: usize,
    n: usize,
    ts: &[f64],
    trials: u64,
    seed: u64,
    k: f64,
    budget: &ExactBudget,
) -> Result<Vec<TailEstimate>, HarnessError> {
    if trials == 0 {
        return Err(HarnessError::InvalidArgument("trials must be at least 1".into()));
    }
    let values = sample_discrepancies(d, n, seed, trials, budget)?;
    let exact = values.iter().all(|v| v.1);
    ts.iter()
        .map(|&t| {
            let b = lemma2_tail(d as u64, t, k)?;
            let threshold = t / (n as f64).sqrt();
            let exceed_count = values.iter().filter(|v| v.0 >= threshold).count() as u64;
            let (wilson_lo, wilson_hi) = wilson(exceed_count, trials);
            Ok(TailEstimate {
                d: d as u64,
                n: n as u64,
                t,
                threshold,
                trials,
                exceed_count,
                p_hat: exceed_count as f64 / trials as f64,
                wilson_lo,
                wilson_hi,
                k,
                bound_raw: b.raw,
                bound_value: b.clamped,
                holds: wilson_lo <= b.clamped,
                exact,
            })
        })
        .collect()
}

/// Empirical probability that `D*` of `n` uniform points stays below the
/// level-`q` threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageCheck {
    pub d: u64,
    pub n: u64,
    pub q: f64,
    pub threshold: f64,
    pub trials: u64,
    pub successes: u64,
    pub fraction: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
    /// The upper end of the interval reaches `q`.
    pub holds: bool,
    pub exact: bool,
}

pub fn coverage_experiment(
    d: usize,
    n: usize,
    qs: &[f64],
    trials: u64,
    seed: u64,
    budget: &ExactBudget,
) -> Result<Vec<CoverageCheck>, HarnessError> {
    if trials == 0 {
        return Err(HarnessError::InvalidArgument("trials must be at least 1".into()));
    }
    let values = sample_discrepancies(d, n, seed, trials, budget)?;
    let exact = values.iter().all(|v| v.1);
    qs.iter()
        .map(|&q| {
            let threshold = lemma1_threshold(d as u64, n as u64, q)?;
            let successes = values.iter().filter(|v| v.0 <= threshold).count() as u64;
            let (wilson_lo, wilson_hi) = wilson(successes, trials);
            Ok(CoverageCheck {
                d: d as u64,
                n: n as u64,
                q,
                threshold,
                trials,
                successes,
                fraction: successes as f64 / trials as f64,
                wilson_lo,
                wilson_hi,
                holds: wilson_hi >= q,
                exact,
            })
        })
        .collect()
}

/// Coordinate descent on the weighted star-discrepancy: each coordinate in
/// turn is moved to the best of `levels` equispaced values in `[0,1)`, until a
/// full sweep brings no improvement or `sweeps` is reached.
pub fn minimize_weighted(
    start: PointSet,
    ws: &WeightSystem,
    levels: usize,
    sweeps: usize,
    budget: &ExactBudget,
) -> Result<(PointSet, f64), HarnessError> {
    let eval = |ps: &PointSet| -> Result<f64, HarnessError> { Ok(weighted_star_discrepancy(ps, ws, Mode::Exact, budget)?.value) };
    let d = start.dim();
    let mut coords = start.flat().to_vec();
    let mut best = eval(&start)?;
    for _ in 0..sweeps {
        let mut improved = false;
        for k in 0..coords.len() {
            let old = coords[k];
            let candidates: Vec<(f64, f64)> = (0..levels)
                .into_par_iter()
                .map(|l| {
                    let x = (l as f64 + 0.5) / levels as f64;
                    let mut c = coords.clone();
                    c[k] = x;
                    let ps = PointSet::from_flat(d, c).map_err(DiscrepancyError::from)?;
                    Ok((eval(&ps)?, x))
                })
                .collect::<Result<_, HarnessError>>()?;
            for (v, x) in candidates {
                if v < best {
                    best = v;
                    coords[k] = x;
                }
            }
            improved |= coords[k] != old;
        }
        if !improved {
            break;
        }
    }
    let ps = PointSet::from_flat(d, coords).map_err(DiscrepancyError::from)?;
    Ok((ps, best))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelftestReport {
    pub instances: u64,
    pub failures: u64,
    /// Largest `|exact - oracle|` seen for the unweighted discrepancy.
    pub max_abs_diff: f64,
    /// Largest `|pruned - oracle|` seen for the weighted discrepancy.
    pub max_weighted_diff: f64,
    pub passed: bool,
}

/// Random small coordinates with ties, zeros and ones.
fn random_set(s: &mut Stream, n: usize, d: usize) -> PointSet {
    let coords = (0..n * d)
        .map(|_| {
            let u = s.uniform();
            if s.below(3) == 0 {
                s.below(5) as f64 / 4.0
            } else {
                u
            }
        })
        .collect();
    PointSet::from_flat(d, coords).expect("coordinates in [0,1]")
}

fn random_weights(s: &mut Stream, d: usize) -> WeightSystem {
    if s.below(2) == 0 {
        let g = (0..d).map(|_| s.uniform() * 1.5).collect();
        ProductWeights::finite(g).expect("non-negative").into()
    } else {
        let mut entries = Vec::new();
        for b in 1u64..1 << d {
            if s.below(2) == 0 {
                entries.push((SubsetMask::from_bits(b).expect("non-empty"), s.uniform()));
            }
        }
        ExplicitWeights::new(entries).expect("non-negative").into()
    }
}

/// Compares the fast algorithms with brute force on `instances` random sets
/// of at most 8 points in at most 3 dimensions.
pub fn selftest(instances: u64, seed: u64, tol: f64) -> Result<SelftestReport, HarnessError> {
    let results: Vec<(f64, f64)> = (0..instances)
        .into_par_iter()
        .map(|i| {
            let mut s = Stream::new(seed, Domain::Auxiliary, i);
            let n = 1 + s.below(8) as usize;
            let d = 1 + s.below(3) as usize;
            let ps = random_set(&mut s, n, d);
            let ws = random_weights(&mut s, d);
            let e = star_discrepancy_exact(&ps, &ExactBudget::default())?.value;
            let o = star_discrepancy_oracle(&ps)?;
            let w = weighted_star_discrepancy(&ps, &ws, Mode::Exact, &ExactBudget::default())?.value;
            let naive = weighted_star_discrepancy_naive(&ps, &ws, u64::MAX)?.value;
            let (wo, _) = weighted_star_discrepancy_oracle(&ps, &ws, OracleLimits::default())?;
            Ok(((e - o).abs(), (w - wo).abs().max((w - naive).abs())))
        })
        .collect::<Result<_, HarnessError>>()?;
    let failures = results.iter().filter(|(a, b)| *a > tol || *b > tol).count() as u64;
    Ok(SelftestReport {
        instances,
        failures,
        max_abs_diff: results.iter().map(|r| r.0).fold(0.0, f64::max),
        max_weighted_diff: results.iter().map(|r| r.1).fold(0.0, f64::max),
        passed: failures == 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use stardisc_core::construct::construct_with_rule;

    #[test]
    fn wilson_interval() {
        let (lo, hi) = wilson(50, 100);
        assert!((lo - 0.4038).abs() < 1e-3 && (hi - 0.5962).abs() < 1e-3);
        let (lo, hi) = wilson(0, 10);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.2 && hi < 0.35);
        assert_eq!(wilson(10, 10).1, 1.0);
    }

    #[test]
    fn parallel_estimate_matches_sequential() {
        let ps = sample_attempt(5, 40, 3, 0).unwrap();
        let seq = star_discrepancy_estimate(&ps, 10_000, 8).unwrap();
        for w in [1, 3] {
            let par = with_workers(Some(w), || estimate_parallel(&ps, 10_000, 8)).unwrap().unwrap();
            assert_eq!(par, seq);
        }
    }

    #[test]
    fn parallel_construction_matches_sequential() {
        let ws: WeightSystem = ProductWeights::finite(vec![1.0, 0.5, 0.25]).unwrap().into();
        for rule in [AcceptanceRule::Theorem1, AcceptanceRule::Theorem4 { c_hat: 0.05 }] {
            let seq = construct_with_rule(&ws, rule, 3, 16, 5, 12, u64::MAX);
            for w in [1, 4] {
                let par = with_workers(Some(w), || construct_parallel(&ws, rule, 3, 16, 5, 12, u64::MAX)).unwrap();
                assert_eq!(par, seq);
            }
        }
    }

    #[test]
    fn tail_counts_are_consistent() {
        let est = tail_experiment(1, 16, &[0.5, 1.0, 2.0], 200, 1, 1.0, &ExactBudget::default()).unwrap();
        assert!(est.windows(2).all(|w| w[0].exceed_count >= w[1].exceed_count));
        assert!(est.iter().all(|e| e.exact && e.wilson_lo <= e.p_hat && e.p_hat <= e.wilson_hi));
    }

    #[test]
    fn coverage_monotone_in_q() {
        let c = coverage_experiment(2, 16, &[0.5, 0.9], 100, 2, &ExactBudget::default()).unwrap();
        assert!(c[0].threshold < c[1].threshold && c[0].successes <= c[1].successes);
    }

    #[test]
    fn descent_never_increases() {
        let ws = WeightSystem::unit_product();
        let start = sample_attempt(4, 1, 9, 0).unwrap();
        let before = weighted_star_discrepancy(&start, &ws, Mode::Exact, &ExactBudget::default()).unwrap().value;
        let (_, after) = minimize_weighted(start, &ws, 8, 3, &ExactBudget::default()).unwrap();
        assert!(after <= before);
    }

    #[test]
    fn selftest_passes() {
        let r = selftest(50, 1, 1e-12).unwrap();
        assert!(r.passed, "{r:?}");
    }
}
