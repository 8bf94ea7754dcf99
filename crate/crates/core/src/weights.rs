//! Weight systems `u -> gamma_u`, subset enumeration, and the constants and
//! summability conditions derived from the weights.

use alloc::collections::{BTreeMap, BTreeSet, BinaryHeap};
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::subset::{SubsetError, SubsetMask, INLINE_WIDTH};

/// Largest `d` for which all `2^d - 1` subsets may be materialized and sorted.
pub const MATERIALIZE_LIMIT: usize = 24;

/// Largest number of tail weights turned into explicit prefix entries.
pub const MAX_MATERIALIZED_PREFIX: u64 = 1 << 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeightError {
    #[error("weight {value} for {what} is negative or not finite")]
    InvalidWeight { what: &'static str, value: f64 },
    #[error("coordinate indices are 1-based; got 0")]
    ZeroIndex,
    #[error("declared tail is not non-increasing at j = {j}")]
    TailNotMonotone { j: u64 },
    #[error("weights are not non-increasing at j = {j}")]
    NotNonIncreasing { j: u64 },
    #[error("the c/sqrt(log j) tail is undefined at j = 1; give at least one prefix weight")]
    TailNeedsPrefix,
    #[error("invalid tail parameter {value}")]
    InvalidTail { value: f64 },
    #[error("d = {d} exceeds the {INLINE_WIDTH}-bit mask width; use the wide enumeration")]
    WidthExceeded { d: usize },
    #[error("cannot materialize all subsets of {{1..{d}}}")]
    TooManySubsets { d: usize },
    #[error("constant must be positive, got {0}")]
    NonPositiveConstant(f64),
    #[error("subset {0} listed twice")]
    DuplicateSubset(SubsetMask),
    #[error("coordinate series diverges for constant {c}")]
    Diverges { c: f64 },
    #[error("normalization would materialize more than {MAX_MATERIALIZED_PREFIX} weights")]
    MaterializationLimit,
    #[error(transparent)]
    Subset(#[from] SubsetError),
}

fn check_weight(what: &'static str, value: f64) -> Result<(), WeightError> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(WeightError::InvalidWeight { what, value })
    }
}

fn check_positive(c: f64) -> Result<(), WeightError> {
    if c > 0.0 && c.is_finite() {
        Ok(())
    } else {
        Err(WeightError::NonPositiveConstant(c))
    }
}

/// Closed-form continuation of a product-weight sequence past its prefix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum Tail {
    /// `gamma_j = c / sqrt(ln j)`.
    InverseSqrtLog { c: f64 },
    /// `gamma_j = gamma_L * ratio^(j - L)` where `L` is the prefix length at
    /// construction (`gamma_0 = 1` for an empty prefix).
    Geometric { ratio: f64 },
}

/// Product weights `gamma_u = prod_{j in u} gamma_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductWeights {
    prefix: Vec<f64>,
    tail: Option<Tail>,
    anchor: u64,
    anchor_value: f64,
}

impl ProductWeights {
    /// `prefix[j - 1] = gamma_j`. Without a tail, weights past the prefix are 0.
    pub fn new(prefix: Vec<f64>, tail: Option<Tail>) -> Result<Self, WeightError> {
        for &g in &prefix {
            check_weight("gamma_j", g)?;
        }
        match tail {
            Some(Tail::InverseSqrtLog { c }) => {
                if !(c.is_finite() && c >= 0.0) {
                    return Err(WeightError::InvalidTail { value: c });
                }
                if prefix.is_empty() {
                    return Err(WeightError::TailNeedsPrefix);
                }
            }
            Some(Tail::Geometric { ratio }) if !(ratio.is_finite() && ratio >= 0.0) => {
                return Err(WeightError::InvalidTail { value: ratio });
            }
            Some(Tail::Geometric { .. }) | None => {}
        }
        let anchor = prefix.len() as u64;
        let anchor_value = prefix.last().copied().unwrap_or(1.0);
        Ok(Self { prefix, tail, anchor, anchor_value })
    }

    /// Finite sequence, zero afterwards.
    pub fn finite(prefix: Vec<f64>) -> Result<Self, WeightError> {
        Self::new(prefix, None)
    }

    /// `gamma_j = ratio^j` for all `j >= 1`.
    pub fn geometric(ratio: f64) -> Result<Self, WeightError> {
        Self::new(Vec::new(), Some(Tail::Geometric { ratio }))
    }

    pub fn prefix(&self) -> &[f64] {
        &self.prefix
    }

    pub fn tail(&self) -> Option<Tail> {
        self.tail
    }

    /// Number of non-zero-able coordinates when there is no tail.
    pub fn finite_len(&self) -> Option<u64> {
        self.tail.is_none().then_some(self.prefix.len() as u64)
    }

    fn tail_value(&self, j: u64) -> f64 {
        match self.tail {
            Some(Tail::InverseSqrtLog { c }) => c / libm::sqrt(libm::log(j as f64)),
            Some(Tail::Geometric { ratio }) => {
                self.anchor_value * libm::pow(ratio, (j - self.anchor) as f64)
            }
            None => 0.0,
        }
    }

    /// `gamma_j`. Querying an increasing stretch of a declared tail is an error.
    pub fn gamma(&self, j: u64) -> Result<f64, WeightError> {
        if j == 0 {
            return Err(WeightError::ZeroIndex);
        }
        let len = self.prefix.len() as u64;
        if j <= len {
            return Ok(self.prefix[(j - 1) as usize]);
        }
        if self.tail.is_none() {
            return Ok(0.0);
        }
        let v = self.tail_value(j);
        if j >= len + 2 && v > self.tail_value(j - 1) {
            return Err(WeightError::TailNotMonotone { j });
        }
        Ok(v)
    }

    /// `gamma_1, ..., gamma_d`.
    pub fn gammas(&self, d: usize) -> Result<Vec<f64>, WeightError> {
        (1..=d as u64).map(|j| self.gamma(j)).collect()
    }

    /// Checks that the whole sequence is non-increasing: the prefix, the
    /// junction with the tail, and the tail family itself.
    pub fn check_non_increasing(&self) -> Result<(), WeightError> {
        for (k, w) in self.prefix.windows(2).enumerate() {
            if w[1] > w[0] {
                return Err(WeightError::NotNonIncreasing { j: k as u64 + 2 });
            }
        }
        let len = self.prefix.len() as u64;
        match self.tail {
            None => Ok(()),
            Some(tail) => {
                if let Tail::Geometric { ratio } = tail {
                    if ratio > 1.0 && self.anchor_value > 0.0 {
                        return Err(WeightError::TailNotMonotone { j: len + 2 });
                    }
                }
                if let Some(&last) = self.prefix.last() {
                    if self.tail_value(len + 1) > last {
                        return Err(WeightError::NotNonIncreasing { j: len + 1 });
                    }
                }
                Ok(())
            }
        }
    }

    /// `gamma_u`, multiplying the factors in non-increasing order so that the
    /// result agrees bit-for-bit with [`enumerate_subsets`].
    pub fn weight_of(&self, u: &SubsetMask) -> Result<f64, WeightError> {
        let mut factors = u.indices().map(|j| self.gamma(j as u64)).collect::<Result<Vec<_>, _>>()?;
        factors.sort_by(|a, b| b.total_cmp(a));
        Ok(factors.iter().fold(1.0, |acc, &g| acc * g))
    }

    /// Copy with a modified prefix; the tail formula keeps its anchor.
    fn with_prefix(&self, prefix: Vec<f64>) -> Self {
        Self { prefix, ..self.clone() }
    }
}

/// Weights listed per subset. Unlisted subsets weigh 0.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ExplicitWeights {
    entries: BTreeMap<SubsetMask, f64>,
}

impl ExplicitWeights {
    pub fn new<I: IntoIterator<Item = (SubsetMask, f64)>>(entries: I) -> Result<Self, WeightError> {
        let mut map = BTreeMap::new();
        for (mask, w) in entries {
            check_weight("gamma_u", w)?;
            if map.insert(mask.clone(), w).is_some() {
                return Err(WeightError::DuplicateSubset(mask));
            }
        }
        Ok(Self { entries: map })
    }

    pub fn entries(&self) -> impl Iterator<Item = (&SubsetMask, f64)> + '_ {
        self.entries.iter().map(|(m, &w)| (m, w))
    }

    pub fn get(&self, u: &SubsetMask) -> f64 {
        self.entries.get(u).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// A weight system `gamma = (gamma_u)`.
#[derive(Clone, Debug, PartialEq)]
pub enum WeightSystem {
    Explicit(ExplicitWeights),
    Product(ProductWeights),
}

impl From<ProductWeights> for WeightSystem {
    fn from(p: ProductWeights) -> Self {
        WeightSystem::Product(p)
    }
}

impl From<ExplicitWeights> for WeightSystem {
    fn from(e: ExplicitWeights) -> Self {
        WeightSystem::Explicit(e)
    }
}

impl WeightSystem {
    /// Unit weight on `{1..d}` and zero elsewhere: the unweighted discrepancy.
    pub fn classical(d: usize) -> Result<Self, WeightError> {
        Ok(ExplicitWeights::new([(SubsetMask::full(d)?, 1.0)])?.into())
    }

    /// `gamma_j = 1` for every coordinate.
    pub fn unit_product() -> Self {
        ProductWeights::geometric(1.0).expect("valid ratio").into()
    }

    pub fn weight_of(&self, u: &SubsetMask) -> Result<f64, WeightError> {
        match self {
            WeightSystem::Explicit(e) => Ok(e.get(u)),
            WeightSystem::Product(p) => p.weight_of(u),
        }
    }

    /// Every weight multiplied by `kappa > 0`. Product weights are scaled as a
    /// whole, i.e. the result is explicit over `{1..d}`.
    pub fn scaled(&self, kappa: f64, d: usize) -> Result<WeightSystem, WeightError> {
        check_positive(kappa)?;
        let entries = match self {
            WeightSystem::Explicit(e) => e.entries().map(|(m, w)| (m.clone(), w * kappa)).collect::<Vec<_>>(),
            WeightSystem::Product(_) => {
                let mut v = Vec::new();
                for m in enumerate_subsets_wide(d, SubsetOrder::ByCardinality)? {
                    let w = self.weight_of(&m)?;
                    if w > 0.0 {
                        v.push((m, w * kappa));
                    }
                }
                v
            }
        };
        Ok(ExplicitWeights::new(entries)?.into())
    }

    /// Largest weight among subsets of `{1..d}`.
    pub fn max_weight(&self, d: usize) -> Result<f64, WeightError> {
        Ok(top_products(self, d)?.into_iter().map(|t| t.weight).fold(0.0, f64::max))
    }
}

/// Enumeration order for [`enumerate_subsets`].
#[derive(Clone, Copy, Debug)]
pub enum SubsetOrder<'a> {
    /// By cardinality, then lexicographically by index list.
    ByCardinality,
    /// Non-increasing `gamma_u`.
    ByWeightDescending(&'a WeightSystem),
}

/// `2^d - 1`, saturating.
pub fn subset_count(d: usize) -> u128 {
    if d >= 128 {
        u128::MAX
    } else {
        (1u128 << d) - 1
    }
}

/// Every non-empty subset of `{1..d}` exactly once. `d` may not exceed the
/// inline mask width.
pub fn enumerate_subsets(d: usize, order: SubsetOrder<'_>) -> Result<Subsets, WeightError> {
    if d > INLINE_WIDTH {
        return Err(WeightError::WidthExceeded { d });
    }
    enumerate_subsets_wide(d, order)
}

/// As [`enumerate_subsets`], allowing the multi-word mask representation.
pub fn enumerate_subsets_wide(d: usize, order: SubsetOrder<'_>) -> Result<Subsets, WeightError> {
    let inner = match order {
        SubsetOrder::ByCardinality => Inner::Cardinality(Combinations::new(d)),
        SubsetOrder::ByWeightDescending(WeightSystem::Explicit(e)) => {
            let mut listed: Vec<(SubsetMask, f64)> = e
                .entries()
                .filter(|(m, w)| m.max_index() <= d && *w > 0.0)
                .map(|(m, w)| (m.clone(), w))
                .collect();
            listed.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            let skip = listed.iter().map(|(m, _)| m.clone()).collect();
            Inner::Explicit {
                listed: listed.into_iter().map(|(m, _)| m).collect::<Vec<_>>().into_iter(),
                skip,
                rest: Combinations::new(d),
            }
        }
        SubsetOrder::ByWeightDescending(ws @ WeightSystem::Product(p)) => {
            let gammas = p.gammas(d)?;
            if gammas.iter().all(|&g| g <= 1.0) {
                Inner::Heap(BestFirst::new(gammas))
            } else if d <= MATERIALIZE_LIMIT {
                let mut all = Vec::with_capacity(subset_count(d) as usize);
                for bits in 1..=(subset_count(d) as u64) {
                    let m = SubsetMask::from_bits(bits).expect("non-zero");
                    let w = ws.weight_of(&m)?;
                    all.push((m, w));
                }
                all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
                Inner::Materialized(all.into_iter().map(|(m, _)| m).collect::<Vec<_>>().into_iter())
            } else {
                return Err(WeightError::TooManySubsets { d });
            }
        }
    };
    Ok(Subsets { inner })
}

/// Iterator returned by [`enumerate_subsets`].
pub struct Subsets {
    inner: Inner,
}

enum Inner {
    Cardinality(Combinations),
    Heap(BestFirst),
    Materialized(alloc::vec::IntoIter<SubsetMask>),
    Explicit {
        listed: alloc::vec::IntoIter<SubsetMask>,
        skip: BTreeSet<SubsetMask>,
        rest: Combinations,
    },
}

impl Iterator for Subsets {
    type Item = SubsetMask;

    fn next(&mut self) -> Option<SubsetMask> {
        match &mut self.inner {
            Inner::Cardinality(c) => c.next(),
            Inner::Heap(h) => h.next(),
            Inner::Materialized(it) => it.next(),
            Inner::Explicit { listed, skip, rest } => {
                if let Some(m) = listed.next() {
                    return Some(m);
                }
                rest.by_ref().find(|m| !skip.contains(m))
            }
        }
    }
}

/// Index combinations of `{1..d}` by size, then lexicographically.
struct Combinations {
    d: usize,
    idx: Vec<usize>,
    done: bool,
}

impl Combinations {
    fn new(d: usize) -> Self {
        Self { d, idx: alloc::vec![1], done: d == 0 }
    }
}

impl Iterator for Combinations {
    type Item = SubsetMask;

    fn next(&mut self) -> Option<SubsetMask> {
        if self.done {
            return None;
        }
        let out = SubsetMask::from_indices(self.idx.iter().copied()).expect("non-empty");
        let r = self.idx.len();
        let d = self.d;
        match (0..r).rev().find(|&i| self.idx[i] < d - (r - 1 - i)) {
            Some(i) => {
                self.idx[i] += 1;
                for k in i + 1..r {
                    self.idx[k] = self.idx[k - 1] + 1;
                }
            }
            None if r < d => self.idx = (1..=r + 1).collect(),
            None => self.done = true,
        }
        Some(out)
    }
}

/// Best-first enumeration of subsets by product weight when every factor is
/// at most 1. Coordinates are ranked by weight; every subset of ranks has a
/// unique parent (drop the last rank, or move it one step back), and children
/// never outweigh their parent, so a max-heap yields weights in order.
struct BestFirst {
    ranked: Vec<(f64, usize)>,
    heap: BinaryHeap<Node>,
}

struct Node {
    weight: f64,
    mask: SubsetMask,
    ranks: Vec<usize>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        self.weight
            .total_cmp(&other.weight)
            .then_with(|| other.mask.cmp(&self.mask))
    }
}

impl BestFirst {
    fn new(gammas: Vec<f64>) -> Self {
        let mut ranked: Vec<(f64, usize)> = gammas.into_iter().enumerate().map(|(k, g)| (g, k + 1)).collect();
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut this = Self { ranked, heap: BinaryHeap::new() };
        if !this.ranked.is_empty() {
            let root = this.node(alloc::vec![0]);
            this.heap.push(root);
        }
        this
    }

    fn node(&self, ranks: Vec<usize>) -> Node {
        let weight = ranks.iter().fold(1.0, |acc, &r| acc * self.ranked[r].0);
        let mask = SubsetMask::from_indices(ranks.iter().map(|&r| self.ranked[r].1)).expect("non-empty");
        Node { weight, mask, ranks }
    }
}

impl Iterator for BestFirst {
    type Item = SubsetMask;

    fn next(&mut self) -> Option<SubsetMask> {
        let node = self.heap.pop()?;
        let last = *node.ranks.last().expect("non-empty");
        if last + 1 < self.ranked.len() {
            let mut grown = node.ranks.clone();
            grown.push(last + 1);
            let grown = self.node(grown);
            self.heap.push(grown);
            let mut moved = node.ranks.clone();
            *moved.last_mut().unwrap() = last + 1;
            let moved = self.node(moved);
            self.heap.push(moved);
        }
        Some(node.mask)
    }
}

/// For each cardinality `r`, the heaviest subset of `{1..d}` of that size.
#[derive(Clone, Debug)]
pub(crate) struct TopSubset {
    pub size: usize,
    pub weight: f64,
    pub mask: SubsetMask,
}

/// Heaviest subset per cardinality among subsets of `{1..d}` (only sizes
/// that carry positive weight for explicit systems).
pub(crate) fn top_products(ws: &WeightSystem, d: usize) -> Result<Vec<TopSubset>, WeightError> {
    match ws {
        WeightSystem::Product(p) => {
            let mut ranked: Vec<(f64, usize)> =
                p.gammas(d)?.into_iter().enumerate().map(|(k, g)| (g, k + 1)).collect();
            ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let mut out = Vec::with_capacity(d);
            let mut w = 1.0;
            for r in 1..=d {
                w *= ranked[r - 1].0;
                let mask = SubsetMask::from_indices(ranked[..r].iter().map(|x| x.1))?;
                out.push(TopSubset { size: r, weight: w, mask });
            }
            Ok(out)
        }
        WeightSystem::Explicit(e) => {
            let mut best: BTreeMap<usize, (f64, SubsetMask)> = BTreeMap::new();
            for (m, w) in e.entries() {
                if m.max_index() > d || w <= 0.0 {
                    continue;
                }
                let slot = best.entry(m.len()).or_insert((w, m.clone()));
                if w > slot.0 || (w == slot.0 && *m < slot.1) {
                    *slot = (w, m.clone());
                }
            }
            Ok(best.into_iter().map(|(size, (weight, mask))| TopSubset { size, weight, mask }).collect())
        }
    }
}

/// `sqrt(4.9 + 2 ln(e d / r)) * sqrt(r)`: the per-subset factor of the
/// union-bound discrepancy estimate for a subset of size `r` in dimension `d`.
pub fn union_bound_factor(d: usize, r: usize) -> f64 {
    let (d, r) = (d as f64, r as f64);
    libm::sqrt(4.9 + 2.0 * libm::log(core::f64::consts::E * d / r)) * libm::sqrt(r)
}

/// Partial evaluation of the two suprema over `d >= 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightConstants {
    /// `max_{d <= d_max} max_u gamma_u sqrt|u|`.
    pub c_gamma: f64,
    /// `max_{d <= d_max} max_u gamma_u sqrt(4.9 + 2 ln(e d/|u|)) sqrt|u|`.
    pub c_hat_gamma: f64,
    pub d_max_used: usize,
    /// Both maxima were first attained strictly before `d_max_used`.
    pub stabilized: bool,
    pub c_gamma_argmax_d: usize,
    pub c_hat_gamma_argmax_d: usize,
    pub c_gamma_witness: Option<SubsetMask>,
    pub c_hat_gamma_witness: Option<SubsetMask>,
}

/// Evaluates both weight constants over `d = 1..=d_max`.
///
/// The maximum over `u` only needs the heaviest subset of each size, so
/// product weights cost `O(d_max^2)` regardless of `2^d`.
pub fn corollary1_constants(ws: &WeightSystem, d_max: usize) -> Result<WeightConstants, WeightError> {
    assert!(d_max >= 1, "d_max must be at least 1");
    let mut c = (0.0, 1, None);
    let mut c_hat = (0.0, 1, None);
    for d in 1..=d_max {
        for top in top_products(ws, d)? {
            let radical = libm::sqrt(top.size as f64);
            let v = top.weight * radical;
            if v > c.0 {
                c = (v, d, Some(top.mask.clone()));
            }
            let v_hat = top.weight * union_bound_factor(d, top.size);
            if v_hat > c_hat.0 {
                c_hat = (v_hat, d, Some(top.mask));
            }
        }
    }
    Ok(WeightConstants {
        c_gamma: c.0,
        c_hat_gamma: c_hat.0,
        d_max_used: d_max,
        stabilized: c.1 < d_max && c_hat.1 < d_max,
        c_gamma_argmax_d: c.1,
        c_hat_gamma_argmax_d: c_hat.1,
        c_gamma_witness: c.2,
        c_hat_gamma_witness: c_hat.2,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Converges,
    Diverges,
    Inconclusive,
}

/// Outcome of a summability check for `sum exp(-c gamma^-2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summability {
    pub partial_sum: f64,
    /// Upper bound on the unsummed remainder; `None` when unknown or infinite.
    pub remainder_bound: Option<f64>,
    pub verdict: Verdict,
    pub terms_summed: u64,
}

impl Summability {
    /// `partial_sum + remainder_bound`, or infinity.
    pub fn upper(&self) -> f64 {
        self.remainder_bound.map_or(f64::INFINITY, |r| self.partial_sum + r)
    }
}

#[inline]
pub(crate) fn exp_neg_inv_sq(c: f64, gamma: f64) -> f64 {
    if gamma <= 0.0 {
        0.0
    } else {
        libm::exp(-c / (gamma * gamma))
    }
}

/// `sum_{j >= first} exp(-c gamma_j^-2)`: explicit terms through
/// `max(cutoff, L + 2)` (or the prefix length `L` without a tail) and an
/// integral-comparison bound on the remainder.
pub fn coordinate_series(p: &ProductWeights, c: f64, first: u64, cutoff: u64) -> Result<Summability, WeightError> {
    check_positive(c)?;
    let first = first.max(1);
    let len = p.prefix.len() as u64;
    let last = match p.tail {
        None => len,
        Some(_) => cutoff.max(len + 2),
    }
    .max(first - 1);
    let mut partial = 0.0;
    for j in first..=last {
        partial += exp_neg_inv_sq(c, p.gamma(j)?);
    }
    let terms_summed = (last + 1).saturating_sub(first);
    let remainder = match p.tail {
        None => Some(0.0),
        Some(Tail::InverseSqrtLog { c: c0 }) => {
            if c0 == 0.0 {
                Some(0.0)
            } else {
                // exp(-c ln j / c0^2) = j^-p; sum_{j > J} j^-p <= J^(1-p) / (p - 1)
                let power = c / (c0 * c0);
                (power > 1.0).then(|| libm::pow(last as f64, 1.0 - power) / (power - 1.0))
            }
        }
        Some(Tail::Geometric { ratio }) => {
            let g = p.tail_value(last);
            if g == 0.0 {
                Some(0.0)
            } else if ratio >= 1.0 {
                None
            } else {
                // f(x) = exp(-a q^(x-J)), a = c g^-2, q = ratio^-2;
                // int_J^inf f <= exp(-a) / (a ln q)
                let a = c / (g * g);
                let ln_q = -2.0 * libm::log(ratio);
                Some(libm::exp(-a) / (a * ln_q))
            }
        }
    };
    let verdict = if remainder.is_some() { Verdict::Converges } else { Verdict::Diverges };
    Ok(Summability { partial_sum: partial, remainder_bound: remainder, verdict, terms_summed })
}

/// Convergence of `sum_j exp(-c gamma_j^-2)` for product weights, or of
/// `sum_u exp(-c gamma_u^-2)` for explicit weights. `cutoff` bounds the
/// number of explicitly summed terms.
pub fn check_summability(ws: &WeightSystem, c: f64, cutoff: u64) -> Result<Summability, WeightError> {
    check_positive(c)?;
    match ws {
        WeightSystem::Product(p) => coordinate_series(p, c, 1, cutoff),
        WeightSystem::Explicit(e) => {
            let positive: Vec<f64> = e.entries().map(|(_, w)| w).filter(|&w| w > 0.0).collect();
            let n = positive.len() as u64;
            let take = n.min(cutoff) as usize;
            let partial = positive[..take].iter().map(|&w| exp_neg_inv_sq(c, w)).sum();
            if n <= cutoff {
                Ok(Summability { partial_sum: partial, remainder_bound: Some(0.0), verdict: Verdict::Converges, terms_summed: n })
            } else {
                Ok(Summability {
                    partial_sum: partial,
                    remainder_bound: None,
                    verdict: Verdict::Inconclusive,
                    terms_summed: take as u64,
                })
            }
        }
    }
}

/// Result of checking `gamma_u <= c |u|^(-1/2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Smallness {
    pub holds: bool,
    /// First violating subset (smallest size, then smallest mask).
    pub witness: Option<SubsetMask>,
    pub witness_weight: f64,
    pub limit: f64,
}

/// Checks `gamma_u <= c / sqrt|u|` for every `u` with `max(u) <= d_max`.
pub fn check_theorem4_smallness(ws: &WeightSystem, c: f64, d_max: usize) -> Result<Smallness, WeightError> {
    check_positive(c)?;
    let ok = Smallness { holds: true, witness: None, witness_weight: 0.0, limit: 0.0 };
    match ws {
        WeightSystem::Product(_) => {
            for top in top_products(ws, d_max)? {
                let limit = c / libm::sqrt(top.size as f64);
                if top.weight > limit {
                    return Ok(Smallness { holds: false, witness: Some(top.mask), witness_weight: top.weight, limit });
                }
            }
            Ok(ok)
        }
        WeightSystem::Explicit(e) => {
            let mut first: Option<(SubsetMask, f64, f64)> = None;
            for (m, w) in e.entries() {
                if m.max_index() > d_max {
                    continue;
                }
                let limit = c / libm::sqrt(m.len() as f64);
                let better = match &first {
                    None => true,
                    Some((f, _, _)) => (m.len(), m) < (f.len(), f),
                };
                if w > limit && better {
                    first = Some((m.clone(), w, limit));
                }
            }
            Ok(match first {
                None => ok,
                Some((m, w, limit)) => Smallness { holds: false, witness: Some(m), witness_weight: w, limit },
            })
        }
    }
}

/// A finitely modified product sequence with `gamma_j <= 1/2` and
/// `sum_j exp(-c gamma_j^-2 / 2) <= 1/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalization {
    pub weights: ProductWeights,
    /// Indices whose weight was lowered, ascending.
    pub changed: Vec<u64>,
    /// Every `gamma_j` with `j >= untouched_from` equals the original.
    pub untouched_from: u64,
    /// Certified upper bound on `sum_j exp(-c gamma_j^-2 / 2)`.
    pub coordinate_sum: f64,
}

/// Lowers finitely many weights so that `gamma_j <= 1/2` for all `j` and
/// `sum_j exp(-(c/2) gamma_j^-2) <= 1/2`.
///
/// Weights above 1/2 are capped at 1/2. If the sum is still too large, the
/// shortest head `1..=J` whose complement sums to at most 1/4 is lowered to
/// `delta = min(1/2, sqrt((c/2) / ln(4J)))`, which makes each head term at
/// most `1/(4J)`.
pub fn normalize_product_weights(p: &ProductWeights, c: f64, cutoff: u64) -> Result<Normalization, WeightError> {
    check_positive(c)?;
    let half_c = c / 2.0;
    let mut prefix = p.prefix.clone();
    let original = |j: u64| p.gamma(j);

    // Bring every tail weight above 1/2 into the prefix.
    if p.tail.is_some() {
        let mut j = prefix.len() as u64 + 1;
        loop {
            let g = original(j)?;
            if g <= 0.5 {
                break;
            }
            if j > MAX_MATERIALIZED_PREFIX {
                return Err(WeightError::MaterializationLimit);
            }
            prefix.push(g);
            j += 1;
        }
    }
    let mut changed = BTreeSet::new();
    for (k, g) in prefix.iter_mut().enumerate() {
        if *g > 0.5 {
            *g = 0.5;
            changed.insert(k as u64 + 1);
        }
    }
    let mut weights = p.with_prefix(prefix);
    let mut cut = cutoff.max(16);
    let mut series = coordinate_series(&weights, half_c, 1, cut)?;
    if series.verdict != Verdict::Converges {
        return Err(WeightError::Diverges { c: half_c });
    }

    if series.upper() > 0.5 {
        // Need a remainder of at most 1/8 so the head search can reach 1/4.
        while series.remainder_bound.unwrap_or(f64::INFINITY) > 0.125 {
            if cut >= MAX_MATERIALIZED_PREFIX {
                return Err(WeightError::MaterializationLimit);
            }
            cut = (cut * 4).min(MAX_MATERIALIZED_PREFIX);
            series = coordinate_series(&weights, half_c, 1, cut)?;
        }
        let remainder = series.remainder_bound.unwrap_or(0.0);
        let last = series.terms_summed;
        let mut terms = Vec::with_capacity(last as usize);
        for j in 1..=last {
            terms.push(exp_neg_inv_sq(half_c, weights.gamma(j)?));
        }
        let mut suffix = remainder + terms.iter().sum::<f64>();
        let mut head = 0u64;
        while suffix > 0.25 {
            suffix -= terms[head as usize];
            head += 1;
        }
        let delta = 0.5f64.min(libm::sqrt(half_c / libm::log(4.0 * head as f64))) * (1.0 - 1e-12);
        let mut prefix = weights.prefix.clone();
        for j in prefix.len() as u64 + 1..=head {
            prefix.push(weights.gamma(j)?);
        }
        for (k, g) in prefix.iter_mut().enumerate().take(head as usize) {
            if *g > delta {
                *g = delta;
                changed.insert(k as u64 + 1);
            }
        }
        weights = weights.with_prefix(prefix);
        series = coordinate_series(&weights, half_c, 1, cut)?;
    }
    let untouched_from = changed.iter().next_back().map_or(1, |&j| j + 1);
    Ok(Normalization {
        weights,
        changed: changed.into_iter().collect(),
        untouched_from,
        coordinate_sum: series.upper(),
    })
}

/// Convergence of `sum_j gamma_j^a` for product weights (power summability).
pub fn check_power_summability(p: &ProductWeights, a: f64, cutoff: u64) -> Result<Summability, WeightError> {
    check_positive(a)?;
    let len = p.prefix.len() as u64;
    let last = match p.tail {
        None => len,
        Some(_) => cutoff.max(len + 2),
    };
    let mut partial = 0.0;
    for j in 1..=last {
        partial += libm::pow(p.gamma(j)?, a);
    }
    let remainder = match p.tail {
        None => Some(0.0),
        // (ln j)^(-a/2) is never summable
        Some(Tail::InverseSqrtLog { c }) => (c == 0.0).then_some(0.0),
        Some(Tail::Geometric { ratio }) => {
            let g = p.tail_value(last);
            if g == 0.0 {
                Some(0.0)
            } else if ratio >= 1.0 {
                None
            } else {
                let q = libm::pow(ratio, a);
                Some(libm::pow(g, a) * q / (1.0 - q))
            }
        }
    };
    let verdict = if remainder.is_some() { Verdict::Converges } else { Verdict::Diverges };
    Ok(Summability { partial_sum: partial, remainder_bound: remainder, verdict, terms_summed: last })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn m(ix: &[usize]) -> SubsetMask {
        SubsetMask::from_indices(ix.iter().copied()).unwrap()
    }

    fn geo() -> WeightSystem {
        ProductWeights::geometric(0.5).unwrap().into()
    }

    #[test]
    fn weight_of_examples() {
        assert_eq!(geo().weight_of(&m(&[1, 2])).unwrap(), 0.125);
        let e: WeightSystem = ExplicitWeights::new([(m(&[1]), 0.7)]).unwrap().into();
        assert_eq!(e.weight_of(&m(&[2])).unwrap(), 0.0);
        assert_eq!(WeightSystem::unit_product().weight_of(&m(&[3, 9, 40])).unwrap(), 1.0);
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(ProductWeights::finite(vec![0.5, -1.0]).is_err());
        assert!(ProductWeights::finite(vec![f64::NAN]).is_err());
        assert_eq!(
            ProductWeights::new(vec![], Some(Tail::InverseSqrtLog { c: 1.0 })),
            Err(WeightError::TailNeedsPrefix)
        );
        assert_eq!(
            ExplicitWeights::new([(m(&[1]), 0.1), (m(&[1]), 0.2)]),
            Err(WeightError::DuplicateSubset(m(&[1])))
        );
    }

    #[test]
    fn increasing_tail_is_an_error_when_queried() {
        let p = ProductWeights::new(vec![0.5], Some(Tail::Geometric { ratio: 1.5 })).unwrap();
        assert!(p.gamma(2).is_ok());
        assert_eq!(p.gamma(3), Err(WeightError::TailNotMonotone { j: 3 }));
        assert!(p.check_non_increasing().is_err());
        let fin = ProductWeights::finite(vec![0.5, 0.7]).unwrap();
        assert_eq!(fin.check_non_increasing(), Err(WeightError::NotNonIncreasing { j: 2 }));
        assert_eq!(fin.gamma(5).unwrap(), 0.0);
    }

    #[test]
    fn enumeration_counts() {
        assert_eq!(enumerate_subsets(2, SubsetOrder::ByCardinality).unwrap().count(), 3);
        assert_eq!(enumerate_subsets(4, SubsetOrder::ByCardinality).unwrap().count(), 15);
        let ws = geo();
        let first = enumerate_subsets(3, SubsetOrder::ByWeightDescending(&ws)).unwrap().next();
        assert_eq!(first, Some(m(&[1])));
        assert!(matches!(
            enumerate_subsets(65, SubsetOrder::ByCardinality),
            Err(WeightError::WidthExceeded { d: 65 })
        ));
    }

    #[test]
    fn descending_order_is_sorted_for_every_variant() {
        let systems: [WeightSystem; 3] = [
            geo(),
            ProductWeights::finite(vec![2.0, 0.3, 1.5, 0.0]).unwrap().into(),
            ExplicitWeights::new([(m(&[2, 3]), 0.4), (m(&[1]), 0.9), (m(&[4]), 0.4)]).unwrap().into(),
        ];
        for ws in &systems {
            let masks: Vec<SubsetMask> = enumerate_subsets(4, SubsetOrder::ByWeightDescending(ws)).unwrap().collect();
            assert_eq!(masks.len(), 15);
            let set: BTreeSet<_> = masks.iter().cloned().collect();
            assert_eq!(set.len(), 15);
            let w: Vec<f64> = masks.iter().map(|u| ws.weight_of(u).unwrap()).collect();
            assert!(w.windows(2).all(|p| p[0] >= p[1]), "{w:?}");
        }
    }

    #[test]
    fn corollary1_examples() {
        let full: WeightSystem = WeightSystem::classical(5).unwrap();
        let k = corollary1_constants(&full, 5).unwrap();
        assert_eq!(k.c_gamma, libm::sqrt(5.0));

        let k = corollary1_constants(&geo(), 8).unwrap();
        assert_eq!(k.c_gamma, 0.5);
        assert_eq!(k.c_gamma_witness, Some(m(&[1])));
        assert!(k.c_hat_gamma > 0.0);

        let zero: WeightSystem = ExplicitWeights::default().into();
        let k = corollary1_constants(&zero, 4).unwrap();
        assert_eq!((k.c_gamma, k.c_hat_gamma), (0.0, 0.0));
    }

    #[test]
    fn summability_examples() {
        let log = ProductWeights::new(vec![1.0], Some(Tail::InverseSqrtLog { c: 1.0 })).unwrap();
        let s = check_summability(&log.into(), 2.0, 1000).unwrap();
        assert_eq!(s.verdict, Verdict::Converges);

        let s = check_summability(&WeightSystem::unit_product(), 3.0, 1000).unwrap();
        assert_eq!(s.verdict, Verdict::Diverges);

        let p = ProductWeights::finite((1..=64).map(|j| libm::pow(0.5, j as f64)).collect()).unwrap();
        let s = check_summability(&p.into(), 1.0, 64).unwrap();
        assert_eq!(s.verdict, Verdict::Converges);
        assert!(s.partial_sum < 0.1);

        assert!(check_summability(&geo(), 0.0, 10).is_err());
        let e: WeightSystem = ExplicitWeights::new([(m(&[1]), 0.5), (m(&[2]), 0.5)]).unwrap().into();
        assert_eq!(check_summability(&e, 1.0, 1).unwrap().verdict, Verdict::Inconclusive);
    }

    #[test]
    fn smallness_examples() {
        let halves: WeightSystem = ProductWeights::finite(vec![0.5; 4]).unwrap().into();
        assert!(check_theorem4_smallness(&halves, 1.0, 4).unwrap().holds);
        let e: WeightSystem = ExplicitWeights::new([(m(&[1, 2]), 5.0)]).unwrap().into();
        let s = check_theorem4_smallness(&e, 1.0, 4).unwrap();
        assert!(!s.holds);
        assert_eq!(s.witness, Some(m(&[1, 2])));
        let zero: WeightSystem = ExplicitWeights::default().into();
        assert!(check_theorem4_smallness(&zero, 1.0, 4).unwrap().holds);
    }

    #[test]
    fn normalization_is_idempotent_on_normalized_input() {
        let p = ProductWeights::geometric(0.5).unwrap();
        let n = normalize_product_weights(&p, 1.0, 64).unwrap();
        assert!(n.changed.is_empty());
        assert_eq!(n.untouched_from, 1);
        assert!(n.coordinate_sum <= 0.5);
        let again = normalize_product_weights(&n.weights, 1.0, 64).unwrap();
        assert!(again.changed.is_empty());
    }

    #[test]
    fn normalization_lowers_a_finite_head() {
        let p = ProductWeights::new(vec![1.0], Some(Tail::InverseSqrtLog { c: 1.0 })).unwrap();
        let n = normalize_product_weights(&p, 6.0, 1 << 12).unwrap();
        assert!(n.coordinate_sum <= 0.5);
        assert!(!n.changed.is_empty());
        for j in 1..=n.untouched_from + 50 {
            assert!(n.weights.gamma(j).unwrap() <= 0.5);
        }
        for j in n.untouched_from..n.untouched_from + 50 {
            assert_eq!(n.weights.gamma(j).unwrap(), p.gamma(j).unwrap());
        }
    }

    #[test]
    fn power_summability() {
        assert_eq!(check_power_summability(&ProductWeights::geometric(0.5).unwrap(), 1.0, 100).unwrap().verdict, Verdict::Converges);
        let log = ProductWeights::new(vec![1.0], Some(Tail::InverseSqrtLog { c: 1.0 })).unwrap();
        assert_eq!(check_power_summability(&log, 4.0, 100).unwrap().verdict, Verdict::Diverges);
    }

    #[test]
    fn scaling_keeps_weights_proportional() {
        let s = geo().scaled(3.0, 3).unwrap();
        assert_eq!(s.weight_of(&m(&[1, 3])).unwrap(), 3.0 * 0.0625);
    }
}
