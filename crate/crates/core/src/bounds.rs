//! Explicit discrepancy bounds, tail estimates, tractability conditions and
//! the inequalities used inside their proofs.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use alloc::{format, vec};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discrepancy::{weighted_star_discrepancy, DiscrepancyError, ExactBudget, Mode};
use crate::geometry::PointSet;
use crate::subset::SubsetMask;
use crate::weights::{
    check_power_summability, check_summability, check_theorem4_smallness, coordinate_series, exp_neg_inv_sq,
    normalize_product_weights, top_products, union_bound_factor, Normalization, ProductWeights, Summability,
    Verdict, WeightConstants, WeightError, WeightSystem,
};

const E: f64 = core::f64::consts::E;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("the constant of this bound is unknown and must be supplied")]
    MissingConstant,
    #[error("binomial coefficient C({d},{r}) overflows 128 bits")]
    Overflow { d: u64, r: u64 },
    #[error("no admissible constant below {limit}")]
    SearchFailed { limit: f64 },
    #[error(transparent)]
    Weight(#[from] WeightError),
    #[error(transparent)]
    Discrepancy(#[from] DiscrepancyError),
}

fn invalid(msg: &str) -> BoundError {
    BoundError::InvalidArgument(msg.to_string())
}

/// Constants that bounds depend on but the theory leaves open or lets the
/// caller pick.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    /// Constant of the large-deviation tail bound.
    pub k_talagrand: f64,
    /// Constant of the classical `c sqrt(d/N)` bound.
    pub c_abs_hnww: f64,
    /// Unknown constant of the logarithmic weighted bound.
    pub c_hps: Option<f64>,
    /// Smallness constant `c` in `gamma_u <= c |u|^(-1/2)`.
    pub c_user: f64,
    pub c_hat: Option<f64>,
}

impl Default for BoundParams {
    fn default() -> Self {
        Self { k_talagrand: 1.0, c_abs_hnww: 10.0, c_hps: None, c_user: 1.0, c_hat: None }
    }
}

impl BoundParams {
    pub fn validate(&self) -> Result<(), BoundError> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.k_talagrand) || !positive(self.c_abs_hnww) || !positive(self.c_user) {
            return Err(invalid("configured constants must be positive and finite"));
        }
        if self.c_hps.is_some_and(|c| !positive(c)) || self.c_hat.is_some_and(|c| !positive(c)) {
            return Err(invalid("configured constants must be positive and finite"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TheoremId {
    Hnww,
    Hinrichs,
    Hps,
    Hps2,
    Hps3,
    Hswcond,
    Theorem1,
    Corollary1C,
    Corollary1CHat,
    InverseNC,
    InverseNCHat,
    Lemma1,
    Lemma2,
    Theorem2,
    Theorem3,
    Theorem4,
    Binomial,
    FrTail,
    UnionSeries,
}

impl TheoremId {
    pub const ALL: [TheoremId; 19] = [
        TheoremId::Hnww,
        TheoremId::Hinrichs,
        TheoremId::Hps,
        TheoremId::Hps2,
        TheoremId::Hps3,
        TheoremId::Hswcond,
        TheoremId::Theorem1,
        TheoremId::Corollary1C,
        TheoremId::Corollary1CHat,
        TheoremId::InverseNC,
        TheoremId::InverseNCHat,
        TheoremId::Lemma1,
        TheoremId::Lemma2,
        TheoremId::Theorem2,
        TheoremId::Theorem3,
        TheoremId::Theorem4,
        TheoremId::Binomial,
        TheoremId::FrTail,
        TheoremId::UnionSeries,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TheoremId::Hnww => "hnww",
            TheoremId::Hinrichs => "hinrichs",
            TheoremId::Hps => "hps",
            TheoremId::Hps2 => "hps2",
            TheoremId::Hps3 => "hps3",
            TheoremId::Hswcond => "hswcond",
            TheoremId::Theorem1 => "theorem1",
            TheoremId::Corollary1C => "corollary1_c",
            TheoremId::Corollary1CHat => "corollary1_c_hat",
            TheoremId::InverseNC => "inverse_n_c",
            TheoremId::InverseNCHat => "inverse_n_c_hat",
            TheoremId::Lemma1 => "lemma1",
            TheoremId::Lemma2 => "lemma2",
            TheoremId::Theorem2 => "theorem2",
            TheoremId::Theorem3 => "theorem3",
            TheoremId::Theorem4 => "theorem4",
            TheoremId::Binomial => "binomial",
            TheoremId::FrTail => "fr_tail",
            TheoremId::UnionSeries => "union_series",
        }
    }

    pub fn parse(s: &str) -> Option<TheoremId> {
        TheoremId::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

/// What a bound was evaluated at. Unused fields stay `None`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub d: Option<u64>,
    pub n: Option<u64>,
    pub eps: Option<f64>,
    pub q: Option<f64>,
    pub t: Option<f64>,
    pub r: Option<u64>,
    pub c_gamma: Option<f64>,
    pub c_hat_gamma: Option<f64>,
    pub witness: Option<SubsetMask>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub theorem_id: TheoremId,
    pub value: f64,
    /// `value` clamped to `[0, 1]` for probabilities and discrepancies.
    pub clamped: Option<f64>,
    pub inputs: BoundInputs,
    pub constants: BoundParams,
    pub warnings: Vec<String>,
}

impl BoundReport {
    fn new(theorem_id: TheoremId, value: f64, inputs: BoundInputs, constants: &BoundParams) -> Self {
        Self { theorem_id, value, clamped: None, inputs, constants: constants.clone(), warnings: Vec::new() }
    }

    fn clamp(mut self) -> Self {
        self.clamped = Some(self.value.clamp(0.0, 1.0));
        self
    }
}

fn check_dn(d: u64, n: u64) -> Result<(), BoundError> {
    if d == 0 || n == 0 {
        return Err(invalid("d and N must be at least 1"));
    }
    Ok(())
}

fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

fn ln(x: f64) -> f64 {
    libm::log(x)
}

/// `c_abs sqrt(d) / sqrt(N)`.
pub fn bound_hnww(d: u64, n: u64, c_abs: f64) -> f64 {
    c_abs * sqrt(d as f64) / sqrt(n as f64)
}

pub fn report_hnww(d: u64, n: u64, params: &BoundParams) -> Result<BoundReport, BoundError> {
    check_dn(d, n)?;
    params.validate()?;
    let inputs = BoundInputs { d: Some(d), n: Some(n), ..Default::default() };
    Ok(BoundReport::new(TheoremId::Hnww, bound_hnww(d, n, params.c_abs_hnww), inputs, params).clamp())
}

/// The lower bound `n*(d, eps) >= c d / eps` has no known constant; the
/// report carries the coefficient `d / eps` of the unknown constant.
pub fn report_hinrichs(d: u64, eps: f64, params: &BoundParams) -> Result<BoundReport, BoundError> {
    check_eps(eps)?;
    if d == 0 {
        return Err(invalid("d must be at least 1"));
    }
    let inputs = BoundInputs { d: Some(d), eps: Some(eps), ..Default::default() };
    let mut r = BoundReport::new(TheoremId::Hinrichs, d as f64 / eps, inputs, params);
    r.warnings.push("symbolic: value is the coefficient of an unspecified absolute constant".to_string());
    Ok(r)
}

/// `max_u gamma_u sqrt(4.9 + 2 ln(e d/|u|)) sqrt|u|` over `u` in `{1..d}`,
/// with the smallest maximizing mask.
pub fn theorem1_max(ws: &WeightSystem, d: usize) -> Result<(f64, Option<SubsetMask>), BoundError> {
    let mut best: (f64, Option<SubsetMask>) = (0.0, None);
    for top in top_products(ws, d)? {
        let v = top.weight * union_bound_factor(d, top.size);
        let better = match &best.1 {
            None => v > 0.0,
            Some(m) => v > best.0 || (v == best.0 && top.mask < *m),
        };
        if better {
            best = (v, Some(top.mask));
        }
    }
    Ok(best)
}

/// `(5.7 / sqrt N) max_u gamma_u sqrt(4.9 + 2 ln(e d/|u|)) sqrt|u|`.
pub fn bound_theorem1(ws: &WeightSystem, d: u64, n: u64, params: &BoundParams) -> Result<BoundReport, BoundError> {
    check_dn(d, n)?;
    let (m, witness) = theorem1_max(ws, d as usize)?;
    let inputs = BoundInputs { d: Some(d), n: Some(n), witness, ..Default::default() };
    Ok(BoundReport::new(TheoremId::Theorem1, 5.7 / sqrt(n as f64) * m, inputs, params).clamp())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantKind {
    C,
    CHat,
}

fn pick(constants: &WeightConstants, which: ConstantKind) -> Result<f64, BoundError> {
    let v = match which {
        ConstantKind::C => constants.c_gamma,
        ConstantKind::CHat => constants.c_hat_gamma,
    };
    if !v.is_finite() {
        return Err(BoundError::Precondition("weight constant is not finite".to_string()));
    }
    Ok(v)
}

fn stabilization_warning(constants: &WeightConstants) -> Option<String> {
    (!constants.stabilized).then(|| {
        format!("weight constants are maxima over d <= {} only and did not stabilize", constants.d_max_used)
    })
}

/// `6 C sqrt(5 + 2 ln(e d)) / sqrt N` or `6 C_hat / sqrt N`.
pub fn bound_corollary1(
    constants: &WeightConstants,
    d: u64,
    n: u64,
    which: ConstantKind,
    params: &BoundParams,
) -> Result<BoundReport, BoundError> {
    check_dn(d, n)?;
    let c = pick(constants, which)?;
    let (id, value) = match which {
        ConstantKind::C => (TheoremId::Corollary1C, 6.0 * c * sqrt(5.0 + 2.0 * ln(E * d as f64)) / sqrt(n as f64)),
        ConstantKind::CHat => (TheoremId::Corollary1CHat, 6.0 * c / sqrt(n as f64)),
    };
    let inputs = BoundInputs {
        d: Some(d),
        n: Some(n),
        c_gamma: Some(constants.c_gamma),
        c_hat_gamma: Some(constants.c_hat_gamma),
        ..Default::default()
    };
    let mut r = BoundReport::new(id, value, inputs, params).clamp();
    r.warnings.extend(stabilization_warning(constants));
    Ok(r)
}

fn check_eps(eps: f64) -> Result<(), BoundError> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(invalid("eps must lie in (0, 1)"));
    }
    Ok(())
}

/// Ceiling that ignores floating-point noise just above an integer.
fn ceil_count(x: f64) -> u64 {
    let r = libm::round(x);
    let v = if (x - r).abs() <= 1e-9 * r.max(1.0) { r } else { libm::ceil(x) };
    (v.max(1.0)).min(u64::MAX as f64) as u64
}

/// `ceil(36 C^2 (5 + 2 ln(e d)) / eps^2)` or `ceil(36 C_hat^2 / eps^2)`,
/// never below 1.
pub fn inverse_n_upper(constants: &WeightConstants, d: u64, eps: f64, which: ConstantKind) -> Result<u64, BoundError> {
    check_eps(eps)?;
    if d == 0 {
        return Err(invalid("d must be at least 1"));
    }
    let c = pick(constants, which)?;
    let x = match which {
        ConstantKind::C => 36.0 * c * c * (5.0 + 2.0 * ln(E * d as f64)) / (eps * eps),
        ConstantKind::CHat => 36.0 * c * c / (eps * eps),
    };
    Ok(ceil_count(x))
}

pub fn report_inverse_n(
    constants: &WeightConstants,
    d: u64,
    eps: f64,
    which: ConstantKind,
    params: &BoundParams,
) -> Result<BoundReport, BoundError> {
    let n = inverse_n_upper(constants, d, eps, which)?;
    let id = match which {
        ConstantKind::C => TheoremId::InverseNC,
        ConstantKind::CHat => TheoremId::InverseNCHat,
    };
    let inputs = BoundInputs {
        d: Some(d),
        eps: Some(eps),
        c_gamma: Some(constants.c_gamma),
        c_hat_gamma: Some(constants.c_hat_gamma),
        ..Default::default()
    };
    let mut r = BoundReport::new(id, n as f64, inputs, params);
    r.warnings.extend(stabilization_warning(constants));
    Ok(r)
}

/// `5.7 sqrt(4.9 + ln(1/(1-q))/d) sqrt(d) / sqrt(N)`: uniform random points
/// stay below this with probability at least `q`.
pub fn lemma1_threshold(d: u64, n: u64, q: f64) -> Result<f64, BoundError> {
    check_dn(d, n)?;
    if !(q > 0.0 && q < 1.0) {
        return Err(invalid("q must lie in (0, 1)"));
    }
    let d = d as f64;
    Ok(5.7 * sqrt(4.9 + -libm::log1p(-q) / d) * sqrt(d) / sqrt(n as f64))
}

pub fn report_lemma1(d: u64, n: u64, q: f64, params: &BoundParams) -> Result<BoundReport, BoundError> {
    let v = lemma1_threshold(d, n, q)?;
    let inputs = BoundInputs { d: Some(d), n: Some(n), q: Some(q), ..Default::default() };
    Ok(BoundReport::new(TheoremId::Lemma1, v, inputs, params).clamp())
}

/// Raw and `[0,1]`-clamped value of `(1/t) (K t^2 / d)^d exp(-2 t^2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailBound {
    pub raw: f64,
    pub clamped: f64,
}

pub fn lemma2_tail(d: u64, t: f64, k: f64) -> Result<TailBound, BoundError> {
    if d == 0 || !(t > 0.0) || !(k > 0.0) {
        return Err(invalid("lemma2_tail needs d >= 1, t > 0 and K > 0"));
    }
    let df = d as f64;
    let log = -ln(t) + df * ln(k * t * t / df) - 2.0 * t * t;
    let raw = libm::exp(log);
    Ok(TailBound { raw, clamped: raw.min(1.0) })
}

pub fn report_lemma2(d: u64, t: f64, params: &BoundParams) -> Result<BoundReport, BoundError> {
    params.validate()?;
    let b = lemma2_tail(d, t, params.k_talagrand)?;
    let inputs = BoundInputs { d: Some(d), t: Some(t), ..Default::default() };
    let mut r = BoundReport::new(TheoremId::Lemma2, b.raw, inputs, params);
    r.clamped = Some(b.clamped);
    r.warnings.push(format!("relative to configured K = {}", params.k_talagrand));
    Ok(r)
}

/// `c (1 + sqrt(ln d)) / sqrt(N) max_u gamma_u sqrt|u|`; the constant must be
/// supplied in `params.c_hps`.
pub fn bound_hps(ws: &WeightSystem, d: u64, n: u64, params: &BoundParams) -> Result<BoundReport, BoundError> {
    check_dn(d, n)?;
    let c = params.c_hps.ok_or(BoundError::MissingConstant)?;
    params.validate()?;
    let mut best: (f64, Option<SubsetMask>) = (0.0, None);
    for top in top_products(ws, d as usize)? {
        let v = top.weight * sqrt(top.size as f64);
        if v > best.0 {
            best = (v, Some(top.mask));
        }
    }
    let value = c * (1.0 + sqrt(ln(d as f64))) / sqrt(n as f64) * best.0;
    let inputs = BoundInputs { d: Some(d), n: Some(n), witness: best.1, ..Default::default() };
    Ok(BoundReport::new(TheoremId::Hps, value, inputs, params).clamp())
}

/// Convergence of `sum_j gamma_j^a`: `a = 1` is the condition for
/// `eps`-exponent 1, any `a > 0` the condition for order `N^(b - 1/2)`.
pub fn report_power_summability(
    p: &ProductWeights,
    a: f64,
    cutoff: u64,
    params: &BoundParams,
) -> Result<(BoundReport, Summability), BoundError> {
    let s = check_power_summability(p, a, cutoff)?;
    let id = if a == 1.0 { TheoremId::Hps3 } else { TheoremId::Hswcond };
    let mut r = BoundReport::new(id, s.upper(), BoundInputs::default(), params);
    r.warnings.push(format!("exponent a = {a}; verdict {:?}", s.verdict));
    Ok((r, s))
}

/// Exact `C(d, r)` and the estimate `(e d / r)^r`.
pub fn binomial_subset_bound(d: u64, r: u64) -> Result<(u128, f64), BoundError> {
    if r == 0 || r > d {
        return Err(invalid("binomial_subset_bound needs 1 <= r <= d"));
    }
    let k = r.min(d - r) as u128;
    let mut c: u128 = 1;
    for i in 0..k {
        // C(d, i+1) = C(d, i) (d - i) / (i + 1), exact at every step
        let g = gcd(c, i + 1);
        let (c_red, den) = (c / g, (i + 1) / g);
        let num = (d as u128 - i) / den;
        c = c_red.checked_mul(num).ok_or(BoundError::Overflow { d, r })?;
    }
    let (df, rf) = (d as f64, r as f64);
    Ok((c, libm::pow(E * df / rf, rf)))
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Number of terms summed by [`fr_tail_bound`].
pub const FR_TAIL_TERMS: u64 = 100_000;

/// `sum_{k=r}^{r+FR_TAIL_TERMS} (e k / r)^(-3r)` and its closed-form bound
/// `e^(-3r) + r e^(-3r) / (3r - 1)`.
pub fn fr_tail_bound(r: u64) -> Result<(f64, f64), BoundError> {
    if r == 0 {
        return Err(invalid("fr_tail_bound needs r >= 1"));
    }
    Ok((fr_partial(r, FR_TAIL_TERMS), fr_closed(r)))
}

pub fn fr_partial(r: u64, terms: u64) -> f64 {
    let rf = r as f64;
    let mut s = 0.0;
    for k in (r..=r + terms).rev() {
        s += libm::exp(-3.0 * rf * ln(E * k as f64 / rf));
    }
    s
}

fn fr_closed(r: u64) -> f64 {
    let rf = r as f64;
    let e3 = libm::exp(-3.0 * rf);
    e3 + rf * e3 / (3.0 * rf - 1.0)
}

/// `sum_{r=1}^{r_max} e^(-r)`.
pub fn union_series(r_max: u64) -> f64 {
    (1..=r_max).rev().map(|r| libm::exp(-(r as f64))).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem4Options {
    /// Number of leading product coordinates summed exactly over all subsets.
    pub head: usize,
    /// Smallness is checked for subsets of `{1..d_max}`.
    pub d_max: usize,
    /// Terms summed explicitly before the tail bound takes over.
    pub cutoff: u64,
    pub bisection_steps: u32,
}

impl Default for Theorem4Options {
    fn default() -> Self {
        Self { head: 16, d_max: 64, cutoff: 1 << 16, bisection_steps: 20 }
    }
}

/// Evidence that `sum_u exp(-c_hat gamma_u^-2) <= 1/2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem4Certificate {
    pub c_hat: f64,
    pub c: f64,
    pub k: f64,
    /// Exactly summed part (all subsets of the head, or all explicit weights).
    pub partial_sum: f64,
    /// Bound on every subset not in the partial sum.
    pub remainder_bound: f64,
    pub c_hat_at_least_one: bool,
    pub c_hat_at_least_c2k: bool,
    /// `ln(K x) <= x` at `x = c_hat / c^2`.
    pub log_kx_le_x: bool,
    pub smallness_checked_to: usize,
    pub head_len: usize,
    /// The discrepancy guarantee is `discrepancy_constant / sqrt(N)`.
    pub discrepancy_constant: f64,
}

impl Theorem4Certificate {
    pub fn total_bound(&self) -> f64 {
        self.partial_sum + self.remainder_bound
    }
}

/// Upper bound on `sum_u exp(-c_hat gamma_u^-2)`, split into an exact part and
/// a remainder.
///
/// For product weights with every `gamma_j <= 1`, write `u = a + b` with `a`
/// in the head and `b` in the tail. Since `xy >= x + y - 1` for `x, y >= 1`,
/// `exp(-c_hat gamma_u^-2) <= e^c_hat exp(-c_hat gamma_a^-2) exp(-c_hat gamma_b^-2)`
/// and the tail subsets sum to at most
/// `e^-c_hat (exp(e^c_hat S_T) - 1)` with `S_T` the tail coordinate series.
fn subset_series(ws: &WeightSystem, c_hat: f64, head: usize, cutoff: u64) -> Result<(f64, f64), BoundError> {
    match ws {
        WeightSystem::Explicit(e) => {
            let s = e.entries().map(|(_, w)| exp_neg_inv_sq(c_hat, w)).sum();
            Ok((s, 0.0))
        }
        WeightSystem::Product(p) => {
            let gammas = p.gammas(head)?;
            let terms: Vec<f64> = gammas.iter().map(|&g| if g > 0.0 { 1.0 / (g * g) } else { f64::INFINITY }).collect();
            let mut exact = 0.0;
            // inverse squared weight of every head subset, built by doubling
            let mut inv_sq: Vec<f64> = vec![1.0];
            for &t in &terms {
                let n = inv_sq.len();
                for i in 0..n {
                    let v = inv_sq[i] * t;
                    exact += libm::exp(-c_hat * v);
                    inv_sq.push(v);
                }
            }
            let tail = coordinate_series(p, c_hat, head as u64 + 1, cutoff)?;
            if tail.verdict != Verdict::Converges {
                return Err(BoundError::Precondition("coordinate series does not converge".to_string()));
            }
            let s_t = tail.upper();
            let grow = libm::expm1(libm::exp(c_hat) * s_t);
            Ok((exact, (libm::exp(-c_hat) + exact) * grow))
        }
    }
}

fn max_weight_all(ws: &WeightSystem) -> Result<f64, BoundError> {
    Ok(match ws {
        WeightSystem::Explicit(e) => e.entries().map(|(_, w)| w).fold(0.0, f64::max),
        WeightSystem::Product(p) => {
            let first_tail = p.prefix().len() as u64 + 1;
            let t = if p.tail().is_some() { p.gamma(first_tail)? } else { 0.0 };
            p.prefix().iter().copied().fold(t, f64::max)
        }
    })
}

/// Smallest certified `c_hat >= max(1, c^2 K)` with
/// `sum_u exp(-c_hat gamma_u^-2) <= 1/2`, found by doubling then bisection.
pub fn theorem4_constant(
    ws: &WeightSystem,
    c: f64,
    k: f64,
    opts: &Theorem4Options,
) -> Result<Theorem4Certificate, BoundError> {
    if !(c > 0.0) || !(k > 0.0) {
        return Err(invalid("c and K must be positive"));
    }
    let small = check_theorem4_smallness(ws, c, opts.d_max)?;
    if !small.holds {
        let w = small.witness.map(|m| format!("{m}")).unwrap_or_default();
        return Err(BoundError::Precondition(format!(
            "gamma_u <= c |u|^(-1/2) fails at u = {w}: {} > {}",
            small.witness_weight, small.limit
        )));
    }
    let summ = check_summability(ws, c, opts.cutoff)?;
    if summ.verdict != Verdict::Converges {
        return Err(BoundError::Precondition(format!("summability at c = {c} is {:?}", summ.verdict)));
    }
    if max_weight_all(ws)? > 1.0 {
        return Err(BoundError::Precondition("weights above 1 must be lowered first".to_string()));
    }
    let head = match ws {
        WeightSystem::Product(p) => opts.head.min(p.prefix().len()),
        WeightSystem::Explicit(_) => 0,
    };
    let eval = |ch: f64| subset_series(ws, ch, head, opts.cutoff);
    let ok = |(a, b): (f64, f64)| a + b <= 0.5;

    let lo_start = f64::max(1.0, c * c * k);
    let mut hi = lo_start;
    let mut at_hi = eval(hi)?;
    let mut lo = None;
    while !ok(at_hi) {
        lo = Some(hi);
        hi *= 2.0;
        if hi > 1e12 {
            return Err(BoundError::SearchFailed { limit: 1e12 });
        }
        at_hi = eval(hi)?;
    }
    if let Some(mut lo) = lo {
        for _ in 0..opts.bisection_steps {
            let mid = 0.5 * (lo + hi);
            let at_mid = eval(mid)?;
            if ok(at_mid) {
                hi = mid;
                at_hi = at_mid;
            } else {
                lo = mid;
            }
        }
    }
    let x = hi / (c * c);
    Ok(Theorem4Certificate {
        c_hat: hi,
        c,
        k,
        partial_sum: at_hi.0,
        remainder_bound: at_hi.1,
        c_hat_at_least_one: hi >= 1.0,
        c_hat_at_least_c2k: hi >= c * c * k,
        log_kx_le_x: ln(k * x) <= x,
        smallness_checked_to: opts.d_max,
        head_len: head,
        discrepancy_constant: sqrt(hi),
    })
}

/// Product weights brought into the normalized form, with the constants for
/// the general-weights argument.
#[derive(Clone, Debug, PartialEq)]
pub struct Theorem2Reduction {
    pub normalization: Normalization,
    /// Exponent at which the coordinate series converges and is normalized.
    pub c_used: f64,
    /// `c_used / 2`.
    pub c_hat: f64,
    /// Certified `S >= sum_j exp(-c_hat gamma_j^-2)`, at most 1/2.
    pub coordinate_sum: f64,
    /// `S / (1 - S) >= sum_u exp(-c_used gamma_u^-2)`, at most 1.
    pub subset_sum_bound: f64,
    pub warnings: Vec<String>,
}

/// Finitely modifies `p` so that `gamma_j <= 1/2` and
/// `sum_j exp(-(c/2) gamma_j^-2) <= 1/2`. If the series only converges at
/// `c` but not at `c/2`, the reduction is carried out with `2c` instead.
pub fn theorem2_reduce(p: &ProductWeights, c: f64, cutoff: u64) -> Result<Theorem2Reduction, BoundError> {
    if !(c > 0.0) {
        return Err(invalid("c must be positive"));
    }
    let s = check_summability(&WeightSystem::Product(p.clone()), c, cutoff)?;
    if s.verdict != Verdict::Converges {
        return Err(BoundError::Precondition(format!("coordinate series at c = {c} is {:?}", s.verdict)));
    }
    let mut warnings = Vec::new();
    let (normalization, c_used) = match normalize_product_weights(p, c, cutoff) {
        Ok(n) => (n, c),
        Err(WeightError::Diverges { .. }) => {
            warnings.push(format!("series diverges at c/2 = {}; reduced with c = {}", c / 2.0, 2.0 * c));
            (normalize_product_weights(p, 2.0 * c, cutoff)?, 2.0 * c)
        }
        Err(e) => return Err(e.into()),
    };
    let s = normalization.coordinate_sum;
    Ok(Theorem2Reduction {
        c_used,
        c_hat: c_used / 2.0,
        coordinate_sum: s,
        subset_sum_bound: s / (1.0 - s),
        normalization,
        warnings,
    })
}

/// One dimension `d = 2^(N+1)` of the tractability obstruction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Obstruction {
    pub n: u32,
    pub d: u64,
    /// `min_{|u|=2} gamma_u / 12`, a lower bound on the weighted discrepancy
    /// of any `N` points.
    pub lhs: f64,
    /// `C / N^beta`, the claimed upper bound.
    pub rhs: f64,
    /// `1 / (12 (ln d)^(beta/2))`.
    pub asymptotic_lhs: f64,
    pub violated: bool,
}

/// Evaluates both sides of the obstruction for each `N` in `exponents`.
pub fn theorem3_obstruction(
    p: &ProductWeights,
    c_const: f64,
    beta: f64,
    exponents: &[u32],
) -> Result<Vec<Obstruction>, BoundError> {
    if !(c_const > 0.0) || !(beta > 0.0) {
        return Err(invalid("C and beta must be positive"));
    }
    p.check_non_increasing()?;
    let mut out = Vec::with_capacity(exponents.len());
    for &n in exponents {
        if n == 0 || n > 62 {
            return Err(invalid("exponents must lie in 1..=62"));
        }
        let d = 1u64 << (n + 1);
        // non-increasing weights: the lightest pair is {d-1, d}
        let pair = p.gamma(d - 1)? * p.gamma(d)?;
        let lhs = pair / 12.0;
        let rhs = c_const / libm::pow(n as f64, beta);
        let asymptotic_lhs = 1.0 / (12.0 * libm::pow(ln(d as f64), beta / 2.0));
        out.push(Obstruction { n, d, lhs, rhs, asymptotic_lhs, violated: lhs > rhs });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hps2Check {
    pub value: f64,
    pub threshold: f64,
    pub holds: bool,
    /// When false, `value` is a lower bound and a failing check is
    /// inconclusive.
    pub exact: bool,
}

/// Smallest weight over pairs `{i, j}` of `{1..d}`.
pub fn min_pair_weight(ws: &WeightSystem, d: usize) -> Result<f64, BoundError> {
    if d < 2 {
        return Err(invalid("pairs need d >= 2"));
    }
    Ok(match ws {
        WeightSystem::Product(p) => {
            let mut g = p.gammas(d)?;
            g.sort_by(f64::total_cmp);
            g[0] * g[1]
        }
        WeightSystem::Explicit(e) => {
            let mut m = f64::INFINITY;
            for i in 1..=d {
                for j in i + 1..=d {
                    m = m.min(e.get(&SubsetMask::from_indices([i, j]).map_err(WeightError::from)?));
                }
            }
            m
        }
    })
}

/// Checks `D*_{N,gamma} >= c/12` for an instance with `d >= 2^(N+1)` and all
/// pair weights at least `c`.
pub fn hps_lower_bound_check(
    ps: &PointSet,
    ws: &WeightSystem,
    c: f64,
    budget: &ExactBudget,
) -> Result<Hps2Check, BoundError> {
    if !(c > 0.0) {
        return Err(invalid("c must be positive"));
    }
    let (n, d) = (ps.len(), ps.dim());
    if n >= 63 || (d as u128) < 1u128 << (n + 1) {
        return Err(BoundError::Precondition(format!("needs d >= 2^(N+1); got d = {d}, N = {n}")));
    }
    let m = min_pair_weight(ws, d)?;
    if m < c {
        return Err(BoundError::Precondition(format!("pair weights must be at least {c}; smallest is {m}")));
    }
    let r = weighted_star_discrepancy(ps, ws, Mode::Exact, budget)?;
    let threshold = c / 12.0;
    Ok(Hps2Check { value: r.value, threshold, holds: r.value >= threshold, exact: r.exact })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::{corollary1_constants, ExplicitWeights, Tail};
    use approx_eq::close;

    mod approx_eq {
        pub fn close(a: f64, b: f64, tol: f64) -> bool {
            (a - b).abs() <= tol * (1.0 + b.abs())
        }
    }

    fn params() -> BoundParams {
        BoundParams::default()
    }

    #[test]
    fn hnww_examples() {
        assert_eq!(bound_hnww(1, 100, 10.0), 1.0);
        assert_eq!(bound_hnww(4, 400, 10.0), 1.0);
        assert!(close(bound_hnww(16, 1_000_000, 10.0), 0.04, 1e-15));
    }

    #[test]
    fn theorem1_classical_embedding() {
        for d in [1u64, 2, 5, 20] {
            let ws = WeightSystem::classical(d as usize).unwrap();
            let r = bound_theorem1(&ws, d, 100, &params()).unwrap();
            let expect = 5.7 / 10.0 * sqrt(6.9 * d as f64);
            assert!(close(r.value, expect, 1e-14));
            assert!(r.value <= 15.0 * sqrt(d as f64) / 10.0);
        }
        let zero: WeightSystem = ExplicitWeights::default().into();
        assert_eq!(bound_theorem1(&zero, 3, 10, &params()).unwrap().value, 0.0);
    }

    #[test]
    fn theorem1_product_matches_brute_force() {
        let ws: WeightSystem = ProductWeights::geometric(0.5).unwrap().into();
        let r = bound_theorem1(&ws, 3, 100, &params()).unwrap();
        let mut best = 0.0f64;
        for bits in 1u64..8 {
            let m = SubsetMask::from_bits(bits).unwrap();
            best = best.max(ws.weight_of(&m).unwrap() * union_bound_factor(3, m.len()));
        }
        assert!(close(r.value, 0.57 * best, 1e-15));
        assert_eq!(r.inputs.witness, Some(SubsetMask::singleton(1).unwrap()));
    }

    fn consts(c: f64, c_hat: f64) -> WeightConstants {
        WeightConstants {
            c_gamma: c,
            c_hat_gamma: c_hat,
            d_max_used: 1,
            stabilized: true,
            c_gamma_argmax_d: 1,
            c_hat_gamma_argmax_d: 1,
            c_gamma_witness: None,
            c_hat_gamma_witness: None,
        }
    }

    #[test]
    fn corollary1_examples() {
        let r = bound_corollary1(&consts(1.0, 0.0), 1, 252, ConstantKind::C, &params()).unwrap();
        assert!(close(r.value, 1.0, 1e-14));
        let r = bound_corollary1(&consts(0.0, 0.0), 1, 5, ConstantKind::CHat, &params()).unwrap();
        assert_eq!(r.value, 0.0);
        let r = bound_corollary1(&consts(0.0, 2.0), 1, 144, ConstantKind::CHat, &params()).unwrap();
        assert_eq!(r.value, 1.0);
    }

    #[test]
    fn inverse_n_examples() {
        assert_eq!(inverse_n_upper(&consts(0.0, 1.0), 1, 0.6, ConstantKind::CHat).unwrap(), 100);
        assert_eq!(inverse_n_upper(&consts(1.0, 0.0), 1, 0.5, ConstantKind::C).unwrap(), 1008);
        assert_eq!(inverse_n_upper(&consts(0.0, 0.0), 1, 0.5, ConstantKind::CHat).unwrap(), 1);
        assert!(inverse_n_upper(&consts(1.0, 1.0), 1, 1.0, ConstantKind::C).is_err());
    }

    #[test]
    fn lemma1_examples() {
        let q = 1.0 - 1.0 / E;
        assert!(close(lemma1_threshold(1, 100, q).unwrap(), 0.57 * sqrt(5.9), 1e-14));
        let tiny = lemma1_threshold(3, 50, 1e-300).unwrap();
        assert!(close(tiny, 5.7 * sqrt(4.9) * sqrt(3.0) / sqrt(50.0), 1e-14));
        let v = lemma1_threshold(2, 32, 0.5).unwrap();
        assert!(close(v, 5.7 * sqrt(4.9 + ln(2.0) / 2.0) * sqrt(2.0) / sqrt(32.0), 1e-14));
        assert!(lemma1_threshold(2, 32, 1.0).is_err());
    }

    #[test]
    fn lemma2_examples() {
        assert!(close(lemma2_tail(1, 1.0, 1.0).unwrap().raw, libm::exp(-2.0), 1e-14));
        assert!(close(lemma2_tail(2, 2.0, 1.0).unwrap().raw, 2.0 * libm::exp(-8.0), 1e-14));
        assert!(lemma2_tail(3, 50.0, 1.0).unwrap().raw < 1e-300);
        let big = lemma2_tail(1, 0.01, 1.0).unwrap();
        assert!(big.raw < 1.0 || big.clamped == 1.0);
    }

    #[test]
    fn hps_requires_constant() {
        let ws = WeightSystem::classical(2).unwrap();
        assert_eq!(bound_hps(&ws, 2, 4, &params()), Err(BoundError::MissingConstant));
        let p = BoundParams { c_hps: Some(1.0), ..params() };
        let r = bound_hps(&ws, 2, 4, &p).unwrap();
        assert!(close(r.value, (1.0 + sqrt(ln(2.0))) / 2.0 * sqrt(2.0), 1e-14));
    }

    #[test]
    fn binomial_examples() {
        assert_eq!(binomial_subset_bound(4, 2).unwrap().0, 6);
        assert!(close(binomial_subset_bound(4, 2).unwrap().1, (2.0 * E) * (2.0 * E), 1e-14));
        let (c, b) = binomial_subset_bound(7, 7).unwrap();
        assert_eq!(c, 1);
        assert!(close(b, libm::pow(E, 7.0), 1e-14));
        assert_eq!(binomial_subset_bound(100, 50).unwrap().0, 100891344545564193334812497256u128);
        assert!(binomial_subset_bound(3, 4).is_err());
        assert!(matches!(binomial_subset_bound(200, 100), Err(BoundError::Overflow { .. })));
    }

    #[test]
    fn fr_tail_examples() {
        let (p1, c1) = fr_tail_bound(1).unwrap();
        assert!(close(c1, 1.5 * libm::exp(-3.0), 1e-14));
        assert!(p1 <= c1);
        let (_, c2) = fr_tail_bound(2).unwrap();
        assert!(close(c2, libm::exp(-6.0) * 1.4, 1e-14));
    }

    #[test]
    fn union_series_limit() {
        assert!((union_series(40) - 1.0 / (E - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn theorem4_geometric_weights() {
        let ws: WeightSystem = ProductWeights::geometric(0.5).unwrap().into();
        let cert = theorem4_constant(&ws, 1.0, 1.0, &Theorem4Options::default()).unwrap();
        assert_eq!(cert.c_hat, 1.0);
        assert!(cert.total_bound() <= 0.5);
        assert!(cert.c_hat_at_least_one && cert.c_hat_at_least_c2k && cert.log_kx_le_x);
        assert_eq!(cert.discrepancy_constant, 1.0);
    }

    #[test]
    fn theorem4_zero_weights_and_violations() {
        let zero: WeightSystem = ExplicitWeights::default().into();
        let cert = theorem4_constant(&zero, 2.0, 1.5, &Theorem4Options::default()).unwrap();
        assert_eq!(cert.c_hat, 6.0);
        assert_eq!(cert.total_bound(), 0.0);

        let m = SubsetMask::from_indices([1, 2]).unwrap();
        let bad: WeightSystem = ExplicitWeights::new([(m, 5.0)]).unwrap().into();
        let err = theorem4_constant(&bad, 1.0, 1.0, &Theorem4Options::default()).unwrap_err();
        assert!(matches!(err, BoundError::Precondition(ref s) if s.contains("{1,2}")));
    }

    #[test]
    fn theorem4_needs_large_constant_for_slow_weights() {
        let p = ProductWeights::new(vec![0.9; 6], Some(Tail::Geometric { ratio: 0.95 })).unwrap();
        let ws: WeightSystem = p.into();
        let cert = theorem4_constant(&ws, 1.5, 1.0, &Theorem4Options::default()).unwrap();
        assert!(cert.c_hat > 2.25);
        assert!(cert.total_bound() <= 0.5);
    }

    #[test]
    fn theorem2_examples() {
        let p = ProductWeights::geometric(0.5).unwrap();
        let red = theorem2_reduce(&p, 1.0, 64).unwrap();
        assert!(red.normalization.changed.is_empty());
        assert_eq!(red.c_hat, 0.5);
        assert!(red.coordinate_sum <= 0.5);
        assert!(red.subset_sum_bound <= 1.0);

        let slow = ProductWeights::new(vec![1.0], Some(Tail::InverseSqrtLog { c: 1.0 })).unwrap();
        let red = theorem2_reduce(&slow, 6.0, 1 << 12).unwrap();
        assert!(!red.normalization.changed.is_empty());
        assert!(red.coordinate_sum <= 0.5);
        let w = &red.normalization.weights;
        for j in 1..200 {
            assert!(w.gamma(j).unwrap() <= 0.5);
        }
        let j = red.normalization.untouched_from;
        assert_eq!(w.gamma(j).unwrap(), slow.gamma(j).unwrap());
    }

    #[test]
    fn theorem2_rejects_divergent_series() {
        let ones = ProductWeights::new(vec![], Some(Tail::Geometric { ratio: 1.0 })).unwrap();
        assert!(matches!(theorem2_reduce(&ones, 1.0, 64), Err(BoundError::Precondition(_))));
    }

    #[test]
    fn theorem3_examples() {
        let half = ProductWeights::new(vec![0.5], Some(Tail::Geometric { ratio: 1.0 })).unwrap();
        let rows = theorem3_obstruction(&half, 1.0, 0.5, &[2, 4, 10, 40]).unwrap();
        for r in &rows {
            assert!(close(r.lhs, 1.0 / 48.0, 1e-15));
        }
        assert!(rows.iter().all(|r| r.violated == (r.rhs < 1.0 / 48.0)));

        let fast = ProductWeights::geometric(0.5).unwrap();
        let rows = theorem3_obstruction(&fast, 1.0, 0.5, &(1..=20).collect::<Vec<_>>()).unwrap();
        assert!(rows.iter().all(|r| !r.violated));
    }

    #[test]
    fn theorem3_log_weights_violate_for_beta_two() {
        // gamma_j = (ln j)^(-1/8) from j = 2 on, written as a prefix
        let prefix: Vec<f64> = (1..=1u64 << 13)
            .map(|j| if j < 3 { libm::pow(ln(3.0), -0.125) } else { libm::pow(ln(j as f64), -0.125) })
            .collect();
        let p = ProductWeights::finite(prefix).unwrap();
        let rows = theorem3_obstruction(&p, 1.0, 2.0, &[2, 4, 6, 8, 10, 12]).unwrap();
        assert!(rows.iter().any(|r| r.violated));
    }

    #[test]
    fn hps2_single_point() {
        let ps = PointSet::from_rows(&[[0.3, 0.6, 0.2, 0.9]]).unwrap();
        let ws: WeightSystem = ProductWeights::finite(vec![1.0; 4]).unwrap().into();
        let r = hps_lower_bound_check(&ps, &ws, 1.0, &ExactBudget::default()).unwrap();
        assert!(r.holds && r.exact);
        let small = PointSet::from_rows(&[[0.3, 0.6]]).unwrap();
        assert!(matches!(
            hps_lower_bound_check(&small, &ws, 1.0, &ExactBudget::default()),
            Err(BoundError::Precondition(_))
        ));
    }

    #[test]
    fn theorem_ids_round_trip() {
        for id in TheoremId::ALL {
            assert_eq!(TheoremId::parse(id.as_str()), Some(id));
        }
    }

    #[test]
    fn corollary_constants_feed_bounds() {
        let ws: WeightSystem = ProductWeights::geometric(0.5).unwrap().into();
        let k = corollary1_constants(&ws, 8).unwrap();
        assert_eq!(k.c_gamma, 0.5);
        let r = bound_corollary1(&k, 8, 100, ConstantKind::CHat, &params()).unwrap();
        assert_eq!(r.warnings.len(), 1);
    }
}
