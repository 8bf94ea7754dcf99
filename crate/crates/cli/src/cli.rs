//! Command-line interface.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 infeasible (budget or
//! search limit exceeded), 3 a verification failed.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use stardisc_core::bounds::{
    binomial_subset_bound, bound_corollary1, bound_hps, bound_theorem1, fr_tail_bound, hps_lower_bound_check, report_hinrichs,
    report_hnww, report_inverse_n, report_lemma1, report_lemma2, report_power_summability, theorem2_reduce, theorem3_obstruction,
    theorem4_constant, union_series, BoundError, ConstantKind, Theorem4Options,
};
use stardisc_core::construct::{AcceptanceRule, ConstructError, InverseSearchOptions, DEFAULT_MAX_ATTEMPTS};
use stardisc_core::discrepancy::{star_discrepancy_exact, star_discrepancy_strict, weighted_star_discrepancy, DiscrepancyError};
use stardisc_core::rng::mix64;
use stardisc_core::weights::{
    check_power_summability, check_summability, check_theorem4_smallness, corollary1_constants, Smallness, Summability,
    WeightConstants,
};
use stardisc_core::{BoundParams, ExactBudget, Mode, ProductWeights, TheoremId, WeightSystem};

use crate::harness::{self, HarnessError};
use crate::io::{self, FormatError};
use crate::report::{self, ReportError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "stardisc", version, about = "Star-discrepancy computation, bounds and randomized point-set constructions")]
struct Cli {
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Worker threads (default: one per core). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Star-discrepancy (or weighted star-discrepancy) of a point file.
    Compute(ComputeArgs),
    /// Evaluates one bound by identifier.
    Bound(BoundArgs),
    /// Constants and summability conditions of a weight file.
    CheckWeights(CheckWeightsArgs),
    /// Randomized construction meeting a weighted discrepancy bound.
    Construct(ConstructArgs),
    /// Empirical tail (or coverage) probabilities of uniform random points.
    Tail(TailArgs),
    /// Searches for the smallest N with a point set within eps.
    Invn(InvnArgs),
    /// Compares the fast algorithms with brute force on random instances.
    Selftest(SelftestArgs),
}

#[derive(Debug, Args)]
struct ComputeArgs {
    #[arg(long)]
    points: PathBuf,
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Grid-node budget of exact evaluation.
    #[arg(long)]
    budget: Option<u64>,
    /// Use the randomized lower-bound estimator with this many trials.
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Fail with exit code 2 instead of falling back to the estimator.
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Args)]
struct BoundArgs {
    /// Bound identifier, such as `lemma1` or `theorem4`.
    #[arg(long)]
    id: String,
    #[arg(long)]
    d: Option<u64>,
    #[arg(long = "N")]
    n: Option<u64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    r: Option<u64>,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    points: Option<PathBuf>,
    /// Constant of the large-deviation tail bound.
    #[arg(long = "K", default_value_t = 1.0)]
    k: f64,
    /// Smallness or summability exponent constant.
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 10.0)]
    c_abs: f64,
    #[arg(long)]
    c_hps: Option<f64>,
    /// Largest dimension over which weight constants are maximized.
    #[arg(long)]
    d_max: Option<usize>,
    /// Exponent of the power-summability condition.
    #[arg(long, default_value_t = 1.0)]
    a: f64,
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    /// Constant of a claimed polynomial bound.
    #[arg(long = "C", default_value_t = 1.0)]
    big_c: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [1u32, 2, 4, 8, 16, 32])]
    exponents: Vec<u32>,
    #[arg(long, default_value_t = 1 << 16)]
    cutoff: u64,
    #[arg(long)]
    budget: Option<u64>,
}

#[derive(Debug, Args)]
struct CheckWeightsArgs {
    #[arg(long)]
    weights: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long = "K", default_value_t = 1.0)]
    k: f64,
    #[arg(long, default_value_t = 64)]
    d_max: usize,
    #[arg(long, default_value_t = 1 << 16)]
    cutoff: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Rule {
    /// Union-bound thresholds of the general weighted bound.
    #[value(name = "1")]
    One,
    /// Thresholds from a certified summability constant.
    #[value(name = "4")]
    Four,
}

#[derive(Debug, Args)]
struct ConstructArgs {
    #[arg(long, value_enum)]
    theorem: Rule,
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    d: usize,
    #[arg(long = "N")]
    n: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_MAX_ATTEMPTS)]
    max_attempts: u64,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long = "K", default_value_t = 1.0)]
    k: f64,
    /// Use this constant instead of certifying one.
    #[arg(long)]
    c_hat: Option<f64>,
    #[arg(long)]
    budget: Option<u64>,
    /// Writes the point set here and a JSON sidecar to `<out>.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TailArgs {
    #[arg(long)]
    d: usize,
    #[arg(long = "N")]
    n: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0])]
    t: Vec<f64>,
    /// Coverage levels; when given, reports coverage instead of tails.
    #[arg(long, value_delimiter = ',')]
    q: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    trials: u64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "K", default_value_t = 1.0)]
    k: f64,
    #[arg(long)]
    budget: Option<u64>,
    /// Report without failing when a bound is contradicted.
    #[arg(long)]
    no_check: bool,
}

#[derive(Debug, Args)]
struct InvnArgs {
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    d: usize,
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// Random sets tried per N.
    #[arg(long, default_value_t = 8)]
    trials: u64,
    #[arg(long, default_value_t = 1 << 16)]
    max_n: u64,
    #[arg(long)]
    budget: Option<u64>,
}

#[derive(Debug, Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = 200)]
    instances: u64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
}

/// Result of one invocation: exit code and the text for each stream.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Infeasible(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error(transparent)]
    Construct(#[from] ConstructError),
    #[error(transparent)]
    Discrepancy(#[from] DiscrepancyError),
    #[error(transparent)]
    Weight(#[from] stardisc_core::WeightError),
}

impl CliError {
    fn code(&self) -> i32 {
        let infeasible_bound = |e: &BoundError| {
            matches!(
                e,
                BoundError::Overflow { .. } | BoundError::SearchFailed { .. } | BoundError::Discrepancy(DiscrepancyError::BudgetExceeded { .. })
            )
        };
        match self {
            CliError::Infeasible(_) => 2,
            CliError::Discrepancy(DiscrepancyError::BudgetExceeded { .. }) => 2,
            CliError::Harness(HarnessError::Discrepancy(DiscrepancyError::BudgetExceeded { .. })) => 2,
            CliError::Construct(ConstructError::Discrepancy(DiscrepancyError::BudgetExceeded { .. })) => 2,
            CliError::Bound(e) if infeasible_bound(e) => 2,
            _ => 1,
        }
    }
}

struct Ctx {
    format: Format,
    out: Outcome,
}

impl Ctx {
    fn emit<T: Serialize>(&mut self, kind: &str, data: &T) -> Result<(), CliError> {
        let text = match self.format {
            Format::Json => report::to_json(kind, data)? + "\n",
            Format::Csv => report::to_csv(std::slice::from_ref(data))?,
        };
        self.out.stdout.push_str(&text);
        Ok(())
    }

    fn emit_all<T: Serialize>(&mut self, kind: &str, data: &[T]) -> Result<(), CliError> {
        let text = match self.format {
            Format::Json => report::to_json(kind, &data)? + "\n",
            Format::Csv => report::to_csv(data)?,
        };
        self.out.stdout.push_str(&text);
        Ok(())
    }

    fn warn(&mut self, msg: impl AsRef<str>) {
        self.out.stderr.push_str("stardisc: ");
        self.out.stderr.push_str(msg.as_ref());
        self.out.stderr.push('\n');
    }

    fn fail(&mut self, msg: impl AsRef<str>) {
        self.warn(msg);
        self.out.code = 3;
    }

    /// The given seed, or a fresh one that is reported so the run can be
    /// repeated.
    fn seed(&mut self, seed: Option<u64>) -> u64 {
        seed.unwrap_or_else(|| {
            let nanos = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_nanos() as u64);
            let s = mix64(nanos ^ (std::process::id() as u64).rotate_left(32));
            self.warn(format!("seed {s}"));
            s
        })
    }
}

fn budget(max_nodes: Option<u64>, seed: u64) -> ExactBudget {
    let d = ExactBudget::default();
    ExactBudget { max_nodes: max_nodes.unwrap_or(d.max_nodes), fallback_seed: seed, ..d }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            return if code == 0 {
                Outcome { code, stdout: text, stderr: String::new() }
            } else {
                Outcome { code, stdout: String::new(), stderr: text }
            };
        }
    };
    let mut ctx = Ctx { format: cli.format, out: Outcome::default() };
    let workers = cli.workers;
    if workers == Some(0) {
        ctx.warn("--workers must be at least 1");
        ctx.out.code = 1;
        return ctx.out;
    }
    let result = harness::with_workers(workers, || {
        let r = dispatch(&mut ctx, cli.command);
        (r, ctx)
    });
    match result {
        Ok((Ok(()), ctx)) => ctx.out,
        Ok((Err(e), mut ctx)) => {
            ctx.warn(format!("error: {e}"));
            ctx.out.code = e.code();
            ctx.out
        }
        Err(e) => Outcome { code: 1, stdout: String::new(), stderr: format!("stardisc: error: {e}\n") },
    }
}

fn dispatch(ctx: &mut Ctx, cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Compute(a) => compute(ctx, a),
        Command::Bound(a) => bound(ctx, a),
        Command::CheckWeights(a) => check_weights(ctx, a),
        Command::Construct(a) => construct(ctx, a),
        Command::Tail(a) => tail(ctx, a),
        Command::Invn(a) => invn(ctx, a),
        Command::Selftest(a) => selftest(ctx, a),
    }
}

fn compute(ctx: &mut Ctx, a: ComputeArgs) -> Result<(), CliError> {
    let ps = io::read_points(&a.points)?;
    let ws = a.weights.as_deref().map(io::read_weights).transpose()?;
    let needs_seed = a.trials.is_some() || !a.strict;
    let seed = if needs_seed { ctx.seed(a.seed) } else { a.seed.unwrap_or(0) };
    let b = budget(a.budget, seed);
    let r = match (ws, a.trials) {
        (None, Some(effort)) => harness::estimate_parallel(&ps, effort, seed)?,
        (None, None) if a.strict => star_discrepancy_strict(&ps, b.max_nodes)?,
        (None, None) => star_discrepancy_exact(&ps, &b)?,
        (Some(ws), trials) => {
            let mode = trials.map_or(Mode::Exact, |effort| Mode::Estimate { effort, seed });
            let r = weighted_star_discrepancy(&ps, &ws, mode, &b)?;
            if a.strict && !r.exact {
                return Err(CliError::Infeasible(format!("exact evaluation exceeds the budget of {} nodes", b.max_nodes)));
            }
            r
        }
    };
    if !r.exact {
        ctx.warn("value is an estimator lower bound, not the exact discrepancy");
    }
    ctx.emit("discrepancy", &r)
}

fn need<T>(x: Option<T>, name: &str) -> Result<T, CliError> {
    x.ok_or_else(|| CliError::Usage(format!("--{name} is required for this bound")))
}

fn product(ws: &WeightSystem) -> Result<&ProductWeights, CliError> {
    match ws {
        WeightSystem::Product(p) => Ok(p),
        WeightSystem::Explicit(_) => Err(CliError::Usage("this bound needs product weights".into())),
    }
}

#[derive(Serialize)]
struct Theorem2View {
    c_used: f64,
    c_hat: f64,
    coordinate_sum: f64,
    subset_sum_bound: f64,
    changed: Vec<u64>,
    untouched_from: u64,
    normalized_prefix: Vec<f64>,
    warnings: Vec<String>,
}

#[derive(Serialize)]
struct BinomialView {
    d: u64,
    r: u64,
    /// Exact binomial coefficient, as a decimal string.
    exact: String,
    estimate: f64,
    holds: bool,
}

#[derive(Serialize)]
struct FrTailView {
    r: u64,
    partial: f64,
    closed: f64,
}

#[derive(Serialize)]
struct UnionSeriesView {
    r_max: u64,
    value: f64,
}

fn bound(ctx: &mut Ctx, a: BoundArgs) -> Result<(), CliError> {
    let Some(id) = TheoremId::parse(&a.id) else {
        let names: Vec<&str> = TheoremId::ALL.iter().map(|t| t.as_str()).collect();
        return Err(CliError::Usage(format!("unknown bound {:?}; expected one of {}", a.id, names.join(", "))));
    };
    let params = BoundParams { k_talagrand: a.k, c_abs_hnww: a.c_abs, c_hps: a.c_hps, c_user: a.c, c_hat: None };
    let ws = a.weights.as_deref().map(io::read_weights).transpose()?;
    let weights = || ws.as_ref().ok_or_else(|| CliError::Usage("--weights is required for this bound".into()));
    let report = match id {
        TheoremId::Hnww => report_hnww(need(a.d, "d")?, need(a.n, "N")?, &params)?,
        TheoremId::Hinrichs => report_hinrichs(need(a.d, "d")?, need(a.eps, "eps")?, &params)?,
        TheoremId::Hps => bound_hps(weights()?, need(a.d, "d")?, need(a.n, "N")?, &params)?,
        TheoremId::Hps2 => {
            let ps = io::read_points(&need(a.points, "points")?)?;
            let check = hps_lower_bound_check(&ps, weights()?, a.c, &budget(a.budget, 0))?;
            if check.exact && !check.holds {
                ctx.fail(format!("weighted discrepancy {} is below {}", check.value, check.threshold));
            }
            return ctx.emit("hps2_check", &check);
        }
        TheoremId::Hps3 => report_power_summability(product(weights()?)?, 1.0, a.cutoff, &params)?.0,
        TheoremId::Hswcond => report_power_summability(product(weights()?)?, a.a, a.cutoff, &params)?.0,
        TheoremId::Theorem1 => bound_theorem1(weights()?, need(a.d, "d")?, need(a.n, "N")?, &params)?,
        TheoremId::Corollary1C | TheoremId::Corollary1CHat | TheoremId::InverseNC | TheoremId::InverseNCHat => {
            let d = need(a.d, "d")?;
            let consts = corollary1_constants(weights()?, a.d_max.unwrap_or(d as usize).max(1))?;
            let which = if matches!(id, TheoremId::Corollary1C | TheoremId::InverseNC) { ConstantKind::C } else { ConstantKind::CHat };
            if matches!(id, TheoremId::Corollary1C | TheoremId::Corollary1CHat) {
                bound_corollary1(&consts, d, need(a.n, "N")?, which, &params)?
            } else {
                report_inverse_n(&consts, d, need(a.eps, "eps")?, which, &params)?
            }
        }
        TheoremId::Lemma1 => report_lemma1(need(a.d, "d")?, need(a.n, "N")?, need(a.q, "q")?, &params)?,
        TheoremId::Lemma2 => report_lemma2(need(a.d, "d")?, need(a.t, "t")?, &params)?,
        TheoremId::Theorem2 => {
            let r = theorem2_reduce(product(weights()?)?, a.c, a.cutoff)?;
            let view = Theorem2View {
                c_used: r.c_used,
                c_hat: r.c_hat,
                coordinate_sum: r.coordinate_sum,
                subset_sum_bound: r.subset_sum_bound,
                changed: r.normalization.changed.clone(),
                untouched_from: r.normalization.untouched_from,
                normalized_prefix: r.normalization.weights.prefix().to_vec(),
                warnings: r.warnings,
            };
            return ctx.emit("theorem2_reduction", &view);
        }
        TheoremId::Theorem3 => {
            let obs = theorem3_obstruction(product(weights()?)?, a.big_c, a.beta, &a.exponents)?;
            return ctx.emit_all("obstruction", &obs);
        }
        TheoremId::Theorem4 => {
            let opts = Theorem4Options { d_max: a.d_max.unwrap_or(Theorem4Options::default().d_max), cutoff: a.cutoff, ..Default::default() };
            let cert = theorem4_constant(weights()?, a.c, a.k, &opts)?;
            return ctx.emit("theorem4_certificate", &cert);
        }
        TheoremId::Binomial => {
            let (d, r) = (need(a.d, "d")?, need(a.r, "r")?);
            let (exact, estimate) = binomial_subset_bound(d, r)?;
            let view = BinomialView { d, r, exact: exact.to_string(), estimate, holds: exact as f64 <= estimate };
            return ctx.emit("binomial", &view);
        }
        TheoremId::FrTail => {
            let r = need(a.r, "r")?;
            let (partial, closed) = fr_tail_bound(r)?;
            return ctx.emit("fr_tail", &FrTailView { r, partial, closed });
        }
        TheoremId::UnionSeries => {
            let r_max = need(a.r, "r")?;
            return ctx.emit("union_series", &UnionSeriesView { r_max, value: union_series(r_max) });
        }
    };
    for w in &report.warnings {
        ctx.warn(w);
    }
    ctx.emit("bound", &report)
}

#[derive(Serialize)]
struct WeightCheck {
    kind: &'static str,
    constants: WeightConstants,
    non_increasing: Option<bool>,
    summability: Summability,
    power_summability: Option<Summability>,
    smallness: Smallness,
    theorem4: Option<stardisc_core::bounds::Theorem4Certificate>,
    theorem4_error: Option<String>,
}

fn check_weights(ctx: &mut Ctx, a: CheckWeightsArgs) -> Result<(), CliError> {
    let ws = io::read_weights(&a.weights)?;
    let constants = corollary1_constants(&ws, a.d_max.max(1))?;
    if !constants.stabilized {
        ctx.warn(format!("weight constants still growing at d = {}", constants.d_max_used));
    }
    let (kind, non_increasing, power_summability) = match &ws {
        WeightSystem::Product(p) => ("product", Some(p.check_non_increasing().is_ok()), Some(check_power_summability(p, 1.0, a.cutoff)?)),
        WeightSystem::Explicit(_) => ("explicit", None, None),
    };
    let opts = Theorem4Options { d_max: a.d_max, cutoff: a.cutoff, ..Default::default() };
    let (theorem4, theorem4_error) = match theorem4_constant(&ws, a.c, a.k, &opts) {
        Ok(c) => (Some(c), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let check = WeightCheck {
        kind,
        summability: check_summability(&ws, a.c, a.cutoff)?,
        smallness: check_theorem4_smallness(&ws, a.c, a.d_max)?,
        constants,
        non_increasing,
        power_summability,
        theorem4,
        theorem4_error,
    };
    ctx.emit("weight_check", &check)
}

#[derive(Serialize)]
struct ConstructionSidecar<'a> {
    rule: AcceptanceRule,
    d: usize,
    n: usize,
    seed: u64,
    max_attempts: u64,
    attempts: u64,
    target: f64,
    achieved: f64,
    accepted: bool,
    weights: &'a str,
}

fn construct(ctx: &mut Ctx, a: ConstructArgs) -> Result<(), CliError> {
    let ws = io::read_weights(&a.weights)?;
    let seed = ctx.seed(a.seed);
    let rule = match a.theorem {
        Rule::One => AcceptanceRule::Theorem1,
        Rule::Four => {
            let c_hat = match a.c_hat {
                Some(c) => c,
                None => theorem4_constant(&ws, a.c, a.k, &Theorem4Options::default())?.c_hat,
            };
            AcceptanceRule::Theorem4 { c_hat }
        }
    };
    let max_nodes = a.budget.unwrap_or(ExactBudget::default().max_nodes);
    let outcome = match harness::construct_parallel(&ws, rule, a.d, a.n, seed, a.max_attempts, max_nodes) {
        Ok(o) => o,
        Err(ConstructError::Exhausted { attempts, best }) => {
            ctx.fail(format!("no attempt out of {attempts} met every threshold; reporting the closest"));
            *best
        }
        Err(e) => return Err(e.into()),
    };
    if let Some(out) = &a.out {
        io::write_file(out, &io::write_points(&outcome.points))?;
        let sidecar = ConstructionSidecar {
            rule,
            d: a.d,
            n: a.n,
            seed,
            max_attempts: a.max_attempts,
            attempts: outcome.attempts,
            target: outcome.target,
            achieved: outcome.achieved,
            accepted: outcome.accepted,
            weights: &io::write_weights(&ws),
        };
        let mut path = out.clone().into_os_string();
        path.push(".json");
        io::write_file(&PathBuf::from(path), &(report::to_json("construction_sidecar", &sidecar)? + "\n"))?;
    }
    ctx.emit("construction", &outcome)
}

fn tail(ctx: &mut Ctx, a: TailArgs) -> Result<(), CliError> {
    let seed = ctx.seed(a.seed);
    let b = budget(a.budget, seed);
    if a.d == 0 || a.n == 0 {
        return Err(CliError::Usage("d and N must be at least 1".into()));
    }
    if !a.q.is_empty() {
        let checks = harness::coverage_experiment(a.d, a.n, &a.q, a.trials, seed, &b)?;
        for c in checks.iter().filter(|c| !c.holds && !a.no_check) {
            let msg = format!("coverage at q = {} is {} (interval upper end {})", c.q, c.fraction, c.wilson_hi);
            ctx.fail(msg);
        }
        return ctx.emit_all("coverage", &checks);
    }
    let est = harness::tail_experiment(a.d, a.n, &a.t, a.trials, seed, a.k, &b)?;
    for e in est.iter().filter(|e| !e.holds && !a.no_check) {
        let msg = format!("tail at t = {}: p_hat {} exceeds bound {} (relative to configured K = {})", e.t, e.p_hat, e.bound_value, e.k);
        ctx.fail(msg);
    }
    ctx.emit_all("tail", &est)
}

fn invn(ctx: &mut Ctx, a: InvnArgs) -> Result<(), CliError> {
    let ws = io::read_weights(&a.weights)?;
    let seed = ctx.seed(a.seed);
    let opts = InverseSearchOptions { tries: a.trials, max_n: a.max_n, budget: budget(a.budget, seed) };
    let r = match stardisc_core::construct::search_inverse_n(&ws, a.d, a.eps, seed, &opts) {
        Err(ConstructError::InvalidArgument(msg)) if msg.contains("max_n") => return Err(CliError::Infeasible(msg.into())),
        r => r?,
    };
    if !r.c_hat_stabilized {
        ctx.warn("weight constant not stabilized; formula evaluated at the requested d");
    }
    if let Some(f) = r.upper_bound_formula {
        if r.n_achieved > f && !r.caveat {
            ctx.fail(format!("search needed N = {} above the formula value {f}", r.n_achieved));
        }
    }
    ctx.emit("inverse_search", &r)
}

fn selftest(ctx: &mut Ctx, a: SelftestArgs) -> Result<(), CliError> {
    let seed = ctx.seed(a.seed);
    let r = harness::selftest(a.instances, seed, a.tol)?;
    if !r.passed {
        ctx.fail(format!("{} of {} instances disagree with brute force", r.failures, r.instances));
    }
    ctx.emit("selftest", &r)
}
