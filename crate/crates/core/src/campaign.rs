//! Monte Carlo campaigns and exact tables behind the command-line tool.

use std::collections::BTreeMap;
use std::io::{self, Write};

use rayon::ThreadPoolBuildError;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exact::{
    self, expectations, first_activation_marginals, gamma_law_moments, pmf_n_gamma, ExactError,
    ExactPmf, Functional,
};
use crate::laws::{ks_distance, LawError, LimitLaw};
use crate::model::{BlockState, EventKind, ModelParams, Variant};
use crate::report::{fmt_f64, Record, Report};
use crate::rng::RngSpec;
use crate::runner::{mean_se, run_replicates};
use crate::sampling::{
    self, enumerate_law, expected_old, expected_recent, hoppe_urn_sample, marginal_old_probability,
    pgf_z, tv_to_formula, Configuration, SamplingError,
};
use crate::simulator::{
    check_start, drive, first_deactivation_ladder, mutations_from_lengths, simulate_partition,
    Observer, SimError, SimOptions, SnapshotPolicy, StopCondition, TerminalReason,
};
use crate::stats::{spectrum_at_first_activation, SnapshotConvention, SpectrumError, SummaryTracker};

/// Default largest `n` for exact expectation tables.
pub const EXACT_CAP: u32 = 5000;

const MUTATION_SALT: u64 = 0x6d75;

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Exact(#[from] ExactError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error(transparent)]
    Law(#[from] LawError),
    #[error("cannot build worker pool: {0}")]
    Pool(#[from] ThreadPoolBuildError),
    #[error("n = {n} exceeds the cap of {cap} for exact tables")]
    CapExceeded { n: u32, cap: u32 },
    #[error("{0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, CampaignError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulateConfig {
    pub n: u32,
    pub reps: u64,
    pub params: ModelParams,
    pub variant: Variant,
    pub stop: StopCondition,
    pub seed: u64,
    pub threads: Option<usize>,
    pub options: SimOptions,
}

/// One output row per replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub replicate: u64,
    pub gamma: Option<f64>,
    pub theta: Option<f64>,
    pub sigma: Option<f64>,
    pub n_at_gamma: Option<u32>,
    pub n_at_theta: Option<u32>,
    pub m_at_theta: Option<u32>,
    pub sup_seeds: u32,
    #[serde(rename = "A")]
    pub active: Option<f64>,
    #[serde(rename = "I")]
    pub inactive: Option<f64>,
    #[serde(rename = "L")]
    pub total: Option<f64>,
    #[serde(rename = "S_active")]
    pub s_active: Option<u64>,
    #[serde(rename = "S_inactive")]
    pub s_inactive: Option<u64>,
    pub terminal_reason: TerminalReason,
}

pub fn simulate_campaign(cfg: &SimulateConfig) -> Result<Vec<ReplicateRow>> {
    if cfg.reps == 0 {
        return Err(CampaignError::Config("replicate count must be at least 1".into()));
    }
    let start = BlockState::new(cfg.n, 0);
    check_start(start, cfg.variant, cfg.stop)?;
    let budget = cfg.options.budget_for(cfg.n);
    let rows = run_replicates(cfg.reps, cfg.threads, |r| {
        let spec = RngSpec::new(cfg.seed, r);
        let mut rng = spec.rng();
        let mut tracker = SummaryTracker::new(start);
        let end = drive(start, &cfg.params, cfg.variant, cfg.stop, budget, &mut rng, &mut tracker);
        let s = tracker.summary();
        let lengths = tracker.lengths();
        let mutations = lengths.map(|l| mutations_from_lengths(&l, &cfg.params, spec.derive(MUTATION_SALT)));
        ReplicateRow {
            replicate: r,
            gamma: s.gamma,
            theta: s.theta,
            sigma: s.sigma,
            n_at_gamma: s.n_at_gamma,
            n_at_theta: s.n_at_theta,
            m_at_theta: s.m_at_theta,
            sup_seeds: s.sup_seeds,
            active: lengths.map(|l| l.active),
            inactive: lengths.map(|l| l.inactive),
            total: lengths.map(|l| l.total),
            s_active: mutations.map(|m| m.active),
            s_inactive: mutations.map(|m| m.inactive),
            terminal_reason: end.reason,
        }
    })?;
    Ok(rows)
}

fn cell<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fcell(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub const ROW_HEADER: &str =
    "replicate,gamma,theta,sigma,n_at_gamma,n_at_theta,m_at_theta,sup_seeds,A,I,L,S_active,S_inactive";

/// Per-replicate CSV; quantities not reached by the run are left empty.
pub fn write_rows_csv<W: Write>(mut out: W, rows: &[ReplicateRow]) -> io::Result<()> {
    writeln!(out, "{ROW_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.replicate,
            fcell(r.gamma),
            fcell(r.theta),
            fcell(r.sigma),
            cell(r.n_at_gamma),
            cell(r.n_at_theta),
            cell(r.m_at_theta),
            r.sup_seeds,
            fcell(r.active),
            fcell(r.inactive),
            fcell(r.total),
            cell(r.s_active),
            cell(r.s_inactive),
        )?;
    }
    Ok(())
}

/// The rows as a JSON array, with the terminal reason of each replicate.
pub fn write_rows_json<W: Write>(mut out: W, rows: &[ReplicateRow]) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut out, rows)?;
    writeln!(out)
}

/// Empirical quantile by the nearest-rank rule.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let idx = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}

/// Means, standard errors and empirical deciles of a simulate campaign,
/// with exact references where the DP tables apply.
pub fn simulate_report(cfg: &SimulateConfig, rows: &[ReplicateRow]) -> Result<Report> {
    let p = &cfg.params;
    let exact_refs = if cfg.stop == StopCondition::Absorption
        && cfg.variant == Variant::Standard
        && cfg.n >= 2
        && cfg.n <= EXACT_CAP
    {
        let s = exact::exact_summary(cfg.n, p)?;
        Some(s)
    } else {
        None
    };
    type Column = fn(&ReplicateRow) -> Option<f64>;
    let columns: [(&str, Column, Option<f64>); 7] = [
        ("gamma", |r| r.gamma, None),
        ("theta", |r| r.theta, None),
        ("sigma", |r| r.sigma, exact_refs.map(|s| s.expected_height)),
        ("A", |r| r.active, exact_refs.map(|s| s.expected_active)),
        ("I", |r| r.inactive, exact_refs.map(|s| s.expected_inactive)),
        ("L", |r| r.total, exact_refs.map(|s| s.expected_total)),
        (
            "S",
            |r| Some((r.s_active? + r.s_inactive?) as f64),
            exact_refs.map(|s| p.mu_active * s.expected_active + p.mu_inactive * s.expected_inactive),
        ),
    ];
    let mut rep = Report::default();
    for (name, get, reference) in &columns {
        let mut xs: Vec<f64> = rows.iter().filter_map(get).collect();
        if xs.is_empty() {
            continue;
        }
        let (mean, se) = mean_se(&xs);
        let mut rec = Record::new("simulate", format!("mean_{name}"), mean)
            .n(cfg.n)
            .params(p.c1, p.c2)
            .mc(xs.len() as u64, cfg.seed);
        if se.is_finite() {
            rec = rec.se(se);
        }
        if let Some(r) = reference {
            rec = rec.reference(*r);
            if se.is_finite() {
                rec = rec.within(3.0 * se);
            }
        }
        rep.push(rec);
        xs.sort_unstable_by(f64::total_cmp);
        for q in [0.1, 0.25, 0.5, 0.75, 0.9] {
            rep.push(
                Record::new("simulate", format!("q{:02}_{name}", (q * 100.0) as u32), quantile_sorted(&xs, q))
                    .n(cfg.n)
                    .params(p.c1, p.c2)
                    .mc(xs.len() as u64, cfg.seed),
            );
        }
    }
    let over_budget = rows
        .iter()
        .filter(|r| r.terminal_reason == TerminalReason::EventBudgetExceeded)
        .count();
    rep.push(
        Record::new("simulate", "budget_exceeded", over_budget as f64)
            .n(cfg.n)
            .params(p.c1, p.c2)
            .mc(cfg.reps, cfg.seed)
            .verdict(over_budget == 0),
    );
    Ok(rep)
}

/// True when every element is strictly below its predecessor.
pub fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

/// Exact expectations over an `n` grid with the normalized ratios
/// `E[A]/(2 ln n)`, `E[I]/((2 c1/c2) ln n)`, `E[L]/(2 (1 + c1/c2) ln n)`,
/// plus the law of `N(gamma)` and the moments of its time limit.
pub fn exact_report(n_grid: &[u32], params: &ModelParams, cap: u32) -> Result<Report> {
    let mut rep = Report::default();
    let (c1, c2) = (params.c1, params.c2);
    let mut ratio_devs: [Vec<f64>; 3] = Default::default();
    for &n in n_grid {
        if n > cap {
            return Err(CampaignError::CapExceeded { n, cap });
        }
        let s = exact::exact_summary(n, params)?;
        let rec = |q: &str, v: f64| Record::new("exact", q, v).n(n).params(c1, c2);
        rep.push(rec("E_A", s.expected_active));
        rep.push(rec("E_I", s.expected_inactive));
        rep.push(rec("E_L", s.expected_total));
        rep.push(rec("E_sigma", s.expected_height));
        rep.push(rec("balance_residual", s.balance_residual).within(1e-10));
        let ln = f64::from(n).ln();
        let ratios = [
            ("ratio_A", s.expected_active / (2.0 * ln)),
            ("ratio_I", s.expected_inactive / (2.0 * c1 / c2 * ln)),
            ("ratio_L", s.expected_total / (2.0 * (1.0 + c1 / c2) * ln)),
        ];
        for (k, (q, r)) in ratios.into_iter().enumerate() {
            rep.push(rec(q, r).reference(1.0));
            ratio_devs[k].push((r - 1.0).abs());
        }
        let pmf = pmf_n_gamma(n, c1)?;
        rep.push(rec("n_gamma_pmf_total", pmf.total()).reference(1.0).within(1e-12));
        rep.push(rec("n_gamma_mean", pmf.mean()));
        rep.push(rec("n_gamma_beta_sup_distance", exact::n_gamma_beta_distance(n, c1)?));
    }
    if n_grid.len() >= 2 {
        for (q, devs) in ["ratio_A", "ratio_I", "ratio_L"].iter().zip(&ratio_devs) {
            rep.push(
                Record::new("exact", format!("trend_{q}"), *devs.last().unwrap())
                    .params(c1, c2)
                    .verdict(strictly_decreasing(devs)),
            );
        }
    }
    let law = LimitLaw::gamma(c1);
    let (mean, var) = gamma_law_moments(c1);
    if let Some(m) = mean {
        let quad = law.expect(|x| x);
        rep.push(
            Record::new("exact", "gamma_law_mean", m)
                .params(c1, c2)
                .reference(quad)
                .within(1e-6),
        );
        if let Some(v) = var {
            let quad_var = law.expect(|x| x * x) - quad * quad;
            rep.push(
                Record::new("exact", "gamma_law_variance", v)
                    .params(c1, c2)
                    .reference(quad_var)
                    .within(1e-6),
            );
        }
    }
    Ok(rep)
}

/// CSV `m,probability,cdf,limit_cdf` for `N(gamma)` with the Beta limit
/// evaluated at `m / n`.
pub fn write_n_gamma_pmf_csv<W: Write>(mut out: W, n: u32, c1: f64) -> Result<()> {
    let pmf = pmf_n_gamma(n, c1)?;
    let cdf = pmf.cdf();
    let beta = LimitLaw::beta(c1);
    let io = |e: io::Error| CampaignError::Config(e.to_string());
    writeln!(out, "m,probability,cdf,limit_cdf").map_err(io)?;
    for ((m, p), f) in pmf.support().zip(cdf) {
        let limit = beta.cdf(f64::from(m) / f64::from(n));
        writeln!(out, "{},{},{},{}", m, fmt_f64(p), fmt_f64(f), fmt_f64(limit)).map_err(io)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// stopping-time samples

/// `(N(gamma), gamma)` for `reps` replicates from the direct sampler.
pub fn gamma_samples(n: u32, c1: f64, reps: u64, seed: u64, threads: Option<usize>) -> Result<Vec<(u32, f64)>> {
    if n < 2 {
        return Err(SimError::SampleTooSmall { min: 2, got: n }.into());
    }
    Ok(run_replicates(reps, threads, |r| {
        first_deactivation_ladder(n, c1, &mut RngSpec::new(seed, r).rng())
    })?)
}

/// `(N(gamma), gamma)` from full chain runs stopped at the first deactivation.
pub fn gamma_samples_chain(
    n: u32,
    params: &ModelParams,
    reps: u64,
    seed: u64,
    threads: Option<usize>,
) -> Result<Vec<(u32, f64)>> {
    let start = BlockState::new(n, 0);
    check_start(start, Variant::Standard, StopCondition::FirstDeactivation)?;
    let budget = SimOptions::default().budget_for(n);
    Ok(run_replicates(reps, threads, |r| {
        let mut obs = FirstEvent::new(EventKind::Deactivation);
        drive(
            start,
            params,
            Variant::Standard,
            StopCondition::FirstDeactivation,
            budget,
            &mut RngSpec::new(seed, r).rng(),
            &mut obs,
        );
        let hit = obs.hit.expect("first deactivation is almost surely finite");
        (hit.after.plants, hit.time)
    })?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Hit {
    time: f64,
    before: BlockState,
    after: BlockState,
}

/// Remembers the first event of one kind.
struct FirstEvent {
    kind: EventKind,
    hit: Option<Hit>,
}

impl FirstEvent {
    fn new(kind: EventKind) -> Self {
        FirstEvent { kind, hit: None }
    }
}

impl Observer for FirstEvent {
    #[inline]
    fn on_event(&mut self, time: f64, kind: EventKind, before: BlockState, after: BlockState) {
        if kind == self.kind && self.hit.is_none() {
            self.hit = Some(Hit { time, before, after });
        }
    }
}

/// At the first activation: `theta`, plants right after, seeds right before.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaDraw {
    pub theta: f64,
    pub n_at_theta: u32,
    pub m_at_theta: u32,
}

pub fn theta_samples(
    n: u32,
    params: &ModelParams,
    reps: u64,
    seed: u64,
    threads: Option<usize>,
) -> Result<Vec<ThetaDraw>> {
    let start = BlockState::new(n, 0);
    check_start(start, Variant::Standard, StopCondition::FirstActivation)?;
    let budget = SimOptions::default().budget_for(n);
    Ok(run_replicates(reps, threads, |r| {
        let mut obs = FirstEvent::new(EventKind::Activation);
        drive(
            start,
            params,
            Variant::Standard,
            StopCondition::FirstActivation,
            budget,
            &mut RngSpec::new(seed, r).rng(),
            &mut obs,
        );
        let hit = obs.hit.expect("first activation is almost surely finite");
        ThetaDraw {
            theta: hit.time,
            n_at_theta: hit.after.plants,
            m_at_theta: hit.before.seeds,
        }
    })?)
}

/// Kolmogorov distance between the law of `scale * X` for an integer
/// `X ~ pmf` and a continuous law.
pub fn ks_pmf_vs_law(pmf: &ExactPmf, scale: f64, law: &LimitLaw) -> f64 {
    let mut below = 0.0;
    let mut d: f64 = 0.0;
    for (x, p) in pmf.support() {
        let f = law.cdf(scale * f64::from(x));
        d = d.max((f - below).abs());
        below += p;
        d = d.max((below - f).abs());
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LawsConfig {
    pub reps: u64,
    pub params: ModelParams,
    pub seed: u64,
    pub threads: Option<usize>,
}

/// Distances to the first-deactivation limits at one `n`.
pub fn gamma_law_records(n: u32, cfg: &LawsConfig) -> Result<Vec<Record>> {
    let c1 = cfg.params.c1;
    let draws = gamma_samples(n, c1, cfg.reps, cfg.seed, cfg.threads)?;
    let scaled_time: Vec<f64> = draws.iter().map(|&(_, g)| f64::from(n) * g).collect();
    let fraction: Vec<f64> = draws.iter().map(|&(m, _)| f64::from(m) / f64::from(n)).collect();
    let base = |q: &str, v: f64| {
        Record::new("laws", q, v)
            .n(n)
            .params(c1, cfg.params.c2)
            .mc(cfg.reps, cfg.seed)
    };
    Ok(vec![
        base("ks_n_gamma_time_vs_gamma_law", ks_distance(&scaled_time, &LimitLaw::gamma(c1))?),
        base("ks_n_at_gamma_over_n_vs_beta", ks_distance(&fraction, &LimitLaw::beta(c1))?),
    ])
}

/// Per-`n` measurements at the first activation.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaLawPoint {
    pub n: u32,
    pub ks_time: f64,
    pub ks_plants: f64,
    pub mean_seeds_ratio: f64,
    pub se_seeds_ratio: f64,
    pub exact_seeds_ratio: f64,
    pub exact_ks_plants: f64,
}

pub fn theta_law_point(n: u32, cfg: &LawsConfig) -> Result<ThetaLawPoint> {
    let (c1, c2) = (cfg.params.c1, cfg.params.c2);
    let ln = f64::from(n).ln();
    let draws = theta_samples(n, &cfg.params, cfg.reps, cfg.seed, cfg.threads)?;
    let time: Vec<f64> = draws.iter().map(|d| d.theta * ln).collect();
    let plants: Vec<f64> = draws.iter().map(|d| f64::from(d.n_at_theta) / ln).collect();
    let seeds: Vec<f64> = draws.iter().map(|d| f64::from(d.m_at_theta) / ln).collect();
    let (mean, se) = mean_se(&seeds);
    let (plants_before, seeds_before) = first_activation_marginals(n, &cfg.params);
    // plants after the activation are one more than before it
    let plants_after = ExactPmf {
        offset: plants_before.offset + 1,
        probabilities: plants_before.probabilities.clone(),
    };
    let frechet = LimitLaw::frechet(c1, c2);
    Ok(ThetaLawPoint {
        n,
        ks_time: ks_distance(&time, &LimitLaw::exponential(c1, c2))?,
        ks_plants: ks_distance(&plants, &frechet)?,
        mean_seeds_ratio: mean,
        se_seeds_ratio: se,
        exact_seeds_ratio: seeds_before.mean() / ln,
        exact_ks_plants: ks_pmf_vs_law(&plants_after, 1.0 / ln, &frechet),
    })
}

impl ThetaLawPoint {
    pub fn records(&self, cfg: &LawsConfig) -> Vec<Record> {
        let (c1, c2) = (cfg.params.c1, cfg.params.c2);
        let base = |q: &str, v: f64| {
            Record::new("laws", q, v)
                .n(self.n)
                .params(c1, c2)
                .mc(cfg.reps, cfg.seed)
        };
        vec![
            base("ks_theta_log_n_vs_exponential", self.ks_time),
            base("ks_n_at_theta_over_log_n_vs_frechet", self.ks_plants),
            base("mean_m_at_theta_over_log_n", self.mean_seeds_ratio)
                .se(self.se_seeds_ratio)
                .reference(2.0 * c1),
            Record::new("laws", "exact_mean_m_at_theta_over_log_n", self.exact_seeds_ratio)
                .n(self.n)
                .params(c1, c2)
                .reference(2.0 * c1),
            Record::new("laws", "exact_ks_n_at_theta_over_log_n_vs_frechet", self.exact_ks_plants)
                .n(self.n)
                .params(c1, c2),
        ]
    }
}

/// Table of the stopping-time limit laws over an `n` grid.
pub fn laws_report(n_grid: &[u32], cfg: &LawsConfig) -> Result<Report> {
    let mut rep = Report::default();
    let mut points = Vec::new();
    for &n in n_grid {
        rep.records.extend(gamma_law_records(n, cfg)?);
        let point = theta_law_point(n, cfg)?;
        rep.records.extend(point.records(cfg));
        points.push(point);
    }
    if points.len() >= 2 {
        let (c1, c2) = (cfg.params.c1, cfg.params.c2);
        let t: Vec<f64> = points.iter().map(|p| p.ks_time).collect();
        let z: Vec<f64> = points.iter().map(|p| p.ks_plants).collect();
        rep.push(
            Record::new("laws", "trend_ks_theta_log_n", *t.last().unwrap())
                .params(c1, c2)
                .verdict(strictly_decreasing(&t)),
        );
        rep.push(
            Record::new("laws", "trend_ks_n_at_theta", *z.last().unwrap())
                .params(c1, c2)
                .verdict(strictly_decreasing(&z)),
        );
    }
    Ok(rep)
}

// ---------------------------------------------------------------------------
// sampling formula

/// Largest absolute differences between the closed forms and enumeration
/// at one `(k, n)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormulaCheck {
    pub k: u32,
    pub normalization: f64,
    pub marginal: f64,
    pub pgf: f64,
    pub expected_old: f64,
    pub expected_recent: f64,
}

impl FormulaCheck {
    pub fn worst(&self) -> f64 {
        [self.marginal, self.pgf, self.expected_old, self.expected_recent]
            .into_iter()
            .fold(self.normalization, f64::max)
    }
}

pub fn formula_check(k: u32, n: u32, c1: f64) -> Result<FormulaCheck> {
    let law = enumerate_law(k, n, c1)?;
    let mut marginal: f64 = 0.0;
    for (a, p) in &law.marginal_old {
        marginal = marginal.max((marginal_old_probability(a, k, n, c1)? - p).abs());
    }
    let z = pgf_z(k, n, c1)?;
    let mut pgf: f64 = 0.0;
    for (x, p) in z.support() {
        pgf = pgf.max((p - law.z.get(&x).copied().unwrap_or(0.0)).abs());
    }
    for (x, p) in &law.z {
        pgf = pgf.max((p - z.prob(*x)).abs());
    }
    let mut eo: f64 = 0.0;
    let mut er: f64 = 0.0;
    for j in 1..=n {
        eo = eo.max((expected_old(j, k, n, c1) - law.expected_old[j as usize - 1]).abs());
        er = er.max((expected_recent(j, k, n, c1) - law.expected_recent[j as usize - 1]).abs());
    }
    Ok(FormulaCheck {
        k,
        normalization: (law.total() - 1.0).abs(),
        marginal,
        pgf,
        expected_old: eo,
        expected_recent: er,
    })
}

/// TV between `draws` Hoppe-urn samples and the formula.
pub fn urn_tv(k: u32, n: u32, c1: f64, draws: u64, seed: u64, threads: Option<usize>) -> Result<f64> {
    let samples = run_replicates(draws, threads, |r| hoppe_urn_sample(k, n, c1, RngSpec::new(seed, r)))?;
    let mut counts: BTreeMap<Configuration, u64> = BTreeMap::new();
    for s in samples {
        *counts.entry(s?).or_default() += 1;
    }
    Ok(tv_to_formula(&counts, k, n, c1)?)
}

/// Result of conditioning partition runs on the number of old blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedCheck {
    pub convention: SnapshotConvention,
    pub k: u32,
    pub samples: u64,
    pub runs: u64,
    pub tv: f64,
}

/// Runs the marked-partition chain to the first activation until
/// `target` runs have `k` old blocks under `convention` (in replicate
/// order) and compares their spectra with the formula. `k = None` picks the
/// most likely `k` from the exact law of the plants before the activation.
pub fn conditioned_check(
    n: u32,
    params: &ModelParams,
    convention: SnapshotConvention,
    k: Option<u32>,
    target: u64,
    seed: u64,
    threads: Option<usize>,
) -> Result<ConditionedCheck> {
    let shift = match convention {
        SnapshotConvention::PreActivation => 0,
        SnapshotConvention::PostActivation => 1,
    };
    let k = match k {
        Some(k) => k,
        None => {
            let (plants, _) = first_activation_marginals(n, params);
            let (mode, _) = plants
                .support()
                .fold((0, -1.0), |best, (x, p)| if p > best.1 { (x, p) } else { best });
            mode + shift
        }
    };
    if k > n {
        return Err(SamplingError::BadLevel { k, n }.into());
    }
    let mut counts: BTreeMap<Configuration, u64> = BTreeMap::new();
    let mut kept = 0u64;
    let mut runs = 0u64;
    const BATCH: u64 = 100_000;
    const MAX_RUNS: u64 = 1_000_000_000;
    while kept < target && runs < MAX_RUNS {
        let batch = run_replicates(BATCH, threads, |i| -> Result<Option<Configuration>> {
            let run = simulate_partition(
                n,
                params,
                StopCondition::FirstActivation,
                RngSpec::new(seed, runs + i),
                SnapshotPolicy::AtStop,
            )?;
            let (_, snap) = run.snapshots.last().expect("a snapshot is kept at the stop");
            let spec = spectrum_at_first_activation(snap, convention)?;
            Ok((spec.k == k).then(|| spec.into()))
        })?;
        runs += BATCH;
        for cfg in batch {
            if let Some(c) = cfg? {
                if kept < target {
                    *counts.entry(c).or_default() += 1;
                    kept += 1;
                }
            }
        }
    }
    Ok(ConditionedCheck {
        convention,
        k,
        samples: kept,
        runs,
        tv: tv_to_formula(&counts, k, n, params.c1)?,
    })
}

/// Formula, enumeration, urn and conditioned-simulation comparisons at one `n`.
pub fn sampling_report(
    n: u32,
    params: &ModelParams,
    draws: u64,
    conditioned: u64,
    seed: u64,
    threads: Option<usize>,
) -> Result<Report> {
    if n > 8 {
        return Err(SamplingError::TooLarge(n).into());
    }
    let (c1, c2) = (params.c1, params.c2);
    let mut rep = Report::default();
    for k in 0..=n {
        let f = formula_check(k, n, c1)?;
        let base = |q: String, v: f64| Record::new("sampling", q, v).n(n).params(c1, c2);
        rep.push(base(format!("k{k}_normalization_residual"), f.normalization).within(1e-10));
        rep.push(base(format!("k{k}_marginal_vs_enumeration"), f.marginal).within(1e-10));
        rep.push(base(format!("k{k}_pgf_z_vs_enumeration"), f.pgf).within(1e-10));
        rep.push(base(format!("k{k}_expected_old_vs_enumeration"), f.expected_old).within(1e-10));
        rep.push(base(format!("k{k}_expected_recent_vs_enumeration"), f.expected_recent).within(1e-10));
        if draws > 0 {
            let tv = urn_tv(k, n, c1, draws, seed.wrapping_add(u64::from(k)), threads)?;
            rep.push(
                Record::new("sampling", format!("k{k}_urn_tv"), tv)
                    .n(n)
                    .params(c1, c2)
                    .mc(draws, seed.wrapping_add(u64::from(k)))
                    .within(0.02),
            );
        }
    }
    if conditioned > 0 {
        for conv in [SnapshotConvention::PreActivation, SnapshotConvention::PostActivation] {
            let c = conditioned_check(n, params, conv, None, conditioned, seed, threads)?;
            rep.push(
                Record::new("sampling", format!("conditioned_tv_{}_k{}", convention_name(conv), c.k), c.tv)
                    .n(n)
                    .params(c1, c2)
                    .mc(c.samples, seed)
                    .within(0.05),
            );
        }
    }
    Ok(rep)
}

pub fn convention_name(c: SnapshotConvention) -> &'static str {
    match c {
        SnapshotConvention::PreActivation => "pre",
        SnapshotConvention::PostActivation => "post",
    }
}

/// Writes the exact law over `A(k, n)` as CSV.
pub fn write_sampling_law<W: Write>(out: W, k: u32, n: u32, c1: f64) -> Result<()> {
    let law = enumerate_law(k, n, c1)?;
    sampling::write_law_csv(out, k, &law.joint).map_err(|e| CampaignError::Config(e.to_string()))
}

/// Expected exceedance of the seed-bank bound over whole runs: fraction of
/// runs with `sup M > 2 c1 (1 + eps) ln n`.
pub fn seed_bound_exceedance(
    n: u32,
    params: &ModelParams,
    eps: f64,
    reps: u64,
    seed: u64,
    threads: Option<usize>,
) -> Result<(f64, f64)> {
    let cfg = SimulateConfig {
        n,
        reps,
        params: *params,
        variant: Variant::Standard,
        stop: StopCondition::Absorption,
        seed,
        threads,
        options: SimOptions::default(),
    };
    let rows = simulate_campaign(&cfg)?;
    let level = 2.0 * params.c1 * (1.0 + eps) * f64::from(n).ln();
    let hits: Vec<f64> = rows
        .iter()
        .map(|r| if f64::from(r.sup_seeds) > level { 1.0 } else { 0.0 })
        .collect();
    let p = hits.iter().sum::<f64>() / reps as f64;
    let se = (p * (1.0 - p) / reps as f64).sqrt();
    Ok((p, se))
}

/// Expected total variation between `draws` multinomial samples from
/// `probabilities` and the probabilities themselves (normal approximation
/// of each cell's mean absolute deviation). This is the floor a perfect
/// sampler reaches.
pub fn expected_tv_noise(probabilities: &[f64], draws: u64) -> f64 {
    let n = draws as f64;
    0.5 * probabilities
        .iter()
        .map(|&p| (2.0 * p * (1.0 - p) / (std::f64::consts::PI * n)).sqrt())
        .sum::<f64>()
}

/// Expected value of `functional` at `(n, 0)`.
pub fn exact_expectation(n: u32, params: &ModelParams, functional: Functional) -> Result<f64> {
    Ok(expectations(n, params, functional)?.at_sample())
}
