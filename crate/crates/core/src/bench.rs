//! Experiment harness: random-instance sweeps against exact optima and
//! nearest neighbour, and variant comparisons on named instances.
//!
//! Every aggregate is computed from the emitted rows, so a CSV written here
//! is enough to reproduce any summary.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{
    exact_brute_force, exact_held_karp, nearest_neighbor, nearest_neighbor_best, BaselineError, BRUTE_FORCE_MAX,
    HELD_KARP_MAX,
};
use crate::instances::{gen_random_uniform, CityInstance, InstanceError};
use crate::sim::{self, SimConfig, SimError, Variant};
use crate::tour::{percent_error, Tour};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{0}")]
    Domain(String),
    #[error("instance '{0}' has no reference optimal cost")]
    MissingOptimum(String),
    #[error("exact solvers disagree on {instance}: brute force {brute}, Held-Karp {held_karp}")]
    CrossCheck { instance: String, brute: f64, held_karp: f64 },
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Variants compared by default on named instances.
pub const NAMED_VARIANTS: [Variant; 3] = [Variant::Simple, Variant::Pressure, Variant::Bubble];

/// Tuned `key=value` overrides for instances where the defaults leave the
/// density grid empty.
pub fn preset_config(instance: &str) -> Option<&'static str> {
    match instance {
        "grid4x4" => Some(include_str!("../presets/grid4x4.conf")),
        _ => None,
    }
}

/// Default configuration with the instance preset (if any) applied.
pub fn config_for(instance: &str) -> SimConfig {
    let mut cfg = SimConfig::default();
    if let Some(text) = preset_config(instance) {
        cfg.apply_text(text).expect("presets parse");
    }
    cfg
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NnPolicy {
    /// Start from city 0.
    FromZero,
    /// Best over every start city.
    BestStart,
}

/// The method that produced a report row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Method {
    Exact,
    NBody(Variant),
    NearestNeighbor(NnPolicy),
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Exact => f.write_str("exact"),
            Method::NBody(v) => f.write_str(v.as_str()),
            Method::NearestNeighbor(NnPolicy::FromZero) => f.write_str("nn0"),
            Method::NearestNeighbor(NnPolicy::BestStart) => f.write_str("nn-best"),
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(Method::Exact),
            "nn0" => Ok(Method::NearestNeighbor(NnPolicy::FromZero)),
            "nn-best" => Ok(Method::NearestNeighbor(NnPolicy::BestStart)),
            other => other.parse::<Variant>().map(Method::NBody).map_err(|e| e.to_string()),
        }
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.to_string()
    }
}

impl TryFrom<String> for Method {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// One row of a benchmark CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub instance: String,
    pub n: usize,
    pub variant: Method,
    pub seed: u64,
    pub cost: f64,
    pub exact_cost: Option<f64>,
    pub percent_error: Option<f64>,
    pub wall_clock_s: f64,
    pub converged: bool,
}

pub const REPORT_HEADER: &str = "instance,n,variant,seed,cost,exact_cost,percent_error,wall_clock_s,converged";

impl RunReport {
    /// Builds a row; the percent error is derived from `exact_cost` when given.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        instance: &str,
        n: usize,
        variant: Method,
        seed: u64,
        cost: f64,
        exact_cost: Option<f64>,
        wall_clock_s: f64,
        converged: bool,
    ) -> Self {
        let percent_error = exact_cost.and_then(|e| percent_error(cost, e).ok());
        Self { instance: instance.to_string(), n, variant, seed, cost, exact_cost, percent_error, wall_clock_s, converged }
    }
}

/// A run that produced no tour.
#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub instance: String,
    pub n: usize,
    pub variant: Method,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExactSolver {
    HeldKarp,
    BruteForce,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomOptions {
    pub exact: ExactSolver,
    /// Also run brute force (n <= 10) and require identical costs.
    pub cross_check: bool,
    pub nn: NnPolicy,
    /// Count non-converged N-body runs in the averages.
    pub include_nonconverged: bool,
}

impl Default for RandomOptions {
    fn default() -> Self {
        Self { exact: ExactSolver::HeldKarp, cross_check: false, nn: NnPolicy::FromZero, include_nonconverged: true }
    }
}

/// Per-size means in the layout of the random-instance table.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeAverage {
    pub n: usize,
    pub instances: usize,
    pub nbody_mean_percent_error: f64,
    pub nn_mean_percent_error: f64,
    /// N-body rows left out of the mean (errors, or non-converged when excluded).
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomExperiment {
    pub reports: Vec<RunReport>,
    pub failures: Vec<RunFailure>,
    pub averages: Vec<SizeAverage>,
}

fn exact_tour(inst: &CityInstance, opts: &RandomOptions) -> Result<Tour, BenchError> {
    let tour = match opts.exact {
        ExactSolver::HeldKarp => exact_held_karp(inst)?,
        ExactSolver::BruteForce => exact_brute_force(inst)?,
    };
    if opts.cross_check && inst.len() <= 10 {
        let other = match opts.exact {
            ExactSolver::HeldKarp => exact_brute_force(inst)?,
            ExactSolver::BruteForce => exact_held_karp(inst)?,
        };
        if other.cost() != tour.cost() {
            let (brute, held_karp) = match opts.exact {
                ExactSolver::HeldKarp => (other.cost(), tour.cost()),
                ExactSolver::BruteForce => (tour.cost(), other.cost()),
            };
            return Err(BenchError::CrossCheck { instance: inst.name().to_string(), brute, held_karp });
        }
    }
    Ok(tour)
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    #[cfg(not(target_arch = "wasm32"))]
    {
        let start = std::time::Instant::now();
        let out = f();
        (out, start.elapsed().as_secs_f64())
    }
    #[cfg(target_arch = "wasm32")]
    {
        (f(), 0.0)
    }
}

type Cell = Result<(Vec<RunReport>, Vec<RunFailure>), BenchError>;

fn random_cell(n: usize, seed: u64, cfg: &SimConfig, opts: &RandomOptions) -> Cell {
    let inst = gen_random_uniform(n, seed)?;
    let name = inst.name().to_string();
    let (exact, t_exact) = timed(|| exact_tour(&inst, opts));
    let exact = exact?;
    let opt = Some(exact.cost());
    let mut reports = vec![RunReport::new(&name, n, Method::Exact, seed, exact.cost(), opt, t_exact, true)];
    let mut failures = Vec::new();

    let method = Method::NBody(cfg.variant);
    match sim::run(&inst, cfg, seed) {
        Ok(out) => {
            reports.push(RunReport::new(&name, n, method, seed, out.tour.cost(), opt, out.wall_clock_s, out.converged))
        }
        Err(e) => failures.push(RunFailure { instance: name.clone(), n, variant: method, seed, message: e.to_string() }),
    }

    let (nn, t_nn) = timed(|| match opts.nn {
        NnPolicy::FromZero => nearest_neighbor(&inst, 0),
        NnPolicy::BestStart => Ok(nearest_neighbor_best(&inst)),
    });
    reports.push(RunReport::new(&name, n, Method::NearestNeighbor(opts.nn), seed, nn?.cost(), opt, t_nn, true));
    Ok((reports, failures))
}

fn run_cells<T, R>(cells: Vec<T>, f: impl Fn(&T) -> R + Sync + Send) -> Vec<R>
where
    T: Sync,
    R: Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        cells.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        cells.iter().map(f).collect()
    }
}

/// For every size in `n_values` and every run, generates a uniform instance
/// with seed `base_seed + run` and records exact, N-body and
/// nearest-neighbour rows, sorted by `(n, seed, method)`.
pub fn experiment_random(
    n_values: &[usize],
    runs: u64,
    base_seed: u64,
    cfg: &SimConfig,
    opts: &RandomOptions,
) -> Result<RandomExperiment, BenchError> {
    if runs == 0 {
        return Err(BenchError::Domain("runs must be at least 1".into()));
    }
    cfg.validate()?;
    let limit = match opts.exact {
        ExactSolver::HeldKarp => HELD_KARP_MAX,
        ExactSolver::BruteForce => BRUTE_FORCE_MAX,
    };
    if let Some(&n) = n_values.iter().find(|&&n| n > limit || n < 3) {
        return Err(BenchError::Domain(format!("n = {n} is outside 3..={limit} for the chosen exact solver")));
    }
    let cells: Vec<(usize, u64)> =
        n_values.iter().flat_map(|&n| (0..runs).map(move |r| (n, base_seed.wrapping_add(r)))).collect();
    let results = run_cells(cells, |&(n, seed)| random_cell(n, seed, cfg, opts));

    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        let (rep, fail) = r?;
        reports.extend(rep);
        failures.extend(fail);
    }
    reports.sort_by_key(|r| (r.n, r.seed, r.variant));
    failures.sort_by_key(|f| (f.n, f.seed));
    let averages = size_averages(&reports, &failures, opts.include_nonconverged);
    Ok(RandomExperiment { reports, failures, averages })
}

/// Recomputes per-size means from raw rows.
pub fn size_averages(reports: &[RunReport], failures: &[RunFailure], include_nonconverged: bool) -> Vec<SizeAverage> {
    let mut by_n: BTreeMap<usize, (usize, Vec<f64>, Vec<f64>, usize)> = BTreeMap::new();
    for r in reports {
        let e = by_n.entry(r.n).or_default();
        match r.variant {
            Method::Exact => e.0 += 1,
            Method::NBody(_) => {
                if r.converged || include_nonconverged {
                    e.1.extend(r.percent_error);
                } else {
                    e.3 += 1;
                }
            }
            Method::NearestNeighbor(_) => e.2.extend(r.percent_error),
        }
    }
    for f in failures {
        by_n.entry(f.n).or_default().3 += 1;
    }
    by_n.into_iter()
        .map(|(n, (instances, nb, nn, excluded))| SizeAverage {
            n,
            instances,
            nbody_mean_percent_error: mean(&nb),
            nn_mean_percent_error: mean(&nn),
            excluded,
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Runs every variant on every instance once per seed. Each instance must
/// carry its optimal cost.
pub fn experiment_named(
    instances: &[CityInstance],
    variants: &[Variant],
    cfg: &SimConfig,
    seeds: &[u64],
) -> Result<(Vec<RunReport>, Vec<RunFailure>), BenchError> {
    if let Some(inst) = instances.iter().find(|i| i.optimal_cost().is_none()) {
        return Err(BenchError::MissingOptimum(inst.name().to_string()));
    }
    cfg.validate()?;
    let cells: Vec<(usize, Variant, u64)> = (0..instances.len())
        .flat_map(|i| variants.iter().flat_map(move |&v| seeds.iter().map(move |&s| (i, v, s))))
        .collect();
    let results = run_cells(cells, |&(i, v, seed)| {
        let inst = &instances[i];
        let c = cfg.clone().with_variant(v);
        let method = Method::NBody(v);
        match sim::run(inst, &c, seed) {
            Ok(out) => Ok(RunReport::new(
                inst.name(),
                inst.len(),
                method,
                seed,
                out.tour.cost(),
                inst.optimal_cost(),
                out.wall_clock_s,
                out.converged,
            )),
            Err(e) => Err(RunFailure {
                instance: inst.name().to_string(),
                n: inst.len(),
                variant: method,
                seed,
                message: e.to_string(),
            }),
        }
    });
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(rep) => reports.push(rep),
            Err(f) => failures.push(f),
        }
    }
    Ok((reports, failures))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupBy {
    Instance,
    Size,
}

/// Aggregate statistics of one (group, method) cell. Percent-error fields
/// are `None` when no row of the group carries an exact cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub group: String,
    pub variant: Method,
    pub runs: usize,
    pub mean_percent_error: Option<f64>,
    pub min_percent_error: Option<f64>,
    pub max_percent_error: Option<f64>,
    pub std_percent_error: Option<f64>,
    pub mean_cost: f64,
    pub mean_wall_clock_s: f64,
}

/// Groups rows by instance name or by size, then by method, in ascending
/// order. The standard deviation is the population one.
pub fn summarize(reports: &[RunReport], group_by: GroupBy) -> Result<Vec<SummaryRow>, BenchError> {
    if reports.is_empty() {
        return Err(BenchError::Domain("cannot summarize an empty report list".into()));
    }
    #[derive(PartialEq, Eq, PartialOrd, Ord)]
    enum Key {
        Size(usize),
        Name(String),
    }
    let mut groups: BTreeMap<(Key, Method), Vec<&RunReport>> = BTreeMap::new();
    for r in reports {
        let key = match group_by {
            GroupBy::Instance => Key::Name(r.instance.clone()),
            GroupBy::Size => Key::Size(r.n),
        };
        groups.entry((key, r.variant)).or_default().push(r);
    }
    Ok(groups
        .into_iter()
        .map(|((key, variant), rows)| {
            let errs: Vec<f64> = rows.iter().filter_map(|r| r.percent_error).collect();
            let stats = (!errs.is_empty()).then(|| {
                let m = mean(&errs);
                let var = errs.iter().map(|e| (e - m) * (e - m)).sum::<f64>() / errs.len() as f64;
                let min = errs.iter().copied().fold(f64::INFINITY, f64::min);
                let max = errs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (m, min, max, var.sqrt())
            });
            let costs: Vec<f64> = rows.iter().map(|r| r.cost).collect();
            let times: Vec<f64> = rows.iter().map(|r| r.wall_clock_s).collect();
            SummaryRow {
                group: match key {
                    Key::Size(n) => n.to_string(),
                    Key::Name(s) => s,
                },
                variant,
                runs: rows.len(),
                mean_percent_error: stats.map(|s| s.0),
                min_percent_error: stats.map(|s| s.1),
                max_percent_error: stats.map(|s| s.2),
                std_percent_error: stats.map(|s| s.3),
                mean_cost: mean(&costs),
                mean_wall_clock_s: mean(&times),
            }
        })
        .collect())
}

pub fn write_reports_csv<W: std::io::Write>(reports: &[RunReport], out: W) -> Result<(), BenchError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(REPORT_HEADER.split(','))?;
    for r in reports {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_reports_csv<R: std::io::Read>(input: R) -> Result<Vec<RunReport>, BenchError> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != REPORT_HEADER {
        return Err(BenchError::Domain(format!("unexpected header '{}'", header.join(","))));
    }
    Ok(r.deserialize().collect::<Result<Vec<RunReport>, _>>()?)
}

pub fn write_summary_csv<W: std::io::Write>(rows: &[SummaryRow], out: W) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn opt3(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"))
}

/// Plain-text aligned rendering of a summary.
pub fn summary_table(rows: &[SummaryRow]) -> String {
    let header = ["group", "method", "runs", "mean %err", "min %err", "max %err", "std %err", "mean cost", "mean time s"];
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.group.clone(),
                r.variant.to_string(),
                r.runs.to_string(),
                opt3(r.mean_percent_error),
                opt3(r.min_percent_error),
                opt3(r.max_percent_error),
                opt3(r.std_percent_error),
                format!("{:.3}", r.mean_cost),
                format!("{:.3}", r.mean_wall_clock_s),
            ]
        })
        .collect();
    aligned(&header, &body)
}

/// Size, mean N-body percent error, mean nearest-neighbour percent error.
pub fn random_table(averages: &[SizeAverage]) -> String {
    let header = ["cities", "avg N-body %err", "avg nearest-neighbor %err", "excluded"];
    let body: Vec<Vec<String>> = averages
        .iter()
        .map(|a| {
            vec![
                a.n.to_string(),
                format!("{:.4}", a.nbody_mean_percent_error),
                format!("{:.4}", a.nn_mean_percent_error),
                a.excluded.to_string(),
            ]
        })
        .collect();
    aligned(&header, &body)
}

/// One line per instance with the mean percent error of each variant, in
/// the order simple, pressure, bubble, pressure+bubble (absent columns are
/// dropped).
pub fn variant_table(reports: &[RunReport]) -> String {
    let present: Vec<Variant> =
        Variant::ALL.into_iter().filter(|v| reports.iter().any(|r| r.variant == Method::NBody(*v))).collect();
    let mut order: Vec<(&str, usize)> = Vec::new();
    for r in reports {
        if !order.iter().any(|(name, _)| *name == r.instance) {
            order.push((&r.instance, r.n));
        }
    }
    let mut header = vec!["instance".to_string(), "cities".to_string()];
    header.extend(present.iter().map(|v| format!("{v} %err")));
    let body: Vec<Vec<String>> = order
        .iter()
        .map(|(name, n)| {
            let mut row = vec![name.to_string(), n.to_string()];
            for v in &present {
                let errs: Vec<f64> = reports
                    .iter()
                    .filter(|r| r.instance == *name && r.variant == Method::NBody(*v))
                    .filter_map(|r| r.percent_error)
                    .collect();
                row.push(if errs.is_empty() { "-".into() } else { format!("{:.3}", mean(&errs)) });
            }
            row
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    aligned(&header, &body)
}

fn aligned(header: &[&str], body: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let line = |cells: Vec<&str>, out: &mut String| {
        let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(header.to_vec(), &mut out);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    let _ = writeln!(out, "{}", rule.join("  "));
    for row in body {
        line(row.iter().map(String::as_str).collect(), &mut out);
    }
    out
}
