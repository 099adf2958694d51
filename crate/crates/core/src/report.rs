//! Running orderers over a corpus and rendering the results.
//!
//! Output is byte-stable: rows are sorted by function name then algorithm,
//! numbers carry six significant digits, and runtimes are only printed on
//! request.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::baseline_layouts::{cache_order, original, ph_bottomup, ph_topdown};
use crate::cfg_model::{ControlFlowGraph, Layout};
use crate::error::{Error, Result};
use crate::exact_layout::{branch_and_bound, ExactConfig, ExactStatus};
use crate::greedy_layout::{reorder, GreedyConfig};
use crate::scoring::{exttsp_score, scores_tie, tsp_score, ScoreParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Algorithm {
    Original,
    Tsp,
    Ph,
    Cache,
    ExtTsp,
    Exact,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Original,
        Algorithm::Tsp,
        Algorithm::Ph,
        Algorithm::Cache,
        Algorithm::ExtTsp,
        Algorithm::Exact,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Original => "original",
            Algorithm::Tsp => "tsp",
            Algorithm::Ph => "ph",
            Algorithm::Cache => "cache",
            Algorithm::ExtTsp => "ext-tsp",
            Algorithm::Exact => "exact",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown algorithm `{s}` (expected one of original, tsp, ph, cache, ext-tsp, exact)"))
    }
}

/// Settings shared by all orderers in one run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub greedy: GreedyConfig,
    pub exact: ExactConfig,
}

impl RunConfig {
    /// Uses `params` for both the greedy and the exact solver.
    pub fn with_params(mut self, params: ScoreParams) -> Self {
        self.greedy.params = params;
        self.exact.params = params;
        self
    }

    pub fn params(&self) -> &ScoreParams {
        &self.greedy.params
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Placed {
        layout: Layout,
        status: Option<ExactStatus>,
    },
    /// The exact solver was not run because the function is too large.
    Skipped { blocks: usize, limit: usize },
}

pub fn run_algorithm(
    cfg: &ControlFlowGraph,
    algo: Algorithm,
    config: &RunConfig,
) -> Result<Outcome> {
    let placed = |layout| {
        Ok(Outcome::Placed {
            layout,
            status: None,
        })
    };
    match algo {
        Algorithm::Original => placed(original(cfg)),
        Algorithm::Tsp => placed(ph_topdown(cfg)?),
        Algorithm::Ph => placed(ph_bottomup(cfg)?),
        Algorithm::Cache => placed(cache_order(cfg)?),
        Algorithm::ExtTsp => placed(reorder(cfg, &config.greedy)?),
        Algorithm::Exact => match branch_and_bound(cfg, &config.exact) {
            Ok(r) => Ok(Outcome::Placed {
                layout: r.layout,
                status: Some(r.status),
            }),
            Err(Error::TooManyBlocks { blocks, limit }) => Ok(Outcome::Skipped { blocks, limit }),
            Err(e) => Err(e),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimality {
    NotApplicable,
    Optimal,
    BudgetExceeded,
    Skipped,
}

impl Optimality {
    pub fn as_str(self) -> &'static str {
        match self {
            Optimality::NotApplicable => "-",
            Optimality::Optimal => "optimal",
            Optimality::BudgetExceeded => "budget-exceeded",
            Optimality::Skipped => "skipped",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub function: String,
    pub algorithm: String,
    /// `None` for skipped functions.
    pub exttsp: Option<f64>,
    pub tsp: Option<f64>,
    pub improvement_pct: Option<f64>,
    pub runtime_ms: f64,
    pub optimality: Optimality,
    pub layout: Option<Layout>,
}

/// Relative change against the original score in percent; undefined unless
/// the original score is positive.
pub fn improvement_pct(score: f64, original: f64) -> Option<f64> {
    (original > 0.0).then(|| (score - original) / original * 100.0)
}

/// Runs every algorithm on every function. Rows come back sorted.
pub fn compare(
    cfgs: &[ControlFlowGraph],
    algos: &[Algorithm],
    config: &RunConfig,
) -> Result<Vec<CompareRow>> {
    let params = *config.params();
    let per_function: Vec<Vec<CompareRow>> = cfgs
        .par_iter()
        .map(|cfg| {
            let base = exttsp_score(cfg, &original(cfg), &params)?;
            algos
                .iter()
                .map(|&algo| {
                    let start = Instant::now();
                    let outcome =
                        run_algorithm(cfg, algo, config).map_err(|e| e.in_function(&cfg.name))?;
                    let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
                    let row = match outcome {
                        Outcome::Placed { layout, status } => {
                            let exttsp = exttsp_score(cfg, &layout, &params)?;
                            CompareRow {
                                function: cfg.name.clone(),
                                algorithm: algo.name().to_string(),
                                exttsp: Some(exttsp),
                                tsp: Some(tsp_score(cfg, &layout)?),
                                improvement_pct: improvement_pct(exttsp, base),
                                runtime_ms,
                                optimality: match status {
                                    None => Optimality::NotApplicable,
                                    Some(ExactStatus::Optimal) => Optimality::Optimal,
                                    Some(ExactStatus::BudgetExceeded) => Optimality::BudgetExceeded,
                                },
                                layout: Some(layout),
                            }
                        }
                        Outcome::Skipped { .. } => CompareRow {
                            function: cfg.name.clone(),
                            algorithm: algo.name().to_string(),
                            exttsp: None,
                            tsp: None,
                            improvement_pct: None,
                            runtime_ms,
                            optimality: Optimality::Skipped,
                            layout: None,
                        },
                    };
                    Ok(row)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<CompareRow> = per_function.into_iter().flatten().collect();
    sort_rows(&mut rows);
    Ok(rows)
}

pub fn sort_rows(rows: &mut [CompareRow]) {
    rows.sort_by(|a, b| {
        a.function
            .cmp(&b.function)
            .then_with(|| a.algorithm.cmp(&b.algorithm))
    });
}

/// Label used in the function column of aggregate rows.
pub const MEAN_ROW: &str = "(mean)";

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// One row per algorithm with mean scores and mean improvement over the
/// functions where each is defined.
pub fn aggregate(rows: &[CompareRow]) -> Vec<CompareRow> {
    let mut algos: Vec<&str> = rows.iter().map(|r| r.algorithm.as_str()).collect();
    algos.sort_unstable();
    algos.dedup();
    algos
        .into_iter()
        .map(|algo| {
            let mine: Vec<&CompareRow> = rows.iter().filter(|r| r.algorithm == algo).collect();
            CompareRow {
                function: MEAN_ROW.to_string(),
                algorithm: algo.to_string(),
                exttsp: mean(mine.iter().filter_map(|r| r.exttsp)),
                tsp: mean(mine.iter().filter_map(|r| r.tsp)),
                improvement_pct: mean(mine.iter().filter_map(|r| r.improvement_pct)),
                runtime_ms: mine.iter().map(|r| r.runtime_ms).sum::<f64>() / mine.len() as f64,
                optimality: Optimality::NotApplicable,
                layout: None,
            }
        })
        .collect()
}

/// Mean improvement of `algo` from a row set, if any function defines it.
pub fn mean_improvement(rows: &[CompareRow], algo: Algorithm) -> Option<f64> {
    mean(
        rows.iter()
            .filter(|r| r.algorithm == algo.name())
            .filter_map(|r| r.improvement_pct),
    )
}

/// `%g`-style rendering with six significant digits.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (5 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_string(), fmt_num)
}

pub const CSV_HEADER: &str = "function,algorithm,exttsp,tsp,improvement_pct,runtime_ms,optimal";

/// Renders rows followed by aggregate rows. Function names containing
/// commas or quotes are quoted.
pub fn to_csv(rows: &[CompareRow], timing: bool) -> String {
    let mut sorted = rows.to_vec();
    sort_rows(&mut sorted);
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    let aggregates = if sorted.is_empty() {
        Vec::new()
    } else {
        aggregate(&sorted)
    };
    for r in sorted.iter().chain(&aggregates) {
        let runtime = if timing {
            fmt_num(r.runtime_ms)
        } else {
            "-".to_string()
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            csv_field(&r.function),
            r.algorithm,
            fmt_opt(r.exttsp),
            fmt_opt(r.tsp),
            fmt_opt(r.improvement_pct),
            runtime,
            r.optimality.as_str()
        ));
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Outcome of running the greedy orderer against the exact solver.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GapReport {
    /// Functions small enough for the exact solver.
    pub considered: usize,
    /// Functions above the block limit, left out of every count below.
    pub excluded: usize,
    /// Exact runs that ran out of time; not counted as matches or mismatches.
    pub budget_exceeded: usize,
    pub matches: usize,
    pub mismatches: usize,
    /// Mean of `(optimal - greedy) / optimal` in percent over mismatches.
    pub mean_gap_pct: Option<f64>,
    pub max_gap_pct: Option<f64>,
}

impl GapReport {
    pub fn match_fraction(&self) -> Option<f64> {
        let decided = self.matches + self.mismatches;
        (decided > 0).then(|| self.matches as f64 / decided as f64)
    }

    pub fn render(&self) -> String {
        format!(
            "functions,{}\nexcluded_oversized,{}\nbudget_exceeded,{}\nmatches,{}\nmismatches,{}\nmatch_fraction,{}\nmean_gap_pct,{}\nmax_gap_pct,{}\n",
            self.considered,
            self.excluded,
            self.budget_exceeded,
            self.matches,
            self.mismatches,
            fmt_opt(self.match_fraction()),
            fmt_opt(self.mean_gap_pct),
            fmt_opt(self.max_gap_pct),
        )
    }
}

enum GapCase {
    Excluded,
    Budget,
    Match,
    Gap(f64),
}

/// Scores are compared with the shared relative tie tolerance, since
/// equal-score layouts can differ in the last bits of a float sum.
pub fn gap_study(cfgs: &[ControlFlowGraph], config: &RunConfig) -> Result<GapReport> {
    let params = *config.params();
    let cases: Vec<GapCase> = cfgs
        .par_iter()
        .map(|cfg| {
            let exact = match branch_and_bound(cfg, &config.exact) {
                Ok(r) => r,
                Err(Error::TooManyBlocks { .. }) => return Ok(GapCase::Excluded),
                Err(e) => return Err(e.in_function(&cfg.name)),
            };
            if exact.status == ExactStatus::BudgetExceeded {
                return Ok(GapCase::Budget);
            }
            let greedy = reorder(cfg, &config.greedy).map_err(|e| e.in_function(&cfg.name))?;
            let score = exttsp_score(cfg, &greedy, &params)?;
            if scores_tie(score, exact.score) || score >= exact.score {
                Ok(GapCase::Match)
            } else {
                Ok(GapCase::Gap((exact.score - score) / exact.score * 100.0))
            }
        })
        .collect::<Result<_>>()?;

    let mut report = GapReport::default();
    let mut gaps = Vec::new();
    for case in cases {
        match case {
            GapCase::Excluded => report.excluded += 1,
            GapCase::Budget => report.budget_exceeded += 1,
            GapCase::Match => report.matches += 1,
            GapCase::Gap(g) => gaps.push(g),
        }
    }
    report.considered = cfgs.len() - report.excluded;
    report.mismatches = gaps.len();
    report.mean_gap_pct = mean(gaps.iter().copied());
    report.max_gap_pct = gaps.iter().copied().reduce(f64::max);
    Ok(report)
}
