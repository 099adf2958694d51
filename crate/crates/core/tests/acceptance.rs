//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line; run with
//! `cargo test --release --test acceptance -- --nocapture` to see them.

mod common;

use std::sync::Mutex;
use std::time::{Duration, Instant};

use blocklayout::cfg_model::{jump_length, Direction};
use blocklayout::exact_layout::{branch_and_bound, exhaustive, ExactConfig, ExactStatus};
use blocklayout::model_fit::{
    featurize, fit_params, kendall_tau, score_records, FitSearch, MeasurementRecord,
};
use blocklayout::report::{compare, gap_study, mean_improvement, Algorithm, RunConfig};
use blocklayout::scoring::{degenerate_tsp_params, scores_tie, DirectionParams, JumpParams};
use blocklayout::synth::{corpus, default_corpus, generate, CorpusConfig, GenConfig};
use blocklayout::*;
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(id: u32, name: &str, pass: bool, detail: String) {
    println!(
        "criterion {id:>2} [{}] {name}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

#[test]
fn c01_degeneration_identity() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let params = degenerate_tsp_params();
    let mut mismatches = 0;
    for i in 0..1000 {
        let n = rng.gen_range(1..=30);
        let m = rng.gen_range(0..=2 * n);
        let cfg = random_cfg(&mut rng, &format!("g{i}"), n, m);
        let layout = random_entry_first_layout(&mut rng, &cfg);
        let ext = exttsp_score(&cfg, &layout, &params).unwrap();
        let tsp = tsp_score(&cfg, &layout).unwrap();
        if ext != tsp || tsp != oracle_tsp(&cfg, &layout.order) {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    verdict(
        1,
        "degeneration identity",
        mismatches == 0 && elapsed < Duration::from_secs(5),
        format!(
            "{mismatches} mismatches in 1000 pairs, {:.3}s (limit 5s)",
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn c02_exact_oracle_equivalence() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut disagree, mut bit_identical, mut not_optimal) = (0, 0, 0);
    for i in 0..200 {
        let n = rng.gen_range(1..=8);
        let cfg = if i % 2 == 0 {
            let m = rng.gen_range(0..=2 * n);
            random_cfg(&mut rng, &format!("r{i}"), n, m)
        } else {
            generate(&GenConfig {
                seed: rng.gen(),
                n_blocks: n,
                ..Default::default()
            })
            .unwrap()
        };
        let full = exhaustive(&cfg, &DEFAULT_EXTTSP).unwrap();
        let bb = branch_and_bound(&cfg, &ExactConfig::default()).unwrap();
        let (oracle, _) = oracle_best(&cfg, &DEFAULT_EXTTSP);
        if bb.status != ExactStatus::Optimal {
            not_optimal += 1;
        }
        if bb.score == full.score {
            bit_identical += 1;
        }
        if !(scores_tie(bb.score, full.score) && scores_tie(full.score, oracle)) {
            disagree += 1;
        }
    }
    let elapsed = start.elapsed();
    verdict(
        2,
        "branch-and-bound equals exhaustive",
        disagree == 0 && not_optimal == 0 && elapsed < Duration::from_secs(60),
        format!(
            "{disagree} disagreements (tie tolerance 1e-9), {bit_identical}/200 bit-identical, {not_optimal} not optimal, {:.2}s (limit 60s)",
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn c03_optimality_match_study() {
    let _g = serial();
    let start = Instant::now();
    let report = gap_study(&default_corpus(), &RunConfig::default()).unwrap();
    let elapsed = start.elapsed();
    let fraction = report.match_fraction().unwrap_or(0.0);
    let gap = report.mean_gap_pct.unwrap_or(0.0);
    verdict(
        3,
        "greedy matches exact optimum",
        report.considered == 500
            && report.budget_exceeded == 0
            && fraction >= 0.95
            && gap <= 1.0
            && elapsed < Duration::from_secs(600),
        format!(
            "{}/{} matched ({:.1}%, need >= 95%), mean gap on mismatches {:.3}% (need <= 1%), max {:.3}%, {:.1}s",
            report.matches,
            report.matches + report.mismatches,
            fraction * 100.0,
            gap,
            report.max_gap_pct.unwrap_or(0.0),
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn c04_baseline_dominance() {
    let _g = serial();
    let start = Instant::now();
    let algos = [
        Algorithm::Original,
        Algorithm::Tsp,
        Algorithm::Ph,
        Algorithm::Cache,
        Algorithm::ExtTsp,
    ];
    let rows = compare(&default_corpus(), &algos, &RunConfig::default()).unwrap();
    let elapsed = start.elapsed();
    let imp = |a| mean_improvement(&rows, a).unwrap();
    let ext = imp(Algorithm::ExtTsp);
    let margins: Vec<(Algorithm, f64)> = [Algorithm::Cache, Algorithm::Ph, Algorithm::Tsp]
        .into_iter()
        .map(|a| (a, ext - imp(a)))
        .collect();
    let detail = margins
        .iter()
        .map(|(a, m)| format!("{a} {:.3}% (margin {m:.3})", imp(*a)))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(
        4,
        "ext-tsp beats every baseline",
        margins.iter().all(|(_, m)| *m > 0.0) && elapsed < Duration::from_secs(300),
        format!("ext-tsp {ext:.3}%; {detail}; {:.1}s", elapsed.as_secs_f64()),
    );
}

fn triangle() -> ControlFlowGraph {
    ControlFlowGraph::from_sizes(
        "tri",
        &[16, 16, 16],
        [(0, 2, 100.0), (0, 1, 99.0), (1, 2, 99.0)],
    )
}

#[test]
fn c05_splitting_witness() {
    let _g = serial();
    let start = Instant::now();
    let cfg = triangle();
    let split = reorder(&cfg, &GreedyConfig::default()).unwrap();
    let concat = reorder(
        &cfg,
        &GreedyConfig {
            split_threshold: 0,
            ..Default::default()
        },
    )
    .unwrap();
    let (best, best_order) = oracle_best(&cfg, &DEFAULT_EXTTSP);
    let full = exhaustive(&cfg, &DEFAULT_EXTTSP).unwrap();
    let split_score = exttsp_score(&cfg, &split, &DEFAULT_EXTTSP).unwrap();
    let elapsed = start.elapsed();
    verdict(
        5,
        "chain splitting reaches the optimum",
        split.order == vec![0, 1, 2]
            && concat.order == vec![0, 2, 1]
            && best_order == vec![0, 1, 2]
            && full.layout.order == vec![0, 1, 2]
            && split_score == best
            && elapsed < Duration::from_secs(1),
        format!(
            "split {:?} ({split_score}), concatenation {:?} ({}), optimum {best_order:?} ({best})",
            split.order,
            concat.order,
            exttsp_score(&cfg, &concat, &DEFAULT_EXTTSP).unwrap()
        ),
    );
}

#[test]
fn c06_jump_geometry() {
    let _g = serial();
    let cfg = ControlFlowGraph::from_sizes("gap", &[16, 16, 16], [(0, 2, 1.0), (2, 0, 1.0)]);
    let layout = Layout::new(vec![0, 1, 2]);
    let fwd = jump_length(&cfg, &layout, 0, 2).unwrap();
    let bwd = jump_length(&cfg, &layout, 2, 0).unwrap();
    let records = featurize(&cfg, &layout).unwrap();
    let pass = fwd.direction == Direction::Forward
        && fwd.len == 16
        && bwd.direction == Direction::Backward
        && bwd.len == 48
        && records.iter().map(|r| r.length).collect::<Vec<_>>() == vec![16, 48];
    verdict(
        6,
        "forward/backward jump lengths",
        pass,
        format!(
            "forward {:?} {} bytes, backward {:?} {} bytes (expect 16 / 48)",
            fwd.direction, fwd.len, bwd.direction, bwd.len
        ),
    );
}

#[test]
fn c07_threshold_scaling() {
    let _g = serial();
    let cfg = generate(&GenConfig {
        seed: 7,
        n_blocks: 10_000,
        edge_factor: 1.5,
        ..Default::default()
    })
    .unwrap();
    let time = |k: usize| {
        let start = Instant::now();
        let layout = reorder(
            &cfg,
            &GreedyConfig {
                split_threshold: k,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(layout.len(), cfg.num_blocks());
        start.elapsed()
    };
    let t128 = time(128);
    let t0 = time(0);
    let t1024 = time(1024);
    verdict(
        7,
        "split threshold scaling",
        t128 < Duration::from_secs(30) && t0 < t1024,
        format!(
            "{} blocks, {} edges: k=0 {:.2}s, k=128 {:.2}s (limit 30s), k=1024 {:.2}s",
            cfg.num_blocks(),
            cfg.edges.len(),
            t0.as_secs_f64(),
            t128.as_secs_f64(),
            t1024.as_secs_f64()
        ),
    );
}

#[test]
fn c08_memoization_transparency() {
    let _g = serial();
    let cfgs = default_corpus();
    let differing = cfgs
        .iter()
        .filter(|cfg| {
            let cached = reorder(cfg, &GreedyConfig::default()).unwrap();
            let uncached = reorder(
                cfg,
                &GreedyConfig {
                    memoize: false,
                    ..Default::default()
                },
            )
            .unwrap();
            cached != uncached
        })
        .count();
    verdict(
        8,
        "memoization does not change layouts",
        differing == 0,
        format!("{differing}/{} layouts differ", cfgs.len()),
    );
}

/// Measurements of `known` params: random layouts of a fixed corpus,
/// performance a random strictly increasing function of the true score.
fn synthetic_measurements(
    known: &ScoreParams,
    experiments: usize,
    seed: u64,
) -> Vec<MeasurementRecord> {
    let cfgs = corpus(&CorpusConfig {
        seed,
        count: 30,
        min_blocks: 5,
        max_blocks: 20,
        ..Default::default()
    })
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records: Vec<(f64, MeasurementRecord)> = (0..experiments)
        .map(|i| {
            let mut branches = Vec::new();
            for cfg in &cfgs {
                let layout = random_entry_first_layout(&mut rng, cfg);
                branches.extend(featurize(cfg, &layout).unwrap());
            }
            let score = score_records(&branches, known);
            (
                score,
                MeasurementRecord {
                    label: format!("exp{i}"),
                    perf: 0.0,
                    branches,
                },
            )
        })
        .collect();
    records.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut perf = 1.0;
    for (_, r) in &mut records {
        perf += rng.gen_range(0.001..0.05);
        r.perf = perf;
    }
    let mut out: Vec<MeasurementRecord> = records.into_iter().map(|(_, r)| r).collect();
    out.sort_by(|a, b| a.label.cmp(&b.label));
    out
}

#[test]
fn c09_fitter_recovery() {
    let _g = serial();
    let start = Instant::now();
    let jp = JumpParams::new;
    let known = ScoreParams {
        fall_through: DirectionParams {
            conditional: jp(1.0, 1.0, 1.0),
            unconditional: jp(0.8, 1.0, 1.0),
        },
        forward: DirectionParams {
            conditional: jp(0.3, 700.0, 1.5),
            unconditional: jp(0.15, 700.0, 1.5),
        },
        backward: DirectionParams {
            conditional: jp(0.05, 300.0, 1.5),
            unconditional: jp(0.2, 300.0, 1.5),
        },
    };
    let ms = synthetic_measurements(&known, 60, 909);
    let perf: Vec<f64> = ms.iter().map(|m| m.perf).collect();
    let truth: Vec<f64> = ms
        .iter()
        .map(|m| score_records(&m.branches, &known))
        .collect();
    let generator_tau = kendall_tau(&perf, &truth).unwrap();
    let search = FitSearch {
        iterations: 1000,
        seed: 42,
        ..Default::default()
    };
    let fit = fit_params(&ms, &search).unwrap();
    let rerun = fit_params(&ms, &search).unwrap();
    let identical = fit.params == rerun.params && fit.tau.to_bits() == rerun.tau.to_bits();
    let elapsed = start.elapsed();
    verdict(
        9,
        "fitter recovers generating ranking",
        fit.tau >= generator_tau - 0.02 && identical && elapsed < Duration::from_secs(120),
        format!(
            "fitted tau {:.4} vs generator tau {generator_tau:.4} (tolerance 0.02), defaults {:.4}, reruns identical: {identical}, {:.1}s",
            fit.tau,
            fit.default_tau.unwrap_or(f64::NAN),
            elapsed.as_secs_f64()
        ),
    );
}

fn adjacent(layout: &Layout, a: BlockId, b: BlockId) -> bool {
    layout.order.windows(2).any(|w| w == [a, b])
}

#[test]
fn c10_cold_edge_rule() {
    let _g = serial();
    let edges = [(0, 1, 10.0), (1, 2, 0.0), (1, 3, 0.0)];
    let file_order = ControlFlowGraph::from_sizes("cold", &[8, 8, 8, 8], edges);
    let mut swapped = file_order.clone();
    swapped.blocks.swap(2, 3);
    let a = reorder(&file_order, &GreedyConfig::default()).unwrap();
    let b = reorder(&swapped, &GreedyConfig::default()).unwrap();
    verdict(
        10,
        "cold original fall-throughs stay adjacent",
        adjacent(&a, 1, 2) && adjacent(&b, 1, 3),
        format!(
            "file order [0,1,2,3] -> {:?}; file order [0,1,3,2] -> {:?}",
            a.order, b.order
        ),
    );
}
