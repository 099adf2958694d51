//! Learning ExtTSP coefficients from measured performance.
//!
//! Each experiment pairs a list of branch records (the branches of one
//! binary under one block ordering) with an observed performance number. A
//! candidate [`ScoreParams`] is judged by the Kendall rank correlation
//! between its scores and the measurements; the search is seeded random
//! sampling followed by coordinate refinement.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cfg_model::{
    jump_between, offsets, BranchClass, Conditionality, ControlFlowGraph, Direction, Layout,
};
use crate::error::{Error, Result};
use crate::scoring::{edge_contribution, DirectionParams, JumpParams, ScoreParams, DEFAULT_EXTTSP};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchRecord {
    #[serde(rename = "w")]
    pub weight: f64,
    #[serde(rename = "dir")]
    pub direction: Direction,
    #[serde(rename = "cond", with = "cond_as_bool")]
    pub conditionality: Conditionality,
    #[serde(rename = "len")]
    pub length: u64,
}

mod cond_as_bool {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::cfg_model::Conditionality;

    pub fn serialize<S: Serializer>(c: &Conditionality, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_bool(c.is_conditional())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Conditionality, D::Error> {
        Ok(if bool::deserialize(d)? {
            Conditionality::Conditional
        } else {
            Conditionality::Unconditional
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub label: String,
    pub perf: f64,
    pub branches: Vec<BranchRecord>,
}

/// One record per non-self-loop edge.
pub fn featurize(cfg: &ControlFlowGraph, layout: &Layout) -> Result<Vec<BranchRecord>> {
    let starts = offsets(cfg, layout)?;
    let sizes = cfg.sizes_by_id();
    let degrees = cfg.out_degrees();
    Ok(cfg
        .edges
        .iter()
        .filter(|e| e.src != e.dst)
        .map(|e| {
            let jump = jump_between(starts[e.src], sizes[e.src], starts[e.dst]);
            BranchRecord {
                weight: e.weight,
                direction: jump.direction,
                conditionality: Conditionality::from_out_degree(degrees[e.src]),
                length: jump.len,
            }
        })
        .collect())
}

pub fn score_records(records: &[BranchRecord], params: &ScoreParams) -> f64 {
    records
        .iter()
        .map(|r| {
            let class = BranchClass {
                direction: r.direction,
                conditionality: r.conditionality,
            };
            edge_contribution(r.weight, class, r.length, params)
        })
        .sum()
}

/// Kendall's tau-b in O(n log n) (Knight's algorithm).
pub fn kendall_tau(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch(xs.len(), ys.len()));
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::NotEnoughData { needed: 2, got: n });
    }
    if xs.iter().chain(ys).any(|v| v.is_nan()) {
        return Err(Error::InvalidConfig("NaN in rank correlation input".into()));
    }
    let mut pairs: Vec<(f64, f64)> = xs.iter().copied().zip(ys.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let tie_pairs = |run: u64| run * (run - 1) / 2;
    let total = tie_pairs(n as u64);
    let (mut x_ties, mut joint_ties) = (0u64, 0u64);
    let (mut x_run, mut joint_run) = (1u64, 1u64);
    for i in 1..n {
        if pairs[i].0 == pairs[i - 1].0 {
            x_run += 1;
            if pairs[i].1 == pairs[i - 1].1 {
                joint_run += 1;
            } else {
                joint_ties += tie_pairs(joint_run);
                joint_run = 1;
            }
        } else {
            x_ties += tie_pairs(x_run);
            joint_ties += tie_pairs(joint_run);
            x_run = 1;
            joint_run = 1;
        }
    }
    x_ties += tie_pairs(x_run);
    joint_ties += tie_pairs(joint_run);

    let mut ys_sorted: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = ys_sorted.clone();
    let swaps = merge_count(&mut ys_sorted, &mut buf);

    let mut y_ties = 0u64;
    let mut run = 1u64;
    for i in 1..n {
        if ys_sorted[i] == ys_sorted[i - 1] {
            run += 1;
        } else {
            y_ties += tie_pairs(run);
            run = 1;
        }
    }
    y_ties += tie_pairs(run);

    if x_ties == total || y_ties == total {
        return Err(Error::ConstantInput);
    }
    let s = total as f64 - x_ties as f64 - y_ties as f64 + joint_ties as f64 - 2.0 * swaps as f64;
    let denom = ((total - x_ties) as f64 * (total - y_ties) as f64).sqrt();
    Ok((s / denom).clamp(-1.0, 1.0))
}

/// Sorts `v` and returns the number of strictly inverted pairs.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (lo, hi) = v.split_at_mut(mid);
        let (blo, bhi) = buf.split_at_mut(mid);
        merge_count(lo, blo) + merge_count(hi, bhi)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Search box for the fitter. The six K coefficients always range over [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitBounds {
    pub max_len: (f64, f64),
    pub alpha: (f64, f64),
}

impl Default for FitBounds {
    fn default() -> Self {
        Self {
            max_len: (64.0, 4096.0),
            alpha: (0.5, 4.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitSearch {
    /// Random candidates drawn before refinement.
    pub iterations: usize,
    pub seed: u64,
    pub bounds: FitBounds,
}

impl Default for FitSearch {
    fn default() -> Self {
        Self {
            iterations: 500,
            seed: 0,
            bounds: FitBounds::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: ScoreParams,
    pub tau: f64,
    /// Correlation achieved by the built-in default coefficients.
    pub default_tau: Option<f64>,
}

// Search vector layout: six K (ft/fwd/bwd x cond/uncond), forward M, backward M, alpha.
const DIMS: usize = 9;

fn to_params(x: &[f64; DIMS]) -> ScoreParams {
    let fwd = |k| JumpParams::new(k, x[6], x[8]);
    let bwd = |k| JumpParams::new(k, x[7], x[8]);
    ScoreParams {
        fall_through: DirectionParams {
            conditional: JumpParams::new(x[0], 1.0, 1.0),
            unconditional: JumpParams::new(x[1], 1.0, 1.0),
        },
        forward: DirectionParams {
            conditional: fwd(x[2]),
            unconditional: fwd(x[3]),
        },
        backward: DirectionParams {
            conditional: bwd(x[4]),
            unconditional: bwd(x[5]),
        },
    }
}

fn from_params(p: &ScoreParams) -> [f64; DIMS] {
    [
        p.fall_through.conditional.k,
        p.fall_through.unconditional.k,
        p.forward.conditional.k,
        p.forward.unconditional.k,
        p.backward.conditional.k,
        p.backward.unconditional.k,
        p.forward.conditional.max_len,
        p.backward.conditional.max_len,
        p.forward.conditional.alpha,
    ]
}

fn box_of(bounds: &FitBounds) -> [(f64, f64); DIMS] {
    let k = (0.0, 1.0);
    [
        k,
        k,
        k,
        k,
        k,
        k,
        bounds.max_len,
        bounds.max_len,
        bounds.alpha,
    ]
}

/// Tau of `params` on `measurements`; `None` when the scores are constant.
pub fn params_tau(measurements: &[MeasurementRecord], params: &ScoreParams) -> Result<Option<f64>> {
    let perf: Vec<f64> = measurements.iter().map(|m| m.perf).collect();
    let scores: Vec<f64> = measurements
        .iter()
        .map(|m| score_records(&m.branches, params))
        .collect();
    match kendall_tau(&perf, &scores) {
        Ok(t) => Ok(Some(t)),
        Err(Error::ConstantInput) if !is_constant(&perf) => Ok(None),
        Err(e) => Err(e),
    }
}

fn is_constant(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] == w[1])
}

pub fn fit_params(measurements: &[MeasurementRecord], search: &FitSearch) -> Result<FitResult> {
    if measurements.len() < 3 {
        return Err(Error::NotEnoughData {
            needed: 3,
            got: measurements.len(),
        });
    }
    let perf: Vec<f64> = measurements.iter().map(|m| m.perf).collect();
    if is_constant(&perf) {
        return Err(Error::ConstantInput);
    }
    let (lo_m, hi_m) = search.bounds.max_len;
    let (lo_a, hi_a) = search.bounds.alpha;
    if !(0.0 < lo_m && lo_m <= hi_m && 0.0 < lo_a && lo_a <= hi_a) {
        return Err(Error::InvalidConfig(format!(
            "bad search bounds {:?}",
            search.bounds
        )));
    }
    let bounds = box_of(&search.bounds);

    let evaluate = |x: &[f64; DIMS]| -> f64 {
        let params = to_params(x);
        let scores: Vec<f64> = measurements
            .iter()
            .map(|m| score_records(&m.branches, &params))
            .collect();
        kendall_tau(&perf, &scores).unwrap_or(f64::NEG_INFINITY)
    };

    // Candidate 0 is the default model clamped into the box.
    let mut rng = ChaCha8Rng::seed_from_u64(search.seed);
    let mut start = from_params(&DEFAULT_EXTTSP);
    for (v, (lo, hi)) in start.iter_mut().zip(bounds) {
        *v = v.clamp(lo, hi);
    }
    let mut candidates = vec![start];
    for _ in 0..search.iterations {
        let mut x = [0.0; DIMS];
        for (v, (lo, hi)) in x.iter_mut().zip(bounds) {
            *v = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
        }
        candidates.push(x);
    }
    let taus: Vec<f64> = candidates.par_iter().map(&evaluate).collect();
    let mut best_idx = 0;
    for (i, &t) in taus.iter().enumerate() {
        if t > taus[best_idx] {
            best_idx = i;
        }
    }
    let mut best = candidates[best_idx];
    let mut best_tau = taus[best_idx];

    // Coordinate refinement with shrinking steps.
    let mut step = 0.25;
    while step >= 1.0 / 512.0 {
        let mut improved = true;
        while improved {
            improved = false;
            for d in 0..DIMS {
                let (lo, hi) = bounds[d];
                let delta = step * (hi - lo);
                if delta == 0.0 {
                    continue;
                }
                let trials: Vec<[f64; DIMS]> = [best[d] - delta, best[d] + delta]
                    .into_iter()
                    .map(|v| {
                        let mut x = best;
                        x[d] = v.clamp(lo, hi);
                        x
                    })
                    .collect();
                let trial_taus: Vec<f64> = trials.par_iter().map(&evaluate).collect();
                for (x, t) in trials.into_iter().zip(trial_taus) {
                    if t > best_tau {
                        best = x;
                        best_tau = t;
                        improved = true;
                    }
                }
            }
        }
        step /= 2.0;
    }

    if !best_tau.is_finite() {
        return Err(Error::ConstantInput);
    }
    let default_tau = params_tau(measurements, &DEFAULT_EXTTSP)?;
    Ok(FitResult {
        params: to_params(&best),
        tau: best_tau,
        default_tau,
    })
}

/// Simplifies fitted coefficients: weights below `threshold` become 0,
/// weights within `threshold` of each other are replaced by their mean
/// (rounded to two decimals), maximum lengths are rounded to whole 64-byte
/// cache lines and exponents to one decimal.
pub fn round_params(params: &ScoreParams, threshold: f64) -> ScoreParams {
    let mut x = from_params(params);
    let mut ks: Vec<(usize, f64)> = (0..6).map(|i| (i, x[i])).collect();
    ks.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut group: Vec<(usize, f64)> = Vec::new();
    let flush = |group: &mut Vec<(usize, f64)>, x: &mut [f64; DIMS]| {
        if group.is_empty() {
            return;
        }
        let mean = group.iter().map(|g| g.1).sum::<f64>() / group.len() as f64;
        let value = if mean < threshold {
            0.0
        } else {
            (mean * 100.0).round() / 100.0
        };
        for &(i, _) in group.iter() {
            x[i] = value;
        }
        group.clear();
    };
    for k in ks {
        if let Some(first) = group.first() {
            if k.1 - first.1 >= threshold {
                flush(&mut group, &mut x);
            }
        }
        group.push(k);
    }
    flush(&mut group, &mut x);
    for k in &mut x[..6] {
        if *k < threshold {
            *k = 0.0;
        }
    }
    x[6] = ((x[6] / 64.0).round() * 64.0).max(64.0);
    x[7] = ((x[7] / 64.0).round() * 64.0).max(64.0);
    x[8] = ((x[8] * 10.0).round() / 10.0).max(0.1);
    to_params(&x)
}
