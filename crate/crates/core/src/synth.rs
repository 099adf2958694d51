//! Seeded synthetic control flow graphs.
//!
//! Graphs use ChaCha8 seeded via `seed_from_u64`, and every random draw
//! happens in a fixed order, so the same configuration always yields the same
//! graph. Block 0 is the entry and the original order is `0..n`. Each block is
//! reached from an earlier block (usually its predecessor), which makes every
//! block reachable from the entry; extra edges are short forward jumps plus a
//! fraction of loop back edges. Weights are traversal counts of simulated
//! profiling walks, so flow is conserved everywhere except where walks start
//! and stop.

use std::collections::HashSet;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use crate::cfg_model::{BasicBlock, BlockId, ControlFlowGraph, JumpEdge};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightDistribution {
    /// Relative branch weights uniform in `1..=max`.
    Uniform { max: u64 },
    /// Relative branch weights `1..=1000` drawn by Zipf rank with exponent `s`.
    Zipf { s: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub seed: u64,
    pub n_blocks: usize,
    pub edge_factor: f64,
    pub weights: WeightDistribution,
    pub size_range: (u64, u64),
    pub back_edge_fraction: f64,
    pub cold_fraction: f64,
    /// Number of profiling walks; edge weights are traversal counts.
    pub walks: usize,
    /// Walks stop after `max_walk_len_factor * n_blocks` steps.
    pub max_walk_len_factor: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_blocks: 10,
            edge_factor: 1.5,
            weights: WeightDistribution::Zipf { s: 1.0 },
            size_range: (1, 64),
            back_edge_fraction: 0.15,
            cold_fraction: 0.1,
            walks: 1000,
            max_walk_len_factor: 20,
        }
    }
}

/// Forward and backward jump targets are drawn within this many blocks.
const WINDOW: usize = 16;

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.size_range;
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_blocks == 0 {
            return bad("n_blocks must be at least 1".into());
        }
        if lo == 0 || lo > hi {
            return bad(format!(
                "size range [{lo}, {hi}] must satisfy 1 <= min <= max"
            ));
        }
        for (name, f) in [
            ("back_edge_fraction", self.back_edge_fraction),
            ("cold_fraction", self.cold_fraction),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return bad(format!("{name} = {f} outside [0, 1]"));
            }
        }
        if !(self.edge_factor >= 0.0 && self.edge_factor.is_finite()) {
            return bad(format!(
                "edge_factor = {} must be non-negative",
                self.edge_factor
            ));
        }
        match self.weights {
            WeightDistribution::Uniform { max: 0 } => bad("uniform max must be positive".into()),
            WeightDistribution::Zipf { s } if !(s.is_finite() && s > 0.0) => {
                bad("zipf exponent must be positive".into())
            }
            _ => Ok(()),
        }
    }
}

/// Edge weights from random walks starting at the entry. Each out-edge gets
/// a relative branch weight from the configured distribution (zero for cold
/// edges); a walk follows successors in proportion to those weights and stops
/// at a block with no live successor or after `max_walk_len` steps.
fn walk_profile(
    config: &GenConfig,
    rng: &mut ChaCha8Rng,
    n: usize,
    pairs: &[(BlockId, BlockId)],
) -> Vec<f64> {
    let zipf = match config.weights {
        WeightDistribution::Zipf { s } => Some(Zipf::new(1000, s).expect("validated exponent")),
        WeightDistribution::Uniform { .. } => None,
    };
    let mut succ: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, &(s, _)) in pairs.iter().enumerate() {
        let bias = if rng.gen_bool(config.cold_fraction) {
            0.0
        } else {
            match (config.weights, &zipf) {
                (WeightDistribution::Uniform { max }, _) => rng.gen_range(1..=max) as f64,
                (_, Some(z)) => z.sample(rng),
                _ => unreachable!(),
            }
        };
        succ[s].push((i, bias));
    }
    let totals: Vec<f64> = succ
        .iter()
        .map(|v| v.iter().map(|&(_, b)| b).sum())
        .collect();
    let max_len = config.max_walk_len_factor * n;
    let mut counts = vec![0.0; pairs.len()];
    for _ in 0..config.walks {
        let mut at = 0;
        for _ in 0..max_len {
            if totals[at] <= 0.0 {
                break;
            }
            let mut r = rng.gen_range(0.0..totals[at]);
            let mut pick = None;
            for &(i, b) in &succ[at] {
                if b > 0.0 {
                    pick = Some(i);
                    if r < b {
                        break;
                    }
                    r -= b;
                }
            }
            let i = pick.expect("positive total has a live successor");
            counts[i] += 1.0;
            at = pairs[i].1;
        }
    }
    counts
}

pub fn generate(config: &GenConfig) -> Result<ControlFlowGraph> {
    generate_named(config, format!("synth_{}_{}", config.seed, config.n_blocks))
}

pub fn generate_named(config: &GenConfig, name: impl Into<String>) -> Result<ControlFlowGraph> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.n_blocks;
    let (lo, hi) = config.size_range;
    let blocks: Vec<BasicBlock> = (0..n)
        .map(|id| BasicBlock {
            id,
            size: rng.gen_range(lo..=hi),
            count: None,
        })
        .collect();

    let mut out_degree = vec![0usize; n];
    let mut seen: HashSet<(BlockId, BlockId)> = HashSet::new();
    let mut pairs: Vec<(BlockId, BlockId)> = Vec::new();
    let mut add = |s: BlockId,
                   t: BlockId,
                   out_degree: &mut Vec<usize>,
                   pairs: &mut Vec<(BlockId, BlockId)>| {
        if s != t && seen.insert((s, t)) {
            out_degree[s] += 1;
            pairs.push((s, t));
            true
        } else {
            false
        }
    };

    // Reachability skeleton: every block gets an edge from an earlier block.
    for i in 1..n {
        let prev = i - 1;
        let parent = if out_degree[prev] < 2 && rng.gen_bool(0.75) {
            prev
        } else {
            let lo = i.saturating_sub(WINDOW);
            let open: Vec<BlockId> = (lo..i).filter(|&j| out_degree[j] < 2).collect();
            if open.is_empty() {
                rng.gen_range(lo..i)
            } else {
                open[rng.gen_range(0..open.len())]
            }
        };
        add(parent, i, &mut out_degree, &mut pairs);
    }

    let target = ((config.edge_factor * n as f64).round() as usize).clamp(n - 1, 2 * n);
    let mut attempts = 0;
    while pairs.len() < target && attempts < 20 * target + 20 && n > 1 {
        attempts += 1;
        let s = rng.gen_range(0..n);
        if out_degree[s] >= 2 {
            continue;
        }
        let t = if rng.gen_bool(config.back_edge_fraction) {
            if s == 0 {
                continue;
            }
            rng.gen_range(s.saturating_sub(WINDOW)..s)
        } else {
            if s + 1 >= n {
                continue;
            }
            rng.gen_range(s + 1..=(s + WINDOW).min(n - 1))
        };
        add(s, t, &mut out_degree, &mut pairs);
    }

    let weights = walk_profile(config, &mut rng, n, &pairs);
    let edges = pairs
        .into_iter()
        .zip(weights)
        .map(|((src, dst), weight)| JumpEdge { src, dst, weight })
        .collect();

    Ok(ControlFlowGraph::new(name, 0, blocks, edges))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub seed: u64,
    pub count: usize,
    pub min_blocks: usize,
    pub max_blocks: usize,
    pub base: GenConfig,
}

impl Default for CorpusConfig {
    /// The 500-graph corpus of 3 to 10 blocks used for quality studies.
    fn default() -> Self {
        Self {
            seed: 2020,
            count: 500,
            min_blocks: 3,
            max_blocks: 10,
            base: GenConfig::default(),
        }
    }
}

/// Graphs named `f0000`, `f0001`, ...; each draws its size and seed from a
/// stream seeded by `config.seed`.
pub fn corpus(config: &CorpusConfig) -> Result<Vec<ControlFlowGraph>> {
    if config.min_blocks == 0 || config.min_blocks > config.max_blocks {
        return Err(Error::InvalidConfig(format!(
            "block range [{}, {}] must satisfy 1 <= min <= max",
            config.min_blocks, config.max_blocks
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    (0..config.count)
        .map(|i| {
            let n_blocks = rng.gen_range(config.min_blocks..=config.max_blocks);
            let seed = rng.next_u64();
            let gen = GenConfig {
                seed,
                n_blocks,
                ..config.base.clone()
            };
            generate_named(&gen, format!("f{i:04}"))
        })
        .collect()
}

pub fn default_corpus() -> Vec<ControlFlowGraph> {
    corpus(&CorpusConfig::default()).expect("default corpus config is valid")
}
