//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::collections::BTreeSet;

use blocklayout::{BlockId, ControlFlowGraph, Layout, ScoreParams};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

/// ExtTSP score computed from scratch: byte positions by walking the order,
/// each edge classified directly from its endpoints' positions.
pub fn oracle_score(cfg: &ControlFlowGraph, order: &[BlockId], params: &ScoreParams) -> f64 {
    let n = cfg.blocks.len();
    let mut size = vec![0u64; n];
    for b in &cfg.blocks {
        size[b.id] = b.size;
    }
    let mut start = vec![0u64; n];
    let mut pos = 0u64;
    for &b in order {
        start[b] = pos;
        pos += size[b];
    }
    let mut succ: Vec<BTreeSet<BlockId>> = vec![BTreeSet::new(); n];
    for e in &cfg.edges {
        succ[e.src].insert(e.dst);
    }
    let mut total = 0.0;
    for e in &cfg.edges {
        if e.src == e.dst {
            continue;
        }
        let conditional = succ[e.src].len() >= 2;
        let src_end = start[e.src] + size[e.src];
        let dst_start = start[e.dst];
        let (dir, len) = if dst_start == src_end {
            (&params.fall_through, 0)
        } else if dst_start > start[e.src] {
            (&params.forward, dst_start - src_end)
        } else {
            (&params.backward, src_end - dst_start)
        };
        let p = if conditional {
            dir.conditional
        } else {
            dir.unconditional
        };
        let factor = if len == 0 {
            1.0
        } else if (len as f64) < p.max_len {
            1.0 - (len as f64 / p.max_len).powf(p.alpha)
        } else {
            0.0
        };
        total += e.weight * p.k * factor;
    }
    total
}

pub fn oracle_tsp(cfg: &ControlFlowGraph, order: &[BlockId]) -> f64 {
    let mut total = 0.0;
    for w in order.windows(2) {
        for e in &cfg.edges {
            if e.src == w[0] && e.dst == w[1] {
                total += e.weight;
            }
        }
    }
    total
}

/// Every permutation of `items`, by recursive insertion.
pub fn permutations(items: &[BlockId]) -> Vec<Vec<BlockId>> {
    if items.is_empty() {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

/// Best entry-first order by brute force over the oracle score.
pub fn oracle_best(cfg: &ControlFlowGraph, params: &ScoreParams) -> (f64, Vec<BlockId>) {
    let rest: Vec<BlockId> = (0..cfg.blocks.len()).filter(|&b| b != cfg.entry).collect();
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for tail in permutations(&rest) {
        let mut order = vec![cfg.entry];
        order.extend(tail);
        let s = oracle_score(cfg, &order, params);
        if s > best.0 {
            best = (s, order);
        }
    }
    best
}

/// Kendall tau-b by enumerating all pairs.
pub fn oracle_tau(xs: &[f64], ys: &[f64]) -> f64 {
    let (mut c, mut d, mut tx, mut ty) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            let a = (xs[i] - xs[j]).signum() * (xs[i] != xs[j]) as i32 as f64;
            let b = (ys[i] - ys[j]).signum() * (ys[i] != ys[j]) as i32 as f64;
            if a == 0.0 && b != 0.0 {
                tx += 1.0;
            } else if b == 0.0 && a != 0.0 {
                ty += 1.0;
            } else if a * b > 0.0 {
                c += 1.0;
            } else if a * b < 0.0 {
                d += 1.0;
            }
        }
    }
    (c - d) / ((c + d + tx) * (c + d + ty)).sqrt()
}

/// Random graph with arbitrary topology, including parallel edges merged
/// away and self-loops kept.
pub fn random_cfg<R: Rng>(rng: &mut R, name: &str, n: usize, edges: usize) -> ControlFlowGraph {
    let sizes: Vec<u64> = (0..n).map(|_| rng.gen_range(1..=64)).collect();
    let list: Vec<(BlockId, BlockId, f64)> = (0..edges)
        .map(|_| {
            let w = if rng.gen_bool(0.1) {
                0.0
            } else {
                rng.gen_range(1..=1000) as f64
            };
            (rng.gen_range(0..n), rng.gen_range(0..n), w)
        })
        .collect();
    ControlFlowGraph::from_sizes(name, &sizes, list).normalized()
}

pub fn random_entry_first_layout<R: Rng>(rng: &mut R, cfg: &ControlFlowGraph) -> Layout {
    let mut rest: Vec<BlockId> = (0..cfg.blocks.len()).filter(|&b| b != cfg.entry).collect();
    rest.shuffle(rng);
    let mut order = vec![cfg.entry];
    order.extend(rest);
    Layout::new(order)
}

/// Strategy for small valid graphs: sizes, edges with integer weights
/// (zero allowed), self-loops and parallel edges merged.
pub fn arb_cfg(max_blocks: usize, max_edges: usize) -> impl Strategy<Value = ControlFlowGraph> {
    (1..=max_blocks).prop_flat_map(move |n| {
        let sizes = prop::collection::vec(1u64..=64, n);
        let edges = prop::collection::vec((0..n, 0..n, 0u32..=1000), 0..=max_edges);
        (sizes, edges).prop_map(|(sizes, edges)| {
            ControlFlowGraph::from_sizes(
                "p",
                &sizes,
                edges.into_iter().map(|(s, d, w)| (s, d, w as f64)),
            )
            .normalized()
        })
    })
}

/// A graph together with a random permutation of its blocks.
pub fn arb_cfg_and_order(
    max_blocks: usize,
    max_edges: usize,
) -> impl Strategy<Value = (ControlFlowGraph, Vec<BlockId>)> {
    arb_cfg(max_blocks, max_edges).prop_flat_map(|cfg| {
        let order: Vec<BlockId> = (0..cfg.blocks.len()).collect();
        (Just(cfg), Just(order).prop_shuffle())
    })
}

pub fn arb_params() -> impl Strategy<Value = ScoreParams> {
    let jp = || (0.0f64..=1.0, 1.0f64..4096.0, 0.5f64..4.0);
    prop::array::uniform6(jp()).prop_map(|a| {
        let mk = |(k, m, al): (f64, f64, f64)| blocklayout::scoring::JumpParams::new(k, m, al);
        let dp = |c, u| blocklayout::scoring::DirectionParams {
            conditional: mk(c),
            unconditional: mk(u),
        };
        ScoreParams {
            fall_through: dp(a[0], a[1]),
            forward: dp(a[2], a[3]),
            backward: dp(a[4], a[5]),
        }
    })
}
