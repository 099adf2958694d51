//! Optimal ExtTSP layouts for small functions.
//!
//! Two independent routes: plain enumeration of every entry-first
//! permutation, and a depth-first branch-and-bound that fixes blocks left to
//! right. A placed prefix has final offsets, so the edges among its blocks
//! are scored exactly; every other edge is bounded by `w * max K`, since the
//! length decay never exceeds 1.
//!
//! Dynamic programming over (subset, last block) does not work here: an
//! edge's contribution depends on the byte offsets of both endpoints, which
//! that state does not determine.

use std::time::{Duration, Instant};

use crate::cfg_model::{
    jump_between, BlockId, BranchClass, Conditionality, ControlFlowGraph, Layout,
};
use crate::error::{Error, Result};
use crate::scoring::{edge_contribution, exttsp_score, ScoreParams, DEFAULT_EXTTSP};

/// Largest function [`exhaustive`] accepts.
pub const EXHAUSTIVE_LIMIT: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct ExactConfig {
    pub max_blocks: usize,
    pub time_budget: Duration,
    pub params: ScoreParams,
}

impl Default for ExactConfig {
    fn default() -> Self {
        Self {
            max_blocks: 15,
            time_budget: Duration::from_secs(60),
            params: DEFAULT_EXTTSP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExactStatus {
    Optimal,
    /// The budget ran out; the layout is the best one found.
    BudgetExceeded,
}

impl ExactStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ExactStatus::Optimal => "optimal",
            ExactStatus::BudgetExceeded => "budget-exceeded",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactResult {
    pub layout: Layout,
    pub score: f64,
    pub status: ExactStatus,
}

/// Scores every entry-first permutation and keeps the first best one in
/// lexicographic order.
pub fn exhaustive(cfg: &ControlFlowGraph, params: &ScoreParams) -> Result<ExactResult> {
    cfg.check()?;
    let n = cfg.num_blocks();
    if n > EXHAUSTIVE_LIMIT {
        return Err(Error::TooManyBlocks {
            blocks: n,
            limit: EXHAUSTIVE_LIMIT,
        });
    }
    let mut rest: Vec<BlockId> = (0..n).filter(|&b| b != cfg.entry).collect();
    let mut order = vec![cfg.entry];
    let mut best: Option<(f64, Vec<BlockId>)> = None;
    permute(cfg, params, &mut order, &mut rest, &mut best)?;
    let (score, order) = best.expect("at least one permutation");
    Ok(ExactResult {
        layout: Layout::new(order),
        score,
        status: ExactStatus::Optimal,
    })
}

fn permute(
    cfg: &ControlFlowGraph,
    params: &ScoreParams,
    order: &mut Vec<BlockId>,
    rest: &mut Vec<BlockId>,
    best: &mut Option<(f64, Vec<BlockId>)>,
) -> Result<()> {
    if rest.is_empty() {
        let layout = Layout::new(order.clone());
        let score = exttsp_score(cfg, &layout, params)?;
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            *best = Some((score, layout.order));
        }
        return Ok(());
    }
    for i in 0..rest.len() {
        let b = rest.remove(i);
        order.push(b);
        permute(cfg, params, order, rest, best)?;
        order.pop();
        rest.insert(i, b);
    }
    Ok(())
}

struct Search<'a> {
    params: &'a ScoreParams,
    sizes: Vec<u64>,
    /// Per block: (other endpoint, edge index, block is the source).
    incident: Vec<Vec<(BlockId, usize, bool)>>,
    weights: Vec<f64>,
    conditionality: Vec<Conditionality>,
    max_k: f64,
    placed: Vec<bool>,
    start: Vec<u64>,
    order: Vec<BlockId>,
    incumbent: f64,
    best_order: Vec<BlockId>,
    deadline: Instant,
    nodes: u64,
    out_of_time: bool,
}

impl<'a> Search<'a> {
    fn new(cfg: &ControlFlowGraph, params: &'a ScoreParams, deadline: Instant) -> Self {
        let n = cfg.num_blocks();
        let degrees = cfg.out_degrees();
        let mut incident = vec![Vec::new(); n];
        let mut weights = Vec::new();
        let mut conditionality = Vec::new();
        for e in cfg.edges.iter().filter(|e| e.src != e.dst) {
            let idx = weights.len();
            weights.push(e.weight);
            conditionality.push(Conditionality::from_out_degree(degrees[e.src]));
            incident[e.src].push((e.dst, idx, true));
            incident[e.dst].push((e.src, idx, false));
        }
        Self {
            params,
            sizes: cfg.sizes_by_id(),
            incident,
            weights,
            conditionality,
            max_k: params.max_k(),
            placed: vec![false; n],
            start: vec![0; n],
            order: Vec::with_capacity(n),
            incumbent: f64::NEG_INFINITY,
            best_order: Vec::new(),
            deadline,
            nodes: 0,
            out_of_time: false,
        }
    }

    fn edge_value(&self, idx: usize, src: BlockId, dst: BlockId) -> f64 {
        let jump = jump_between(self.start[src], self.sizes[src], self.start[dst]);
        let class = BranchClass {
            direction: jump.direction,
            conditionality: self.conditionality[idx],
        };
        edge_contribution(self.weights[idx], class, jump.len, self.params)
    }

    /// Places `b` at `cursor`; returns the exact score of edges it closes and
    /// their optimistic value, which leaves the remainder bound.
    fn place(&mut self, b: BlockId, cursor: u64) -> (f64, f64) {
        self.placed[b] = true;
        self.start[b] = cursor;
        self.order.push(b);
        let mut exact = 0.0;
        let mut optimistic = 0.0;
        for &(other, idx, is_src) in &self.incident[b] {
            if self.placed[other] {
                let (s, t) = if is_src { (b, other) } else { (other, b) };
                exact += self.edge_value(idx, s, t);
                optimistic += self.weights[idx] * self.max_k;
            }
        }
        (exact, optimistic)
    }

    fn unplace(&mut self, b: BlockId) {
        self.placed[b] = false;
        self.order.pop();
    }

    fn dfs(&mut self, cursor: u64, prefix: f64, remaining: f64) {
        let n = self.placed.len();
        if self.order.len() == n {
            if prefix > self.incumbent {
                self.incumbent = prefix;
                self.best_order = self.order.clone();
            }
            return;
        }
        self.nodes += 1;
        if self.nodes % 1024 == 1 && Instant::now() >= self.deadline {
            self.out_of_time = true;
        }
        if self.out_of_time {
            return;
        }
        for b in 0..n {
            if self.placed[b] {
                continue;
            }
            let (exact, optimistic) = self.place(b, cursor);
            let child_prefix = prefix + exact;
            let child_remaining = remaining - optimistic;
            if child_prefix + child_remaining > self.incumbent {
                self.dfs(cursor + self.sizes[b], child_prefix, child_remaining);
            }
            self.unplace(b);
            if self.out_of_time {
                return;
            }
        }
    }
}

/// Upper bound on the best completion of an entry-first `prefix`: exact
/// score of edges inside the prefix plus `w * max K` for every other edge.
pub fn prefix_bound(cfg: &ControlFlowGraph, params: &ScoreParams, prefix: &[BlockId]) -> f64 {
    let mut search = Search::new(cfg, params, Instant::now());
    let total: f64 = search.weights.iter().map(|w| w * search.max_k).sum();
    let mut cursor = 0;
    let mut exact = 0.0;
    let mut closed = 0.0;
    for &b in prefix {
        let (e, o) = search.place(b, cursor);
        exact += e;
        closed += o;
        cursor += search.sizes[b];
    }
    exact + (total - closed)
}

pub fn branch_and_bound(cfg: &ControlFlowGraph, config: &ExactConfig) -> Result<ExactResult> {
    cfg.check()?;
    let n = cfg.num_blocks();
    if n > config.max_blocks {
        return Err(Error::TooManyBlocks {
            blocks: n,
            limit: config.max_blocks,
        });
    }
    if config.time_budget.is_zero() {
        return Err(Error::ZeroBudget);
    }
    let deadline = Instant::now() + config.time_budget;
    let params = &config.params;

    // Seed with the original order, entry moved to the front.
    let mut seed = vec![cfg.entry];
    seed.extend(cfg.original_order().into_iter().filter(|&b| b != cfg.entry));
    let seed_score = exttsp_score(cfg, &Layout::new(seed.clone()), params)?;

    let mut search = Search::new(cfg, params, deadline);
    search.incumbent = seed_score;
    search.best_order = seed;
    let total: f64 = search.weights.iter().map(|w| w * search.max_k).sum();
    let (exact, optimistic) = search.place(cfg.entry, 0);
    search.dfs(search.sizes[cfg.entry], exact, total - optimistic);

    let layout = Layout::new(search.best_order);
    let score = exttsp_score(cfg, &layout, params)?;
    let status = if search.out_of_time {
        ExactStatus::BudgetExceeded
    } else {
        ExactStatus::Optimal
    };
    Ok(ExactResult {
        layout,
        score,
        status,
    })
}
