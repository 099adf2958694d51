//! Weighted control flow graphs and layout geometry.
//!
//! A [`ControlFlowGraph`] lists its blocks in original layout order; block ids
//! are dense indices `0..n` independent of that order. A [`Layout`] is a
//! permutation of block ids, and blocks are packed back to back starting at
//! byte 0 with no padding.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type BlockId = usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasicBlock {
    pub id: BlockId,
    /// Size in bytes.
    pub size: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpEdge {
    pub src: BlockId,
    pub dst: BlockId,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlFlowGraph {
    pub name: String,
    pub entry: BlockId,
    /// Blocks in original layout order.
    pub blocks: Vec<BasicBlock>,
    #[serde(default)]
    pub edges: Vec<JumpEdge>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Empty,
    DuplicateBlockId(BlockId),
    MissingBlockId(BlockId),
    ZeroSize(BlockId),
    BadCount {
        block: BlockId,
        count: f64,
    },
    InvalidEntry(BlockId),
    UnknownBlock {
        edge: usize,
        block: BlockId,
    },
    BadWeight {
        src: BlockId,
        dst: BlockId,
        weight: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "graph has no blocks"),
            Violation::DuplicateBlockId(id) => write!(f, "duplicate block id {id}"),
            Violation::MissingBlockId(id) => write!(f, "block ids not contiguous: {id} missing"),
            Violation::ZeroSize(id) => write!(f, "block {id} has zero size"),
            Violation::BadCount { block, count } => {
                write!(f, "block {block} has invalid count {count}")
            }
            Violation::InvalidEntry(id) => write!(f, "entry {id} is not a block"),
            Violation::UnknownBlock { edge, block } => {
                write!(f, "edge #{edge} references unknown block id {block}")
            }
            Violation::BadWeight { src, dst, weight } => {
                write!(f, "edge {src}->{dst} has invalid weight {weight}")
            }
        }
    }
}

impl ControlFlowGraph {
    pub fn new(
        name: impl Into<String>,
        entry: BlockId,
        blocks: Vec<BasicBlock>,
        edges: Vec<JumpEdge>,
    ) -> Self {
        Self {
            name: name.into(),
            entry,
            blocks,
            edges,
        }
    }

    /// Builds a graph whose original order is `0..sizes.len()`, entry 0.
    pub fn from_sizes(
        name: impl Into<String>,
        sizes: &[u64],
        edges: impl IntoIterator<Item = (BlockId, BlockId, f64)>,
    ) -> Self {
        let blocks = sizes
            .iter()
            .enumerate()
            .map(|(id, &size)| BasicBlock {
                id,
                size,
                count: None,
            })
            .collect();
        let edges = edges
            .into_iter()
            .map(|(src, dst, weight)| JumpEdge { src, dst, weight })
            .collect();
        Self::new(name, 0, blocks, edges)
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Block sizes indexed by block id. Assumes a valid graph.
    pub fn sizes_by_id(&self) -> Vec<u64> {
        let mut sizes = vec![0; self.blocks.len()];
        for b in &self.blocks {
            sizes[b.id] = b.size;
        }
        sizes
    }

    /// Ids in original layout order.
    pub fn original_order(&self) -> Vec<BlockId> {
        self.blocks.iter().map(|b| b.id).collect()
    }

    /// Number of distinct successors of every block, indexed by id.
    pub fn out_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.blocks.len()];
        for e in &self.edges {
            deg[e.src] += 1;
        }
        deg
    }

    /// Execution count per block id. A missing count falls back to the
    /// larger of total incoming and total outgoing weight.
    pub fn block_counts(&self) -> Vec<f64> {
        let n = self.blocks.len();
        let mut incoming = vec![0.0; n];
        let mut outgoing = vec![0.0; n];
        for e in &self.edges {
            outgoing[e.src] += e.weight;
            incoming[e.dst] += e.weight;
        }
        let mut counts = vec![0.0; n];
        for b in &self.blocks {
            counts[b.id] = b
                .count
                .unwrap_or_else(|| incoming[b.id].max(outgoing[b.id]));
        }
        counts
    }

    /// Returns the graph with parallel edges merged (weights summed), in
    /// order of first appearance.
    pub fn normalized(&self) -> ControlFlowGraph {
        let mut index: BTreeMap<(BlockId, BlockId), usize> = BTreeMap::new();
        let mut edges: Vec<JumpEdge> = Vec::with_capacity(self.edges.len());
        for e in &self.edges {
            match index.get(&(e.src, e.dst)) {
                Some(&i) => edges[i].weight += e.weight,
                None => {
                    index.insert((e.src, e.dst), edges.len());
                    edges.push(e.clone());
                }
            }
        }
        ControlFlowGraph {
            edges,
            ..self.clone()
        }
    }

    /// Errors unless the graph is valid and has no parallel edges.
    pub fn check(&self) -> Result<()> {
        let violations = validate(self);
        if !violations.is_empty() {
            return Err(Error::InvalidCfg(violations));
        }
        let mut seen = std::collections::HashSet::with_capacity(self.edges.len());
        for e in &self.edges {
            if !seen.insert((e.src, e.dst)) {
                return Err(Error::InvalidConfig(format!(
                    "parallel edges {}->{} in {}; normalize the graph first",
                    e.src, e.dst, self.name
                )));
            }
        }
        Ok(())
    }
}

/// Returns every invariant violation of `cfg`; an empty list means valid.
pub fn validate(cfg: &ControlFlowGraph) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = cfg.blocks.len();
    if n == 0 {
        out.push(Violation::Empty);
    }
    let mut seen = vec![false; n];
    for b in &cfg.blocks {
        if b.id >= n {
            // An out-of-range id means some id below n is missing; reported below.
        } else if seen[b.id] {
            out.push(Violation::DuplicateBlockId(b.id));
        } else {
            seen[b.id] = true;
        }
        if b.size == 0 {
            out.push(Violation::ZeroSize(b.id));
        }
        if let Some(c) = b.count {
            if !(c.is_finite() && c >= 0.0) {
                out.push(Violation::BadCount {
                    block: b.id,
                    count: c,
                });
            }
        }
    }
    for (id, present) in seen.iter().enumerate() {
        if !present {
            out.push(Violation::MissingBlockId(id));
        }
    }
    if cfg.entry >= n {
        out.push(Violation::InvalidEntry(cfg.entry));
    }
    for (i, e) in cfg.edges.iter().enumerate() {
        for block in [e.src, e.dst] {
            if block >= n {
                out.push(Violation::UnknownBlock { edge: i, block });
            }
        }
        if !(e.weight.is_finite() && e.weight >= 0.0) {
            out.push(Violation::BadWeight {
                src: e.src,
                dst: e.dst,
                weight: e.weight,
            });
        }
    }
    out
}

/// Validates and normalizes in one step.
pub fn validated(cfg: &ControlFlowGraph) -> Result<ControlFlowGraph> {
    let violations = validate(cfg);
    if violations.is_empty() {
        Ok(cfg.normalized())
    } else {
        Err(Error::InvalidCfg(violations))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Layout {
    pub order: Vec<BlockId>,
}

impl Layout {
    pub fn new(order: Vec<BlockId>) -> Self {
        Self { order }
    }

    pub fn original(cfg: &ControlFlowGraph) -> Self {
        Self::new(cfg.original_order())
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Errors unless the order is a permutation of the graph's block ids.
    pub fn check(&self, cfg: &ControlFlowGraph) -> Result<()> {
        let n = cfg.num_blocks();
        if self.order.len() != n {
            return Err(Error::InvalidLayout(format!(
                "{} blocks in layout, {} in graph",
                self.order.len(),
                n
            )));
        }
        let mut seen = vec![false; n];
        for &b in &self.order {
            if b >= n {
                return Err(Error::InvalidLayout(format!("unknown block {b}")));
            }
            if std::mem::replace(&mut seen[b], true) {
                return Err(Error::InvalidLayout(format!("block {b} placed twice")));
            }
        }
        Ok(())
    }

    /// Like [`Layout::check`], additionally requiring the entry block first.
    pub fn check_entry_first(&self, cfg: &ControlFlowGraph) -> Result<()> {
        self.check(cfg)?;
        if self.order[0] != cfg.entry {
            return Err(Error::InvalidLayout(format!(
                "entry {} is not first (found {})",
                cfg.entry, self.order[0]
            )));
        }
        Ok(())
    }
}

/// Start byte of every block, indexed by block id.
pub fn offsets(cfg: &ControlFlowGraph, layout: &Layout) -> Result<Vec<u64>> {
    layout.check(cfg)?;
    let sizes = cfg.sizes_by_id();
    Ok(packed_offsets(&sizes, &layout.order))
}

pub(crate) fn packed_offsets(sizes: &[u64], order: &[BlockId]) -> Vec<u64> {
    let mut start = vec![0; sizes.len()];
    let mut cursor = 0;
    for &b in order {
        start[b] = cursor;
        cursor += sizes[b];
    }
    start
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "ft", alias = "fall-through", alias = "fallthrough")]
    FallThrough,
    #[serde(rename = "fwd", alias = "forward")]
    Forward,
    #[serde(rename = "bwd", alias = "backward")]
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Conditionality {
    Conditional,
    Unconditional,
}

impl Conditionality {
    /// One successor is an unconditional jump; two or more (switches
    /// included) count as conditional.
    pub fn from_out_degree(degree: usize) -> Self {
        if degree <= 1 {
            Conditionality::Unconditional
        } else {
            Conditionality::Conditional
        }
    }

    pub fn is_conditional(self) -> bool {
        self == Conditionality::Conditional
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BranchClass {
    pub direction: Direction,
    pub conditionality: Conditionality,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Jump {
    pub len: u64,
    pub direction: Direction,
}

/// Distance from the end of `src` to the start of `dst` given the start bytes.
#[inline]
pub fn jump_between(src_start: u64, src_size: u64, dst_start: u64) -> Jump {
    let src_end = src_start + src_size;
    if dst_start >= src_end {
        let len = dst_start - src_end;
        let direction = if len == 0 {
            Direction::FallThrough
        } else {
            Direction::Forward
        };
        Jump { len, direction }
    } else {
        Jump {
            len: src_end - dst_start,
            direction: Direction::Backward,
        }
    }
}

pub fn jump_length(
    cfg: &ControlFlowGraph,
    layout: &Layout,
    src: BlockId,
    dst: BlockId,
) -> Result<Jump> {
    if src == dst {
        return Err(Error::InvalidConfig(format!("self jump on block {src}")));
    }
    let starts = offsets(cfg, layout)?;
    let sizes = cfg.sizes_by_id();
    Ok(jump_between(starts[src], sizes[src], starts[dst]))
}
