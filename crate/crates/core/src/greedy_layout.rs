//! Greedy chain merging with chain splitting.
//!
//! Every block starts as its own chain. Each step merges the pair of
//! edge-connected chains with the largest ExtTSP gain, where a merge may
//! split one of the chains in two and interleave the pieces with the other
//! (six arrangements per split point). Chains longer than the split threshold
//! are only concatenated. Gains are cached per chain pair and recomputed only
//! for pairs touching the chain produced by the last merge.

use std::collections::BTreeMap;

use crate::cfg_model::{
    jump_between, BlockId, BranchClass, Conditionality, ControlFlowGraph, Layout,
};
use crate::error::{Error, Result};
use crate::scoring::{edge_contribution, strictly_better, ScoreParams, DEFAULT_EXTTSP};

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyConfig {
    /// Chains with more blocks than this are never split.
    pub split_threshold: usize,
    /// Weight given to cold edges that were fall-throughs in the original order.
    pub eps_fallthrough: f64,
    /// Weight given to all other cold edges.
    pub eps_jump: f64,
    pub params: ScoreParams,
    /// Reuse merge gains across iterations. Turning this off recomputes every
    /// pair on every iteration and must not change the result.
    pub memoize: bool,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        Self {
            split_threshold: 128,
            eps_fallthrough: 1e-4,
            eps_jump: 1e-5,
            params: DEFAULT_EXTTSP,
            memoize: true,
        }
    }
}

impl GreedyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_jump > 0.0
            && self.eps_jump < self.eps_fallthrough
            && self.eps_fallthrough < 1.0)
        {
            return Err(Error::InvalidConfig(format!(
                "need 0 < eps_jump ({}) < eps_fallthrough ({}) < 1",
                self.eps_jump, self.eps_fallthrough
            )));
        }
        self.params.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub id: usize,
    pub blocks: Vec<BlockId>,
    pub total_size: u64,
    pub total_count: f64,
    pub contains_entry: bool,
}

impl Chain {
    pub fn new(cfg: &ControlFlowGraph, id: usize, blocks: Vec<BlockId>) -> Self {
        let sizes = cfg.sizes_by_id();
        let counts = cfg.block_counts();
        Self {
            id,
            total_size: blocks.iter().map(|&b| sizes[b]).sum(),
            total_count: blocks.iter().map(|&b| counts[b]).sum(),
            contains_entry: blocks.contains(&cfg.entry),
            blocks,
        }
    }

    pub fn density(&self) -> f64 {
        self.total_count / self.total_size as f64
    }
}

/// Replaces zero edge weights: `eps_fallthrough` where the target directly
/// follows the source in the original order, `eps_jump` otherwise.
pub fn preprocess_cold_edges(cfg: &ControlFlowGraph, config: &GreedyConfig) -> ControlFlowGraph {
    let mut next_in_original = vec![usize::MAX; cfg.num_blocks()];
    for pair in cfg.blocks.windows(2) {
        next_in_original[pair[0].id] = pair[1].id;
    }
    let mut out = cfg.clone();
    for e in &mut out.edges {
        if e.weight == 0.0 {
            e.weight = if next_in_original[e.src] == e.dst {
                config.eps_fallthrough
            } else {
                config.eps_jump
            };
        }
    }
    out
}

/// ExtTSP score of the concatenated chains, counting only edges with both
/// ends inside the sequence and placing the first block at byte 0.
pub fn chain_score(
    cfg: &ControlFlowGraph,
    chains: &[&[BlockId]],
    params: &ScoreParams,
) -> Result<f64> {
    let n = cfg.num_blocks();
    let sizes = cfg.sizes_by_id();
    let mut start: Vec<Option<u64>> = vec![None; n];
    let mut cursor = 0;
    for chain in chains {
        for &b in *chain {
            if b >= n {
                return Err(Error::InvalidLayout(format!("unknown block {b}")));
            }
            if start[b].replace(cursor).is_some() {
                return Err(Error::OverlappingChains(b));
            }
            cursor += sizes[b];
        }
    }
    let degrees = cfg.out_degrees();
    let mut total = 0.0;
    for e in &cfg.edges {
        if e.src == e.dst {
            continue;
        }
        if let (Some(s), Some(t)) = (start[e.src], start[e.dst]) {
            let jump = jump_between(s, sizes[e.src], t);
            let class = BranchClass {
                direction: jump.direction,
                conditionality: Conditionality::from_out_degree(degrees[e.src]),
            };
            total += edge_contribution(e.weight, class, jump.len, params);
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeGain {
    pub gain: f64,
    pub chain: Vec<BlockId>,
}

/// Best way to merge `src` into `dst`, scoring each candidate with
/// [`chain_score`]. Returns `None` when every arrangement would move the
/// entry block away from the front.
pub fn compute_merge_gain(
    cfg: &ControlFlowGraph,
    src: &Chain,
    dst: &Chain,
    config: &GreedyConfig,
) -> Option<MergeGain> {
    let params = &config.params;
    let base = chain_score(cfg, &[&src.blocks], params).ok()?
        + chain_score(cfg, &[&dst.blocks], params).ok()?;
    let involves_entry = src.contains_entry || dst.contains_entry;
    let n = src.blocks.len();
    let splits = if n <= config.split_threshold {
        1..=n
    } else {
        n..=n
    };

    let mut best: Option<(f64, Vec<BlockId>)> = None;
    for i in splits {
        let (s1, s2) = src.blocks.split_at(i);
        let d = dst.blocks.as_slice();
        let kinds: &[MergeKind] = if s2.is_empty() {
            &CONCAT_KINDS
        } else {
            &ALL_KINDS
        };
        for kind in kinds {
            let parts = kind.arrange(s1, s2, d);
            let first = parts.iter().find_map(|p| p.first()).copied();
            if involves_entry && first != Some(cfg.entry) {
                continue;
            }
            let score = chain_score(cfg, &parts, params).ok()?;
            if best
                .as_ref()
                .is_none_or(|(b, _)| strictly_better(score, *b))
            {
                best = Some((score, parts.concat()));
            }
        }
    }
    best.map(|(score, chain)| MergeGain {
        gain: score - base,
        chain,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MergeKind {
    S1S2D,
    S1DS2,
    S2S1D,
    S2DS1,
    DS1S2,
    DS2S1,
}

const ALL_KINDS: [MergeKind; 6] = [
    MergeKind::S1S2D,
    MergeKind::S1DS2,
    MergeKind::S2S1D,
    MergeKind::S2DS1,
    MergeKind::DS1S2,
    MergeKind::DS2S1,
];

// With an empty second piece only the two plain concatenations are distinct.
const CONCAT_KINDS: [MergeKind; 2] = [MergeKind::S1S2D, MergeKind::DS1S2];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Seg {
    S1 = 0,
    S2 = 1,
    D = 2,
}

impl MergeKind {
    fn segments(self) -> [Seg; 3] {
        use Seg::*;
        match self {
            MergeKind::S1S2D => [S1, S2, D],
            MergeKind::S1DS2 => [S1, D, S2],
            MergeKind::S2S1D => [S2, S1, D],
            MergeKind::S2DS1 => [S2, D, S1],
            MergeKind::DS1S2 => [D, S1, S2],
            MergeKind::DS2S1 => [D, S2, S1],
        }
    }

    fn arrange<'a>(
        self,
        s1: &'a [BlockId],
        s2: &'a [BlockId],
        d: &'a [BlockId],
    ) -> [&'a [BlockId]; 3] {
        self.segments().map(|s| match s {
            Seg::S1 => s1,
            Seg::S2 => s2,
            Seg::D => d,
        })
    }
}

/// Reorders the blocks of `cfg`, keeping the entry block first.
pub fn reorder(cfg: &ControlFlowGraph, config: &GreedyConfig) -> Result<Layout> {
    cfg.check()?;
    config.validate()?;
    let prepared = preprocess_cold_edges(cfg, config);
    let mut engine = Engine::new(&prepared, cfg.block_counts(), config);
    Ok(Layout::new(engine.run()))
}

#[derive(Debug, Clone, Copy)]
struct Edge {
    src: BlockId,
    dst: BlockId,
    weight: f64,
    conditionality: Conditionality,
}

#[derive(Debug)]
struct ChainState {
    blocks: Vec<BlockId>,
    size: u64,
    count: f64,
    has_entry: bool,
    /// Edges with both ends inside the chain.
    internal: Vec<usize>,
    /// Edges to each adjacent chain.
    adjacent: BTreeMap<usize, Vec<usize>>,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    src: usize,
    dst: usize,
    split: usize,
    kind: MergeKind,
}

/// Where an edge endpoint sits relative to the pair being merged.
#[derive(Debug, Clone, Copy)]
struct End {
    in_src: bool,
    pos: usize,
    off: u64,
}

#[derive(Debug, Clone, Copy)]
struct RelEdge {
    from: End,
    to: End,
    from_size: u64,
    weight: f64,
    conditionality: Conditionality,
}

struct Engine<'a> {
    config: &'a GreedyConfig,
    entry: BlockId,
    sizes: Vec<u64>,
    edges: Vec<Edge>,
    chain_of: Vec<usize>,
    pos: Vec<usize>,
    off: Vec<u64>,
    chains: Vec<Option<ChainState>>,
    live: usize,
}

impl<'a> Engine<'a> {
    fn new(cfg: &ControlFlowGraph, counts: Vec<f64>, config: &'a GreedyConfig) -> Self {
        let n = cfg.num_blocks();
        let sizes = cfg.sizes_by_id();
        let degrees = cfg.out_degrees();
        let edges: Vec<Edge> = cfg
            .edges
            .iter()
            .filter(|e| e.src != e.dst)
            .map(|e| Edge {
                src: e.src,
                dst: e.dst,
                weight: e.weight,
                conditionality: Conditionality::from_out_degree(degrees[e.src]),
            })
            .collect();
        let mut chains: Vec<Option<ChainState>> = (0..n)
            .map(|b| {
                Some(ChainState {
                    blocks: vec![b],
                    size: sizes[b],
                    count: counts[b],
                    has_entry: b == cfg.entry,
                    internal: Vec::new(),
                    adjacent: BTreeMap::new(),
                })
            })
            .collect();
        for (i, e) in edges.iter().enumerate() {
            for (a, b) in [(e.src, e.dst), (e.dst, e.src)] {
                chains[a]
                    .as_mut()
                    .unwrap()
                    .adjacent
                    .entry(b)
                    .or_default()
                    .push(i);
            }
        }
        Self {
            config,
            entry: cfg.entry,
            sizes,
            edges,
            chain_of: (0..n).collect(),
            pos: vec![0; n],
            off: vec![0; n],
            chains,
            live: n,
        }
    }

    fn chain(&self, id: usize) -> &ChainState {
        self.chains[id].as_ref().expect("live chain")
    }

    fn run(&mut self) -> Vec<BlockId> {
        let mut gains: BTreeMap<(usize, usize), Candidate> = BTreeMap::new();
        if self.config.memoize {
            gains = self.all_pair_gains();
        }
        while self.live > 1 {
            if !self.config.memoize {
                gains = self.all_pair_gains();
            }
            let Some(best) = pick_best(&gains) else { break };
            let (a, b) = (best.src, best.dst);
            let merged = self.merge(&best);
            if self.config.memoize {
                // Only gains involving the merged pair are stale.
                gains.retain(|&(x, y), _| x != a && x != b && y != a && y != b);
                let neighbours: Vec<usize> = self.chain(merged).adjacent.keys().copied().collect();
                for x in neighbours {
                    gains.insert((x, merged), self.pair_gain(x, merged));
                }
            }
        }
        self.finish()
    }

    fn all_pair_gains(&self) -> BTreeMap<(usize, usize), Candidate> {
        let mut gains = BTreeMap::new();
        for (a, chain) in self.chains.iter().enumerate() {
            let Some(chain) = chain else { continue };
            for &b in chain.adjacent.range(a + 1..).map(|(b, _)| b) {
                gains.insert((a, b), self.pair_gain(a, b));
            }
        }
        gains
    }

    /// Best merge of an unordered pair `a < b`, trying each chain as the one
    /// being split.
    fn pair_gain(&self, a: usize, b: usize) -> Candidate {
        let forward = self.best_merge(a, b);
        let reverse = self.best_merge(b, a);
        match (forward, reverse) {
            (Some(f), Some(r)) if strictly_better(r.gain, f.gain) => r,
            (Some(f), _) => f,
            (None, Some(r)) => r,
            (None, None) => unreachable!("entry chain can always be placed first"),
        }
    }

    fn end(&self, block: BlockId, src: usize) -> End {
        End {
            in_src: self.chain_of[block] == src,
            pos: self.pos[block],
            off: self.off[block],
        }
    }

    fn rel_edge(&self, idx: usize, src: usize) -> RelEdge {
        let e = &self.edges[idx];
        RelEdge {
            from: self.end(e.src, src),
            to: self.end(e.dst, src),
            from_size: self.sizes[e.src],
            weight: e.weight,
            conditionality: e.conditionality,
        }
    }

    #[inline]
    fn contribution(&self, e: &RelEdge, from_start: u64, to_start: u64) -> f64 {
        let jump = jump_between(from_start, e.from_size, to_start);
        let class = BranchClass {
            direction: jump.direction,
            conditionality: e.conditionality,
        };
        edge_contribution(e.weight, class, jump.len, &self.config.params)
    }

    /// Highest-gain arrangement splitting `src` and combining it with `dst`.
    ///
    /// Edges inside `dst`, and edges of `src` not crossing the split point,
    /// keep their length in every arrangement, so only the cross-pair edges
    /// and the split-crossing edges of `src` are evaluated.
    fn best_merge(&self, src: usize, dst: usize) -> Option<Candidate> {
        let s = self.chain(src);
        let d = self.chain(dst);
        let cross: Vec<RelEdge> = self.chain(src).adjacent[&dst]
            .iter()
            .map(|&i| self.rel_edge(i, src))
            .collect();
        let n = s.blocks.len();
        let split_allowed = n <= self.config.split_threshold;
        let internal: Vec<RelEdge> = if split_allowed && n > 1 {
            s.internal.iter().map(|&i| self.rel_edge(i, src)).collect()
        } else {
            Vec::new()
        };
        let involves_entry = s.has_entry || d.has_entry;
        let splits = if split_allowed { 1..=n } else { n..=n };

        let mut best: Option<Candidate> = None;
        let mut crossing: Vec<RelEdge> = Vec::new();
        for i in splits {
            let s1_len = if i == n {
                s.size
            } else {
                self.off[s.blocks[i]]
            };
            let s2_len = s.size - s1_len;
            crossing.clear();
            let mut old = 0.0;
            if i < n {
                for e in &internal {
                    if (e.from.pos < i) != (e.to.pos < i) {
                        old += self.contribution(e, e.from.off, e.to.off);
                        crossing.push(*e);
                    }
                }
            }
            let kinds: &[MergeKind] = if i == n { &CONCAT_KINDS } else { &ALL_KINDS };
            for &kind in kinds {
                let segs = kind.segments();
                if involves_entry {
                    let first = match segs[0] {
                        Seg::S1 => s.blocks[0],
                        Seg::S2 => s.blocks[i],
                        Seg::D => d.blocks[0],
                    };
                    if first != self.entry {
                        continue;
                    }
                }
                let lens = [s1_len, s2_len, d.size];
                let mut seg_start = [0u64; 3];
                let mut cursor = 0;
                for seg in segs {
                    seg_start[seg as usize] = cursor;
                    cursor += lens[seg as usize];
                }
                let place = |end: &End| -> u64 {
                    if !end.in_src {
                        seg_start[Seg::D as usize] + end.off
                    } else if end.pos < i {
                        seg_start[Seg::S1 as usize] + end.off
                    } else {
                        seg_start[Seg::S2 as usize] + end.off - s1_len
                    }
                };
                let mut score = 0.0;
                for e in cross.iter().chain(crossing.iter()) {
                    score += self.contribution(e, place(&e.from), place(&e.to));
                }
                let gain = score - old;
                if best.is_none_or(|b| strictly_better(gain, b.gain)) {
                    best = Some(Candidate {
                        gain,
                        src,
                        dst,
                        split: i,
                        kind,
                    });
                }
            }
        }
        best
    }

    fn merge(&mut self, cand: &Candidate) -> usize {
        let new_id = self.chains.len();
        let s = self.chains[cand.src].take().expect("live src");
        let d = self.chains[cand.dst].take().expect("live dst");
        let (s1, s2) = s.blocks.split_at(cand.split);
        let blocks = cand.kind.arrange(s1, s2, &d.blocks).concat();

        let mut offset = 0;
        for (i, &b) in blocks.iter().enumerate() {
            self.chain_of[b] = new_id;
            self.pos[b] = i;
            self.off[b] = offset;
            offset += self.sizes[b];
        }

        let mut internal = s.internal;
        internal.extend(d.internal);
        let mut adjacent = s.adjacent;
        if let Some(between) = adjacent.remove(&cand.dst) {
            internal.extend(between);
        }
        for (x, list) in d.adjacent {
            if x != cand.src {
                adjacent.entry(x).or_default().extend(list);
            }
        }
        for (&x, list) in &adjacent {
            let other = self.chains[x].as_mut().expect("live neighbour");
            other.adjacent.remove(&cand.src);
            other.adjacent.remove(&cand.dst);
            other.adjacent.insert(new_id, list.clone());
        }

        self.chains.push(Some(ChainState {
            blocks,
            size: s.size + d.size,
            count: s.count + d.count,
            has_entry: s.has_entry || d.has_entry,
            internal,
            adjacent,
        }));
        self.live -= 1;
        new_id
    }

    /// Concatenates the remaining chains: entry chain, then by decreasing
    /// density, then by creation id.
    fn finish(&mut self) -> Vec<BlockId> {
        let mut rest: Vec<(usize, ChainState)> = self
            .chains
            .iter_mut()
            .enumerate()
            .filter_map(|(id, c)| c.take().map(|c| (id, c)))
            .collect();
        rest.sort_by(|(ia, a), (ib, b)| {
            b.has_entry
                .cmp(&a.has_entry)
                .then_with(|| (b.count / b.size as f64).total_cmp(&(a.count / a.size as f64)))
                .then_with(|| ia.cmp(ib))
        });
        rest.into_iter().flat_map(|(_, c)| c.blocks).collect()
    }
}

/// Maximum gain; ties go to the smaller chain-id pair.
fn pick_best(gains: &BTreeMap<(usize, usize), Candidate>) -> Option<Candidate> {
    let mut best: Option<Candidate> = None;
    for cand in gains.values() {
        if best.is_none_or(|b| strictly_better(cand.gain, b.gain)) {
            best = Some(*cand);
        }
    }
    best
}
