//! Reference orderers: compiler order, Pettis-Hansen top-down and bottom-up,
//! and the density-sorted bottom-up variant.

use crate::cfg_model::{BlockId, ControlFlowGraph, Layout};
use crate::error::Result;

/// The order blocks appear in the input.
pub fn original(cfg: &ControlFlowGraph) -> Layout {
    Layout::original(cfg)
}

/// Edge indices sorted by weight descending, then `(src, dst)` ascending.
fn edges_by_weight(cfg: &ControlFlowGraph) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..cfg.edges.len())
        .filter(|&i| cfg.edges[i].src != cfg.edges[i].dst)
        .collect();
    idx.sort_by(|&a, &b| {
        let (ea, eb) = (&cfg.edges[a], &cfg.edges[b]);
        eb.weight
            .total_cmp(&ea.weight)
            .then(ea.src.cmp(&eb.src))
            .then(ea.dst.cmp(&eb.dst))
    });
    idx
}

/// Top-down placement: follow the heaviest edge to an unplaced successor of
/// the last placed block; when there is none, take the unplaced block with
/// the largest total edge weight to the placed ones.
pub fn ph_topdown(cfg: &ControlFlowGraph) -> Result<Layout> {
    cfg.check()?;
    let n = cfg.num_blocks();
    let mut succs: Vec<Vec<(BlockId, f64)>> = vec![Vec::new(); n];
    let mut neighbours: Vec<Vec<(BlockId, f64)>> = vec![Vec::new(); n];
    for e in cfg.edges.iter().filter(|e| e.src != e.dst) {
        succs[e.src].push((e.dst, e.weight));
        neighbours[e.src].push((e.dst, e.weight));
        neighbours[e.dst].push((e.src, e.weight));
    }

    let mut placed = vec![false; n];
    let mut connection = vec![0.0f64; n];
    let mut order = Vec::with_capacity(n);
    let place = |b: BlockId,
                 order: &mut Vec<BlockId>,
                 placed: &mut Vec<bool>,
                 connection: &mut Vec<f64>| {
        placed[b] = true;
        order.push(b);
        for &(x, w) in &neighbours[b] {
            connection[x] += w;
        }
    };
    place(cfg.entry, &mut order, &mut placed, &mut connection);

    while order.len() < n {
        let last = *order.last().unwrap();
        let mut next: Option<(BlockId, f64)> = None;
        for &(t, w) in &succs[last] {
            if placed[t] {
                continue;
            }
            let better = match next {
                None => true,
                Some((bt, bw)) => w > bw || (w == bw && t < bt),
            };
            if better {
                next = Some((t, w));
            }
        }
        let b = match next {
            Some((t, _)) => t,
            None => {
                let mut best: Option<BlockId> = None;
                for b in 0..n {
                    if !placed[b] && best.is_none_or(|x| connection[b] > connection[x]) {
                        best = Some(b);
                    }
                }
                best.expect("unplaced block remains")
            }
        };
        place(b, &mut order, &mut placed, &mut connection);
    }
    Ok(Layout::new(order))
}

/// A chain built by the bottom-up merge. Its id is the id of its head block.
#[derive(Debug, Clone, PartialEq)]
pub struct PhChain {
    pub id: usize,
    pub blocks: Vec<BlockId>,
}

/// Bottom-up chain formation: visit edges from heaviest to lightest and join
/// two chains when the edge runs from the tail of one to the head of the
/// other. The entry block is never appended behind another block.
pub fn ph_chains(cfg: &ControlFlowGraph) -> Result<Vec<PhChain>> {
    cfg.check()?;
    let n = cfg.num_blocks();
    // chain_of maps a block to the head of its chain; chains are stored by head.
    let mut chain_of: Vec<usize> = (0..n).collect();
    let mut chains: Vec<Option<Vec<BlockId>>> = (0..n).map(|b| Some(vec![b])).collect();
    for i in edges_by_weight(cfg) {
        let e = &cfg.edges[i];
        let (a, b) = (chain_of[e.src], chain_of[e.dst]);
        if a == b || e.dst == cfg.entry {
            continue;
        }
        let tail_ok = chains[a].as_ref().unwrap().last() == Some(&e.src);
        let head_ok = chains[b].as_ref().unwrap().first() == Some(&e.dst);
        if tail_ok && head_ok {
            let moved = chains[b].take().unwrap();
            for &x in &moved {
                chain_of[x] = a;
            }
            chains[a].as_mut().unwrap().extend(moved);
        }
    }
    Ok(chains
        .into_iter()
        .enumerate()
        .filter_map(|(id, c)| c.map(|blocks| PhChain { id, blocks }))
        .collect())
}

/// Bottom-up Pettis-Hansen.
pub fn ph_bottomup(cfg: &ControlFlowGraph) -> Result<Layout> {
    let chains = ph_chains(cfg)?;
    Ok(concat(order_by_backward_weight(cfg, chains)))
}

/// Orders chains after the entry chain so that, greedily, each appended
/// chain has the largest total weight of edges pointing back into the
/// chains already placed. Ties go to the smaller chain id.
fn order_by_backward_weight(cfg: &ControlFlowGraph, chains: Vec<PhChain>) -> Vec<PhChain> {
    let n = cfg.num_blocks();
    let mut slot = vec![0usize; n];
    for (i, c) in chains.iter().enumerate() {
        for &b in &c.blocks {
            slot[b] = i;
        }
    }
    // back[c] accumulates weight of edges from chain c into placed chains.
    let mut back = vec![0.0f64; chains.len()];
    let mut incoming: Vec<Vec<(usize, f64)>> = vec![Vec::new(); chains.len()];
    for e in cfg.edges.iter().filter(|e| e.src != e.dst) {
        let (cs, cd) = (slot[e.src], slot[e.dst]);
        if cs != cd {
            incoming[cd].push((cs, e.weight));
        }
    }
    let mut placed = vec![false; chains.len()];
    let mut order = Vec::with_capacity(chains.len());
    let place = |c: usize, placed: &mut Vec<bool>, back: &mut Vec<f64>, order: &mut Vec<usize>| {
        placed[c] = true;
        order.push(c);
        for &(from, w) in &incoming[c] {
            back[from] += w;
        }
    };
    place(slot[cfg.entry], &mut placed, &mut back, &mut order);
    while order.len() < chains.len() {
        let mut best: Option<usize> = None;
        for c in 0..chains.len() {
            if placed[c] {
                continue;
            }
            let better = match best {
                None => true,
                Some(b) => back[c] > back[b] || (back[c] == back[b] && chains[c].id < chains[b].id),
            };
            if better {
                best = Some(c);
            }
        }
        place(best.unwrap(), &mut placed, &mut back, &mut order);
    }
    let mut chains: Vec<Option<PhChain>> = chains.into_iter().map(Some).collect();
    order
        .into_iter()
        .map(|i| chains[i].take().unwrap())
        .collect()
}

/// Bottom-up chains sorted by execution density (count per byte),
/// entry chain first.
pub fn cache_order(cfg: &ControlFlowGraph) -> Result<Layout> {
    let chains = ph_chains(cfg)?;
    let sizes = cfg.sizes_by_id();
    let counts = cfg.block_counts();
    let density = |c: &PhChain| {
        let count: f64 = c.blocks.iter().map(|&b| counts[b]).sum();
        let size: u64 = c.blocks.iter().map(|&b| sizes[b]).sum();
        count / size as f64
    };
    let mut keyed: Vec<(bool, f64, PhChain)> = chains
        .into_iter()
        .map(|c| (c.blocks.contains(&cfg.entry), density(&c), c))
        .collect();
    keyed.sort_by(|a, b| {
        b.0.cmp(&a.0)
            .then(b.1.total_cmp(&a.1))
            .then(a.2.id.cmp(&b.2.id))
    });
    Ok(concat(keyed.into_iter().map(|(_, _, c)| c).collect()))
}

fn concat(chains: Vec<PhChain>) -> Layout {
    Layout::new(chains.into_iter().flat_map(|c| c.blocks).collect())
}
