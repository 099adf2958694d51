//! TSP and ExtTSP layout scores.

use serde::{Deserialize, Serialize};

use crate::cfg_model::{
    jump_between, offsets, BranchClass, Conditionality, ControlFlowGraph, Direction, Layout,
};
use crate::error::{Error, Result};

/// Coefficients for one branch class: `K * (1 - (len / M)^alpha)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpParams {
    pub k: f64,
    #[serde(rename = "m")]
    pub max_len: f64,
    pub alpha: f64,
}

impl JumpParams {
    pub const fn new(k: f64, max_len: f64, alpha: f64) -> Self {
        Self { k, max_len, alpha }
    }

    /// Length decay; 1 at zero, 0 at and beyond `max_len`.
    #[inline]
    pub fn decay(&self, len: u64) -> f64 {
        if len == 0 {
            return 1.0;
        }
        let len = len as f64;
        if len >= self.max_len {
            return 0.0;
        }
        let ratio = len / self.max_len;
        if self.alpha == 1.0 {
            1.0 - ratio
        } else {
            1.0 - ratio.powf(self.alpha)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionParams {
    pub conditional: JumpParams,
    pub unconditional: JumpParams,
}

impl DirectionParams {
    pub const fn tied(p: JumpParams) -> Self {
        Self {
            conditional: p,
            unconditional: p,
        }
    }

    pub fn get(&self, c: Conditionality) -> &JumpParams {
        match c {
            Conditionality::Conditional => &self.conditional,
            Conditionality::Unconditional => &self.unconditional,
        }
    }

    pub fn get_mut(&mut self, c: Conditionality) -> &mut JumpParams {
        match c {
            Conditionality::Conditional => &mut self.conditional,
            Conditionality::Unconditional => &mut self.unconditional,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreParams {
    pub fall_through: DirectionParams,
    pub forward: DirectionParams,
    pub backward: DirectionParams,
}

/// The learned default: fall-throughs weigh 1, forward jumps decay linearly
/// to zero over 1024 bytes, backward jumps over 640 bytes, both scaled by 0.1.
pub const DEFAULT_EXTTSP: ScoreParams = ScoreParams {
    fall_through: DirectionParams::tied(JumpParams::new(1.0, 1.0, 1.0)),
    forward: DirectionParams::tied(JumpParams::new(0.1, 1024.0, 1.0)),
    backward: DirectionParams::tied(JumpParams::new(0.1, 640.0, 1.0)),
};

impl Default for ScoreParams {
    fn default() -> Self {
        DEFAULT_EXTTSP
    }
}

impl ScoreParams {
    pub fn direction(&self, d: Direction) -> &DirectionParams {
        match d {
            Direction::FallThrough => &self.fall_through,
            Direction::Forward => &self.forward,
            Direction::Backward => &self.backward,
        }
    }

    pub fn direction_mut(&mut self, d: Direction) -> &mut DirectionParams {
        match d {
            Direction::FallThrough => &mut self.fall_through,
            Direction::Forward => &mut self.forward,
            Direction::Backward => &mut self.backward,
        }
    }

    pub fn class(&self, class: BranchClass) -> &JumpParams {
        self.direction(class.direction).get(class.conditionality)
    }

    /// Largest weight coefficient over all six classes.
    pub fn max_k(&self) -> f64 {
        all_classes().map(|c| self.class(c).k).fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        for c in all_classes() {
            let p = self.class(c);
            if !(0.0..=1.0).contains(&p.k) {
                return Err(Error::InvalidConfig(format!(
                    "{c:?}: K={} outside [0,1]",
                    p.k
                )));
            }
            if !(p.max_len.is_finite() && p.max_len > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{c:?}: M={} must be > 0",
                    p.max_len
                )));
            }
            if !(p.alpha.is_finite() && p.alpha > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{c:?}: alpha={} must be > 0",
                    p.alpha
                )));
            }
        }
        Ok(())
    }
}

pub fn all_classes() -> impl Iterator<Item = BranchClass> {
    [
        Direction::FallThrough,
        Direction::Forward,
        Direction::Backward,
    ]
    .into_iter()
    .flat_map(|direction| {
        [Conditionality::Conditional, Conditionality::Unconditional]
            .into_iter()
            .map(move |conditionality| BranchClass {
                direction,
                conditionality,
            })
    })
}

/// Params under which the ExtTSP score equals the TSP score.
pub fn degenerate_tsp_params() -> ScoreParams {
    let zero = JumpParams::new(0.0, 1.0, 1.0);
    ScoreParams {
        fall_through: DirectionParams::tied(JumpParams::new(1.0, 1.0, 1.0)),
        forward: DirectionParams::tied(zero),
        backward: DirectionParams::tied(zero),
    }
}

#[inline]
pub fn edge_contribution(weight: f64, class: BranchClass, len: u64, params: &ScoreParams) -> f64 {
    let p = params.class(class);
    match class.direction {
        Direction::FallThrough => weight * p.k,
        _ => weight * p.k * p.decay(len),
    }
}

pub fn exttsp_score(cfg: &ControlFlowGraph, layout: &Layout, params: &ScoreParams) -> Result<f64> {
    let starts = offsets(cfg, layout)?;
    let sizes = cfg.sizes_by_id();
    let degrees = cfg.out_degrees();
    let mut total = 0.0;
    for e in &cfg.edges {
        if e.src == e.dst {
            continue;
        }
        let jump = jump_between(starts[e.src], sizes[e.src], starts[e.dst]);
        let class = BranchClass {
            direction: jump.direction,
            conditionality: Conditionality::from_out_degree(degrees[e.src]),
        };
        total += edge_contribution(e.weight, class, jump.len, params);
    }
    Ok(total)
}

pub fn tsp_score(cfg: &ControlFlowGraph, layout: &Layout) -> Result<f64> {
    let starts = offsets(cfg, layout)?;
    let sizes = cfg.sizes_by_id();
    let mut total = 0.0;
    for e in &cfg.edges {
        if e.src != e.dst && starts[e.src] + sizes[e.src] == starts[e.dst] {
            total += e.weight;
        }
    }
    Ok(total)
}

/// Relative comparison used when ranking candidate layouts or merges.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// `a` beats `b` by more than the relative tie tolerance.
#[inline]
pub fn strictly_better(a: f64, b: f64) -> bool {
    a > b && (a - b) > TIE_TOLERANCE * a.abs().max(b.abs())
}

#[inline]
pub fn scores_tie(a: f64, b: f64) -> bool {
    !strictly_better(a, b) && !strictly_better(b, a)
}
