//! Basic block reordering for instruction-cache friendly code layout.
//!
//! The crate scores block orderings with the TSP and extended-TSP (ExtTSP)
//! objectives, reorders blocks with a greedy chain-merging heuristic, and
//! provides baseline orderers, an exact solver for small functions, a
//! synthetic graph generator and a parameter fitter for the score.

pub mod baseline_layouts;
pub mod cfg_model;
pub mod cli;
pub mod error;
pub mod exact_layout;
pub mod greedy_layout;
pub mod io;
pub mod model_fit;
pub mod report;
pub mod scoring;
pub mod synth;

pub use cfg_model::{BasicBlock, BlockId, ControlFlowGraph, JumpEdge, Layout};
pub use error::{Error, Result};
pub use greedy_layout::{reorder, GreedyConfig};
pub use scoring::{exttsp_score, tsp_score, ScoreParams, DEFAULT_EXTTSP};
