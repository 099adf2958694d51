use thiserror::Error;

use crate::cfg_model::Violation;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid control flow graph: {}", format_violations(.0))]
    InvalidCfg(Vec<Violation>),

    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("chains overlap at block {0}")]
    OverlappingChains(usize),

    #[error("function has {blocks} blocks, limit is {limit}")]
    TooManyBlocks { blocks: usize, limit: usize },

    #[error("time budget must be positive")]
    ZeroBudget,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("need at least {needed} values, got {got}")]
    NotEnoughData { needed: usize, got: usize },

    #[error("rank correlation undefined for constant input")]
    ConstantInput,

    #[error("function `{name}`: {source}")]
    InFunction {
        name: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub fn in_function(self, name: &str) -> Error {
        Error::InFunction {
            name: name.to_string(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
