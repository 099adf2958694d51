//! JSON file formats: graphs, orders, score parameters and measurements.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cfg_model::{validated, BlockId, ControlFlowGraph, Layout};
use crate::error::{Error, Result};
use crate::model_fit::MeasurementRecord;
use crate::scoring::ScoreParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfgFile {
    pub functions: Vec<ControlFlowGraph>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OrdersFile {
    pub orders: BTreeMap<String, Vec<BlockId>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementFile {
    pub experiments: Vec<MeasurementRecord>,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        context: format!("reading {}", path.display()),
        source,
    })
}

fn parse<T: DeserializeOwned>(text: &str, context: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|source| Error::Json {
        context: context.to_string(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        context: format!("writing {}", path.display()),
        source,
    })
}

fn to_json<T: Serialize>(value: &T) -> String {
    // Serializing plain data structs cannot fail.
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

/// Parses a graph file, normalizing and validating every function.
/// Function names must be unique.
pub fn parse_cfgs(text: &str, context: &str) -> Result<Vec<ControlFlowGraph>> {
    let file: CfgFile = parse(text, context)?;
    let mut names = BTreeSet::new();
    file.functions
        .iter()
        .map(|f| {
            if !names.insert(f.name.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate function name `{}` in {context}",
                    f.name
                )));
            }
            validated(f).map_err(|e| e.in_function(&f.name))
        })
        .collect()
}

pub fn read_cfgs(path: &Path) -> Result<Vec<ControlFlowGraph>> {
    parse_cfgs(&read_text(path)?, &path.display().to_string())
}

pub fn cfgs_to_json(functions: &[ControlFlowGraph]) -> String {
    to_json(&CfgFile {
        functions: functions.to_vec(),
    })
}

pub fn write_cfgs(path: &Path, functions: &[ControlFlowGraph]) -> Result<()> {
    write_text(path, &cfgs_to_json(functions))
}

pub fn read_orders(path: &Path) -> Result<OrdersFile> {
    parse(&read_text(path)?, &path.display().to_string())
}

pub fn orders_to_json(orders: &OrdersFile) -> String {
    to_json(orders)
}

impl OrdersFile {
    /// Layout for `cfg` from this file, checked against the graph.
    pub fn layout_for(&self, cfg: &ControlFlowGraph) -> Result<Option<Layout>> {
        match self.orders.get(&cfg.name) {
            None => Ok(None),
            Some(order) => {
                let layout = Layout::new(order.clone());
                layout.check(cfg).map_err(|e| e.in_function(&cfg.name))?;
                Ok(Some(layout))
            }
        }
    }
}

pub fn read_params(path: &Path) -> Result<ScoreParams> {
    let params: ScoreParams = parse(&read_text(path)?, &path.display().to_string())?;
    params.validate()?;
    Ok(params)
}

pub fn params_to_json(params: &ScoreParams) -> String {
    to_json(params)
}

pub fn read_measurements(path: &Path) -> Result<Vec<MeasurementRecord>> {
    let file: MeasurementFile = parse(&read_text(path)?, &path.display().to_string())?;
    Ok(file.experiments)
}

pub fn measurements_to_json(experiments: &[MeasurementRecord]) -> String {
    to_json(&MeasurementFile {
        experiments: experiments.to_vec(),
    })
}
