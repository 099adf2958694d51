//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for usage errors, 2 for bad input data.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::cfg_model::{ControlFlowGraph, Layout};
use crate::error::Result;
use crate::exact_layout::ExactConfig;
use crate::greedy_layout::GreedyConfig;
use crate::io;
use crate::model_fit::{featurize, fit_params, round_params, FitSearch, MeasurementRecord};
use crate::report::{compare, gap_study, to_csv, Algorithm, Optimality, RunConfig};
use crate::scoring::{exttsp_score, tsp_score, ScoreParams, DEFAULT_EXTTSP};
use crate::synth::{corpus, CorpusConfig, GenConfig, WeightDistribution};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "blocklayout",
    version,
    about = "Basic block reordering with the ExtTSP score"
)]
struct Cli {
    /// Worker threads for per-function processing (0 = one per core).
    #[arg(long, global = true, env = "BLOCKLAYOUT_JOBS", default_value_t = 0)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print ExtTSP and TSP scores per function.
    Score {
        cfg: PathBuf,
        /// Orders file; functions not listed keep their file order.
        #[arg(long)]
        layout: Option<PathBuf>,
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Reorder every function with one algorithm.
    Reorder {
        cfg: PathBuf,
        #[arg(long, value_parser = parse_algorithm)]
        algo: Algorithm,
        #[command(flatten)]
        greedy: GreedyArgs,
        #[command(flatten)]
        exact: ExactArgs,
        /// Where to write the orders file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print per-function runtimes.
        #[arg(long)]
        timing: bool,
    },
    /// Compare algorithms on every function as CSV.
    Compare {
        cfg: PathBuf,
        /// Comma-separated algorithms, or `all`.
        #[arg(long, default_value = "original,tsp,ph,cache,ext-tsp", value_parser = parse_algorithm_list)]
        algos: AlgorithmList,
        #[command(flatten)]
        greedy: GreedyArgs,
        #[command(flatten)]
        exact: ExactArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        timing: bool,
    },
    /// Measure how often ext-tsp reaches the exact optimum.
    Gap {
        cfg: PathBuf,
        #[command(flatten)]
        greedy: GreedyArgs,
        #[command(flatten)]
        exact: ExactArgs,
    },
    /// Turn functions and a layout into a measurement record.
    Featurize {
        cfg: PathBuf,
        #[arg(long)]
        layout: Option<PathBuf>,
        #[arg(long, default_value = "run")]
        label: String,
        #[arg(long, default_value_t = 0.0)]
        perf: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit score parameters to measured performance.
    Fit {
        #[arg(long)]
        measurements: PathBuf,
        /// Random candidates before refinement.
        #[arg(long, default_value_t = 500)]
        iterations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Drop and merge coefficients closer than 0.05.
        #[arg(long)]
        round: bool,
        /// Where to write the fitted parameters.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic graph file.
    Gen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Blocks per function; default for both `--n-min` and `--n-max`.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        n_min: Option<usize>,
        #[arg(long)]
        n_max: Option<usize>,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 1.5)]
        edge_factor: f64,
        #[arg(long, value_enum, default_value_t = WeightKind::Zipf)]
        weights: WeightKind,
        #[arg(long, default_value_t = 1.0)]
        zipf_s: f64,
        #[arg(long, default_value_t = 1000)]
        max_weight: u64,
        #[arg(long, default_value_t = 1)]
        size_min: u64,
        #[arg(long, default_value_t = 64)]
        size_max: u64,
        #[arg(long, default_value_t = 0.15)]
        back_edge_fraction: f64,
        #[arg(long, default_value_t = 0.1)]
        cold_fraction: f64,
        /// Profiling walks per function.
        #[arg(long, default_value_t = 1000)]
        walks: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum WeightKind {
    Uniform,
    Zipf,
}

#[derive(Debug, Clone, Args)]
struct GreedyArgs {
    /// Largest chain the greedy orderer may split.
    #[arg(long, default_value_t = 128)]
    split_threshold: usize,
    #[arg(long, default_value_t = 1e-4)]
    eps_fallthrough: f64,
    #[arg(long, default_value_t = 1e-5)]
    eps_jump: f64,
    /// Score parameters JSON.
    #[arg(long)]
    params: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
struct ExactArgs {
    /// Largest function handed to the exact solver.
    #[arg(long, default_value_t = 15, value_parser = parse_max_blocks)]
    max_blocks: usize,
    /// Exact solver time budget in seconds per function.
    #[arg(long, default_value_t = 60.0, value_parser = parse_budget)]
    budget: f64,
}

#[derive(Debug, Clone)]
struct AlgorithmList(Vec<Algorithm>);

fn parse_algorithm(s: &str) -> std::result::Result<Algorithm, String> {
    s.parse()
}

fn parse_algorithm_list(s: &str) -> std::result::Result<AlgorithmList, String> {
    if s == "all" {
        return Ok(AlgorithmList(Algorithm::ALL.to_vec()));
    }
    let mut algos = Vec::new();
    for part in s.split(',').map(str::trim) {
        let a: Algorithm = part.parse()?;
        if !algos.contains(&a) {
            algos.push(a);
        }
    }
    if algos.is_empty() {
        return Err("at least one algorithm is required".into());
    }
    Ok(AlgorithmList(algos))
}

fn parse_max_blocks(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v),
        Ok(_) => Err("max-blocks must be at least 1".into()),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_budget(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err("budget must be a positive number of seconds".into())
    }
}

fn load_params(path: &Option<PathBuf>) -> Result<ScoreParams> {
    path.as_deref().map_or(Ok(DEFAULT_EXTTSP), io::read_params)
}

fn run_config(greedy: &GreedyArgs, exact: &ExactArgs) -> Result<RunConfig> {
    let params = load_params(&greedy.params)?;
    let greedy_cfg = GreedyConfig {
        split_threshold: greedy.split_threshold,
        eps_fallthrough: greedy.eps_fallthrough,
        eps_jump: greedy.eps_jump,
        params,
        memoize: true,
    };
    greedy_cfg.validate()?;
    let exact_cfg = ExactConfig {
        max_blocks: exact.max_blocks,
        time_budget: Duration::from_secs_f64(exact.budget),
        params,
    };
    Ok(RunConfig {
        greedy: greedy_cfg,
        exact: exact_cfg,
    })
}

fn layouts_for(cfgs: &[ControlFlowGraph], path: &Option<PathBuf>) -> Result<Vec<Layout>> {
    let orders = match path {
        Some(p) => io::read_orders(p)?,
        None => io::OrdersFile::default(),
    };
    cfgs.iter()
        .map(|c| Ok(orders.layout_for(c)?.unwrap_or_else(|| Layout::original(c))))
        .collect()
}

/// Text produced by a command for stdout and stderr.
#[derive(Default)]
struct Output {
    out: String,
    err: String,
}

fn emit(out: &mut Output, path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => io::write_text(p, text),
        None => {
            out.out.push_str(text);
            Ok(())
        }
    }
}

fn execute(command: Command) -> Result<Output> {
    use crate::report::fmt_num;
    let mut output = Output::default();
    let out = &mut output;
    match command {
        Command::Score {
            cfg,
            layout,
            params,
        } => {
            let cfgs = io::read_cfgs(&cfg)?;
            let params = load_params(&params)?;
            let layouts = layouts_for(&cfgs, &layout)?;
            let mut text = String::from("function,exttsp,tsp\n");
            for (c, l) in cfgs.iter().zip(&layouts) {
                let e = exttsp_score(c, l, &params)?;
                let t = tsp_score(c, l)?;
                text.push_str(&format!("{},{},{}\n", c.name, fmt_num(e), fmt_num(t)));
            }
            emit(out, None, &text)
        }
        Command::Reorder {
            cfg,
            algo,
            greedy,
            exact,
            out: out_path,
            timing,
        } => {
            let cfgs = io::read_cfgs(&cfg)?;
            let config = run_config(&greedy, &exact)?;
            let rows = compare(&cfgs, &[algo], &config)?;
            let mut orders = io::OrdersFile::default();
            for r in &rows {
                match &r.layout {
                    Some(l) => {
                        orders.orders.insert(r.function.clone(), l.order.clone());
                    }
                    None if r.optimality == Optimality::Skipped => {
                        out.err.push_str(&format!(
                            "warning: skipping `{}` for exact: more than {} blocks\n",
                            r.function, exact.max_blocks
                        ));
                    }
                    None => {}
                }
            }
            if let Some(p) = &out_path {
                io::write_text(p, &io::orders_to_json(&orders))?;
            }
            emit(out, None, &to_csv(&rows, timing))
        }
        Command::Compare {
            cfg,
            algos,
            greedy,
            exact,
            out: out_path,
            timing,
        } => {
            let cfgs = io::read_cfgs(&cfg)?;
            let config = run_config(&greedy, &exact)?;
            let rows = compare(&cfgs, &algos.0, &config)?;
            emit(out, out_path.as_deref(), &to_csv(&rows, timing))
        }
        Command::Gap { cfg, greedy, exact } => {
            let cfgs = io::read_cfgs(&cfg)?;
            let config = run_config(&greedy, &exact)?;
            emit(out, None, &gap_study(&cfgs, &config)?.render())
        }
        Command::Featurize {
            cfg,
            layout,
            label,
            perf,
            out: out_path,
        } => {
            let cfgs = io::read_cfgs(&cfg)?;
            let layouts = layouts_for(&cfgs, &layout)?;
            let mut branches = Vec::new();
            for (c, l) in cfgs.iter().zip(&layouts) {
                branches.extend(featurize(c, l)?);
            }
            let record = MeasurementRecord {
                label,
                perf,
                branches,
            };
            emit(
                out,
                out_path.as_deref(),
                &io::measurements_to_json(&[record]),
            )
        }
        Command::Fit {
            measurements,
            iterations,
            seed,
            round,
            out: out_path,
        } => {
            let ms = io::read_measurements(&measurements)?;
            let search = FitSearch {
                iterations,
                seed,
                ..Default::default()
            };
            let mut fit = fit_params(&ms, &search)?;
            if round {
                fit.params = round_params(&fit.params, 0.05);
                fit.tau = crate::model_fit::params_tau(&ms, &fit.params)?.unwrap_or(f64::NAN);
            }
            if let Some(p) = &out_path {
                io::write_text(p, &io::params_to_json(&fit.params))?;
            }
            let mut text = serde_json::to_string_pretty(&fit).expect("serializable");
            text.push('\n');
            emit(out, None, &text)
        }
        Command::Gen {
            seed,
            n,
            n_min,
            n_max,
            count,
            edge_factor,
            weights,
            zipf_s,
            max_weight,
            size_min,
            size_max,
            back_edge_fraction,
            cold_fraction,
            walks,
            out: out_path,
        } => {
            let n = n.unwrap_or(10);
            let weights = match weights {
                WeightKind::Uniform => WeightDistribution::Uniform { max: max_weight },
                WeightKind::Zipf => WeightDistribution::Zipf { s: zipf_s },
            };
            let base = GenConfig {
                seed,
                n_blocks: n,
                edge_factor,
                weights,
                size_range: (size_min, size_max),
                back_edge_fraction,
                cold_fraction,
                walks,
                ..GenConfig::default()
            };
            base.validate()?;
            let config = CorpusConfig {
                seed,
                count,
                min_blocks: n_min.unwrap_or(n),
                max_blocks: n_max.unwrap_or(n),
                base,
            };
            emit(
                out,
                out_path.as_deref(),
                &io::cfgs_to_json(&corpus(&config)?),
            )
        }
    }?;
    Ok(output)
}

/// Runs the command line `args` (including the program name) and returns
/// the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: cannot start {} worker threads: {e}", cli.jobs);
            return EXIT_USAGE;
        }
    };
    match pool.install(|| execute(cli.command)) {
        Ok(output) => {
            let written = out
                .write_all(output.out.as_bytes())
                .and_then(|_| out.flush());
            let _ = err.write_all(output.err.as_bytes());
            match written {
                Ok(()) => EXIT_OK,
                Err(e) => {
                    let _ = writeln!(err, "error: writing output: {e}");
                    EXIT_DATA
                }
            }
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_DATA
        }
    }
}
