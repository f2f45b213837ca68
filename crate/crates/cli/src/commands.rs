//! Command line front end over the same engine the service uses.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use flowforge_core::agent::{catalog_from_csv, run_agent, AgentConfig, ScriptedLm};
use flowforge_core::bench::{bench_scale, reference_bench_flow, BenchOptions};
use flowforge_core::{
    build_plan, parse_flow, sequential_plan, serialize_flow, validate, ContextStatus, CostModel, Engine, ExecutionPlan, Flow,
    FlowError, PlanMode, Registry, RunId, Store, StoreConfig,
};

use crate::config::Config;

#[derive(Debug, Parser)]
#[command(name = "flowforge", version, about = "Component-based ML workflow engine")]
pub struct Cli {
    /// TOML config file (defaults to $FLOWFORGE_CONFIG, then built-in defaults).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        port: Option<u16>,
    },
    /// Validate, plan and run flow files.
    #[command(subcommand)]
    Flow(FlowCmd),
    /// Ask questions about tables.
    #[command(subcommand)]
    Agent(AgentCmd),
    /// Scaling benchmark.
    #[command(subcommand)]
    Bench(BenchCmd),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Mode {
    Optimized,
    Sequential,
}

impl From<Mode> for PlanMode {
    fn from(m: Mode) -> PlanMode {
        match m {
            Mode::Optimized => PlanMode::Optimized,
            Mode::Sequential => PlanMode::Sequential,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum FlowCmd {
    /// Check a flow file; issues go to stderr and the exit code is 1 if any.
    Validate { file: PathBuf },
    /// Print the execution plan as a wave table.
    Plan {
        file: PathBuf,
        #[arg(long, value_enum, default_value = "optimized")]
        mode: Mode,
        #[arg(long)]
        workers: Option<usize>,
        /// Print the plan as JSON instead.
        #[arg(long)]
        json: bool,
    },
    /// Execute a flow and print the run record as JSON.
    Run {
        file: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, value_enum, default_value = "optimized")]
        mode: Mode,
        /// Directory relative paths resolve against (defaults to the flow file's directory).
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long, default_value = "cli")]
        run_id: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum AgentCmd {
    /// Answer a question about csv tables.
    Ask {
        /// Comma-separated `name=path.csv` pairs.
        #[arg(long, required = true)]
        tables: String,
        question: String,
        /// Scripted model rules (JSON with a `rules` list).
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long)]
        max_steps: Option<usize>,
        /// Print the whole transcript as JSON.
        #[arg(long)]
        transcript: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum BenchCmd {
    /// Sequential vs optimized wall time over ten growing data slices.
    Scale(ScaleArgs),
    /// Print the built-in reference flow as a flow document.
    Flow {
        #[arg(long, default_value_t = 30.0)]
        base_ms: f64,
        #[arg(long, default_value_t = 40.0)]
        ms_per_krow: f64,
    },
}

#[derive(Debug, Args)]
pub struct ScaleArgs {
    /// Flow to time; defaults to the built-in branching reference flow.
    #[arg(long)]
    pub flow: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub workers: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Rows in the full synthetic dataset.
    #[arg(long, default_value_t = 5000)]
    pub rows: usize,
    /// Simulated per-branch latency for the reference flow.
    #[arg(long, default_value_t = 30.0)]
    pub base_ms: f64,
    #[arg(long, default_value_t = 40.0)]
    pub ms_per_krow: f64,
    /// Where bench_report.csv and bench_report.json are written.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

pub fn load_flow(path: &Path, registry: &Registry) -> anyhow::Result<Flow> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_flow(&text, registry).with_context(|| format!("parsing {}", path.display()))
}

pub fn make_plan(flow: &Flow, registry: &Registry, mode: PlanMode) -> anyhow::Result<ExecutionPlan> {
    Ok(match mode {
        PlanMode::Optimized => build_plan(flow, registry, &CostModel::unit())?,
        PlanMode::Sequential => sequential_plan(flow)?,
    })
}

/// Returns the process exit code.
pub fn run(cli: Cli) -> anyhow::Result<i32> {
    let config = Config::load(cli.config.as_deref())?;
    let registry = Registry::standard();
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::Serve { port } => {
            let mut config = config;
            if let Some(p) = port {
                config.port = p;
            }
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(crate::service::serve(config))?;
        }
        Command::Flow(FlowCmd::Validate { file }) => {
            let text = std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
            let issues = match parse_flow(&text, &registry) {
                Ok(flow) => validate(&flow, &registry),
                Err(FlowError::Issues(issues)) => issues,
                Err(e) => {
                    eprintln!("{}: {e}", file.display());
                    return Ok(1);
                }
            };
            if !issues.is_empty() {
                for i in &issues {
                    eprintln!("{i}");
                }
                return Ok(1);
            }
            writeln!(out, "{}: ok", file.display())?;
        }
        Command::Flow(FlowCmd::Plan { file, mode, workers, json }) => {
            let flow = load_flow(&file, &registry)?;
            let plan = make_plan(&flow, &registry, mode.into())?;
            if json {
                writeln!(out, "{}", serde_json::to_string_pretty(&plan)?)?;
            } else {
                write!(out, "{}", plan.to_text_table())?;
                let workers = workers.unwrap_or(config.workers);
                let widest = plan.waves.iter().map(Vec::len).max().unwrap_or(0);
                writeln!(out, "workers: {workers} (widest wave {widest})")?;
            }
        }
        Command::Flow(FlowCmd::Run { file, workers, mode, data_dir, run_id }) => {
            let flow = load_flow(&file, &registry)?;
            let plan = make_plan(&flow, &registry, mode.into())?;
            let data_dir = data_dir
                .or_else(|| file.parent().map(Path::to_path_buf))
                .unwrap_or_else(|| PathBuf::from("."));
            let store = Store::new(StoreConfig::new(config.memory_budget_bytes, &config.spill_dir))?;
            let engine = Engine::new(Arc::new(store), Arc::new(registry), data_dir);
            let ctx = engine.create_context(RunId::new(run_id), workers.unwrap_or(config.workers), None)?;
            let record = ctx.run_plan(&flow, &plan, None)?;
            writeln!(out, "{}", serde_json::to_string_pretty(&record)?)?;
            if record.status != ContextStatus::Finished {
                eprintln!(
                    "run failed at `{}`: {}",
                    record.failed_node.as_deref().unwrap_or("?"),
                    record.error.as_deref().unwrap_or("")
                );
                return Ok(1);
            }
        }
        Command::Agent(AgentCmd::Ask { tables, question, script, max_steps, transcript }) => {
            let specs = parse_table_specs(&tables)?;
            let catalog = catalog_from_csv(&specs)?;
            let Some(script) = script else {
                bail!("no language model is configured; pass --script with scripted rules");
            };
            let text = std::fs::read_to_string(&script).with_context(|| format!("reading {}", script.display()))?;
            let lm = ScriptedLm::from_json(&text)?;
            let defaults = AgentConfig::default();
            let agent = AgentConfig { max_steps: max_steps.unwrap_or(defaults.max_steps), ..defaults };
            let outcome = run_agent(&question, &catalog, &lm, &agent)?;
            if transcript {
                writeln!(out, "{}", serde_json::to_string_pretty(&outcome)?)?;
            } else {
                writeln!(out, "{}", outcome.answer)?;
            }
        }
        Command::Bench(BenchCmd::Flow { base_ms, ms_per_krow }) => {
            writeln!(out, "{}", serialize_flow(&reference_bench_flow(base_ms, ms_per_krow)))?;
        }
        Command::Bench(BenchCmd::Scale(args)) => {
            let flow = match &args.flow {
                Some(p) => load_flow(p, &registry)?,
                None => reference_bench_flow(args.base_ms, args.ms_per_krow),
            };
            let opts = BenchOptions {
                workers: args.workers,
                seed: args.seed,
                rows: args.rows,
                memory_budget_bytes: config.memory_budget_bytes,
                ..BenchOptions::default()
            };
            std::fs::create_dir_all(&args.out)?;
            let work = args.out.join(".bench-work");
            let report = bench_scale(&flow, &opts, &work);
            let _ = std::fs::remove_dir_all(&work);
            let report = report?;
            std::fs::write(args.out.join("bench_report.csv"), report.to_csv())?;
            std::fs::write(args.out.join("bench_report.json"), serde_json::to_string_pretty(&report)?)?;
            write!(out, "{}", report.to_csv())?;
        }
    }
    Ok(0)
}

/// `a=x.csv,b=y.csv` into pairs.
pub fn parse_table_specs(spec: &str) -> anyhow::Result<Vec<(String, PathBuf)>> {
    spec.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|item| {
            let (name, path) = item.split_once('=').with_context(|| format!("`{item}` is not name=path"))?;
            if name.trim().is_empty() {
                bail!("`{item}` has an empty table name");
            }
            Ok((name.trim().to_string(), PathBuf::from(path.trim())))
        })
        .collect()
}
