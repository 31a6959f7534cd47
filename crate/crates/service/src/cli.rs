use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::io::{Read, Write};
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use stgnav::app::{extract, generate_random_app, AppModel, AppParams, DEFAULT_EXPLORATION_BUDGET};
use stgnav::merging::{merge_all, MergeReport, DEFAULT_TAU};
use stgnav::planner::{Plan, Planner, PlannerConfig, DEFAULT_N_EXACT};
use stgnav::sim::{compare_strategies, TesterKind, TesterModel};
use stgnav::stg::{load_graph, save_graph, validate, FORMAT_VERSION};
use stgnav::{Error, Execution, Result, StgGraph};

use crate::display::display_document;
use crate::store::{ServiceConfig, Store, DEFAULT_LISTEN};

#[derive(Debug, Parser)]
#[command(
    name = "stgnav",
    version,
    about = "State transition graph extraction, coverage planning and guided exploration"
)]
struct Cli {
    /// Run on a single thread
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic app model
    Generate(GenerateArgs),
    /// Extract a raw graph from an app model (static pass, random exploration, combine)
    Extract(ExtractArgs),
    /// Merge duplicate states of a graph
    Merge(MergeArgs),
    /// Plan a walk covering every state of a graph
    Plan(PlanArgs),
    /// Compare tester strategies on an app model
    Simulate(SimulateArgs),
    /// Serve the guidance API over HTTP
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = AppParams::default().n_activities)]
    activities: usize,
    #[arg(long, default_value_t = AppParams::default().states_per_activity)]
    states_per_activity: usize,
    #[arg(long, default_value_t = AppParams::default().branching)]
    branching: usize,
    #[arg(long, default_value_t = AppParams::default().duplicate_rate)]
    duplicate_rate: f64,
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(Debug, Args)]
struct ExtractArgs {
    /// App model file, `-` for stdin
    #[arg(long, default_value = "-")]
    app: String,
    #[arg(long, default_value_t = DEFAULT_EXPLORATION_BUDGET)]
    budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Similarity threshold used for the display document's merged graph
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
    /// Also write a display document of the merged graph here
    #[arg(long)]
    display: Option<PathBuf>,
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(Debug, Args)]
struct MergeArgs {
    #[arg(long, default_value = "-")]
    graph: String,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
    #[arg(long, default_value = "-")]
    out: String,
    /// Write the cluster reports of both passes here
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PlanArgs {
    #[arg(long, default_value = "-")]
    graph: String,
    /// Start state, the graph's start state by default
    #[arg(long)]
    start: Option<String>,
    /// Merge the graph at this threshold before planning
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_N_EXACT)]
    n_exact: usize,
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, default_value = "-")]
    app: String,
    /// Comma separated: guided:P, random, greedy_nearest, dfs
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "guided:1.0,guided:0.5,random,greedy_nearest,dfs"
    )]
    testers: Vec<TesterKind>,
    #[arg(long, default_value_t = 10_000)]
    budget: u64,
    #[arg(long, default_value_t = 50)]
    seeds: usize,
    /// Include per-run metrics and coverage curves
    #[arg(long)]
    emit_curves: bool,
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, env = "STGNAV_LISTEN", default_value = DEFAULT_LISTEN)]
    listen: String,
    #[arg(long, default_value_t = stgnav::guidance::DEFAULT_IDLE_THRESHOLD_MS)]
    idle_threshold_ms: u64,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
    #[arg(long, default_value_t = DEFAULT_N_EXACT)]
    n_exact: usize,
    /// Directory of app models or graphs loaded at startup
    #[arg(long)]
    fixtures: Option<PathBuf>,
    /// Directory for uploaded graphs and session logs; restored on startup
    #[arg(long)]
    log_dir: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct PlanDocument<'a> {
    version: &'static str,
    start: &'a str,
    #[serde(flatten)]
    plan: &'a Plan,
}

#[derive(Debug, Serialize)]
struct MergeReports<'a> {
    version: &'static str,
    signature: &'a MergeReport,
    context: &'a MergeReport,
}

struct Io<'a> {
    stdin: &'a mut dyn Read,
    stdout: &'a mut dyn Write,
    exec: Execution,
}

impl Io<'_> {
    fn input(&mut self, path: &str) -> Result<Vec<u8>> {
        if path == "-" {
            let mut buf = Vec::new();
            self.stdin.read_to_end(&mut buf)?;
            Ok(buf)
        } else {
            Ok(fs::read(path)?)
        }
    }

    fn output(&mut self, path: &str, bytes: &[u8]) -> Result<()> {
        if path == "-" {
            self.stdout.write_all(bytes)?;
            self.stdout.flush()?;
        } else {
            fs::write(path, bytes)?;
        }
        Ok(())
    }

    fn graph(&mut self, path: &str) -> Result<StgGraph> {
        let g = load_graph(&self.input(path)?)?;
        validate(&g).into_result()?;
        Ok(g)
    }
}

fn pretty(value: &impl Serialize) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("documents serialize");
    bytes.push(b'\n');
    bytes
}

fn generate(io: &mut Io, a: &GenerateArgs) -> Result<()> {
    let app = generate_random_app(&AppParams {
        n_activities: a.activities,
        states_per_activity: a.states_per_activity,
        branching: a.branching,
        duplicate_rate: a.duplicate_rate,
        seed: a.seed,
    })?;
    io.output(&a.out, &app.save())
}

fn extract_cmd(io: &mut Io, a: &ExtractArgs) -> Result<()> {
    let app = AppModel::load(&io.input(&a.app)?)?;
    let (raw, _) = extract(&app, a.budget, a.seed)?;
    if let Some(path) = &a.display {
        let (merged, _, _) = merge_all(&raw, a.tau, io.exec)?;
        fs::write(path, pretty(&display_document(&merged)))?;
    }
    io.output(&a.out, &save_graph(&raw))
}

fn merge_cmd(io: &mut Io, a: &MergeArgs) -> Result<()> {
    let g = io.graph(&a.graph)?;
    let (merged, signature, context) = merge_all(&g, a.tau, io.exec)?;
    if let Some(path) = &a.report {
        let reports = MergeReports {
            version: FORMAT_VERSION,
            signature: &signature,
            context: &context,
        };
        fs::write(path, pretty(&reports))?;
    }
    io.output(&a.out, &save_graph(&merged))
}

fn plan_cmd(io: &mut Io, a: &PlanArgs) -> Result<()> {
    let mut g = io.graph(&a.graph)?;
    let mut start = a.start.clone().unwrap_or_else(|| g.start_state.clone());
    if !g.contains_state(&start) {
        return Err(Error::UnknownState(start));
    }
    if let Some(tau) = a.tau {
        let (merged, signature, context) = merge_all(&g, tau, io.exec)?;
        for report in [&signature, &context] {
            if let Some(c) = report.clusters.iter().find(|c| c.merged.contains(&start)) {
                start = c.representative.clone();
            }
        }
        g = merged;
    }
    let planner = Planner::new(
        g,
        PlannerConfig {
            n_exact: a.n_exact,
            exec: io.exec,
        },
    )?;
    let plan = planner.replan(&start, &BTreeSet::from([start.clone()]))?;
    let doc = PlanDocument {
        version: FORMAT_VERSION,
        start: &start,
        plan: &plan,
    };
    io.output(&a.out, &pretty(&doc))
}

fn simulate_cmd(io: &mut Io, a: &SimulateArgs) -> Result<()> {
    let app = AppModel::load(&io.input(&a.app)?)?;
    let testers: Vec<TesterModel> = a.testers.iter().map(|k| TesterModel::new(*k)).collect();
    let report = compare_strategies(&app, &testers, a.budget, a.seeds, io.exec)?;
    let report = if a.emit_curves {
        report
    } else {
        report.without_runs()
    };
    io.output(&a.out, &pretty(&report))
}

fn serve(a: &ServeArgs, stderr: &mut dyn Write) -> Result<()> {
    let config = ServiceConfig {
        listen: a.listen.clone(),
        idle_threshold_ms: a.idle_threshold_ms,
        tau: a.tau,
        n_exact: a.n_exact,
        fixtures: a.fixtures.clone(),
        log_dir: a.log_dir.clone(),
    };
    let store = Arc::new(Store::open(config)?);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&a.listen).await?;
        writeln!(stderr, "listening on {}", listener.local_addr()?)?;
        axum::serve(listener, crate::api::router(store))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}

/// Parses `args` (program name first) and runs the subcommand. Returns the
/// process exit code: 0 on success, 1 on usage errors, 2 on data errors.
pub fn run_with_io<I, T>(
    args: I,
    stdin: &mut dyn Read,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                1
            } else {
                let _ = write!(stdout, "{text}");
                0
            };
        }
    };
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let mut io = Io {
        stdin,
        stdout,
        exec,
    };
    let result = match &cli.command {
        Command::Generate(a) => generate(&mut io, a),
        Command::Extract(a) => extract_cmd(&mut io, a),
        Command::Merge(a) => merge_cmd(&mut io, a),
        Command::Plan(a) => plan_cmd(&mut io, a),
        Command::Simulate(a) => simulate_cmd(&mut io, a),
        Command::Serve(a) => serve(a, stderr),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            2
        }
    }
}
