//! The `cbcast` binary.
//!
//! Exit codes: 0 clean, 1 usage or I/O error, 2 a checker found violations.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use cbcast::figures::{replay_figures, Replay};
use cbcast::simulator::SimConfig;
use cbcast::trace::{execution_from_trace, read_trace, write_trace};
use cbcast::{check_all, ProcessId, Simulation};
use cbcast_kvs::{Node, NodeConfig, PeerConfig};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_VIOLATION: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "cbcast", version, about = "Causal broadcast simulator, checker and replicated store")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a seeded simulation, write its trace and print a summary
    Simulate(SimulateArgs),
    /// Check a JSON-lines trace for causal-delivery violations
    CheckTrace(CheckTraceArgs),
    /// Run one node of the replicated key-value store
    KvsNode(KvsNodeArgs),
    /// Print the scripted example executions with their clocks
    ReplayFigures,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Number of processes
    #[arg(long)]
    pub procs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Step budget
    #[arg(long)]
    pub steps: Option<usize>,
    /// Probability that each copy of a broadcast is lost
    #[arg(long)]
    pub p_drop: Option<f64>,
    /// Probability that each copy of a broadcast is sent twice
    #[arg(long)]
    pub p_duplicate: Option<f64>,
    /// Where to write the JSON-lines trace
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// After the budget is spent, keep receiving and delivering until nothing is left to do
    #[arg(long)]
    pub drain: bool,
    /// JSON simulation config; flags override its fields
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckTraceArgs {
    /// Trace file, or `-` for stdin
    #[arg(long)]
    pub trace: PathBuf,
}

#[derive(Debug, Args)]
pub struct KvsNodeArgs {
    /// This node's process id
    #[arg(long)]
    pub id: Option<usize>,
    #[arg(long)]
    pub listen: Option<SocketAddr>,
    /// A peer as `ID=URL`; repeat once per peer
    #[arg(long = "peer", value_parser = parse_peer)]
    pub peers: Vec<PeerConfig>,
    /// Most messages per peer request
    #[arg(long)]
    pub batch_max: Option<usize>,
    /// JSON node config; flags override its fields
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn parse_peer(s: &str) -> Result<PeerConfig, String> {
    let (id, url) = s.split_once('=').ok_or_else(|| format!("expected ID=URL, got {s:?}"))?;
    let id: usize = id.trim().parse().map_err(|e| format!("bad peer id {id:?}: {e}"))?;
    if url.trim().is_empty() {
        return Err(format!("peer {id} has an empty URL"));
    }
    Ok(PeerConfig {
        id: ProcessId(id),
        url: url.trim().to_string(),
    })
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::from(EXIT_OK),
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

pub fn run(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::CheckTrace(args) => check_trace(&args.trace),
        Command::KvsNode(args) => kvs_node(args),
        Command::ReplayFigures => {
            let out = serde_json::to_string_pretty(&figures_json())?;
            println!("{out}");
            Ok(EXIT_OK)
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))
}

fn simulate(args: SimulateArgs) -> anyhow::Result<u8> {
    let mut cfg: SimConfig = match &args.config {
        Some(path) => read_json(path)?,
        None => SimConfig::default(),
    };
    if let Some(n) = args.procs {
        cfg.n_procs = n;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(steps) = args.steps {
        cfg.max_steps = steps;
    }
    if let Some(p) = args.p_drop {
        cfg.p_drop = p;
    }
    if let Some(p) = args.p_duplicate {
        cfg.p_duplicate = p;
    }

    let mut sim = Simulation::new(cfg)?;
    sim.run();
    if args.drain {
        sim.drain()?;
    }
    if let Some(path) = &args.trace {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut out = BufWriter::new(file);
        write_trace(sim.trace(), &mut out)?;
        out.flush().with_context(|| format!("writing {}", path.display()))?;
    }

    let report = check_all(sim.execution());
    for v in report.all() {
        eprintln!("{v}");
    }
    let summary = sim.summary(&report);
    println!("{}", serde_json::to_string(&summary)?);
    Ok(if report.is_clean() { EXIT_OK } else { EXIT_VIOLATION })
}

fn check_trace(path: &Path) -> anyhow::Result<u8> {
    let events = if path == Path::new("-") {
        read_trace::<Value, _>(io::stdin().lock())?
    } else {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        read_trace::<Value, _>(BufReader::new(file))?
    };
    let n_events = events.len();
    let x = execution_from_trace(events)?;
    let report = check_all(&x);
    for v in report.all() {
        println!("{v}");
    }
    let summary = json!({
        "events": n_events,
        "processes": x.n(),
        "lcd": report.lcd.len(),
        "cd": report.cd.len(),
        "correspondence": report.correspondence.len(),
        "violations": report.total(),
    });
    println!("{summary}");
    Ok(if report.is_clean() { EXIT_OK } else { EXIT_VIOLATION })
}

fn node_config(args: KvsNodeArgs) -> anyhow::Result<NodeConfig> {
    let mut cfg = match &args.config {
        Some(path) => read_json::<NodeConfig>(path)?,
        None => {
            let (Some(id), Some(listen)) = (args.id, args.listen) else {
                bail!("--id and --listen are required without --config");
            };
            NodeConfig {
                self_id: ProcessId(id),
                peers: Vec::new(),
                listen,
                batch_max: cbcast_kvs::config::DEFAULT_BATCH_MAX,
            }
        }
    };
    if let Some(id) = args.id {
        cfg.self_id = ProcessId(id);
    }
    if let Some(listen) = args.listen {
        cfg.listen = listen;
    }
    if !args.peers.is_empty() {
        cfg.peers = args.peers;
    }
    if let Some(b) = args.batch_max {
        cfg.batch_max = b;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn kvs_node(args: KvsNodeArgs) -> anyhow::Result<u8> {
    let cfg = node_config(args)?;
    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(io::stderr)
        .try_init();

    let rt = tokio::runtime::Runtime::new().context("starting runtime")?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(cfg.listen)
            .await
            .with_context(|| format!("binding {}", cfg.listen))?;
        let addr = listener.local_addr()?;
        let shutdown = shutdown_signal()?;
        let node = Node::start(&cfg)?;
        tracing::info!(id = cfg.self_id.index(), n = cfg.n(), %addr, "listening");
        eprintln!("listening on {addr}");
        cbcast_kvs::http::serve(node, listener, shutdown).await?;
        tracing::info!("shut down");
        Ok(EXIT_OK)
    })
}

/// Registers the shutdown signal handlers now, so a signal that arrives
/// before the server starts polling still counts.
fn shutdown_signal() -> anyhow::Result<impl std::future::Future<Output = ()> + Send + 'static> {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        let mut term = signal(SignalKind::terminate()).context("installing SIGTERM handler")?;
        let mut int = signal(SignalKind::interrupt()).context("installing SIGINT handler")?;
        Ok(async move {
            tokio::select! {
                _ = term.recv() => {}
                _ = int.recv() => {}
            }
        })
    }
    #[cfg(not(unix))]
    {
        Ok(async {
            let _ = tokio::signal::ctrl_c().await;
        })
    }
}

fn replay_json(r: &Replay) -> Value {
    let procs = r.execution.procs();
    json!({
        "messages": r.messages.iter().map(|m| json!({
            "raw": m.raw,
            "sender": m.sender,
            "vc": m.vc,
        })).collect::<Vec<_>>(),
        "final_clocks": procs.iter().map(|p| p.vc()).collect::<Vec<_>>(),
        "delivered": procs.iter().map(|p| r.delivered(p.id())).collect::<Vec<_>>(),
        "buffered": r.buffered,
        "violations": check_all(&r.execution).total(),
    })
}

/// The scripted example executions as JSON.
pub fn figures_json() -> Value {
    let f = replay_figures();
    json!({
        "vector_clocks": replay_json(&f.vector_clocks),
        "fifo": replay_json(&f.fifo),
        "causal": replay_json(&f.causal),
    })
}
