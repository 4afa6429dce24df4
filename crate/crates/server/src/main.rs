use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use abpipe_core::control::{Controller, RunStatus};
use abpipe_core::feedback::LoopConfig;
use abpipe_core::spec::load_catalogs;
use abpipe_core::traffic::SimClock;
use abpipe_server::{app, AppState};
use clap::{Args, Parser, Subcommand};

/// Automated A/B experiment pipelines over a simulated web store.
#[derive(Debug, Parser)]
#[command(name = "abpipe", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one pipeline to completion and persist its results.
    Run(RunArgs),
    /// Load and resolve a catalog directory, listing every problem.
    Validate {
        #[arg(long, env = "ABPIPE_SPECS")]
        specs: PathBuf,
    },
    /// Serve the control API over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long, env = "ABPIPE_SPECS")]
    specs: PathBuf,
    #[arg(long, env = "ABPIPE_PIPELINE")]
    pipeline: String,
    #[arg(long, env = "ABPIPE_SEED", default_value_t = 0)]
    seed: u64,
    /// Run on the virtual clock (the default when no time scale is given).
    #[arg(long, conflicts_with = "time_scale")]
    virtual_time: bool,
    /// Pace the run against the wall clock at this many simulated seconds
    /// per wall second.
    #[arg(long, env = "ABPIPE_TIME_SCALE")]
    time_scale: Option<f64>,
    /// Directory receiving one subdirectory per run.
    #[arg(long, env = "ABPIPE_OUT")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, env = "ABPIPE_PORT", default_value_t = 8080)]
    port: u16,
    #[arg(long, env = "ABPIPE_BIND", default_value = "127.0.0.1")]
    bind: std::net::IpAddr,
    /// Catalog directory loaded at startup and by default on reload.
    #[arg(long, env = "ABPIPE_SPECS")]
    specs: Option<PathBuf>,
    /// Where runs are persisted; kept in memory when absent.
    #[arg(long, env = "ABPIPE_RUNS")]
    runs: Option<PathBuf>,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run(args),
        Command::Validate { specs } => validate(&specs),
        Command::Serve(args) => serve(args),
    };
    match outcome {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

fn validate(specs: &Path) -> Result<ExitCode, String> {
    let (_, report) = load_catalogs(specs).map_err(|e| format!("{}: {e}", specs.display()))?;
    println!("{} documents loaded", report.documents_loaded);
    for p in &report.pipelines {
        println!("pipeline ok: {p}");
    }
    for w in &report.warnings {
        println!("warning: {}: {}", w.file, w.message);
    }
    for e in &report.errors {
        println!("error: {}: {}", e.file, e.message);
    }
    Ok(if report.is_clean() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn run(args: RunArgs) -> Result<ExitCode, String> {
    let clock = match args.time_scale {
        Some(scale) => SimClock::realtime(scale)?,
        None => SimClock::virtual_time(),
    };
    let controller = Controller::open(&args.out, LoopConfig::default()).map_err(|e| e.to_string())?;
    let report = controller.load_catalogs(&args.specs).map_err(|e| format!("{}: {e}", args.specs.display()))?;
    for e in &report.errors {
        eprintln!("catalog error: {}: {}", e.file, e.message);
    }
    let run_id = controller.start_run(&args.pipeline, args.seed, clock).map_err(|e| e.to_string())?;
    let record = controller.wait(&run_id).map_err(|e| e.to_string())?;
    let result = controller.get_results(&run_id).map_err(|e| e.to_string())?;
    println!("run {run_id}: {:?}", record.status);
    for e in &result.experiments {
        match &e.outcome {
            Some(o) => println!(
                "  {}: {} (p = {}, threshold {}, {} samples per variant) -> {}",
                e.experiment,
                o.decision,
                format_p(o.p_value_observed),
                o.threshold,
                o.samples_per_variant,
                e.fired_rule.as_deref().unwrap_or("no matching rule"),
            ),
            None => println!("  {}: not analyzed", e.experiment),
        }
    }
    println!("path: {}", result.path.join(" -> "));
    if let Some(d) = &record.diagnostic {
        println!("diagnostic: {d}");
    }
    if let Some(path) = controller.result_file(&run_id) {
        println!("result: {}", path.display());
    }
    Ok(if record.status == RunStatus::Ended { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn format_p(p: f64) -> String {
    if p != 0.0 && p < 1e-4 {
        format!("{p:.3e}")
    } else {
        format!("{p:.4}")
    }
}

fn serve(args: ServeArgs) -> Result<ExitCode, String> {
    let controller = match &args.runs {
        Some(dir) => Controller::open(dir, LoopConfig::default()).map_err(|e| e.to_string())?,
        None => Controller::in_memory(LoopConfig::default()),
    };
    if let Some(specs) = &args.specs {
        let report = controller.load_catalogs(specs).map_err(|e| format!("{}: {e}", specs.display()))?;
        tracing::info!(
            "loaded {} documents, {} errors",
            report.documents_loaded,
            report.errors.len()
        );
    }
    let state = AppState { controller, specs_dir: args.specs };
    let addr = SocketAddr::new(args.bind, args.port);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| format!("{addr}: {e}"))?;
        tracing::info!("listening on {}", listener.local_addr().map_err(|e| e.to_string())?);
        axum::serve(listener, app(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| e.to_string())
    })?;
    Ok(ExitCode::SUCCESS)
}
