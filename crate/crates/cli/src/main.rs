use std::fs;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use stepwise_core::reporting::{self, ReportError, ReportFormat};
use stepwise_core::ripper::{self, RipConfig};
use stepwise_core::{analyze, AppBundle, ReplayOutcome, Store};

const EXIT_ERROR: u8 = 1;
const EXIT_DIVERGENCE: u8 = 3;
const EXIT_NOT_REPLAYABLE: u8 = 4;
const EXIT_DRIVER_FAILURE: u8 = 5;

#[derive(Parser)]
#[command(name = "stepwise", version, about = "Step-wise bug report auto-completion")]
struct Cli {
    /// Store directory.
    #[arg(long, global = true, env = "STEPWISE_STORE", default_value = ".stepwise")]
    store: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, rip and screenshot an app bundle; prints activity coverage.
    Analyze {
        bundle: PathBuf,
        #[arg(long, default_value_t = RipConfig::default().max_depth)]
        max_depth: usize,
        #[arg(long, default_value_t = RipConfig::default().max_steps)]
        max_steps: usize,
    },
    /// Serve the HTTP API; prints the bound address.
    Serve {
        #[arg(long, env = "STEPWISE_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Render or replay a finalized report.
    Report {
        #[command(subcommand)]
        command: ReportCommand,
    },
}

#[derive(Subcommand)]
enum ReportCommand {
    Render {
        id: String,
        /// structured or web-page
        #[arg(long, default_value = "structured")]
        format: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exit status: 0 success, 3 divergence, 4 not replayable, 5 driver failure.
    Replay {
        id: String,
        /// Bundle to drive; defaults to the one the app was analyzed from.
        #[arg(long)]
        bundle: Option<PathBuf>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

fn fail(e: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_ERROR,
        message: e.to_string(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("stepwise: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let store = Store::open(&cli.store).map_err(fail)?;
    match cli.command {
        Command::Analyze {
            bundle,
            max_depth,
            max_steps,
        } => {
            let analysis = analyze(&bundle, &RipConfig { max_depth, max_steps }).map_err(fail)?;
            for w in &analysis.warnings {
                eprintln!("warning: {w}");
            }
            if !analysis.graph.complete {
                eprintln!(
                    "warning: exploration budget reached; {} actions left unexplored",
                    analysis.graph.unexplored.len()
                );
            }
            analysis.save(&store).map_err(fail)?;
            println!("{}", analysis.coverage);
            Ok(())
        }
        Command::Serve { port, host } => serve(store, &host, port),
        Command::Report { command } => match command {
            ReportCommand::Render { id, format, out } => {
                let format: ReportFormat = format.parse().map_err(fail)?;
                let report = store.load_report(&id).map_err(fail)?;
                let doc = reporting::render(&report, format);
                match out {
                    Some(path) => fs::write(&path, doc).map_err(|e| fail(format!("{}: {e}", path.display()))),
                    None => {
                        print!("{doc}");
                        Ok(())
                    }
                }
            }
            ReportCommand::Replay { id, bundle } => replay(&store, &id, bundle),
        },
    }
}

fn replay(store: &Store, id: &str, bundle: Option<PathBuf>) -> Result<(), Failure> {
    let report = store.load_report(id).map_err(fail)?;
    let graph = store.load_graph(&report.app_id, &report.app_version).map_err(fail)?;
    let script = reporting::to_script(&report, &graph).map_err(|e| match e {
        ReportError::NotReplayable(_) => Failure {
            code: EXIT_NOT_REPLAYABLE,
            message: e.to_string(),
        },
        other => fail(other),
    })?;
    let bundle = match bundle {
        Some(b) => b,
        None => store
            .load_bundle_path(&report.app_id, &report.app_version)
            .map_err(fail)?,
    };
    let bundle = AppBundle::open(&bundle).map_err(fail)?;
    let mut device = ripper::simulate(&bundle).map_err(fail)?;
    match reporting::replay(&script, &mut device) {
        ReplayOutcome::Success => {
            println!("success");
            Ok(())
        }
        ReplayOutcome::Divergence {
            step_num,
            expected,
            observed,
        } => {
            println!("divergence step={step_num} expected={expected} observed={observed}");
            Err(Failure {
                code: EXIT_DIVERGENCE,
                message: format!("replay diverged at step {step_num}"),
            })
        }
        ReplayOutcome::DriverFailure { step_num, message } => {
            println!("driver-failure step={step_num}");
            Err(Failure {
                code: EXIT_DRIVER_FAILURE,
                message: format!("driver failed at step {step_num}: {message}"),
            })
        }
    }
}

fn serve(store: Store, host: &str, port: u16) -> Result<(), Failure> {
    let runtime = tokio::runtime::Runtime::new().map_err(fail)?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((host, port))
            .await
            .map_err(|e| fail(format!("cannot listen on {host}:{port}: {e}")))?;
        let addr: SocketAddr = listener.local_addr().map_err(fail)?;
        println!("http://{addr}");
        let app = stepwise_service::router(Arc::new(store));
        axum::serve(listener, app)
            .with_graceful_shutdown(shutdown_signal())
            .await
            .map_err(fail)
    })
}

async fn shutdown_signal() {
    let interrupt = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let terminate = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        _ = interrupt => {},
        _ = terminate => {},
    }
    eprintln!("shutting down");
}
