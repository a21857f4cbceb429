use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use selfclone::clock::SystemClock;
use selfclone::dataset::{build_dataset, read_csv, write_csv};
use selfclone::gateway::{Gateway, ModelConfig, OpenAiBackend};
use selfclone::http::{router, AppState};
use selfclone::orchestrator::Study;
use selfclone::report::{build_report, ReportOptions};
use selfclone::session::Wave;
use selfclone::simulate::{simulate, SimConfig, SimStatus};
use selfclone::store::Store;

#[derive(Parser)]
#[command(name = "selfclone", version, about = "Self-clone chatbot study platform")]
struct Cli {
    /// Directory holding the event log.
    #[arg(long, env = "DATA_DIR", default_value = "data", global = true)]
    data_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serve the JSON API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Seed for condition assignment and analysis.
        #[arg(long, env = "STUDY_SEED", default_value_t = 42)]
        seed: u64,
        /// Require this bearer token on every request.
        #[arg(long, env = "STUDY_API_TOKEN")]
        token: Option<String>,
    },
    /// Write the analysis dataset as CSV to stdout.
    Export {
        #[arg(long)]
        wave: Option<Wave>,
    },
    /// Run the analysis battery on an exported CSV.
    Analyze {
        csv: PathBuf,
        #[arg(long, env = "STUDY_SEED", default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = selfclone::stats::dip::DEFAULT_BOOTSTRAPS)]
        bootstraps: usize,
        /// Print the full report as JSON instead of the text summary.
        #[arg(long)]
        json: bool,
    },
    /// Drive a synthetic cohort through the protocol against the scripted stub.
    Simulate {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 0.6)]
        followup_rate: f64,
        /// Abort the process after this many user messages (crash testing).
        #[arg(long, hide = true)]
        abort_after_messages: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

type AnyResult = Result<(), Box<dyn std::error::Error>>;

fn run(cli: Cli) -> AnyResult {
    match cli.command {
        Command::Serve { addr, seed, token } => serve(&cli.data_dir, &addr, seed, token),
        Command::Export { wave } => {
            let store = Store::open(&cli.data_dir)?;
            let rows = store.read(|s| build_dataset(s, wave))?;
            write_csv(&rows, std::io::stdout().lock())?;
            Ok(())
        }
        Command::Analyze { csv, seed, bootstraps, json } => {
            let rows = read_csv(std::fs::File::open(&csv)?)?;
            let opts = ReportOptions { seed, dip_bootstraps: bootstraps, ..ReportOptions::default() };
            let report = build_report(&rows, &opts)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", report.summary());
            }
            Ok(())
        }
        Command::Simulate { n, seed, followup_rate, abort_after_messages } => {
            let store = Arc::new(Store::open(&cli.data_dir)?);
            let cfg = SimConfig { n, seed, followup_rate, stop_after_messages: abort_after_messages };
            match simulate(store, &cfg)? {
                SimStatus::Complete => {
                    eprintln!("simulated {n} participants into {}", cli.data_dir.display());
                    Ok(())
                }
                SimStatus::Stopped { messages_posted } => {
                    eprintln!("aborting after {messages_posted} messages");
                    std::process::abort()
                }
            }
        }
    }
}

fn serve(data_dir: &std::path::Path, addr: &str, seed: u64, token: Option<String>) -> AnyResult {
    let store = Arc::new(Store::open(data_dir)?);
    let clock = Arc::new(SystemClock);
    let gateway = Gateway::new(Arc::new(OpenAiBackend::from_env()), ModelConfig::from_env(), clock.clone())?;
    let study = Arc::new(Study::new(store, gateway, clock, seed));
    let app = router(AppState { study, token, report: ReportOptions { seed, ..ReportOptions::default() } });
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, app).with_graceful_shutdown(shutdown()).await?;
        Ok(())
    })
}

async fn shutdown() {
    let _ = tokio::signal::ctrl_c().await;
}
