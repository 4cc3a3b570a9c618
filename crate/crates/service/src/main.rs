use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Result;
use clap::{Parser, Subcommand};
use touchstone_core::config::Config;
use touchstone_core::lang::ExplanationClient;
use touchstone_service::api::{router, Service};
use touchstone_service::commands::{self, Profile, Settings};
use touchstone_service::llm::HttpExplanationClient;
use touchstone_service::store::Store;

#[derive(Parser)]
#[command(name = "touchstone", version, about = "Visuo-tactile hardness estimation on simulated scenes")]
struct Cli {
    /// Master seed for every random stream.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// TOML or JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a tactile corpus under <out>/<profile>.
    GenData {
        #[arg(long, value_enum)]
        profile: Profile,
        /// Number of clips, pretraining profiles only.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Pretrain then fine-tune the hardness model.
    Train {
        /// Directory with corpora from gen-data; missing ones are generated.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Also train the fine-tune-only baseline for comparison.
        #[arg(long)]
        direct: bool,
    },
    /// Rank-order validation across ripeness stages.
    EvalTactile {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Detector, depth and centroid accuracy on single-object scenes.
    EvalServoing {
        #[arg(long, default_value_t = 200)]
        scenes: usize,
    },
    /// End-to-end query scenarios.
    RunScenarios {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// One scenario id; all of them when omitted.
        #[arg(long)]
        scenario: Option<u8>,
        #[arg(long, default_value_t = 10)]
        runs: usize,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    Ok(match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    })
}

fn serve(settings: Settings, checkpoint: Option<&Path>, addr: SocketAddr) -> Result<()> {
    let (model, id) = settings.load_model(checkpoint)?;
    let client = HttpExplanationClient::from_config(&settings.config.llm)?
        .map(|c| Arc::new(c) as Arc<dyn ExplanationClient>);
    let store = Store::open(&settings.out)?;
    // The blocking HTTP client must not be dropped on a runtime thread.
    let _client = client.clone();
    let service = Service::new(store, settings.config, model, id, client, settings.seed);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        tracing::info!("listening on http://{}/v1", listener.local_addr()?);
        axum::serve(listener, router(service)).await?;
        Ok(())
    })
}

fn run(cli: Cli) -> Result<()> {
    let mut settings = Settings::new(load_config(cli.config.as_deref())?, cli.seed, &cli.out);
    if cli.sequential {
        settings.exec = touchstone_core::par::Exec::Sequential;
    }
    match cli.command {
        Command::GenData { profile, n } => {
            let (dir, count) = commands::gen_data(&settings, profile, n)?;
            println!("{count} clips written to {}", dir.display());
        }
        Command::Train { data, direct } => {
            let (_, s) = commands::train_model(&settings, data.as_deref(), direct)?;
            println!(
                "held-out spearman {:.3} r2 {:.3} rmse {:.2} HA in {:.0} s",
                s.heldout.spearman, s.heldout.r2, s.heldout.rmse, s.seconds
            );
            if let Some(d) = s.direct {
                println!("fine-tune only: spearman {:.3} r2 {:.3}", d.spearman, d.r2);
            }
        }
        Command::EvalTactile { checkpoint } => {
            let outcome = commands::eval_tactile(&settings, checkpoint.as_deref())?;
            for c in &outcome.report.comparisons {
                println!(
                    "{} vs {}: U={} p={:.2e} holm={:.2e} {}",
                    c.harder,
                    c.softer,
                    c.u,
                    c.p,
                    c.p_adjusted,
                    if c.significant { "significant" } else { "n.s." }
                );
            }
        }
        Command::EvalServoing { scenes } => {
            let report = commands::eval_servoing(&settings, scenes)?;
            for p in &report.profiles {
                let err = p.error_mm.as_ref().map_or(f64::NAN, |e| e.mean);
                println!("{}: success rate {:.2}, mean error {:.2} mm", p.profile.name.name(), p.success_rate, err);
            }
        }
        Command::RunScenarios { checkpoint, scenario, runs } => {
            let (file, _) = commands::run_scenarios(&settings, checkpoint.as_deref(), scenario, runs)?;
            for e in &file.scenarios {
                println!("scenario {}: OL-SR {:.2} SL-SR {:.2}", e.spec.id, e.report.ol_sr, e.report.sl_sr);
            }
        }
        Command::Serve { checkpoint, addr } => serve(settings, checkpoint.as_deref(), addr)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
