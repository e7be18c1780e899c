use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use medchat_core::llm::LlmMode;
use medchat_core::{CaseInput, FundusImage, Orchestrator, Pipeline};
use medchat_gateway::{selfcheck, ServiceConfig};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "medchat", version, about = "Multi-agent glaucoma screening report service")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve {
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
    },
    /// Run one case against the live model, recording every completion as a
    /// replay fixture, and print the resulting pipeline JSON.
    RecordFixtures {
        /// Fundus image (PNG or JPEG). Its file stem is the sidecar key.
        #[arg(long, value_name = "IMAGE")]
        case: PathBuf,
        /// Text file holding the clinician's note.
        #[arg(long, value_name = "FILE")]
        note: Option<PathBuf>,
        #[arg(long, value_name = "PATH", default_value = "medchat.toml")]
        config: PathBuf,
        /// Also write the pipeline JSON here.
        #[arg(long, value_name = "PATH")]
        golden: Option<PathBuf>,
    },
    /// Run the shipped fixture case twice offline and compare against the
    /// golden result. Exits nonzero on any mismatch.
    Selfcheck {
        #[arg(long, value_name = "DIR")]
        fixtures: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        golden: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let runtime = match tokio::runtime::Builder::new_multi_thread().enable_all().build() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: tokio runtime: {e}");
            return ExitCode::from(2);
        }
    };
    match runtime.block_on(run(cli.command)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

async fn run(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::Serve { config } => {
            let cfg = ServiceConfig::load(&config)?;
            medchat_gateway::serve(&cfg, async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
            Ok(ExitCode::SUCCESS)
        }
        Command::RecordFixtures {
            case,
            note,
            config,
            golden,
        } => {
            record(&case, note.as_deref(), &config, golden.as_deref()).await?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Selfcheck { fixtures, golden } => {
            let fixtures = fixtures.unwrap_or_else(selfcheck::fixture_dir);
            let golden = golden.unwrap_or_else(selfcheck::golden_path);
            let outcome = selfcheck::run(&fixtures, &golden).await?;
            match outcome.describe_mismatch() {
                None => {
                    println!("selfcheck ok ({} ms)", outcome.elapsed.as_millis());
                    Ok(ExitCode::SUCCESS)
                }
                Some(why) => {
                    eprintln!("selfcheck FAILED: {why}");
                    Ok(ExitCode::from(1))
                }
            }
        }
    }
}

async fn record(image: &Path, note: Option<&Path>, config: &Path, golden: Option<&Path>) -> anyhow::Result<()> {
    let mut cfg = ServiceConfig::load(config)?;
    cfg.llm.mode = LlmMode::Record;
    cfg.validate()?;

    let bytes = std::fs::read(image).with_context(|| image.display().to_string())?;
    let image_data = FundusImage::decode(&bytes).with_context(|| image.display().to_string())?;
    let note = match note {
        Some(p) => {
            let t = std::fs::read_to_string(p).with_context(|| p.display().to_string())?;
            Some(t.trim().to_string()).filter(|t| !t.is_empty())
        }
        None => None,
    };
    let key = image
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("case")
        .to_string();
    let client = cfg.llm.client()?;
    let pipeline = Pipeline::new(
        cfg.vision.build()?,
        Orchestrator::new(client, cfg.llm.max_parallel_agents),
    );
    let result = pipeline
        .run(&CaseInput {
            key,
            image: image_data,
            note,
        })
        .await?;
    let json = result.to_canonical_json();
    if let Some(path) = golden {
        std::fs::write(path, &json).with_context(|| path.display().to_string())?;
    }
    print!("{json}");
    Ok(())
}
