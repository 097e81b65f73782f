use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use chromalens_bench::ServiceExecutor;
use chromalens_core::domain::DEFAULT_MAX_IMAGE_BYTES;
use chromalens_core::harness::{
    load_scenarios, run_suite, write_fixtures, write_shipped_suite, CaseExecutor, PipelineExecutor,
};
use chromalens_core::{
    make_user_profile, BackendConfig, BackendKind, CvdType, LlmGateway, MockFault, Pipeline,
    PromptEngine, TemplateSet,
};
use clap::{Parser, Subcommand};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "cl-bench", about = "Scenario suite for the color vision assistance pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every case in a manifest and score it.
    Run {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "mock")]
        backend: BackendKind,
        #[arg(long, default_value_t = 4)]
        parallel: usize,
        #[arg(long)]
        report_dir: Option<PathBuf>,
        /// Mock fixtures; defaults to CL_FIXTURE_DIR, then `fixtures/` next
        /// to the manifest.
        #[arg(long)]
        fixture_dir: Option<PathBuf>,
        #[arg(long, default_value = "protanomaly")]
        cvd_type: CvdType,
        #[arg(long)]
        template_dir: Option<PathBuf>,
        /// Mock fault injection: none, malformed-first or malformed-always.
        #[arg(long, default_value = "none")]
        fault: MockFault,
        /// Send cases to a running service instead of an in-process pipeline.
        #[arg(long)]
        service: Option<String>,
    },
    /// Regenerate mock fixtures from the rule-based oracle.
    Oracle {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the built-in suite (manifest, images, fixtures) to a directory.
    Init {
        #[arg(long)]
        out: PathBuf,
    },
}

fn backend_config(
    kind: BackendKind,
    manifest: &Path,
    fixture_dir: Option<PathBuf>,
    fault: MockFault,
) -> anyhow::Result<BackendConfig> {
    let mut config = match kind {
        BackendKind::Http => {
            let mut c = BackendConfig::from_lookup(|k| match k {
                "CL_BACKEND" => Some("http".into()),
                other => std::env::var(other).ok(),
            })?;
            c.kind = BackendKind::Http;
            c
        }
        BackendKind::Mock => {
            let dir = fixture_dir
                .or_else(|| std::env::var_os("CL_FIXTURE_DIR").map(PathBuf::from))
                .unwrap_or_else(|| {
                    manifest
                        .parent()
                        .unwrap_or(Path::new("."))
                        .join("fixtures")
                });
            BackendConfig::mock(dir)
        }
    };
    config.fault = fault;
    config.validate()?;
    Ok(config)
}

async fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run {
            manifest,
            backend,
            parallel,
            report_dir,
            fixture_dir,
            cvd_type,
            template_dir,
            fault,
            service,
        } => {
            let cases = load_scenarios(&manifest)?;
            let executor: Box<dyn CaseExecutor> = match service {
                Some(url) => Box::new(ServiceExecutor::connect(&url, cvd_type).await?),
                None => {
                    let templates = match template_dir {
                        Some(dir) => TemplateSet::load(&dir)?,
                        None => TemplateSet::builtin(),
                    };
                    let config = backend_config(backend, &manifest, fixture_dir, fault)?;
                    Box::new(PipelineExecutor {
                        pipeline: Pipeline::new(PromptEngine::new(templates), LlmGateway::new(config)?),
                        profile: make_user_profile("cl-bench", cvd_type, None)?,
                        max_image_bytes: DEFAULT_MAX_IMAGE_BYTES,
                    })
                }
            };
            let report = run_suite(&cases, executor.as_ref(), &backend.to_string(), parallel).await?;
            for case in &report.cases {
                let detail = match (&case.response, &case.error) {
                    (Some(r), _) => r.content.rendered.clone(),
                    (None, Some(e)) => format!("error {}: {}", e.kind, e.message),
                    _ => String::new(),
                };
                println!(
                    "{} {:<28} {}",
                    if case.passed { "PASS" } else { "FAIL" },
                    case.case_id,
                    detail
                );
            }
            println!(
                "accuracy {}/{} ({:.1}%) in {} ms",
                report.passed,
                report.total,
                report.accuracy * 100.0,
                report.wall_time_ms
            );
            if let Some(dir) = report_dir {
                let (json, md) = report.write(&dir)?;
                println!("reports: {} {}", json.display(), md.display());
            }
            Ok(if report.all_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Oracle { manifest, out } => {
            let cases = load_scenarios(&manifest)?;
            let paths = write_fixtures(&cases, &out)
                .with_context(|| format!("writing fixtures to {}", out.display()))?;
            println!("wrote {} fixtures to {}", paths.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Init { out } => {
            write_shipped_suite(&out).map_err(|e| anyhow::anyhow!(e))?;
            println!("wrote shipped suite to {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("error")))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()).await {
        Ok(code) => code,
        Err(e) => {
            eprintln!("cl-bench: {e:#}");
            ExitCode::from(2)
        }
    }
}
