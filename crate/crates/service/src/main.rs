use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use orthoplan_core::benchmark::{enumerate_suite, run_benchmark};
use orthoplan_core::config::Config;
use orthoplan_core::dental::{ArchState, MovementPlan};
use orthoplan_core::orchestrator::{FusionConfig, FusionMode};
use orthoplan_core::presets::PresetKey;
use orthoplan_core::scoring::CrowdingMetadata;
use orthoplan_service::demo::Demos;
use orthoplan_service::pipeline::Pipeline;
use orthoplan_service::store::Store;
use orthoplan_service::{router, AppState};

#[derive(Parser)]
#[command(name = "orthoplan", version, about = "Score and stage clear-aligner treatment plans")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = "ORTHOPLAN_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score a plan against an arch and print the score as JSON.
    Score {
        plan: PathBuf,
        arch: PathBuf,
        #[arg(long)]
        crowding: Option<PathBuf>,
    },
    /// Write the staged frame sequence of a plan.
    Simulate {
        plan: PathBuf,
        arch: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a preset case as a patient record.
    Demo {
        preset: PresetKey,
        /// Also write the frame sequence here.
        #[arg(long)]
        frames: Option<PathBuf>,
    },
    /// Run the synthetic benchmark and print the report.
    Benchmark {
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, value_delimiter = ',', default_value = "parallel,sequential,agent1,agent2")]
        modes: Vec<FusionMode>,
        /// Report file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-scenario rows as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Worker threads; overrides the config, 0 uses one per core.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Print the effective configuration as TOML.
    Config,
    /// Serve the REST API.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
}

type CliResult<T> = Result<T, Box<dyn std::error::Error>>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        // output piped into something like `head`
        Err(e) if e.downcast_ref::<io::Error>().is_some_and(|e| e.kind() == io::ErrorKind::BrokenPipe) => {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("orthoplan: {e}");
            ExitCode::FAILURE
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?)
}

fn output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| format!("{}: {e}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json(out: &mut dyn Write, value: &impl serde::Serialize) -> CliResult<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    let config = Config::resolve(cli.config.as_deref())?;
    match cli.command {
        Command::Score { plan, arch, crowding } => {
            let plan: MovementPlan = read_json(&plan)?;
            let arch: ArchState = read_json(&arch)?;
            let crowding: Option<CrowdingMetadata> = crowding.as_deref().map(read_json).transpose()?;
            let score = Pipeline::new(&config)?.engine.score(&plan, &arch, crowding.as_ref())?;
            write_json(&mut output(None)?, &score)
        }
        Command::Simulate { plan, arch, out } => {
            let plan: MovementPlan = read_json(&plan)?;
            let arch: ArchState = read_json(&arch)?;
            let eval = Pipeline::new(&config)?.evaluate(&arch, &plan, None)?;
            let mut w = output(out.as_deref())?;
            w.write_all(&eval.frames_json)?;
            w.write_all(b"\n")?;
            w.flush()?;
            if out.is_some() {
                eprintln!("{} aligners, {} frames", eval.summary.aligner_count, eval.summary.frame_count);
            }
            Ok(())
        }
        Command::Demo { preset, frames } => {
            let pipeline = Pipeline::new(&config)?;
            let demos = Demos::build(&pipeline, &orthoplan_service::api::now())?;
            let case = demos.get(preset).ok_or_else(|| format!("unknown preset '{preset}'"))?;
            if let Some(p) = frames {
                fs::write(&p, &case.frames_json).map_err(|e| format!("{}: {e}", p.display()))?;
            }
            write_json(&mut output(None)?, &case.record)
        }
        Command::Benchmark { n, seed, modes, out, csv, threads } => {
            let pipeline = Pipeline::new(&config)?;
            let mut bench = config.benchmark;
            if let Some(t) = threads {
                bench.threads = t;
            }
            let modes: Vec<FusionConfig> =
                modes.into_iter().map(|mode| FusionConfig { mode, ..config.orchestrator }).collect();
            let suite = enumerate_suite(n, seed)?;
            let run = run_benchmark(&suite, &modes, &pipeline.engine, &bench)?;
            if let Some(p) = csv {
                let f = File::create(&p).map_err(|e| format!("{}: {e}", p.display()))?;
                run.write_csv(BufWriter::new(f))?;
            }
            write_json(&mut output(out.as_deref())?, &run.report)
        }
        Command::Config => {
            let mut out = output(None)?;
            out.write_all(config.to_toml()?.as_bytes())?;
            out.flush()?;
            Ok(())
        }
        Command::Serve { port, bind, data_dir } => {
            let mut config = config;
            if let Some(p) = port {
                config.service.port = p;
            }
            if let Some(b) = bind {
                config.service.bind = b;
            }
            if let Some(d) = data_dir {
                config.service.data_dir = d;
            }
            serve(config)
        }
    }
}

fn serve(config: Config) -> CliResult<()> {
    let addr = (config.service.bind.clone(), config.service.port);
    let store = Store::open(&config.service.data_dir)?;
    let state = AppState::new(config, store)?;
    let app = router(state);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind((addr.0.as_str(), addr.1)).await?;
        eprintln!("orthoplan listening on http://{}", listener.local_addr()?);
        axum::serve(listener, app).with_graceful_shutdown(shutdown()).await
    })?;
    Ok(())
}

async fn shutdown() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
    eprintln!("orthoplan shutting down");
}
