use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use comanip::harness::{self, Scenario};
use comanip::metrics::compute_metrics;
use comanip::scenariogen::{gen_cube, gen_target, TargetSpec};
use comanip::session::{read_jsonl, write_jsonl, SessionEvent};
use comanip::{StrategyConfig, WireframeModel};

mod serve;

#[derive(Parser)]
#[command(name = "comanip", version, about = "Two-user collaborative wireframe editing server and tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the WebSocket session server.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "additive")]
        strategy: StrategyConfig,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Run a scenario on the virtual clock and write its event log.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-execute an event log and verify it.
    Replay {
        #[arg(long)]
        log: PathBuf,
    },
    /// Send random protocol traffic and check safety properties.
    Fuzz {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        messages: usize,
        #[arg(long)]
        strategy: StrategyConfig,
    },
    /// Compare the engine against the brute-force oracle on a scenario.
    Oracle {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
    },
    /// Generate a cube and a transformed target.
    Gen {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        faces: usize,
        #[arg(long, default_value_t = 3)]
        ops: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        target: PathBuf,
    },
    /// Collaboration metrics over one log per model.
    Metrics {
        #[arg(long = "log", required = true)]
        logs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_log(path: &Path) -> Result<Vec<SessionEvent>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_jsonl(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Serve { port, strategy, model, target, log, host } => {
            let model = match model {
                Some(p) => WireframeModel::load(&p).with_context(|| format!("loading {}", p.display()))?,
                None => gen_cube(),
            };
            let target = WireframeModel::load(&target).with_context(|| format!("loading {}", target.display()))?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(serve::serve(serve::ServeConfig { host, port, strategy, model, target, log }))?;
        }
        Command::Simulate { scenario, out } => {
            let sc = Scenario::load(&scenario)?;
            let r = harness::run(&sc)?;
            let mut w = BufWriter::new(File::create(&out).with_context(|| format!("creating {}", out.display()))?);
            write_jsonl(&mut w, &r.log)?;
            w.flush()?;
            println!("events {} ticks {} denies {} hash {}", r.log.len(), r.tick_count, r.deny_count, r.state_hash());
        }
        Command::Replay { log } => {
            let events = load_log(&log)?;
            let out = harness::replay(&events)?;
            println!("ok events {} tick {} hash {}", out.events, out.final_snapshot.tick, out.final_snapshot.state_hash());
        }
        Command::Fuzz { seed, messages, strategy } => {
            let rep = harness::fuzz(seed, messages, strategy)?;
            println!(
                "strategy {} messages {} ticks {} denies {} violations {}",
                strategy.name(),
                rep.messages,
                rep.ticks,
                rep.denies,
                rep.violations.len()
            );
            for v in &rep.violations {
                println!("violation: {v}");
            }
            if !rep.violations.is_empty() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Oracle { scenario, tolerance } => {
            let sc = Scenario::load(&scenario)?;
            let engine = harness::run(&sc)?;
            let oracle = harness::oracle_from_log(&engine.log)?;
            let err = harness::max_vertex_error(&engine.final_snapshot.positions, &oracle);
            let ok = err < tolerance;
            println!("{} max_error_m {err:e}", if ok { "agree" } else { "disagree" });
            if !ok {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Gen { seed, faces, ops, out, target } => {
            let base = gen_cube();
            let t = gen_target(&base, &TargetSpec::new(seed, faces, ops))?;
            write_text(&out, &base.to_json())?;
            write_text(&target, &t.to_json())?;
        }
        Command::Metrics { logs, out } => {
            let logs = logs.iter().map(|p| load_log(p)).collect::<Result<Vec<_>>>()?;
            let report = compute_metrics(&logs)?;
            let text = serde_json::to_string_pretty(&report)?;
            match out {
                Some(p) => write_text(&p, &text)?,
                None => println!("{text}"),
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
