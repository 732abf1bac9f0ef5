use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use roadchat::api;
use roadchat::engine::{Engine, EngineConfig};
use roadchat::session::{Service, TurnResult};
use roadchat::store::RunStore;
use roadchat_core::intent::{
    canonical_phrase, parse_length, GridParams, Intent, IntentKind, NetworkKind, SlotMap, SpiderParams,
    TrafficCondition,
};
use roadchat_core::llm::{HttpChat, LlmConfig};

#[derive(Parser)]
#[command(name = "roadchat", version, about = "Chat-driven traffic scenarios")]
struct Cli {
    /// Directory holding runs and sessions.
    #[arg(long, global = true, default_value = "roadchat-store")]
    store: PathBuf,
    /// Directory of `<city>.osm` extracts to use instead of downloading.
    #[arg(long, global = true)]
    fixture_dir: Option<PathBuf>,
    /// `off`, or the base URL of an OpenAI-compatible chat endpoint.
    /// Defaults to $ROADCHAT_LLM_URL when set.
    #[arg(long, global = true)]
    llm: Option<String>,
    /// Print JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Traffic {
    Light,
    Medium,
    Heavy,
}

#[derive(Clone, Copy, ValueEnum)]
enum Network {
    Grid,
    Spider,
}

#[derive(Subcommand)]
enum Command {
    /// Start a session with a new simulation.
    Generate {
        #[arg(long, conflicts_with = "network")]
        city: Option<String>,
        /// Such as `1mi`, `800m` or `2km`.
        #[arg(long, default_value = "1mi")]
        radius: String,
        #[arg(long)]
        network: Option<Network>,
        /// rows,cols,spacing for grids; arms,circles,spacing for spiders.
        #[arg(long, requires = "network")]
        size: Option<String>,
        #[arg(long, value_enum, default_value = "medium")]
        traffic: Traffic,
    },
    /// Send one chat turn to a session.
    Customize {
        #[arg(long)]
        session: String,
        text: String,
    },
    /// Compare the metrics of two runs.
    Compare { run_a: u32, run_b: u32 },
    /// Write a run's SUMO bundle to a directory.
    Export { run: u32, dir: PathBuf },
    /// List stored runs.
    Runs,
    /// Show a session's turns.
    History { session: String },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
}

fn generation_text(
    city: Option<String>,
    radius: &str,
    network: Option<Network>,
    size: Option<&str>,
    traffic: Traffic,
) -> Result<String, String> {
    let traffic = match traffic {
        Traffic::Light => TrafficCondition::Light,
        Traffic::Medium => TrafficCondition::Medium,
        Traffic::Heavy => TrafficCondition::Heavy,
    };
    let mut slots = SlotMap {
        traffic_condition: Some(traffic),
        ..SlotMap::default()
    };
    let nums = |s: &str| -> Result<(usize, usize, f64), String> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        match parts.as_slice() {
            [a, b, c] => Ok((
                a.parse().map_err(|_| format!("bad count `{a}`"))?,
                b.parse().map_err(|_| format!("bad count `{b}`"))?,
                c.parse().map_err(|_| format!("bad spacing `{c}`"))?,
            )),
            _ => Err(format!("--size wants three comma-separated numbers, got `{s}`")),
        }
    };
    let kind = match (city, network) {
        (Some(city), _) => {
            slots.city = Some(city);
            slots.radius_m = Some(parse_length(radius).ok_or_else(|| format!("cannot read radius `{radius}`"))?);
            IntentKind::GenerateRealWorld
        }
        (None, Some(Network::Grid)) => {
            slots.network_kind = Some(NetworkKind::Grid);
            if let Some(s) = size {
                let (rows, cols, spacing_m) = nums(s)?;
                slots.grid_params = Some(GridParams { rows, cols, spacing_m });
            }
            IntentKind::GenerateAbstract
        }
        (None, Some(Network::Spider)) => {
            slots.network_kind = Some(NetworkKind::Spider);
            if let Some(s) = size {
                let (arms, circles, spacing_m) = nums(s)?;
                slots.spider_params = Some(SpiderParams { arms, circles, spacing_m });
            }
            IntentKind::GenerateAbstract
        }
        (None, None) => return Err("pass --city or --network".into()),
    };
    Ok(canonical_phrase(&Intent::with(kind, slots)))
}

fn build_service(cli: &Cli) -> Result<Service, String> {
    let store = RunStore::open(&cli.store).map_err(|e| e.to_string())?;
    let engine = Engine::new(EngineConfig {
        fixture_dir: cli.fixture_dir.clone(),
        ..EngineConfig::default()
    });
    let service = Service::new(store, engine);
    let config = match cli.llm.as_deref() {
        Some("off") => None,
        Some(url) => {
            let mut cfg = LlmConfig::from_env().unwrap_or_else(|| LlmConfig::new(url));
            cfg.base_url = url.to_string();
            Some(cfg)
        }
        None => LlmConfig::from_env(),
    };
    Ok(match config {
        Some(cfg) => service.with_llm(Arc::new(HttpChat::new(cfg).map_err(|e| e.to_string())?)),
        None => service,
    })
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn print_turn(json: bool, result: &TurnResult) {
    if json {
        print_json(result);
        return;
    }
    println!("[session {}]", result.session_id);
    if let Some(run) = &result.run {
        println!("[run {}: {}]", run.run_id, run.label);
    }
    println!("{}", result.response);
}

fn execute(cli: Cli) -> Result<(), String> {
    let service = build_service(&cli)?;
    let err = |e: roadchat::session::ServiceError| e.to_string();
    match cli.command {
        Command::Generate {
            city,
            ref radius,
            network,
            ref size,
            traffic,
        } => {
            let text = generation_text(city, radius, network, size.as_deref(), traffic)?;
            let session = service.create_session().map_err(err)?;
            let result = service.handle_turn(&session.session_id, &text).map_err(err)?;
            print_turn(cli.json, &result);
            if let Some(e) = result.error {
                return Err(e);
            }
        }
        Command::Customize { ref session, ref text } => {
            let result = service.handle_turn(session, text).map_err(err)?;
            print_turn(cli.json, &result);
            if let Some(e) = result.error {
                return Err(e);
            }
        }
        Command::Compare { run_a, run_b } => {
            let report = service.compare(run_a, run_b).map_err(err)?;
            if cli.json {
                print_json(&report);
            } else {
                println!("{}", report.summary);
            }
        }
        Command::Export { run, ref dir } => {
            for path in service.export_scenario(run, dir).map_err(err)? {
                println!("{}", path.display());
            }
        }
        Command::Runs => {
            let runs = service.store.list_runs().map_err(|e| e.to_string())?;
            if cli.json {
                print_json(&runs);
            } else {
                for r in runs {
                    let parent = r.parent.map_or(String::new(), |p| format!(" (from run {p})"));
                    println!("{}\t{}\t{}{parent}", r.run_id, r.session_id, r.label);
                }
            }
        }
        Command::History { ref session } => {
            let s = service.history(session).map_err(err)?;
            if cli.json {
                print_json(&s);
            } else {
                for t in &s.turns {
                    println!("> {}\n{}\n", t.text, t.response);
                }
            }
        }
        Command::Serve { port, ref host } => {
            let addr: SocketAddr = format!("{host}:{port}").parse().map_err(|e| format!("bad address: {e}"))?;
            let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
            runtime
                .block_on(api::serve(Arc::new(service), addr))
                .map_err(|e| e.to_string())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
