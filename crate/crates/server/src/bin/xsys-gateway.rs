//! Gateway server and operator tools.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use xsys_core::contracts::ReplayReport;
use xsys_gateway::{replayable, verify_chain, GatewayRequest};
use xsys_server::{init_logging, serve, ServerConfig};

#[derive(Parser)]
#[command(name = "xsys-gateway", version, about = "Governance gateway for the xsys services")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serve the HTTP API. Prints `listening on <addr>` once bound.
    Serve {
        #[arg(long, env = "XSYS_CONFIG")]
        config: PathBuf,
        /// Overrides `listen` from the config, e.g. 127.0.0.1:0.
        #[arg(long, env = "XSYS_LISTEN")]
        listen: Option<String>,
    },
    /// Audit log tools.
    Audit {
        #[command(subcommand)]
        command: AuditCommand,
    },
    /// Replays every replayable audit record through the gateway.
    /// Each replay is itself audited under the given token's principal.
    ReplayAll {
        #[arg(long, env = "XSYS_CONFIG")]
        config: PathBuf,
        #[arg(long, env = "XSYS_TOKEN")]
        token: String,
    },
}

#[derive(Subcommand)]
enum AuditCommand {
    /// Checks the hash chain. Exit code 1 if it is broken.
    Verify {
        #[arg(long, env = "XSYS_CONFIG", conflicts_with = "log")]
        config: Option<PathBuf>,
        /// Path of an `audit.jsonl` file.
        #[arg(long)]
        log: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    init_logging();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Box<dyn std::error::Error>> {
    match cli.command {
        Command::Serve { config, listen } => {
            let cfg = ServerConfig::from_file(&config)?;
            let gateway = Arc::new(cfg.open_gateway()?);
            let addr = listen.unwrap_or(cfg.listen.clone());
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(&addr).await?;
                let local = listener.local_addr()?;
                println!("listening on {local}");
                std::io::stdout().flush()?;
                tracing::info!("serving store {} on {local}", cfg.store_dir.display());
                serve(listener, gateway).await
            })?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Audit {
            command: AuditCommand::Verify { config, log },
        } => {
            let path = match (config, log) {
                (_, Some(log)) => log,
                (Some(c), None) => ServerConfig::from_file(&c)?.state_dir.join("audit").join(xsys_gateway::audit::LOG_FILE),
                (None, None) => return Err("pass --config or --log".into()),
            };
            let status = verify_chain(&path)?;
            println!("{}", serde_json::to_string(&status)?);
            Ok(if status.is_valid() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::ReplayAll { config, token } => {
            let gw = ServerConfig::from_file(&config)?.open_gateway()?;
            let last = gw.audit().len();
            let (mut replayed, mut matched, mut failed) = (0u64, 0u64, 0u64);
            for id in 1..=last {
                let record = gw.audit().get(id)?;
                if replayable(&record).is_err() {
                    continue;
                }
                replayed += 1;
                let r = gw.route(&GatewayRequest::new("POST", &format!("/api/audit/{id}/replay")).bearer(&token));
                match serde_json::from_slice::<ReplayReport>(&r.body) {
                    Ok(report) if r.is_ok() => {
                        matched += u64::from(report.matched);
                        println!("{}", serde_json::to_string(&report)?);
                    }
                    _ => {
                        failed += 1;
                        println!("{}", String::from_utf8_lossy(&r.body));
                    }
                }
            }
            println!(
                "{}",
                serde_json::json!({ "records": last, "replayed": replayed, "matched": matched, "failed": failed })
            );
            Ok(if matched == replayed { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
    }
}
