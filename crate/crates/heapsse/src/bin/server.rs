//! Cloud server process.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::Parser;
use heapsse::http;
use heapsse::server::{CloudServer, ServerConfig};

#[derive(Parser)]
#[command(name = "server", version, about = "Encrypted index server")]
struct Cli {
    #[arg(long, env = "HEAPSSE_LISTEN", default_value = "127.0.0.1:8730")]
    listen: SocketAddr,
    /// Directory for persisted state; omit to keep state in memory only.
    #[arg(long, env = "HEAPSSE_DATA_DIR")]
    data_dir: Option<PathBuf>,
    /// Record leakage traces and serve them at /v1/debug/leakage.
    #[arg(long, env = "HEAPSSE_TRACE")]
    trace: bool,
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let config = ServerConfig {
        data_dir: cli.data_dir,
        tracing: cli.trace,
    };
    let server = match CloudServer::open(config) {
        Ok(s) => Arc::new(s),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let listener = match tokio::net::TcpListener::bind(cli.listen).await {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: cannot bind {}: {e}", cli.listen);
            return ExitCode::from(3);
        }
    };
    println!("listening on http://{}", listener.local_addr().unwrap());
    if let Err(e) = http::serve(listener, server).await {
        eprintln!("error: {e}");
        return ExitCode::from(3);
    }
    ExitCode::SUCCESS
}
