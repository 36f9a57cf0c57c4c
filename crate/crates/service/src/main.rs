use std::net::SocketAddr;
use std::path::PathBuf;

use clap::Parser;
use fairlicit_service::{http, Service};

#[derive(Debug, Parser)]
#[command(name = "fairlicit-server", about = "Serve the fairlicit JSON API")]
struct Args {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Root directory of the file store.
    #[arg(long, env = "FAIRLICIT_STORE", default_value = "fairlicit-store")]
    store_dir: PathBuf,
    /// Tolerance used when a fairness query gives none.
    #[arg(long, default_value_t = fairlicit_service::api::EPSILON_DEFAULT)]
    epsilon_default: f64,
    #[arg(long, default_value = "127.0.0.1")]
    host: std::net::IpAddr,
}

#[tokio::main]
async fn main() {
    let args = Args::parse();
    let service = match Service::open(&args.store_dir, args.epsilon_default) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{}: {}", e.name, e.message);
            std::process::exit(1);
        }
    };
    let addr = SocketAddr::new(args.host, args.port);
    let listener = match tokio::net::TcpListener::bind(addr).await {
        Ok(l) => l,
        Err(e) => {
            eprintln!("cannot bind {addr}: {e}");
            std::process::exit(1);
        }
    };
    let bound = listener.local_addr().unwrap_or(addr);
    eprintln!("listening on http://{bound} (store {})", args.store_dir.display());
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    if let Err(e) = axum::serve(listener, http::router(service))
        .with_graceful_shutdown(shutdown)
        .await
    {
        eprintln!("server error: {e}");
        std::process::exit(1);
    }
}
