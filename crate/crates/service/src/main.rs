use std::sync::Arc;

use chromalens_service::{serve, AppState, ServiceConfig};
use tracing_subscriber::EnvFilter;

#[tokio::main]
async fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();

    let config = match ServiceConfig::from_env() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("cl-server: {e}");
            std::process::exit(2);
        }
    };
    let state = match AppState::new(&config).await {
        Ok(s) => Arc::new(s),
        Err(e) => {
            eprintln!("cl-server: {e}");
            std::process::exit(2);
        }
    };
    let listener = match tokio::net::TcpListener::bind(config.listen_addr).await {
        Ok(l) => l,
        Err(e) => {
            eprintln!("cl-server: binding {}: {e}", config.listen_addr);
            std::process::exit(2);
        }
    };
    tracing::info!(
        addr = %config.listen_addr,
        backend = %state.backend_kind(),
        data_dir = %config.data_dir.display(),
        "listening"
    );
    if let Err(e) = serve(listener, state).await {
        eprintln!("cl-server: {e}");
        std::process::exit(1);
    }
}
