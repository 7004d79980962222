//! HTTP facade over the active-learning engine.
//!
//! Sessions are created against uploaded datasets, label queries are served in rank
//! order, and every mutating request is persisted before it returns.

pub mod error;
pub mod routes;
pub mod state;
pub mod store;

use std::path::{Path, PathBuf};
use std::sync::Arc;

pub use error::{ApiError, ErrorBody};
pub use routes::router;
pub use state::{AppState, QueryItem, SessionResource};

pub const DEFAULT_ADDR: &str = "127.0.0.1:8080";
pub const DEFAULT_DATA_DIR: &str = "al-data";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceConfig {
    pub addr: String,
    pub data_dir: PathBuf,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            addr: DEFAULT_ADDR.to_owned(),
            data_dir: PathBuf::from(DEFAULT_DATA_DIR),
        }
    }
}

impl ServiceConfig {
    /// Reads `AL_ADDR` and `AL_DATA_DIR`, falling back to the defaults.
    pub fn from_env() -> Self {
        let d = Self::default();
        Self {
            addr: std::env::var("AL_ADDR").unwrap_or(d.addr),
            data_dir: std::env::var_os("AL_DATA_DIR")
                .map(PathBuf::from)
                .unwrap_or(d.data_dir),
        }
    }
}

/// Binds `cfg.addr` and serves until Ctrl-C.
pub async fn serve(cfg: ServiceConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(&cfg.addr).await?;
    serve_on(listener, &cfg.data_dir).await
}

/// Serves on an already bound listener until Ctrl-C.
pub async fn serve_on(listener: tokio::net::TcpListener, data_dir: &Path) -> std::io::Result<()> {
    let state = Arc::new(AppState::open(data_dir)?);
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
