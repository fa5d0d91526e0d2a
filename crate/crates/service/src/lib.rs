//! HTTP service over the sampling store.

pub mod api;
pub mod config;
pub mod error;
pub mod state;
pub mod watcher;

use std::path::Path;

use sampling_core::store::{Store, StoreError};
use thiserror::Error;
use tower_http::services::ServeDir;

pub use api::router;
pub use config::{ConfigError, ServiceConfig};
pub use state::AppState;

#[derive(Debug, Error)]
pub enum ServeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: std::net::SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error("server failed: {0}")]
    Io(#[from] std::io::Error),
}

impl ServeError {
    /// 2 for corruption found at startup, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            ServeError::Store(e) if e.is_corruption() => 2,
            _ => 1,
        }
    }
}

/// Router with the API and, when configured, the static web client.
pub fn app(state: AppState, static_dir: Option<&Path>) -> axum::Router {
    let router = api::router(state);
    match static_dir {
        Some(dir) => router.fallback_service(ServeDir::new(dir)),
        None => router,
    }
}

/// Opens the store, starts the drop-directory watcher and serves until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> Result<(), ServeError> {
    let model = config.distance_model()?;
    let store = Store::open(&config.data_dir)?;
    let state = AppState::new(store, model);
    let watcher = config
        .drop_dir
        .clone()
        .map(|dir| watcher::spawn_watcher(state.clone(), dir, config.poll_interval()));
    let listener = tokio::net::TcpListener::bind(config.listen)
        .await
        .map_err(|source| ServeError::Bind { addr: config.listen, source })?;
    tracing::info!(addr = %config.listen, data_dir = %config.data_dir.display(), "listening");
    axum::serve(listener, app(state, config.static_dir.as_deref()))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    if let Some(w) = watcher {
        w.abort();
    }
    Ok(())
}
