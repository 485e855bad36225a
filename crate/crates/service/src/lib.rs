//! Local HTTP service over a workspace directory of lit-tag databases.
//!
//! Every core operation is reachable under `/api`; mutations are serialized
//! per database and each one is saved as a new timestamped CSV.

pub mod api;
mod error;
pub mod workspace;

use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::sync::Arc;

pub use api::router;
pub use error::{Result, ServiceError};
pub use workspace::{Clock, FaultPoint, Faults, SystemClock, Workspace, WorkspaceConfig};

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub workspace: PathBuf,
    pub bind: IpAddr,
    pub port: u16,
    /// Required to listen on anything but a loopback address.
    pub allow_remote: bool,
}

impl Default for ServeOptions {
    fn default() -> Self {
        ServeOptions {
            workspace: PathBuf::from("."),
            bind: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port: 8787,
            allow_remote: false,
        }
    }
}

/// Binds the listener and serves until Ctrl-C. `on_ready` receives the bound
/// address (useful with port 0).
pub async fn serve(options: ServeOptions, on_ready: impl FnOnce(SocketAddr)) -> Result<()> {
    if !options.bind.is_loopback() && !options.allow_remote {
        return Err(ServiceError::BadRequest(format!(
            "refusing to bind non-loopback address {} without --allow-remote",
            options.bind
        )));
    }
    let workspace = Arc::new(Workspace::open(&options.workspace, WorkspaceConfig::default())?);
    let listener = tokio::net::TcpListener::bind((options.bind, options.port))
        .await
        .map_err(|e| ServiceError::storage("bind", e))?;
    let addr = listener.local_addr().map_err(|e| ServiceError::storage("bind", e))?;
    on_ready(addr);
    axum::serve(listener, router(workspace))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| ServiceError::storage("serve", e))
}
