//! Deployable service around `medchat-core`: case uploads, report
//! generation, follow-up chat, PDF export, and the offline self-check.

pub mod api;
pub mod cases;
pub mod config;
pub mod pdf;
pub mod selfcheck;

use std::sync::Arc;

pub use api::{router, AppState};
pub use config::ServiceConfig;

/// Binds and serves until `shutdown` resolves.
pub async fn serve(
    config: &ServiceConfig,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> anyhow::Result<()> {
    let state = Arc::new(AppState::from_config(config)?);
    let listener = tokio::net::TcpListener::bind(config.listen_addr()?).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await?;
    Ok(())
}
