//! HTTP front end of a BACIP registry node.
//!
//! | Method | Path | Auth | Success |
//! |---|---|---|---|
//! | POST | `/issueCredential` | role `Issuer` + ISSUE | 201 |
//! | POST | `/verifyCredential` | none | 200 |
//! | POST | `/revokeCredential` | role `Issuer` + REVOKE | 200 |
//! | POST | `/consent` | role `Student` | 200 |
//! | GET | `/audit` | VERIFY or ADMIN | 200 |
//! | GET | `/anchors/{index}` | none | 200 |
//!
//! Missing or invalid tokens give 401 and insufficient roles or permission
//! bits give 403. Mutations are serialized by the node; reads use ledger
//! snapshots and never wait for a writer.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::routing::{get, post};
use axum::Router;
use chrono::{DateTime, Utc};

use bacip_core::node::RegistryNode;

pub mod api;
pub mod auth;
pub mod config;
pub mod error;

pub use api::VerifyResponse;
pub use auth::{authenticate, mint_token, AuthError, Claims, Principal, Role};
pub use config::{ConfigError, NodeConfig};
pub use error::ApiError;

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

pub struct Gateway {
    pub node: Arc<RegistryNode>,
    pub clock: Clock,
    pub seal_payloads: bool,
}

impl Gateway {
    pub fn new(node: Arc<RegistryNode>) -> Self {
        Gateway {
            node,
            clock: Arc::new(Utc::now),
            seal_payloads: true,
        }
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_sealing(mut self, seal: bool) -> Self {
        self.seal_payloads = seal;
        self
    }

    pub fn now(&self) -> DateTime<Utc> {
        (self.clock)()
    }
}

pub fn router(gateway: Arc<Gateway>) -> Router {
    Router::new()
        .route("/issueCredential", post(api::issue))
        .route("/verifyCredential", post(api::verify))
        .route("/revokeCredential", post(api::revoke))
        .route("/consent", post(api::consent))
        .route("/audit", get(api::audit))
        .route("/anchors/{index}", get(api::anchor))
        .with_state(gateway)
}

/// Serves until ctrl-c.
pub async fn serve(gateway: Arc<Gateway>, bind: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "gateway listening");
    axum::serve(listener, router(gateway))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
