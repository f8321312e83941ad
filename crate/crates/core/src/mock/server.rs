use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::Router;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use super::{AnomalyProfile, MockError, MockLedger, MockModel};

/// Path served by the mock.
pub const COMPLETIONS_PATH: &str = "/v1/chat/completions";

/// A running mock chat-completions server.
#[derive(Debug)]
pub struct MockServer {
    addr: SocketAddr,
    model: Arc<MockModel>,
    shutdown: Option<oneshot::Sender<()>>,
    task: Option<JoinHandle<std::io::Result<()>>>,
}

impl MockServer {
    /// Binds `bind` (port 0 picks a free port) and starts serving.
    pub async fn start(profile: AnomalyProfile, bind: SocketAddr) -> Result<Self, MockError> {
        profile.validate()?;
        let delay = Duration::from_millis(profile.delay_ms);
        let model = Arc::new(MockModel::new(profile));
        let listener = tokio::net::TcpListener::bind(bind)
            .await
            .map_err(|e| MockError::Bind(bind, e))?;
        let addr = listener.local_addr().map_err(|e| MockError::Bind(bind, e))?;
        let app = Router::new()
            .route(COMPLETIONS_PATH, post(complete))
            .route("/chat/completions", post(complete))
            .with_state((model.clone(), delay));
        let (tx, rx) = oneshot::channel::<()>();
        let task = tokio::spawn(async move {
            axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await
        });
        Ok(Self {
            addr,
            model,
            shutdown: Some(tx),
            task: Some(task),
        })
    }

    pub async fn start_local(profile: AnomalyProfile) -> Result<Self, MockError> {
        Self::start(profile, SocketAddr::from(([127, 0, 0, 1], 0))).await
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn endpoint(&self) -> String {
        format!("http://{}{}", self.addr, COMPLETIONS_PATH)
    }

    pub fn ledger(&self) -> MockLedger {
        self.model.ledger()
    }

    pub fn model(&self) -> &MockModel {
        &self.model
    }

    /// Stops accepting connections and waits for in-flight requests.
    pub async fn shutdown(mut self) -> MockLedger {
        self.stop().await;
        self.model.ledger()
    }

    async fn stop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(task) = self.task.take() {
            let _ = task.await;
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}

async fn complete(
    State((model, delay)): State<(Arc<MockModel>, Duration)>,
    body: Bytes,
) -> Response {
    if !delay.is_zero() {
        tokio::time::sleep(delay).await;
    }
    let reply = model.respond(&body);
    let status = StatusCode::from_u16(reply.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    (status, [(header::CONTENT_TYPE, "application/json")], reply.body).into_response()
}
