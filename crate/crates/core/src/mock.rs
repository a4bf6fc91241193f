//! In-process HTTP test doubles for the OpenAI-compatible embeddings and chat
//! protocols.
//!
//! Both servers bind `127.0.0.1:0`, run on a background runtime thread, and
//! shut down when dropped.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use axum::http::{Method, StatusCode, Uri};
use axum::response::IntoResponse;
use axum::Json;
use serde_json::{json, Value};
use tokio::sync::oneshot;

use crate::baseline::HallucinationSchedule;
use crate::embedding::reference_encode;

type Handler = Arc<dyn Fn(&Value) -> (u16, Value) + Send + Sync>;

struct MockServer {
    url: String,
    requests: Arc<AtomicUsize>,
    shutdown: Option<oneshot::Sender<()>>,
    worker: Option<JoinHandle<()>>,
}

impl MockServer {
    fn start(path: &'static str, delay: Duration, handler: Handler) -> std::io::Result<Self> {
        let listener = std::net::TcpListener::bind("127.0.0.1:0")?;
        listener.set_nonblocking(true)?;
        let port = listener.local_addr()?.port();
        let runtime = tokio::runtime::Builder::new_current_thread().enable_all().build()?;
        let requests = Arc::new(AtomicUsize::new(0));
        let (shutdown, stop) = oneshot::channel::<()>();

        let app = {
            let requests = Arc::clone(&requests);
            axum::Router::new().fallback(move |method: Method, uri: Uri, body: String| {
                let handler = Arc::clone(&handler);
                let requests = Arc::clone(&requests);
                async move { serve(method, uri, body, path, delay, handler, requests).await }
            })
        };
        let worker = std::thread::spawn(move || {
            runtime.block_on(async move {
                let Ok(listener) = tokio::net::TcpListener::from_std(listener) else {
                    return;
                };
                tokio::select! {
                    _ = axum::serve(listener, app) => {}
                    _ = stop => {}
                }
            });
        });

        Ok(Self {
            url: format!("http://127.0.0.1:{port}"),
            requests,
            shutdown: Some(shutdown),
            worker: Some(worker),
        })
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
    }
}

async fn serve(
    method: Method,
    uri: Uri,
    body: String,
    path: &str,
    delay: Duration,
    handler: Handler,
    requests: Arc<AtomicUsize>,
) -> impl IntoResponse {
    let reply = |status: u16, body: Value| (StatusCode::from_u16(status).unwrap_or(StatusCode::OK), Json(body));
    if method != Method::POST || uri.path() != path {
        return reply(404, json!({"error": "not found"}));
    }
    let Ok(parsed) = serde_json::from_str::<Value>(&body) else {
        return reply(400, json!({"error": "invalid json"}));
    };
    requests.fetch_add(1, Ordering::SeqCst);
    if !delay.is_zero() {
        tokio::time::sleep(delay).await;
    }
    let (status, out) = handler(&parsed);
    reply(status, out)
}

/// How the mock embeddings endpoint misbehaves, if at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingFault {
    None,
    /// Returns one embedding fewer than requested.
    DropLast,
    /// Returns the second embedding with a different dimension.
    MixedDimensions,
    /// Responds with the given HTTP status and no data.
    Status(u16),
    /// Responds with a body lacking the `data` field.
    Malformed,
}

/// Embeddings endpoint backed by the reference encoder. Vectors are scaled by
/// `scale` before being returned so clients must normalize locally.
pub struct MockEmbeddingServer {
    inner: MockServer,
}

impl MockEmbeddingServer {
    pub fn start(dim: usize, scale: f64, fault: EmbeddingFault) -> std::io::Result<Self> {
        let handler: Handler = Arc::new(move |body: &Value| {
            match fault {
                EmbeddingFault::Status(code) => return (code, json!({"error": "injected"})),
                EmbeddingFault::Malformed => return (200, json!({"object": "list"})),
                _ => {}
            }
            let inputs: Vec<String> = body["input"]
                .as_array()
                .map(|a| a.iter().filter_map(|v| v.as_str().map(String::from)).collect())
                .unwrap_or_default();
            let mut data = Vec::new();
            for (i, text) in inputs.iter().enumerate() {
                let Ok(v) = reference_encode(text, dim) else {
                    return (400, json!({"error": format!("input {i} has no features")}));
                };
                let mut values: Vec<f64> = v.values().iter().map(|x| x * scale).collect();
                if fault == EmbeddingFault::MixedDimensions && i == 1 {
                    values.push(scale);
                }
                data.push(json!({"object": "embedding", "index": i, "embedding": values}));
            }
            if fault == EmbeddingFault::DropLast {
                data.pop();
            }
            (200, json!({"object": "list", "data": data, "model": body["model"]}))
        });
        Ok(Self {
            inner: MockServer::start("/v1/embeddings", Duration::ZERO, handler)?,
        })
    }

    pub fn url(&self) -> &str {
        &self.inner.url
    }

    pub fn request_count(&self) -> usize {
        self.inner.requests.load(Ordering::SeqCst)
    }
}

/// Chat reply function: `(system message, user message) -> answer`.
pub type Responder = Arc<dyn Fn(&str, &str) -> String + Send + Sync>;

/// Chat-completions endpoint with a fixed service delay. With a hallucination
/// schedule, the n-th request (server-side counter, from 0) selected by the
/// schedule is answered with a near-miss category name instead.
pub struct MockChatServer {
    inner: MockServer,
}

impl MockChatServer {
    pub fn start(
        delay: Duration,
        responder: Responder,
        schedule: Option<HallucinationSchedule>,
    ) -> std::io::Result<Self> {
        let counter = Arc::new(AtomicUsize::new(0));
        let handler: Handler = Arc::new(move |body: &Value| {
            let messages = body["messages"].as_array().cloned().unwrap_or_default();
            let content_of = |role: &str| {
                messages
                    .iter()
                    .filter(|m| m["role"] == role)
                    .filter_map(|m| m["content"].as_str())
                    .collect::<Vec<_>>()
                    .join("\n")
            };
            let (system, user) = (content_of("system"), content_of("user"));
            let n = counter.fetch_add(1, Ordering::SeqCst);
            let answer = match &schedule {
                Some(s) if s.corrupts(n) => s.near_miss(n).to_string(),
                _ => responder(&system, &user),
            };
            (
                200,
                json!({
                    "object": "chat.completion",
                    "model": body["model"],
                    "choices": [{
                        "index": 0,
                        "message": {"role": "assistant", "content": answer},
                        "finish_reason": "stop"
                    }]
                }),
            )
        });
        Ok(Self {
            inner: MockServer::start("/v1/chat/completions", delay, handler)?,
        })
    }

    /// Answers from a text → label key, falling back to `fallback`.
    pub fn with_answer_key(
        delay: Duration,
        key: std::collections::HashMap<String, String>,
        fallback: impl Into<String>,
        schedule: Option<HallucinationSchedule>,
    ) -> std::io::Result<Self> {
        let fallback = fallback.into();
        let responder: Responder =
            Arc::new(move |_system, user| key.get(user.trim()).cloned().unwrap_or_else(|| fallback.clone()));
        Self::start(delay, responder, schedule)
    }

    pub fn url(&self) -> &str {
        &self.inner.url
    }

    pub fn request_count(&self) -> usize {
        self.inner.requests.load(Ordering::SeqCst)
    }
}
