use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use axum::http::StatusCode;
use chrono::Utc;
use intent_router::dispatch::{ActionRequest, DispatchError, Emitter, HttpSinkConfig, SinkConfig};
use tokio::sync::oneshot;
use uuid::Uuid;

/// Answers each request with the next status in `statuses` (the last one
/// repeats) and records the bodies it saw.
struct Orchestrator {
    url: String,
    bodies: Arc<Mutex<Vec<String>>>,
    stop: Option<oneshot::Sender<()>>,
    worker: Option<JoinHandle<()>>,
}

impl Orchestrator {
    fn start(statuses: Vec<u16>) -> Self {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        listener.set_nonblocking(true).unwrap();
        let port = listener.local_addr().unwrap().port();
        let bodies = Arc::new(Mutex::new(Vec::new()));
        let app = {
            let bodies = Arc::clone(&bodies);
            axum::Router::new().fallback(move |body: String| {
                let n = {
                    let mut seen = bodies.lock().unwrap();
                    seen.push(body);
                    seen.len()
                };
                let status = statuses[(n - 1).min(statuses.len() - 1)];
                async move { (StatusCode::from_u16(status).unwrap(), "{}") }
            })
        };
        let (tx, rx) = oneshot::channel::<()>();
        let worker = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_current_thread()
                .enable_all()
                .build()
                .unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener).unwrap();
                tokio::select! {
                    _ = axum::serve(listener, app) => {}
                    _ = rx => {}
                }
            });
        });
        Self {
            url: format!("http://127.0.0.1:{port}/actions"),
            bodies,
            stop: Some(tx),
            worker: Some(worker),
        }
    }

    fn hits(&self) -> usize {
        self.bodies.lock().unwrap().len()
    }
}

impl Drop for Orchestrator {
    fn drop(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

fn request() -> ActionRequest {
    ActionRequest {
        intent_type: "Modification Intent".into(),
        action: "modify".into(),
        original_text: "Scale out the UPF in Ottawa.".into(),
        decision_score: 0.71,
        issued_at: Utc::now(),
        correlation_id: Uuid::new_v4(),
    }
}

fn emitter(url: &str, attempts: u32) -> Emitter {
    let mut http = HttpSinkConfig::new(url);
    http.max_attempts = attempts;
    http.backoff_ms = 1;
    http.timeout_ms = 2_000;
    Emitter::new(&SinkConfig::Http(http)).unwrap()
}

#[test]
fn delivered_body_is_the_request_json() {
    let orch = Orchestrator::start(vec![200]);
    let req = request();
    let receipt = emitter(&orch.url, 3).emit(&req).unwrap();
    assert_eq!(receipt.attempts, 1);
    assert_eq!(receipt.status, Some(200));
    assert_eq!(receipt.correlation_id, req.correlation_id);
    let body = orch.bodies.lock().unwrap()[0].clone();
    let echoed: ActionRequest = serde_json::from_str(&body).unwrap();
    assert_eq!(echoed, req);
}

#[test]
fn persistent_503_exhausts_retries() {
    let orch = Orchestrator::start(vec![503]);
    match emitter(&orch.url, 3).emit(&request()).unwrap_err() {
        DispatchError::SinkUnavailable { attempts, status, .. } => {
            assert_eq!(attempts, 3);
            assert_eq!(status, Some(503));
        }
        other => panic!("expected SinkUnavailable, got {other:?}"),
    }
    assert_eq!(orch.hits(), 3);
}

#[test]
fn transient_failure_then_success() {
    let orch = Orchestrator::start(vec![503, 429, 202]);
    let receipt = emitter(&orch.url, 3).emit(&request()).unwrap();
    assert_eq!(receipt.attempts, 3);
    assert_eq!(receipt.status, Some(202));
}

#[test]
fn client_error_is_not_retried() {
    let orch = Orchestrator::start(vec![422]);
    let err = emitter(&orch.url, 3).emit(&request()).unwrap_err();
    assert!(matches!(err, DispatchError::SinkRejected { status: 422 }), "{err:?}");
    assert_eq!(orch.hits(), 1);
}

#[test]
fn unreachable_sink_reports_attempts() {
    let url = Orchestrator::start(vec![200]).url.clone();
    let err = emitter(&url, 2).emit(&request()).unwrap_err();
    assert!(
        matches!(
            err,
            DispatchError::SinkUnavailable {
                attempts: 2,
                status: None,
                ..
            }
        ),
        "{err:?}"
    );
}
