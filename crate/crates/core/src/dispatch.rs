//! Static route → MANO action mapping and delivery of action requests.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::corpus::builtin_routes;
use crate::router::{Route, Router, RoutingDecision};

/// The six action verbs, one per built-in route.
pub const ACTION_VERBS: [&str; 6] = [
    "deploy",
    "modify",
    "assure",
    "report",
    "feasibility_check",
    "schedule_notification",
];

#[derive(Debug, Error)]
pub enum DispatchError {
    #[error("route {0} has no registered action")]
    UnmappedRoute(String),
    #[error("unknown action verb {verb} for route {route}")]
    UnknownVerb { route: String, verb: String },
    #[error("action {verb} is mapped from more than one route")]
    DuplicateVerb { verb: String },
    #[error("sink unavailable after {attempts} attempt(s): {message}")]
    SinkUnavailable {
        attempts: u32,
        status: Option<u16>,
        message: String,
    },
    #[error("sink rejected request with HTTP {status}")]
    SinkRejected { status: u16 },
    #[error("cannot serialize action request: {0}")]
    SerializationError(String),
}

pub type Result<T> = std::result::Result<T, DispatchError>;

/// Structured request for the downstream orchestrator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRequest {
    pub intent_type: String,
    pub action: String,
    pub original_text: String,
    pub decision_score: f64,
    pub issued_at: DateTime<Utc>,
    pub correlation_id: Uuid,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum DispatchOutcome {
    Action(ActionRequest),
    /// Fallback decision; carries the best score for auditing.
    NoAction {
        score: f64,
    },
}

/// Route name → action verb, a bijection onto distinct known verbs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionRegistry(BTreeMap<String, String>);

impl ActionRegistry {
    pub fn new(map: BTreeMap<String, String>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for (route, verb) in &map {
            if !ACTION_VERBS.contains(&verb.as_str()) {
                return Err(DispatchError::UnknownVerb {
                    route: route.clone(),
                    verb: verb.clone(),
                });
            }
            if !seen.insert(verb.as_str()) {
                return Err(DispatchError::DuplicateVerb { verb: verb.clone() });
            }
        }
        Ok(Self(map))
    }

    /// Registry taken from each route's configured action.
    pub fn from_routes(routes: &[Route]) -> Result<Self> {
        Self::new(routes.iter().map(|r| (r.name.clone(), r.action.clone())).collect())
    }

    pub fn builtin() -> Self {
        Self::from_routes(&builtin_routes()).expect("built-in routes map onto distinct verbs")
    }

    pub fn action_for(&self, route: &str) -> Option<&str> {
        self.0.get(route).map(String::as_str)
    }

    /// Fails on the first route of `router` missing from the registry.
    pub fn check_covers(&self, router: &Router) -> Result<()> {
        match router.routes().iter().find(|r| !self.0.contains_key(&r.name)) {
            Some(r) => Err(DispatchError::UnmappedRoute(r.name.clone())),
            None => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Turns a routing decision for `original_text` into an action request.
pub fn dispatch(decision: &RoutingDecision, original_text: &str, registry: &ActionRegistry) -> Result<DispatchOutcome> {
    let Some(route) = decision.route_name.as_deref() else {
        return Ok(DispatchOutcome::NoAction { score: decision.score });
    };
    let action = registry
        .action_for(route)
        .ok_or_else(|| DispatchError::UnmappedRoute(route.to_string()))?;
    Ok(DispatchOutcome::Action(ActionRequest {
        intent_type: route.to_string(),
        action: action.to_string(),
        original_text: original_text.to_string(),
        decision_score: decision.score,
        issued_at: Utc::now(),
        correlation_id: Uuid::new_v4(),
    }))
}

/// Single-line JSON encoding of a request.
pub fn to_json_line(request: &ActionRequest) -> Result<String> {
    if !request.decision_score.is_finite() {
        return Err(DispatchError::SerializationError("decision_score is not finite".into()));
    }
    serde_json::to_string(request).map_err(|e| DispatchError::SerializationError(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpSinkConfig {
    pub url: String,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_attempts() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    100
}

fn default_timeout_ms() -> u64 {
    10_000
}

impl HttpSinkConfig {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            max_attempts: default_attempts(),
            backoff_ms: default_backoff_ms(),
            timeout_ms: default_timeout_ms(),
        }
    }
}

/// Where action requests go.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SinkConfig {
    Stdout,
    File { path: PathBuf },
    Http(HttpSinkConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliveryReceipt {
    pub correlation_id: Uuid,
    pub sink: String,
    pub attempts: u32,
    /// HTTP status for the http sink.
    pub status: Option<u16>,
    pub bytes: usize,
    pub delivered_at: DateTime<Utc>,
}

enum Target {
    Writer(Box<dyn Write + Send>),
    File(PathBuf),
    Http(HttpSinkConfig, reqwest::blocking::Client),
}

/// Delivers requests to one sink. Writes to the same emitter are serialized.
pub struct Emitter {
    target: Mutex<Target>,
    name: String,
}

impl Emitter {
    pub fn new(config: &SinkConfig) -> Result<Self> {
        let (target, name) = match config {
            SinkConfig::Stdout => (Target::Writer(Box::new(std::io::stdout())), "stdout".to_string()),
            SinkConfig::File { path } => (Target::File(path.clone()), format!("file:{}", path.display())),
            SinkConfig::Http(http) => {
                let client = reqwest::blocking::Client::builder()
                    .timeout(Duration::from_millis(http.timeout_ms))
                    .build()
                    .map_err(|e| DispatchError::SinkUnavailable {
                        attempts: 0,
                        status: None,
                        message: e.to_string(),
                    })?;
                (Target::Http(http.clone(), client), format!("http:{}", http.url))
            }
        };
        Ok(Self {
            target: Mutex::new(target),
            name,
        })
    }

    /// Emitter writing JSON lines to an arbitrary writer.
    pub fn writer(w: Box<dyn Write + Send>) -> Self {
        Self {
            target: Mutex::new(Target::Writer(w)),
            name: "writer".into(),
        }
    }

    pub fn emit(&self, request: &ActionRequest) -> Result<DeliveryReceipt> {
        let line = to_json_line(request)?;
        let mut target = self.target.lock().unwrap_or_else(|e| e.into_inner());
        let (attempts, status) = match &mut *target {
            Target::Writer(w) => {
                writeln!(w, "{line}")
                    .and_then(|_| w.flush())
                    .map_err(|e| unavailable(1, None, e))?;
                (1, None)
            }
            Target::File(path) => {
                let mut f = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&*path)
                    .map_err(|e| unavailable(1, None, e))?;
                writeln!(f, "{line}").map_err(|e| unavailable(1, None, e))?;
                (1, None)
            }
            Target::Http(cfg, client) => post_with_retries(cfg, client, &line)?,
        };
        Ok(DeliveryReceipt {
            correlation_id: request.correlation_id,
            sink: self.name.clone(),
            attempts,
            status,
            bytes: line.len(),
            delivered_at: Utc::now(),
        })
    }
}

fn unavailable(attempts: u32, status: Option<u16>, e: impl std::fmt::Display) -> DispatchError {
    DispatchError::SinkUnavailable {
        attempts,
        status,
        message: e.to_string(),
    }
}

fn post_with_retries(
    cfg: &HttpSinkConfig,
    client: &reqwest::blocking::Client,
    body: &str,
) -> Result<(u32, Option<u16>)> {
    let max = cfg.max_attempts.max(1);
    let mut last = unavailable(0, None, "no attempt made");
    for attempt in 1..=max {
        if attempt > 1 {
            std::thread::sleep(Duration::from_millis(cfg.backoff_ms * u64::from(attempt - 1)));
        }
        let sent = client
            .post(&cfg.url)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_string())
            .send();
        match sent {
            Ok(resp) => {
                let status = resp.status();
                if status.is_success() {
                    return Ok((attempt, Some(status.as_u16())));
                }
                if status.is_server_error() || status.as_u16() == 429 {
                    last = unavailable(attempt, Some(status.as_u16()), format!("HTTP {status}"));
                } else {
                    return Err(DispatchError::SinkRejected {
                        status: status.as_u16(),
                    });
                }
            }
            Err(e) => last = unavailable(attempt, None, crate::error_chain(&e)),
        }
    }
    Err(last)
}
