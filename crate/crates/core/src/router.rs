//! Route layer: a frozen set of routes with embedded utterances, scored by
//! cosine similarity and gated by per-route thresholds.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{build_encoder, EmbeddingError, EmbeddingVector, EncoderDescriptor, TextEncoder};

/// Number of top utterance similarities averaged into a route score.
pub const DEFAULT_TOP_K: usize = 5;

/// Threshold assigned to every route before tuning.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// A route qualifies when its score is greater than or equal to its threshold.
pub const THRESHOLD_INCLUSIVE: bool = true;

#[derive(Debug, Error)]
pub enum RouterError {
    #[error("router needs at least one route")]
    NoRoutes,
    #[error("duplicate route name {0:?}")]
    DuplicateRouteName(String),
    #[error("route {0:?} has no utterances")]
    EmptyUtterances(String),
    #[error("route {route:?} has threshold {value} outside [0, 1]")]
    InvalidThreshold { route: String, value: f64 },
    #[error("top_k must be positive")]
    InvalidTopK,
    #[error("query dimension {got} does not match router dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("unknown route {0:?}")]
    UnknownRoute(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("route set I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("route set JSON: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, RouterError>;

/// Named intent category. The first utterance of a built-in route is its base
/// utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub name: String,
    pub threshold: f64,
    pub utterances: Vec<String>,
    /// MANO action verb dispatched when this route wins.
    pub action: String,
}

impl Route {
    pub fn new(name: impl Into<String>, utterances: Vec<String>, action: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            threshold: DEFAULT_THRESHOLD,
            utterances,
            action: action.into(),
        }
    }
}

/// Serialized route set: `{"routes":[...],"encoder":{...},"top_k":n}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteSetDocument {
    pub routes: Vec<Route>,
    pub encoder: EncoderDescriptor,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
}

fn default_top_k() -> usize {
    DEFAULT_TOP_K
}

impl RouteSetDocument {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn build(&self) -> Result<Router> {
        build_router(self.routes.clone(), &self.encoder, self.top_k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoutingDecision {
    /// Winning route, `None` for the fallback route.
    pub route_name: Option<String>,
    /// Winning score, or the best score overall when no route qualified.
    pub score: f64,
    pub per_route_scores: BTreeMap<String, f64>,
    #[serde(serialize_with = "micros")]
    pub elapsed: Duration,
}

fn micros<S: serde::Serializer>(d: &Duration, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_u64(d.as_micros() as u64)
}

impl RoutingDecision {
    pub fn is_none(&self) -> bool {
        self.route_name.is_none()
    }

    pub fn label(&self) -> &str {
        self.route_name.as_deref().unwrap_or(crate::NONE_LABEL)
    }
}

/// Immutable route layer. Threshold changes produce a new value sharing the
/// utterance embeddings.
#[derive(Clone)]
pub struct Router {
    routes: Vec<Route>,
    encoder: Arc<dyn TextEncoder>,
    embeddings: Arc<Vec<Vec<EmbeddingVector>>>,
    top_k: usize,
    dim: usize,
}

impl std::fmt::Debug for Router {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Router")
            .field("routes", &self.routes.iter().map(|r| &r.name).collect::<Vec<_>>())
            .field("encoder", &self.encoder.descriptor().name)
            .field("top_k", &self.top_k)
            .field("dim", &self.dim)
            .finish()
    }
}

fn validate_routes(routes: &[Route]) -> Result<()> {
    if routes.is_empty() {
        return Err(RouterError::NoRoutes);
    }
    let mut names = HashSet::new();
    for route in routes {
        if !names.insert(route.name.as_str()) {
            return Err(RouterError::DuplicateRouteName(route.name.clone()));
        }
        if route.utterances.is_empty() {
            return Err(RouterError::EmptyUtterances(route.name.clone()));
        }
        if !(0.0..=1.0).contains(&route.threshold) {
            return Err(RouterError::InvalidThreshold {
                route: route.name.clone(),
                value: route.threshold,
            });
        }
    }
    Ok(())
}

pub fn build_router(routes: Vec<Route>, encoder: &EncoderDescriptor, top_k: usize) -> Result<Router> {
    validate_routes(&routes)?;
    if top_k == 0 {
        return Err(RouterError::InvalidTopK);
    }
    let encoder = build_encoder(encoder)?;
    Router::with_encoder(routes, encoder, top_k)
}

impl Router {
    /// Builds a router around an existing encoder instance, embedding every
    /// utterance exactly once (one batch for the whole route set).
    pub fn with_encoder(routes: Vec<Route>, encoder: Arc<dyn TextEncoder>, top_k: usize) -> Result<Self> {
        validate_routes(&routes)?;
        if top_k == 0 {
            return Err(RouterError::InvalidTopK);
        }
        let all: Vec<String> = routes.iter().flat_map(|r| r.utterances.iter().cloned()).collect();
        let mut vectors = encoder.encode_batch(&all)?.into_iter();
        let embeddings: Vec<Vec<EmbeddingVector>> = routes
            .iter()
            .map(|r| vectors.by_ref().take(r.utterances.len()).collect())
            .collect();
        let dim = embeddings[0][0].dim();
        for v in embeddings.iter().flatten() {
            if v.dim() != dim {
                return Err(RouterError::DimensionMismatch {
                    expected: dim,
                    got: v.dim(),
                });
            }
        }
        Ok(Self {
            routes,
            encoder,
            embeddings: Arc::new(embeddings),
            top_k,
            dim,
        })
    }

    pub fn routes(&self) -> &[Route] {
        &self.routes
    }

    pub fn route_names(&self) -> Vec<String> {
        self.routes.iter().map(|r| r.name.clone()).collect()
    }

    pub fn route_index(&self, name: &str) -> Option<usize> {
        self.routes.iter().position(|r| r.name == name)
    }

    pub fn thresholds(&self) -> Vec<f64> {
        self.routes.iter().map(|r| r.threshold).collect()
    }

    pub fn top_k(&self) -> usize {
        self.top_k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn encoder(&self) -> &Arc<dyn TextEncoder> {
        &self.encoder
    }

    pub fn utterance_embeddings(&self) -> &[Vec<EmbeddingVector>] {
        &self.embeddings
    }

    /// Returns a copy with thresholds replaced, in route declaration order.
    pub fn with_threshold_values(&self, thresholds: &[f64]) -> Result<Router> {
        let mut next = self.clone();
        for (route, &t) in next.routes.iter_mut().zip(thresholds) {
            if !(0.0..=1.0).contains(&t) {
                return Err(RouterError::InvalidThreshold {
                    route: route.name.clone(),
                    value: t,
                });
            }
            route.threshold = t;
        }
        Ok(next)
    }

    /// Returns a copy with thresholds replaced by name. Every route must be
    /// covered and no unknown names are allowed.
    pub fn with_thresholds(&self, thresholds: &BTreeMap<String, f64>) -> Result<Router> {
        if let Some(unknown) = thresholds.keys().find(|k| self.route_index(k).is_none()) {
            return Err(RouterError::UnknownRoute(unknown.clone()));
        }
        let values = self
            .routes
            .iter()
            .map(|r| {
                thresholds
                    .get(&r.name)
                    .copied()
                    .ok_or_else(|| RouterError::UnknownRoute(r.name.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        self.with_threshold_values(&values)
    }

    pub fn to_document(&self) -> RouteSetDocument {
        RouteSetDocument {
            routes: self.routes.clone(),
            encoder: self.encoder.descriptor().clone(),
            top_k: self.top_k,
        }
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        if text.trim().is_empty() {
            return Err(RouterError::EmptyInput);
        }
        Ok(self.encoder.encode(text)?)
    }

    /// Aggregate scores in route declaration order.
    pub fn score_vector(&self, query: &EmbeddingVector) -> Result<Vec<f64>> {
        if query.dim() != self.dim {
            return Err(RouterError::DimensionMismatch {
                expected: self.dim,
                got: query.dim(),
            });
        }
        Ok(self
            .embeddings
            .iter()
            .map(|utterances| {
                let sims: Vec<f64> = utterances.iter().map(|u| query.dot(u)).collect();
                aggregate(&sims, self.top_k)
            })
            .collect())
    }

    pub fn score_routes(&self, query: &EmbeddingVector) -> Result<BTreeMap<String, f64>> {
        let scores = self.score_vector(query)?;
        Ok(self.routes.iter().map(|r| r.name.clone()).zip(scores).collect())
    }

    /// Embeds, scores and selects. Ties go to the earlier-declared route.
    pub fn route_query(&self, text: &str) -> Result<RoutingDecision> {
        let start = Instant::now();
        let query = self.embed(text)?;
        let scores = self.score_vector(&query)?;
        let winner = select_route(&scores, &self.thresholds());
        let elapsed = start.elapsed();

        let score = match winner {
            Some(i) => scores[i],
            None => scores.iter().copied().fold(0.0, f64::max),
        };
        Ok(RoutingDecision {
            route_name: winner.map(|i| self.routes[i].name.clone()),
            score,
            per_route_scores: self.routes.iter().map(|r| r.name.clone()).zip(scores).collect(),
            elapsed,
        })
    }
}

pub fn meets_threshold(score: f64, threshold: f64) -> bool {
    if THRESHOLD_INCLUSIVE {
        score >= threshold
    } else {
        score > threshold
    }
}

/// Index of the highest-scoring route among those meeting their threshold;
/// the first-declared route wins ties.
pub fn select_route(scores: &[f64], thresholds: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, (&s, &t)) in scores.iter().zip(thresholds).enumerate() {
        if meets_threshold(s, t) && best.is_none_or(|b| s > scores[b]) {
            best = Some(i);
        }
    }
    best
}

fn aggregate(sims: &[f64], top_k: usize) -> f64 {
    let mut sorted = sims.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let k = top_k.min(sorted.len());
    let mean = sorted[..k].iter().sum::<f64>() / k as f64;
    mean.clamp(0.0, 1.0)
}

/// Mean of the `top_k` largest similarities, clamped to `[0, 1]`.
pub fn aggregate_similarities(sims: &[f64], top_k: usize) -> Result<f64> {
    if sims.is_empty() {
        return Err(RouterError::EmptyInput);
    }
    if top_k == 0 {
        return Err(RouterError::InvalidTopK);
    }
    Ok(aggregate(sims, top_k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::builtin_routes;
    use proptest::prelude::*;

    fn reference(dim: usize) -> EncoderDescriptor {
        EncoderDescriptor::reference("ref", dim)
    }

    #[test]
    fn aggregation_examples() {
        assert!((aggregate_similarities(&[0.9, 0.8, 0.2], 2).unwrap() - 0.85).abs() < 1e-12);
        assert_eq!(aggregate_similarities(&[0.7], 5).unwrap(), 0.7);
        assert_eq!(aggregate_similarities(&[-0.4, -0.2], 2).unwrap(), 0.0);
        assert!(matches!(aggregate_similarities(&[], 2), Err(RouterError::EmptyInput)));
    }

    #[test]
    fn build_validates_routes() {
        assert!(matches!(
            build_router(vec![], &reference(64), 5),
            Err(RouterError::NoRoutes)
        ));
        let dup = vec![
            Route::new("a", vec!["x".into()], "deploy"),
            Route::new("a", vec!["y".into()], "modify"),
        ];
        assert!(matches!(
            build_router(dup, &reference(64), 5),
            Err(RouterError::DuplicateRouteName(n)) if n == "a"
        ));
        let empty = vec![Route::new("a", vec![], "deploy")];
        assert!(matches!(
            build_router(empty, &reference(64), 5),
            Err(RouterError::EmptyUtterances(_))
        ));
        let router = build_router(builtin_routes(), &reference(64), 5).unwrap();
        assert_eq!(router.routes().len(), 6);
        assert_eq!(router.utterance_embeddings().len(), 6);
        assert!(router.utterance_embeddings().iter().all(|e| e.len() == 1));
    }

    #[test]
    fn self_match_scores_one() {
        let routes = vec![
            Route::new("a", vec!["scale out the user plane function".into()], "deploy"),
            Route::new("b", vec!["send me a weekly status report".into()], "report"),
        ];
        let router = build_router(routes, &reference(256), 1).unwrap();
        let q = router.embed("send me a weekly status report").unwrap();
        let scores = router.score_routes(&q).unwrap();
        assert_eq!(scores.len(), 2);
        assert!((scores["b"] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let router = build_router(builtin_routes(), &reference(64), 5).unwrap();
        let q = crate::embedding::reference_encode("hello", 128).unwrap();
        assert!(matches!(
            router.score_vector(&q),
            Err(RouterError::DimensionMismatch { expected: 64, got: 128 })
        ));
    }

    #[test]
    fn report_request_routes_to_itself() {
        let router = build_router(builtin_routes(), &reference(512), 5).unwrap();
        let d = router
            .route_query("Summarize the results of the previous request.")
            .unwrap();
        assert_eq!(d.route_name.as_deref(), Some("Intent Report Request"));
        assert!((d.score - 1.0).abs() < 1e-9);
    }

    #[test]
    fn max_thresholds_give_none_with_best_score() {
        let router = build_router(builtin_routes(), &reference(512), 5).unwrap();
        let strict = router.with_threshold_values(&[1.0; 6]).unwrap();
        let d = strict.route_query("please deploy something in Toronto").unwrap();
        assert!(d.is_none());
        assert_eq!(d.label(), crate::NONE_LABEL);
        let best = d.per_route_scores.values().copied().fold(0.0, f64::max);
        assert_eq!(d.score, best);
    }

    #[test]
    fn ties_go_to_first_declared_route() {
        let routes = vec![
            Route::new("first", vec!["check capacity".into()], "deploy"),
            Route::new("second", vec!["check capacity".into()], "modify"),
        ];
        let router = build_router(routes, &reference(64), 5).unwrap();
        let d = router.route_query("check capacity").unwrap();
        assert_eq!(d.route_name.as_deref(), Some("first"));
        assert_eq!(select_route(&[0.7, 0.7], &[0.5, 0.5]), Some(0));
        assert_eq!(select_route(&[0.4, 0.7], &[0.5, 0.8]), None);
    }

    #[test]
    fn empty_query_is_rejected() {
        let router = build_router(builtin_routes(), &reference(64), 5).unwrap();
        assert!(matches!(router.route_query("   "), Err(RouterError::EmptyInput)));
    }

    #[test]
    fn threshold_replacement_by_name() {
        let router = build_router(builtin_routes(), &reference(64), 5).unwrap();
        let mut map: BTreeMap<String, f64> = router.route_names().into_iter().map(|n| (n, 0.3)).collect();
        let tuned = router.with_thresholds(&map).unwrap();
        assert!(tuned.thresholds().iter().all(|&t| t == 0.3));
        assert!(router.thresholds().iter().all(|&t| t == 0.5));
        map.insert("Bogus".into(), 0.1);
        assert!(matches!(
            router.with_thresholds(&map),
            Err(RouterError::UnknownRoute(_))
        ));
    }

    #[test]
    fn document_round_trip_keeps_field_order() {
        let router = build_router(builtin_routes(), &reference(64), 3).unwrap();
        let doc = router.to_document();
        let text = serde_json::to_string(&doc).unwrap();
        assert!(text.starts_with(r#"{"routes":[{"name":"Deployment Intent","threshold":0.5,"utterances":["#));
        assert!(text.ends_with(r#""top_k":3}"#));
        let back: RouteSetDocument = serde_json::from_str(&text).unwrap();
        assert_eq!(back, doc);
    }

    fn word() -> impl Strategy<Value = String> {
        "[a-z]{2,8}"
    }

    fn sentence() -> impl Strategy<Value = String> {
        proptest::collection::vec(word(), 1..8).prop_map(|w| w.join(" "))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn scores_in_unit_interval_and_deterministic(
            utts in proptest::collection::vec(proptest::collection::vec(sentence(), 1..4), 1..5),
            query in sentence(),
        ) {
            let routes: Vec<Route> = utts.into_iter().enumerate()
                .map(|(i, u)| Route::new(format!("r{i}"), u, "deploy"))
                .collect();
            let router = build_router(routes, &reference(64), 2).unwrap();
            let a = router.route_query(&query).unwrap();
            let b = router.route_query(&query).unwrap();
            prop_assert_eq!(&a.route_name, &b.route_name);
            prop_assert_eq!(&a.per_route_scores, &b.per_route_scores);
            prop_assert_eq!(a.per_route_scores.len(), router.routes().len());
            for s in a.per_route_scores.values() {
                prop_assert!((0.0..=1.0).contains(s));
            }
            if let Some(name) = &a.route_name {
                let i = router.route_index(name).unwrap();
                prop_assert!(a.score >= router.routes()[i].threshold);
            }
        }

        #[test]
        fn appending_a_non_qualifying_route_keeps_decision(
            utts in proptest::collection::vec(sentence(), 1..4),
            other in sentence(),
            query in sentence(),
        ) {
            let base = vec![Route::new("a", utts.clone(), "deploy")];
            let router = build_router(base.clone(), &reference(64), 2).unwrap();
            let before = router.route_query(&query).unwrap();

            let mut extended = base;
            let mut extra = Route::new("z", vec![other], "modify");
            extra.threshold = 1.0;
            extended.push(extra);
            let router2 = build_router(extended, &reference(64), 2).unwrap();
            let after = router2.route_query(&query).unwrap();
            prop_assume!(after.per_route_scores["z"] < 1.0);
            prop_assert_eq!(before.route_name, after.route_name);
        }

        #[test]
        fn lowering_thresholds_never_yields_none(
            utts in proptest::collection::vec(proptest::collection::vec(sentence(), 1..3), 2..4),
            query in sentence(),
            t in 0.0f64..1.0,
            delta in 0.0f64..0.5,
        ) {
            let routes: Vec<Route> = utts.into_iter().enumerate()
                .map(|(i, u)| { let mut r = Route::new(format!("r{i}"), u, "deploy"); r.threshold = t; r })
                .collect();
            let n = routes.len();
            let router = build_router(routes, &reference(64), 3).unwrap();
            let d = router.route_query(&query).unwrap();
            let lowered = router.with_threshold_values(&vec![(t - delta).max(0.0); n]).unwrap();
            let d2 = lowered.route_query(&query).unwrap();
            if !d.is_none() {
                prop_assert!(!d2.is_none());
            }
            // Raising the winner's threshold above its score removes it.
            if let Some(name) = &d.route_name {
                let i = router.route_index(name).unwrap();
                if d.score < 1.0 {
                    let mut th = router.thresholds();
                    th[i] = (d.score + 1e-9).min(1.0);
                    let d3 = router.with_threshold_values(&th).unwrap().route_query(&query).unwrap();
                    prop_assert_ne!(d3.route_name.as_deref(), Some(name.as_str()));
                }
            }
        }
    }
}
