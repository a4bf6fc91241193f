//! Semantic routing for intent-based management and orchestration of 5G core
//! networks.
//!
//! Natural-language intents are embedded, scored against per-route example
//! utterances, and routed to one of six static intent routes (or the `NONE`
//! fallback). The crate also carries the evaluation harness: labeled corpora,
//! threshold tuning, k-fold evaluation, the prompting baseline and the
//! experiment runner.

pub mod baseline;
pub mod corpus;
pub mod dispatch;
pub mod embedding;
pub mod experiments;
pub mod mock;
pub mod router;
pub mod tuning;

pub use corpus::{builtin_routes, Corpus, LabeledPrompt, UtteranceSpec, Variant};
pub use embedding::{EmbeddingVector, EncoderDescriptor, EncoderKind, TextEncoder};
pub use router::{Route, Router, RoutingDecision};
pub use tuning::{EvaluationReport, ThresholdSet};

/// Literal label used for the fallback route.
pub const NONE_LABEL: &str = "NONE";

/// `e` followed by its source chain, colon separated.
pub(crate) fn error_chain(e: &dyn std::error::Error) -> String {
    let mut out = e.to_string();
    let mut cur = e.source();
    while let Some(s) = cur {
        out.push_str(": ");
        out.push_str(&s.to_string());
        cur = s.source();
    }
    out
}
