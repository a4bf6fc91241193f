//! Labeled prompt corpus, the built-in route set, and utterance composition.
//!
//! The on-disk format is JSON Lines, one prompt per line:
//! `{"text","label","variant","source_id","fold"}` plus an optional `origin`
//! naming the generator that produced a derived prompt. A seed prompt's
//! `source_id` is its own id; variability and paraphrase prompts point at the
//! seed they were derived from.

mod augment;
mod builtin;
pub mod synth;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::ChatError;
use crate::embedding::fnv1a64;
use crate::router::Route;
use crate::NONE_LABEL;

pub use augment::{
    generate_variants, validate_variant, RuleBasedRewriter, PARAPHRASE_INSTRUCTION, VARIABILITY_INSTRUCTION,
};
pub use builtin::{
    builtin_route_names, builtin_routes, intent_keywords, DEPLOYMENT, FEASIBILITY_CHECK, MODIFICATION,
    NOTIFICATION_REQUEST, PERFORMANCE_ASSURANCE, REPORT_REQUEST,
};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: missing field `{field}`")]
    MissingField { line: usize, field: &'static str },
    #[error("provenance: {0}")]
    Provenance(String),
    #[error("invalid utterance spec: {0}")]
    InvalidSpec(String),
    #[error("route {route:?} needs {needed} prompts but only {available} are available")]
    InsufficientPrompts {
        route: String,
        needed: usize,
        available: usize,
    },
    #[error("derived prompts at indices {rejected:?} failed validation")]
    ValidationFailure {
        rejected: Vec<usize>,
        /// Every derived prompt, rejected ones included, in seed order.
        derived: Vec<LabeledPrompt>,
    },
    #[error("no seeds given")]
    NoSeeds,
    #[error(transparent)]
    Chat(#[from] ChatError),
    #[error("corpus I/O: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Base,
    Seed,
    Variability,
    Paraphrase,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Base => "base",
            Variant::Seed => "seed",
            Variant::Variability => "variability",
            Variant::Paraphrase => "paraphrase",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPrompt {
    pub text: String,
    /// Route name or `NONE`.
    pub label: String,
    pub variant: Variant,
    #[serde(default)]
    pub source_id: Option<String>,
    #[serde(default)]
    pub fold: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<String>,
}

impl LabeledPrompt {
    pub fn new(text: impl Into<String>, label: impl Into<String>, variant: Variant) -> Self {
        Self {
            text: text.into(),
            label: label.into(),
            variant,
            source_id: None,
            fold: None,
            origin: None,
        }
    }

    pub fn with_source(mut self, id: impl Into<String>) -> Self {
        self.source_id = Some(id.into());
        self
    }

    pub fn is_none_label(&self) -> bool {
        self.label == NONE_LABEL
    }
}

/// Utterance composition `(a, b, c)`: `a` seed prompts, `b` variability and
/// `c` paraphrase prompts drawn from those seeds, plus the base utterance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UtteranceSpec {
    pub a: usize,
    pub b: usize,
    pub c: usize,
}

impl UtteranceSpec {
    pub const fn new(a: usize, b: usize, c: usize) -> Self {
        Self { a, b, c }
    }

    pub fn validate(&self) -> Result<()> {
        if self.b > self.a || self.c > self.a {
            return Err(CorpusError::InvalidSpec(format!(
                "({}, {}, {}): variants must not outnumber seeds",
                self.a, self.b, self.c
            )));
        }
        Ok(())
    }

    /// Utterances per route including the base utterance.
    pub fn total(&self) -> usize {
        1 + self.a + self.b + self.c
    }
}

impl std::fmt::Display for UtteranceSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{},{})", self.a, self.b, self.c)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub prompts: Vec<LabeledPrompt>,
}

impl Corpus {
    pub fn new(prompts: Vec<LabeledPrompt>) -> Self {
        Self { prompts }
    }

    /// The committed synthetic corpus: 30 seeds per intent with one
    /// variability and one paraphrase version each.
    pub fn shipped() -> Self {
        parse_corpus(SHIPPED_CORPUS, &builtin_route_names()).expect("shipped corpus is valid")
    }

    pub fn len(&self) -> usize {
        self.prompts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prompts.is_empty()
    }

    pub fn seeds(&self) -> Vec<LabeledPrompt> {
        self.of_variant(Variant::Seed)
    }

    pub fn of_variant(&self, variant: Variant) -> Vec<LabeledPrompt> {
        self.prompts.iter().filter(|p| p.variant == variant).cloned().collect()
    }

    pub fn labels(&self) -> BTreeSet<String> {
        self.prompts.iter().map(|p| p.label.clone()).collect()
    }

    pub fn count_by_label(&self, variant: Variant) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for p in self.prompts.iter().filter(|p| p.variant == variant) {
            *counts.entry(p.label.clone()).or_insert(0) += 1;
        }
        counts
    }

    /// The derived prompt of `variant` for seed `source_id`, if present.
    pub fn derived(&self, source_id: &str, variant: Variant) -> Option<&LabeledPrompt> {
        self.prompts
            .iter()
            .find(|p| p.variant == variant && p.source_id.as_deref() == Some(source_id))
    }

    /// Derived prompt text mapped to the id of its source seed.
    pub fn provenance(&self) -> BTreeMap<String, String> {
        self.prompts
            .iter()
            .filter(|p| matches!(p.variant, Variant::Variability | Variant::Paraphrase))
            .filter_map(|p| p.source_id.clone().map(|s| (p.text.clone(), s)))
            .collect()
    }

    /// Every seed has a unique id; every derived prompt points at a seed with
    /// the same label.
    pub fn check_provenance(&self) -> Result<()> {
        let mut seeds: BTreeMap<&str, &str> = BTreeMap::new();
        for p in self.prompts.iter().filter(|p| p.variant == Variant::Seed) {
            let id = p
                .source_id
                .as_deref()
                .ok_or_else(|| CorpusError::Provenance(format!("seed {:?} has no id", p.text)))?;
            if seeds.insert(id, p.label.as_str()).is_some() {
                return Err(CorpusError::Provenance(format!("duplicate seed id {id:?}")));
            }
        }
        for p in &self.prompts {
            if !matches!(p.variant, Variant::Variability | Variant::Paraphrase) {
                continue;
            }
            let id = p
                .source_id
                .as_deref()
                .ok_or_else(|| CorpusError::Provenance(format!("derived prompt {:?} has no source", p.text)))?;
            match seeds.get(id) {
                Some(label) if *label == p.label => {}
                Some(label) => {
                    return Err(CorpusError::Provenance(format!(
                        "{id:?} is labeled {label:?} but derived prompt is {:?}",
                        p.label
                    )))
                }
                None => return Err(CorpusError::Provenance(format!("unknown seed id {id:?}"))),
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_corpus(self, path)
    }
}

const SHIPPED_CORPUS: &str = include_str!("../../data/corpus.jsonl");

pub fn to_jsonl(corpus: &Corpus) -> String {
    let mut out = String::new();
    for p in &corpus.prompts {
        out.push_str(&serde_json::to_string(p).expect("prompt serializes"));
        out.push('\n');
    }
    out
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_jsonl(corpus))?;
    Ok(())
}

/// Loads a corpus labeled with the built-in route names.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    load_corpus_with_labels(path, &builtin_route_names())
}

pub fn load_corpus_with_labels(path: impl AsRef<Path>, routes: &[String]) -> Result<Corpus> {
    let text = std::fs::read_to_string(path)?;
    parse_corpus(&text, routes)
}

/// Parses JSONL; line numbers in errors are 1-based. Labels must be one of
/// `routes` or `NONE`.
pub fn parse_corpus(text: &str, routes: &[String]) -> Result<Corpus> {
    let mut prompts = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line).map_err(|e| CorpusError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        for field in ["text", "label", "variant"] {
            if value.get(field).is_none_or(|v| v.is_null()) {
                return Err(CorpusError::MissingField { line: line_no, field });
            }
        }
        let prompt: LabeledPrompt = serde_json::from_value(value).map_err(|e| CorpusError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if prompt.text.trim().is_empty() {
            return Err(CorpusError::Parse {
                line: line_no,
                message: "empty text".into(),
            });
        }
        if prompt.label != NONE_LABEL && !routes.contains(&prompt.label) {
            return Err(CorpusError::Parse {
                line: line_no,
                message: format!("unknown label {:?}", prompt.label),
            });
        }
        prompts.push(prompt);
    }
    let corpus = Corpus { prompts };
    corpus.check_provenance()?;
    Ok(corpus)
}

/// Utterances chosen for one route and the seed ids they consumed.
#[derive(Debug, Clone, PartialEq)]
pub struct Composition {
    pub utterances: Vec<String>,
    pub consumed: Vec<String>,
}

/// Selects `a` seeds of `route` by seeded shuffle, attaches the variability
/// versions of the first `b` and the paraphrase versions of the first `c`,
/// and prepends the route's base utterance (its first utterance).
///
/// Selection is nested: for a fixed seed, the seeds picked for `a` are a
/// prefix of those picked for any larger `a`.
pub fn compose_utterances(corpus: &Corpus, spec: UtteranceSpec, route: &Route, seed: u64) -> Result<Composition> {
    spec.validate()?;
    let base = route
        .utterances
        .first()
        .ok_or_else(|| CorpusError::InvalidSpec(format!("route {:?} has no base utterance", route.name)))?;

    let mut eligible: Vec<&LabeledPrompt> = corpus
        .prompts
        .iter()
        .filter(|p| p.variant == Variant::Seed && p.label == route.name)
        .filter(|p| {
            let Some(id) = p.source_id.as_deref() else { return false };
            (spec.b == 0 || corpus.derived(id, Variant::Variability).is_some())
                && (spec.c == 0 || corpus.derived(id, Variant::Paraphrase).is_some())
        })
        .collect();
    if eligible.len() < spec.a {
        return Err(CorpusError::InsufficientPrompts {
            route: route.name.clone(),
            needed: spec.a,
            available: eligible.len(),
        });
    }
    eligible.sort_by(|x, y| x.source_id.cmp(&y.source_id));
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a64(route.name.as_bytes()));
    eligible.shuffle(&mut rng);
    let chosen = &eligible[..spec.a];

    let mut utterances = vec![base.clone()];
    utterances.extend(chosen.iter().map(|p| p.text.clone()));
    for (count, variant) in [(spec.b, Variant::Variability), (spec.c, Variant::Paraphrase)] {
        for p in &chosen[..count] {
            let id = p.source_id.as_deref().unwrap_or_default();
            let derived = corpus.derived(id, variant).expect("eligibility checked");
            utterances.push(derived.text.clone());
        }
    }
    Ok(Composition {
        utterances,
        consumed: chosen.iter().filter_map(|p| p.source_id.clone()).collect(),
    })
}

/// Composes every route and returns the augmented routes with the union of
/// consumed seed ids.
pub fn compose_routes(
    corpus: &Corpus,
    spec: UtteranceSpec,
    routes: &[Route],
    seed: u64,
) -> Result<(Vec<Route>, HashSet<String>)> {
    let mut consumed = HashSet::new();
    let mut out = Vec::with_capacity(routes.len());
    for route in routes {
        let comp = compose_utterances(corpus, spec, route, seed)?;
        consumed.extend(comp.consumed);
        let mut r = route.clone();
        r.utterances = comp.utterances;
        out.push(r);
    }
    Ok((out, consumed))
}
