//! Standalone prompting baseline: classify an intent with a single chat
//! completion, normalize the answer onto the known categories, and flag
//! hallucinated category names.

mod chat;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use chat::{ChatClient, ChatClientConfig, ChatError, ChatModel, LLM_KEY_ENV};

use crate::corpus::LabeledPrompt;
use crate::router::{Router, RouterError};

/// Minimum sample count for a latency comparison.
pub const MIN_LATENCY_SAMPLES: usize = 20;

/// Default router-vs-LLM median latency ratio a comparison is checked against.
pub const DEFAULT_LATENCY_EXPECTATION: f64 = 50.0;

/// Near-miss names observed for the Performance Assurance Intent.
pub const DEFAULT_NEAR_MISSES: [&str; 2] = ["Performance Intent", "Intent Assurance"];

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error(transparent)]
    Chat(#[from] ChatError),
    #[error(transparent)]
    Router(#[from] RouterError),
    #[error("empty input")]
    EmptyInput,
    #[error("latency comparison needs at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
}

/// Lowercases, turns punctuation into spaces, and collapses whitespace.
pub fn normalize_label(raw: &str) -> String {
    raw.to_lowercase()
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || c.is_whitespace() {
                c
            } else {
                ' '
            }
        })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn contains_words(haystack: &str, needle: &str) -> bool {
    format!(" {haystack} ").contains(&format!(" {needle} "))
}

/// Maps a raw answer onto one of `labels`: exact match after normalization,
/// otherwise a unique word-boundary containment match in either direction.
/// Returns `None` when the answer names no known category unambiguously.
pub fn match_label(raw: &str, labels: &[String]) -> Option<String> {
    let answer = normalize_label(raw);
    if answer.is_empty() {
        return None;
    }
    let normalized: Vec<String> = labels.iter().map(|l| normalize_label(l)).collect();
    if let Some(i) = normalized.iter().position(|l| *l == answer) {
        return Some(labels[i].clone());
    }
    let hits: Vec<usize> = normalized
        .iter()
        .enumerate()
        .filter(|(_, l)| contains_words(&answer, l) || contains_words(l, &answer))
        .map(|(i, _)| i)
        .collect();
    match hits.as_slice() {
        [only] => Some(labels[*only].clone()),
        _ => None,
    }
}

/// System message enumerating the categories with their base utterances.
pub fn classification_prompt(labels: &[String]) -> String {
    let mut prompt = String::from(
        "You classify requests for 5G core network management and orchestration. \
         Assign the user's request to exactly one of these intent categories:\n",
    );
    for label in labels {
        match crate::corpus::builtin_routes().into_iter().find(|r| &r.name == label) {
            Some(route) => prompt.push_str(&format!("- {label}: e.g. \"{}\"\n", route.utterances[0])),
            None => prompt.push_str(&format!("- {label}\n")),
        }
    }
    prompt.push_str("Respond with exactly one category name.");
    prompt
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineOutcome {
    pub raw: String,
    pub normalized_label: Option<String>,
    pub hallucinated: bool,
    #[serde(serialize_with = "micros")]
    pub elapsed: Duration,
}

fn micros<S: serde::Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_u64(d.as_micros() as u64)
}

impl BaselineOutcome {
    fn from_raw(raw: String, labels: &[String], elapsed: Duration) -> Self {
        let normalized_label = match_label(&raw, labels);
        Self {
            hallucinated: normalized_label.is_none(),
            raw,
            normalized_label,
            elapsed,
        }
    }

    pub fn label(&self) -> &str {
        self.normalized_label.as_deref().unwrap_or(crate::NONE_LABEL)
    }
}

/// Sends one chat request and normalizes the answer. Elapsed time covers the
/// request only.
pub fn classify_by_prompt(
    client: &dyn ChatModel,
    text: &str,
    labels: &[String],
) -> Result<BaselineOutcome, BaselineError> {
    if text.trim().is_empty() {
        return Err(BaselineError::EmptyInput);
    }
    let system = classification_prompt(labels);
    let start = Instant::now();
    let raw = client.complete(&system, text)?;
    let elapsed = start.elapsed();
    if raw.trim().is_empty() {
        return Err(ChatError::EmptyResponse.into());
    }
    Ok(BaselineOutcome::from_raw(raw, labels, elapsed))
}

/// Deterministic label-corruption schedule. Sample `i` is corrupted when
/// `floor((i + 1) * rate) > floor(i * rate)`, so exactly `floor(n * rate)` of
/// the first `n` samples are hit, spread evenly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HallucinationSchedule {
    pub rate: f64,
    #[serde(default = "default_near_misses")]
    pub near_misses: Vec<String>,
}

fn default_near_misses() -> Vec<String> {
    DEFAULT_NEAR_MISSES.iter().map(|s| s.to_string()).collect()
}

const RATE_SCALE: u64 = 1_000_000;

impl HallucinationSchedule {
    pub fn new(rate: f64) -> Self {
        Self {
            rate,
            near_misses: default_near_misses(),
        }
    }

    fn scaled_rate(&self) -> u64 {
        (self.rate.clamp(0.0, 1.0) * RATE_SCALE as f64).round() as u64
    }

    fn hits_before(&self, i: usize) -> u64 {
        i as u64 * self.scaled_rate() / RATE_SCALE
    }

    pub fn corrupts(&self, i: usize) -> bool {
        self.hits_before(i + 1) > self.hits_before(i)
    }

    /// Near-miss name for sample `i`, cycling through the configured names.
    pub fn near_miss(&self, i: usize) -> &str {
        if self.near_misses.is_empty() {
            return DEFAULT_NEAR_MISSES[0];
        }
        let k = self.hits_before(i) as usize;
        &self.near_misses[k % self.near_misses.len()]
    }
}

/// Applies `f` to every item with at most `max_in_flight` concurrent calls,
/// returning results in input order.
pub(crate) fn parallel_map<T: Sync, R: Send>(
    items: &[T],
    max_in_flight: usize,
    f: impl Fn(usize, &T) -> R + Sync,
) -> Vec<R> {
    let workers = max_in_flight.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let r = f(i, &items[i]);
                *slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().unwrap().expect("every slot filled"))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct BaselineSample {
    pub text: String,
    pub expected: String,
    /// `None` when the request failed.
    pub outcome: Option<BaselineOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub injected: bool,
}

impl BaselineSample {
    pub fn correct(&self) -> bool {
        self.outcome.as_ref().is_some_and(|o| o.label() == self.expected)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BaselineRun {
    pub model: String,
    pub accuracy: f64,
    pub hallucinations: usize,
    pub failures: usize,
    pub injected: usize,
    pub samples: Vec<BaselineSample>,
}

/// Classifies every sample through the chat model. Request failures are
/// recorded per sample and count as misses. With `injection`, the answer for
/// each scheduled sample index is replaced by a near-miss name before
/// normalization.
pub fn run_baseline(
    client: &dyn ChatModel,
    samples: &[LabeledPrompt],
    labels: &[String],
    injection: Option<&HallucinationSchedule>,
    max_in_flight: usize,
) -> BaselineRun {
    let results = parallel_map(samples, max_in_flight, |i, sample| {
        let outcome = classify_by_prompt(client, &sample.text, labels);
        let inject = injection.filter(|s| s.corrupts(i));
        match (outcome, inject) {
            (Ok(o), Some(s)) => {
                let elapsed = o.elapsed;
                (
                    Ok(BaselineOutcome::from_raw(s.near_miss(i).to_string(), labels, elapsed)),
                    true,
                )
            }
            (other, _) => (other, false),
        }
    });

    let samples: Vec<BaselineSample> = samples
        .iter()
        .zip(results)
        .map(|(sample, (result, injected))| {
            let (outcome, error) = match result {
                Ok(o) => (Some(o), None),
                Err(e) => (None, Some(e.to_string())),
            };
            BaselineSample {
                text: sample.text.clone(),
                expected: sample.label.clone(),
                outcome,
                error,
                injected,
            }
        })
        .collect();
    summarize(client.model_id(), samples)
}

/// Copy of `run` with the answers of scheduled sample indices replaced by
/// near-miss names, as if the model had produced them.
pub fn inject_hallucinations(run: &BaselineRun, labels: &[String], schedule: &HallucinationSchedule) -> BaselineRun {
    let samples: Vec<BaselineSample> = run
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut s = s.clone();
            if let (Some(o), true) = (&s.outcome, schedule.corrupts(i)) {
                s.outcome = Some(BaselineOutcome::from_raw(
                    schedule.near_miss(i).to_string(),
                    labels,
                    o.elapsed,
                ));
                s.injected = true;
            }
            s
        })
        .collect();
    summarize(run.model.clone(), samples)
}

fn summarize(model: String, samples: Vec<BaselineSample>) -> BaselineRun {
    let n = samples.len().max(1) as f64;
    BaselineRun {
        model,
        accuracy: samples.iter().filter(|s| s.correct()).count() as f64 / n,
        hallucinations: samples
            .iter()
            .filter(|s| s.outcome.as_ref().is_some_and(|o| o.hallucinated))
            .count(),
        failures: samples.iter().filter(|s| s.outcome.is_none()).count(),
        injected: samples.iter().filter(|s| s.injected).count(),
        samples,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathStats {
    pub samples: usize,
    pub failures: usize,
    pub accuracy: f64,
    pub median_us: f64,
    pub p95_us: f64,
    pub mean_us: f64,
}

impl PathStats {
    fn from_durations(durations: &[Duration], failures: usize, correct: usize) -> Self {
        let mut us: Vec<f64> = durations.iter().map(|d| d.as_secs_f64() * 1e6).collect();
        us.sort_by(f64::total_cmp);
        let n = us.len();
        let (median, p95, mean) = if n == 0 {
            (f64::NAN, f64::NAN, f64::NAN)
        } else {
            let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n) - 1;
            (
                (us[(n - 1) / 2] + us[n / 2]) / 2.0,
                us[rank],
                us.iter().sum::<f64>() / n as f64,
            )
        };
        Self {
            samples: n + failures,
            failures,
            accuracy: correct as f64 / (n + failures).max(1) as f64,
            median_us: median,
            p95_us: p95,
            mean_us: mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyComparison {
    pub router: PathStats,
    pub llm: PathStats,
    /// LLM median latency divided by router median latency.
    pub ratio: f64,
    pub expected_ratio: f64,
    pub meets_expectation: bool,
}

/// Routes every sample through both the router and the chat model and compares
/// median / p95 latency. LLM failures are counted, not fatal.
pub fn compare_latency(
    router: &Router,
    client: &dyn ChatModel,
    samples: &[LabeledPrompt],
    expected_ratio: f64,
    max_in_flight: usize,
) -> Result<LatencyComparison, BaselineError> {
    if samples.len() < MIN_LATENCY_SAMPLES {
        return Err(BaselineError::TooFewSamples {
            needed: MIN_LATENCY_SAMPLES,
            got: samples.len(),
        });
    }
    let labels = router.route_names();
    let run = run_baseline(client, samples, &labels, None, max_in_flight);
    compare_latency_with_run(router, &run, samples, expected_ratio)
}

/// Like [`compare_latency`], reusing the LLM timings of an existing clean run
/// over the same samples.
pub fn compare_latency_with_run(
    router: &Router,
    run: &BaselineRun,
    samples: &[LabeledPrompt],
    expected_ratio: f64,
) -> Result<LatencyComparison, BaselineError> {
    if samples.len() < MIN_LATENCY_SAMPLES {
        return Err(BaselineError::TooFewSamples {
            needed: MIN_LATENCY_SAMPLES,
            got: samples.len(),
        });
    }
    let mut router_times = Vec::with_capacity(samples.len());
    let mut router_correct = 0;
    for sample in samples {
        let decision = router.route_query(&sample.text)?;
        router_times.push(decision.elapsed);
        router_correct += usize::from(decision.label() == sample.label);
    }
    let llm_times: Vec<Duration> = run
        .samples
        .iter()
        .filter_map(|s| s.outcome.as_ref().map(|o| o.elapsed))
        .collect();
    let llm_correct = run.samples.iter().filter(|s| s.correct()).count();

    let router_stats = PathStats::from_durations(&router_times, 0, router_correct);
    let llm_stats = PathStats::from_durations(&llm_times, run.failures, llm_correct);
    let ratio = llm_stats.median_us / router_stats.median_us.max(1e-3);
    Ok(LatencyComparison {
        meets_expectation: ratio >= expected_ratio,
        router: router_stats,
        llm: llm_stats,
        ratio,
        expected_ratio,
    })
}
