//! The five experiment families: utterance count, utterance diversity,
//! encoder choice, router vs. prompting baseline, and the quantization sweep.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::{
    compare_latency_with_run, inject_hallucinations, parallel_map, run_baseline, BaselineError, BaselineRun,
    ChatClient, ChatClientConfig, ChatError, ChatModel, HallucinationSchedule, LatencyComparison,
    DEFAULT_LATENCY_EXPECTATION, MIN_LATENCY_SAMPLES,
};
use crate::corpus::{
    builtin_route_names, builtin_routes, compose_routes, load_corpus_with_labels, Corpus, CorpusError, LabeledPrompt,
    UtteranceSpec,
};
use crate::embedding::{EncoderDescriptor, EncoderKind};
use crate::mock::MockChatServer;
use crate::router::{build_router, Router, RouterError, DEFAULT_THRESHOLD, DEFAULT_TOP_K};
use crate::tuning::{
    assign_folds, fit_thresholds_from_scores, label_indices, report_from_scores, report_labels, score_matrix,
    EvaluationReport, ThresholdSet, TuningError, TuningOptions, DEFAULT_GRID_STEP, DEFAULT_MAX_PASSES,
};
use crate::NONE_LABEL;

pub const UTTERANCE_SPECS: [UtteranceSpec; 4] = [
    UtteranceSpec::new(0, 0, 0),
    UtteranceSpec::new(5, 5, 5),
    UtteranceSpec::new(10, 10, 10),
    UtteranceSpec::new(15, 15, 15),
];

pub const DIVERSITY_SPECS: [UtteranceSpec; 4] = [
    UtteranceSpec::new(5, 0, 0),
    UtteranceSpec::new(5, 5, 0),
    UtteranceSpec::new(5, 0, 5),
    UtteranceSpec::new(5, 5, 5),
];

/// Reference-encoder dimension used when a config names no encoder.
pub const DEFAULT_EXPERIMENT_DIM: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Utterance,
    Diversity,
    Encoder,
    Comparison,
    Quantization,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::Utterance,
        ExperimentKind::Diversity,
        ExperimentKind::Encoder,
        ExperimentKind::Comparison,
        ExperimentKind::Quantization,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Utterance => "utterance",
            ExperimentKind::Diversity => "diversity",
            ExperimentKind::Encoder => "encoder",
            ExperimentKind::Comparison => "comparison",
            ExperimentKind::Quantization => "quantization",
        }
    }
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown experiment {s:?}"))
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Tuning(#[from] TuningError),
    #[error(transparent)]
    Router(#[from] RouterError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Chat(#[from] ChatError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl ExperimentError {
    /// Process exit code: 2 for configuration errors, 3 when the corpus cannot
    /// supply the requested prompts or folds, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 2,
            ExperimentError::Corpus(CorpusError::InsufficientPrompts { .. })
            | ExperimentError::Tuning(TuningError::InsufficientSamples { .. }) => 3,
            ExperimentError::Corpus(CorpusError::InvalidSpec(_)) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default = "default_grid_step")]
    pub grid_step: f64,
    #[serde(default = "default_max_passes")]
    pub max_passes: usize,
}

fn yes() -> bool {
    true
}

fn default_grid_step() -> f64 {
    DEFAULT_GRID_STEP
}

fn default_max_passes() -> usize {
    DEFAULT_MAX_PASSES
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            grid_step: DEFAULT_GRID_STEP,
            max_passes: DEFAULT_MAX_PASSES,
        }
    }
}

impl TuningConfig {
    pub fn options(&self) -> TuningOptions {
        TuningOptions {
            grid_step: self.grid_step,
            max_passes: self.max_passes,
        }
    }
}

/// In-process chat endpoint that answers from the corpus labels after a
/// fixed delay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockEndpoint {
    #[serde(default)]
    pub delay_ms: u64,
}

/// One chat endpoint, e.g. one quantization level of a served model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_chat_timeout")]
    pub timeout_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock: Option<MockEndpoint>,
}

fn default_model() -> String {
    "mock".into()
}

fn default_chat_timeout() -> u64 {
    60_000
}

impl EndpointConfig {
    pub fn mock(label: impl Into<String>, delay_ms: u64) -> Self {
        Self {
            label: label.into(),
            endpoint: None,
            model: default_model(),
            timeout_ms: default_chat_timeout(),
            mock: Some(MockEndpoint { delay_ms }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_encoder")]
    pub encoder: EncoderDescriptor,
    /// Encoders compared by the encoder experiment.
    #[serde(default)]
    pub encoders: Vec<EncoderDescriptor>,
    /// Utterance composition of the router in the comparison experiments.
    #[serde(default = "default_spec")]
    pub utterance_spec: UtteranceSpec,
    #[serde(default = "default_k")]
    pub k_folds: usize,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default)]
    pub tuning: TuningConfig,
    /// Corpus JSONL; the shipped corpus when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    #[serde(default)]
    pub llm_endpoints: Vec<EndpointConfig>,
    #[serde(default = "default_schedule")]
    pub hallucination: HallucinationSchedule,
    #[serde(default = "default_expectation")]
    pub latency_expectation: f64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    /// Cap on the prompts sent to each chat endpoint; all held-out seeds when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn default_encoder() -> EncoderDescriptor {
    EncoderDescriptor::reference("reference", DEFAULT_EXPERIMENT_DIM)
}

fn default_spec() -> UtteranceSpec {
    UtteranceSpec::new(5, 5, 5)
}

fn default_k() -> usize {
    5
}

fn default_top_k() -> usize {
    DEFAULT_TOP_K
}

fn default_schedule() -> HallucinationSchedule {
    HallucinationSchedule::new(0.3)
}

fn default_expectation() -> f64 {
    DEFAULT_LATENCY_EXPECTATION
}

fn default_in_flight() -> usize {
    8
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| ExperimentError::Config(vec![format!("{}: {e}", path.as_ref().display())]))?;
        serde_json::from_str(&text).map_err(|e| ExperimentError::Config(vec![e.to_string()]))
    }

    /// Every configuration problem for `kind`, collected without touching
    /// the network.
    pub fn problems(&self, kind: ExperimentKind) -> Vec<String> {
        let mut out = Vec::new();
        if self.k_folds < 2 {
            out.push(format!("k_folds must be at least 2, got {}", self.k_folds));
        }
        if self.top_k == 0 {
            out.push("top_k must be at least 1".into());
        }
        if let Err(e) = self.tuning.options().validate() {
            out.push(e.to_string());
        }
        if let Err(e) = self.utterance_spec.validate() {
            out.push(e.to_string());
        }
        if !(0.0..=1.0).contains(&self.hallucination.rate) {
            out.push(format!(
                "hallucination rate must be in [0, 1], got {}",
                self.hallucination.rate
            ));
        }
        if self.max_in_flight == 0 {
            out.push("max_in_flight must be at least 1".into());
        }
        if self.latency_expectation.is_nan() || self.latency_expectation <= 0.0 {
            out.push("latency_expectation must be positive".into());
        }
        let encoders: Vec<&EncoderDescriptor> = match kind {
            ExperimentKind::Encoder => self.encoders.iter().collect(),
            _ => vec![&self.encoder],
        };
        if kind == ExperimentKind::Encoder {
            if self.encoders.len() < 2 {
                out.push(format!(
                    "encoder experiment needs at least 2 encoders, got {}",
                    self.encoders.len()
                ));
            }
            let mut names: Vec<&str> = self.encoders.iter().map(|e| e.name.as_str()).collect();
            names.sort();
            if names.windows(2).any(|w| w[0] == w[1]) {
                out.push("encoder names must be distinct".into());
            }
        }
        for e in encoders {
            if let Err(err) = e.validate() {
                out.push(format!("encoder {}: {err}", e.name));
            }
        }
        if matches!(kind, ExperimentKind::Comparison | ExperimentKind::Quantization) {
            if self.llm_endpoints.is_empty() {
                out.push(format!("{kind} experiment needs at least one entry in llm_endpoints"));
            }
            let mut labels: Vec<&str> = self.llm_endpoints.iter().map(|e| e.label.as_str()).collect();
            labels.sort();
            if labels.windows(2).any(|w| w[0] == w[1]) {
                out.push("llm_endpoints labels must be distinct".into());
            }
            for ep in &self.llm_endpoints {
                if ep.mock.is_none() && ep.endpoint.as_deref().is_none_or(|u| u.trim().is_empty()) {
                    out.push(format!("endpoint {} needs a URL or a mock section", ep.label));
                }
                if ep.model.trim().is_empty() {
                    out.push(format!("endpoint {} has an empty model", ep.label));
                }
            }
            if let Some(n) = self.baseline_samples {
                if n < MIN_LATENCY_SAMPLES {
                    out.push(format!(
                        "baseline_samples must be at least {MIN_LATENCY_SAMPLES}, got {n}"
                    ));
                }
            }
        }
        out
    }

    pub fn validate(&self, kind: ExperimentKind) -> Result<()> {
        let problems = self.problems(kind);
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ExperimentError::Config(problems))
        }
    }

    pub fn load_corpus(&self) -> Result<Corpus> {
        match &self.corpus {
            Some(path) => Ok(load_corpus_with_labels(path, &builtin_route_names())?),
            None => Ok(Corpus::shipped()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReports {
    pub train: EvaluationReport,
    pub test: EvaluationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub build_ms: f64,
    pub score_ms: f64,
    pub tune_ms: f64,
    pub total_ms: f64,
}

/// Pre/post-tuning k-fold reports for one (encoder, spec) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub experiment: ExperimentKind,
    pub encoder: String,
    pub spec: UtteranceSpec,
    pub utterances_per_route: usize,
    pub k_folds: usize,
    pub rng_seed: u64,
    pub tuning: TuningConfig,
    pub pre_tuning: SplitReports,
    pub post_tuning: SplitReports,
    /// Fitted thresholds per fold.
    pub thresholds: Vec<ThresholdSet>,
    pub timing: Timing,
}

impl ExperimentResult {
    pub fn pre_train(&self) -> f64 {
        self.pre_tuning.train.mean_fold_accuracy()
    }

    pub fn pre_test(&self) -> f64 {
        self.pre_tuning.test.mean_fold_accuracy()
    }

    pub fn post_train(&self) -> f64 {
        self.post_tuning.train.mean_fold_accuracy()
    }

    pub fn post_test(&self) -> f64 {
        self.post_tuning.test.mean_fold_accuracy()
    }

    /// Post-tuning train accuracy is at least the pre-tuning one in every fold.
    pub fn tuning_non_regressive(&self) -> bool {
        self.post_tuning
            .train
            .per_fold
            .iter()
            .zip(&self.pre_tuning.train.per_fold)
            .all(|(post, pre)| post >= pre)
    }

    /// Same result with timings zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        r.timing = Timing {
            build_ms: 0.0,
            score_ms: 0.0,
            tune_ms: 0.0,
            total_ms: 0.0,
        };
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineSummary {
    pub model: String,
    pub samples: usize,
    pub accuracy: f64,
    pub hallucinations: usize,
    pub failures: usize,
    pub injected: usize,
}

impl From<&BaselineRun> for BaselineSummary {
    fn from(run: &BaselineRun) -> Self {
        Self {
            model: run.model.clone(),
            samples: run.samples.len(),
            accuracy: run.accuracy,
            hallucinations: run.hallucinations,
            failures: run.failures,
            injected: run.injected,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EndpointComparison {
    pub label: String,
    pub baseline_clean: BaselineSummary,
    pub baseline_injected: BaselineSummary,
    pub latency: LatencyComparison,
}

/// Router against the prompting baseline on the same held-out prompts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub samples: usize,
    /// Post-tuning out-of-fold router accuracy on the compared prompts. The
    /// router is deterministic, so it is the same with and without injection.
    pub router_accuracy: f64,
    pub hallucination: HallucinationSchedule,
    pub endpoints: Vec<EndpointComparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentOutput {
    pub experiment: ExperimentKind,
    pub config: ExperimentConfig,
    pub results: Vec<ExperimentResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison: Option<ComparisonReport>,
}

impl ExperimentOutput {
    pub fn all_non_regressive(&self) -> bool {
        self.results.iter().all(ExperimentResult::tuning_non_regressive)
    }
}

struct FoldOutcome {
    pre_train: EvaluationReport,
    pre_test: EvaluationReport,
    post_train: EvaluationReport,
    post_test: EvaluationReport,
    fitted: Vec<f64>,
}

/// Corpus seeds with their global fold, shared by every cell of a run so
/// that partitions are identical across specs.
struct Harness<'a> {
    config: &'a ExperimentConfig,
    corpus: &'a Corpus,
    seeds: Vec<LabeledPrompt>,
}

struct CellOutput {
    result: ExperimentResult,
    eval: Vec<LabeledPrompt>,
    /// Post-tuning out-of-fold prediction per eval prompt.
    predictions: Vec<String>,
    router: Router,
}

impl<'a> Harness<'a> {
    fn new(config: &'a ExperimentConfig, corpus: &'a Corpus) -> Result<Self> {
        let mut seeds = corpus.seeds();
        let folds = assign_folds(&seeds, config.k_folds, config.rng_seed)?;
        for (p, f) in seeds.iter_mut().zip(folds) {
            p.fold = Some(f);
        }
        Ok(Self { config, corpus, seeds })
    }

    fn check_specs(&self, specs: &[UtteranceSpec]) -> Result<()> {
        for &spec in specs {
            compose_routes(self.corpus, spec, &builtin_routes(), self.config.rng_seed)?;
        }
        Ok(())
    }

    fn run_cell(&self, kind: ExperimentKind, encoder: &EncoderDescriptor, spec: UtteranceSpec) -> Result<CellOutput> {
        let cfg = self.config;
        let k = cfg.k_folds;
        let start = Instant::now();
        let (routes, consumed) = compose_routes(self.corpus, spec, &builtin_routes(), cfg.rng_seed)?;
        let router = build_router(routes, encoder, cfg.top_k)?;
        let build_ms = ms(start.elapsed());

        let eval: Vec<LabeledPrompt> = self
            .seeds
            .iter()
            .filter(|p| !p.source_id.as_ref().is_some_and(|id| consumed.contains(id)))
            .cloned()
            .collect();
        let folds: Vec<usize> = eval.iter().map(|p| p.fold.unwrap_or(0)).collect();
        for f in 0..k {
            let test = folds.iter().filter(|&&x| x == f).count();
            if test == 0 || test == eval.len() {
                return Err(TuningError::InsufficientSamples {
                    label: format!("fold {f}"),
                    needed: 1,
                    available: test.min(eval.len() - test),
                }
                .into());
            }
        }

        let t = Instant::now();
        let scores = score_matrix(&router, &eval)?;
        let truth = label_indices(&router, &eval)?;
        let score_ms = ms(t.elapsed());

        let labels = report_labels(&router);
        let defaults = vec![DEFAULT_THRESHOLD; router.routes().len()];
        let opts = cfg.tuning.options();
        let t = Instant::now();
        let fold_ids: Vec<usize> = (0..k).collect();
        let per_fold = parallel_map(&fold_ids, cfg.max_in_flight.min(k), |_, &f| -> Result<_> {
            let pick = |test: bool| -> (Vec<Vec<f64>>, Vec<Option<usize>>) {
                folds
                    .iter()
                    .enumerate()
                    .filter(|(_, &x)| (x == f) == test)
                    .map(|(i, _)| (scores[i].clone(), truth[i]))
                    .unzip()
            };
            let (train_s, train_t) = pick(false);
            let (test_s, test_t) = pick(true);
            let fitted = if cfg.tuning.enabled {
                fit_thresholds_from_scores(&train_s, &train_t, &defaults, opts)?
            } else {
                defaults.clone()
            };
            Ok(FoldOutcome {
                pre_train: report_from_scores(labels.clone(), &train_s, &train_t, &defaults),
                pre_test: report_from_scores(labels.clone(), &test_s, &test_t, &defaults),
                post_train: report_from_scores(labels.clone(), &train_s, &train_t, &fitted),
                post_test: report_from_scores(labels.clone(), &test_s, &test_t, &fitted),
                fitted,
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let tune_ms = ms(t.elapsed());

        let mut predictions = vec![String::new(); eval.len()];
        for (i, &f) in folds.iter().enumerate() {
            let fitted = &per_fold[f].fitted;
            predictions[i] = crate::router::select_route(&scores[i], fitted)
                .map_or_else(|| NONE_LABEL.to_string(), |r| labels[r].clone());
        }

        let pool = |pick: fn(&FoldOutcome) -> &EvaluationReport| {
            let reports: Vec<EvaluationReport> = per_fold.iter().map(|x| pick(x).clone()).collect();
            EvaluationReport::pool(&reports).expect("folds share labels")
        };
        let names = router.route_names();
        let result = ExperimentResult {
            experiment: kind,
            encoder: encoder.name.clone(),
            spec,
            utterances_per_route: spec.total(),
            k_folds: k,
            rng_seed: cfg.rng_seed,
            tuning: cfg.tuning.clone(),
            pre_tuning: SplitReports {
                train: pool(|x| &x.pre_train),
                test: pool(|x| &x.pre_test),
            },
            post_tuning: SplitReports {
                train: pool(|x| &x.post_train),
                test: pool(|x| &x.post_test),
            },
            thresholds: per_fold
                .iter()
                .map(|x| ThresholdSet(names.iter().cloned().zip(x.fitted.iter().copied()).collect()))
                .collect(),
            timing: Timing {
                build_ms,
                score_ms,
                tune_ms,
                total_ms: ms(start.elapsed()),
            },
        };
        Ok(CellOutput {
            result,
            eval,
            predictions,
            router,
        })
    }

    fn run_specs(
        &self,
        kind: ExperimentKind,
        encoder: &EncoderDescriptor,
        specs: &[UtteranceSpec],
    ) -> Result<Vec<ExperimentResult>> {
        self.check_specs(specs)?;
        specs
            .iter()
            .map(|&spec| {
                log::info!("{kind}: encoder {} spec {spec}", encoder.name);
                self.run_cell(kind, encoder, spec).map(|c| c.result)
            })
            .collect()
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn prepare<'a>(config: &'a ExperimentConfig, corpus: &'a Corpus, kind: ExperimentKind) -> Result<Harness<'a>> {
    config.validate(kind)?;
    Harness::new(config, corpus)
}

/// Specs (0,0,0), (5,5,5), (10,10,10), (15,15,15) with the configured encoder.
pub fn run_utterance_experiment(config: &ExperimentConfig, corpus: &Corpus) -> Result<Vec<ExperimentResult>> {
    let h = prepare(config, corpus, ExperimentKind::Utterance)?;
    h.run_specs(ExperimentKind::Utterance, &config.encoder, &UTTERANCE_SPECS)
}

/// Specs (5,0,0), (5,5,0), (5,0,5), (5,5,5) with the configured encoder.
pub fn run_diversity_experiment(config: &ExperimentConfig, corpus: &Corpus) -> Result<Vec<ExperimentResult>> {
    let h = prepare(config, corpus, ExperimentKind::Diversity)?;
    h.run_specs(ExperimentKind::Diversity, &config.encoder, &DIVERSITY_SPECS)
}

/// The utterance experiment repeated for every entry of `encoders`.
pub fn run_encoder_experiment(config: &ExperimentConfig, corpus: &Corpus) -> Result<Vec<ExperimentResult>> {
    let h = prepare(config, corpus, ExperimentKind::Encoder)?;
    h.check_specs(&UTTERANCE_SPECS)?;
    let mut out = Vec::new();
    for encoder in &config.encoders {
        out.extend(h.run_specs(ExperimentKind::Encoder, encoder, &UTTERANCE_SPECS)?);
    }
    Ok(out)
}

/// Held-out prompts interleaved across labels, capped at `limit`.
fn interleave(
    eval: &[LabeledPrompt],
    predictions: &[String],
    limit: Option<usize>,
) -> (Vec<LabeledPrompt>, Vec<String>) {
    let mut by_label: Vec<(String, Vec<usize>)> = Vec::new();
    for (i, p) in eval.iter().enumerate() {
        match by_label.iter_mut().find(|(l, _)| *l == p.label) {
            Some((_, v)) => v.push(i),
            None => by_label.push((p.label.clone(), vec![i])),
        }
    }
    let longest = by_label.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
    let order: Vec<usize> = (0..longest)
        .flat_map(|j| by_label.iter().filter_map(move |(_, v)| v.get(j).copied()))
        .take(limit.unwrap_or(usize::MAX))
        .collect();
    (
        order.iter().map(|&i| eval[i].clone()).collect(),
        order.iter().map(|&i| predictions[i].clone()).collect(),
    )
}

enum Client {
    Remote(ChatClient),
    /// The server stays alive as long as the client.
    Mock {
        client: ChatClient,
        _server: MockChatServer,
    },
}

impl Client {
    fn model(&self) -> &dyn ChatModel {
        match self {
            Client::Remote(c) | Client::Mock { client: c, .. } => c,
        }
    }
}

fn connect(ep: &EndpointConfig, corpus: &Corpus) -> Result<Client> {
    match (&ep.mock, &ep.endpoint) {
        (Some(mock), _) => {
            let key: HashMap<String, String> = corpus
                .prompts
                .iter()
                .map(|p| (p.text.clone(), p.label.clone()))
                .collect();
            let server = MockChatServer::with_answer_key(Duration::from_millis(mock.delay_ms), key, NONE_LABEL, None)?;
            let client = ChatClient::with_key(
                ChatClientConfig {
                    endpoint: server.url().to_string(),
                    model: ep.model.clone(),
                    timeout_ms: ep.timeout_ms,
                    temperature: 0.0,
                },
                None,
            )?;
            Ok(Client::Mock {
                client,
                _server: server,
            })
        }
        (None, Some(url)) => Ok(Client::Remote(ChatClient::new(ChatClientConfig {
            endpoint: url.clone(),
            model: ep.model.clone(),
            timeout_ms: ep.timeout_ms,
            temperature: 0.0,
        })?)),
        (None, None) => Err(ExperimentError::Config(vec![format!(
            "endpoint {} needs a URL or a mock section",
            ep.label
        )])),
    }
}

fn compare(
    config: &ExperimentConfig,
    corpus: &Corpus,
    kind: ExperimentKind,
    endpoints: &[EndpointConfig],
) -> Result<ExperimentOutput> {
    let h = prepare(config, corpus, kind)?;
    h.check_specs(&[config.utterance_spec])?;
    let cell = h.run_cell(kind, &config.encoder, config.utterance_spec)?;
    let (samples, predictions) = interleave(&cell.eval, &cell.predictions, config.baseline_samples);
    if samples.len() < MIN_LATENCY_SAMPLES {
        return Err(TuningError::InsufficientSamples {
            label: "held-out prompts".into(),
            needed: MIN_LATENCY_SAMPLES,
            available: samples.len(),
        }
        .into());
    }
    let router_correct = samples.iter().zip(&predictions).filter(|(s, p)| s.label == **p).count();
    let labels = cell.router.route_names();

    let mut compared = Vec::new();
    for ep in endpoints {
        let client = connect(ep, corpus)?;
        log::info!("{kind}: querying endpoint {} with {} prompts", ep.label, samples.len());
        let clean = run_baseline(client.model(), &samples, &labels, None, config.max_in_flight);
        let injected = inject_hallucinations(&clean, &labels, &config.hallucination);
        let latency = compare_latency_with_run(&cell.router, &clean, &samples, config.latency_expectation)?;
        compared.push(EndpointComparison {
            label: ep.label.clone(),
            baseline_clean: (&clean).into(),
            baseline_injected: (&injected).into(),
            latency,
        });
    }
    Ok(ExperimentOutput {
        experiment: kind,
        config: config.clone(),
        results: vec![cell.result],
        comparison: Some(ComparisonReport {
            samples: samples.len(),
            router_accuracy: router_correct as f64 / samples.len() as f64,
            hallucination: config.hallucination.clone(),
            endpoints: compared,
        }),
    })
}

/// Router vs. prompting baseline on the first configured endpoint, clean and
/// with hallucination injection, plus latency.
pub fn run_comparison_experiment(config: &ExperimentConfig, corpus: &Corpus) -> Result<ExperimentOutput> {
    let first: Vec<EndpointConfig> = config.llm_endpoints.iter().take(1).cloned().collect();
    compare(config, corpus, ExperimentKind::Comparison, &first)
}

/// The comparison repeated for every configured endpoint.
pub fn run_quantization_sweep(config: &ExperimentConfig, corpus: &Corpus) -> Result<ExperimentOutput> {
    compare(config, corpus, ExperimentKind::Quantization, &config.llm_endpoints)
}

/// Runs `kind` with the corpus named by the config.
pub fn run_experiment(kind: ExperimentKind, config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate(kind)?;
    if kind == ExperimentKind::Encoder && config.encoders.iter().any(|e| e.kind == EncoderKind::Remote) {
        log::info!("encoder experiment uses remote encoders");
    }
    let corpus = config.load_corpus()?;
    let results = match kind {
        ExperimentKind::Utterance => run_utterance_experiment(config, &corpus)?,
        ExperimentKind::Diversity => run_diversity_experiment(config, &corpus)?,
        ExperimentKind::Encoder => run_encoder_experiment(config, &corpus)?,
        ExperimentKind::Comparison => return run_comparison_experiment(config, &corpus),
        ExperimentKind::Quantization => return run_quantization_sweep(config, &corpus),
    };
    Ok(ExperimentOutput {
        experiment: kind,
        config: config.clone(),
        results,
        comparison: None,
    })
}

fn pct(x: f64) -> String {
    format!("{:.1}", x * 100.0)
}

/// CSV rendering: one row per cell, or one row per endpoint for the
/// comparison experiments.
pub fn render_csv(out: &ExperimentOutput) -> String {
    let mut s = String::new();
    match &out.comparison {
        None => {
            s.push_str("experiment,encoder,a,b,c,utterances_per_route,pre_train,pre_test,post_train,post_test\n");
            for r in &out.results {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6}",
                    r.experiment,
                    r.encoder,
                    r.spec.a,
                    r.spec.b,
                    r.spec.c,
                    r.utterances_per_route,
                    r.pre_train(),
                    r.pre_test(),
                    r.post_train(),
                    r.post_test()
                );
            }
        }
        Some(c) => {
            s.push_str("endpoint,model,samples,router_accuracy,baseline_clean,baseline_injected,hallucinations_injected,router_median_us,llm_median_us,ratio\n");
            for e in &c.endpoints {
                let _ = writeln!(
                    s,
                    "{},{},{},{:.6},{:.6},{:.6},{},{:.1},{:.1},{:.1}",
                    e.label,
                    e.baseline_clean.model,
                    c.samples,
                    c.router_accuracy,
                    e.baseline_clean.accuracy,
                    e.baseline_injected.accuracy,
                    e.baseline_injected.hallucinations,
                    e.latency.router.median_us,
                    e.latency.llm.median_us,
                    e.latency.ratio
                );
            }
        }
    }
    s
}

/// Plain-text table of accuracies in percent.
pub fn render_text(out: &ExperimentOutput) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "experiment: {}  (k = {}, seed = {})",
        out.experiment, out.config.k_folds, out.config.rng_seed
    );
    let _ = writeln!(
        s,
        "{:<14} {:<12} {:>5} {:>10} {:>9} {:>11} {:>10}",
        "encoder", "spec", "utt", "pre-train", "pre-test", "post-train", "post-test"
    );
    for r in &out.results {
        let _ = writeln!(
            s,
            "{:<14} {:<12} {:>5} {:>10} {:>9} {:>11} {:>10}",
            r.encoder,
            r.spec.to_string(),
            r.utterances_per_route,
            pct(r.pre_train()),
            pct(r.pre_test()),
            pct(r.post_train()),
            pct(r.post_test())
        );
    }
    if let Some(c) = &out.comparison {
        let _ = writeln!(
            s,
            "\nrouter accuracy on {} held-out prompts: {}%  (injection rate {})",
            c.samples,
            pct(c.router_accuracy),
            c.hallucination.rate
        );
        let _ = writeln!(
            s,
            "{:<14} {:>8} {:>10} {:>13} {:>11} {:>9}",
            "endpoint", "clean", "injected", "router p50us", "llm p50us", "ratio"
        );
        for e in &c.endpoints {
            let _ = writeln!(
                s,
                "{:<14} {:>8} {:>10} {:>13.1} {:>11.1} {:>9.1}",
                e.label,
                pct(e.baseline_clean.accuracy),
                pct(e.baseline_injected.accuracy),
                e.latency.router.median_us,
                e.latency.llm.median_us,
                e.latency.ratio
            );
        }
    }
    s
}

/// Writes `<experiment>.json`, `.csv` and `.txt` into `dir`.
pub fn write_reports(out: &ExperimentOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let stem = out.experiment.as_str();
    let files = [
        (dir.join(format!("{stem}.json")), serde_json::to_string_pretty(out)?),
        (dir.join(format!("{stem}.csv")), render_csv(out)),
        (dir.join(format!("{stem}.txt")), render_text(out)),
    ];
    let mut written = Vec::new();
    for (path, body) in files {
        std::fs::write(&path, body)?;
        written.push(path);
    }
    Ok(written)
}
