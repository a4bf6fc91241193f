//! Threshold fitting, k-fold splitting and confusion-matrix evaluation.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::corpus::LabeledPrompt;
use crate::router::{meets_threshold, select_route, Router, RouterError, DEFAULT_THRESHOLD};
use crate::NONE_LABEL;

/// Default spacing of the threshold grid.
pub const DEFAULT_GRID_STEP: f64 = 0.01;

/// Default cap on coordinate-ascent passes.
pub const DEFAULT_MAX_PASSES: usize = 20;

#[derive(Debug, Error)]
pub enum TuningError {
    #[error("k must be at least 2, got {0}")]
    InvalidK(usize),
    #[error("label {label} has {available} samples, fewer than k = {needed}")]
    InsufficientSamples {
        label: String,
        needed: usize,
        available: usize,
    },
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error("grid step must be in (0, 0.25], got {0}")]
    InvalidGridStep(f64),
    #[error("max_passes must be at least 1")]
    InvalidMaxPasses,
    #[error("sample {index}: label {label} is not a route of this router")]
    UnknownLabel { index: usize, label: String },
    #[error("sample {index}: {source}")]
    Routing {
        index: usize,
        #[source]
        source: RouterError,
    },
    #[error("score matrix is inconsistent: {0}")]
    Shape(String),
}

pub type Result<T> = std::result::Result<T, TuningError>;

/// Route name to threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ThresholdSet(pub BTreeMap<String, f64>);

impl ThresholdSet {
    pub fn from_router(router: &Router) -> Self {
        Self(router.route_names().into_iter().zip(router.thresholds()).collect())
    }

    pub fn get(&self, route: &str) -> Option<f64> {
        self.0.get(route).copied()
    }

    pub fn as_map(&self) -> &BTreeMap<String, f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Applies the thresholds to a copy of `router`.
    pub fn apply(&self, router: &Router) -> std::result::Result<Router, RouterError> {
        router.with_thresholds(&self.0)
    }
}

/// Accuracy and confusion matrix; rows are true labels, columns predictions.
/// `labels` lists the routes in declaration order followed by `NONE`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub accuracy: f64,
    pub n_samples: usize,
    pub labels: Vec<String>,
    pub confusion: Vec<Vec<u64>>,
    pub per_fold: Vec<f64>,
}

impl EvaluationReport {
    /// Builds a report from label indices into `labels`.
    pub fn from_predictions(labels: Vec<String>, truth: &[usize], predicted: &[usize]) -> Self {
        let n = labels.len();
        let mut confusion = vec![vec![0u64; n]; n];
        for (&t, &p) in truth.iter().zip(predicted) {
            confusion[t][p] += 1;
        }
        let n_samples = truth.len();
        let accuracy = trace_accuracy(&confusion, n_samples);
        Self {
            accuracy,
            n_samples,
            labels,
            confusion,
            per_fold: vec![accuracy],
        }
    }

    /// Pools several reports over the same labels: confusion matrices are
    /// summed and each report's accuracy becomes one `per_fold` entry.
    pub fn pool(reports: &[EvaluationReport]) -> Option<Self> {
        let first = reports.first()?;
        let n = first.labels.len();
        let mut confusion = vec![vec![0u64; n]; n];
        let mut n_samples = 0;
        for r in reports {
            if r.labels != first.labels {
                return None;
            }
            for (row, src) in confusion.iter_mut().zip(&r.confusion) {
                for (c, s) in row.iter_mut().zip(src) {
                    *c += s;
                }
            }
            n_samples += r.n_samples;
        }
        Some(Self {
            accuracy: trace_accuracy(&confusion, n_samples),
            n_samples,
            labels: first.labels.clone(),
            confusion,
            per_fold: reports.iter().map(|r| r.accuracy).collect(),
        })
    }

    pub fn mean_fold_accuracy(&self) -> f64 {
        if self.per_fold.is_empty() {
            return self.accuracy;
        }
        self.per_fold.iter().sum::<f64>() / self.per_fold.len() as f64
    }

    pub fn correct(&self) -> u64 {
        (0..self.confusion.len()).map(|i| self.confusion[i][i]).sum()
    }
}

fn trace_accuracy(confusion: &[Vec<u64>], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let trace: u64 = (0..confusion.len()).map(|i| confusion[i][i]).sum();
    trace as f64 / n as f64
}

/// Fold index for every sample. Each label's samples are shuffled with one
/// ChaCha8 stream seeded by `seed` (labels taken in sorted order) and dealt
/// round-robin, the dealing offset carrying over from one label to the next.
pub fn assign_folds(corpus: &[LabeledPrompt], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(TuningError::InvalidK(k));
    }
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, p) in corpus.iter().enumerate() {
        groups.entry(p.label.as_str()).or_default().push(i);
    }
    for (label, members) in &groups {
        if members.len() < k {
            return Err(TuningError::InsufficientSamples {
                label: label.to_string(),
                needed: k,
                available: members.len(),
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0; corpus.len()];
    let mut offset = 0;
    for members in groups.values_mut() {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            folds[i] = offset % k;
            offset += 1;
        }
    }
    Ok(folds)
}

/// Stratified k-fold partition; returned prompts carry their fold index.
pub fn kfold_split(corpus: &[LabeledPrompt], k: usize, seed: u64) -> Result<Vec<Vec<LabeledPrompt>>> {
    let folds = assign_folds(corpus, k, seed)?;
    let mut out = vec![Vec::new(); k];
    for (p, f) in corpus.iter().zip(folds) {
        let mut p = p.clone();
        p.fold = Some(f);
        out[f].push(p);
    }
    Ok(out)
}

/// Label indices in the router's column space: routes in order, then NONE.
pub fn label_indices(router: &Router, prompts: &[LabeledPrompt]) -> Result<Vec<Option<usize>>> {
    prompts
        .iter()
        .enumerate()
        .map(|(index, p)| {
            if p.label == NONE_LABEL {
                Ok(None)
            } else {
                router
                    .route_index(&p.label)
                    .map(Some)
                    .ok_or_else(|| TuningError::UnknownLabel {
                        index,
                        label: p.label.clone(),
                    })
            }
        })
        .collect()
}

/// Aggregate per-route scores for every prompt, embedding in one batch.
pub fn score_matrix(router: &Router, prompts: &[LabeledPrompt]) -> Result<Vec<Vec<f64>>> {
    for (index, p) in prompts.iter().enumerate() {
        if p.text.trim().is_empty() {
            return Err(TuningError::Routing {
                index,
                source: RouterError::EmptyInput,
            });
        }
    }
    let texts: Vec<String> = prompts.iter().map(|p| p.text.clone()).collect();
    let vectors = match router.encoder().encode_batch(&texts) {
        Ok(v) => v,
        Err(_) => {
            // locate the failing sample
            let mut out = Vec::with_capacity(prompts.len());
            for (index, text) in texts.iter().enumerate() {
                out.push(
                    router
                        .embed(text)
                        .map_err(|source| TuningError::Routing { index, source })?,
                );
            }
            out
        }
    };
    vectors
        .iter()
        .enumerate()
        .map(|(index, v)| {
            router
                .score_vector(v)
                .map_err(|source| TuningError::Routing { index, source })
        })
        .collect()
}

/// Column labels of a report for `router`: its routes, then NONE.
pub fn report_labels(router: &Router) -> Vec<String> {
    let mut labels = router.route_names();
    labels.push(NONE_LABEL.to_string());
    labels
}

/// Routes every prompt of `test_set` and tallies the confusion matrix.
pub fn evaluate(router: &Router, test_set: &[LabeledPrompt]) -> Result<EvaluationReport> {
    if test_set.is_empty() {
        return Err(TuningError::EmptyTestSet);
    }
    let truth = label_indices(router, test_set)?;
    let scores = score_matrix(router, test_set)?;
    Ok(report_from_scores(
        report_labels(router),
        &scores,
        &truth,
        &router.thresholds(),
    ))
}

/// Report from precomputed score rows under `thresholds`.
pub fn report_from_scores(
    labels: Vec<String>,
    scores: &[Vec<f64>],
    truth: &[Option<usize>],
    thresholds: &[f64],
) -> EvaluationReport {
    let none = labels.len() - 1;
    let truth: Vec<usize> = truth.iter().map(|t| t.unwrap_or(none)).collect();
    let predicted: Vec<usize> = scores
        .iter()
        .map(|s| select_route(s, thresholds).unwrap_or(none))
        .collect();
    EvaluationReport::from_predictions(labels, &truth, &predicted)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningOptions {
    pub grid_step: f64,
    pub max_passes: usize,
}

impl Default for TuningOptions {
    fn default() -> Self {
        Self {
            grid_step: DEFAULT_GRID_STEP,
            max_passes: DEFAULT_MAX_PASSES,
        }
    }
}

impl TuningOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.grid_step > 0.0 && self.grid_step <= 0.25) {
            return Err(TuningError::InvalidGridStep(self.grid_step));
        }
        if self.max_passes == 0 {
            return Err(TuningError::InvalidMaxPasses);
        }
        Ok(())
    }
}

/// Number of samples whose selected route equals the label (`None` = NONE).
pub fn correct_count(scores: &[Vec<f64>], labels: &[Option<usize>], thresholds: &[f64]) -> usize {
    scores
        .iter()
        .zip(labels)
        .filter(|(s, l)| select_route(s, thresholds) == **l)
        .count()
}

/// Grid `{0, step, 2·step, …}` capped at 1, plus 1 itself.
pub fn threshold_grid(step: f64) -> Vec<f64> {
    let n = (1.0 / step).floor() as usize;
    let mut grid: Vec<f64> = (0..=n).map(|i| (i as f64 * step).min(1.0)).collect();
    if *grid.last().unwrap_or(&0.0) < 1.0 {
        grid.push(1.0);
    }
    grid
}

/// Candidate thresholds for one route: the grid plus midpoints between
/// consecutive distinct observed scores, sorted ascending without duplicates.
pub fn candidate_thresholds(observed: &[f64], step: f64) -> Vec<f64> {
    let mut distinct = observed.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut out = threshold_grid(step);
    out.extend(distinct.windows(2).map(|w| (w[0] + w[1]) / 2.0));
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

/// Route picked for one sample when route `r`'s qualification is forced to
/// `r_in` and route `q`'s to `q_in`; other routes use `thresholds`.
fn select_forced(s: &[f64], thresholds: &[f64], forced: &[(usize, bool)]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, (&score, &t)) in s.iter().zip(thresholds).enumerate() {
        let qualifies = match forced.iter().find(|(r, _)| *r == i) {
            Some(&(_, q)) => q,
            None => meets_threshold(score, t),
        };
        if qualifies && best.is_none_or(|b| score > s[b]) {
            best = Some(i);
        }
    }
    best
}

/// Number of candidates `t` with `t <= score`, i.e. under which the route qualifies.
fn qualifying_prefix(candidates: &[f64], score: f64) -> usize {
    candidates.partition_point(|&t| meets_threshold(score, t))
}

/// Correct counts for every candidate of route `r`, others held fixed.
fn sweep_single(
    scores: &[Vec<f64>],
    labels: &[Option<usize>],
    thresholds: &[f64],
    r: usize,
    candidates: &[f64],
) -> Vec<i64> {
    let c = candidates.len();
    let mut diff = vec![0i64; c + 1];
    for (s, l) in scores.iter().zip(labels) {
        let hit_in = (select_forced(s, thresholds, &[(r, true)]) == *l) as i64;
        let hit_out = (select_forced(s, thresholds, &[(r, false)]) == *l) as i64;
        let idx = qualifying_prefix(candidates, s[r]);
        diff[0] += hit_in;
        diff[idx] += hit_out - hit_in;
    }
    let mut acc = 0;
    diff[..c]
        .iter()
        .map(|d| {
            acc += d;
            acc
        })
        .collect()
}

/// Correct counts for every candidate pair of routes `r < q`, others fixed.
/// Entry `[i * cq.len() + j]` holds the count for `(cr[i], cq[j])`.
fn sweep_pair(
    scores: &[Vec<f64>],
    labels: &[Option<usize>],
    thresholds: &[f64],
    (r, q): (usize, usize),
    (cr, cq): (&[f64], &[f64]),
) -> Vec<i64> {
    let (nr, nq) = (cr.len(), cq.len());
    let mut base = 0i64;
    let mut rows = vec![0i64; nr + 1];
    let mut cols = vec![0i64; nq + 1];
    let mut corner = vec![0i64; nr * nq];
    for (s, l) in scores.iter().zip(labels) {
        let hit = |a: bool, b: bool| (select_forced(s, thresholds, &[(r, a), (q, b)]) == *l) as i64;
        let (tt, tf, ft, ff) = (hit(true, true), hit(true, false), hit(false, true), hit(false, false));
        let ir = qualifying_prefix(cr, s[r]);
        let iq = qualifying_prefix(cq, s[q]);
        base += ff;
        rows[0] += tf - ff;
        rows[ir] -= tf - ff;
        cols[0] += ft - ff;
        cols[iq] -= ft - ff;
        if ir > 0 && iq > 0 {
            corner[(ir - 1) * nq + (iq - 1)] += tt - tf - ft + ff;
        }
    }
    // suffix sums turn corner marks into prefix rectangles
    for i in (0..nr).rev() {
        for j in (0..nq).rev() {
            let mut v = corner[i * nq + j];
            if i + 1 < nr {
                v += corner[(i + 1) * nq + j];
            }
            if j + 1 < nq {
                v += corner[i * nq + j + 1];
            }
            if i + 1 < nr && j + 1 < nq {
                v -= corner[(i + 1) * nq + j + 1];
            }
            corner[i * nq + j] = v;
        }
    }
    let prefix = |d: &[i64], n: usize| {
        let mut acc = 0;
        d[..n]
            .iter()
            .map(|x| {
                acc += x;
                acc
            })
            .collect::<Vec<i64>>()
    };
    let row_add = prefix(&rows, nr);
    let col_add = prefix(&cols, nq);
    let mut out = corner;
    for i in 0..nr {
        for j in 0..nq {
            out[i * nq + j] += base + row_add[i] + col_add[j];
        }
    }
    out
}

/// Coordinate ascent over precomputed scores. `scores[i][r]` is route `r`'s
/// aggregate score for sample `i`, `labels[i]` its route index or `None`.
///
/// Each pass sweeps every route's candidates in declaration order, keeping
/// the best training accuracy (ties to the smaller threshold). When a pass of
/// single-route sweeps changes nothing, pairs of routes are searched jointly
/// and a pair move is taken only if it strictly improves accuracy.
pub fn fit_thresholds_from_scores(
    scores: &[Vec<f64>],
    labels: &[Option<usize>],
    start: &[f64],
    opts: TuningOptions,
) -> Result<Vec<f64>> {
    opts.validate()?;
    if scores.is_empty() {
        return Err(TuningError::EmptyTrainSet);
    }
    if scores.len() != labels.len() {
        return Err(TuningError::Shape(format!(
            "{} score rows, {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let n_routes = start.len();
    if let Some(row) = scores.iter().find(|r| r.len() != n_routes) {
        return Err(TuningError::Shape(format!(
            "row of width {} for {} routes",
            row.len(),
            n_routes
        )));
    }
    if let Some(l) = labels.iter().flatten().find(|&&l| l >= n_routes) {
        return Err(TuningError::Shape(format!("label index {l} out of range")));
    }

    let candidates: Vec<Vec<f64>> = (0..n_routes)
        .map(|r| {
            let observed: Vec<f64> = scores.iter().map(|s| s[r]).collect();
            let mut c = candidate_thresholds(&observed, opts.grid_step);
            c.push(start[r]);
            c.sort_by(f64::total_cmp);
            c.dedup();
            c
        })
        .collect();

    let mut thresholds = start.to_vec();
    let mut best = correct_count(scores, labels, &thresholds) as i64;
    for _ in 0..opts.max_passes {
        let mut changed = false;
        for r in 0..n_routes {
            let counts = sweep_single(scores, labels, &thresholds, r, &candidates[r]);
            let mut pick = (best, thresholds[r]);
            for (&t, &c) in candidates[r].iter().zip(&counts) {
                if c > pick.0 || (c == pick.0 && t < pick.1) {
                    pick = (c, t);
                }
            }
            if pick.1 != thresholds[r] {
                thresholds[r] = pick.1;
                best = pick.0;
                changed = true;
            }
        }
        if !changed {
            for r in 0..n_routes {
                for q in r + 1..n_routes {
                    let (cr, cq) = (&candidates[r], &candidates[q]);
                    let counts = sweep_pair(scores, labels, &thresholds, (r, q), (cr, cq));
                    let mut pick: Option<(i64, usize)> = None;
                    for (k, &c) in counts.iter().enumerate() {
                        if c > best && pick.is_none_or(|(pc, _)| c > pc) {
                            pick = Some((c, k));
                        }
                    }
                    if let Some((c, k)) = pick {
                        thresholds[r] = cr[k / cq.len()];
                        thresholds[q] = cq[k % cq.len()];
                        best = c;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    Ok(thresholds)
}

/// Fits per-route thresholds on `train_set`, starting from 0.5 everywhere.
pub fn fit_thresholds(router: &Router, train_set: &[LabeledPrompt], opts: TuningOptions) -> Result<ThresholdSet> {
    opts.validate()?;
    if train_set.is_empty() {
        return Err(TuningError::EmptyTrainSet);
    }
    let labels = label_indices(router, train_set)?;
    let scores = score_matrix(router, train_set)?;
    let start = vec![DEFAULT_THRESHOLD; router.routes().len()];
    let fitted = fit_thresholds_from_scores(&scores, &labels, &start, opts)?;
    Ok(ThresholdSet(router.route_names().into_iter().zip(fitted).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{builtin_routes, Variant, DEPLOYMENT, REPORT_REQUEST};
    use crate::embedding::EncoderDescriptor;
    use crate::router::build_router;
    use proptest::prelude::*;

    fn prompts(labels: &[&str], per: usize) -> Vec<LabeledPrompt> {
        labels
            .iter()
            .flat_map(|l| (0..per).map(move |i| LabeledPrompt::new(format!("{l} sample {i}"), *l, Variant::Seed)))
            .collect()
    }

    #[test]
    fn kfold_balanced_corpus_gives_equal_stratified_folds() {
        let labels = ["a", "b", "c", "d", "e", "f"];
        let corpus = prompts(&labels, 30);
        let folds = kfold_split(&corpus, 5, 11).unwrap();
        assert_eq!(folds.len(), 5);
        for (f, fold) in folds.iter().enumerate() {
            assert_eq!(fold.len(), 36);
            for l in labels {
                assert_eq!(fold.iter().filter(|p| p.label == l).count(), 6);
            }
            assert!(fold.iter().all(|p| p.fold == Some(f)));
        }
        assert_eq!(folds, kfold_split(&corpus, 5, 11).unwrap());
    }

    #[test]
    fn kfold_rejects_bad_k_and_small_labels() {
        let corpus = prompts(&["a", "b"], 3);
        assert!(matches!(kfold_split(&corpus, 1, 0), Err(TuningError::InvalidK(1))));
        assert!(matches!(
            kfold_split(&corpus, 4, 0),
            Err(TuningError::InsufficientSamples {
                needed: 4,
                available: 3,
                ..
            })
        ));
    }

    fn reference_router() -> Router {
        build_router(builtin_routes(), &EncoderDescriptor::reference("ref", 512), 5).unwrap()
    }

    #[test]
    fn base_utterances_evaluate_perfectly() {
        let router = reference_router();
        let test: Vec<LabeledPrompt> = router
            .routes()
            .iter()
            .map(|r| LabeledPrompt::new(r.utterances[0].clone(), r.name.clone(), Variant::Base))
            .collect();
        let report = evaluate(&router, &test).unwrap();
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.n_samples, 6);
        assert_eq!(report.labels.len(), 7);
        assert_eq!(report.labels[6], NONE_LABEL);
    }

    #[test]
    fn unit_thresholds_predict_none() {
        let router = reference_router().with_threshold_values(&[1.0; 6]).unwrap();
        let test = vec![
            LabeledPrompt::new("roll out a slice somewhere", DEPLOYMENT, Variant::Seed),
            LabeledPrompt::new("what happened last time", REPORT_REQUEST, Variant::Seed),
        ];
        let report = evaluate(&router, &test).unwrap();
        assert_eq!(report.accuracy, 0.0);
        assert_eq!(report.confusion[0][6], 1);
        assert_eq!(report.confusion[3][6], 1);
    }

    #[test]
    fn evaluate_errors() {
        let router = reference_router();
        assert!(matches!(evaluate(&router, &[]), Err(TuningError::EmptyTestSet)));
        let bad = vec![
            LabeledPrompt::new("fine", DEPLOYMENT, Variant::Seed),
            LabeledPrompt::new("x", "Nope", Variant::Seed),
        ];
        assert!(matches!(
            evaluate(&router, &bad),
            Err(TuningError::UnknownLabel { index: 1, .. })
        ));
        let empty = vec![
            LabeledPrompt::new("fine", DEPLOYMENT, Variant::Seed),
            LabeledPrompt::new("  ", DEPLOYMENT, Variant::Seed),
        ];
        assert!(matches!(
            evaluate(&router, &empty),
            Err(TuningError::Routing { index: 1, .. })
        ));
    }

    #[test]
    fn pooled_report_sums_confusions() {
        let labels = vec!["a".to_string(), NONE_LABEL.to_string()];
        let r1 = EvaluationReport::from_predictions(labels.clone(), &[0, 0], &[0, 1]);
        let r2 = EvaluationReport::from_predictions(labels, &[1, 0], &[1, 0]);
        let pooled = EvaluationReport::pool(&[r1, r2]).unwrap();
        assert_eq!(pooled.confusion, vec![vec![2, 1], vec![0, 1]]);
        assert_eq!(pooled.per_fold, vec![0.5, 1.0]);
        assert_eq!(pooled.accuracy, 0.75);
        assert_eq!(pooled.mean_fold_accuracy(), 0.75);
    }

    #[test]
    fn separable_route_gets_threshold_between_scores() {
        // route A scores 0.9 on its own prompts and at most 0.3 elsewhere
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..10 {
            scores.push(vec![0.9]);
            labels.push(Some(0));
        }
        for i in 0..50 {
            scores.push(vec![0.3 * (i as f64 / 49.0)]);
            labels.push(None);
        }
        let t = fit_thresholds_from_scores(&scores, &labels, &[0.5], TuningOptions::default()).unwrap();
        assert!(t[0] > 0.3 && t[0] <= 0.9, "{t:?}");
        // exhaustive check over a fine grid: nothing beats the fitted value
        let fitted = correct_count(&scores, &labels, &t);
        assert_eq!(fitted, 60);
    }

    #[test]
    fn tuning_keeps_perfect_training_accuracy() {
        let scores = vec![vec![0.8, 0.1], vec![0.2, 0.7], vec![0.1, 0.2]];
        let labels = vec![Some(0), Some(1), None];
        assert_eq!(correct_count(&scores, &labels, &[0.5, 0.5]), 3);
        let t = fit_thresholds_from_scores(&scores, &labels, &[0.5, 0.5], TuningOptions::default()).unwrap();
        assert_eq!(correct_count(&scores, &labels, &t), 3);
    }

    #[test]
    fn tuning_option_validation() {
        let scores = vec![vec![0.5]];
        let labels = vec![Some(0)];
        for step in [0.0, -0.1, 0.3] {
            let opts = TuningOptions {
                grid_step: step,
                max_passes: 3,
            };
            assert!(matches!(
                fit_thresholds_from_scores(&scores, &labels, &[0.5], opts),
                Err(TuningError::InvalidGridStep(_))
            ));
        }
        let opts = TuningOptions {
            grid_step: 0.1,
            max_passes: 0,
        };
        assert!(matches!(
            fit_thresholds_from_scores(&scores, &labels, &[0.5], opts),
            Err(TuningError::InvalidMaxPasses)
        ));
        assert!(matches!(
            fit_thresholds(&reference_router(), &[], TuningOptions::default()),
            Err(TuningError::EmptyTrainSet)
        ));
    }

    #[test]
    fn grid_covers_unit_interval() {
        let g = threshold_grid(0.25);
        assert_eq!(g, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let g = threshold_grid(0.15);
        assert_eq!(*g.last().unwrap(), 1.0);
        assert_eq!(g.len(), 8);
    }

    fn instance() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Option<usize>>)> {
        (1usize..4, 1usize..30).prop_flat_map(|(routes, n)| {
            (
                prop::collection::vec(prop::collection::vec(0.0f64..=1.0, routes), n),
                prop::collection::vec(prop::option::weighted(0.8, 0..routes), n),
            )
        })
    }

    proptest! {
        #[test]
        fn tuning_never_regresses((scores, labels) in instance()) {
            let start = vec![0.5; scores[0].len()];
            let before = correct_count(&scores, &labels, &start);
            let t = fit_thresholds_from_scores(&scores, &labels, &start, TuningOptions::default()).unwrap();
            prop_assert!(correct_count(&scores, &labels, &t) >= before);
            prop_assert!(t.iter().all(|v| (0.0..=1.0).contains(v)));
            let again = fit_thresholds_from_scores(&scores, &labels, &start, TuningOptions::default()).unwrap();
            prop_assert_eq!(t, again);
        }

        #[test]
        fn sweeps_match_direct_counting((scores, labels) in instance(), t0 in 0.0f64..1.0) {
            let n = scores[0].len();
            let thresholds = vec![t0; n];
            let observed: Vec<f64> = scores.iter().map(|s| s[0]).collect();
            let cands = candidate_thresholds(&observed, 0.1);
            let counts = sweep_single(&scores, &labels, &thresholds, 0, &cands);
            for (&t, &c) in cands.iter().zip(&counts) {
                let mut trial = thresholds.clone();
                trial[0] = t;
                prop_assert_eq!(c as usize, correct_count(&scores, &labels, &trial));
            }
            if n >= 2 {
                let other: Vec<f64> = scores.iter().map(|s| s[n - 1]).collect();
                let cq = candidate_thresholds(&other, 0.2);
                let grid = sweep_pair(&scores, &labels, &thresholds, (0, n - 1), (&cands, &cq));
                for (i, &a) in cands.iter().enumerate() {
                    for (j, &b) in cq.iter().enumerate() {
                        let mut trial = thresholds.clone();
                        trial[0] = a;
                        trial[n - 1] = b;
                        prop_assert_eq!(grid[i * cq.len() + j] as usize, correct_count(&scores, &labels, &trial));
                    }
                }
            }
        }

        #[test]
        fn folds_partition_and_stratify(sizes in prop::collection::vec(3usize..12, 1..5), k in 2usize..4, seed in any::<u64>()) {
            let corpus: Vec<LabeledPrompt> = sizes
                .iter()
                .enumerate()
                .flat_map(|(l, &n)| (0..n).map(move |i| LabeledPrompt::new(format!("{l}-{i}"), format!("L{l}"), Variant::Seed)))
                .collect();
            let folds = kfold_split(&corpus, k, seed).unwrap();
            let total: usize = folds.iter().map(|f| f.len()).sum();
            prop_assert_eq!(total, corpus.len());
            let mut seen: Vec<&str> = folds.iter().flatten().map(|p| p.text.as_str()).collect();
            seen.sort();
            seen.dedup();
            prop_assert_eq!(seen.len(), corpus.len());
            for l in 0..sizes.len() {
                let label = format!("L{l}");
                let counts: Vec<usize> = folds.iter().map(|f| f.iter().filter(|p| p.label == label).count()).collect();
                prop_assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
            }
        }

        #[test]
        fn accuracy_is_order_invariant(truth in prop::collection::vec(0usize..3, 1..40), seed in any::<u64>()) {
            let predicted: Vec<usize> = truth.iter().enumerate().map(|(i, t)| if i % 3 == 0 { (t + 1) % 3 } else { *t }).collect();
            let labels = vec!["a".to_string(), "b".to_string(), NONE_LABEL.to_string()];
            let report = EvaluationReport::from_predictions(labels.clone(), &truth, &predicted);
            let mut idx: Vec<usize> = (0..truth.len()).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let t2: Vec<usize> = idx.iter().map(|&i| truth[i]).collect();
            let p2: Vec<usize> = idx.iter().map(|&i| predicted[i]).collect();
            let shuffled = EvaluationReport::from_predictions(labels, &t2, &p2);
            prop_assert_eq!(&report.confusion, &shuffled.confusion);
            let total: u64 = report.confusion.iter().flatten().sum();
            prop_assert_eq!(total as usize, report.n_samples);
            prop_assert!((report.accuracy - report.correct() as f64 / report.n_samples as f64).abs() < 1e-9);
        }
    }
}
