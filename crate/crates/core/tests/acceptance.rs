//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.
//!
//! Criterion 10 talks to a live embeddings service when
//! `INTENT_ROUTER_LIVE_EMBED_URL` and `INTENT_ROUTER_LIVE_EMBED_MODEL` are set
//! (plus `INTENT_ROUTER_EMBED_KEY` if the service needs one); otherwise it
//! only checks the report schema against the mock endpoint.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use intent_router::baseline::{compare_latency, run_baseline, ChatClient, ChatClientConfig, HallucinationSchedule};
use intent_router::corpus::{builtin_routes, Corpus, LabeledPrompt, UtteranceSpec, Variant};
use intent_router::embedding::reference_encode;
use intent_router::experiments::{
    run_comparison_experiment, run_diversity_experiment, run_encoder_experiment, run_quantization_sweep,
    run_utterance_experiment, EndpointConfig, ExperimentConfig, ExperimentResult,
};
use intent_router::mock::{EmbeddingFault, MockChatServer, MockEmbeddingServer};
use intent_router::router::{build_router, Route, Router};
use intent_router::tuning::{assign_folds, fit_thresholds, TuningOptions};
use intent_router::{EncoderDescriptor, NONE_LABEL};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn spec(a: usize, b: usize, c: usize) -> UtteranceSpec {
    UtteranceSpec::new(a, b, c)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

// Fold means straight from the per-fold reports.
fn post_test(r: &ExperimentResult) -> f64 {
    mean(&r.post_tuning.test.per_fold)
}

fn post_train(r: &ExperimentResult) -> f64 {
    mean(&r.post_tuning.train.per_fold)
}

fn pre_test(r: &ExperimentResult) -> f64 {
    mean(&r.pre_tuning.test.per_fold)
}

fn cell(results: &[ExperimentResult], s: UtteranceSpec) -> &ExperimentResult {
    results.iter().find(|r| r.spec == s).expect("spec present")
}

fn pct(x: f64) -> String {
    format!("{:.1}%", 100.0 * x)
}

fn answer_key(prompts: &[LabeledPrompt]) -> HashMap<String, String> {
    prompts.iter().map(|p| (p.text.clone(), p.label.clone())).collect()
}

fn chat_client(server: &MockChatServer) -> ChatClient {
    ChatClient::with_key(
        ChatClientConfig {
            endpoint: server.url().to_string(),
            model: "mock".into(),
            timeout_ms: 10_000,
            temperature: 0.0,
        },
        None,
    )
    .unwrap()
}

fn table_one() -> Outcome {
    let expected = [
        (
            "Deployment Intent",
            "Deploy a new network in [region] with the following specifications...",
        ),
        (
            "Modification Intent",
            "Modify the existing [network] to address the performance issues caused by high loading...",
        ),
        (
            "Performance Assurance Intent",
            "Ensure that the deployed network can support a [QoS Level] application with the following requirements...",
        ),
        (
            "Intent Report Request",
            "Summarize the results of the previous request.",
        ),
        (
            "Intent Feasibility Check",
            "Before proceeding, ensure that capacity exists in [region] to perform the required changes.",
        ),
        (
            "Regular Notification Request",
            "Notify me of the status of [network] every [frequency].",
        ),
    ];
    let routes = builtin_routes();
    let mismatches: Vec<String> = routes
        .iter()
        .zip(expected)
        .filter(|(r, (name, base))| r.name != *name || r.utterances != [base.to_string()] || r.threshold != 0.5)
        .map(|(r, _)| r.name.clone())
        .collect();
    outcome(
        routes.len() == 6 && mismatches.is_empty(),
        format!("{} routes, mismatches {mismatches:?}", routes.len()),
    )
}

fn non_regression(corpus: &Corpus) -> Outcome {
    let config = ExperimentConfig {
        encoders: vec![
            EncoderDescriptor::reference("reference-256", 256),
            EncoderDescriptor::reference("reference-1024", 1024),
        ],
        llm_endpoints: vec![EndpointConfig::mock("q4", 0), EndpointConfig::mock("q8", 0)],
        baseline_samples: Some(60),
        ..ExperimentConfig::default()
    };

    let mut cells: Vec<ExperimentResult> = Vec::new();
    cells.extend(run_utterance_experiment(&config, corpus).unwrap());
    cells.extend(run_diversity_experiment(&config, corpus).unwrap());
    cells.extend(run_encoder_experiment(&config, corpus).unwrap());
    cells.extend(run_comparison_experiment(&config, corpus).unwrap().results);
    cells.extend(run_quantization_sweep(&config, corpus).unwrap().results);

    let mut folds = 0;
    let mut regressions = Vec::new();
    for c in &cells {
        let pairs = c.post_tuning.train.per_fold.iter().zip(&c.pre_tuning.train.per_fold);
        for (fold, (post, pre)) in pairs.enumerate() {
            folds += 1;
            if post < pre {
                regressions.push(format!("{:?} {} {} fold {fold}", c.experiment, c.encoder, c.spec));
            }
        }
        if c.post_tuning.train.accuracy < c.pre_tuning.train.accuracy {
            regressions.push(format!("{:?} {} {} pooled", c.experiment, c.encoder, c.spec));
        }
    }
    outcome(
        regressions.is_empty(),
        format!("{} cells, {folds} folds, regressions {regressions:?}", cells.len()),
    )
}

fn utterance_scaling(results: &[ExperimentResult]) -> Outcome {
    let lo = post_test(cell(results, spec(0, 0, 0)));
    let hi = post_test(cell(results, spec(15, 15, 15)));
    outcome(
        hi - lo >= 0.10,
        format!(
            "post-tuning test (0,0,0) {} -> (15,15,15) {}, gain {:.1} pp (need >= 10)",
            pct(lo),
            pct(hi),
            100.0 * (hi - lo)
        ),
    )
}

// Accuracies within this margin count as "approximately equal".
const APPROX: f64 = 0.02;

fn diversity(corpus: &Corpus) -> Outcome {
    let results = run_diversity_experiment(&ExperimentConfig::default(), corpus).unwrap();
    let acc = |s| post_test(cell(&results, s));
    let (seed, var, par, all) = (
        acc(spec(5, 0, 0)),
        acc(spec(5, 5, 0)),
        acc(spec(5, 0, 5)),
        acc(spec(5, 5, 5)),
    );
    let pre = |s| pre_test(cell(&results, s));
    let pass = all >= var && all >= par && par + APPROX >= seed && all - seed > 0.0;
    outcome(
        pass,
        format!(
            "post-tuning test (5,0,0) {} (5,5,0) {} (5,0,5) {} (5,5,5) {}; pre-tuning {} {} {} {}",
            pct(seed),
            pct(var),
            pct(par),
            pct(all),
            pct(pre(spec(5, 0, 0))),
            pct(pre(spec(5, 5, 0))),
            pct(pre(spec(5, 0, 5))),
            pct(pre(spec(5, 5, 5))),
        ),
    )
}

fn gap_shrinks(results: &[ExperimentResult]) -> Outcome {
    let gap = |s| {
        let r = cell(results, s);
        (post_train(r) - post_test(r)).abs()
    };
    let (lo, hi) = (gap(spec(0, 0, 0)), gap(spec(15, 15, 15)));
    outcome(
        hi < lo,
        format!(
            "|train - test| (0,0,0) {:.1} pp, (15,15,15) {:.1} pp",
            100.0 * lo,
            100.0 * hi
        ),
    )
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    (xs[(n - 1) / 2] + xs[n / 2]) / 2.0
}

fn latency(corpus: &Corpus) -> Outcome {
    let router = build_router(builtin_routes(), &EncoderDescriptor::reference("reference", 1024), 5).unwrap();
    let samples: Vec<LabeledPrompt> = corpus.seeds().into_iter().step_by(6).take(24).collect();
    let server =
        MockChatServer::with_answer_key(Duration::from_millis(500), answer_key(&samples), "unknown", None).unwrap();
    let cmp = compare_latency(&router, &chat_client(&server), &samples, 50.0, 8).unwrap();

    let standalone: Vec<f64> = corpus
        .seeds()
        .iter()
        .map(|p| {
            let t = Instant::now();
            router.route_query(&p.text).unwrap();
            t.elapsed().as_secs_f64() * 1e3
        })
        .collect();
    let router_ms = median(standalone);
    let ratio = cmp.llm.median_us / cmp.router.median_us;
    outcome(
        ratio >= 50.0 && router_ms < 10.0 && cmp.llm.median_us >= 500_000.0 && (ratio - cmp.ratio).abs() < 1e-9 * ratio,
        format!(
            "llm median {:.0} ms, router median {:.3} ms, ratio {:.0}x (need >= 50); standalone router median {:.3} ms (need < 10)",
            cmp.llm.median_us / 1e3,
            cmp.router.median_us / 1e3,
            ratio,
            router_ms
        ),
    )
}

fn hallucination(corpus: &Corpus) -> Outcome {
    let router = build_router(builtin_routes(), &EncoderDescriptor::reference("reference", 1024), 5).unwrap();
    let samples = corpus.seeds();
    let labels = router.route_names();
    let server = MockChatServer::with_answer_key(Duration::ZERO, answer_key(&samples), "unknown", None).unwrap();
    let client = chat_client(&server);

    let route_all = || -> Vec<(String, u64)> {
        samples
            .iter()
            .map(|p| {
                let d = router.route_query(&p.text).unwrap();
                (d.label().to_string(), d.score.to_bits())
            })
            .collect()
    };
    let before = route_all();
    let schedule = HallucinationSchedule::new(0.3);
    let clean = run_baseline(&client, &samples, &labels, None, 8);
    let injected = run_baseline(&client, &samples, &labels, Some(&schedule), 8);
    let after = route_all();

    // floor((i+1)*3/10) > floor(i*3/10), in integers.
    let expected_hits: Vec<usize> = (0..samples.len()).filter(|i| (i + 1) * 3 / 10 > i * 3 / 10).collect();
    let hits: Vec<usize> = injected
        .samples
        .iter()
        .enumerate()
        .filter(|(_, s)| s.injected)
        .map(|(i, _)| i)
        .collect();
    let near_misses = ["Performance Intent", "Intent Assurance"];
    let raw_ok = hits.iter().all(|&i| {
        let raw = &injected.samples[i].outcome.as_ref().unwrap().raw;
        near_misses.contains(&raw.as_str())
    });
    let router_acc = |d: &[(String, u64)]| {
        d.iter().zip(&samples).filter(|((l, _), p)| *l == p.label).count() as f64 / samples.len() as f64
    };
    let drop = clean.accuracy - injected.accuracy;
    outcome(
        drop >= 0.25 && before == after && hits == expected_hits && raw_ok,
        format!(
            "baseline {} -> {} ({} of {} corrupted), drop {:.1} pp (need >= 25); router {} before and {} after, decisions identical: {}",
            pct(clean.accuracy),
            pct(injected.accuracy),
            hits.len(),
            samples.len(),
            100.0 * drop,
            pct(router_acc(&before)),
            pct(router_acc(&after)),
            before == after
        ),
    )
}

const WORDS: &[&str] = &[
    "deploy",
    "slice",
    "core",
    "network",
    "modify",
    "upf",
    "amf",
    "ensure",
    "latency",
    "report",
    "status",
    "notify",
    "capacity",
    "region",
    "ottawa",
    "edge",
    "throughput",
    "hourly",
    "check",
    "scale",
    "qos",
    "video",
    "alert",
    "load",
];

fn random_text(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(2..8);
    (0..n)
        .map(|_| WORDS[rng.gen_range(0..WORDS.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

fn random_router(rng: &mut ChaCha8Rng, routes: usize, dim: usize) -> Router {
    let routes: Vec<Route> = (0..routes)
        .map(|i| {
            let n = rng.gen_range(1..7);
            Route::new(
                format!("route-{i}"),
                (0..n).map(|_| random_text(rng)).collect(),
                "deploy",
            )
        })
        .collect();
    let top_k = rng.gen_range(1..7);
    build_router(routes, &EncoderDescriptor::reference(format!("r{dim}"), dim), top_k).unwrap()
}

fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn oracle_scores(router: &Router, query: &str, dim: usize) -> Vec<f64> {
    let q = reference_encode(query, dim).unwrap();
    router
        .routes()
        .iter()
        .map(|route| {
            let mut sims: Vec<f64> = route
                .utterances
                .iter()
                .map(|u| oracle_cosine(q.values(), reference_encode(u, dim).unwrap().values()))
                .collect();
            sims.sort_by(|a, b| b.total_cmp(a));
            let k = router.top_k().min(sims.len());
            (sims[..k].iter().sum::<f64>() / k as f64).clamp(0.0, 1.0)
        })
        .collect()
}

/// Predicted route index (None = fallback) under `thresholds`.
fn oracle_predict(scores: &[f64], thresholds: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, (&s, &t)) in scores.iter().zip(thresholds).enumerate() {
        if s >= t && best.is_none_or(|b| s > scores[b]) {
            best = Some(i);
        }
    }
    best
}

fn oracle_correct(scores: &[Vec<f64>], truth: &[Option<usize>], thresholds: &[f64]) -> usize {
    scores
        .iter()
        .zip(truth)
        .filter(|(s, t)| oracle_predict(s, thresholds) == **t)
        .count()
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let routes = rng.gen_range(1..6);
        let router = random_router(&mut rng, routes, 64);
        let query = random_text(&mut rng);
        let got = router.score_routes(&router.embed(&query).unwrap()).unwrap();
        let want = oracle_scores(&router, &query, 64);
        for (route, w) in router.routes().iter().zip(want) {
            worst = worst.max((got[&route.name] - w).abs());
        }
    }

    let mut mismatches = 0;
    let instances = 200;
    for _ in 0..instances {
        let router = random_router(&mut rng, 2, 64);
        let names = router.route_names();
        let train: Vec<LabeledPrompt> = (0..rng.gen_range(4..16))
            .map(|_| {
                let label = match rng.gen_range(0..3) {
                    2 => NONE_LABEL.to_string(),
                    i => names[i].clone(),
                };
                LabeledPrompt::new(random_text(&mut rng), label, Variant::Seed)
            })
            .collect();
        let truth: Vec<Option<usize>> = train.iter().map(|p| names.iter().position(|n| *n == p.label)).collect();
        let scores: Vec<Vec<f64>> = train
            .iter()
            .map(|p| {
                let map = router.score_routes(&router.embed(&p.text).unwrap()).unwrap();
                names.iter().map(|n| map[n]).collect()
            })
            .collect();

        // Accuracy only changes where a threshold crosses an observed score.
        let candidates = |r: usize| {
            let mut c: Vec<f64> = scores.iter().map(|s| s[r]).collect();
            c.extend([0.0, 1.0]);
            c
        };
        let mut best = 0;
        for &t0 in &candidates(0) {
            for &t1 in &candidates(1) {
                best = best.max(oracle_correct(&scores, &truth, &[t0, t1]));
            }
        }
        let fitted = fit_thresholds(&router, &train, TuningOptions::default()).unwrap();
        let thresholds: Vec<f64> = names.iter().map(|n| fitted.get(n).unwrap()).collect();
        if oracle_correct(&scores, &truth, &thresholds) != best {
            mismatches += 1;
        }
    }
    outcome(
        worst <= 1e-9 && mismatches == 0,
        format!("50 score checks, max |diff| {worst:.2e} (need <= 1e-9); {mismatches} of {instances} 2-route fits below the exhaustive optimum"),
    )
}

fn determinism(corpus: &Corpus, first: &[ExperimentResult]) -> Outcome {
    let seeds = corpus.seeds();
    let folds = assign_folds(&seeds, 5, 0).unwrap();
    let again = assign_folds(&seeds, 5, 0).unwrap();
    let labels = corpus.labels();
    let mut blocks_ok = seeds.len() == 180;
    for f in 0..5 {
        let members: Vec<&LabeledPrompt> = seeds
            .iter()
            .zip(&folds)
            .filter(|(_, &k)| k == f)
            .map(|(p, _)| p)
            .collect();
        blocks_ok &= members.len() == 36;
        for l in &labels {
            blocks_ok &= members.iter().filter(|p| &p.label == l).count() == 6;
        }
    }
    blocks_ok &= folds.iter().all(|&k| k < 5);

    let config = ExperimentConfig::default();
    let strip = |rs: Vec<ExperimentResult>| -> Value {
        serde_json::to_value(rs.iter().map(ExperimentResult::without_timing).collect::<Vec<_>>()).unwrap()
    };
    let a = strip(first.to_vec());
    let b = strip(run_utterance_experiment(&config, corpus).unwrap());
    outcome(
        folds == again && blocks_ok && a == b,
        format!(
            "fold assignment repeatable: {}, five stratified blocks of 36: {blocks_ok}, reports identical: {}",
            folds == again,
            a == b
        ),
    )
}

fn remote_parity(corpus: &Corpus) -> Outcome {
    let live = std::env::var("INTENT_ROUTER_LIVE_EMBED_URL")
        .ok()
        .zip(std::env::var("INTENT_ROUTER_LIVE_EMBED_MODEL").ok());
    let _mock;
    let (encoder, mode) = match live {
        Some((url, model)) => (EncoderDescriptor::remote("live", url, model), "live endpoint"),
        None => {
            _mock = MockEmbeddingServer::start(256, 3.0, EmbeddingFault::None).unwrap();
            (
                EncoderDescriptor::remote("mock", _mock.url(), "mock-embed"),
                "mock endpoint; live run not configured",
            )
        }
    };
    let config = ExperimentConfig {
        encoders: vec![EncoderDescriptor::reference("reference-1024", 1024), encoder],
        ..ExperimentConfig::default()
    };
    let results = match run_encoder_experiment(&config, corpus) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("{mode}: {e}")),
    };
    let json = serde_json::to_value(&results).unwrap();
    let rows = json.as_array().unwrap();
    let finite = |v: &Value| v.as_f64().is_some_and(|x| (0.0..=1.0).contains(&x));
    let schema_ok = rows.len() == 8
        && rows.iter().all(|r| {
            r["encoder"].is_string()
                && r["spec"]["a"].is_u64()
                && ["pre_tuning", "post_tuning"]
                    .iter()
                    .all(|k| finite(&r[*k]["train"]["accuracy"]) && finite(&r[*k]["test"]["accuracy"]))
        });
    outcome(
        schema_ok,
        format!("{mode}: {} cells, schema valid: {schema_ok}", rows.len()),
    )
}

type Criterion<'a> = (&'static str, Duration, Box<dyn Fn() -> Outcome + 'a>);

fn main() {
    let corpus = Corpus::shipped();
    let utterance = std::cell::OnceCell::new();
    let utterance =
        || utterance.get_or_init(|| run_utterance_experiment(&ExperimentConfig::default(), &corpus).unwrap());

    let criteria: Vec<Criterion> = vec![
        ("1 route table fidelity", Duration::from_secs(1), Box::new(table_one)),
        (
            "2 tuning non-regression",
            Duration::from_secs(120),
            Box::new(|| non_regression(&corpus)),
        ),
        (
            "3 utterance scaling",
            Duration::from_secs(120),
            Box::new(|| utterance_scaling(utterance())),
        ),
        (
            "4 diversity direction",
            Duration::from_secs(120),
            Box::new(|| diversity(&corpus)),
        ),
        (
            "5 generalization gap",
            Duration::from_secs(120),
            Box::new(|| gap_shrinks(utterance())),
        ),
        (
            "6 latency ratio",
            Duration::from_secs(60),
            Box::new(|| latency(&corpus)),
        ),
        (
            "7 hallucination degradation",
            Duration::from_secs(60),
            Box::new(|| hallucination(&corpus)),
        ),
        (
            "8 oracle equivalence",
            Duration::from_secs(30),
            Box::new(oracle_equivalence),
        ),
        (
            "9 determinism and folds",
            Duration::from_secs(10),
            Box::new(|| determinism(&corpus, utterance())),
        ),
        (
            "10 remote parity",
            Duration::from_secs(300),
            Box::new(|| remote_parity(&corpus)),
        ),
    ];

    let mut failed = Vec::new();
    for (name, budget, check) in &criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let pass = result.pass && elapsed <= *budget;
        println!(
            "{} criterion {name}: {} [{:.2}s, budget {}s]",
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
        if !pass {
            failed.push(*name);
        }
    }
    if !failed.is_empty() {
        println!("{} of {} criteria failed: {failed:?}", failed.len(), criteria.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}
