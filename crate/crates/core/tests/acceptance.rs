//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

mod common;

use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use issueloc::contrastive::planted::{PlantedConfig, PlantedCorpus};
use issueloc::contrastive::{info_nce_loss, train_toy_encoder, ToyEncoder, TrainParams};
use issueloc::corpus::{build_instances, map_diff_to_units, select_pull_requests, PullRequestRecord};
use issueloc::embed::Embedder;
use issueloc::eval::{
    cost_report, evaluate, stratify_by_num_gold, unit_lookup, Granularity, Prices, UsageLedger,
    DEFAULT_NUM_GOLD_BUCKETS,
};
use issueloc::io::read_jsonl;
use issueloc::rerank::stub::{IdentityStub, OracleStub};
use issueloc::rerank::{
    assign_identifiers, build_prompt, first_token_loss, parse_permutation, sliding_window_rerank_candidates,
    PromptBudget, RerankCandidate, RerankOptions, DEFAULT_INSTRUCTION,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit_secs: u64) -> Result<(), String> {
    check(elapsed < Duration::from_secs(limit_secs), format!("took {elapsed:.2?}, limit {limit_secs} s"))
}

fn c1_info_nce_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let b = common::random_batch(&mut rng);
        let tau = [1.0, 0.5, 2.0, 0.1][i % 4];
        let got = info_nce_loss(&b, tau).map_err(|e| e.to_string())?;
        worst = worst.max(common::rel_err(got, common::softmax_ce_oracle(&b, tau)));
    }
    let t = start.elapsed();
    check(worst <= 1e-12, format!("max relative error {worst:e}"))?;
    within(t, 5)?;
    Ok(format!("1000 batches, max rel err {worst:.2e}, {t:.2?}"))
}

fn c2_gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let b = common::random_batch(&mut rng);
        let tau = [1.0, 0.5, 2.0][i % 3];
        worst = worst.max(common::finite_difference_error(&b, tau, 1e-5));
    }
    let t = start.elapsed();
    check(worst < 1e-5, format!("max relative error {worst:e}"))?;
    within(t, 30)?;
    Ok(format!("100 batches (tau 1, 0.5, 2), max rel err {worst:.2e}, {t:.2?}"))
}

/// Margin frozen from a calibration run with these exact settings.
const PLANTED_MARGIN: f64 = 0.50;

fn c3_training_signal() -> Outcome {
    let start = Instant::now();
    let corpus = PlantedCorpus::generate(PlantedConfig::default());
    check(corpus.queries.len() == 200, format!("{} planted queries", corpus.queries.len()))?;
    let initial = ToyEncoder::random(512, 32, 5, 11).map_err(|e| e.to_string())?;
    let params = TrainParams { epochs: 20, learning_rate: 0.5, batch_size: 16, seed: 3, temperature: 1.0 };
    let trained = train_toy_encoder(&corpus.triples, &initial, &params).map_err(|e| e.to_string())?;
    let before = corpus.acc_at_1(&initial).map_err(|e| e.to_string())?;
    let after = corpus.acc_at_1(&trained.encoder).map_err(|e| e.to_string())?;
    let t = start.elapsed();
    check(after > before, format!("Acc@1 {before:.3} -> {after:.3} did not improve"))?;
    check(after - before >= PLANTED_MARGIN, format!("margin {:.3} below {PLANTED_MARGIN}", after - before))?;
    within(t, 60)?;
    Ok(format!("Acc@1 {before:.3} -> {after:.3}, {t:.2?}"))
}

fn c4_filter_and_mining() -> Outcome {
    let embedder = Embedder::hash(64, 21).map_err(|e| e.to_string())?;
    let instances = common::synthetic_instances(404, 100, 64, &embedder);
    let a = common::audit_filter_and_mining(&instances, &embedder, &[1, 5, 20, 64], &[1, 15, 64, 100]);
    check(a.filter_mismatches == 0, format!("{} filter mismatches", a.filter_mismatches))?;
    check(a.mining_mismatches == 0, format!("{} mining mismatches", a.mining_mismatches))?;
    check(a.worse_negative_violations == 0, format!("{} worse-negative violations", a.worse_negative_violations))?;
    Ok(format!("100 instances, {} decisions, 0 mismatches", a.checked))
}

fn c5_pipeline_counts() -> Outcome {
    let units = common::fixture_units();
    let prs: Vec<PullRequestRecord> = read_jsonl(&common::fixtures().join("prs.jsonl")).map_err(|e| e.to_string())?;
    let mut total = 0;
    for pr in select_pull_requests(&prs) {
        let modified = map_diff_to_units(&pr, &units).map_err(|e| e.to_string())?.len();
        let made = build_instances(&pr, &units).map(|v| v.len()).unwrap_or(0);
        check(made == modified, format!("PR {}: {made} instances for {modified} functions", pr.pr_id))?;
        total += made;
    }
    check(total == 7, format!("{total} instances, expected 7"))?;

    let w = common::Workspace::new();
    check(w.curate("cur", &[]) == 0, "curate failed")?;
    for f in ["instances.jsonl", "triples.jsonl", "skipped.jsonl", "benchmark.jsonl"] {
        let first = w.read(&format!("cur/{f}"));
        let first = first.lines().next().unwrap_or("");
        check(first.contains("\"K\":20") && first.contains("\"M\":15"), format!("{f} header lacks K=20/M=15"))?;
    }
    let stats = w.read("cur/stats.csv");
    check(stats.contains("# K=20\n# M=15\n"), "stats.csv header lacks K=20/M=15")?;
    Ok(format!("{total} instances from 5 selected PRs; K=20, M=15 in every header"))
}

fn c6_metrics() -> Outcome {
    let a = common::audit_metrics(6, 1000);
    check(a.oracle_mismatches == 0, format!("{} oracle mismatches", a.oracle_mismatches))?;
    check(a.monotonicity_violations == 0, format!("{} monotonicity violations", a.monotonicity_violations))?;
    check(a.dominance_violations == 0, format!("{} dominance violations", a.dominance_violations))?;

    let f = common::hand_fixture();
    let report = evaluate(&f.benchmark, &f.ranked, &unit_lookup(&f.units), &f.schedule).map_err(|e| e.to_string())?;
    check(report.table == common::hand_expected_table(), format!("hand table differs: {:?}", report.table))?;
    let strata = stratify_by_num_gold(&report, &DEFAULT_NUM_GOLD_BUCKETS);
    let expected = common::hand_expected_num_gold();
    check(strata.len() == expected.len(), "num_gold stratum count differs")?;
    for (s, (label, count, func, file1)) in strata.iter().zip(expected) {
        let fr = &s.table[&Granularity::Function];
        let ok = s.label == label
            && s.count == count
            && [fr[&1], fr[&3], fr[&5]] == func
            && s.table[&Granularity::File][&1] == file1;
        check(ok, format!("stratum {} differs", s.label))?;
    }
    Ok("1000 random cases, 0 violations; hand table exact".into())
}

fn fuzz_string(rng: &mut ChaCha8Rng) -> String {
    const PIECES: [&str; 12] = ["[", "]", " > ", "[1]", "[10]", "[0]", "[99]", "x", "\n", "[-3]", "[ 2]", "ünï"];
    let n = rng.gen_range(0..30);
    (0..n)
        .map(|_| {
            if rng.gen_bool(0.5) {
                format!("[{}]", rng.gen_range(0..14))
            } else {
                PIECES[rng.gen_range(0..PIECES.len())].to_string()
            }
        })
        .collect()
}

fn candidates(n: usize, words: usize) -> Vec<RerankCandidate> {
    (0..n)
        .map(|i| RerankCandidate {
            unit_id: format!("u{i:03}"),
            text: format!("# m.py::f{i}\n{}", vec!["tok"; words].join(" ")),
        })
        .collect()
}

fn c7_rerank() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10_000 {
        let s = fuzz_string(&mut rng);
        let n = rng.gen_range(1..=10);
        let p = parse_permutation(&s, n);
        let set: HashSet<usize> = p.order.iter().copied().collect();
        check(p.order.len() == n && set.len() == n && set.iter().all(|&i| (1..=n).contains(&i)), format!("bad permutation for {s:?}"))?;
    }

    let budget = PromptBudget::default();
    let opts = RerankOptions::default();
    let mut max_prompt = 0;
    for len in 1..=100 {
        let c = candidates(len, 3);
        let out = sliding_window_rerank_candidates("q", "issue", &c, &budget, &IdentityStub, &opts).map_err(|e| e.to_string())?;
        let ids: Vec<&str> = out.ranked.ids().collect();
        let want: Vec<&str> = c.iter().map(|x| x.unit_id.as_str()).collect();
        check(ids == want, format!("identity changed order at length {len}"))?;
        max_prompt = max_prompt.max(out.max_prompt_tokens);
    }

    let c = candidates(20, 3);
    let oracle = OracleStub::new(vec!["# m.py::f18\n".into()]);
    let out = sliding_window_rerank_candidates("q", "issue", &c, &budget, &oracle, &opts).map_err(|e| e.to_string())?;
    check(out.ranked.entries[0].unit_id == "u018", "gold not at the top")?;
    check(out.window_calls <= 3, format!("{} window calls", out.window_calls))?;

    check(budget.per_candidate_max_tokens == 1024 && budget.total_max_tokens == 16348, "default budget differs")?;
    let window = assign_identifiers(&candidates(10, 3000), 10).map_err(|e| e.to_string())?;
    let long_query = vec!["word"; 20_000].join(" ");
    let p = build_prompt(&long_query, &window, &budget, DEFAULT_INSTRUCTION).map_err(|e| e.to_string())?;
    check(p.accounting.candidates.iter().all(|&n| n <= 1024), "candidate over budget")?;
    check(p.accounting.total <= 16348, format!("prompt {} tokens", p.accounting.total))?;
    let heavy = sliding_window_rerank_candidates("q", &long_query, &candidates(40, 3000), &budget, &IdentityStub, &opts)
        .map_err(|e| e.to_string())?;
    check(heavy.max_prompt_tokens <= 16348 && max_prompt <= 16348, "sliding prompt over budget")?;
    Ok(format!("10000 strings valid; identity no-op to 100; gold 18 -> 1 in {} calls; budgets held", out.window_calls))
}

fn c8_first_token() -> Outcome {
    let uniform = first_token_loss(&[0.0; 10], 4).map_err(|e| e.to_string())?;
    check((uniform - 10f64.ln()).abs() <= 1e-12, format!("uniform loss {uniform}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=20);
        let logits: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let t = rng.gen_range(1..=n);
        let got = first_token_loss(&logits, t).map_err(|e| e.to_string())?;
        worst = worst.max(common::rel_err(got, common::categorical_ce_oracle(&logits, t - 1)));
    }
    check(worst <= 1e-12, format!("max relative error {worst:e}"))?;
    Ok(format!("ln 10 within 1e-12; 1000 random cases, max rel err {worst:.2e}"))
}

fn c9_determinism() -> Outcome {
    let w = common::Workspace::new();
    for run in ["a", "b"] {
        check(w.curate(&format!("cur_{run}"), &["--seed", "42"]) == 0, "curate failed")?;
    }
    let (a, b) = (common::tree_bytes(&w.dir.path().join("cur_a")), common::tree_bytes(&w.dir.path().join("cur_b")));
    check(!a.is_empty() && a == b, "curate outputs differ")?;
    check(w.index(&["--seed", "42"]) == 0, "index failed")?;
    for run in ["a", "b"] {
        let (code, _, err) = w.localize("cur_a/benchmark.jsonl", &format!("loc_{run}"), &["--seed", "42", "--rerank", "--provider", "reverse"]);
        check(code == 0, format!("localize failed: {err}"))?;
    }
    let (a2, b2) = (common::tree_bytes(&w.dir.path().join("loc_a")), common::tree_bytes(&w.dir.path().join("loc_b")));
    check(!a2.is_empty() && a2 == b2, "localize outputs differ")?;
    Ok(format!("{} curate and {} localize files byte-identical", a.len(), a2.len()))
}

fn c10_cost() -> Outcome {
    let mut ledger = UsageLedger::default();
    ledger.record("appendix", 78_409, 741, 1);
    // Binary-fraction prices make every product exactly representable.
    let prices = Prices { input_per_token: 2f64.powi(-20), output_per_token: 2f64.powi(-18) };
    let c = cost_report(&ledger, &prices, None).map_err(|e| e.to_string())?;
    check(c.total_prompt_tokens == 78_409 && c.total_output_tokens == 741, "token totals differ")?;
    check(c.per_instance[0].cost == 81_373.0 / 1_048_576.0, format!("cost {}", c.per_instance[0].cost))?;
    let decimal = Prices { input_per_token: 3e-6, output_per_token: 1.5e-5 };
    let d = cost_report(&ledger, &decimal, None).map_err(|e| e.to_string())?;
    check(d.mean_cost == 78_409.0 * 3e-6 + 741.0 * 1.5e-5, "decimal price product differs")?;
    Ok(format!("78409 x 2^-20 + 741 x 2^-18 = {}", c.per_instance[0].cost))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("1 info_nce oracle", c1_info_nce_oracle),
        ("2 gradient finite differences", c2_gradients),
        ("3 planted training signal", c3_training_signal),
        ("4 filtering and mining oracle", c4_filter_and_mining),
        ("5 pipeline counts and defaults", c5_pipeline_counts),
        ("6 metric correctness", c6_metrics),
        ("7 reranking contracts", c7_rerank),
        ("8 first-token loss", c8_first_token),
        ("9 determinism", c9_determinism),
        ("10 cost accounting", c10_cost),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
