mod common;

use std::collections::BTreeMap;

use issueloc::corpus::{
    build_instances, curate, jaccard, map_diff_to_units, select_pull_requests, select_repositories, top_m_indices,
    CurationParams, PullRequestRecord, RepoCandidate, RepoSelectionCriteria,
};
use issueloc::embed::Embedder;
use issueloc::io::read_jsonl;
use proptest::prelude::*;

fn fixture_prs() -> Vec<PullRequestRecord> {
    read_jsonl(&common::fixtures().join("prs.jsonl")).unwrap()
}

#[test]
fn fixture_prs_map_to_expected_functions() {
    let units = common::fixture_units();
    let prs = fixture_prs();
    let selected: Vec<String> = select_pull_requests(&prs).iter().map(|r| r.pr_id.clone()).collect();
    assert_eq!(selected, ["101", "102", "105", "106", "107"]);

    let expect: BTreeMap<&str, Vec<&str>> = BTreeMap::from([
        ("101", vec!["shop/cart.py::Cart::total", "shop/pricing.py::apply_discount", "shop/pricing.py::tax_for"]),
        ("102", vec!["shop/models/user.py::User::email#2"]),
        ("105", vec![]),
        ("106", vec!["shop/inventory.py::Inventory::reserve", "shop/inventory.py::Inventory::reserve::available"]),
        ("107", vec!["shop/api/handlers.py::render"]),
    ]);
    for pr in select_pull_requests(&prs) {
        let mut got: Vec<String> = map_diff_to_units(&pr, &units).unwrap().into_iter().map(|u| u.qualified_name).collect();
        got.sort();
        assert_eq!(got, expect[pr.pr_id.as_str()], "PR {}", pr.pr_id);
        match build_instances(&pr, &units) {
            Ok(instances) => {
                assert_eq!(instances.len(), got.len());
                for inst in &instances {
                    assert!(inst.candidate_pool.iter().all(|u| !got.contains(&u.qualified_name)));
                    assert_eq!(inst.candidate_pool.len(), units.len() - got.len());
                }
            }
            Err(e) => {
                assert!(got.is_empty(), "{e}");
                assert!(matches!(e, issueloc::Error::InvalidInstance(_)));
            }
        }
    }
}

#[test]
fn curation_is_deterministic_and_respects_k_and_m() {
    let units = common::fixture_units();
    let prs = fixture_prs();
    let embedder = Embedder::hash(256, 7).unwrap();
    let run = |params| curate(&prs, |_, _| Some(units.as_slice()), &embedder, params).unwrap();
    let a = run(CurationParams::default());
    let b = run(CurationParams::default());
    assert_eq!(serde_json::to_string(&a.triples).unwrap(), serde_json::to_string(&b.triples).unwrap());
    assert_eq!(a.instances.len(), 7);
    assert_eq!(a.skipped_records.len(), 1);
    assert_eq!(a.triples.len() + a.filtered_out, a.instances.len());

    let tight = run(CurationParams { consistency_k: Some(1), hard_negatives: 5 });
    let off = run(CurationParams { consistency_k: None, hard_negatives: 5 });
    assert_eq!(off.triples.len(), 7);
    assert!(tight.triples.len() <= off.triples.len());
    assert!(off.triples.iter().all(|t| t.negatives.len() == 5));

    let everything = run(CurationParams { consistency_k: None, hard_negatives: 1000 });
    for t in &everything.triples {
        let pool = t.pool.as_ref().unwrap();
        assert_eq!(t.negatives.len(), pool.len());
    }
}

#[test]
fn retained_instances_rank_within_k() {
    let embedder = Embedder::hash(64, 9).unwrap();
    let instances = common::synthetic_instances(5, 40, 32, &embedder);
    for inst in &instances {
        let (pos, pool) = common::oracle_scores(inst, &embedder);
        let rank = common::brute_rank((&pos.0, pos.1), &pool);
        for k in [1, 5, 20] {
            let kept = issueloc::corpus::consistency_filter(inst, &embedder, k).unwrap();
            assert_eq!(kept, rank <= k);
        }
    }
}

#[test]
fn filter_and_mining_agree_with_full_sort() {
    let embedder = Embedder::hash(32, 4).unwrap();
    let instances = common::synthetic_instances(77, 30, 64, &embedder);
    let audit = common::audit_filter_and_mining(&instances, &embedder, &[1, 10, 20, 64], &[1, 5, 15, 80]);
    assert_eq!(audit.filter_mismatches, 0);
    assert_eq!(audit.mining_mismatches, 0);
    assert_eq!(audit.worse_negative_violations, 0);
}

#[test]
fn repository_selection() {
    let fp = |xs: &[u64]| xs.iter().copied().collect::<std::collections::HashSet<u64>>();
    let c = |id: &str, frac: f64, f: &[u64]| RepoCandidate { repo_id: id.into(), language_fraction: frac, fingerprint: fp(f) };
    let mut crit = RepoSelectionCriteria::default();
    crit.exclusion_list.insert("banned".into());
    let kept = select_repositories(
        &[
            c("a", 0.9, &[1, 2, 3, 4, 5, 6, 7, 8, 9, 10]),
            c("fork", 0.95, &[1, 2, 3, 4, 5, 6, 7, 8, 9, 10]),
            c("low", 0.5, &[20]),
            c("banned", 1.0, &[30]),
            c("b", 0.8, &[1, 2, 40]),
        ],
        &crit,
    );
    assert_eq!(kept, vec!["a".to_string(), "b".to_string()]);
    assert_eq!(jaccard(&fp(&[1, 2]), &fp(&[2, 3])), 1.0 / 3.0);
}

proptest! {
    #[test]
    fn top_m_equals_sorted_prefix(scores in prop::collection::vec(0u8..4, 1..40), m in 1usize..50) {
        let pool: Vec<_> = (0..scores.len()).map(|i| common::synthetic_unit(&format!("id{:02}", (i * 7) % 41), "f.py", "x")).collect();
        let s: Vec<f64> = scores.iter().map(|&x| x as f64 / 4.0).collect();
        let got: Vec<String> = top_m_indices(&pool, &s, m).into_iter().map(|i| pool[i].unit_id.clone()).collect();
        let pairs: Vec<(String, f64)> = pool.iter().zip(&s).map(|(u, v)| (u.unit_id.clone(), *v)).collect();
        prop_assert_eq!(got, common::brute_top_m(&pairs, m));
    }

    // An insertion strictly inside a function hits it; one on its last line
    // (between it and whatever follows) does not.
    #[test]
    fn insertion_rule(body in 2usize..6, at in 0usize..8) {
        let mut src = String::from("def f():\n");
        for _ in 0..body { src.push_str("    pass\n"); }
        let f_end = 1 + body;
        let units = vec![issueloc::units::CodeUnit {
            unit_id: "f".into(), file_path: "a.py".into(), module_path: vec![], function_name: "f".into(),
            qualified_name: "a.py::f".into(), span: issueloc::units::Span { start: 1, end: f_end }, source_text: src,
        }];
        let after = at.min(f_end + 1);
        let diff = format!("--- a/a.py\n+++ b/a.py\n@@ -{after},0 +{},1 @@\n+    x = 1\n", after + 1);
        let pr = PullRequestRecord {
            pr_id: "p".into(), repo_id: "r".into(), base_commit_ref: "c".into(), issue_text: "t".into(),
            diff_text: diff, links_issue: true, modifies_tests: true,
        };
        let hit = !map_diff_to_units(&pr, &units).unwrap().is_empty();
        prop_assert_eq!(hit, after >= 1 && after < f_end);
    }
}
