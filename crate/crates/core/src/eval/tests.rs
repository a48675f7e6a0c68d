use proptest::prelude::*;

use super::*;
use crate::retrieve::{RankMode, RankedEntry};

fn set(items: &[&str]) -> BTreeSet<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn result(bug: &str, docs: &[&str]) -> RankedResult {
    RankedResult {
        bug_id: bug.into(),
        entries: docs
            .iter()
            .enumerate()
            .map(|(i, d)| RankedEntry {
                doc_id: d.to_string(),
                score: -(i as f32),
            })
            .collect(),
        mode: RankMode::Exact,
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-12
}

#[test]
fn reciprocal_rank_examples() {
    assert_eq!(reciprocal_rank(["a", "b"], &set(&["a"])), 1.0);
    assert_eq!(reciprocal_rank(["a", "b", "c", "d"], &set(&["d"])), 0.25);
    assert_eq!(reciprocal_rank(["a", "b"], &set(&["z"])), 0.0);
}

#[test]
fn mrr_examples() {
    let q: Qrels = [("1".into(), set(&["a"])), ("2".into(), set(&["a"]))].into();
    let rs = [result("1", &["a"]), result("2", &["b", "a"])];
    assert_eq!(mrr(&rs, &q).unwrap(), 0.75);
    let one: Qrels = [("1".into(), set(&["c"]))].into();
    assert!(close(
        mrr(&[result("1", &["a", "b", "c"])], &one).unwrap(),
        1.0 / 3.0
    ));
    // bug with no result counts as a miss
    let q3: Qrels = [("1".into(), set(&["a"])), ("9".into(), set(&["a"]))].into();
    assert_eq!(mrr(&[result("1", &["a"])], &q3).unwrap(), 0.5);
    assert!(matches!(mrr(&[], &Qrels::new()), Err(EvalError::NoQueries)));
}

#[test]
fn average_precision_examples() {
    assert_eq!(average_precision(["a", "b"], &set(&["a", "b"])), 1.0);
    assert_eq!(average_precision(["x", "a"], &set(&["a"])), 0.5);
    assert!(close(
        average_precision(["a", "x", "b"], &set(&["a", "b"])),
        (1.0 + 2.0 / 3.0) / 2.0
    ));
    // unretrieved item halves the mean
    assert_eq!(average_precision(["a"], &set(&["a", "b"])), 0.5);
}

#[test]
fn map_examples() {
    let q: Qrels = [("1".into(), set(&["a"])), ("2".into(), set(&["a"]))].into();
    assert_eq!(
        map(&[result("1", &["a"]), result("2", &["b", "a"])], &q).unwrap(),
        0.75
    );
    // (1 + (1/2 + 2/4)/2 + 0) / 3
    let q3: Qrels = [
        ("1".into(), set(&["a"])),
        ("2".into(), set(&["b", "d"])),
        ("3".into(), set(&["q"])),
    ]
    .into();
    let rs = [
        result("1", &["a"]),
        result("2", &["a", "b", "c", "d"]),
        result("3", &["a"]),
    ];
    assert!(close(map(&rs, &q3).unwrap(), 0.5));
}

#[test]
fn precision_examples() {
    assert_eq!(
        precision_at_k(["a", "x", "b", "y", "z"], &set(&["a", "b"]), 5),
        0.4
    );
    assert_eq!(precision_at_k(["a"], &set(&["a"]), 1), 1.0);
    assert_eq!(precision_at_k(["a", "b"], &set(&["a", "b"]), 5), 0.4);
    assert!(mean_precision_at_k(&[], &[("1".into(), set(&["a"]))].into(), 0).is_err());
}

fn bug(summary: &str, description: &str) -> BugReport {
    BugReport {
        bug_id: "B".into(),
        summary: summary.into(),
        description: description.into(),
        opened_at: None,
    }
}

#[test]
fn categorize_examples() {
    let gold = set(&["ManagerServlet", "Request"]);
    assert_eq!(
        categorize(
            &bug("Deploy fails", "stack overflow when undeploying"),
            &gold
        )
        .unwrap(),
        BugCategory::NotLocalized
    );
    assert_eq!(
        categorize(
            &bug("NPE in ManagerServlet.java", "see org.apache.Request"),
            &gold
        )
        .unwrap(),
        BugCategory::FullyLocalized
    );
    let three = set(&["A", "Bee", "Sea"]);
    assert_eq!(
        categorize(&bug("Bee breaks", ""), &three).unwrap(),
        BugCategory::PartiallyLocalized
    );
}

#[test]
fn categorize_is_exact_and_case_sensitive() {
    let gold = set(&["Request"]);
    for text in [
        "request handling",
        "RequestFacade leak",
        "MyRequest",
        "Request_x",
    ] {
        assert_eq!(
            categorize(&bug(text, ""), &gold).unwrap(),
            BugCategory::NotLocalized,
            "{text}"
        );
    }
    for text in ["(Request)", "Request.process()", "a.b.Request", "Request"] {
        assert_eq!(
            categorize(&bug(text, ""), &gold).unwrap(),
            BugCategory::FullyLocalized,
            "{text}"
        );
    }
    assert!(matches!(
        categorize(&bug("x", ""), &BTreeSet::new()),
        Err(EvalError::EmptyGoldSet(_))
    ));
}

#[test]
fn report_groups() {
    let q: Qrels = [
        ("1".into(), set(&["a"])),
        ("2".into(), set(&["a"])),
        ("3".into(), set(&["a"])),
    ]
    .into();
    let rs = [
        result("1", &["a"]),
        result("2", &["b", "a"]),
        result("3", &["b"]),
    ];
    let cats: BTreeMap<String, BugCategory> = [
        ("1".into(), BugCategory::FullyLocalized),
        ("2".into(), BugCategory::NotLocalized),
        ("3".into(), BugCategory::PartiallyLocalized),
    ]
    .into();
    let r = report(&rs, &q, &cats).unwrap();
    assert!(close(r.overall.mrr, 0.5));
    assert_eq!(r.by_category["FL"].mrr, 1.0);
    assert_eq!(r.by_category["NL"].mrr, 0.5);
    assert_eq!(r.by_category["PL"].mrr, 0.0);
    assert_eq!(r.by_category["NL+PL"].queries, 2);
    assert!(close(r.by_category["NL+PL"].mrr, 0.25));
    let json = serde_json::to_value(&r).unwrap();
    assert!(json["overall"]["p@1"].is_number());
}

fn arb_ranking() -> impl Strategy<Value = (Vec<String>, BTreeSet<String>)> {
    (
        prop::sample::subsequence((0..12).map(|i| format!("d{i}")).collect::<Vec<_>>(), 0..=12)
            .prop_shuffle(),
        prop::collection::btree_set((0..15usize).prop_map(|i| format!("d{i}")), 1..5),
    )
}

proptest! {
    #[test]
    fn metrics_in_unit_interval((ranking, rel) in arb_ranking(), k in 1usize..10) {
        let r = || ranking.iter().map(String::as_str);
        for v in [reciprocal_rank(r(), &rel), average_precision(r(), &rel), precision_at_k(r(), &rel, k)] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn single_relevant_ap_equals_rr((ranking, _) in arb_ranking(), target in 0usize..15) {
        let rel = set(&[&format!("d{target}")]);
        let r = || ranking.iter().map(String::as_str);
        prop_assert_eq!(average_precision(r(), &rel), reciprocal_rank(r(), &rel));
    }

    #[test]
    fn hit_count_non_decreasing_in_k((ranking, rel) in arb_ranking()) {
        let r = || ranking.iter().map(String::as_str);
        let mut last = 0.0;
        for k in 1..=14 {
            let c = precision_at_k(r(), &rel, k) * k as f64;
            prop_assert!(c + 1e-9 >= last);
            last = c;
        }
    }

    #[test]
    fn bug_order_does_not_matter((ranking, rel) in arb_ranking(), (r2, rel2) in arb_ranking()) {
        let a = result("a", &ranking.iter().map(String::as_str).collect::<Vec<_>>());
        let b = result("b", &r2.iter().map(String::as_str).collect::<Vec<_>>());
        let q: Qrels = [("a".into(), rel), ("b".into(), rel2)].into();
        let fwd = [a.clone(), b.clone()];
        let rev = [b, a];
        prop_assert_eq!(mrr(&fwd, &q).unwrap(), mrr(&rev, &q).unwrap());
        prop_assert_eq!(map(&fwd, &q).unwrap(), map(&rev, &q).unwrap());
    }
}
