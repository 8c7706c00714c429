use std::collections::BTreeSet;

use kbdialog_core::evaluation::{consistency_recall, corpus_bleu, micro_entity_f1};
use proptest::prelude::*;

fn sentence() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e"]), 1..8)
        .prop_map(|v| v.into_iter().map(String::from).collect())
}

fn pairs() -> impl Strategy<Value = Vec<(Vec<String>, Vec<String>)>> {
    prop::collection::vec((sentence(), sentence()), 1..6)
}

fn entity_set() -> impl Strategy<Value = BTreeSet<String>> {
    prop::collection::btree_set(prop::sample::select(vec!["x", "y", "z", "w"]).prop_map(String::from), 0..4)
}

proptest! {
    #[test]
    fn bleu_ignores_pair_order(mut ps in pairs(), seed in any::<u64>()) {
        let (h, r): (Vec<_>, Vec<_>) = ps.iter().cloned().unzip();
        let a = corpus_bleu(&h, &r).unwrap();
        let n = ps.len();
        ps.rotate_left((seed % n as u64) as usize);
        ps.reverse();
        let (h, r): (Vec<_>, Vec<_>) = ps.into_iter().unzip();
        let b = corpus_bleu(&h, &r).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn bleu_does_not_drop_when_an_exact_pair_is_added(ps in pairs(), extra in sentence()) {
        let (mut h, mut r): (Vec<_>, Vec<_>) = ps.into_iter().unzip();
        let before = corpus_bleu(&h, &r).unwrap();
        h.push(extra.clone());
        r.push(extra);
        let after = corpus_bleu(&h, &r).unwrap();
        prop_assert!(after >= before - 1e-9, "{before} -> {after}");
        prop_assert!((0.0..=100.0 + 1e-9).contains(&after));
    }

    #[test]
    fn f1_is_the_harmonic_mean(ps in prop::collection::vec((entity_set(), entity_set()), 1..8)) {
        let (p, g): (Vec<_>, Vec<_>) = ps.into_iter().unzip();
        let s = micro_entity_f1(&p, &g).unwrap();
        let expect = if s.precision + s.recall > 0.0 {
            2.0 * s.precision * s.recall / (s.precision + s.recall)
        } else {
            0.0
        };
        prop_assert!((s.f1 - expect).abs() < 1e-12);
        prop_assert!(s.f1 <= s.precision.max(s.recall) + 1e-12);
        prop_assert!(s.f1 >= s.precision.min(s.recall) - 1e-12);
    }

    #[test]
    fn copies_from_the_labeled_row_are_consistent(
        rows in prop::collection::vec(prop::collection::vec("[a-z]{1,3}", 4), 1..6),
        picks in prop::collection::vec((0usize..4, 0usize..4), 1..10),
    ) {
        let row = &rows[0];
        let sets: Vec<BTreeSet<String>> = picks
            .iter()
            .map(|&(i, j)| [row[i].clone(), row[j].clone()].into_iter().collect())
            .collect();
        let c = consistency_recall(sets.iter().map(|s| (s, row.as_slice())));
        prop_assert_eq!(c.consistent, c.qualifying);
        if c.qualifying > 0 {
            prop_assert_eq!(c.recall, Some(1.0));
        } else {
            prop_assert_eq!(c.recall, None);
        }
    }
}

#[test]
fn perfect_match_scores_one_hundred() {
    let s: Vec<Vec<String>> = vec!["the cafe is on main street today".split(' ').map(String::from).collect()];
    assert!((corpus_bleu(&s, &s).unwrap() - 100.0).abs() < 1e-9);
}
