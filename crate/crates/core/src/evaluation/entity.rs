use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{EntityLexicon, KnowledgeBase, PAD};
use crate::error::{Error, Result};

/// Pooled precision, recall and F1 with the underlying counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl Prf {
    pub fn from_counts(true_positives: usize, predicted: usize, gold: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(true_positives, predicted);
        let recall = ratio(true_positives, gold);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf {
            precision,
            recall,
            f1,
            true_positives,
            predicted,
            gold,
        }
    }
}

/// Micro-averaged entity scores: set intersections are counted per
/// response and pooled before dividing.
pub fn micro_entity_f1(pred: &[BTreeSet<String>], gold: &[BTreeSet<String>]) -> Result<Prf> {
    if pred.len() != gold.len() {
        return Err(Error::LengthMismatch {
            what: "entity sets",
            left: pred.len(),
            right: gold.len(),
        });
    }
    let (mut tp, mut np, mut ng) = (0, 0, 0);
    for (p, g) in pred.iter().zip(gold) {
        tp += p.intersection(g).count();
        np += p.len();
        ng += g.len();
    }
    Ok(Prf::from_counts(tp, np, ng))
}

/// Entity tokens of a generated response: members of the dialogue's own KB
/// cells or of the dataset lexicon.
pub fn extract_entities(tokens: &[String], kb: &KnowledgeBase, lexicon: &EntityLexicon) -> BTreeSet<String> {
    tokens
        .iter()
        .filter(|t| t.as_str() != PAD && (lexicon.contains(t) || kb.cells().any(|c| c == t.as_str())))
        .cloned()
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Consistency {
    /// Responses with at least two entities.
    pub qualifying: usize,
    /// Qualifying responses whose entities all sit in the labeled row.
    pub consistent: usize,
    /// `consistent / qualifying`; absent when nothing qualifies.
    pub recall: Option<f64>,
}

/// Pairs of (response entities, labeled row cells).
pub fn consistency_recall<'a, I>(items: I) -> Consistency
where
    I: IntoIterator<Item = (&'a BTreeSet<String>, &'a [String])>,
{
    let mut c = Consistency::default();
    for (entities, row) in items {
        if entities.len() < 2 {
            continue;
        }
        c.qualifying += 1;
        if entities.iter().all(|e| row.contains(e)) {
            c.consistent += 1;
        }
    }
    if c.qualifying > 0 {
        c.recall = Some(c.consistent as f64 / c.qualifying as f64);
    }
    c
}
