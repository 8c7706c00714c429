//! Distant supervision: pick, for each dialogue, the KB row whose cell values
//! are mentioned most often anywhere in the conversation.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dialogue, KnowledgeBase, PAD};
use crate::error::{Error, Result};

/// Weakly labeled retrieval target for one dialogue. Every turn of the
/// dialogue shares it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeakLabel {
    pub id: usize,
    pub row: usize,
    pub scores: Vec<usize>,
    pub tie: bool,
}

/// The dialogue as a flat word sequence, with canonical multi-word tokens
/// split back into their words.
pub struct DialogueWords(Vec<String>);

impl DialogueWords {
    pub fn new(dialogue: &Dialogue) -> Self {
        DialogueWords(
            dialogue
                .all_tokens()
                .flat_map(|t| t.split('_'))
                .filter(|w| !w.is_empty())
                .map(str::to_string)
                .collect(),
        )
    }

    /// True when the words of `value` occur contiguously.
    pub fn contains_span(&self, value: &str) -> bool {
        if value == PAD || value.is_empty() {
            return false;
        }
        let parts: Vec<&str> = value.split('_').filter(|p| !p.is_empty()).collect();
        if parts.is_empty() || parts.len() > self.0.len() {
            return false;
        }
        self.0
            .windows(parts.len())
            .any(|w| w.iter().zip(&parts).all(|(a, b)| a == b))
    }
}

/// Number of cells of `row` whose value is mentioned in the dialogue. Each
/// cell counts at most once; padding never matches.
pub fn row_similarity(row: &[String], words: &DialogueWords) -> usize {
    row.iter().filter(|cell| words.contains_span(cell)).count()
}

pub fn row_similarities(kb: &KnowledgeBase, words: &DialogueWords) -> Vec<usize> {
    kb.rows().iter().map(|r| row_similarity(r, words)).collect()
}

/// Argmax of the row similarities; the lowest row index wins ties.
pub fn label_dialogue(dialogue: &Dialogue) -> WeakLabel {
    let words = DialogueWords::new(dialogue);
    let scores = row_similarities(&dialogue.kb, &words);
    let best = scores.iter().copied().max().unwrap_or(0);
    let row = scores.iter().position(|&s| s == best).unwrap_or(0);
    let tie = scores.iter().filter(|&&s| s == best).count() > 1;
    WeakLabel {
        id: dialogue.id,
        row,
        scores,
        tie,
    }
}

pub fn label_dataset(dialogues: &[Dialogue]) -> Vec<WeakLabel> {
    dialogues.par_iter().map(label_dialogue).collect()
}

/// Labels keyed by dialogue id.
#[derive(Clone, Debug, Default)]
pub struct LabelSet(BTreeMap<usize, WeakLabel>);

impl LabelSet {
    pub fn new(labels: impl IntoIterator<Item = WeakLabel>) -> Self {
        LabelSet(labels.into_iter().map(|l| (l.id, l)).collect())
    }

    pub fn get(&self, id: usize) -> Result<&WeakLabel> {
        self.0.get(&id).ok_or(Error::MissingLabel(id))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &WeakLabel> {
        self.0.values()
    }

    /// Errors with the first dialogue that has no label.
    pub fn check_covers(&self, dialogues: &[Dialogue]) -> Result<()> {
        for d in dialogues {
            self.get(d.id)?;
        }
        Ok(())
    }
}

pub fn write_labels<W: Write>(labels: &[WeakLabel], mut w: W) -> std::io::Result<()> {
    for l in labels {
        serde_json::to_writer(&mut w, l)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_labels<R: BufRead>(r: R, source: &str) -> Result<Vec<WeakLabel>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::parse(format!("{source}: line {}", n + 1), e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::parse(format!("{source}: line {}", n + 1), e))?,
        );
    }
    Ok(out)
}

/// Single-row support proportions for one domain.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SupportStats {
    pub responses: usize,
    pub with_entities: usize,
    /// Responses whose entities all lie in the labeled row.
    pub supported: usize,
    /// Responses none of whose entities occur anywhere in the KB.
    pub unsupported_by_any_row: usize,
    /// `supported / with_entities`; entity-free responses are excluded.
    pub strict: Option<f64>,
    /// Entity-free responses and responses no KB row can support count as
    /// supported; the denominator is every response.
    pub lenient: Option<f64>,
}

/// Per-domain fraction of system responses whose gold entities are all
/// contained in the dialogue's labeled row.
pub fn support_analysis(
    dialogues: &[Dialogue],
    labels: &LabelSet,
) -> Result<BTreeMap<String, SupportStats>> {
    let mut out: BTreeMap<String, SupportStats> = BTreeMap::new();
    for d in dialogues {
        let row = d.kb.row(labels.get(d.id)?.row);
        let stats = out.entry(d.domain().to_string()).or_default();
        for t in &d.turns {
            stats.responses += 1;
            if t.gold_entities.is_empty() {
                continue;
            }
            stats.with_entities += 1;
            if t.gold_entities.iter().all(|e| row.contains(e)) {
                stats.supported += 1;
            } else if t.gold_entities.iter().all(|e| d.kb.find(e).is_none()) {
                stats.unsupported_by_any_row += 1;
            }
        }
    }
    for s in out.values_mut() {
        s.strict = (s.with_entities > 0).then(|| s.supported as f64 / s.with_entities as f64);
        let free = s.responses - s.with_entities;
        s.lenient = (s.responses > 0)
            .then(|| (s.supported + free + s.unsupported_by_any_row) as f64 / s.responses as f64);
    }
    Ok(out)
}
