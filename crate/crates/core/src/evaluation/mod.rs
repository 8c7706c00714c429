//! Automatic metrics and post-hoc analyses of generated responses.

mod analysis;
mod bleu;
mod entity;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use analysis::{
    rows_vs_consistency, rows_vs_consistency_with, score_distribution, truncate_kb, write_grid_csv, write_rows_csv, RowsPoint,
};
pub use bleu::{corpus_bleu, corpus_bleu_text};
pub use entity::{consistency_recall, extract_entities, micro_entity_f1, Consistency, Prf};

use crate::corpus::{Dialogue, EntityLexicon};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::retriever::{harden, RetrievalResult};
use crate::weak_labels::{support_analysis, LabelSet, SupportStats};

/// Where the row used for generation comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowChoice {
    /// The model's own retriever.
    Learned,
    /// The distant label.
    Oracle,
    /// A uniform row distribution, which always resolves to row 0.
    Uniform,
}

impl RowChoice {
    pub fn select(self, model: &Model, dialogue: &Dialogue, turn: usize, labels: &LabelSet) -> Result<RetrievalResult> {
        let kb = &dialogue.kb;
        match self {
            RowChoice::Learned => model.retrieve(&dialogue.history(turn), kb),
            RowChoice::Oracle => {
                let label = labels.get(dialogue.id)?;
                Ok(RetrievalResult::fixed(label.row, kb.num_rows(), kb.num_cols()))
            }
            RowChoice::Uniform => {
                let n = kb.num_rows();
                Ok(harden(&vec![1.0 / n as f64; n], kb.num_cols()))
            }
        }
    }
}

/// Generated response for one turn.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Prediction {
    /// Position of the dialogue in the evaluated slice.
    pub dialogue: usize,
    pub turn: usize,
    pub row: usize,
    pub tokens: Vec<String>,
    pub copied: Vec<usize>,
}

/// Greedy responses for every turn of every dialogue, in order.
/// `resolve` maps a domain to its model.
pub fn predict<'m, F>(
    resolve: F,
    dialogues: &[Dialogue],
    choice: RowChoice,
    labels: &LabelSet,
    max_len: usize,
) -> Result<Vec<Prediction>>
where
    F: Fn(&str) -> Option<&'m Model> + Sync,
{
    let per_dialogue: Vec<Result<Vec<Prediction>>> = dialogues
        .par_iter()
        .enumerate()
        .map(|(i, d)| {
            let model = resolve(d.domain())
                .ok_or_else(|| Error::Checkpoint(format!("no model for domain `{}`", d.domain())))?;
            (0..d.turns.len())
                .map(|t| {
                    let r = choice.select(model, d, t, labels)?;
                    let g = model.generate(&d.history(t), &d.kb, &r, max_len)?;
                    Ok(Prediction {
                        dialogue: i,
                        turn: t,
                        row: r.row,
                        tokens: g.tokens,
                        copied: g.copied,
                    })
                })
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    for p in per_dialogue {
        out.extend(p?);
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub responses: usize,
    /// Corpus BLEU-4, 0–100.
    pub bleu: f64,
    pub entity: Prf,
    pub per_domain: BTreeMap<String, Prf>,
    pub consistency: Consistency,
    /// Row-support proportions of the reference responses.
    pub support: BTreeMap<String, SupportStats>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rows_series: Option<Vec<RowsPoint>>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub dumps: Vec<PathBuf>,
}

/// Scores predictions against the references of `dialogues`, pooling all
/// responses together.
pub fn score(
    predictions: &[Prediction],
    dialogues: &[Dialogue],
    labels: &LabelSet,
    lexicon: &EntityLexicon,
) -> Result<EvalReport> {
    let mut hyps = Vec::with_capacity(predictions.len());
    let mut refs = Vec::with_capacity(predictions.len());
    let mut pred_sets: Vec<BTreeSet<String>> = Vec::with_capacity(predictions.len());
    let mut gold_sets = Vec::with_capacity(predictions.len());
    let mut domains = Vec::with_capacity(predictions.len());
    let mut rows = Vec::with_capacity(predictions.len());
    for p in predictions {
        let d = &dialogues[p.dialogue];
        let turn = &d.turns[p.turn];
        hyps.push(p.tokens.clone());
        refs.push(turn.system.clone());
        pred_sets.push(extract_entities(&p.tokens, &d.kb, lexicon));
        gold_sets.push(turn.gold_entities.clone());
        domains.push(d.domain());
        rows.push(d.kb.row(labels.get(d.id)?.row));
    }
    let mut per_domain = BTreeMap::new();
    let names: BTreeSet<&str> = domains.iter().copied().collect();
    for name in names {
        let idx: Vec<usize> = (0..domains.len()).filter(|&i| domains[i] == name).collect();
        let p: Vec<_> = idx.iter().map(|&i| pred_sets[i].clone()).collect();
        let g: Vec<_> = idx.iter().map(|&i| gold_sets[i].clone()).collect();
        per_domain.insert(name.to_string(), micro_entity_f1(&p, &g)?);
    }
    Ok(EvalReport {
        responses: predictions.len(),
        bleu: corpus_bleu(&hyps, &refs)?,
        entity: micro_entity_f1(&pred_sets, &gold_sets)?,
        per_domain,
        consistency: consistency_recall(pred_sets.iter().zip(rows)),
        support: support_analysis(dialogues, labels)?,
        rows_series: None,
        dumps: Vec::new(),
    })
}

/// [`predict`] followed by [`score`] for a single model.
pub fn evaluate_model(
    model: &Model,
    dialogues: &[Dialogue],
    labels: &LabelSet,
    lexicon: &EntityLexicon,
    max_len: usize,
) -> Result<EvalReport> {
    let preds = predict(|_| Some(model), dialogues, RowChoice::Learned, labels, max_len)?;
    score(&preds, dialogues, labels, lexicon)
}
