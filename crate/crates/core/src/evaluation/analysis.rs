use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{extract_entities, consistency_recall, predict, RowChoice};
use crate::corpus::{Dialogue, EntityLexicon, KnowledgeBase};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::weak_labels::{LabelSet, WeakLabel};

/// Consistency of generated responses over KBs cut down to `rows` rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowsPoint {
    pub rows: usize,
    pub dialogues: usize,
    pub qualifying: usize,
    pub consistency: Option<f64>,
}

/// Keeps the labeled row and the first `size - 1` other rows, in their
/// original order. Returns the new KB and the labeled row's new index, or
/// `None` when the KB has fewer than `size` rows.
pub fn truncate_kb(kb: &KnowledgeBase, labeled: usize, size: usize) -> Option<(KnowledgeBase, usize)> {
    if size == 0 || kb.num_rows() < size {
        return None;
    }
    let mut keep: Vec<usize> = (0..kb.num_rows()).filter(|&j| j != labeled).take(size - 1).collect();
    keep.push(labeled);
    keep.sort_unstable();
    let pos = keep.iter().position(|&j| j == labeled).expect("labeled row kept");
    Some((kb.select_rows(&keep), pos))
}

/// Consistency for each KB size in `sizes`. Dialogues whose KB is smaller
/// than a size are skipped at that size.
pub fn rows_vs_consistency(
    model: &Model,
    dialogues: &[Dialogue],
    labels: &LabelSet,
    lexicon: &EntityLexicon,
    sizes: &[usize],
    choice: RowChoice,
    max_len: usize,
) -> Result<Vec<RowsPoint>> {
    rows_vs_consistency_with(|_| Some(model), dialogues, labels, lexicon, sizes, choice, max_len)
}

/// [`rows_vs_consistency`] with a per-domain model lookup.
pub fn rows_vs_consistency_with<'m, F>(
    resolve: F,
    dialogues: &[Dialogue],
    labels: &LabelSet,
    lexicon: &EntityLexicon,
    sizes: &[usize],
    choice: RowChoice,
    max_len: usize,
) -> Result<Vec<RowsPoint>>
where
    F: Fn(&str) -> Option<&'m Model> + Sync,
{
    let mut out = Vec::with_capacity(sizes.len());
    for &s in sizes {
        let mut cut = Vec::new();
        let mut cut_labels = Vec::new();
        for d in dialogues {
            let label = labels.get(d.id)?;
            if let Some((kb, row)) = truncate_kb(&d.kb, label.row, s) {
                cut.push(d.with_kb(kb));
                cut_labels.push(WeakLabel {
                    id: d.id,
                    row,
                    scores: Vec::new(),
                    tie: label.tie,
                });
            }
        }
        let cut_labels = LabelSet::new(cut_labels);
        let preds = predict(&resolve, &cut, choice, &cut_labels, max_len)?;
        let sets: Vec<_> = preds
            .iter()
            .map(|p| extract_entities(&p.tokens, &cut[p.dialogue].kb, lexicon))
            .collect();
        let rows: Vec<&[String]> = preds
            .iter()
            .map(|p| {
                let d = &cut[p.dialogue];
                Ok(d.kb.row(cut_labels.get(d.id)?.row))
            })
            .collect::<Result<_>>()?;
        let c = consistency_recall(sets.iter().zip(rows));
        out.push(RowsPoint {
            rows: s,
            dialogues: cut.len(),
            qualifying: c.qualifying,
            consistency: c.recall,
        });
    }
    Ok(out)
}

pub fn write_rows_csv<W: Write>(points: &[RowsPoint], mut w: W) -> std::io::Result<()> {
    writeln!(w, "rows,dialogues,qualifying,consistency")?;
    for p in points {
        let c = p.consistency.map(|x| format!("{x:.6}")).unwrap_or_default();
        writeln!(w, "{},{},{},{}", p.rows, p.dialogues, p.qualifying, c)?;
    }
    Ok(())
}

/// `|R| x |C|` entity-block probabilities at decode step `step` of turn
/// `turn`, with the reference response forced as the decoder prefix.
pub fn score_distribution(
    model: &Model,
    dialogue: &Dialogue,
    turn: usize,
    step: usize,
    choice: RowChoice,
    labels: &LabelSet,
) -> Result<Vec<Vec<f64>>> {
    if turn >= dialogue.turns.len() {
        return Err(Error::StepOutOfRange {
            step: turn,
            len: dialogue.turns.len(),
        });
    }
    let retrieval = choice.select(model, dialogue, turn, labels)?;
    let traces = model.trace_reference(
        &dialogue.history(turn),
        &dialogue.turns[turn].system,
        &dialogue.kb,
        &retrieval,
    )?;
    let trace = traces.get(step).ok_or(Error::StepOutOfRange { step, len: traces.len() })?;
    Ok(trace
        .entity_probs
        .chunks(dialogue.kb.num_cols())
        .map(<[f64]>::to_vec)
        .collect())
}

/// Heatmap CSV: a header of column names, then one line per KB row.
pub fn write_grid_csv<W: Write>(kb: &KnowledgeBase, grid: &[Vec<f64>], mut w: W) -> std::io::Result<()> {
    writeln!(w, "row,{}", kb.columns().join(","))?;
    for (j, r) in grid.iter().enumerate() {
        let cells: Vec<String> = r.iter().map(|p| format!("{p:.6e}")).collect();
        writeln!(w, "{j},{}", cells.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kb(rows: usize) -> KnowledgeBase {
        KnowledgeBase::new(
            "x",
            vec!["a".into(), "b".into()],
            (0..rows).map(|j| vec![format!("a{j}"), format!("b{j}")]).collect(),
        )
        .unwrap()
    }

    #[test]
    fn truncation_keeps_the_labeled_row() {
        let k = kb(6);
        let (t, pos) = truncate_kb(&k, 4, 3).unwrap();
        assert_eq!(t.rows().iter().map(|r| r[0].as_str()).collect::<Vec<_>>(), ["a0", "a1", "a4"]);
        assert_eq!(pos, 2);
        let (t, pos) = truncate_kb(&k, 0, 1).unwrap();
        assert_eq!((t.num_rows(), pos), (1, 0));
        assert!(truncate_kb(&k, 0, 7).is_none());
    }

    #[test]
    fn rows_csv_leaves_missing_values_blank() {
        let mut buf = Vec::new();
        let pts = [
            RowsPoint { rows: 1, dialogues: 3, qualifying: 2, consistency: Some(1.0) },
            RowsPoint { rows: 2, dialogues: 3, qualifying: 0, consistency: None },
        ];
        write_rows_csv(&pts, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "rows,dialogues,qualifying,consistency\n1,3,2,1.000000\n2,3,0,\n"
        );
    }
}
