//! Dialogues, their knowledge bases, and dataset I/O.

mod formats;
pub mod synthetic;
mod text;
mod vocab;

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use formats::{
    load_dataset, normalize, parse_camrest, parse_incar, parse_native, split_forecast,
    write_native, DatasetFormat, RawDialogue,
};
pub use text::{canonicalize, words, EntityLexicon, PAD};
pub use vocab::{Vocabulary, ENT, ENT_ID, EOS, EOS_ID, SOS, SOS_ID, UNK, UNK_ID};

use crate::error::{Error, Result};

/// Row-major index of cell `(row, col)` in a `rows x cols` grid.
pub fn flatten_index(row: usize, col: usize, rows: usize, cols: usize) -> Result<usize> {
    if row >= rows || col >= cols {
        return Err(Error::CellOutOfRange { row, col, rows, cols });
    }
    Ok(row * cols + col)
}

pub fn unflatten_index(index: usize, rows: usize, cols: usize) -> Result<(usize, usize)> {
    if cols == 0 || index >= rows * cols {
        return Err(Error::EntityOutOfRange {
            index,
            cells: rows * cols,
        });
    }
    Ok((index / cols, index % cols))
}

/// A single relational table of canonical cell values.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    domain: String,
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl KnowledgeBase {
    /// Canonicalizes names and cells, pads missing cells with [`PAD`], and
    /// gives an empty table a single all-padding row.
    pub fn new(domain: &str, columns: Vec<String>, rows: Vec<Vec<String>>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::Empty("knowledge base columns"));
        }
        let columns: Vec<String> = columns.iter().map(|c| canonical_or_pad(c)).collect();
        let width = columns.len();
        let mut out = Vec::with_capacity(rows.len().max(1));
        for (j, row) in rows.into_iter().enumerate() {
            if row.len() > width {
                return Err(Error::NonRectangular {
                    row: j,
                    found: row.len(),
                    expected: width,
                });
            }
            let mut cells: Vec<String> = row.iter().map(|c| canonical_or_pad(c)).collect();
            cells.resize(width, PAD.to_string());
            out.push(cells);
        }
        if out.is_empty() {
            out.push(vec![PAD.to_string(); width]);
        }
        Ok(KnowledgeBase {
            domain: domain.to_string(),
            columns,
            rows: out,
        })
    }

    pub fn domain(&self) -> &str {
        &self.domain
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn row(&self, j: usize) -> &[String] {
        &self.rows[j]
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_cols(&self) -> usize {
        self.columns.len()
    }

    /// `|E| = |R| · |C|`.
    pub fn num_cells(&self) -> usize {
        self.num_rows() * self.num_cols()
    }

    pub fn cell(&self, row: usize, col: usize) -> &str {
        &self.rows[row][col]
    }

    /// Cell at flattened index `e`.
    pub fn entity(&self, e: usize) -> Result<&str> {
        let (j, k) = unflatten_index(e, self.num_rows(), self.num_cols())?;
        Ok(self.cell(j, k))
    }

    /// Cells in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = &str> {
        self.rows.iter().flatten().map(String::as_str)
    }

    pub fn is_rectangular(&self) -> bool {
        self.rows.iter().all(|r| r.len() == self.columns.len())
    }

    /// Flattened index of the first cell holding `value` in row `row`.
    pub fn find_in_row(&self, row: usize, value: &str) -> Option<usize> {
        self.rows[row]
            .iter()
            .position(|c| c == value)
            .map(|k| row * self.num_cols() + k)
    }

    /// Flattened index of the first cell holding `value`, row-major.
    pub fn find(&self, value: &str) -> Option<usize> {
        self.cells().position(|c| c == value)
    }

    /// Copy keeping only the listed rows, in the given order.
    pub fn select_rows(&self, keep: &[usize]) -> KnowledgeBase {
        KnowledgeBase {
            domain: self.domain.clone(),
            columns: self.columns.clone(),
            rows: keep.iter().map(|&j| self.rows[j].clone()).collect(),
        }
    }
}

fn canonical_or_pad(value: &str) -> String {
    let c = canonicalize(value);
    if c.is_empty() {
        PAD.to_string()
    } else {
        c
    }
}

/// One user utterance and the system response to it, already tokenized.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Turn {
    pub user: Vec<String>,
    pub system: Vec<String>,
    /// Entity tokens appearing in the reference response.
    pub gold_entities: BTreeSet<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dialogue {
    /// Position in the dataset file it was loaded from.
    pub id: usize,
    pub kb: KnowledgeBase,
    pub turns: Vec<Turn>,
}

impl Dialogue {
    pub fn domain(&self) -> &str {
        self.kb.domain()
    }

    /// Tokens of `(u_1, s_1, ..., s_{i-1}, u_i)` for 0-based turn `i`.
    pub fn history(&self, i: usize) -> Vec<String> {
        let mut out = Vec::new();
        for t in &self.turns[..i] {
            out.extend(t.user.iter().cloned());
            out.extend(t.system.iter().cloned());
        }
        out.extend(self.turns[i].user.iter().cloned());
        out
    }

    /// Every user and system token of the dialogue in order.
    pub fn all_tokens(&self) -> impl Iterator<Item = &String> {
        self.turns.iter().flat_map(|t| t.user.iter().chain(t.system.iter()))
    }

    pub fn with_kb(&self, kb: KnowledgeBase) -> Dialogue {
        Dialogue {
            id: self.id,
            kb,
            turns: self.turns.clone(),
        }
    }
}

/// Loads a native dataset and the lexicon derived from its KBs.
pub fn load_native(path: &Path) -> Result<(Vec<Dialogue>, EntityLexicon)> {
    let dialogues = load_dataset(path, DatasetFormat::Native)?;
    let lexicon = EntityLexicon::from_kbs(dialogues.iter().map(|d| &d.kb));
    Ok((dialogues, lexicon))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatten_examples() {
        assert_eq!(flatten_index(0, 0, 4, 5).unwrap(), 0);
        assert_eq!(flatten_index(3, 2, 4, 5).unwrap(), 17);
        assert!(flatten_index(4, 0, 4, 5).is_err());
        assert!(flatten_index(0, 5, 4, 5).is_err());
        assert!(unflatten_index(20, 4, 5).is_err());
    }

    #[test]
    fn flatten_round_trip_on_4x6() {
        let mut seen = BTreeSet::new();
        for j in 0..4 {
            for k in 0..6 {
                let e = flatten_index(j, k, 4, 6).unwrap();
                assert_eq!(unflatten_index(e, 4, 6).unwrap(), (j, k));
                seen.insert(e);
            }
        }
        assert_eq!(seen.into_iter().collect::<Vec<_>>(), (0..24).collect::<Vec<_>>());
    }

    #[test]
    fn kb_pads_short_rows_and_empty_tables() {
        let kb = KnowledgeBase::new(
            "calendar",
            vec!["event".into(), "time".into()],
            vec![vec!["Dinner".into()]],
        )
        .unwrap();
        assert_eq!(kb.row(0), ["dinner", "-"]);
        let empty = KnowledgeBase::new("calendar", vec!["event".into(), "time".into()], vec![]).unwrap();
        assert_eq!(empty.rows(), [vec!["-".to_string(), "-".to_string()]]);
    }

    #[test]
    fn kb_rejects_long_rows() {
        let err = KnowledgeBase::new("x", vec!["a".into()], vec![vec!["1".into(), "2".into()]]);
        assert!(matches!(err, Err(Error::NonRectangular { row: 0, found: 2, expected: 1 })));
    }

    #[test]
    fn history_concatenates_previous_turns() {
        let t = |u: &str, s: &str| Turn {
            user: vec![u.to_string()],
            system: vec![s.to_string()],
            gold_entities: BTreeSet::new(),
        };
        let d = Dialogue {
            id: 0,
            kb: KnowledgeBase::new("x", vec!["a".into()], vec![]).unwrap(),
            turns: vec![t("u1", "s1"), t("u2", "s2")],
        };
        assert_eq!(d.history(0), ["u1"]);
        assert_eq!(d.history(1), ["u1", "s1", "u2"]);
    }
}
