use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::text::{EntityLexicon, PAD};
use super::{Dialogue, KnowledgeBase, Turn};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetFormat {
    /// JSON lines, one dialogue per line (see [`write_native`]).
    Native,
    /// The Stanford in-car assistant release: a JSON array of
    /// `{"dialogue": [...], "scenario": {"kb": ..., "task": ...}}`.
    InCar,
    /// CamRest dialogues with an attached KB: a JSON array of
    /// `{"dial": [{"usr": {"transcript"}, "sys": {"sent"}}], "kb": [{col: value}]}`.
    CamRest,
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "native" => Ok(DatasetFormat::Native),
            "incar" => Ok(DatasetFormat::InCar),
            "camrest" => Ok(DatasetFormat::CamRest),
            other => Err(Error::Config {
                key: "format".into(),
                message: format!("unknown dataset format `{other}`"),
            }),
        }
    }
}

/// A dialogue before canonicalization and tokenization.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawDialogue {
    pub domain: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// `(user, system)` utterance pairs.
    pub turns: Vec<(String, String)>,
}

#[derive(Serialize, Deserialize)]
struct NativeKb {
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct NativeTurn {
    user: String,
    system: String,
}

#[derive(Serialize, Deserialize)]
struct NativeRecord {
    domain: String,
    kb: NativeKb,
    turns: Vec<NativeTurn>,
}

pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<Vec<Dialogue>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    let raw = match format {
        DatasetFormat::Native => parse_native(&text, &name)?,
        DatasetFormat::InCar => parse_incar(&text, &name)?,
        DatasetFormat::CamRest => parse_camrest(&text, &name)?,
    };
    normalize(raw, &name)
}

/// Builds rectangular canonical KBs, the dataset lexicon, and tokenized
/// turns with gold entity annotations.
pub fn normalize(raw: Vec<RawDialogue>, source: &str) -> Result<Vec<Dialogue>> {
    let kbs = raw
        .iter()
        .map(|r| KnowledgeBase::new(&r.domain, r.columns.clone(), r.rows.clone()))
        .collect::<Result<Vec<_>>>()?;
    let lexicon = EntityLexicon::from_kbs(&kbs);
    let mut out = Vec::with_capacity(raw.len());
    for (id, (r, kb)) in raw.into_iter().zip(kbs).enumerate() {
        let mut turns = Vec::with_capacity(r.turns.len());
        for (user, system) in r.turns {
            let user = lexicon.tokenize(&user);
            let system = lexicon.tokenize(&system);
            let gold_entities = lexicon.entities_in(&system);
            turns.push(Turn {
                user,
                system,
                gold_entities,
            });
        }
        if turns.first().is_some_and(|t| t.user.is_empty()) {
            return Err(Error::parse(
                format!("{source}: record {}", id + 1),
                "first user utterance is empty",
            ));
        }
        out.push(Dialogue { id, kb, turns });
    }
    Ok(out)
}

pub fn parse_native(text: &str, source: &str) -> Result<Vec<RawDialogue>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: NativeRecord = serde_json::from_str(line)
            .map_err(|e| Error::parse(format!("{source}: line {}", n + 1), e))?;
        out.push(RawDialogue {
            domain: rec.domain,
            columns: rec.kb.columns,
            rows: rec.kb.rows,
            turns: rec.turns.into_iter().map(|t| (t.user, t.system)).collect(),
        });
    }
    Ok(out)
}

/// Writes normalized dialogues as native JSON lines.
pub fn write_native<W: Write>(dialogues: &[Dialogue], mut w: W) -> std::io::Result<()> {
    for d in dialogues {
        let rec = NativeRecord {
            domain: d.domain().to_string(),
            kb: NativeKb {
                columns: d.kb.columns().to_vec(),
                rows: d.kb.rows().to_vec(),
            },
            turns: d
                .turns
                .iter()
                .map(|t| NativeTurn {
                    user: t.user.join(" "),
                    system: t.system.join(" "),
                })
                .collect(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

fn forecast_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)^\s*(?P<cond>.+?)\s*,\s*low of\s*(?P<low>[^,]+?)\s*,\s*high of\s*(?P<high>[^,]+?)\s*$")
            .expect("valid regex")
    })
}

/// Splits a combined forecast such as `"rain, low of 50F, high of 60F"`
/// into `[high, low, condition]`. Unparseable text is kept as the condition.
pub fn split_forecast(cell: &str) -> [String; 3] {
    match forecast_re().captures(cell) {
        Some(c) => [c["high"].to_string(), c["low"].to_string(), c["cond"].to_string()],
        None => [PAD.to_string(), PAD.to_string(), cell.to_string()],
    }
}

fn value_to_string(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => PAD.to_string(),
        other => other.to_string(),
    }
}

fn incar_domain(intent: &str) -> String {
    match intent {
        "schedule" => "calendar".to_string(),
        "navigate" | "navigation" => "navigate".to_string(),
        other => other.to_string(),
    }
}

const CALENDAR_COLUMNS: &[&str] = &["event", "time", "date", "room", "agenda", "party"];

pub fn parse_incar(text: &str, source: &str) -> Result<Vec<RawDialogue>> {
    let root: Value = serde_json::from_str(text).map_err(|e| Error::parse(source, e))?;
    let records = root
        .as_array()
        .ok_or_else(|| Error::parse(source, "expected a JSON array of dialogues"))?;
    let mut out = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let loc = || format!("{source}: record {}", i + 1);
        let scenario = rec.get("scenario").ok_or_else(|| Error::parse(loc(), "missing `scenario`"))?;
        let intent = scenario
            .pointer("/task/intent")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::parse(loc(), "missing `scenario.task.intent`"))?;
        let domain = incar_domain(intent);
        let kb = scenario.get("kb").cloned().unwrap_or(Value::Null);
        let items: Vec<&serde_json::Map<String, Value>> = kb
            .get("items")
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(Value::as_object).collect())
            .unwrap_or_default();
        let mut columns: Vec<String> = kb
            .get("column_names")
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(Value::as_str).map(str::to_string).collect())
            .unwrap_or_default();
        if columns.is_empty() {
            if let Some(first) = items.first() {
                columns = first.keys().cloned().collect();
            } else if domain == "calendar" {
                columns = CALENDAR_COLUMNS.iter().map(|s| s.to_string()).collect();
            } else {
                return Err(Error::parse(loc(), "KB has neither column names nor items"));
            }
        }
        let mut rows: Vec<Vec<String>> = items
            .iter()
            .map(|item| {
                columns
                    .iter()
                    .map(|c| item.get(c).map_or_else(|| PAD.to_string(), value_to_string))
                    .collect()
            })
            .collect();
        if domain == "weather" {
            (columns, rows) = split_weather_columns(columns, rows);
        }

        let utterances = rec
            .get("dialogue")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::parse(loc(), "missing `dialogue` array"))?;
        let mut speakers: Vec<(bool, String)> = Vec::new();
        for u in utterances {
            let is_user = u.get("turn").and_then(Value::as_str) == Some("driver");
            let text = u
                .pointer("/data/utterance")
                .and_then(Value::as_str)
                .ok_or_else(|| Error::parse(loc(), "utterance without `data.utterance`"))?;
            match speakers.last_mut() {
                Some((who, acc)) if *who == is_user => {
                    acc.push(' ');
                    acc.push_str(text);
                }
                _ => speakers.push((is_user, text.to_string())),
            }
        }
        let turns = pair_turns(speakers);
        if turns.is_empty() {
            log::warn!("{}: no user/system pair, skipped", loc());
            continue;
        }
        out.push(RawDialogue {
            domain,
            columns,
            rows,
            turns,
        });
    }
    Ok(out)
}

/// Columns other than `location`/`today` whose cells are combined forecasts
/// become three columns: `<col>_high`, `<col>_low`, `<col>_weather`.
fn split_weather_columns(columns: Vec<String>, rows: Vec<Vec<String>>) -> (Vec<String>, Vec<Vec<String>>) {
    let split: Vec<bool> = (0..columns.len())
        .map(|k| rows.iter().any(|r| forecast_re().is_match(&r[k])))
        .collect();
    let mut new_cols = Vec::new();
    for (c, &s) in columns.iter().zip(&split) {
        if s {
            new_cols.extend([format!("{c}_high"), format!("{c}_low"), format!("{c}_weather")]);
        } else {
            new_cols.push(c.clone());
        }
    }
    let new_rows = rows
        .into_iter()
        .map(|r| {
            let mut out = Vec::with_capacity(new_cols.len());
            for (cell, &s) in r.into_iter().zip(&split) {
                if s {
                    out.extend(split_forecast(&cell));
                } else {
                    out.push(cell);
                }
            }
            out
        })
        .collect();
    (new_cols, new_rows)
}

/// Pairs alternating `(is_user, text)` runs into `(user, system)` turns,
/// dropping a leading system run and a trailing unanswered user run.
fn pair_turns(speakers: Vec<(bool, String)>) -> Vec<(String, String)> {
    let mut turns = Vec::new();
    let mut pending: Option<String> = None;
    for (is_user, text) in speakers {
        if is_user {
            pending = Some(text);
        } else if let Some(u) = pending.take() {
            turns.push((u, text));
        }
    }
    turns
}

pub fn parse_camrest(text: &str, source: &str) -> Result<Vec<RawDialogue>> {
    let root: Value = serde_json::from_str(text).map_err(|e| Error::parse(source, e))?;
    let records = root
        .as_array()
        .ok_or_else(|| Error::parse(source, "expected a JSON array of dialogues"))?;
    let mut out = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let loc = || format!("{source}: record {}", i + 1);
        let items: Vec<&serde_json::Map<String, Value>> = rec
            .get("kb")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::parse(loc(), "missing attached `kb` array"))?
            .iter()
            .filter_map(Value::as_object)
            .collect();
        let mut columns: Vec<String> = Vec::new();
        for item in &items {
            for k in item.keys() {
                if !columns.contains(k) {
                    columns.push(k.clone());
                }
            }
        }
        if columns.is_empty() {
            return Err(Error::parse(loc(), "attached KB has no columns"));
        }
        let rows = items
            .iter()
            .map(|item| {
                columns
                    .iter()
                    .map(|c| item.get(c).map_or_else(|| PAD.to_string(), value_to_string))
                    .collect()
            })
            .collect();
        let dial = rec
            .get("dial")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::parse(loc(), "missing `dial` array"))?;
        let mut turns = Vec::with_capacity(dial.len());
        for t in dial {
            let user = t.pointer("/usr/transcript").and_then(Value::as_str);
            let system = t.pointer("/sys/sent").and_then(Value::as_str);
            match (user, system) {
                (Some(u), Some(s)) => turns.push((u.to_string(), s.to_string())),
                _ => return Err(Error::parse(loc(), "turn without `usr.transcript`/`sys.sent`")),
            }
        }
        out.push(RawDialogue {
            domain: rec
                .get("domain")
                .and_then(Value::as_str)
                .unwrap_or("camrest")
                .to_string(),
            columns,
            rows,
            turns,
        });
    }
    Ok(out)
}
