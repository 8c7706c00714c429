use std::fs;
use std::io::{self, BufRead, Write};

use kbdialog_core::corpus::PAD;
use kbdialog_core::{EntityLexicon, KnowledgeBase, Model, ModelSet};
use serde::Deserialize;

use crate::args::ChatArgs;
use crate::error::{CliError, CliResult};

#[derive(Deserialize)]
struct KbFile {
    #[serde(default)]
    domain: Option<String>,
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_kb(args: &ChatArgs) -> CliResult<KnowledgeBase> {
    let path = &args.kb;
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let raw: KbFile =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: malformed KB: {e}", path.display())))?;
    let domain = args.domain.clone().or(raw.domain).unwrap_or_default();
    Ok(KnowledgeBase::new(&domain, raw.columns, raw.rows)?)
}

/// Entities of the KB and of everything the model saw in training, so that
/// multi-word values typed by the user merge the same way they did then.
fn lexicon(model: &Model, kb: &KnowledgeBase) -> EntityLexicon {
    let mut lex = EntityLexicon::from_kbs([kb]);
    for v in model.meta.values.words() {
        if v != PAD {
            lex.insert(kb.domain(), v);
        }
    }
    lex
}

fn mean_columns(steps: &[Vec<f64>], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for s in steps {
        for (o, x) in out.iter_mut().zip(s) {
            *o += x;
        }
    }
    if !steps.is_empty() {
        out.iter_mut().for_each(|o| *o /= steps.len() as f64);
    }
    out
}

pub fn run(args: &ChatArgs) -> CliResult<()> {
    let models = ModelSet::load(&args.ckpt)?;
    let kb = read_kb(args)?;
    let model = models
        .for_domain(kb.domain())
        .ok_or_else(|| CliError::Usage(format!("no model for domain `{}`; pass --domain", kb.domain())))?;
    let lex = lexicon(model, &kb);
    let mut history: Vec<String> = Vec::new();
    let stdin = io::stdin();
    let mut out = io::stdout().lock();
    let fail = |e: io::Error| CliError::Runtime(format!("stdout: {e}"));
    for line in stdin.lock().lines() {
        let line = line.map_err(|e| CliError::Runtime(format!("stdin: {e}")))?;
        match line.trim() {
            "" => continue,
            ":quit" => break,
            ":reset" => {
                history.clear();
                eprintln!("history cleared");
                continue;
            }
            text => history.extend(lex.tokenize(text)),
        }
        let r = model.retrieve(&history, &kb)?;
        let g = model.generate(&history, &kb, &r, args.max_len)?;
        writeln!(out, "{}", g.text()).map_err(fail)?;
        if args.show_retrieval {
            let steps: Vec<Vec<f64>> = g.steps.iter().map(|s| s.column_scores.clone()).collect();
            let cols: Vec<String> = kb
                .columns()
                .iter()
                .zip(mean_columns(&steps, kb.num_cols()))
                .map(|(c, s)| format!("{c}={s:.4}"))
                .collect();
            writeln!(out, "row {} | {}", r.row, cols.join(" ")).map_err(fail)?;
        }
        out.flush().map_err(fail)?;
        history.extend(g.tokens);
    }
    Ok(())
}
