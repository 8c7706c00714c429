use std::path::Path;

use kbdialog_core::corpus::load_native;
use kbdialog_core::weak_labels::{label_dataset, write_labels};
use kbdialog_core::ModelSet;

use crate::args::{ModelInput, PipelineArgs, RowsArg};
use crate::commands::{emit, emit_json, evaluate, load_labels, prepared, train_config, train_into, TRAIN_REPORT};
use crate::error::{CliError, CliResult};

fn fresh(force: bool, stage: &str, out: &Path) -> bool {
    if !force && out.exists() {
        eprintln!("pipeline: skipping {stage}, {} exists", out.display());
        return false;
    }
    true
}

pub fn run(args: &PipelineArgs) -> CliResult<()> {
    let cfg = train_config(&args.overrides)?;
    let dir = &args.out;
    let train_path = dir.join("train.jsonl");
    let test_path = dir.join("test.jsonl");
    let labels_path = dir.join("train_labels.jsonl");
    let test_labels_path = dir.join("test_labels.jsonl");
    let model_dir = dir.join("model");
    let report_path = dir.join("eval_report.json");

    let mut stale = args.force;
    let inputs = [(&args.input, &train_path)]
        .into_iter()
        .chain(args.test.as_ref().map(|t| (t, &test_path)));
    for (raw, native) in inputs {
        if fresh(stale, "prepare", native) {
            let n = prepared(args.format.into(), raw, native)?;
            eprintln!("pipeline: prepared {n} dialogues into {}", native.display());
            stale = true;
        }
    }

    let labelled = [(&train_path, &labels_path)]
        .into_iter()
        .chain(args.test.as_ref().map(|_| (&test_path, &test_labels_path)));
    for (native, out) in labelled {
        if fresh(stale, "label", out) {
            let (data, _) = load_native(native)?;
            let labels = label_dataset(&data);
            emit(Some(out), |w| write_labels(&labels, w))?;
            eprintln!("pipeline: labeled {} dialogues into {}", labels.len(), out.display());
            stale = true;
        }
    }

    if fresh(stale, "train", &model_dir.join(TRAIN_REPORT)) {
        let (data, _) = load_native(&train_path)?;
        let labels = load_labels(Some(&labels_path), &data)?;
        train_into(&cfg, &data, &labels, None, &model_dir, args.overrides.joint)?;
        stale = true;
    }

    if fresh(stale, "eval", &report_path) {
        let (eval_data, eval_labels) = match &args.test {
            Some(_) => (&test_path, &test_labels_path),
            None => (&train_path, &labels_path),
        };
        let models = ModelSet::load(&model_dir)?;
        let (data, lexicon) = load_native(eval_data)?;
        let labels = load_labels(Some(eval_labels), &data)?;
        let input = ModelInput {
            ckpt: model_dir.clone(),
            data: eval_data.clone(),
            labels: Some(eval_labels.clone()),
            rows: RowsArg::Learned,
            max_len: cfg.max_len,
        };
        let report = evaluate(&models, &data, &labels, &lexicon, &input, None)?;
        emit_json(Some(&report_path), &report)?;
    }
    let text = std::fs::read_to_string(&report_path)
        .map_err(|e| CliError::Data(format!("{}: {e}", report_path.display())))?;
    println!("{}", text.trim_end());
    Ok(())
}
