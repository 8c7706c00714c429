use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use kbdialog_core::corpus::{load_dataset, load_native, write_native, DatasetFormat};
use kbdialog_core::evaluation::{
    predict, rows_vs_consistency_with, score, score_distribution, write_grid_csv, write_rows_csv, EvalReport,
};
use kbdialog_core::model::CHECKPOINT_FILE;
use kbdialog_core::training::{self, TrainConfig, TrainOptions, TrainReport};
use kbdialog_core::weak_labels::{label_dataset, read_labels, support_analysis, write_labels};
use kbdialog_core::{Dialogue, EntityLexicon, LabelSet, ModelSet};
use serde::Serialize;

use crate::args::{AnalyzeCommand, EvalArgs, LabelArgs, ModelInput, PrepareArgs, TrainArgs, TrainOverrides};
use crate::error::{CliError, CliResult};

pub const TRAIN_REPORT: &str = "train_report.json";

/// Opens `path` for writing (creating parent directories), or stdout.
pub fn sink(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    match path {
        None => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| CliError::write(dir, e))?;
            }
            let f = File::create(p).map_err(|e| CliError::write(p, e))?;
            Ok(Box::new(BufWriter::new(f)))
        }
    }
}

pub fn emit(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> CliResult<()> {
    let shown = path.map_or_else(|| PathBuf::from("<stdout>"), Path::to_path_buf);
    let mut w = sink(path)?;
    f(&mut w).and_then(|()| w.flush()).map_err(|e| CliError::write(&shown, e))
}

pub fn emit_json<T: Serialize>(path: Option<&Path>, value: &T) -> CliResult<()> {
    emit(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)
    })
}

pub fn load_labels(path: Option<&Path>, data: &[Dialogue]) -> CliResult<LabelSet> {
    let labels = match path {
        Some(p) => {
            let f = File::open(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
            LabelSet::new(read_labels(BufReader::new(f), &p.display().to_string())?)
        }
        None => LabelSet::new(label_dataset(data)),
    };
    labels.check_covers(data)?;
    Ok(labels)
}

pub fn prepare(args: &PrepareArgs) -> CliResult<()> {
    let data = load_dataset(&args.input, args.format.into())?;
    emit(args.out.as_deref(), |w| write_native(&data, w))?;
    eprintln!("prepared {} dialogues", data.len());
    Ok(())
}

pub fn label(args: &LabelArgs) -> CliResult<()> {
    let (data, _) = load_native(&args.data)?;
    let labels = label_dataset(&data);
    emit(args.out.as_deref(), |w| write_labels(&labels, w))?;
    let ties = labels.iter().filter(|l| l.tie).count();
    eprintln!("labeled {} dialogues ({ties} ties)", labels.len());
    Ok(())
}

pub fn train_config(o: &TrainOverrides) -> CliResult<TrainConfig> {
    let mut cfg = match &o.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
            TrainConfig::parse(&text)?
        }
        None => TrainConfig::default(),
    };
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(m) = o.mode {
        cfg.mode = m.into();
    }
    if let Some(t) = o.tau {
        cfg.tau = t;
    }
    if let Some(e) = o.epochs {
        cfg.epochs = e;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn by_domain(data: &[Dialogue]) -> BTreeMap<String, Vec<Dialogue>> {
    let mut out: BTreeMap<String, Vec<Dialogue>> = BTreeMap::new();
    for d in data {
        out.entry(d.domain().to_string()).or_default().push(d.clone());
    }
    out
}

/// Trains into `out` and returns the reports keyed by domain (`all` for a
/// joint model).
pub fn train_into(
    cfg: &TrainConfig,
    data: &[Dialogue],
    labels: &LabelSet,
    val: Option<&[Dialogue]>,
    out: &Path,
    joint: bool,
) -> CliResult<BTreeMap<String, TrainReport>> {
    fs::create_dir_all(out).map_err(|e| CliError::write(out, e))?;
    let groups = if joint {
        BTreeMap::from([("all".to_string(), data.to_vec())])
    } else {
        by_domain(data)
    };
    let mut reports = BTreeMap::new();
    for (domain, group) in &groups {
        let ckpt = if joint {
            out.join(CHECKPOINT_FILE)
        } else {
            out.join(domain).join(CHECKPOINT_FILE)
        };
        let val_group: Option<Vec<Dialogue>> =
            val.map(|v| v.iter().filter(|d| joint || d.domain() == domain).cloned().collect());
        let val_labels = val_group.as_deref().map(|v| LabelSet::new(label_dataset(v)));
        let val_lexicon = val_group.as_deref().map(|v| EntityLexicon::from_kbs(v.iter().map(|d| &d.kb)));
        let validation = match (&val_group, &val_labels, &val_lexicon) {
            (Some(v), Some(l), Some(x)) if !v.is_empty() => Some((v.as_slice(), l, x)),
            _ => None,
        };
        let mut cfg = cfg.clone();
        if let Some(init) = cfg.init.as_ref().filter(|p| p.is_dir()) {
            cfg.init = Some(if joint { init.join(CHECKPOINT_FILE) } else { init.join(domain).join(CHECKPOINT_FILE) });
        }
        eprintln!("training {domain}: {} dialogues, {} epochs ({})", group.len(), cfg.epochs, cfg.mode);
        let opts = TrainOptions {
            validation,
            checkpoint: Some(&ckpt),
        };
        let (model, report) = training::run(group, labels, &cfg, &opts)?;
        if !ckpt.is_file() {
            model.save(&ckpt)?;
        }
        reports.insert(domain.clone(), report);
    }
    let cfg_path = out.join("config.txt");
    fs::write(&cfg_path, cfg.to_string()).map_err(|e| CliError::write(&cfg_path, e))?;
    emit_json(Some(&out.join(TRAIN_REPORT)), &reports)?;
    Ok(reports)
}

pub fn train(args: &TrainArgs) -> CliResult<()> {
    let cfg = train_config(&args.overrides)?;
    let (data, _) = load_native(&args.data)?;
    let labels = load_labels(args.labels.as_deref(), &data)?;
    let val = match &args.val {
        Some(p) => Some(load_native(p)?.0),
        None => None,
    };
    let reports = train_into(&cfg, &data, &labels, val.as_deref(), &args.out, args.overrides.joint)?;
    emit_json(None, &reports)
}

struct Loaded {
    models: ModelSet,
    data: Vec<Dialogue>,
    lexicon: EntityLexicon,
    labels: LabelSet,
}

fn load_inputs(input: &ModelInput) -> CliResult<Loaded> {
    let models = ModelSet::load(&input.ckpt)?;
    let (data, lexicon) = load_native(&input.data)?;
    let labels = load_labels(input.labels.as_deref(), &data)?;
    Ok(Loaded {
        models,
        data,
        lexicon,
        labels,
    })
}

#[derive(Serialize)]
struct DumpLine<'a> {
    id: usize,
    turn: usize,
    row: usize,
    response: String,
    reference: String,
    copied: &'a [usize],
}

/// Predicts and scores `data`, optionally dumping every response.
pub fn evaluate(
    models: &ModelSet,
    data: &[Dialogue],
    labels: &LabelSet,
    lexicon: &EntityLexicon,
    input: &ModelInput,
    dump: Option<&Path>,
) -> CliResult<EvalReport> {
    let preds = predict(|d| models.for_domain(d), data, input.rows.into(), labels, input.max_len)?;
    let mut report = score(&preds, data, labels, lexicon)?;
    if let Some(path) = dump {
        emit(Some(path), |w| {
            for p in &preds {
                let d = &data[p.dialogue];
                let line = DumpLine {
                    id: d.id,
                    turn: p.turn,
                    row: p.row,
                    response: p.tokens.join(" "),
                    reference: d.turns[p.turn].system.join(" "),
                    copied: &p.copied,
                };
                serde_json::to_writer(&mut *w, &line)?;
                writeln!(w)?;
            }
            Ok(())
        })?;
        report.dumps.push(path.to_path_buf());
    }
    eprintln!(
        "{} responses: BLEU {:.2}, entity F1 {:.4}, consistency {}",
        report.responses,
        report.bleu,
        report.entity.f1,
        report.consistency.recall.map_or_else(|| "n/a".to_string(), |c| format!("{c:.4}")),
    );
    Ok(report)
}

pub fn eval(args: &EvalArgs) -> CliResult<()> {
    let l = load_inputs(&args.input)?;
    let report = evaluate(&l.models, &l.data, &l.labels, &l.lexicon, &args.input, args.dump.as_deref())?;
    emit_json(args.report.as_deref(), &report)
}

pub fn analyze(cmd: &AnalyzeCommand) -> CliResult<()> {
    match cmd {
        AnalyzeCommand::Support { data, labels, out } => {
            let (data, _) = load_native(data)?;
            let labels = load_labels(labels.as_deref(), &data)?;
            emit_json(out.as_deref(), &support_analysis(&data, &labels)?)
        }
        AnalyzeCommand::Rows { input, sizes, out } => {
            if sizes.contains(&0) {
                return Err(CliError::Usage("--sizes must be positive".into()));
            }
            let l = load_inputs(input)?;
            let points = rows_vs_consistency_with(
                |d| l.models.for_domain(d),
                &l.data,
                &l.labels,
                &l.lexicon,
                sizes,
                input.rows.into(),
                input.max_len,
            )?;
            emit(out.as_deref(), |w| write_rows_csv(&points, w))
        }
        AnalyzeCommand::Heatmap {
            input,
            dialogue,
            turn,
            step,
            out,
        } => {
            let l = load_inputs(input)?;
            let d = l.data.get(*dialogue).ok_or_else(|| {
                CliError::Usage(format!("--dialogue {dialogue} out of range ({} dialogues)", l.data.len()))
            })?;
            let model = l
                .models
                .for_domain(d.domain())
                .ok_or_else(|| CliError::Data(format!("no model for domain `{}`", d.domain())))?;
            let grid = score_distribution(model, d, *turn, *step, input.rows.into(), &l.labels)
                .map_err(|e| match e {
                    kbdialog_core::Error::StepOutOfRange { .. } => CliError::Usage(e.to_string()),
                    e => e.into(),
                })?;
            emit(out.as_deref(), |w| write_grid_csv(&d.kb, &grid, w))
        }
    }
}

pub fn prepared(format: DatasetFormat, input: &Path, out: &Path) -> CliResult<usize> {
    let data = load_dataset(input, format)?;
    emit(Some(out), |w| write_native(&data, w))?;
    Ok(data.len())
}
