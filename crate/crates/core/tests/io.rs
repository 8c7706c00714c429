mod common;

use std::fs;
use std::io::BufReader;

use kbdialog_core::corpus::synthetic::navigation_corpus;
use kbdialog_core::corpus::{load_dataset, load_native, write_native, DatasetFormat};
use kbdialog_core::evaluation::{rows_vs_consistency, write_rows_csv, RowChoice};
use kbdialog_core::model::{Model, ModelMeta, ModelSet};
use kbdialog_core::weak_labels::{label_dataset, read_labels, write_labels, LabelSet};
use kbdialog_core::{EntityLexicon, Error};

#[test]
fn native_files_round_trip() {
    let data = navigation_corpus(5, 4, 3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("train.jsonl");
    write_native(&data, fs::File::create(&path).unwrap()).unwrap();
    let (back, lexicon) = load_native(&path).unwrap();
    assert_eq!(back, data);
    assert!(data.iter().all(|d| d.kb.cells().all(|c| c == "-" || lexicon.contains(c))));
}

#[test]
fn label_files_round_trip() {
    let data = navigation_corpus(5, 4, 3);
    let labels = label_dataset(&data);
    let mut buf = Vec::new();
    write_labels(&labels, &mut buf).unwrap();
    let back = read_labels(BufReader::new(buf.as_slice()), "mem").unwrap();
    assert_eq!(back, labels);
    assert!(LabelSet::new(back).check_covers(&data).is_ok());
}

#[test]
fn parse_errors_name_the_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.jsonl");
    fs::write(&path, "\n{\"domain\": 3}\n").unwrap();
    let err = load_dataset(&path, DatasetFormat::Native).unwrap_err();
    let msg = err.to_string();
    assert!(matches!(err, Error::Parse { .. }));
    assert!(msg.contains("bad.jsonl") && msg.contains("line 2"), "{msg}");

    let missing = dir.path().join("nope.jsonl");
    assert!(matches!(load_native(&missing), Err(Error::Io { .. })));
}

#[test]
fn model_sets_load_from_files_and_directories() {
    let data = navigation_corpus(3, 3, 1);
    let cfg = common::toy_config(1);
    let model = Model::new(ModelMeta::from_dialogues(&data, cfg.model_config()), 0).unwrap();
    let dir = tempfile::tempdir().unwrap();

    let single = dir.path().join("single");
    fs::create_dir(&single).unwrap();
    model.save(&single.join("model.kbdg")).unwrap();
    let set = ModelSet::load(&single).unwrap();
    assert!(set.for_domain("navigate").is_some());
    assert!(set.for_domain("weather").is_some());

    let per = dir.path().join("per");
    model.save(&per.join("navigate").join("model.kbdg")).unwrap();
    let set = ModelSet::load(&per).unwrap();
    assert!(set.for_domain("navigate").is_some());
    assert!(set.for_domain("weather").is_none());

    assert!(ModelSet::load(&dir.path().join("empty")).is_err());
}

#[test]
fn rows_series_writes_one_line_per_size() {
    let data = navigation_corpus(4, 5, 2);
    let labels = LabelSet::new(label_dataset(&data));
    let lexicon = EntityLexicon::from_kbs(data.iter().map(|d| &d.kb));
    let cfg = common::toy_config(1);
    let model = Model::new(ModelMeta::from_dialogues(&data, cfg.model_config()), 0).unwrap();
    let pts = rows_vs_consistency(&model, &data, &labels, &lexicon, &[1, 3, 5, 9], RowChoice::Oracle, 10).unwrap();
    assert_eq!(pts.iter().map(|p| p.dialogues).collect::<Vec<_>>(), [4, 4, 4, 0]);
    let mut buf = Vec::new();
    write_rows_csv(&pts, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().last().unwrap().starts_with("9,0,0,"));
}
