//! Shared fixtures for the benchmarks.

use kbdialog_core::corpus::synthetic::navigation_corpus;
use kbdialog_core::training::TrainConfig;
use kbdialog_core::weak_labels::label_dataset;
use kbdialog_core::{Dialogue, LabelSet, Model, ModelMeta};

pub struct Fixture {
    pub data: Vec<Dialogue>,
    pub labels: LabelSet,
    pub config: TrainConfig,
    pub model: Model,
}

/// A synthetic navigation corpus (`rows` in 1..=8) with an untrained model at default sizes
/// (or `small` ones for quick training steps).
pub fn fixture(dialogues: usize, rows: usize, small: bool) -> Fixture {
    let data = navigation_corpus(dialogues, rows, 1);
    let labels = LabelSet::new(label_dataset(&data));
    let mut config = TrainConfig {
        epochs: 1,
        dropout: 0.0,
        ..TrainConfig::default()
    };
    if small {
        config.emb_dim = 32;
        config.hidden_dim = 32;
    }
    let model = Model::new(ModelMeta::from_dialogues(&data, config.model_config()), 0).expect("model");
    Fixture {
        data,
        labels,
        config,
        model,
    }
}

/// `n` whitespace-token sentence pairs over a small word pool, with some
/// overlap between each hypothesis and its reference.
pub fn sentence_pairs(n: usize, len: usize) -> (Vec<Vec<String>>, Vec<Vec<String>>) {
    let pool = ["the", "cafe", "is", "at", "main", "street", "no", "traffic", "route", "home"];
    let word = |i: usize| pool[i % pool.len()].to_string();
    let hyps = (0..n).map(|k| (0..len).map(|i| word(i * 3 + k)).collect()).collect();
    let refs = (0..n).map(|k| (0..len).map(|i| word(i * 3 + k + i % 2)).collect()).collect();
    (hyps, refs)
}
