//! Distant-supervision and Gumbel-Softmax training loops, configuration
//! and run orchestration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dialogue, EntityLexicon};
use crate::error::{Error, Result};
use crate::evaluation::evaluate_model;
use crate::generator::Dropout;
use crate::model::{Model, ModelConfig, ModelMeta, Selection};
use crate::numeric::{adam_step, argmax, gumbel_noise, seeded_rng, AdamConfig, Graph, Rng64, Var};
use crate::retriever::gumbel_soften;
use crate::weak_labels::LabelSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    Distant,
    Gumbel,
}

impl FromStr for TrainMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "distant" => Ok(TrainMode::Distant),
            "gumbel" => Ok(TrainMode::Gumbel),
            other => Err(format!("expected `distant` or `gumbel`, got `{other}`")),
        }
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrainMode::Distant => "distant",
            TrainMode::Gumbel => "gumbel",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub emb_dim: usize,
    pub hidden_dim: usize,
    pub dropout: f64,
    pub batch_size: usize,
    pub hops: usize,
    pub l2: f64,
    pub tau: f64,
    pub epochs: usize,
    pub seed: u64,
    pub lr: f64,
    pub tie_weights: bool,
    /// Decoding cap used for validation.
    pub max_len: usize,
    /// Distant epochs run before Gumbel fine-tuning.
    pub pretrain_epochs: usize,
    /// Starting checkpoint; for Gumbel mode it replaces pretraining.
    pub init: Option<PathBuf>,
    pub skip_pretrain: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: TrainMode::Distant,
            emb_dim: 100,
            hidden_dim: 100,
            dropout: 0.25,
            batch_size: 1,
            hops: 3,
            l2: 5e-6,
            tau: 1.0,
            epochs: 20,
            seed: 0,
            lr: 1e-3,
            tie_weights: true,
            max_len: 40,
            pretrain_epochs: 10,
            init: None,
            skip_pretrain: false,
        }
    }
}

const EMB_GRID: &[usize] = &[100, 200];
const HIDDEN_GRID: &[usize] = &[50, 100, 150, 200, 350];
const DROPOUT_GRID: &[f64] = &[0.25, 0.5, 0.75];
const BATCH_GRID: &[usize] = &[1, 2];

fn config_err(key: &str, message: impl ToString) -> Error {
    Error::Config {
        key: key.to_string(),
        message: message.to_string(),
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e: T::Err| config_err(key, e))
}

impl TrainConfig {
    /// Flat `key = value` text; `#` starts a comment. Unknown keys are
    /// errors; values outside the usual grids only warn.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| config_err(&format!("line {}", n + 1), "expected `key = value`"))?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "mode" => self.mode = value.parse().map_err(|e: String| config_err(key, e))?,
            "emb_dim" => self.emb_dim = parse_value(key, value)?,
            "hidden_dim" => self.hidden_dim = parse_value(key, value)?,
            "dropout" => self.dropout = parse_value(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "hops" => self.hops = parse_value(key, value)?,
            "l2" => self.l2 = parse_value(key, value)?,
            "tau" => self.tau = parse_value(key, value)?,
            "epochs" => self.epochs = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "lr" => self.lr = parse_value(key, value)?,
            "tie_weights" => self.tie_weights = parse_value(key, value)?,
            "max_len" => self.max_len = parse_value(key, value)?,
            "pretrain_epochs" => self.pretrain_epochs = parse_value(key, value)?,
            "init" => self.init = (!value.is_empty()).then(|| PathBuf::from(value)),
            "skip_pretrain" => self.skip_pretrain = parse_value(key, value)?,
            _ => return Err(config_err(key, "unknown key")),
        }
        Ok(())
    }

    /// Hard errors for unusable values, warnings for off-grid ones.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("emb_dim", self.emb_dim),
            ("hidden_dim", self.hidden_dim),
            ("batch_size", self.batch_size),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(config_err(k, "must be positive"));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(config_err("dropout", "must be in [0, 1)"));
        }
        if !(self.lr > 0.0) {
            return Err(config_err("lr", "must be positive"));
        }
        if !(self.l2 >= 0.0) {
            return Err(config_err("l2", "must be non-negative"));
        }
        if self.mode == TrainMode::Gumbel && !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidTemperature(self.tau));
        }
        if !EMB_GRID.contains(&self.emb_dim) {
            log::warn!("emb_dim {} is outside the grid {EMB_GRID:?}", self.emb_dim);
        }
        if !HIDDEN_GRID.contains(&self.hidden_dim) {
            log::warn!("hidden_dim {} is outside the grid {HIDDEN_GRID:?}", self.hidden_dim);
        }
        if !DROPOUT_GRID.contains(&self.dropout) {
            log::warn!("dropout {} is outside the grid {DROPOUT_GRID:?}", self.dropout);
        }
        if !BATCH_GRID.contains(&self.batch_size) {
            log::warn!("batch_size {} is outside the grid {BATCH_GRID:?}", self.batch_size);
        }
        if self.hops != 3 {
            log::warn!("hops = {} (usual value 3)", self.hops);
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            emb_dim: self.emb_dim,
            hidden_dim: self.hidden_dim,
            hops: self.hops,
            tie_weights: self.tie_weights,
        }
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            l2: self.l2,
            ..AdamConfig::default()
        }
    }
}

impl fmt::Display for TrainConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mode = {}", self.mode)?;
        writeln!(f, "emb_dim = {}", self.emb_dim)?;
        writeln!(f, "hidden_dim = {}", self.hidden_dim)?;
        writeln!(f, "dropout = {}", self.dropout)?;
        writeln!(f, "batch_size = {}", self.batch_size)?;
        writeln!(f, "hops = {}", self.hops)?;
        writeln!(f, "l2 = {}", self.l2)?;
        writeln!(f, "tau = {}", self.tau)?;
        writeln!(f, "epochs = {}", self.epochs)?;
        writeln!(f, "seed = {}", self.seed)?;
        writeln!(f, "lr = {}", self.lr)?;
        writeln!(f, "tie_weights = {}", self.tie_weights)?;
        writeln!(f, "max_len = {}", self.max_len)?;
        writeln!(f, "pretrain_epochs = {}", self.pretrain_epochs)?;
        if let Some(p) = &self.init {
            writeln!(f, "init = {}", p.display())?;
        }
        writeln!(f, "skip_pretrain = {}", self.skip_pretrain)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean retriever cross-entropy (distant objective only).
    pub retriever_loss: Option<f64>,
    /// Mean per-token generation cross-entropy.
    pub generation_loss: Option<f64>,
    pub loss: f64,
    pub val_entity_f1: Option<f64>,
    pub val_bleu: Option<f64>,
    /// Gumbel mode: share of samples whose relaxed row matches `argmax a`.
    pub selection_agreement: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub mode: TrainMode,
    pub epochs: Vec<EpochStats>,
    pub best_epoch: Option<usize>,
    pub checkpoint: Option<PathBuf>,
    /// Norm of the retriever gradient after the first batch.
    pub first_batch_retriever_grad_norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pretrain: Option<Box<TrainReport>>,
}

impl TrainReport {
    fn new(mode: TrainMode) -> Self {
        TrainReport {
            mode,
            epochs: Vec::new(),
            best_epoch: None,
            checkpoint: None,
            first_batch_retriever_grad_norm: None,
            pretrain: None,
        }
    }
}

/// Optional validation and checkpointing for a run.
#[derive(Clone, Copy, Default)]
pub struct TrainOptions<'a> {
    pub validation: Option<(&'a [Dialogue], &'a LabelSet, &'a EntityLexicon)>,
    /// Where the best (or, without validation, the last) parameters go.
    pub checkpoint: Option<&'a Path>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Objective {
    /// Row cross-entropy plus generation under the labeled row.
    Distant,
    RetrieverOnly,
    /// Generation under relaxed row weights.
    Gumbel,
}

struct Example {
    dialogue: usize,
    turn: usize,
    row: usize,
}

#[derive(Default)]
struct Sums {
    retriever: f64,
    generation: f64,
    agree: usize,
    count: usize,
}

fn examples(data: &[Dialogue], labels: &LabelSet) -> Result<Vec<Example>> {
    labels.check_covers(data)?;
    let mut out = Vec::new();
    for (i, d) in data.iter().enumerate() {
        let row = labels.get(d.id)?.row;
        for turn in 0..d.turns.len() {
            out.push(Example { dialogue: i, turn, row });
        }
    }
    Ok(out)
}

fn example_loss(
    model: &Model,
    g: &mut Graph,
    d: &Dialogue,
    ex: &Example,
    objective: Objective,
    tau: f64,
    rng: &mut Rng64,
    dropout_rate: f64,
    sums: &mut Sums,
) -> Result<Var> {
    let prep = model.prepare(&d.history(ex.turn), &d.kb)?;
    let response = &d.turns[ex.turn].system;
    match objective {
        Objective::Distant | Objective::RetrieverOnly => {
            let logits = model.row_logits(g, &prep)?;
            let lp = g.log_softmax(logits);
            let picked = g.pick(lp, ex.row);
            let ce = g.scale(picked, -1.0);
            sums.retriever += g.scalar(ce);
            if objective == Objective::RetrieverOnly {
                return Ok(ce);
            }
            let targets = model.targets(response, &d.kb, ex.row, false);
            let mut dropout = Dropout::new(dropout_rate, rng);
            let gen = model.sequence_loss(g, &prep, &d.kb, Selection::Row(ex.row), &targets, &mut dropout)?;
            sums.generation += g.scalar(gen);
            Ok(g.add(ce, gen))
        }
        Objective::Gumbel => {
            let a = model.row_distribution(g, &prep)?;
            let noise = gumbel_noise(rng, prep.num_rows);
            let soft = gumbel_soften(g, a, tau, &noise)?;
            if argmax(g.value(soft).data()) == argmax(g.value(a).data()) {
                sums.agree += 1;
            }
            let targets = model.targets(response, &d.kb, ex.row, true);
            let mut dropout = Dropout::new(dropout_rate, rng);
            let gen = model.sequence_loss(g, &prep, &d.kb, Selection::Soft(soft), &targets, &mut dropout)?;
            sums.generation += g.scalar(gen);
            Ok(gen)
        }
    }
}

fn run_epochs(
    model: &mut Model,
    data: &[Dialogue],
    labels: &LabelSet,
    cfg: &TrainConfig,
    opts: &TrainOptions,
    objective: Objective,
    epochs: usize,
    rng: &mut Rng64,
) -> Result<TrainReport> {
    let mode = if objective == Objective::Gumbel {
        TrainMode::Gumbel
    } else {
        TrainMode::Distant
    };
    let mut report = TrainReport::new(mode);
    let mut order = examples(data, labels)?;
    if order.is_empty() {
        return Err(Error::Empty("training examples"));
    }
    if cfg.dropout == 0.0 {
        log::warn!("training without dropout");
    }
    let adam = cfg.adam();
    let retriever_ids = model.retriever.ids();
    let mut best_f1 = f64::NEG_INFINITY;
    for epoch in 1..=epochs {
        order.shuffle(rng);
        let mut sums = Sums::default();
        for batch in order.chunks(cfg.batch_size) {
            model.params.zero_grad();
            for ex in batch {
                let grads = {
                    let mut g = Graph::new(&model.params);
                    let loss = example_loss(
                        model,
                        &mut g,
                        &data[ex.dialogue],
                        ex,
                        objective,
                        cfg.tau,
                        rng,
                        cfg.dropout,
                        &mut sums,
                    )?;
                    g.backward(loss)
                };
                model.params.accumulate(&grads, 1.0 / batch.len() as f64)?;
                sums.count += 1;
            }
            if report.first_batch_retriever_grad_norm.is_none() {
                report.first_batch_retriever_grad_norm = Some(model.params.grad_norm(&retriever_ids));
            }
            adam_step(&mut model.params, &adam);
        }
        let n = sums.count as f64;
        let mut stats = EpochStats {
            epoch,
            retriever_loss: (objective != Objective::Gumbel).then(|| sums.retriever / n),
            generation_loss: (objective != Objective::RetrieverOnly).then(|| sums.generation / n),
            loss: (sums.retriever + sums.generation) / n,
            selection_agreement: (objective == Objective::Gumbel).then(|| sums.agree as f64 / n),
            ..EpochStats::default()
        };
        if let Some((val, val_labels, lexicon)) = opts.validation {
            let r = evaluate_model(model, val, val_labels, lexicon, cfg.max_len)?;
            stats.val_entity_f1 = Some(r.entity.f1);
            stats.val_bleu = Some(r.bleu);
            if r.entity.f1 > best_f1 {
                best_f1 = r.entity.f1;
                report.best_epoch = Some(epoch);
                if let Some(path) = opts.checkpoint {
                    model.save(path)?;
                    report.checkpoint = Some(path.to_path_buf());
                }
            }
        }
        log::info!(
            "{mode} epoch {epoch}/{epochs}: loss {:.5}{}",
            stats.loss,
            stats
                .val_entity_f1
                .map(|f| format!(", val entity F1 {f:.4}"))
                .unwrap_or_default()
        );
        report.epochs.push(stats);
    }
    if opts.validation.is_none() {
        if let Some(path) = opts.checkpoint {
            model.save(path)?;
            report.checkpoint = Some(path.to_path_buf());
            report.best_epoch = report.epochs.last().map(|e| e.epoch);
        }
    }
    Ok(report)
}

/// Retriever cross-entropy against the weak labels plus teacher-forced
/// generation under the labeled row, summed per example.
pub fn train_distant(
    model: &mut Model,
    data: &[Dialogue],
    labels: &LabelSet,
    cfg: &TrainConfig,
    opts: &TrainOptions,
) -> Result<TrainReport> {
    let mut rng = seeded_rng(cfg.seed);
    run_epochs(model, data, labels, cfg, opts, Objective::Distant, cfg.epochs, &mut rng)
}

/// Retriever cross-entropy alone.
pub fn train_retriever(
    model: &mut Model,
    data: &[Dialogue],
    labels: &LabelSet,
    cfg: &TrainConfig,
    opts: &TrainOptions,
) -> Result<TrainReport> {
    let mut rng = seeded_rng(cfg.seed);
    run_epochs(model, data, labels, cfg, opts, Objective::RetrieverOnly, cfg.epochs, &mut rng)
}

/// Generation loss through Gumbel-Softmax row weights, with fresh noise for
/// every example, so the retriever learns from the generator.
pub fn train_gumbel(
    model: &mut Model,
    data: &[Dialogue],
    labels: &LabelSet,
    cfg: &TrainConfig,
    opts: &TrainOptions,
) -> Result<TrainReport> {
    if !(cfg.tau > 0.0 && cfg.tau.is_finite()) {
        return Err(Error::InvalidTemperature(cfg.tau));
    }
    let mut rng = seeded_rng(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    run_epochs(model, data, labels, cfg, opts, Objective::Gumbel, cfg.epochs, &mut rng)
}

/// Builds (or loads) a model and trains it as `cfg` says. In Gumbel mode
/// without `init` or `skip_pretrain`, a distant run of `pretrain_epochs`
/// comes first.
pub fn run(data: &[Dialogue], labels: &LabelSet, cfg: &TrainConfig, opts: &TrainOptions) -> Result<(Model, TrainReport)> {
    cfg.validate()?;
    let mut model = match &cfg.init {
        Some(path) => Model::load(path)?,
        None => Model::new(ModelMeta::from_dialogues(data, cfg.model_config()), cfg.seed)?,
    };
    let report = match cfg.mode {
        TrainMode::Distant => train_distant(&mut model, data, labels, cfg, opts)?,
        TrainMode::Gumbel => {
            let pretrain = if cfg.init.is_none() && !cfg.skip_pretrain {
                let pre_cfg = TrainConfig {
                    mode: TrainMode::Distant,
                    epochs: cfg.pretrain_epochs,
                    ..cfg.clone()
                };
                let pre_opts = TrainOptions {
                    validation: opts.validation,
                    checkpoint: None,
                };
                Some(Box::new(train_distant(&mut model, data, labels, &pre_cfg, &pre_opts)?))
            } else {
                None
            };
            let mut r = train_gumbel(&mut model, data, labels, cfg, opts)?;
            r.pretrain = pretrain;
            r
        }
    };
    Ok((model, report))
}
