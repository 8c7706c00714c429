//! The full retrieval-plus-generation model: vocabularies, parameters,
//! teacher-forced loss, greedy decoding and persistence.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{
    Dialogue, EntityLexicon, KnowledgeBase, Vocabulary, ENT_ID, EOS_ID, PAD, SOS_ID, UNK_ID,
};
use crate::error::{Error, Result};
use crate::generator::{entity_mask, fuse_entity_scores, step_logits, Dropout, Encoded, GeneratorParams, RowGate};
use crate::numeric::{argmax, read_checkpoint, seeded_rng, softmax_unchecked, write_checkpoint, Graph, ParamStore, Var};
use crate::retriever::{harden, RetrievalResult, RetrieverParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub emb_dim: usize,
    pub hidden_dim: usize,
    pub hops: usize,
    pub tie_weights: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            emb_dim: 100,
            hidden_dim: 100,
            hops: 3,
            tie_weights: true,
        }
    }
}

/// Everything besides tensors needed to rebuild a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub config: ModelConfig,
    /// Generator vocabulary `V`: non-entity words and column names.
    pub words: Vocabulary,
    /// Retriever query vocabulary: every dialogue token.
    pub queries: Vocabulary,
    /// Retriever cell-value vocabulary.
    pub values: Vocabulary,
}

impl ModelMeta {
    pub fn from_dialogues(dialogues: &[Dialogue], config: ModelConfig) -> Self {
        let lexicon = EntityLexicon::from_kbs(dialogues.iter().map(|d| &d.kb));
        let mut words = Vocabulary::new();
        let mut queries = Vocabulary::new();
        let mut values = Vocabulary::new();
        values.insert(PAD);
        for d in dialogues {
            for c in d.kb.columns() {
                words.insert(c);
            }
            for cell in d.kb.cells() {
                values.insert(cell);
            }
            for tok in d.all_tokens() {
                queries.insert(tok);
                if !lexicon.contains(tok) {
                    words.insert(tok);
                }
            }
        }
        ModelMeta {
            config,
            words,
            queries,
            values,
        }
    }
}

/// One turn in id form.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub history_words: Vec<usize>,
    pub history_queries: Vec<usize>,
    pub rows: Vec<Vec<usize>>,
    pub columns: Vec<usize>,
    pub num_rows: usize,
    pub num_cols: usize,
}

/// Per-step decoder outputs kept for inspection.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepTrace {
    /// Column relevance scores `c`, one per column.
    pub column_scores: Vec<f64>,
    /// `softmax(o_t)` restricted to the entity block, row-major.
    pub entity_probs: Vec<f64>,
    /// Index of the emitted (or forced) output.
    pub output: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generation {
    /// Rendered tokens; copied cells appear as their canonical values.
    pub tokens: Vec<String>,
    /// Flattened indices of the copied cells, in emission order.
    pub copied: Vec<usize>,
    pub steps: Vec<StepTrace>,
}

impl Generation {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

/// How the entity block is gated during a teacher-forced pass.
#[derive(Clone, Copy, Debug)]
pub enum Selection<'a> {
    /// A fixed row; cells elsewhere are masked.
    Row(usize),
    /// Differentiable per-row weights.
    Soft(Var),
    /// Externally built 0-1 cell mask, padding-only masking.
    Cells(&'a [f64]),
}

pub struct Model {
    pub meta: ModelMeta,
    pub params: ParamStore,
    pub retriever: RetrieverParams,
    pub generator: GeneratorParams,
}

impl std::fmt::Debug for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Model")
            .field("config", &self.meta.config)
            .field("words", &self.meta.words.len())
            .field("scalars", &self.params.num_scalars())
            .finish()
    }
}

impl Model {
    pub fn new(meta: ModelMeta, seed: u64) -> Result<Self> {
        let mut rng = seeded_rng(seed);
        let mut params = ParamStore::new();
        let c = &meta.config;
        let retriever = RetrieverParams::init(
            &mut params,
            meta.queries.len(),
            meta.values.len(),
            c.emb_dim,
            c.hops,
            &mut rng,
        )?;
        let generator =
            GeneratorParams::init(&mut params, meta.words.len(), c.emb_dim, c.hidden_dim, c.tie_weights, &mut rng)?;
        Ok(Model {
            meta,
            params,
            retriever,
            generator,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.meta.config
    }

    pub fn vocab_len(&self) -> usize {
        self.meta.words.len()
    }

    fn word_input(&self, tok: &str, cells: &HashSet<&str>) -> usize {
        match self.meta.words.get(tok) {
            Some(id) => id,
            None if cells.contains(tok) || self.meta.values.get(tok).is_some() => ENT_ID,
            None => UNK_ID,
        }
    }

    pub fn prepare(&self, history: &[String], kb: &KnowledgeBase) -> Result<Prepared> {
        if history.is_empty() {
            return Err(Error::Empty("dialogue history"));
        }
        let cells: HashSet<&str> = kb.cells().collect();
        Ok(Prepared {
            history_words: history.iter().map(|t| self.word_input(t, &cells)).collect(),
            history_queries: history.iter().map(|t| self.meta.queries.id(t)).collect(),
            rows: kb
                .rows()
                .iter()
                .map(|r| r.iter().map(|c| self.meta.values.id(c)).collect())
                .collect(),
            columns: kb.columns().iter().map(|c| self.meta.words.id(c)).collect(),
            num_rows: kb.num_rows(),
            num_cols: kb.num_cols(),
        })
    }

    /// Output ids of a reference response, ending in `<eos>`. Entities are
    /// copy targets in `row`; with `anywhere`, entities outside it copy
    /// their first occurrence in the KB.
    pub fn targets(&self, response: &[String], kb: &KnowledgeBase, row: usize, anywhere: bool) -> Vec<usize> {
        let v = self.vocab_len();
        let mut out: Vec<usize> = response
            .iter()
            .map(|tok| {
                if tok != PAD {
                    let hit = kb
                        .find_in_row(row, tok)
                        .or_else(|| anywhere.then(|| kb.find(tok)).flatten());
                    if let Some(e) = hit {
                        return v + e;
                    }
                }
                self.meta.words.get(tok).unwrap_or(UNK_ID)
            })
            .collect();
        out.push(EOS_ID);
        out
    }

    /// Decoder input following output id `id`.
    fn next_input(&self, id: usize) -> usize {
        if id >= self.vocab_len() {
            ENT_ID
        } else {
            id
        }
    }

    /// Row distribution `a` on the tape.
    pub fn row_distribution(&self, g: &mut Graph, prep: &Prepared) -> Result<Var> {
        let logits = self.row_logits(g, prep)?;
        Ok(g.softmax(logits))
    }

    pub fn row_logits(&self, g: &mut Graph, prep: &Prepared) -> Result<Var> {
        let q = self.retriever.encode_query(g, &prep.history_queries)?;
        self.retriever.row_logits(g, q, &prep.rows)
    }

    pub fn retrieve(&self, history: &[String], kb: &KnowledgeBase) -> Result<RetrievalResult> {
        let prep = self.prepare(history, kb)?;
        let mut g = Graph::new(&self.params);
        let a = self.row_distribution(&mut g, &prep)?;
        Ok(harden(g.value(a).data(), prep.num_cols))
    }

    fn gate_and_mask(
        &self,
        g: &mut Graph,
        prep: &Prepared,
        kb: &KnowledgeBase,
        selection: Selection,
    ) -> Result<(GateOwned, Vec<f64>)> {
        let cells: Vec<&str> = kb.cells().collect();
        Ok(match selection {
            Selection::Row(r) => {
                if r >= prep.num_rows {
                    return Err(Error::CellOutOfRange {
                        row: r,
                        col: 0,
                        rows: prep.num_rows,
                        cols: prep.num_cols,
                    });
                }
                let mut t = vec![0.0; cells.len()];
                t[r * prep.num_cols..(r + 1) * prep.num_cols].fill(1.0);
                (GateOwned::Hard(t), entity_mask(&cells, prep.num_cols, Some(r)))
            }
            Selection::Cells(t) => (GateOwned::Hard(t.to_vec()), entity_mask(&cells, prep.num_cols, None)),
            Selection::Soft(w) => {
                let tiled = g.repeat_each(w, prep.num_cols);
                (GateOwned::Soft(tiled), entity_mask(&cells, prep.num_cols, None))
            }
        })
    }

    fn step(
        &self,
        g: &mut Graph,
        ctx: &StepContext,
        input: usize,
        state: (Var, Var),
        dropout: &mut Dropout,
    ) -> Result<(Var, Var, (Var, Var))> {
        let state = self.generator.decoder_step(g, input, state, dropout);
        let h = state.0;
        let attended = self.generator.history_attention(g, &ctx.enc, h);
        let cols = self.generator.column_scores(g, &ctx.keys, h);
        let gate = match &ctx.gate {
            GateOwned::Hard(t) => RowGate::Hard(t),
            GateOwned::Soft(v) => RowGate::Soft(*v),
        };
        let v = fuse_entity_scores(g, gate, cols, ctx.num_rows)?;
        let words = self.generator.word_logits(g, h, attended);
        Ok((step_logits(g, words, v, &ctx.mask), cols, state))
    }

    fn context(
        &self,
        g: &mut Graph,
        prep: &Prepared,
        kb: &KnowledgeBase,
        selection: Selection,
        dropout: &mut Dropout,
    ) -> Result<StepContext> {
        let enc = self.generator.encode(g, &prep.history_words, dropout)?;
        let keys = self.generator.column_keys(g, &prep.columns);
        let (gate, mask) = self.gate_and_mask(g, prep, kb, selection)?;
        Ok(StepContext {
            enc,
            keys,
            gate,
            mask,
            num_rows: prep.num_rows,
        })
    }

    /// Mean per-token negative log-likelihood of `targets` under teacher
    /// forcing.
    pub fn sequence_loss(
        &self,
        g: &mut Graph,
        prep: &Prepared,
        kb: &KnowledgeBase,
        selection: Selection,
        targets: &[usize],
        dropout: &mut Dropout,
    ) -> Result<Var> {
        if targets.is_empty() {
            return Err(Error::Empty("target sequence"));
        }
        let ctx = self.context(g, prep, kb, selection, dropout)?;
        let mut state = ctx.enc.init;
        let mut input = SOS_ID;
        let mut terms = Vec::with_capacity(targets.len());
        for &y in targets {
            let (logits, _, next) = self.step(g, &ctx, input, state, dropout)?;
            let lp = g.log_softmax(logits);
            terms.push(g.pick(lp, y));
            state = next;
            input = self.next_input(y);
        }
        let all = g.concat(&terms);
        let total = g.sum(all);
        Ok(g.scale(total, -1.0 / targets.len() as f64))
    }

    /// Greedy decoding under a hard row selection.
    pub fn generate(
        &self,
        history: &[String],
        kb: &KnowledgeBase,
        retrieval: &RetrievalResult,
        max_len: usize,
    ) -> Result<Generation> {
        let mut out = Generation {
            tokens: Vec::new(),
            copied: Vec::new(),
            steps: Vec::new(),
        };
        if max_len == 0 {
            return Ok(out);
        }
        let prep = self.prepare(history, kb)?;
        let mut g = Graph::new(&self.params);
        let ctx = self.context(&mut g, &prep, kb, Selection::Row(retrieval.row), &mut Dropout::off())?;
        let mut state = ctx.enc.init;
        let mut input = SOS_ID;
        let v = self.vocab_len();
        for _ in 0..max_len {
            let (logits, cols, next) = self.step(&mut g, &ctx, input, state, &mut Dropout::off())?;
            let scores = g.value(logits).data();
            let y = argmax(scores);
            let probs = softmax_unchecked(scores);
            out.steps.push(StepTrace {
                column_scores: g.value(cols).data().to_vec(),
                entity_probs: probs[v..].to_vec(),
                output: y,
            });
            if y == EOS_ID {
                break;
            }
            if y >= v {
                out.copied.push(y - v);
                out.tokens.push(kb.entity(y - v)?.to_string());
            } else {
                out.tokens.push(self.meta.words.word(y).unwrap_or(crate::corpus::UNK).to_string());
            }
            state = next;
            input = self.next_input(y);
        }
        Ok(out)
    }

    /// Per-step traces while forcing the reference `response`.
    pub fn trace_reference(
        &self,
        history: &[String],
        response: &[String],
        kb: &KnowledgeBase,
        retrieval: &RetrievalResult,
    ) -> Result<Vec<StepTrace>> {
        let prep = self.prepare(history, kb)?;
        let targets = self.targets(response, kb, retrieval.row, false);
        let mut g = Graph::new(&self.params);
        let ctx = self.context(&mut g, &prep, kb, Selection::Row(retrieval.row), &mut Dropout::off())?;
        let mut state = ctx.enc.init;
        let mut input = SOS_ID;
        let v = self.vocab_len();
        let mut out = Vec::with_capacity(targets.len());
        for &y in &targets {
            let (logits, cols, next) = self.step(&mut g, &ctx, input, state, &mut Dropout::off())?;
            let probs = softmax_unchecked(g.value(logits).data());
            out.push(StepTrace {
                column_scores: g.value(cols).data().to_vec(),
                entity_probs: probs[v..].to_vec(),
                output: y,
            });
            state = next;
            input = self.next_input(y);
        }
        Ok(out)
    }

    /// Writes the tensors to `path` and the metadata to its sidecar.
    /// Writes the checkpoint and its metadata sidecar, creating missing
    /// parent directories.
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        write_checkpoint(&self.params, path)?;
        let sidecar = sidecar_path(path);
        let json = serde_json::to_string_pretty(&self.meta).expect("metadata serializes");
        std::fs::write(&sidecar, json).map_err(|e| Error::io(&sidecar, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let sidecar = sidecar_path(path);
        let text = std::fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        let meta: ModelMeta =
            serde_json::from_str(&text).map_err(|e| Error::parse(sidecar.display().to_string(), e))?;
        let mut model = Model::new(meta, 0)?;
        model.params.load_values(read_checkpoint(path)?)?;
        Ok(model)
    }
}

enum GateOwned {
    Hard(Vec<f64>),
    Soft(Var),
}

struct StepContext {
    enc: Encoded,
    keys: Vec<Var>,
    gate: GateOwned,
    mask: Vec<f64>,
    num_rows: usize,
}

/// `model.kbdg` → `model.kbdg.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// File name of a checkpoint inside a run directory.
pub const CHECKPOINT_FILE: &str = "model.kbdg";

/// One model for everything, or one per domain.
#[derive(Debug)]
pub enum ModelSet {
    Single(Model),
    PerDomain(BTreeMap<String, Model>),
}

impl ModelSet {
    /// Loads a checkpoint file, or every `<domain>/model.kbdg` under a
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        if path.is_file() {
            return Ok(ModelSet::Single(Model::load(path)?));
        }
        let entries = std::fs::read_dir(path).map_err(|e| Error::io(path, e))?;
        let mut models = BTreeMap::new();
        let direct = path.join(CHECKPOINT_FILE);
        if direct.is_file() {
            return Ok(ModelSet::Single(Model::load(&direct)?));
        }
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(path, e))?;
            let ckpt = entry.path().join(CHECKPOINT_FILE);
            if ckpt.is_file() {
                let domain = entry.file_name().to_string_lossy().into_owned();
                models.insert(domain, Model::load(&ckpt)?);
            }
        }
        if models.is_empty() {
            return Err(Error::Checkpoint(format!("no {CHECKPOINT_FILE} under {}", path.display())));
        }
        Ok(ModelSet::PerDomain(models))
    }

    pub fn for_domain(&self, domain: &str) -> Option<&Model> {
        match self {
            ModelSet::Single(m) => Some(m),
            ModelSet::PerDomain(map) => map.get(domain),
        }
    }
}
