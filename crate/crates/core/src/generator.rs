//! Sequence-to-sequence response generator with a KB copy block.
//!
//! A bidirectional LSTM encodes the history, a unidirectional LSTM decodes.
//! Each step scores the word vocabulary from the decoder state and the
//! attended history, and scores every KB cell by its column's relevance to
//! the decoder state gated by the row selection `t`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numeric::{Graph, ParamId, ParamStore, Rng64, Tensor, Var};
use crate::retriever::uniform_tensor;

/// Logit offset for entity slots the decoder may not emit.
pub const MASK_VALUE: f64 = -1e9;

#[derive(Clone, Debug)]
pub struct Lstm {
    pub weight: ParamId,
    pub bias: ParamId,
    pub hidden: usize,
}

impl Lstm {
    fn init(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut impl Rng) -> Result<Self> {
        let bound = 1.0 / (hidden as f64).sqrt();
        let weight = store.add(&format!("{name}.weight"), uniform_tensor(rng, &[4 * hidden, input + hidden], bound))?;
        let mut b = vec![0.0; 4 * hidden];
        b[hidden..2 * hidden].iter_mut().for_each(|x| *x = 1.0);
        let bias = store.add(&format!("{name}.bias"), Tensor::vector(b))?;
        Ok(Lstm { weight, bias, hidden })
    }

    /// One step; gates are laid out input, forget, cell, output.
    pub fn step(&self, g: &mut Graph, x: Var, state: (Var, Var)) -> (Var, Var) {
        let (h, c) = state;
        let xh = g.concat(&[x, h]);
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        let wx = g.matvec(w, xh);
        let z = g.add(wx, b);
        let n = self.hidden;
        let zi = g.slice(z, 0, n);
        let zf = g.slice(z, n, n);
        let zg = g.slice(z, 2 * n, n);
        let zo = g.slice(z, 3 * n, n);
        let i = g.sigmoid(zi);
        let f = g.sigmoid(zf);
        let cand = g.tanh(zg);
        let o = g.sigmoid(zo);
        let keep = g.mul(f, c);
        let write = g.mul(i, cand);
        let c2 = g.add(keep, write);
        let tc = g.tanh(c2);
        let h2 = g.mul(o, tc);
        (h2, c2)
    }

    fn zero_state(&self, g: &mut Graph) -> (Var, Var) {
        let h = g.constant_vec(vec![0.0; self.hidden]);
        let c = g.constant_vec(vec![0.0; self.hidden]);
        (h, c)
    }
}

/// Inverted dropout. A rate of zero, or no RNG, is the identity.
pub struct Dropout<'r> {
    rate: f64,
    rng: Option<&'r mut Rng64>,
}

impl<'r> Dropout<'r> {
    pub fn new(rate: f64, rng: &'r mut Rng64) -> Self {
        Dropout { rate, rng: Some(rng) }
    }

    pub fn off() -> Self {
        Dropout { rate: 0.0, rng: None }
    }

    pub fn apply(&mut self, g: &mut Graph, x: Var) -> Var {
        match self.rng.as_deref_mut() {
            Some(rng) if self.rate > 0.0 => {
                let keep = 1.0 - self.rate;
                let mask = (0..g.value(x).len())
                    .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                    .collect();
                g.mul_const(x, mask)
            }
            _ => x,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GeneratorParams {
    pub embedding: ParamId,
    pub encoder_fwd: Lstm,
    pub encoder_bwd: Lstm,
    pub decoder: Lstm,
    pub init_weight: ParamId,
    pub init_bias: ParamId,
    /// History attention `W1`, split into its encoder and decoder halves.
    pub attn_enc: ParamId,
    pub attn_dec: ParamId,
    pub attn_out: ParamId,
    /// Column attention `W'1`, split into its key and decoder halves.
    pub col_key: ParamId,
    pub col_dec: ParamId,
    pub col_out: ParamId,
    /// `d_emb x 3h` projection under weight tying, `|V| x 3h` otherwise.
    pub output: ParamId,
    pub tied: bool,
    pub emb_dim: usize,
    pub hidden: usize,
}

/// Encoder output for one history.
pub struct Encoded {
    /// `[fwd_i; bwd_i]` per position.
    pub states: Var,
    /// `W1_enc · h_i` per position.
    keys: Vec<Var>,
    pub init: (Var, Var),
}

impl GeneratorParams {
    pub fn init(
        store: &mut ParamStore,
        vocab: usize,
        emb_dim: usize,
        hidden: usize,
        tied: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let glorot = |a: usize, b: usize| (6.0 / (a + b) as f64).sqrt();
        let embedding = store.add("generator.embedding", uniform_tensor(rng, &[vocab, emb_dim], 0.1))?;
        let encoder_fwd = Lstm::init(store, "generator.encoder_fwd", emb_dim, hidden, rng)?;
        let encoder_bwd = Lstm::init(store, "generator.encoder_bwd", emb_dim, hidden, rng)?;
        let decoder = Lstm::init(store, "generator.decoder", emb_dim, hidden, rng)?;
        let init_weight = store.add(
            "generator.init.weight",
            uniform_tensor(rng, &[hidden, 2 * hidden], glorot(hidden, 2 * hidden)),
        )?;
        let init_bias = store.add("generator.init.bias", Tensor::vector(vec![0.0; hidden]))?;
        let att = hidden;
        let attn_enc = store.add("generator.attn.enc", uniform_tensor(rng, &[att, 2 * hidden], glorot(att, 3 * hidden)))?;
        let attn_dec = store.add("generator.attn.dec", uniform_tensor(rng, &[att, hidden], glorot(att, 3 * hidden)))?;
        let attn_out = store.add("generator.attn.out", uniform_tensor(rng, &[att], glorot(att, 1)))?;
        let col_key = store.add("generator.col.key", uniform_tensor(rng, &[att, emb_dim], glorot(att, emb_dim + hidden)))?;
        let col_dec = store.add("generator.col.dec", uniform_tensor(rng, &[att, hidden], glorot(att, emb_dim + hidden)))?;
        let col_out = store.add("generator.col.out", uniform_tensor(rng, &[att], glorot(att, 1)))?;
        let output = if tied {
            store.add("generator.output.proj", uniform_tensor(rng, &[emb_dim, 3 * hidden], glorot(emb_dim, 3 * hidden)))?
        } else {
            store.add("generator.output.weight", uniform_tensor(rng, &[vocab, 3 * hidden], glorot(vocab, 3 * hidden)))?
        };
        Ok(GeneratorParams {
            embedding,
            encoder_fwd,
            encoder_bwd,
            decoder,
            init_weight,
            init_bias,
            attn_enc,
            attn_dec,
            attn_out,
            col_key,
            col_dec,
            col_out,
            output,
            tied,
            emb_dim,
            hidden,
        })
    }

    /// Runs the bidirectional encoder (dropout on its outputs) and derives the decoder's initial
    /// state from the final forward and first backward states.
    pub fn encode(&self, g: &mut Graph, ids: &[usize], dropout: &mut Dropout) -> Result<Encoded> {
        if ids.is_empty() {
            return Err(Error::Empty("dialogue history"));
        }
        let xs: Vec<Var> = ids.iter().map(|&id| g.embed(self.embedding, id)).collect();
        let mut fwd = Vec::with_capacity(xs.len());
        let mut state = self.encoder_fwd.zero_state(g);
        for &x in &xs {
            state = self.encoder_fwd.step(g, x, state);
            fwd.push(state.0);
        }
        let mut bwd = vec![fwd[0]; xs.len()];
        let mut state = self.encoder_bwd.zero_state(g);
        for (i, &x) in xs.iter().enumerate().rev() {
            state = self.encoder_bwd.step(g, x, state);
            bwd[i] = state.0;
        }
        let hs: Vec<Var> = fwd
            .iter()
            .zip(&bwd)
            .map(|(&f, &b)| {
                let h = g.concat(&[f, b]);
                dropout.apply(g, h)
            })
            .collect();
        let wenc = g.param(self.attn_enc);
        let keys = hs.iter().map(|&h| g.matvec(wenc, h)).collect();
        let summary = g.concat(&[fwd[fwd.len() - 1], bwd[0]]);
        let wi = g.param(self.init_weight);
        let bi = g.param(self.init_bias);
        let z = g.matvec(wi, summary);
        let z = g.add(z, bi);
        let h0 = g.tanh(z);
        let c0 = g.constant_vec(vec![0.0; self.hidden]);
        Ok(Encoded {
            states: g.stack(&hs),
            keys,
            init: (h0, c0),
        })
    }

    pub fn decoder_step(&self, g: &mut Graph, input: usize, state: (Var, Var), dropout: &mut Dropout) -> (Var, Var) {
        let e = g.embed(self.embedding, input);
        let x = dropout.apply(g, e);
        self.decoder.step(g, x, state)
    }

    /// `h̃' = Σ_i softmax(W2 tanh(W1 [h_i, h̃]))_i h_i`.
    pub fn history_attention(&self, g: &mut Graph, enc: &Encoded, h_dec: Var) -> Var {
        let wd = g.param(self.attn_dec);
        let w2 = g.param(self.attn_out);
        let q = g.matvec(wd, h_dec);
        let scores: Vec<Var> = enc
            .keys
            .iter()
            .map(|&k| {
                let s = g.add(k, q);
                let s = g.tanh(s);
                g.dot(w2, s)
            })
            .collect();
        let scores = g.concat(&scores);
        let weights = g.softmax(scores);
        g.mat_t_vec(enc.states, weights)
    }

    /// `W'1_key · φ(k)` for each column-name token.
    pub fn column_keys(&self, g: &mut Graph, columns: &[usize]) -> Vec<Var> {
        let wk = g.param(self.col_key);
        columns
            .iter()
            .map(|&c| {
                let e = g.embed(self.embedding, c);
                g.matvec(wk, e)
            })
            .collect()
    }

    /// Column relevance `c_k = W'2 tanh(W'1 [k_k, h̃])`, one per column.
    pub fn column_scores(&self, g: &mut Graph, keys: &[Var], h_dec: Var) -> Var {
        let wd = g.param(self.col_dec);
        let w2 = g.param(self.col_out);
        let q = g.matvec(wd, h_dec);
        let scores: Vec<Var> = keys
            .iter()
            .map(|&k| {
                let s = g.add(k, q);
                let s = g.tanh(s);
                g.dot(w2, s)
            })
            .collect();
        g.concat(&scores)
    }

    /// Word logits `U [h̃, h̃']`.
    pub fn word_logits(&self, g: &mut Graph, h_dec: Var, context: Var) -> Var {
        let x = g.concat(&[h_dec, context]);
        let out = g.param(self.output);
        if self.tied {
            let p = g.matvec(out, x);
            let emb = g.param(self.embedding);
            g.matvec(emb, p)
        } else {
            g.matvec(out, x)
        }
    }
}

/// Row gating applied to the entity block.
#[derive(Clone, Copy, Debug)]
pub enum RowGate<'a> {
    /// Fixed 0-1 cell mask, row-major.
    Hard(&'a [f64]),
    /// Differentiable per-cell weights.
    Soft(Var),
}

/// `v = t ⊙ tile(c, |R|)`.
pub fn fuse_entity_scores(g: &mut Graph, gate: RowGate, columns: Var, num_rows: usize) -> Result<Var> {
    let tiled = g.tile(columns, num_rows);
    let cells = g.value(tiled).len();
    match gate {
        RowGate::Hard(t) => {
            if t.len() != cells {
                return Err(Error::LengthMismatch {
                    what: "row selection mask",
                    left: t.len(),
                    right: cells,
                });
            }
            Ok(g.mul_const(tiled, t.to_vec()))
        }
        RowGate::Soft(t) => {
            let n = g.value(t).len();
            if n != cells {
                return Err(Error::LengthMismatch {
                    what: "row selection weights",
                    left: n,
                    right: cells,
                });
            }
            Ok(g.mul(t, tiled))
        }
    }
}

/// `o = [word logits ; v + mask]`.
pub fn step_logits(g: &mut Graph, words: Var, entities: Var, mask: &[f64]) -> Var {
    let masked = g.add_const(entities, mask);
    g.concat(&[words, masked])
}

/// Entity-block mask: padding cells are always blocked, and with a hard
/// selection so is every cell outside the selected row.
pub fn entity_mask(cells: &[&str], num_cols: usize, selected: Option<usize>) -> Vec<f64> {
    cells
        .iter()
        .enumerate()
        .map(|(e, c)| {
            let outside = selected.is_some_and(|r| e / num_cols != r);
            if *c == crate::corpus::PAD || outside {
                MASK_VALUE
            } else {
                0.0
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{check_gradients, seeded_rng};

    fn small(tied: bool) -> (ParamStore, GeneratorParams) {
        let mut store = ParamStore::new();
        let gen = GeneratorParams::init(&mut store, 7, 3, 2, tied, &mut seeded_rng(4)).unwrap();
        (store, gen)
    }

    #[test]
    fn mask_blocks_padding_and_other_rows() {
        let cells = ["a", "-", "b", "c", "d", "-"];
        assert_eq!(entity_mask(&cells, 2, None), [0.0, MASK_VALUE, 0.0, 0.0, 0.0, MASK_VALUE]);
        assert_eq!(
            entity_mask(&cells, 2, Some(1)),
            [MASK_VALUE, MASK_VALUE, 0.0, 0.0, MASK_VALUE, MASK_VALUE]
        );
    }

    #[test]
    fn fused_scores_follow_the_row_mask() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let c = g.constant_vec(vec![0.5, -2.0]);
        let t = [0.0, 0.0, 1.0, 1.0, 0.0, 0.0];
        let v = fuse_entity_scores(&mut g, RowGate::Hard(&t), c, 3).unwrap();
        assert_eq!(g.value(v).data(), &[0.0, 0.0, 0.5, -2.0, 0.0, 0.0]);
        let err = fuse_entity_scores(&mut g, RowGate::Hard(&t[..4]), c, 3);
        assert!(matches!(err, Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn logits_have_vocab_plus_cells_entries() {
        let (store, gen) = small(true);
        let mut g = Graph::new(&store);
        let enc = gen.encode(&mut g, &[4, 5, 6], &mut Dropout::off()).unwrap();
        let (h, _) = gen.decoder_step(&mut g, 2, enc.init, &mut Dropout::off());
        let ctx = gen.history_attention(&mut g, &enc, h);
        let keys = gen.column_keys(&mut g, &[4, 5]);
        let c = gen.column_scores(&mut g, &keys, h);
        let t = [1.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        let v = fuse_entity_scores(&mut g, RowGate::Hard(&t), c, 3).unwrap();
        let w = gen.word_logits(&mut g, h, ctx);
        let o = step_logits(&mut g, w, v, &[0.0; 6]);
        assert_eq!(g.value(o).len(), 7 + 6);
    }

    #[test]
    fn reversed_input_swaps_the_directions() {
        let (mut store, gen) = small(false);
        let w = store.value(gen.encoder_fwd.weight).clone();
        let b = store.value(gen.encoder_fwd.bias).clone();
        *store.value_mut(gen.encoder_bwd.weight) = w;
        *store.value_mut(gen.encoder_bwd.bias) = b;
        let ids = [4, 1, 6, 5];
        let rev: Vec<usize> = ids.iter().rev().copied().collect();
        let mut g = Graph::new(&store);
        let a = gen.encode(&mut g, &ids, &mut Dropout::off()).unwrap();
        let r = gen.encode(&mut g, &rev, &mut Dropout::off()).unwrap();
        let (a, r) = (g.value(a.states).clone(), g.value(r.states).clone());
        for i in 0..4 {
            let fwd = &a.row(i)[..2];
            let bwd_rev = &r.row(3 - i)[2..];
            assert_eq!(fwd, bwd_rev);
        }
    }

    #[test]
    fn single_token_history_gives_one_state() {
        let (store, gen) = small(false);
        let mut g = Graph::new(&store);
        let enc = gen.encode(&mut g, &[5], &mut Dropout::off()).unwrap();
        assert_eq!(g.value(enc.states).shape(), &[1, 4]);
        let (h, _) = gen.decoder_step(&mut g, 2, enc.init, &mut Dropout::off());
        let ctx = gen.history_attention(&mut g, &enc, h);
        assert_eq!(g.value(ctx).data(), g.value(enc.states).row(0));
    }

    #[test]
    fn column_scores_tile_row_major() {
        let (store, gen) = small(false);
        let mut g = Graph::new(&store);
        let enc = gen.encode(&mut g, &[5], &mut Dropout::off()).unwrap();
        let keys = gen.column_keys(&mut g, &[4, 5, 4]);
        let c = gen.column_scores(&mut g, &keys, enc.init.0);
        let cv = g.value(c).data().to_vec();
        assert_eq!(cv[0], cv[2]);
        let v = fuse_entity_scores(&mut g, RowGate::Hard(&[1.0; 6]), c, 2).unwrap();
        let vv = g.value(v).data();
        assert_eq!(&vv[..3], &cv[..]);
        assert_eq!(&vv[3..], &cv[..]);
    }

    #[test]
    fn empty_history_is_rejected() {
        let (store, gen) = small(false);
        let mut g = Graph::new(&store);
        assert!(matches!(gen.encode(&mut g, &[], &mut Dropout::off()), Err(Error::Empty(_))));
    }

    #[test]
    fn dropout_zero_is_identity() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let x = g.constant_vec(vec![1.0, 2.0, 3.0]);
        let mut rng = seeded_rng(0);
        let y = Dropout::new(0.0, &mut rng).apply(&mut g, x);
        assert_eq!(x, y);
    }

    /// Every generator parameter receives a correct gradient through one
    /// full decoding step.
    #[test]
    fn step_gradients_match_finite_differences() {
        for tied in [true, false] {
            let (mut store, gen) = small(tied);
            let f = |g: &mut Graph| {
                let enc = gen.encode(g, &[4, 5, 1], &mut Dropout::off()).unwrap();
                let (h, c) = gen.decoder_step(g, 2, enc.init, &mut Dropout::off());
                let (h, _) = gen.decoder_step(g, 6, (h, c), &mut Dropout::off());
                let ctx = gen.history_attention(g, &enc, h);
                let keys = gen.column_keys(g, &[4, 6]);
                let cs = gen.column_scores(g, &keys, h);
                let t = [0.0, 0.0, 1.0, 1.0];
                let v = fuse_entity_scores(g, RowGate::Hard(&t), cs, 2).unwrap();
                let w = gen.word_logits(g, h, ctx);
                let o = step_logits(g, w, v, &[0.0, 0.0, 0.0, MASK_VALUE]);
                let lp = g.log_softmax(o);
                let a = g.pick(lp, 9);
                let b = g.pick(lp, 3);
                let s = g.add(a, b);
                g.scale(s, -1.0)
            };
            let report = check_gradients(&mut store, f, 1e-5);
            assert!(report.max_rel_error <= 1e-4, "tied={tied}: {report:?}");
        }
    }
}
