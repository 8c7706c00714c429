//! Memory-network KB row retriever.
//!
//! The dialogue history is a bag of query embeddings; each row is the bag
//! of its cell-value embeddings. Hop `i` attends over row stack `R^i`,
//! reads from `R^{i+1}` and adds the read-out to the query. The final
//! distribution over rows scores `R^{n+1}` against `W_mem · q^{n+1}`.
//! Adjacent hops share tables: hop `i`'s output stack is hop `i+1`'s input.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numeric::{argmax, softmax_unchecked, Graph, ParamId, ParamStore, Tensor, Var};

/// Floor applied to row probabilities before taking logs.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct RetrieverParams {
    pub query_embedding: ParamId,
    /// `hops + 1` cell-value tables; table 0 is the row encoder `φ^value`.
    pub value_embeddings: Vec<ParamId>,
    pub memory_projection: ParamId,
    pub hops: usize,
    pub dim: usize,
}

pub(crate) fn uniform_tensor(rng: &mut impl Rng, shape: &[usize], bound: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-bound..bound)).collect()).expect("shape")
}

impl RetrieverParams {
    pub fn init(
        store: &mut ParamStore,
        query_vocab: usize,
        value_vocab: usize,
        dim: usize,
        hops: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let query_embedding = store.add("retriever.query_embedding", uniform_tensor(rng, &[query_vocab, dim], 0.1))?;
        let value_embeddings = (0..=hops)
            .map(|i| store.add(&format!("retriever.value_embedding.{i}"), uniform_tensor(rng, &[value_vocab, dim], 0.1)))
            .collect::<Result<Vec<_>>>()?;
        let bound = (6.0 / (2 * dim) as f64).sqrt();
        let memory_projection = store.add("retriever.memory_projection", uniform_tensor(rng, &[dim, dim], bound))?;
        Ok(RetrieverParams {
            query_embedding,
            value_embeddings,
            memory_projection,
            hops,
            dim,
        })
    }

    pub fn ids(&self) -> Vec<ParamId> {
        let mut v = vec![self.query_embedding, self.memory_projection];
        v.extend(&self.value_embeddings);
        v
    }

    /// `q = Σ_i φ^emb'(x_i)`.
    pub fn encode_query(&self, g: &mut Graph, history: &[usize]) -> Result<Var> {
        let (&first, rest) = history.split_first().ok_or(Error::Empty("dialogue history"))?;
        let mut q = g.embed(self.query_embedding, first);
        for &x in rest {
            let e = g.embed(self.query_embedding, x);
            q = g.add(q, e);
        }
        Ok(q)
    }

    /// Row vectors `r_j = Σ_k table(v_{j,k})`, stacked into a `|R| x d` matrix.
    pub fn encode_rows(&self, g: &mut Graph, table: ParamId, rows: &[Vec<usize>]) -> Var {
        let encoded: Vec<Var> = rows
            .iter()
            .map(|row| {
                let mut r = g.embed(table, row[0]);
                for &v in &row[1..] {
                    let e = g.embed(table, v);
                    r = g.add(r, e);
                }
                r
            })
            .collect();
        g.stack(&encoded)
    }

    /// Distribution `a` over rows.
    pub fn select(&self, g: &mut Graph, query: Var, rows: &[Vec<usize>]) -> Result<Var> {
        let logits = self.row_logits(g, query, rows)?;
        Ok(g.softmax(logits))
    }

    /// Unnormalized row scores `R^{n+1} · W_mem q^{n+1}`.
    pub fn row_logits(&self, g: &mut Graph, query: Var, rows: &[Vec<usize>]) -> Result<Var> {
        if rows.is_empty() {
            return Err(Error::Empty("knowledge base rows"));
        }
        let stacks: Vec<Var> = self
            .value_embeddings
            .iter()
            .map(|&t| self.encode_rows(g, t, rows))
            .collect();
        let mut q = query;
        for hop in 0..self.hops {
            let scores = g.matvec(stacks[hop], q);
            let attention = g.softmax(scores);
            let read = g.mat_t_vec(stacks[hop + 1], attention);
            q = g.add(q, read);
        }
        let w = g.param(self.memory_projection);
        let projected = g.matvec(w, q);
        Ok(g.matvec(stacks[self.hops], projected))
    }
}

/// Hard or relaxed row selection for one dialogue turn.
#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalResult {
    /// Row distribution `a`.
    pub distribution: Vec<f64>,
    /// Selected row, `argmax a` (lowest index on ties).
    pub row: usize,
    pub tie: bool,
    pub num_cols: usize,
    /// Row-major 0-1 cell mask `t`.
    pub t: Vec<f64>,
    /// Relaxed per-row weights, when sampled.
    pub soft: Option<Vec<f64>>,
    pub tau: Option<f64>,
}

impl RetrievalResult {
    pub fn num_rows(&self) -> usize {
        self.distribution.len()
    }

    /// The `|R| x |C|` 0-1 matrix `T`.
    pub fn matrix(&self) -> Vec<Vec<u8>> {
        self.t
            .chunks(self.num_cols)
            .map(|r| r.iter().map(|&x| x as u8).collect())
            .collect()
    }

    /// Selection of a fixed row, e.g. from a weak label.
    pub fn fixed(row: usize, num_rows: usize, num_cols: usize) -> Self {
        let mut a = vec![0.0; num_rows];
        a[row] = 1.0;
        harden(&a, num_cols)
    }

    /// Relaxed cell weights: each row weight tiled across its columns.
    pub fn soft_cells(&self) -> Option<Vec<f64>> {
        self.soft.as_ref().map(|w| {
            w.iter()
                .flat_map(|&x| std::iter::repeat_n(x, self.num_cols))
                .collect()
        })
    }
}

/// `T_{j,*} = 1[j = argmax a]`, flattened row-major.
pub fn harden(a: &[f64], num_cols: usize) -> RetrievalResult {
    let row = argmax(a);
    let tie = a.iter().filter(|&&x| x == a[row]).count() > 1;
    if tie {
        log::debug!("retrieval tie over {} rows; taking row {row}", a.len());
    }
    let mut t = vec![0.0; a.len() * num_cols];
    t[row * num_cols..(row + 1) * num_cols].iter_mut().for_each(|x| *x = 1.0);
    RetrievalResult {
        distribution: a.to_vec(),
        row,
        tie,
        num_cols,
        t,
        soft: None,
        tau: None,
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidTemperature(tau))
    }
}

/// `softmax((log a + g) / τ)` on the tape, differentiable w.r.t. `a`.
pub fn gumbel_soften(g: &mut Graph, a: Var, tau: f64, noise: &[f64]) -> Result<Var> {
    check_tau(tau)?;
    let log_a = g.log_clamped(a, LOG_FLOOR);
    let perturbed = g.add_const(log_a, noise);
    let scaled = g.scale(perturbed, 1.0 / tau);
    Ok(g.softmax(scaled))
}

/// Value-level counterpart of [`gumbel_soften`].
pub fn gumbel_soften_values(a: &[f64], tau: f64, noise: &[f64]) -> Result<Vec<f64>> {
    check_tau(tau)?;
    if a.len() != noise.len() {
        return Err(Error::LengthMismatch {
            what: "gumbel noise",
            left: a.len(),
            right: noise.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::Empty("row distribution"));
    }
    let z: Vec<f64> = a
        .iter()
        .zip(noise)
        .map(|(p, n)| (p.max(LOG_FLOOR).ln() + n) / tau)
        .collect();
    Ok(softmax_unchecked(&z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{check_gradients, gumbel_noise, seeded_rng};

    /// Builds a retriever whose tables are set by hand: `dim = 2`, query
    /// vocabulary of 3, value vocabulary of 4.
    fn hand_set(hops: usize) -> (ParamStore, RetrieverParams) {
        let mut store = ParamStore::new();
        let mut rng = seeded_rng(0);
        let r = RetrieverParams::init(&mut store, 3, 4, 2, hops, &mut rng).unwrap();
        *store.value_mut(r.query_embedding) = Tensor::matrix(3, 2, vec![0.5, -0.25, 1.0, 0.75, -0.5, 0.2]);
        for (i, &t) in r.value_embeddings.iter().enumerate() {
            let s = 1.0 + i as f64 * 0.5;
            *store.value_mut(t) = Tensor::matrix(4, 2, vec![0.1 * s, 0.3, -0.2, 0.4 * s, 0.6, -0.1 * s, 0.0, 0.25]);
        }
        *store.value_mut(r.memory_projection) = Tensor::matrix(2, 2, vec![0.9, -0.3, 0.2, 1.1]);
        (store, r)
    }

    #[test]
    fn single_row_gives_certainty() {
        let (store, r) = hand_set(3);
        let mut g = Graph::new(&store);
        let q = r.encode_query(&mut g, &[0, 1]).unwrap();
        let a = r.select(&mut g, q, &[vec![1, 2]]).unwrap();
        assert_eq!(g.value(a).data(), &[1.0]);
    }

    #[test]
    fn identical_rows_give_uniform_distribution() {
        let (store, r) = hand_set(3);
        let mut g = Graph::new(&store);
        let q = r.encode_query(&mut g, &[2, 1, 1]).unwrap();
        let a = r.select(&mut g, q, &[vec![1, 3], vec![1, 3], vec![1, 3]]).unwrap();
        for &x in g.value(a).data() {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_history_and_empty_kb_are_errors() {
        let (store, r) = hand_set(1);
        let mut g = Graph::new(&store);
        assert!(matches!(r.encode_query(&mut g, &[]), Err(Error::Empty(_))));
        let q = r.encode_query(&mut g, &[0]).unwrap();
        assert!(matches!(r.select(&mut g, q, &[]), Err(Error::Empty(_))));
    }

    #[test]
    fn query_is_an_order_free_sum() {
        let (store, r) = hand_set(1);
        let mut g = Graph::new(&store);
        let q1 = r.encode_query(&mut g, &[0]).unwrap();
        assert_eq!(g.value(q1).data(), &[0.5, -0.25]);
        let q2 = r.encode_query(&mut g, &[0, 1]).unwrap();
        assert_eq!(g.value(q2).data(), &[1.5, 0.5]);
        let q3 = r.encode_query(&mut g, &[2, 0, 1]).unwrap();
        let q4 = r.encode_query(&mut g, &[1, 2, 0]).unwrap();
        assert_eq!(g.value(q3).data(), g.value(q4).data());
    }

    #[test]
    fn row_encoding_is_an_order_free_sum() {
        let (store, r) = hand_set(1);
        let t = r.value_embeddings[0];
        let mut g = Graph::new(&store);
        let rows_v = r.encode_rows(&mut g, t, &[vec![0, 1], vec![2, 2]]);
        let rows = g.value(rows_v).clone();
        // table 0: v0 = (0.1, 0.3), v1 = (-0.2, 0.4), v2 = (0.6, -0.1)
        let expected = [0.1 - 0.2, 0.3 + 0.4, 1.2, -0.2];
        for (a, b) in rows.data().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        let same_v = r.encode_rows(&mut g, t, &[vec![1, 0]]);
        let same = g.value(same_v).clone();
        assert_eq!(same.row(0), rows.row(0));
        let repeated_v = r.encode_rows(&mut g, t, &[vec![3, 3, 3]]);
        let repeated = g.value(repeated_v).clone();
        assert_eq!(repeated.data(), &[0.0, 0.75]);
    }

    /// Step-by-step evaluation of the one-hop equations with plain floats.
    #[test]
    fn one_hop_matches_manual_evaluation() {
        let (store, r) = hand_set(1);
        let rows = vec![vec![0, 1], vec![2, 3], vec![1, 2]];
        let history = [0, 2, 2];

        let table = |i: usize| store.value(r.value_embeddings[i]).clone();
        let bag = |t: &Tensor, ids: &[usize]| -> Vec<f64> {
            let mut s = vec![0.0; 2];
            for &i in ids {
                s[0] += t.row(i)[0];
                s[1] += t.row(i)[1];
            }
            s
        };
        let q1 = bag(store.value(r.query_embedding), &history);
        let r1: Vec<Vec<f64>> = rows.iter().map(|row| bag(&table(0), row)).collect();
        let r2: Vec<Vec<f64>> = rows.iter().map(|row| bag(&table(1), row)).collect();
        let dot = |a: &[f64], b: &[f64]| a[0] * b[0] + a[1] * b[1];
        let sm = |v: Vec<f64>| {
            let z: f64 = v.iter().map(|x| x.exp()).sum();
            v.iter().map(|x| x.exp() / z).collect::<Vec<_>>()
        };
        let pi = sm(r1.iter().map(|rj| dot(&q1, rj)).collect());
        let o: Vec<f64> = (0..2).map(|k| (0..3).map(|j| pi[j] * r2[j][k]).sum()).collect();
        let u = [q1[0] + o[0], q1[1] + o[1]];
        let w = store.value(r.memory_projection);
        let wu = [dot(w.row(0), &u), dot(w.row(1), &u)];
        let expected = sm(r2.iter().map(|rj| dot(rj, &wu)).collect());

        let mut g = Graph::new(&store);
        let q = r.encode_query(&mut g, &history).unwrap();
        let a = r.select(&mut g, q, &rows).unwrap();
        for (x, y) in g.value(a).data().iter().zip(&expected) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
    }

    #[test]
    fn harden_examples() {
        let res = harden(&[0.1, 0.7, 0.2], 2);
        assert_eq!(res.t, [0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        assert_eq!(res.matrix(), vec![vec![0, 0], vec![1, 1], vec![0, 0]]);
        assert!(!res.tie);
        let tie = harden(&[0.5, 0.5], 3);
        assert_eq!((tie.row, tie.tie), (0, true));
    }

    #[test]
    fn harden_agrees_with_a_linear_scan() {
        let mut rng = seeded_rng(5);
        for _ in 0..200 {
            let raw: Vec<f64> = (0..5).map(|_| rng.gen::<f64>()).collect();
            let a = softmax_unchecked(&raw);
            let mut best = 0;
            for j in 1..5 {
                if a[j] > a[best] {
                    best = j;
                }
            }
            let res = harden(&a, 4);
            assert_eq!(res.row, best);
            assert_eq!(res.t.iter().filter(|&&x| x == 1.0).count(), 4);
        }
    }

    #[test]
    fn temperature_limits() {
        let a = [0.2, 0.5, 0.3];
        let noise = [0.4, -0.3, 1.1];
        let hot = gumbel_soften_values(&a, 1e6, &noise).unwrap();
        for w in hot {
            assert!((w - 1.0 / 3.0).abs() < 1e-6);
        }
        let cold = gumbel_soften_values(&a, 1e-6, &noise).unwrap();
        let z: Vec<f64> = a.iter().zip(&noise).map(|(p, n): (&f64, &f64)| p.ln() + n).collect();
        let hot_row = argmax(&z);
        for (j, w) in cold.iter().enumerate() {
            let target = if j == hot_row { 1.0 } else { 0.0 };
            assert!((w - target).abs() < 1e-6);
        }
    }

    #[test]
    fn non_positive_temperature_is_rejected() {
        for tau in [0.0, -1.0, f64::NAN] {
            assert!(matches!(gumbel_soften_values(&[1.0], tau, &[0.0]), Err(Error::InvalidTemperature(_))));
        }
    }

    #[test]
    fn soft_weights_gradient_matches_finite_differences() {
        let mut store = ParamStore::new();
        let logits = store.add("logits", Tensor::vector(vec![0.3, -0.4, 0.9, 0.1])).unwrap();
        let noise = gumbel_noise(&mut seeded_rng(9), 4);
        let weights = [0.7, -1.2, 0.4, 2.0];
        let f = |g: &mut Graph| {
            let l = g.param(logits);
            let a = g.softmax(l);
            let soft = gumbel_soften(g, a, 0.5, &noise).unwrap();
            let w = g.constant_vec(weights.to_vec());
            g.dot(soft, w)
        };
        let report = check_gradients(&mut store, f, 1e-5);
        assert!(report.max_rel_error < 1e-6, "{report:?}");
        assert!(report.analytic != 0.0 || report.checked == 4);
    }

    #[test]
    fn row_permutation_permutes_the_distribution() {
        let (store, r) = hand_set(3);
        let rows = vec![vec![0, 1], vec![2, 3], vec![1, 2], vec![3, 3]];
        let perm = [2, 0, 3, 1];
        let permuted: Vec<Vec<usize>> = perm.iter().map(|&j| rows[j].clone()).collect();
        let mut g = Graph::new(&store);
        let q = r.encode_query(&mut g, &[0, 1, 2]).unwrap();
        let a_v = r.select(&mut g, q, &rows).unwrap();
        let a = g.value(a_v).clone();
        let b_v = r.select(&mut g, q, &permuted).unwrap();
        let b = g.value(b_v).clone();
        for (i, &j) in perm.iter().enumerate() {
            assert!((b.data()[i] - a.data()[j]).abs() < 1e-14);
        }
    }
}
