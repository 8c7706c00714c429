use std::collections::HashMap;

use super::params::{ParamId, ParamStore};
use super::softmax_unchecked;
use super::tensor::Tensor;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    EmbedRow(ParamId, usize),
    MatVec(Var, Var),
    MatTVec(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    MulConst(Var, Vec<f64>),
    Concat(Vec<Var>),
    Slice(Var, usize),
    Stack(Vec<Var>),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    LogClamped(Var, f64),
    Softmax(Var),
    LogSoftmax(Var),
    Sum(Var),
    Dot(Var, Var),
    Pick(Var, usize),
    Tile(Var, usize),
    RepeatEach(Var, usize),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Per-parameter gradients produced by [`Graph::backward`], indexed like the
/// store they were computed against.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.grads.get(id.index()).and_then(Option::as_ref)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub(crate) fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.grads
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_ref().map(|g| (ParamId::from_index(i), g)))
    }
}

/// A single-use tape recording a forward computation over borrowed,
/// read-only parameters.
///
/// Every method computes its value eagerly; [`Graph::backward`] replays the
/// tape in reverse. Shape errors in op construction are programmer errors and
/// panic.
pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    bound: HashMap<ParamId, Var>,
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Graph {
            params,
            nodes: Vec::with_capacity(1024),
            bound: HashMap::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).item()
    }

    fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        debug_assert!(value.is_finite(), "non-finite value from {op:?}");
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant)
    }

    pub fn constant_vec(&mut self, data: Vec<f64>) -> Var {
        self.constant(Tensor::vector(data))
    }

    /// Binds a whole parameter tensor; repeated calls share one node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.bound.get(&id) {
            return v;
        }
        let v = self.push(self.params.value(id).clone(), Op::Param(id));
        self.bound.insert(id, v);
        v
    }

    /// Row `row` of a rank-2 parameter (an embedding lookup).
    pub fn embed(&mut self, id: ParamId, row: usize) -> Var {
        let value = Tensor::vector(self.params.value(id).row(row).to_vec());
        self.push(value, Op::EmbedRow(id, row))
    }

    /// `w · x` for a matrix `w` and vector `x`.
    pub fn matvec(&mut self, w: Var, x: Var) -> Var {
        let (wv, xv) = (self.value(w), self.value(x));
        let (r, c) = (wv.rows(), wv.cols());
        assert_eq!(c, xv.len(), "matvec: {:?} x {:?}", wv.shape(), xv.shape());
        let (wd, xd) = (wv.data(), xv.data());
        let out = (0..r)
            .map(|i| wd[i * c..(i + 1) * c].iter().zip(xd).map(|(a, b)| a * b).sum())
            .collect();
        self.push(Tensor::vector(out), Op::MatVec(w, x))
    }

    /// `mᵀ · p`: a `p`-weighted sum of the rows of `m`.
    pub fn mat_t_vec(&mut self, m: Var, p: Var) -> Var {
        let (mv, pv) = (self.value(m), self.value(p));
        let (r, c) = (mv.rows(), mv.cols());
        assert_eq!(r, pv.len(), "mat_t_vec: {:?} x {:?}", mv.shape(), pv.shape());
        let mut out = vec![0.0; c];
        for (i, &w) in pv.data().iter().enumerate() {
            for (o, x) in out.iter_mut().zip(mv.row(i)) {
                *o += w * x;
            }
        }
        self.push(Tensor::vector(out), Op::MatTVec(m, p))
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.len(), bv.len(), "elementwise: {:?} vs {:?}", av.shape(), bv.shape());
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::from_vec(av.shape(), data).expect("same shape")
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let av = self.value(a);
        Tensor::from_vec(av.shape(), av.data().iter().map(|&x| f(x)).collect()).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let t = self.zip_with(a, b, |x, y| x + y);
        self.push(t, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let t = self.zip_with(a, b, |x, y| x - y);
        self.push(t, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let t = self.zip_with(a, b, |x, y| x * y);
        self.push(t, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let t = self.map(a, |x| x * s);
        self.push(t, Op::Scale(a, s))
    }

    pub fn add_const(&mut self, a: Var, c: &[f64]) -> Var {
        assert_eq!(self.value(a).len(), c.len(), "add_const length");
        let av = self.value(a);
        let data = av.data().iter().zip(c).map(|(x, y)| x + y).collect();
        let t = Tensor::from_vec(av.shape(), data).expect("same shape");
        self.push(t, Op::AddConst(a))
    }

    pub fn mul_const(&mut self, a: Var, c: Vec<f64>) -> Var {
        assert_eq!(self.value(a).len(), c.len(), "mul_const length");
        let av = self.value(a);
        let data = av.data().iter().zip(&c).map(|(x, y)| x * y).collect();
        let t = Tensor::from_vec(av.shape(), data).expect("same shape");
        self.push(t, Op::MulConst(a, c))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut out = Vec::new();
        for &p in parts {
            out.extend_from_slice(self.data(p));
        }
        self.push(Tensor::vector(out), Op::Concat(parts.to_vec()))
    }

    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Var {
        let out = self.data(a)[start..start + len].to_vec();
        self.push(Tensor::vector(out), Op::Slice(a, start))
    }

    /// Stacks equal-length vectors into a matrix, one per row.
    pub fn stack(&mut self, rows: &[Var]) -> Var {
        assert!(!rows.is_empty(), "stack of nothing");
        let c = self.value(rows[0]).len();
        let mut out = Vec::with_capacity(rows.len() * c);
        for &r in rows {
            assert_eq!(self.value(r).len(), c, "stack: ragged rows");
            out.extend_from_slice(self.data(r));
        }
        self.push(Tensor::matrix(rows.len(), c, out), Op::Stack(rows.to_vec()))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = self.map(a, f64::tanh);
        self.push(t, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let t = self.map(a, |x| 1.0 / (1.0 + (-x).exp()));
        self.push(t, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let t = self.map(a, f64::exp);
        self.push(t, Op::Exp(a))
    }

    /// `ln(max(a, floor))`; the gradient is zero where the floor is active.
    pub fn log_clamped(&mut self, a: Var, floor: f64) -> Var {
        let t = self.map(a, |x| x.max(floor).ln());
        self.push(t, Op::LogClamped(a, floor))
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let out = softmax_unchecked(self.data(a));
        self.push(Tensor::vector(out), Op::Softmax(a))
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let d = self.data(a);
        let max = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + d.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        let out = d.iter().map(|x| x - lse).collect();
        self.push(Tensor::vector(out), Op::LogSoftmax(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.data(a).iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).len(), self.value(b).len(), "dot length");
        let s = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x * y).sum();
        self.push(Tensor::scalar(s), Op::Dot(a, b))
    }

    /// Element `i` of a vector as a scalar node.
    pub fn pick(&mut self, a: Var, i: usize) -> Var {
        let x = self.data(a)[i];
        self.push(Tensor::scalar(x), Op::Pick(a, i))
    }

    /// `[a, a, ..., a]` (`reps` copies).
    pub fn tile(&mut self, a: Var, reps: usize) -> Var {
        let d = self.data(a);
        let mut out = Vec::with_capacity(d.len() * reps);
        for _ in 0..reps {
            out.extend_from_slice(d);
        }
        self.push(Tensor::vector(out), Op::Tile(a, reps))
    }

    /// Each element repeated `times` times in place.
    pub fn repeat_each(&mut self, a: Var, times: usize) -> Var {
        let out = self
            .data(a)
            .iter()
            .flat_map(|&x| std::iter::repeat_n(x, times))
            .collect();
        self.push(Tensor::vector(out), Op::RepeatEach(a, times))
    }

    /// Reverse pass from a scalar node. Parameters the loss does not reach
    /// get no entry (read as zero).
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).len(), 1, "backward from a non-scalar");
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        let mut out = Gradients {
            grads: vec![None; self.params.len()],
        };

        fn acc(grads: &mut [Option<Vec<f64>>], v: Var, f: impl FnOnce(&mut [f64])) {
            f(grads[v.0].as_mut().expect("initialized"))
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let ensure = |grads: &mut Vec<Option<Vec<f64>>>, v: Var| {
                if grads[v.0].is_none() {
                    grads[v.0] = Some(vec![0.0; self.nodes[v.0].value.len()]);
                }
            };
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => {
                    let slot = out.grads[id.index()]
                        .get_or_insert_with(|| Tensor::zeros(self.params.value(*id).shape()));
                    for (s, x) in slot.data_mut().iter_mut().zip(&g) {
                        *s += x;
                    }
                }
                Op::EmbedRow(id, row) => {
                    let slot = out.grads[id.index()]
                        .get_or_insert_with(|| Tensor::zeros(self.params.value(*id).shape()));
                    let c = g.len();
                    for (s, x) in slot.data_mut()[row * c..(row + 1) * c].iter_mut().zip(&g) {
                        *s += x;
                    }
                }
                Op::MatVec(w, x) => {
                    let (wv, xv) = (self.value(*w), self.value(*x));
                    let c = wv.cols();
                    ensure(&mut grads, *w);
                    acc(&mut grads, *w, |dw| {
                        for (i, gi) in g.iter().enumerate() {
                            if *gi == 0.0 {
                                continue;
                            }
                            for (d, xk) in dw[i * c..(i + 1) * c].iter_mut().zip(xv.data()) {
                                *d += gi * xk;
                            }
                        }
                    });
                    ensure(&mut grads, *x);
                    acc(&mut grads, *x, |dx| {
                        for (i, gi) in g.iter().enumerate() {
                            if *gi == 0.0 {
                                continue;
                            }
                            for (d, wik) in dx.iter_mut().zip(wv.row(i)) {
                                *d += gi * wik;
                            }
                        }
                    });
                }
                Op::MatTVec(m, p) => {
                    let (mv, pv) = (self.value(*m), self.value(*p));
                    let c = mv.cols();
                    ensure(&mut grads, *m);
                    acc(&mut grads, *m, |dm| {
                        for (i, pi) in pv.data().iter().enumerate() {
                            for (d, gk) in dm[i * c..(i + 1) * c].iter_mut().zip(&g) {
                                *d += pi * gk;
                            }
                        }
                    });
                    ensure(&mut grads, *p);
                    acc(&mut grads, *p, |dp| {
                        for (i, d) in dp.iter_mut().enumerate() {
                            *d += mv.row(i).iter().zip(&g).map(|(a, b)| a * b).sum::<f64>();
                        }
                    });
                }
                Op::Add(a, b) => {
                    for v in [*a, *b] {
                        ensure(&mut grads, v);
                        acc(&mut grads, v, |d| add_into(d, &g));
                    }
                }
                Op::Sub(a, b) => {
                    ensure(&mut grads, *a);
                    acc(&mut grads, *a, |d| add_into(d, &g));
                    ensure(&mut grads, *b);
                    acc(&mut grads, *b, |d| {
                        d.iter_mut().zip(&g).for_each(|(d, g)| *d -= g)
                    });
                }
                Op::Mul(a, b) => {
                    let (ad, bd) = (self.data(*a), self.data(*b));
                    ensure(&mut grads, *a);
                    acc(&mut grads, *a, |d| {
                        for i in 0..d.len() {
                            d[i] += g[i] * bd[i];
                        }
                    });
                    ensure(&mut grads, *b);
                    acc(&mut grads, *b, |d| {
                        for i in 0..d.len() {
                            d[i] += g[i] * ad[i];
                        }
                    });
                }
                Op::Scale(a, s) => {
                    ensure(&mut grads, *a);
                    acc(&mut grads, *a, |d| {
                        d.iter_mut().zip(&g).for_each(|(d, g)| *d += s * g)
                    });
                }
                Op::AddConst(a) => {
                    ensure(&mut grads, *a);
                    acc(&mut grads, *a, |d| add_into(d, &g));
                }
                Op::MulConst(a, c) => {
                    ensure(&mut grads, *a);
                    acc(&mut grads, *a, |d| {
                        for i in 0..d.len() {
                            d[i] += g[i] * c[i];
                        }
                    });
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let n = self.value(p).len();
                        ensure(&mut grads, p);
                        acc(&mut grads, p, |d| add_into(d, &g[off..off + n]));
                        off += n;
                    }
                }
                Op::Slice(a, start) => {
                    ensure(&mut grads, *a);
                    acc(&mut grads, *a, |d| add_into(&mut d[*start..*start + g.len()], &g));
                }
                Op::Stack(rows) => {
                    let c = node.value.cols();
                    for (i, &r) in rows.iter().enumerate() {
                        ensure(&mut grads, r);
                        acc(&mut grads, r, |d| add_into(d, &g[i * c..(i + 1) * c]));
                    }
                }
                Op::Tanh(a) => {
                    let y = node.value.data();
                    ensure(&mut grads, *a);
                    acc(&mut grads, *a, |d| {
                        for i in 0..d.len() {
                            d[i] += g[i] * (1.0 - y[i] * y[i]);
                        }
                    });
                }
                Op::Sigmoid(a) => {
                    let y = node.value.data();
                    ensure(&mut grads, *a);
                    acc(&mut grads, *a, |d| {
                        for i in 0..d.len() {
                            d[i] += g[i] * y[i] * (1.0 - y[i]);
                        }
                    });
                }
                Op::Exp(a) => {
                    let y = node.value.data();
                    ensure(&mut grads, *a);
                    acc(&mut grads, *a, |d| {
                        for i in 0..d.len() {
                            d[i] += g[i] * y[i];
                        }
                    });
                }
                Op::LogClamped(a, floor) => {
                    let x = self.data(*a);
                    ensure(&mut grads, *a);
                    acc(&mut grads, *a, |d| {
                        for i in 0..d.len() {
                            if x[i] > *floor {
                                d[i] += g[i] / x[i];
                            }
                        }
                    });
                }
                Op::Softmax(a) => {
                    let y = node.value.data();
                    let gy: f64 = g.iter().zip(y).map(|(g, y)| g * y).sum();
                    ensure(&mut grads, *a);
                    acc(&mut grads, *a, |d| {
                        for i in 0..d.len() {
                            d[i] += y[i] * (g[i] - gy);
                        }
                    });
                }
                Op::LogSoftmax(a) => {
                    let y = node.value.data();
                    let gs: f64 = g.iter().sum();
                    ensure(&mut grads, *a);
                    acc(&mut grads, *a, |d| {
                        for i in 0..d.len() {
                            d[i] += g[i] - y[i].exp() * gs;
                        }
                    });
                }
                Op::Sum(a) => {
                    ensure(&mut grads, *a);
                    acc(&mut grads, *a, |d| d.iter_mut().for_each(|d| *d += g[0]));
                }
                Op::Dot(a, b) => {
                    let (ad, bd) = (self.data(*a), self.data(*b));
                    ensure(&mut grads, *a);
                    acc(&mut grads, *a, |d| {
                        d.iter_mut().zip(bd).for_each(|(d, x)| *d += g[0] * x)
                    });
                    ensure(&mut grads, *b);
                    acc(&mut grads, *b, |d| {
                        d.iter_mut().zip(ad).for_each(|(d, x)| *d += g[0] * x)
                    });
                }
                Op::Pick(a, i) => {
                    ensure(&mut grads, *a);
                    acc(&mut grads, *a, |d| d[*i] += g[0]);
                }
                Op::Tile(a, reps) => {
                    let n = self.value(*a).len();
                    ensure(&mut grads, *a);
                    acc(&mut grads, *a, |d| {
                        for r in 0..*reps {
                            add_into(d, &g[r * n..(r + 1) * n]);
                        }
                    });
                }
                Op::RepeatEach(a, times) => {
                    ensure(&mut grads, *a);
                    acc(&mut grads, *a, |d| {
                        for (j, dj) in d.iter_mut().enumerate() {
                            *dj += g[j * times..(j + 1) * times].iter().sum::<f64>();
                        }
                    });
                }
            }
        }
        out
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
