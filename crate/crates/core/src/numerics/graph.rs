//! Tensor-level reverse-mode tape.
//!
//! A [`Graph`] records every forward op as a node holding its output
//! value. [`Graph::backward`] walks the nodes in reverse, and parameter
//! leaves push their gradient into a [`Grads`] buffer. Constants (inputs,
//! adjacency operators) never receive gradient.

use std::rc::Rc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Grads, Mat, ParamId, ParamStore, Real};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Weighted sum of relation operators applied to a row vector:
/// `out = Σ_r w_r · (z · M_r)`.
pub trait RelationOperator<F: Real> {
    fn dim(&self) -> usize;
    fn relation_count(&self) -> usize;
    /// `out += scale · (z · M_rel)`.
    fn apply(&self, rel: usize, z: &[F], scale: F, out: &mut [F]);
    /// `out = M_rel · g` (column-vector product, overwrites `out`).
    fn apply_transposed(&self, rel: usize, g: &[F], out: &mut [F]);
}

/// Sparse `(row, relation, col)` triples driving relation-aware attention.
#[derive(Debug, Clone, Default)]
pub struct EdgeList {
    pub n: usize,
    pub relations: usize,
    pub edges: Vec<(u32, u32, u32)>,
}

enum Op<'a, F: Real> {
    Const,
    Param(ParamId),
    GatherParam {
        p: ParamId,
        idx: Vec<usize>,
    },
    MatMul {
        a: Var,
        b: Var,
        ta: bool,
        tb: bool,
    },
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, F),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<F>,
        inv_std: Vec<F>,
    },
    Softmax {
        x: Var,
    },
    Dropout {
        x: Var,
        mask: Vec<F>,
    },
    ConcatCols(Vec<Var>),
    SliceCols {
        x: Var,
        start: usize,
    },
    SliceRows {
        x: Var,
        start: usize,
    },
    EdgeScores {
        src: Var,
        edges: Rc<EdgeList>,
    },
    EdgeCollect {
        alpha: Var,
        edges: Rc<EdgeList>,
    },
    Mix {
        z: Var,
        w: Var,
        op: &'a dyn RelationOperator<F>,
    },
    LogClampPick {
        z: Var,
        idx: usize,
        gamma: F,
    },
    SumAll(Vec<Var>),
    NormalizeL1 {
        x: Var,
        denom: F,
        floored: bool,
    },
}

struct Node<'a, F: Real> {
    value: Option<Mat<F>>,
    op: Op<'a, F>,
}

/// Rows whose softmax is restricted to a subset of columns.
#[derive(Debug, Clone)]
pub struct SoftmaxMask {
    /// Columns that may receive weight.
    pub valid_cols: Option<Vec<bool>>,
    /// Row `i` only sees columns `≤ i`.
    pub causal: bool,
}

impl SoftmaxMask {
    pub fn none() -> Self {
        Self {
            valid_cols: None,
            causal: false,
        }
    }
}

pub struct Graph<'a, F: Real> {
    params: &'a ParamStore<F>,
    nodes: Vec<Node<'a, F>>,
    rng: Option<ChaCha8Rng>,
    fault: Option<Error>,
}

const LN_EPS: f64 = 1e-5;

impl<'a, F: Real> Graph<'a, F> {
    /// Evaluation-mode graph: dropout is the identity.
    pub fn new(params: &'a ParamStore<F>) -> Self {
        Self {
            params,
            nodes: Vec::with_capacity(256),
            rng: None,
            fault: None,
        }
    }

    /// Training-mode graph; dropout masks are drawn from `rng`.
    pub fn training(params: &'a ParamStore<F>, rng: ChaCha8Rng) -> Self {
        let mut g = Self::new(params);
        g.rng = Some(rng);
        g
    }

    pub fn is_training(&self) -> bool {
        self.rng.is_some()
    }

    pub fn params(&self) -> &'a ParamStore<F> {
        self.params
    }

    pub fn value(&self, v: Var) -> &Mat<F> {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(m), _) => m,
            (None, Op::Param(p)) => self.params.get(*p),
            _ => unreachable!("node without value"),
        }
    }

    /// First fault (non-finite output or invalid softmax row) seen so far.
    pub fn status(&self) -> Result<()> {
        match &self.fault {
            None => Ok(()),
            Some(Error::NonFinite { op }) => Err(Error::NonFinite { op }),
            Some(Error::Shape { op, detail }) => Err(Error::Shape {
                op,
                detail: detail.clone(),
            }),
            Some(e) => Err(Error::Config(e.to_string())),
        }
    }

    fn push(&mut self, value: Mat<F>, op: Op<'a, F>, name: &'static str) -> Var {
        if self.fault.is_none() && !value.is_finite() {
            self.fault = Some(Error::NonFinite { op: name });
        }
        self.nodes.push(Node { value: Some(value), op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Mat<F>) -> Var {
        self.push(value, Op::Const, "constant")
    }

    pub fn param(&mut self, p: ParamId) -> Var {
        self.nodes.push(Node {
            value: None,
            op: Op::Param(p),
        });
        Var(self.nodes.len() - 1)
    }

    /// Rows `idx` of parameter `p`.
    pub fn gather(&mut self, p: ParamId, idx: Vec<usize>) -> Var {
        let table = self.params.get(p);
        let mut out = Mat::zeros(idx.len(), table.cols());
        for (r, &i) in idx.iter().enumerate() {
            out.row_mut(r).copy_from_slice(table.row(i));
        }
        self.push(out, Op::GatherParam { p, idx }, "gather")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        self.matmul_t(a, false, b, false)
    }

    /// `op(a)·op(b)` with optional transposes.
    pub fn matmul_t(&mut self, a: Var, ta: bool, b: Var, tb: bool) -> Var {
        let out = self.value(a).matmul(ta, self.value(b), tb);
        self.push(out, Op::MatMul { a, b, ta, tb }, "matmul")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        self.push(out, Op::Add(a, b), "add")
    }

    /// `x + 1·bias` for a `1 × cols` bias.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Var {
        let b = self.value(bias);
        assert_eq!(b.rows(), 1);
        let mut out = self.value(x).clone();
        assert_eq!(out.cols(), b.cols());
        let b = b.data().to_vec();
        for i in 0..out.rows() {
            for (o, &bv) in out.row_mut(i).iter_mut().zip(&b) {
                *o += bv;
            }
        }
        self.push(out, Op::AddRow(x, bias), "add_row")
    }

    pub fn scale(&mut self, x: Var, s: F) -> Var {
        let mut out = self.value(x).clone();
        out.scale(s);
        self.push(out, Op::Scale(x, s), "scale")
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let data = src.data().iter().map(|&v| gelu(v)).collect();
        let out = Mat::from_vec(src.rows(), src.cols(), data);
        self.push(out, Op::Gelu(x), "gelu")
    }

    /// Row-wise layer normalization with learned gain and bias (`1 × cols`).
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let src = self.value(x);
        let (n, d) = src.shape();
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let mut out = Mat::zeros(n, d);
        let mut xhat = vec![F::zero(); n * d];
        let mut inv_std = vec![F::zero(); n];
        for i in 0..n {
            let row = src.row(i);
            let mean = row.iter().map(|v| v.f64()).sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v.f64() - mean).powi(2)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            inv_std[i] = F::of(inv);
            for j in 0..d {
                let h = F::of((row[j].f64() - mean) * inv);
                xhat[i * d + j] = h;
                out.set(i, j, h * g[j] + b[j]);
            }
        }
        self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            "layer_norm",
        )
    }

    /// Row-wise softmax over the columns allowed by `mask`; disallowed
    /// entries are exactly zero. A row with no allowed column is a fault.
    pub fn softmax_rows(&mut self, x: Var, mask: &SoftmaxMask) -> Var {
        let src = self.value(x);
        let (n, m) = src.shape();
        let mut out = Mat::zeros(n, m);
        let mut empty_row = false;
        for i in 0..n {
            let row = src.row(i);
            let allowed = |j: usize| mask.valid_cols.as_ref().is_none_or(|v| v[j]) && (!mask.causal || j <= i);
            let mut max = f64::NEG_INFINITY;
            for (j, v) in row.iter().enumerate() {
                if allowed(j) {
                    max = max.max(v.f64());
                }
            }
            if max == f64::NEG_INFINITY {
                empty_row = true;
                continue;
            }
            // Exponentials in working precision, normalizer in f64.
            let fmax = F::of(max);
            let mut exps = vec![F::zero(); m];
            let mut total = 0.0f64;
            for (j, &v) in row.iter().enumerate() {
                if allowed(j) {
                    let e = (v - fmax).exp();
                    exps[j] = e;
                    total += e.f64();
                }
            }
            for (o, e) in out.row_mut(i).iter_mut().zip(&exps) {
                *o = F::of(e.f64() / total);
            }
        }
        if empty_row && self.fault.is_none() {
            self.fault = Some(Error::Shape {
                op: "softmax",
                detail: "row with every column masked".into(),
            });
        }
        self.push(out, Op::Softmax { x }, "softmax")
    }

    /// Inverted dropout. Identity in evaluation mode or when `p == 0`.
    pub fn dropout(&mut self, x: Var, p: f64) -> Var {
        if p <= 0.0 {
            return x;
        }
        let Some(rng) = self.rng.as_mut() else {
            return x;
        };
        let keep = F::of(1.0 / (1.0 - p));
        let (r, c) = match &self.nodes[x.0] {
            Node { value: Some(m), .. } => m.shape(),
            Node { op: Op::Param(p), .. } => self.params.get(*p).shape(),
            _ => unreachable!(),
        };
        let mask: Vec<F> = (0..r * c).map(|_| if rng.gen::<f64>() < p { F::zero() } else { keep }).collect();
        let mut out = self.value(x).clone();
        for (o, &k) in out.data_mut().iter_mut().zip(&mask) {
            *o *= k;
        }
        self.push(out, Op::Dropout { x, mask }, "dropout")
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Mat::zeros(rows, cols);
        let mut off = 0;
        for &p in parts {
            let m = self.value(p);
            assert_eq!(m.rows(), rows);
            for i in 0..rows {
                out.row_mut(i)[off..off + m.cols()].copy_from_slice(m.row(i));
            }
            off += m.cols();
        }
        self.push(out, Op::ConcatCols(parts.to_vec()), "concat")
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let src = self.value(x);
        let mut out = Mat::zeros(src.rows(), len);
        for i in 0..src.rows() {
            out.row_mut(i).copy_from_slice(&src.row(i)[start..start + len]);
        }
        self.push(out, Op::SliceCols { x, start }, "slice_cols")
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Var {
        let src = self.value(x);
        let c = src.cols();
        let out = Mat::from_vec(len, c, src.data()[start * c..(start + len) * c].to_vec());
        self.push(out, Op::SliceRows { x, start }, "slice_rows")
    }

    /// `out[i][j] = Σ_{(i,r,j) ∈ edges} src[i][r]` for `src: n × R`.
    pub fn edge_scores(&mut self, src: Var, edges: &Rc<EdgeList>) -> Var {
        let s = self.value(src);
        assert_eq!(s.shape(), (edges.n, edges.relations));
        let mut out = Mat::zeros(edges.n, edges.n);
        for &(i, r, j) in &edges.edges {
            let (i, r, j) = (i as usize, r as usize, j as usize);
            let v = out.get(i, j) + s.get(i, r);
            out.set(i, j, v);
        }
        self.push(
            out,
            Op::EdgeScores {
                src,
                edges: Rc::clone(edges),
            },
            "edge_scores",
        )
    }

    /// `out[i][r] = Σ_{(i,r,j) ∈ edges} alpha[i][j]` for `alpha: n × n`.
    pub fn edge_collect(&mut self, alpha: Var, edges: &Rc<EdgeList>) -> Var {
        let a = self.value(alpha);
        assert_eq!(a.shape(), (edges.n, edges.n));
        let mut out = Mat::zeros(edges.n, edges.relations);
        for &(i, r, j) in &edges.edges {
            let (i, r, j) = (i as usize, r as usize, j as usize);
            let v = out.get(i, r) + a.get(i, j);
            out.set(i, r, v);
        }
        self.push(
            out,
            Op::EdgeCollect {
                alpha,
                edges: Rc::clone(edges),
            },
            "edge_collect",
        )
    }

    /// `z' = Σ_r w[r]·(z·M_r)` for row vectors `z: 1 × E`, `w: 1 × R`.
    pub fn mix(&mut self, z: Var, w: Var, op: &'a dyn RelationOperator<F>) -> Var {
        let zv = self.value(z).data();
        let wv = self.value(w).data();
        assert_eq!(zv.len(), op.dim());
        assert_eq!(wv.len(), op.relation_count());
        let mut out = vec![F::zero(); op.dim()];
        for (r, &wr) in wv.iter().enumerate() {
            if wr != F::zero() {
                op.apply(r, zv, wr, &mut out);
            }
        }
        self.push(Mat::row_vector(out), Op::Mix { z, w, op }, "mix")
    }

    /// `log(max(z[idx], gamma))` as a `1 × 1` value.
    pub fn log_clamp_pick(&mut self, z: Var, idx: usize, gamma: F) -> Var {
        let v = self.value(z).data()[idx];
        let out = Mat::scalar(v.max(gamma).ln());
        self.push(out, Op::LogClampPick { z, idx, gamma }, "log_clamp")
    }

    /// Sum of all entries of all inputs, as a `1 × 1` value.
    pub fn sum_all(&mut self, xs: &[Var]) -> Var {
        let mut s = F::zero();
        for &x in xs {
            for &v in self.value(x).data() {
                s += v;
            }
        }
        self.push(Mat::scalar(s), Op::SumAll(xs.to_vec()), "sum")
    }

    /// `x / max(Σ x, floor)` over all entries.
    pub fn normalize_l1(&mut self, x: Var, floor: F) -> Var {
        let xv = self.value(x);
        let total: F = xv.data().iter().fold(F::zero(), |a, &b| a + b);
        let floored = total.partial_cmp(&floor) != Some(std::cmp::Ordering::Greater);
        let denom = if floored { floor } else { total };
        let out = Mat::from_vec(xv.rows(), xv.cols(), xv.data().iter().map(|&v| v / denom).collect());
        self.push(out, Op::NormalizeL1 { x, denom, floored }, "normalize")
    }

    /// Reverse sweep from scalar `loss`, accumulating parameter gradients.
    pub fn backward(&self, loss: Var, grads: &mut Grads<F>) {
        assert_eq!(self.value(loss).shape(), (1, 1), "backward needs a scalar");
        let mut adj: Vec<Option<Mat<F>>> = (0..=loss.0).map(|_| None).collect();
        adj[loss.0] = Some(Mat::scalar(F::one()));
        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            match &node.op {
                Op::Const => {}
                Op::Param(p) => grads.accumulate(*p, &g),
                Op::GatherParam { p, idx } => {
                    let shape = self.params.get(*p).shape();
                    let slot = grads.slot(*p, shape);
                    for (r, &row) in idx.iter().enumerate() {
                        for (s, &gv) in slot.row_mut(row).iter_mut().zip(g.row(r)) {
                            *s += gv;
                        }
                    }
                }
                Op::MatMul { a, b, ta, tb } => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if self.wants_grad(*a) {
                        let da = if !*ta {
                            g.matmul(false, bv, !*tb)
                        } else {
                            bv.matmul(*tb, &g, true)
                        };
                        acc(&mut adj, *a, da);
                    }
                    if self.wants_grad(*b) {
                        let db = if !*tb {
                            av.matmul(!*ta, &g, false)
                        } else {
                            g.matmul(true, av, *ta)
                        };
                        acc(&mut adj, *b, db);
                    }
                }
                Op::Add(a, b) => {
                    acc(&mut adj, *b, g.clone());
                    acc(&mut adj, *a, g);
                }
                Op::AddRow(x, bias) => {
                    let mut db = Mat::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (d, &v) in db.data_mut().iter_mut().zip(g.row(r)) {
                            *d += v;
                        }
                    }
                    acc(&mut adj, *bias, db);
                    acc(&mut adj, *x, g);
                }
                Op::Scale(x, s) => {
                    let mut g = g;
                    g.scale(*s);
                    acc(&mut adj, *x, g);
                }
                Op::Gelu(x) => {
                    let xv = self.value(*x);
                    let mut g = g;
                    for (gv, &v) in g.data_mut().iter_mut().zip(xv.data()) {
                        *gv *= gelu_grad(v);
                    }
                    acc(&mut adj, *x, g);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    inv_std,
                } => {
                    let (n, d) = g.shape();
                    let gv = self.value(*gain).data();
                    let mut dgain = Mat::zeros(1, d);
                    let mut dbias = Mat::zeros(1, d);
                    let mut dx = Mat::zeros(n, d);
                    let df = F::of(d as f64);
                    for i in 0..n {
                        let gr = g.row(i);
                        let xh = &xhat[i * d..(i + 1) * d];
                        let mut sum_dh = F::zero();
                        let mut sum_dh_xh = F::zero();
                        for j in 0..d {
                            let dh = gr[j] * gv[j];
                            sum_dh += dh;
                            sum_dh_xh += dh * xh[j];
                            dgain.data_mut()[j] += gr[j] * xh[j];
                            dbias.data_mut()[j] += gr[j];
                        }
                        let row = dx.row_mut(i);
                        for j in 0..d {
                            let dh = gr[j] * gv[j];
                            row[j] = inv_std[i] / df * (df * dh - sum_dh - xh[j] * sum_dh_xh);
                        }
                    }
                    acc(&mut adj, *gain, dgain);
                    acc(&mut adj, *bias, dbias);
                    acc(&mut adj, *x, dx);
                }
                Op::Softmax { x } => {
                    let y = self.value(Var(i));
                    let mut dx = Mat::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let yr = y.row(r);
                        let gr = g.row(r);
                        let dot: F = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                        for (o, (&yv, &gv)) in dx.row_mut(r).iter_mut().zip(yr.iter().zip(gr)) {
                            *o = yv * (gv - dot);
                        }
                    }
                    acc(&mut adj, *x, dx);
                }
                Op::Dropout { x, mask } => {
                    let mut g = g;
                    for (gv, &m) in g.data_mut().iter_mut().zip(mask) {
                        *gv *= m;
                    }
                    acc(&mut adj, *x, g);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let c = self.value(p).cols();
                        let mut dp = Mat::zeros(g.rows(), c);
                        for r in 0..g.rows() {
                            dp.row_mut(r).copy_from_slice(&g.row(r)[off..off + c]);
                        }
                        off += c;
                        acc(&mut adj, p, dp);
                    }
                }
                Op::SliceCols { x, start } => {
                    let (r, c) = self.value(*x).shape();
                    let mut dx = Mat::zeros(r, c);
                    for i in 0..r {
                        dx.row_mut(i)[*start..*start + g.cols()].copy_from_slice(g.row(i));
                    }
                    acc(&mut adj, *x, dx);
                }
                Op::SliceRows { x, start } => {
                    let (r, c) = self.value(*x).shape();
                    let mut dx = Mat::zeros(r, c);
                    dx.data_mut()[start * c..(start + g.rows()) * c].copy_from_slice(g.data());
                    acc(&mut adj, *x, dx);
                }
                Op::EdgeScores { src, edges } => {
                    let mut ds = Mat::zeros(edges.n, edges.relations);
                    for &(a, r, b) in &edges.edges {
                        let (a, r, b) = (a as usize, r as usize, b as usize);
                        let v = ds.get(a, r) + g.get(a, b);
                        ds.set(a, r, v);
                    }
                    acc(&mut adj, *src, ds);
                }
                Op::EdgeCollect { alpha, edges } => {
                    let mut da = Mat::zeros(edges.n, edges.n);
                    for &(a, r, b) in &edges.edges {
                        let (a, r, b) = (a as usize, r as usize, b as usize);
                        let v = da.get(a, b) + g.get(a, r);
                        da.set(a, b, v);
                    }
                    acc(&mut adj, *alpha, da);
                }
                Op::Mix { z, w, op } => {
                    let zv = self.value(*z).data();
                    let wv = self.value(*w).data();
                    let gz = g.data();
                    let mut dz = vec![F::zero(); zv.len()];
                    let mut dw = vec![F::zero(); wv.len()];
                    let mut u = vec![F::zero(); zv.len()];
                    for r in 0..wv.len() {
                        op.apply_transposed(r, gz, &mut u);
                        dw[r] = zv.iter().zip(&u).map(|(&a, &b)| a * b).sum();
                        if wv[r] != F::zero() {
                            for (d, &uv) in dz.iter_mut().zip(&u) {
                                *d += wv[r] * uv;
                            }
                        }
                    }
                    if self.wants_grad(*w) {
                        acc(&mut adj, *w, Mat::row_vector(dw));
                    }
                    if self.wants_grad(*z) {
                        acc(&mut adj, *z, Mat::row_vector(dz));
                    }
                }
                Op::LogClampPick { z, idx, gamma } => {
                    let zv = self.value(*z);
                    let v = zv.data()[*idx];
                    let mut dz = Mat::zeros(zv.rows(), zv.cols());
                    if v > *gamma {
                        dz.data_mut()[*idx] = g.data()[0] / v;
                    }
                    acc(&mut adj, *z, dz);
                }
                Op::NormalizeL1 { x, denom, floored } => {
                    let y = self.value(Var(i)).data();
                    let shift = if *floored {
                        F::zero()
                    } else {
                        g.data().iter().zip(y).fold(F::zero(), |a, (&gi, &yi)| a + gi * yi)
                    };
                    let dx = g.data().iter().map(|&gi| (gi - shift) / *denom).collect();
                    acc(&mut adj, *x, Mat::from_vec(g.rows(), g.cols(), dx));
                }
                Op::SumAll(xs) => {
                    let s = g.data()[0];
                    for &x in xs {
                        let (r, c) = self.value(x).shape();
                        acc(&mut adj, x, Mat::from_vec(r, c, vec![s; r * c]));
                    }
                }
            }
        }
    }

    /// Whether any parameter can be reached through `v`.
    fn wants_grad(&self, v: Var) -> bool {
        !matches!(self.nodes[v.0].op, Op::Const)
    }
}

fn acc<F: Real>(adj: &mut [Option<Mat<F>>], v: Var, g: Mat<F>) {
    match &mut adj[v.0] {
        Some(a) => a.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

#[inline]
fn gelu<F: Real>(x: F) -> F {
    let (c, a, half) = (F::of(GELU_C), F::of(GELU_A), F::of(0.5));
    let u = c * (x + a * x * x * x);
    half * x * (F::one() + u.tanh())
}

#[inline]
fn gelu_grad<F: Real>(x: F) -> F {
    let (c, a, half) = (F::of(GELU_C), F::of(GELU_A), F::of(0.5));
    let u = c * (x + a * x * x * x);
    let t = u.tanh();
    half * (F::one() + t) + half * x * (F::one() - t * t) * c * (F::one() + F::of(3.0) * a * x * x)
}
