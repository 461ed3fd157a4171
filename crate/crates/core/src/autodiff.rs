//! Define-by-run reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every operation of one forward pass in creation
//! order, so operands always precede their results. [`Tape::backward`]
//! walks the records once in reverse, and [`Gradients::accumulate_into`]
//! adds parameter gradients into a [`ParamStore`]. A fresh tape is built
//! for every forward pass; dropping it discards the graph.
//!
//! ```
//! use spgnn::autodiff::Tape;
//! use spgnn::tensor::Tensor;
//!
//! let tape = Tape::new();
//! let x = tape.variable(Tensor::from_rows(&[[1.0, 2.0]]));
//! let loss = x.activation(spgnn::autodiff::Activation::Tanh).sum_all();
//! let grads = tape.backward(loss).unwrap();
//! let g = grads.get(x).unwrap();
//! assert!((g.get(0, 0) - (1.0 - 1f64.tanh().powi(2))).abs() < 1e-12);
//! ```

use std::cell::RefCell;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::tensor::{self, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
    Sigmoid,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "identity" => Some(Activation::Identity),
            "tanh" => Some(Activation::Tanh),
            "relu" => Some(Activation::Relu),
            "sigmoid" => Some(Activation::Sigmoid),
            _ => None,
        }
    }

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

/// Row-set reduction used by readouts and neighbourhood pooling.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduce {
    Sum,
    Mean,
    Max,
}

impl Reduce {
    pub fn name(self) -> &'static str {
        match self {
            Reduce::Sum => "sum",
            Reduce::Mean => "mean",
            Reduce::Max => "max",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sum" => Some(Reduce::Sum),
            "mean" => Some(Reduce::Mean),
            "max" => Some(Reduce::Max),
            _ => None,
        }
    }
}

const NO_ROW: usize = usize::MAX;

#[derive(Debug)]
enum Op {
    Leaf {
        param: Option<ParamId>,
    },
    MatMul(usize, usize),
    Add(usize, usize),
    AddRowBias(usize, usize),
    MulScalar(usize, usize),
    Scale(usize, f64),
    MulConst(usize, Arc<Tensor>),
    ConcatCols(usize, usize),
    Activation(usize, Activation),
    ReduceRows {
        input: usize,
        kind: Reduce,
        argmax: Vec<usize>,
    },
    NeighborPool {
        input: usize,
        adj: Arc<Vec<Vec<usize>>>,
        kind: Reduce,
        argmax: Vec<usize>,
    },
    NormAdj {
        input: usize,
        adj: Arc<Vec<Vec<usize>>>,
        inv_sqrt_deg: Vec<f64>,
    },
    GatherRows(usize, Vec<usize>),
    PadRows(usize),
    Reshape(usize),
    Conv1d {
        input: usize,
        filters: usize,
        bias: usize,
        kernel: usize,
        stride: usize,
    },
    MaxPool1d {
        input: usize,
        argmax: Vec<usize>,
    },
    Dropout(usize, Vec<f64>),
    SoftmaxXent {
        input: usize,
        probs: Vec<f64>,
        label: usize,
    },
    SumAll(usize),
}

struct Node {
    value: Arc<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Operation record for one forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        self.push_shared(Arc::new(value), op, requires_grad)
    }

    fn push_shared(&self, value: Arc<Tensor>, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn value(&self, id: usize) -> Arc<Tensor> {
        Arc::clone(&self.nodes.borrow()[id].value)
    }

    fn requires_grad(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// A constant input. Never receives gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf { param: None }, false)
    }

    /// A free input that receives gradient but is not a stored parameter.
    pub fn variable(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf { param: None }, true)
    }

    /// Binds a stored parameter into this pass.
    pub fn param(&self, store: &ParamStore, id: ParamId) -> Var<'_> {
        self.push_shared(
            store.get(id).shared_value(),
            Op::Leaf { param: Some(id) },
            true,
        )
    }

    /// Propagates gradients from a scalar loss back to every leaf.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let shape = nodes[loss.id].value.shape();
        if shape != (1, 1) {
            return Err(Error::Contract(format!(
                "backward requires a 1x1 loss, got {shape:?}"
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[loss.id] = Some(Tensor::scalar(1.0));
        let mut params = Vec::new();

        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if let Op::Leaf { param: Some(p) } = node.op {
                params.push((id, p));
            }
            let Some(g) = grads[id].take() else { continue };
            if node.requires_grad {
                backprop(&nodes, node, &g, &mut grads);
            }
            grads[id] = Some(g);
        }
        params.reverse();
        Ok(Gradients { grads, params })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], nodes: &[Node], id: usize, contribution: Tensor) {
    if !nodes[id].requires_grad {
        return;
    }
    match &mut grads[id] {
        Some(existing) => existing.add_assign(&contribution),
        slot @ None => *slot = Some(contribution),
    }
}

fn backprop(nodes: &[Node], node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
    let val = |i: usize| -> &Tensor { &nodes[i].value };
    let needs = |i: usize| nodes[i].requires_grad;
    match &node.op {
        Op::Leaf { .. } => {}
        Op::MatMul(a, b) => {
            if needs(*a) {
                accumulate(grads, nodes, *a, tensor::matmul_nt(g, val(*b)));
            }
            if needs(*b) {
                accumulate(grads, nodes, *b, tensor::matmul_tn(val(*a), g));
            }
        }
        Op::Add(a, b) => {
            accumulate(grads, nodes, *a, g.clone());
            accumulate(grads, nodes, *b, g.clone());
        }
        Op::AddRowBias(x, b) => {
            accumulate(grads, nodes, *x, g.clone());
            if needs(*b) {
                let mut gb = Tensor::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (acc, v) in gb.data_mut().iter_mut().zip(g.row(r)) {
                        *acc += v;
                    }
                }
                accumulate(grads, nodes, *b, gb);
            }
        }
        Op::MulScalar(x, s) => {
            let sv = val(*s).data()[0];
            if needs(*x) {
                let mut gx = g.clone();
                gx.scale_in_place(sv);
                accumulate(grads, nodes, *x, gx);
            }
            if needs(*s) {
                let dot: f64 = g
                    .data()
                    .iter()
                    .zip(val(*x).data())
                    .map(|(a, b)| a * b)
                    .sum();
                accumulate(grads, nodes, *s, Tensor::scalar(dot));
            }
        }
        Op::Scale(x, c) => {
            let mut gx = g.clone();
            gx.scale_in_place(*c);
            accumulate(grads, nodes, *x, gx);
        }
        Op::MulConst(x, coeff) => {
            let mut gx = g.clone();
            for (v, c) in gx.data_mut().iter_mut().zip(coeff.data()) {
                *v *= c;
            }
            accumulate(grads, nodes, *x, gx);
        }
        Op::ConcatCols(a, b) => {
            let p = val(*a).cols();
            let (ga, gb) = g.split_cols(p).expect("concat split");
            accumulate(grads, nodes, *a, ga);
            accumulate(grads, nodes, *b, gb);
        }
        Op::Activation(x, kind) => {
            let mut gx = g.clone();
            for (v, y) in gx.data_mut().iter_mut().zip(node.value.data()) {
                *v *= kind.derivative_from_output(*y);
            }
            accumulate(grads, nodes, *x, gx);
        }
        Op::ReduceRows {
            input,
            kind,
            argmax,
        } => {
            let (m, d) = val(*input).shape();
            let mut gx = Tensor::zeros(m, d);
            match kind {
                Reduce::Sum | Reduce::Mean => {
                    let s = if *kind == Reduce::Mean && m > 0 {
                        1.0 / m as f64
                    } else {
                        1.0
                    };
                    for r in 0..m {
                        for (o, v) in gx.row_mut(r).iter_mut().zip(g.data()) {
                            *o = v * s;
                        }
                    }
                }
                Reduce::Max => {
                    for (c, &r) in argmax.iter().enumerate() {
                        if r != NO_ROW {
                            gx.set(r, c, g.data()[c]);
                        }
                    }
                }
            }
            accumulate(grads, nodes, *input, gx);
        }
        Op::NeighborPool {
            input,
            adj,
            kind,
            argmax,
        } => {
            let (n, d) = val(*input).shape();
            let mut gx = Tensor::zeros(n, d);
            match kind {
                Reduce::Sum | Reduce::Mean => {
                    for (i, nbrs) in adj.iter().enumerate() {
                        if nbrs.is_empty() {
                            continue;
                        }
                        let s = if *kind == Reduce::Mean {
                            1.0 / nbrs.len() as f64
                        } else {
                            1.0
                        };
                        let gi = g.row(i);
                        for &j in nbrs {
                            for (o, v) in gx.row_mut(j).iter_mut().zip(gi) {
                                *o += v * s;
                            }
                        }
                    }
                }
                Reduce::Max => {
                    for i in 0..n {
                        for c in 0..d {
                            let j = argmax[i * d + c];
                            if j != NO_ROW {
                                gx.data_mut()[j * d + c] += g.get(i, c);
                            }
                        }
                    }
                }
            }
            accumulate(grads, nodes, *input, gx);
        }
        Op::NormAdj {
            input,
            adj,
            inv_sqrt_deg,
        } => {
            // The propagation matrix is symmetric, so backward reuses it.
            let gx = norm_adj_apply(g, adj, inv_sqrt_deg);
            accumulate(grads, nodes, *input, gx);
        }
        Op::GatherRows(x, idx) => {
            let (m, d) = val(*x).shape();
            let mut gx = Tensor::zeros(m, d);
            for (out_row, &src) in idx.iter().enumerate() {
                for (o, v) in gx.row_mut(src).iter_mut().zip(g.row(out_row)) {
                    *o += v;
                }
            }
            accumulate(grads, nodes, *x, gx);
        }
        Op::PadRows(x) => {
            let (m, d) = val(*x).shape();
            let gx = Tensor::new(m, d, g.data()[..m * d].to_vec()).expect("pad grad");
            accumulate(grads, nodes, *x, gx);
        }
        Op::Reshape(x) => {
            let (r, c) = val(*x).shape();
            accumulate(grads, nodes, *x, g.reshape(r, c).expect("reshape grad"));
        }
        Op::Conv1d {
            input,
            filters,
            bias,
            kernel,
            stride,
        } => {
            let x = val(*input);
            let f = val(*filters);
            let (c_in, _) = x.shape();
            let (c_out, l_out) = g.shape();
            let (kernel, stride) = (*kernel, *stride);
            if needs(*bias) {
                let gb: Vec<f64> = (0..c_out).map(|o| g.row(o).iter().sum()).collect();
                accumulate(grads, nodes, *bias, Tensor::row_vector(gb));
            }
            if needs(*filters) {
                let mut gf = Tensor::zeros(c_out, c_in * kernel);
                for o in 0..c_out {
                    let go = g.row(o);
                    let gfo = gf.row_mut(o);
                    for c in 0..c_in {
                        let xc = x.row(c);
                        let gfc = &mut gfo[c * kernel..(c + 1) * kernel];
                        for (t, &gv) in go.iter().enumerate() {
                            if gv == 0.0 {
                                continue;
                            }
                            let win = &xc[t * stride..t * stride + kernel];
                            for (a, xv) in gfc.iter_mut().zip(win) {
                                *a += gv * xv;
                            }
                        }
                    }
                }
                accumulate(grads, nodes, *filters, gf);
            }
            if needs(*input) {
                let mut gx = Tensor::zeros(x.rows(), x.cols());
                for o in 0..c_out {
                    let go = g.row(o);
                    let fo = f.row(o);
                    for c in 0..c_in {
                        let fc = &fo[c * kernel..(c + 1) * kernel];
                        let gxc = gx.row_mut(c);
                        for (t, &gv) in go.iter().enumerate().take(l_out) {
                            if gv == 0.0 {
                                continue;
                            }
                            let win = &mut gxc[t * stride..t * stride + kernel];
                            for (a, fv) in win.iter_mut().zip(fc) {
                                *a += gv * fv;
                            }
                        }
                    }
                }
                accumulate(grads, nodes, *input, gx);
            }
        }
        Op::MaxPool1d { input, argmax } => {
            let (c, l) = val(*input).shape();
            let mut gx = Tensor::zeros(c, l);
            let l_out = g.cols();
            for ch in 0..c {
                for t in 0..l_out {
                    let src = argmax[ch * l_out + t];
                    gx.data_mut()[ch * l + src] += g.get(ch, t);
                }
            }
            accumulate(grads, nodes, *input, gx);
        }
        Op::Dropout(x, mask) => {
            let mut gx = g.clone();
            for (v, m) in gx.data_mut().iter_mut().zip(mask) {
                *v *= m;
            }
            accumulate(grads, nodes, *x, gx);
        }
        Op::SoftmaxXent {
            input,
            probs,
            label,
        } => {
            let scale = g.data()[0];
            let mut gx: Vec<f64> = probs.iter().map(|p| p * scale).collect();
            gx[*label] -= scale;
            accumulate(grads, nodes, *input, Tensor::row_vector(gx));
        }
        Op::SumAll(x) => {
            let (r, c) = val(*x).shape();
            accumulate(grads, nodes, *x, Tensor::filled(r, c, g.data()[0]));
        }
    }
}

fn norm_adj_apply(x: &Tensor, adj: &[Vec<usize>], inv_sqrt_deg: &[f64]) -> Tensor {
    let (n, d) = x.shape();
    let mut out = Tensor::zeros(n, d);
    for i in 0..n {
        let si = inv_sqrt_deg[i];
        // Ñ(i) = N(i) ∪ {i}, visited in ascending index order.
        let mut self_done = false;
        let visit = |j: usize, out: &mut Tensor| {
            let w = si * inv_sqrt_deg[j];
            let xj = x.row(j);
            for (o, v) in out.row_mut(i).iter_mut().zip(xj) {
                *o += w * v;
            }
        };
        for &j in &adj[i] {
            if !self_done && j > i {
                visit(i, &mut out);
                self_done = true;
            }
            visit(j, &mut out);
        }
        if !self_done {
            visit(i, &mut out);
        }
    }
    out
}

impl<'t> Var<'t> {
    pub fn id(self) -> usize {
        self.id
    }

    pub fn value(self) -> Arc<Tensor> {
        self.tape.value(self.id)
    }

    pub fn shape(self) -> (usize, usize) {
        self.tape.nodes.borrow()[self.id].value.shape()
    }

    pub fn requires_grad(self) -> bool {
        self.tape.requires_grad(self.id)
    }

    fn rg(self, other: Var<'_>) -> bool {
        self.requires_grad() || other.requires_grad()
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        if a.cols() != b.rows() {
            return Err(Error::Dimension {
                op: "matmul",
                lhs: a.shape(),
                rhs: b.shape(),
            });
        }
        let out = tensor::matmul(&a, &b);
        Ok(self
            .tape
            .push(out, Op::MatMul(self.id, other.id), self.rg(other)))
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        if a.shape() != b.shape() {
            return Err(Error::Dimension {
                op: "add",
                lhs: a.shape(),
                rhs: b.shape(),
            });
        }
        let mut out = (*a).clone();
        out.add_assign(&b);
        Ok(self
            .tape
            .push(out, Op::Add(self.id, other.id), self.rg(other)))
    }

    /// Adds a `1×d` row to every row of an `m×d` matrix.
    pub fn add_row_bias(self, bias: Var<'t>) -> Result<Var<'t>> {
        let (x, b) = (self.value(), bias.value());
        if b.rows() != 1 || b.cols() != x.cols() {
            return Err(Error::Dimension {
                op: "add_row_bias",
                lhs: x.shape(),
                rhs: b.shape(),
            });
        }
        let mut out = (*x).clone();
        for r in 0..out.rows() {
            for (o, v) in out.row_mut(r).iter_mut().zip(b.data()) {
                *o += v;
            }
        }
        Ok(self
            .tape
            .push(out, Op::AddRowBias(self.id, bias.id), self.rg(bias)))
    }

    /// Multiplies every entry by a differentiable `1×1` scalar.
    pub fn mul_scalar(self, s: Var<'t>) -> Result<Var<'t>> {
        let sv = s.value();
        if sv.shape() != (1, 1) {
            return Err(Error::Dimension {
                op: "mul_scalar",
                lhs: self.shape(),
                rhs: sv.shape(),
            });
        }
        let mut out = (*self.value()).clone();
        out.scale_in_place(sv.data()[0]);
        Ok(self
            .tape
            .push(out, Op::MulScalar(self.id, s.id), self.rg(s)))
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        let mut out = (*self.value()).clone();
        out.scale_in_place(c);
        self.tape
            .push(out, Op::Scale(self.id, c), self.requires_grad())
    }

    /// Elementwise product with a constant tensor of the same shape.
    pub fn mul_const(self, coeff: Tensor) -> Result<Var<'t>> {
        let x = self.value();
        if x.shape() != coeff.shape() {
            return Err(Error::Dimension {
                op: "mul_const",
                lhs: x.shape(),
                rhs: coeff.shape(),
            });
        }
        let mut out = (*x).clone();
        for (o, c) in out.data_mut().iter_mut().zip(coeff.data()) {
            *o *= c;
        }
        Ok(self.tape.push(
            out,
            Op::MulConst(self.id, Arc::new(coeff)),
            self.requires_grad(),
        ))
    }

    /// Columns of `self` followed by columns of `other`.
    pub fn concat_cols(self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        if a.rows() != b.rows() {
            return Err(Error::Dimension {
                op: "concat_cols",
                lhs: a.shape(),
                rhs: b.shape(),
            });
        }
        let (m, p, q) = (a.rows(), a.cols(), b.cols());
        let mut out = Tensor::zeros(m, p + q);
        for r in 0..m {
            let row = out.row_mut(r);
            row[..p].copy_from_slice(a.row(r));
            row[p..].copy_from_slice(b.row(r));
        }
        Ok(self
            .tape
            .push(out, Op::ConcatCols(self.id, other.id), self.rg(other)))
    }

    pub fn activation(self, kind: Activation) -> Var<'t> {
        let mut out = (*self.value()).clone();
        for v in out.data_mut() {
            *v = kind.apply(*v);
        }
        self.tape
            .push(out, Op::Activation(self.id, kind), self.requires_grad())
    }

    /// Column-wise reduction over rows into a `1×d` row. An empty input
    /// reduces to the zero row for every kind; max ties go to the first row.
    pub fn reduce_rows(self, kind: Reduce) -> Var<'t> {
        let x = self.value();
        let (m, d) = x.shape();
        let mut out = vec![0.0; d];
        let mut argmax = Vec::new();
        match kind {
            Reduce::Sum | Reduce::Mean => {
                for r in 0..m {
                    for (o, v) in out.iter_mut().zip(x.row(r)) {
                        *o += v;
                    }
                }
                if kind == Reduce::Mean && m > 0 {
                    out.iter_mut().for_each(|v| *v /= m as f64);
                }
            }
            Reduce::Max => {
                argmax = vec![NO_ROW; d];
                for c in 0..d {
                    for r in 0..m {
                        let v = x.get(r, c);
                        if argmax[c] == NO_ROW || v > out[c] {
                            out[c] = v;
                            argmax[c] = r;
                        }
                    }
                }
            }
        }
        self.tape.push(
            Tensor::row_vector(out),
            Op::ReduceRows {
                input: self.id,
                kind,
                argmax,
            },
            self.requires_grad(),
        )
    }

    /// Row `i` of the result pools rows `adj[i]` of `self`. Neighbour lists
    /// are visited in their stored order; empty lists pool to the zero row.
    pub fn neighbor_pool(self, adj: Arc<Vec<Vec<usize>>>, kind: Reduce) -> Result<Var<'t>> {
        let x = self.value();
        let (n, d) = x.shape();
        if adj.len() != n {
            return Err(Error::Dimension {
                op: "neighbor_pool",
                lhs: (n, d),
                rhs: (adj.len(), 0),
            });
        }
        let mut out = Tensor::zeros(n, d);
        let mut argmax = Vec::new();
        if kind == Reduce::Max {
            argmax = vec![NO_ROW; n * d];
        }
        for (i, nbrs) in adj.iter().enumerate() {
            if let Some(&bad) = nbrs.iter().find(|&&j| j >= n) {
                return Err(Error::Index {
                    op: "neighbor_pool",
                    index: bad,
                    len: n,
                });
            }
            let row = out.row_mut(i);
            match kind {
                Reduce::Sum | Reduce::Mean => {
                    for &j in nbrs {
                        for (o, v) in row.iter_mut().zip(x.row(j)) {
                            *o += v;
                        }
                    }
                    if kind == Reduce::Mean && !nbrs.is_empty() {
                        let s = nbrs.len() as f64;
                        row.iter_mut().for_each(|v| *v /= s);
                    }
                }
                Reduce::Max => {
                    for &j in nbrs {
                        for (c, (o, &v)) in row.iter_mut().zip(x.row(j)).enumerate() {
                            let slot = &mut argmax[i * d + c];
                            if *slot == NO_ROW || v > *o {
                                *o = v;
                                *slot = j;
                            }
                        }
                    }
                }
            }
        }
        Ok(self.tape.push(
            out,
            Op::NeighborPool {
                input: self.id,
                adj,
                kind,
                argmax,
            },
            self.requires_grad(),
        ))
    }

    /// `D̃^{-1/2} (A + I) D̃^{-1/2} · self` using sparse neighbour iteration.
    pub fn norm_adj(self, adj: Arc<Vec<Vec<usize>>>) -> Result<Var<'t>> {
        let x = self.value();
        if adj.len() != x.rows() {
            return Err(Error::Dimension {
                op: "norm_adj",
                lhs: x.shape(),
                rhs: (adj.len(), 0),
            });
        }
        let inv_sqrt_deg: Vec<f64> = adj
            .iter()
            .map(|nbrs| 1.0 / ((nbrs.len() + 1) as f64).sqrt())
            .collect();
        let out = norm_adj_apply(&x, &adj, &inv_sqrt_deg);
        Ok(self.tape.push(
            out,
            Op::NormAdj {
                input: self.id,
                adj,
                inv_sqrt_deg,
            },
            self.requires_grad(),
        ))
    }

    /// Row `i` of the result is row `idx[i]` of `self`.
    pub fn gather_rows(self, idx: &[usize]) -> Result<Var<'t>> {
        let x = self.value();
        let (m, d) = x.shape();
        let mut out = Tensor::zeros(idx.len(), d);
        for (r, &src) in idx.iter().enumerate() {
            if src >= m {
                return Err(Error::Index {
                    op: "gather_rows",
                    index: src,
                    len: m,
                });
            }
            out.row_mut(r).copy_from_slice(x.row(src));
        }
        Ok(self.tape.push(
            out,
            Op::GatherRows(self.id, idx.to_vec()),
            self.requires_grad(),
        ))
    }

    /// Appends zero rows up to `target` rows.
    pub fn pad_rows(self, target: usize) -> Result<Var<'t>> {
        let x = self.value();
        let (m, d) = x.shape();
        if m > target {
            return Err(Error::Contract(format!(
                "pad_rows: {m} rows exceed target {target}; truncate first"
            )));
        }
        let mut data = x.data().to_vec();
        data.resize(target * d, 0.0);
        let out = Tensor::new(target, d, data)?;
        Ok(self
            .tape
            .push(out, Op::PadRows(self.id), self.requires_grad()))
    }

    pub fn reshape(self, rows: usize, cols: usize) -> Result<Var<'t>> {
        let out = self.value().reshape(rows, cols)?;
        Ok(self
            .tape
            .push(out, Op::Reshape(self.id), self.requires_grad()))
    }

    /// Cross-correlation of a `C_in × L` signal with `C_out` filters laid out
    /// as `C_out × (C_in · kernel)` rows, plus a `1 × C_out` bias.
    pub fn conv1d(
        self,
        filters: Var<'t>,
        bias: Var<'t>,
        kernel: usize,
        stride: usize,
    ) -> Result<Var<'t>> {
        let x = self.value();
        let f = filters.value();
        let b = bias.value();
        let (c_in, len) = x.shape();
        if kernel == 0 || stride == 0 {
            return Err(Error::Config(
                "conv1d: kernel and stride must be positive".into(),
            ));
        }
        if len < kernel {
            return Err(Error::Window {
                op: "conv1d",
                len,
                kernel,
            });
        }
        let c_out = f.rows();
        if f.cols() != c_in * kernel {
            return Err(Error::Dimension {
                op: "conv1d",
                lhs: x.shape(),
                rhs: f.shape(),
            });
        }
        if b.shape() != (1, c_out) {
            return Err(Error::Dimension {
                op: "conv1d bias",
                lhs: f.shape(),
                rhs: b.shape(),
            });
        }
        let l_out = (len - kernel) / stride + 1;
        let mut out = Tensor::zeros(c_out, l_out);
        for o in 0..c_out {
            let fo = f.row(o);
            let bo = b.data()[o];
            let orow = out.row_mut(o);
            orow.iter_mut().for_each(|v| *v = bo);
            for c in 0..c_in {
                let fc = &fo[c * kernel..(c + 1) * kernel];
                let xc = x.row(c);
                for (t, ov) in orow.iter_mut().enumerate() {
                    let win = &xc[t * stride..t * stride + kernel];
                    *ov += win.iter().zip(fc).map(|(a, b)| a * b).sum::<f64>();
                }
            }
        }
        let rg = self.requires_grad() || filters.requires_grad() || bias.requires_grad();
        Ok(self.tape.push(
            out,
            Op::Conv1d {
                input: self.id,
                filters: filters.id,
                bias: bias.id,
                kernel,
                stride,
            },
            rg,
        ))
    }

    /// Per-channel window maxima; a trailing partial window is dropped.
    pub fn maxpool1d(self, kernel: usize, stride: usize) -> Result<Var<'t>> {
        let x = self.value();
        let (c, len) = x.shape();
        if kernel == 0 || stride == 0 {
            return Err(Error::Config(
                "maxpool1d: kernel and stride must be positive".into(),
            ));
        }
        if len < kernel {
            return Err(Error::Window {
                op: "maxpool1d",
                len,
                kernel,
            });
        }
        let l_out = (len - kernel) / stride + 1;
        let mut out = Tensor::zeros(c, l_out);
        let mut argmax = vec![0; c * l_out];
        for ch in 0..c {
            let xr = x.row(ch);
            for t in 0..l_out {
                let start = t * stride;
                let mut best = start;
                for p in start + 1..start + kernel {
                    if xr[p] > xr[best] {
                        best = p;
                    }
                }
                argmax[ch * l_out + t] = best;
                out.set(ch, t, xr[best]);
            }
        }
        Ok(self.tape.push(
            out,
            Op::MaxPool1d {
                input: self.id,
                argmax,
            },
            self.requires_grad(),
        ))
    }

    /// Inverted dropout: survivors are scaled by `1/(1-rate)` during
    /// training, evaluation is the identity.
    pub fn dropout<R: Rng + ?Sized>(
        self,
        rate: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var<'t>> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(self);
        }
        let x = self.value();
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..x.len())
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let mut out = (*x).clone();
        for (v, m) in out.data_mut().iter_mut().zip(&mask) {
            *v *= m;
        }
        Ok(self
            .tape
            .push(out, Op::Dropout(self.id, mask), self.requires_grad()))
    }

    /// `-log softmax(self)[label]` for a `1×C` logit row.
    pub fn softmax_cross_entropy(self, label: usize) -> Result<Var<'t>> {
        let x = self.value();
        if x.rows() != 1 {
            return Err(Error::Dimension {
                op: "softmax_cross_entropy",
                lhs: x.shape(),
                rhs: (1, x.cols()),
            });
        }
        if label >= x.cols() {
            return Err(Error::Index {
                op: "softmax_cross_entropy",
                index: label,
                len: x.cols(),
            });
        }
        let probs = softmax(x.data());
        let max = x.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + x.data().iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let loss = lse - x.data()[label];
        Ok(self.tape.push(
            Tensor::scalar(loss),
            Op::SoftmaxXent {
                input: self.id,
                probs,
                label,
            },
            self.requires_grad(),
        ))
    }

    pub fn sum_all(self) -> Var<'t> {
        let s = self.value().sum();
        self.tape
            .push(Tensor::scalar(s), Op::SumAll(self.id), self.requires_grad())
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Result of [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(usize, ParamId)>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`, if any flowed to it.
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    /// Adds every bound parameter's gradient into the store's buffers.
    pub fn accumulate_into(&self, store: &mut ParamStore) {
        for &(node, pid) in &self.params {
            if let Some(g) = &self.grads[node] {
                store.get_mut(pid).grad_mut().add_assign(g);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(rows)
    }

    #[test]
    fn matmul_identity_and_annihilator() {
        let tape = Tape::new();
        let i2 = tape.constant(Tensor::identity(2));
        let m = tape.constant(t(&[&[1.0, 2.0], &[3.0, 4.0]]));
        assert_eq!(
            *i2.matmul(m).unwrap().value(),
            t(&[&[1.0, 2.0], &[3.0, 4.0]])
        );
        let a = tape.constant(t(&[&[1.0, 0.0], &[0.0, 0.0]]));
        let b = tape.constant(t(&[&[0.0], &[5.0]]));
        assert_eq!(*a.matmul(b).unwrap().value(), t(&[&[0.0], &[0.0]]));
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let tape = Tape::new();
        let a = tape.constant(Tensor::zeros(2, 3));
        let b = tape.constant(Tensor::zeros(2, 3));
        let err = a.matmul(b).unwrap_err().to_string();
        assert!(err.contains("(2, 3)"), "{err}");
    }

    #[test]
    fn concat_examples() {
        let tape = Tape::new();
        let a = tape.constant(t(&[&[1.0], &[2.0]]));
        let b = tape.constant(t(&[&[3.0], &[4.0]]));
        assert_eq!(
            *a.concat_cols(b).unwrap().value(),
            t(&[&[1.0, 3.0], &[2.0, 4.0]])
        );
        let empty = tape.constant(Tensor::zeros(2, 0));
        assert_eq!(*a.concat_cols(empty).unwrap().value(), *a.value());
        let c = tape.constant(Tensor::zeros(3, 1));
        assert!(a.concat_cols(c).is_err());
    }

    #[test]
    fn activation_points() {
        assert_eq!(Activation::Tanh.apply(0.0), 0.0);
        assert_eq!(Activation::Relu.apply(-1.0), 0.0);
        assert_eq!(Activation::Sigmoid.apply(0.0), 0.5);
    }

    #[test]
    fn relu_on_negative_tensor_gives_zero_value_and_gradient() {
        let tape = Tape::new();
        let x = tape.variable(t(&[&[-1.0, -2.0], &[-0.5, -3.0]]));
        let y = x.activation(Activation::Relu);
        assert_eq!(y.value().max_abs(), 0.0);
        let g = tape.backward(y.sum_all()).unwrap();
        assert_eq!(g.get(x).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn reduce_rows_examples() {
        let tape = Tape::new();
        let x = tape.constant(t(&[&[1.0, 2.0], &[3.0, 4.0]]));
        assert_eq!(*x.reduce_rows(Reduce::Sum).value(), t(&[&[4.0, 6.0]]));
        assert_eq!(*x.reduce_rows(Reduce::Mean).value(), t(&[&[2.0, 3.0]]));
        assert_eq!(*x.reduce_rows(Reduce::Max).value(), t(&[&[3.0, 4.0]]));
        let e = tape.constant(Tensor::zeros(0, 3));
        for kind in [Reduce::Sum, Reduce::Mean, Reduce::Max] {
            assert_eq!(*e.reduce_rows(kind).value(), Tensor::zeros(1, 3));
        }
    }

    #[test]
    fn max_ties_route_to_first_row() {
        let tape = Tape::new();
        let x = tape.variable(t(&[&[2.0], &[2.0]]));
        let g = tape.backward(x.reduce_rows(Reduce::Max).sum_all()).unwrap();
        assert_eq!(*g.get(x).unwrap(), t(&[&[1.0], &[0.0]]));
    }

    #[test]
    fn gather_and_pad_examples() {
        let tape = Tape::new();
        let x = tape.constant(t(&[&[0.0, 0.5], &[1.0, 1.5], &[2.0, 2.5]]));
        assert_eq!(
            *x.gather_rows(&[2, 0]).unwrap().value(),
            t(&[&[2.0, 2.5], &[0.0, 0.5]])
        );
        assert_eq!(x.gather_rows(&[]).unwrap().shape(), (0, 2));
        assert!(matches!(x.gather_rows(&[3]), Err(Error::Index { .. })));

        let y = tape.constant(Tensor::filled(2, 3, 1.0));
        assert_eq!(*y.pad_rows(2).unwrap().value(), Tensor::filled(2, 3, 1.0));
        let z = tape.constant(t(&[&[5.0, 6.0]]));
        assert_eq!(
            *z.pad_rows(3).unwrap().value(),
            t(&[&[5.0, 6.0], &[0.0, 0.0], &[0.0, 0.0]])
        );
        assert!(matches!(x.pad_rows(2), Err(Error::Contract(_))));
    }

    #[test]
    fn pad_gradient_only_touches_source_rows() {
        let tape = Tape::new();
        let x = tape.variable(t(&[&[5.0, 6.0]]));
        let padded = x.pad_rows(3).unwrap();
        let g = tape.backward(padded.sum_all()).unwrap();
        assert_eq!(*g.get(x).unwrap(), t(&[&[1.0, 1.0]]));
    }

    #[test]
    fn conv1d_examples() {
        let tape = Tape::new();
        let x = tape.constant(t(&[&[1.0, 2.0, 3.0, 4.0]]));
        let f = tape.constant(t(&[&[1.0, 1.0]]));
        let b = tape.constant(Tensor::zeros(1, 1));
        assert_eq!(*x.conv1d(f, b, 2, 2).unwrap().value(), t(&[&[3.0, 7.0]]));

        let f4 = tape.constant(t(&[&[0.5, -1.0, 2.0, 1.0]]));
        let b4 = tape.constant(Tensor::scalar(0.25));
        let full = x.conv1d(f4, b4, 4, 4).unwrap();
        assert_eq!(*full.value(), Tensor::scalar(0.5 - 2.0 + 6.0 + 4.0 + 0.25));

        let short = tape.constant(t(&[&[1.0]]));
        assert!(matches!(
            short.conv1d(f, b, 2, 2),
            Err(Error::Window {
                len: 1,
                kernel: 2,
                ..
            })
        ));
    }

    #[test]
    fn maxpool_examples() {
        let tape = Tape::new();
        let x = tape.constant(t(&[&[1.0, 3.0, 2.0, 5.0]]));
        assert_eq!(*x.maxpool1d(2, 2).unwrap().value(), t(&[&[3.0, 5.0]]));
        let y = tape.constant(t(&[&[7.0]]));
        assert!(matches!(y.maxpool1d(2, 2), Err(Error::Window { .. })));
        let z = tape.constant(t(&[&[1.0, 2.0, 3.0]]));
        assert_eq!(*z.maxpool1d(2, 2).unwrap().value(), t(&[&[2.0]]));
    }

    #[test]
    fn dropout_identity_cases_and_bad_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tape = Tape::new();
        let x = tape.constant(t(&[&[1.0, 2.0, 3.0]]));
        for training in [true, false] {
            let y = x.dropout(0.0, training, &mut rng).unwrap();
            assert_eq!(*y.value(), *x.value());
        }
        let y = x.dropout(0.9, false, &mut rng).unwrap();
        assert_eq!(*y.value(), *x.value());
        assert!(matches!(
            x.dropout(1.0, true, &mut rng),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn dropout_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let tape = Tape::new();
        let x = tape.constant(Tensor::filled(100, 100, 2.0));
        let y = x.dropout(0.5, true, &mut rng).unwrap().value();
        let survivors = y.data().iter().filter(|v| **v != 0.0).count() as f64 / 1e4;
        assert!((survivors - 0.5).abs() < 0.03, "{survivors}");
        let mean = y.sum() / 1e4;
        assert!((mean - 2.0).abs() / 2.0 < 0.05, "{mean}");
    }

    #[test]
    fn cross_entropy_examples() {
        let tape = Tape::new();
        let l = tape.constant(t(&[&[0.0, 0.0]]));
        let v = l.softmax_cross_entropy(0).unwrap().value().data()[0];
        assert!((v - 2f64.ln()).abs() < 1e-12);
        let l = tape.constant(t(&[&[100.0, 0.0]]));
        let v = l.softmax_cross_entropy(0).unwrap().value().data()[0];
        assert!(v.is_finite() && v < 1e-40);
        assert!(matches!(
            l.softmax_cross_entropy(2),
            Err(Error::Index { .. })
        ));
    }

    #[test]
    fn backward_rules_for_simple_losses() {
        let mut store = ParamStore::new();
        let w = store.add_weight("w", Tensor::filled(2, 3, 0.7)).unwrap();
        let unused = store
            .add_weight("unused", Tensor::filled(1, 2, 0.1))
            .unwrap();
        let tape = Tape::new();
        let wv = tape.param(&store, w);
        let _uv = tape.param(&store, unused);
        let loss = wv.sum_all();
        tape.backward(loss).unwrap().accumulate_into(&mut store);
        assert_eq!(*store.grad(w), Tensor::filled(2, 3, 1.0));
        assert_eq!(store.grad(unused).max_abs(), 0.0);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let tape = Tape::new();
        let x = tape.variable(Tensor::zeros(2, 2));
        assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn constants_never_receive_gradient() {
        let tape = Tape::new();
        let c = tape.constant(t(&[&[1.0, 2.0]]));
        let x = tape.variable(t(&[&[3.0, 4.0]]));
        let g = tape.backward(c.add(x).unwrap().sum_all()).unwrap();
        assert!(g.get(c).is_none());
        assert!(g.get(x).is_some());
    }

    #[test]
    fn neighbor_pool_sums_in_adjacency_order() {
        let tape = Tape::new();
        let x = tape.constant(t(&[&[1.0], &[10.0], &[100.0]]));
        let adj = Arc::new(vec![vec![1], vec![0, 2], vec![1]]);
        let out = x.neighbor_pool(adj.clone(), Reduce::Sum).unwrap();
        assert_eq!(*out.value(), t(&[&[10.0], &[101.0], &[10.0]]));
        let out = x
            .neighbor_pool(Arc::new(vec![vec![], vec![], vec![]]), Reduce::Max)
            .unwrap();
        assert_eq!(out.value().max_abs(), 0.0);
    }
}
