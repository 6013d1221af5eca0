//! Op records, `Var` handles, parameter mounting, and the backward pass.

use std::cell::RefCell;
use std::collections::BTreeMap;

use super::{kernels, shape_mismatch, Tensor, TensorError};

#[derive(Debug)]
enum Op {
    Leaf,
    Constant,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    AddScalarVar(usize, usize),
    MatMul(usize, usize),
    AddBias(usize, usize),
    OuterAdd(usize, usize),
    ScaleRows(usize, usize),
    Relu(usize),
    Sigmoid(usize),
    Exp(usize),
    Log(usize),
    Clamp { input: usize, lo: f64, hi: f64 },
    Softmax { input: usize, axis: usize },
    LogSoftmax { input: usize, axis: usize },
    SumAll(usize),
    SumAxis { input: usize, axis: usize },
    MaxAxis { input: usize, axis: usize, argmax: Vec<usize> },
    Concat { inputs: Vec<usize>, axis: usize },
    Slice { input: usize, axis: usize, start: usize },
    Reshape(usize),
    Conv1d { seq: usize, filters: usize, width: usize },
    GatherRows { table: usize, indices: Vec<usize>, pad: Option<usize> },
}

struct Node {
    op: Op,
    value: Tensor,
    trainable: bool,
}

/// Records every op of one forward pass. A tape lives for a single
/// training or inference step and is dropped afterwards.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: RefCell::new(Vec::new()) }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Mount a tensor as a differentiable leaf.
    pub fn leaf(&self, value: Tensor, trainable: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { op: Op::Leaf, value, trainable });
        Var { tape: self, id: nodes.len() - 1 }
    }

    /// Mount a tensor that never receives gradients (inputs, masks, draws).
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { op: Op::Constant, value, trainable: false });
        Var { tape: self, id: nodes.len() - 1 }
    }

    fn value(&self, id: usize) -> Tensor {
        self.nodes.borrow()[id].value.clone()
    }

    fn push_checked(
        &self,
        name: &'static str,
        op: Op,
        value: Tensor,
    ) -> Result<Var<'_>, TensorError> {
        if !value.is_finite() {
            return Err(TensorError::NumericalError { op: name });
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { op, value, trainable: false });
        Ok(Var { tape: self, id: nodes.len() - 1 })
    }

    /// Concatenate along `axis`; shapes must agree on every other axis.
    pub fn concat(&self, parts: &[Var<'_>], axis: usize) -> Result<Var<'_>, TensorError> {
        if parts.is_empty() {
            return Err(shape_mismatch("concat", "no inputs".into()));
        }
        let values: Vec<Tensor> = parts.iter().map(|p| self.value(p.id)).collect();
        let rank = values[0].rank();
        if axis >= rank {
            return Err(shape_mismatch("concat", format!("axis {} out of rank {}", axis, rank)));
        }
        let mut out_shape = values[0].shape().to_vec();
        let mut axis_total = 0;
        for v in &values {
            if v.rank() != rank {
                return Err(shape_mismatch("concat", "rank mismatch".into()));
            }
            for d in 0..rank {
                if d != axis && v.shape()[d] != out_shape[d] {
                    return Err(shape_mismatch(
                        "concat",
                        format!("shapes {:?} vs {:?} differ off axis {}", out_shape, v.shape(), axis),
                    ));
                }
            }
            axis_total += v.shape()[axis];
        }
        out_shape[axis] = axis_total;

        let (outer, _, inner) = kernels::lanes(&out_shape, axis);
        let mut data = vec![0.0; out_shape.iter().product()];
        let mut offset = 0;
        for v in &values {
            let len = v.shape()[axis];
            let block = len * inner;
            for o in 0..outer {
                let src = &v.data()[o * block..(o + 1) * block];
                let dst_start = (o * axis_total + offset) * inner;
                data[dst_start..dst_start + block].copy_from_slice(src);
            }
            offset += len;
        }
        let value = Tensor::new(out_shape, data)?;
        self.push_checked(
            "concat",
            Op::Concat { inputs: parts.iter().map(|p| p.id).collect(), axis },
            value,
        )
    }

    /// Reverse sweep from `loss` (which must hold exactly one element),
    /// accumulating one gradient per reachable node. Trainable leaves the
    /// loss never touches come back as zero tensors.
    pub fn backward(&self, loss: Var<'_>) -> Result<GradientMap, TensorError> {
        let nodes = self.nodes.borrow();
        let nodes: &[Node] = &nodes;
        let loss_value = &nodes[loss.id].value;
        if loss_value.numel() != 1 {
            return Err(TensorError::NotScalarLoss { shape: loss_value.shape().to_vec() });
        }

        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.id] = Some(Tensor::filled(loss_value.shape().to_vec(), 1.0));

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].clone() else { continue };
            let val = &nodes[id].value;
            match &nodes[id].op {
                Op::Leaf | Op::Constant => {}
                Op::Add(a, b) => {
                    acc(&mut grads, nodes, *a, g.clone());
                    acc(&mut grads, nodes, *b, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, nodes, *a, g.clone());
                    acc(&mut grads, nodes, *b, kernels::map(&g, |v| -v));
                }
                Op::Mul(a, b) => {
                    let da = kernels::zip(&g, &nodes[*b].value, |gv, bv| gv * bv);
                    let db = kernels::zip(&g, &nodes[*a].value, |gv, av| gv * av);
                    acc(&mut grads, nodes, *a, da);
                    acc(&mut grads, nodes, *b, db);
                }
                Op::Scale(a, c) => {
                    let c = *c;
                    acc(&mut grads, nodes, *a, kernels::map(&g, |v| c * v));
                }
                Op::AddScalar(a) => acc(&mut grads, nodes, *a, g),
                Op::AddScalarVar(a, s) => {
                    let total: f64 = g.data().iter().sum();
                    let s_shape = nodes[*s].value.shape().to_vec();
                    acc(&mut grads, nodes, *a, g);
                    acc(&mut grads, nodes, *s, Tensor::filled(s_shape, total));
                }
                Op::MatMul(a, b) => {
                    let at = kernels::transpose(&nodes[*a].value);
                    let bt = kernels::transpose(&nodes[*b].value);
                    acc(&mut grads, nodes, *a, kernels::matmul(&g, &bt));
                    acc(&mut grads, nodes, *b, kernels::matmul(&at, &g));
                }
                Op::AddBias(a, b) => {
                    let (m, n) = (g.shape()[0], g.shape()[1]);
                    let mut db = vec![0.0; n];
                    for i in 0..m {
                        for j in 0..n {
                            db[j] += g.data()[i * n + j];
                        }
                    }
                    acc(&mut grads, nodes, *a, g);
                    acc(&mut grads, nodes, *b, Tensor::vector(&db));
                }
                Op::OuterAdd(a, b) => {
                    let (k, l) = (g.shape()[0], g.shape()[1]);
                    let mut da = vec![0.0; k];
                    let mut db = vec![0.0; l];
                    for i in 0..k {
                        for j in 0..l {
                            let gv = g.data()[i * l + j];
                            da[i] += gv;
                            db[j] += gv;
                        }
                    }
                    acc(&mut grads, nodes, *a, Tensor::vector(&da));
                    acc(&mut grads, nodes, *b, Tensor::vector(&db));
                }
                Op::ScaleRows(a, s) => {
                    let av = &nodes[*a].value;
                    let sv = &nodes[*s].value;
                    let (k, e) = (av.shape()[0], av.shape()[1]);
                    let mut da = vec![0.0; k * e];
                    let mut ds = vec![0.0; k];
                    for i in 0..k {
                        for j in 0..e {
                            let gv = g.data()[i * e + j];
                            da[i * e + j] = sv.data()[i] * gv;
                            ds[i] += av.data()[i * e + j] * gv;
                        }
                    }
                    acc(&mut grads, nodes, *a, Tensor::new(vec![k, e], da).unwrap());
                    acc(&mut grads, nodes, *s, Tensor::vector(&ds));
                }
                Op::Relu(a) => {
                    let da = kernels::zip(&g, &nodes[*a].value, |gv, x| if x > 0.0 { gv } else { 0.0 });
                    acc(&mut grads, nodes, *a, da);
                }
                Op::Sigmoid(a) => {
                    let da = kernels::zip(&g, val, |gv, y| gv * y * (1.0 - y));
                    acc(&mut grads, nodes, *a, da);
                }
                Op::Exp(a) => {
                    let da = kernels::zip(&g, val, |gv, y| gv * y);
                    acc(&mut grads, nodes, *a, da);
                }
                Op::Log(a) => {
                    let da = kernels::zip(&g, &nodes[*a].value, |gv, x| gv / x);
                    acc(&mut grads, nodes, *a, da);
                }
                Op::Clamp { input, lo, hi } => {
                    let (lo, hi) = (*lo, *hi);
                    let da = kernels::zip(&g, &nodes[*input].value, |gv, x| {
                        if x >= lo && x <= hi {
                            gv
                        } else {
                            0.0
                        }
                    });
                    acc(&mut grads, nodes, *input, da);
                }
                Op::Softmax { input, axis } => {
                    let (outer, len, inner) = kernels::lanes(val.shape(), *axis);
                    let mut da = vec![0.0; val.numel()];
                    for o in 0..outer {
                        for i in 0..inner {
                            let idx = |l: usize| (o * len + l) * inner + i;
                            let mut dot = 0.0;
                            for l in 0..len {
                                dot += g.data()[idx(l)] * val.data()[idx(l)];
                            }
                            for l in 0..len {
                                da[idx(l)] = val.data()[idx(l)] * (g.data()[idx(l)] - dot);
                            }
                        }
                    }
                    acc(&mut grads, nodes, *input, Tensor::new(val.shape().to_vec(), da).unwrap());
                }
                Op::LogSoftmax { input, axis } => {
                    let (outer, len, inner) = kernels::lanes(val.shape(), *axis);
                    let mut da = vec![0.0; val.numel()];
                    for o in 0..outer {
                        for i in 0..inner {
                            let idx = |l: usize| (o * len + l) * inner + i;
                            let mut gsum = 0.0;
                            for l in 0..len {
                                gsum += g.data()[idx(l)];
                            }
                            for l in 0..len {
                                da[idx(l)] = g.data()[idx(l)] - val.data()[idx(l)].exp() * gsum;
                            }
                        }
                    }
                    acc(&mut grads, nodes, *input, Tensor::new(val.shape().to_vec(), da).unwrap());
                }
                Op::SumAll(a) => {
                    let shape = nodes[*a].value.shape().to_vec();
                    acc(&mut grads, nodes, *a, Tensor::filled(shape, g.item()));
                }
                Op::SumAxis { input, axis } => {
                    let in_shape = nodes[*input].value.shape();
                    let (outer, len, inner) = kernels::lanes(in_shape, *axis);
                    let mut da = vec![0.0; nodes[*input].value.numel()];
                    for o in 0..outer {
                        for i in 0..inner {
                            let gv = g.data()[o * inner + i];
                            for l in 0..len {
                                da[(o * len + l) * inner + i] = gv;
                            }
                        }
                    }
                    acc(&mut grads, nodes, *input, Tensor::new(in_shape.to_vec(), da).unwrap());
                }
                Op::MaxAxis { input, axis, argmax } => {
                    let in_shape = nodes[*input].value.shape();
                    let (outer, len, inner) = kernels::lanes(in_shape, *axis);
                    let mut da = vec![0.0; nodes[*input].value.numel()];
                    for o in 0..outer {
                        for i in 0..inner {
                            let l = argmax[o * inner + i];
                            da[(o * len + l) * inner + i] = g.data()[o * inner + i];
                        }
                    }
                    acc(&mut grads, nodes, *input, Tensor::new(in_shape.to_vec(), da).unwrap());
                }
                Op::Concat { inputs, axis } => {
                    let axis_total = val.shape()[*axis];
                    let (outer, _, inner) = kernels::lanes(val.shape(), *axis);
                    let mut offset = 0;
                    for &inp in inputs {
                        let in_shape = nodes[inp].value.shape().to_vec();
                        let len = in_shape[*axis];
                        let block = len * inner;
                        let mut da = vec![0.0; nodes[inp].value.numel()];
                        for o in 0..outer {
                            let src_start = (o * axis_total + offset) * inner;
                            da[o * block..(o + 1) * block]
                                .copy_from_slice(&g.data()[src_start..src_start + block]);
                        }
                        acc(&mut grads, nodes, inp, Tensor::new(in_shape, da).unwrap());
                        offset += len;
                    }
                }
                Op::Slice { input, axis, start } => {
                    let in_shape = nodes[*input].value.shape();
                    let len = val.shape()[*axis];
                    let (outer, in_len, inner) = kernels::lanes(in_shape, *axis);
                    let mut da = vec![0.0; nodes[*input].value.numel()];
                    for o in 0..outer {
                        let dst_start = (o * in_len + start) * inner;
                        let src_start = o * len * inner;
                        da[dst_start..dst_start + len * inner]
                            .copy_from_slice(&g.data()[src_start..src_start + len * inner]);
                    }
                    acc(&mut grads, nodes, *input, Tensor::new(in_shape.to_vec(), da).unwrap());
                }
                Op::Reshape(a) => {
                    let in_shape = nodes[*a].value.shape().to_vec();
                    acc(&mut grads, nodes, *a, g.reshaped(in_shape).unwrap());
                }
                Op::Conv1d { seq, filters, width } => {
                    let sv = &nodes[*seq].value;
                    let fv = &nodes[*filters].value;
                    let (l, e) = (sv.shape()[0], sv.shape()[1]);
                    let f = fv.shape()[0];
                    let w = *width;
                    let steps = l - w + 1;
                    let mut dseq = vec![0.0; l * e];
                    let mut dfilt = vec![0.0; f * w * e];
                    for t in 0..steps {
                        for j in 0..f {
                            let gv = g.data()[t * f + j];
                            if gv == 0.0 {
                                continue;
                            }
                            let frow = &fv.data()[j * w * e..(j + 1) * w * e];
                            for dw in 0..w {
                                for ee in 0..e {
                                    dseq[(t + dw) * e + ee] += gv * frow[dw * e + ee];
                                    dfilt[j * w * e + dw * e + ee] += gv * sv.data()[(t + dw) * e + ee];
                                }
                            }
                        }
                    }
                    acc(&mut grads, nodes, *seq, Tensor::new(vec![l, e], dseq).unwrap());
                    acc(&mut grads, nodes, *filters, Tensor::new(fv.shape().to_vec(), dfilt).unwrap());
                }
                Op::GatherRows { table, indices, pad } => {
                    let tv = &nodes[*table].value;
                    let (rows, e) = (tv.shape()[0], tv.shape()[1]);
                    let mut dt = vec![0.0; rows * e];
                    for (l, &idx) in indices.iter().enumerate() {
                        if Some(idx) == *pad {
                            continue;
                        }
                        for ee in 0..e {
                            dt[idx * e + ee] += g.data()[l * e + ee];
                        }
                    }
                    acc(&mut grads, nodes, *table, Tensor::new(vec![rows, e], dt).unwrap());
                }
            }
        }

        for (id, node) in nodes.iter().enumerate() {
            if node.trainable && matches!(node.op, Op::Leaf) && grads[id].is_none() {
                grads[id] = Some(Tensor::zeros(node.value.shape().to_vec()));
            }
        }
        Ok(GradientMap { grads })
    }
}

fn acc(grads: &mut [Option<Tensor>], nodes: &[Node], id: usize, delta: Tensor) {
    match nodes[id].op {
        Op::Constant => return,
        Op::Leaf if !nodes[id].trainable => return,
        _ => {}
    }
    match &mut grads[id] {
        Some(t) => {
            for (o, d) in t.data_mut().iter_mut().zip(delta.data()) {
                *o += d;
            }
        }
        None => grads[id] = Some(delta),
    }
}

/// Gradients from one backward sweep, indexed by the vars they belong to.
pub struct GradientMap {
    grads: Vec<Option<Tensor>>,
}

impl GradientMap {
    /// The gradient accumulated at `v`, if the sweep reached it.
    /// Trainable leaves are always present (zeros when unreachable).
    pub fn get(&self, v: Var<'_>) -> Option<&Tensor> {
        self.grads.get(v.id).and_then(Option::as_ref)
    }
}

/// Handle to one node on a tape. Copyable; all ops return fresh handles.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl<'t> Var<'t> {
    /// The node's current value (cheap clone, shared buffer).
    pub fn value(&self) -> Tensor {
        self.tape.value(self.id)
    }

    /// The tape this handle lives on.
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    fn same_tape(&self, other: &Var<'t>) {
        debug_assert!(std::ptr::eq(self.tape, other.tape), "vars belong to different tapes");
    }

    fn binary(
        self,
        name: &'static str,
        rhs: Var<'t>,
        op: fn(usize, usize) -> Op,
        f: fn(f64, f64) -> f64,
    ) -> Result<Var<'t>, TensorError> {
        self.same_tape(&rhs);
        let a = self.value();
        let b = rhs.value();
        if a.shape() != b.shape() {
            return Err(shape_mismatch(name, format!("{:?} vs {:?}", a.shape(), b.shape())));
        }
        let out = kernels::zip(&a, &b, f);
        self.tape.push_checked(name, op(self.id, rhs.id), out)
    }

    pub fn add(self, rhs: Var<'t>) -> Result<Var<'t>, TensorError> {
        self.binary("add", rhs, Op::Add, |x, y| x + y)
    }

    pub fn sub(self, rhs: Var<'t>) -> Result<Var<'t>, TensorError> {
        self.binary("sub", rhs, Op::Sub, |x, y| x - y)
    }

    /// Elementwise product.
    pub fn mul(self, rhs: Var<'t>) -> Result<Var<'t>, TensorError> {
        self.binary("mul", rhs, Op::Mul, |x, y| x * y)
    }

    pub fn scale(self, c: f64) -> Result<Var<'t>, TensorError> {
        let out = kernels::map(&self.value(), |v| c * v);
        self.tape.push_checked("scale", Op::Scale(self.id, c), out)
    }

    pub fn add_scalar(self, c: f64) -> Result<Var<'t>, TensorError> {
        let out = kernels::map(&self.value(), |v| v + c);
        self.tape.push_checked("add_scalar", Op::AddScalar(self.id), out)
    }

    /// Broadcast-add a one-element var onto every entry.
    pub fn add_scalar_var(self, s: Var<'t>) -> Result<Var<'t>, TensorError> {
        self.same_tape(&s);
        let sv = s.value();
        if sv.numel() != 1 {
            return Err(shape_mismatch(
                "add_scalar_var",
                format!("scalar operand has shape {:?}", sv.shape()),
            ));
        }
        let c = sv.data()[0];
        let out = kernels::map(&self.value(), |v| v + c);
        self.tape.push_checked("add_scalar_var", Op::AddScalarVar(self.id, s.id), out)
    }

    pub fn matmul(self, rhs: Var<'t>) -> Result<Var<'t>, TensorError> {
        self.same_tape(&rhs);
        let a = self.value();
        let b = rhs.value();
        if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
            return Err(shape_mismatch(
                "matmul",
                format!("{:?} x {:?}", a.shape(), b.shape()),
            ));
        }
        let out = kernels::matmul(&a, &b);
        self.tape.push_checked("matmul", Op::MatMul(self.id, rhs.id), out)
    }

    /// Row-broadcast add: `[m,n] + [n] -> [m,n]`.
    pub fn add_bias(self, bias: Var<'t>) -> Result<Var<'t>, TensorError> {
        self.same_tape(&bias);
        let a = self.value();
        let b = bias.value();
        if a.rank() != 2 || b.rank() != 1 || a.shape()[1] != b.shape()[0] {
            return Err(shape_mismatch(
                "add_bias",
                format!("{:?} + {:?}", a.shape(), b.shape()),
            ));
        }
        let (m, n) = (a.shape()[0], a.shape()[1]);
        let mut data = a.data().to_vec();
        for i in 0..m {
            for j in 0..n {
                data[i * n + j] += b.data()[j];
            }
        }
        let out = Tensor::new(vec![m, n], data)?;
        self.tape.push_checked("add_bias", Op::AddBias(self.id, bias.id), out)
    }

    /// Pairwise sums of two vectors: `out[i,j] = self[i] + rhs[j]`.
    pub fn outer_add(self, rhs: Var<'t>) -> Result<Var<'t>, TensorError> {
        self.same_tape(&rhs);
        let a = self.value();
        let b = rhs.value();
        if a.rank() != 1 || b.rank() != 1 {
            return Err(shape_mismatch(
                "outer_add",
                format!("{:?} and {:?} must be rank 1", a.shape(), b.shape()),
            ));
        }
        let (k, l) = (a.shape()[0], b.shape()[0]);
        let mut data = vec![0.0; k * l];
        for i in 0..k {
            for j in 0..l {
                data[i * l + j] = a.data()[i] + b.data()[j];
            }
        }
        let out = Tensor::new(vec![k, l], data)?;
        self.tape.push_checked("outer_add", Op::OuterAdd(self.id, rhs.id), out)
    }

    /// Scale row `i` of a `[k,e]` matrix by `weights[i]`.
    pub fn scale_rows(self, weights: Var<'t>) -> Result<Var<'t>, TensorError> {
        self.same_tape(&weights);
        let a = self.value();
        let s = weights.value();
        if a.rank() != 2 || s.rank() != 1 || a.shape()[0] != s.shape()[0] {
            return Err(shape_mismatch(
                "scale_rows",
                format!("{:?} rows vs {:?}", a.shape(), s.shape()),
            ));
        }
        let (k, e) = (a.shape()[0], a.shape()[1]);
        let mut data = a.data().to_vec();
        for i in 0..k {
            for j in 0..e {
                data[i * e + j] *= s.data()[i];
            }
        }
        let out = Tensor::new(vec![k, e], data)?;
        self.tape.push_checked("scale_rows", Op::ScaleRows(self.id, weights.id), out)
    }

    pub fn relu(self) -> Result<Var<'t>, TensorError> {
        let out = kernels::map(&self.value(), |v| if v > 0.0 { v } else { 0.0 });
        self.tape.push_checked("relu", Op::Relu(self.id), out)
    }

    pub fn sigmoid(self) -> Result<Var<'t>, TensorError> {
        let out = kernels::map(&self.value(), kernels::sigmoid);
        self.tape.push_checked("sigmoid", Op::Sigmoid(self.id), out)
    }

    pub fn exp(self) -> Result<Var<'t>, TensorError> {
        let out = kernels::map(&self.value(), f64::exp);
        self.tape.push_checked("exp", Op::Exp(self.id), out)
    }

    /// Natural log; nonpositive entries surface as NumericalError.
    pub fn log(self) -> Result<Var<'t>, TensorError> {
        let out = kernels::map(&self.value(), f64::ln);
        self.tape.push_checked("log", Op::Log(self.id), out)
    }

    pub fn clamp(self, lo: f64, hi: f64) -> Result<Var<'t>, TensorError> {
        let out = kernels::map(&self.value(), |v| v.clamp(lo, hi));
        self.tape.push_checked("clamp", Op::Clamp { input: self.id, lo, hi }, out)
    }

    pub fn softmax(self, axis: usize) -> Result<Var<'t>, TensorError> {
        let a = self.value();
        if axis >= a.rank() {
            return Err(shape_mismatch("softmax", format!("axis {} out of rank {}", axis, a.rank())));
        }
        let out = kernels::softmax(&a, axis);
        self.tape.push_checked("softmax", Op::Softmax { input: self.id, axis }, out)
    }

    pub fn log_softmax(self, axis: usize) -> Result<Var<'t>, TensorError> {
        let a = self.value();
        if axis >= a.rank() {
            return Err(shape_mismatch(
                "log_softmax",
                format!("axis {} out of rank {}", axis, a.rank()),
            ));
        }
        let out = kernels::log_softmax(&a, axis);
        self.tape.push_checked("log_softmax", Op::LogSoftmax { input: self.id, axis }, out)
    }

    /// Reduce every element to a rank-0 scalar.
    pub fn sum_all(self) -> Result<Var<'t>, TensorError> {
        let total: f64 = self.value().data().iter().sum();
        self.tape.push_checked("sum_all", Op::SumAll(self.id), Tensor::scalar(total))
    }

    /// Sum out one axis, dropping it from the shape.
    pub fn sum_axis(self, axis: usize) -> Result<Var<'t>, TensorError> {
        let a = self.value();
        if axis >= a.rank() {
            return Err(shape_mismatch("sum_axis", format!("axis {} out of rank {}", axis, a.rank())));
        }
        let (outer, len, inner) = kernels::lanes(a.shape(), axis);
        let mut out_shape = a.shape().to_vec();
        out_shape.remove(axis);
        let mut data = vec![0.0; outer * inner];
        for o in 0..outer {
            for l in 0..len {
                for i in 0..inner {
                    data[o * inner + i] += a.data()[(o * len + l) * inner + i];
                }
            }
        }
        let out = Tensor::new(out_shape, data)?;
        self.tape.push_checked("sum_axis", Op::SumAxis { input: self.id, axis }, out)
    }

    /// Max over one axis; gradient routes to the first maximum per lane.
    pub fn max_axis(self, axis: usize) -> Result<Var<'t>, TensorError> {
        let a = self.value();
        if axis >= a.rank() || a.shape()[axis] == 0 {
            return Err(shape_mismatch("max_axis", format!("axis {} invalid for {:?}", axis, a.shape())));
        }
        let (outer, len, inner) = kernels::lanes(a.shape(), axis);
        let mut out_shape = a.shape().to_vec();
        out_shape.remove(axis);
        let mut data = vec![0.0; outer * inner];
        let mut argmax = vec![0usize; outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let mut best = f64::NEG_INFINITY;
                let mut best_l = 0;
                for l in 0..len {
                    let v = a.data()[(o * len + l) * inner + i];
                    if v > best {
                        best = v;
                        best_l = l;
                    }
                }
                data[o * inner + i] = best;
                argmax[o * inner + i] = best_l;
            }
        }
        let out = Tensor::new(out_shape, data)?;
        self.tape.push_checked("max_axis", Op::MaxAxis { input: self.id, axis, argmax }, out)
    }

    /// Contiguous range along one axis.
    pub fn slice(self, axis: usize, start: usize, len: usize) -> Result<Var<'t>, TensorError> {
        let a = self.value();
        if axis >= a.rank() || start + len > a.shape()[axis] {
            return Err(shape_mismatch(
                "slice",
                format!("range {}..{} on axis {} of {:?}", start, start + len, axis, a.shape()),
            ));
        }
        let (outer, in_len, inner) = kernels::lanes(a.shape(), axis);
        let mut out_shape = a.shape().to_vec();
        out_shape[axis] = len;
        let mut data = vec![0.0; outer * len * inner];
        for o in 0..outer {
            let src_start = (o * in_len + start) * inner;
            data[o * len * inner..(o + 1) * len * inner]
                .copy_from_slice(&a.data()[src_start..src_start + len * inner]);
        }
        let out = Tensor::new(out_shape, data)?;
        self.tape.push_checked("slice", Op::Slice { input: self.id, axis, start }, out)
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Var<'t>, TensorError> {
        let out = self.value().reshaped(shape)?;
        self.tape.push_checked("reshape", Op::Reshape(self.id), out)
    }

    /// Valid cross-correlation over the sequence axis.
    ///
    /// `self` is the sequence `[l, e]`, `filters` is a `[f, w, e]` bank,
    /// `bias` is `[f]`; the result is `[l - w + 1, f]`.
    pub fn conv1d(self, filters: Var<'t>, bias: Var<'t>) -> Result<Var<'t>, TensorError> {
        self.same_tape(&filters);
        self.same_tape(&bias);
        let seq = self.value();
        let fv = filters.value();
        let bv = bias.value();
        if seq.rank() != 2 || fv.rank() != 3 {
            return Err(shape_mismatch(
                "conv1d",
                format!("sequence {:?}, filters {:?}", seq.shape(), fv.shape()),
            ));
        }
        let (l, e) = (seq.shape()[0], seq.shape()[1]);
        let (f, w) = (fv.shape()[0], fv.shape()[1]);
        if fv.shape()[2] != e {
            return Err(shape_mismatch(
                "conv1d",
                format!("filter depth {} vs embedding {}", fv.shape()[2], e),
            ));
        }
        if bv.rank() != 1 || bv.shape()[0] != f {
            return Err(shape_mismatch("conv1d", format!("bias {:?} for {} filters", bv.shape(), f)));
        }
        if w > l {
            return Err(TensorError::FilterTooWide { width: w, len: l });
        }
        let raw = kernels::conv1d(&seq, &fv, w);
        let conv = self.tape.push_checked(
            "conv1d",
            Op::Conv1d { seq: self.id, filters: filters.id, width: w },
            raw,
        )?;
        conv.add_bias(bias)
    }

    /// Look rows up from an embedding table.
    ///
    /// `self` is the `[v, e]` table. The `pad` index yields a zero row and
    /// receives no gradient.
    pub fn gather_rows(self, indices: &[usize], pad: Option<usize>) -> Result<Var<'t>, TensorError> {
        let t = self.value();
        if t.rank() != 2 {
            return Err(shape_mismatch("gather_rows", format!("table {:?}", t.shape())));
        }
        let (rows, e) = (t.shape()[0], t.shape()[1]);
        let mut data = vec![0.0; indices.len() * e];
        for (l, &idx) in indices.iter().enumerate() {
            if idx >= rows {
                return Err(TensorError::IndexOutOfVocab { index: idx, size: rows });
            }
            if Some(idx) == pad {
                continue;
            }
            data[l * e..(l + 1) * e].copy_from_slice(&t.data()[idx * e..(idx + 1) * e]);
        }
        let out = Tensor::new(vec![indices.len(), e], data)?;
        self.tape.push_checked(
            "gather_rows",
            Op::GatherRows { table: self.id, indices: indices.to_vec(), pad },
            out,
        )
    }
}

/// Identifies one registered parameter; stable across the model's lifetime.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct ParamId(usize);

/// Named parameter tensors in a fixed registration order.
///
/// Registration order is the canonical order for checkpoints and
/// optimizer state, so it must be deterministic.
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    trainable: Vec<bool>,
    index: BTreeMap<String, usize>,
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            values: Vec::new(),
            trainable: Vec::new(),
            index: BTreeMap::new(),
        }
    }

    /// Add a trainable parameter under a unique name.
    pub fn register(&mut self, name: &str, value: Tensor) -> ParamId {
        assert!(
            !self.index.contains_key(name),
            "parameter {:?} registered twice",
            name
        );
        let id = self.values.len();
        self.index.insert(name.to_string(), id);
        self.names.push(name.to_string());
        self.values.push(value);
        self.trainable.push(true);
        ParamId(id)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    /// Replace a parameter's value; the shape is fixed at registration.
    pub fn set_value(&mut self, id: ParamId, value: Tensor) {
        assert_eq!(
            self.values[id.0].shape(),
            value.shape(),
            "shape change for parameter {:?}",
            self.names[id.0]
        );
        self.values[id.0] = value;
    }

    pub fn trainable(&self, id: ParamId) -> bool {
        self.trainable[id.0]
    }

    pub fn set_trainable(&mut self, id: ParamId, on: bool) {
        self.trainable[id.0] = on;
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// All ids in registration order.
    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }
}

/// One mounting of a [`ParamStore`] onto a tape: a leaf per parameter,
/// in registration order.
pub struct Binding<'t> {
    vars: Vec<Var<'t>>,
}

impl<'t> Binding<'t> {
    pub fn mount(tape: &'t Tape, store: &ParamStore) -> Binding<'t> {
        let vars = store
            .ids()
            .map(|id| tape.leaf(store.value(id).clone(), store.trainable(id)))
            .collect();
        Binding { vars }
    }

    pub fn var(&self, id: ParamId) -> Var<'t> {
        self.vars[id.0]
    }
}
