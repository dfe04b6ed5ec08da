//! Tape-based reverse-mode differentiation.
//!
//! Every operation appends a node holding its value and the recipe for its
//! vector-Jacobian product. Inputs always precede outputs on the tape, so a
//! single reverse sweep visits nodes in topological order.

use std::collections::HashMap;
use std::rc::Rc;

use super::params::{ParamId, ParamStore};
use super::tensor::{broadcast_map, gemm, strides, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Zero padding of a temporal convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Centered window; output `t` sees inputs `t - k/2 ..= t + k/2`.
    Same,
    /// Left-only padding; output `t` sees inputs `t - k + 1 ..= t`.
    Causal,
}

impl Padding {
    fn left(self, k: usize) -> usize {
        match self {
            Padding::Same => (k - 1) / 2,
            Padding::Causal => k - 1,
        }
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param,
    Add(Var, Var, Rc<Vec<usize>>),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    ScaleBy(Var, Var),
    Relu(Var),
    Abs(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    MatMul(Var, Var),
    Permute(Var, Vec<usize>),
    Reshape(Var),
    Concat(Vec<Var>, usize),
    Slice(Var, usize, usize),
    Conv1d {
        x: Var,
        w: Var,
        b: Var,
        padding: Padding,
    },
    Sum(Var),
    Mean(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Recorded computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

/// Gradients of one backward sweep, indexed by variable.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }
}

fn batch_dims(shape: &[usize]) -> &[usize] {
    &shape[..shape.len() - 2]
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
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

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Records a parameter once per tape; later calls return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(store.get(id).value.clone(), Op::Param);
        self.params.insert(id, v);
        v
    }

    /// `a + b` with `b` broadcast to the shape of `a` (right-aligned,
    /// extents equal or 1).
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let map = broadcast_map(self.shape(a), self.shape(b))?;
        let (av, bv) = (self.value(a), self.value(b));
        let data = av
            .data()
            .iter()
            .zip(&map)
            .map(|(x, &j)| x + bv.data()[j])
            .collect();
        let out = Tensor::new(av.shape(), data)?;
        Ok(self.push(out, Op::Add(a, b, Rc::new(map))))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x - y)
            .collect();
        let out = Tensor::new(self.shape(a), data)?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let out = Tensor::new(self.shape(a), data)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn mul_scalar(&mut self, a: Var, k: f64) -> Var {
        let av = self.value(a);
        let out = Tensor::from_fn(av.shape(), |i| av.data()[i] * k);
        self.push(out, Op::Scale(a, k))
    }

    /// `a * s` where `s` is a single-element variable.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Result<Var> {
        if self.value(s).numel() != 1 {
            return Err(Error::dim("scale_by expects a single-element scale"));
        }
        let k = self.value(s).data()[0];
        let av = self.value(a);
        let out = Tensor::from_fn(av.shape(), |i| av.data()[i] * k);
        Ok(self.push(out, Op::ScaleBy(a, s)))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let out = Tensor::from_fn(av.shape(), |i| av.data()[i].max(0.0));
        self.push(out, Op::Relu(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let out = Tensor::from_fn(av.shape(), |i| av.data()[i].abs());
        self.push(out, Op::Abs(a))
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let d = *av.shape().last().unwrap();
        let mut out = av.clone();
        for row in out.data_mut().chunks_mut(d) {
            softmax_row(row, None);
        }
        self.push(out, Op::Softmax(a))
    }

    /// Softmax over the last axis where `allowed` (row-major over the last
    /// two axes, broadcast over leading axes) marks the admissible entries.
    /// Excluded entries get probability exactly 0.
    pub fn softmax_masked(&mut self, a: Var, allowed: &[bool]) -> Result<Var> {
        let av = self.value(a);
        let shape = av.shape();
        if shape.len() < 2 {
            return Err(Error::dim("masked softmax needs at least 2 axes"));
        }
        let (r, d) = (shape[shape.len() - 2], shape[shape.len() - 1]);
        if allowed.len() != r * d {
            return Err(Error::dim(format!(
                "mask of {} entries for {r}x{d} scores",
                allowed.len()
            )));
        }
        if allowed.chunks(d).any(|row| !row.iter().any(|&x| x)) {
            return Err(Error::dim("mask excludes every entry of a row"));
        }
        let mut out = av.clone();
        for (k, row) in out.data_mut().chunks_mut(d).enumerate() {
            let m = k % r;
            softmax_row(row, Some(&allowed[m * d..(m + 1) * d]));
        }
        Ok(self.push(out, Op::Softmax(a)))
    }

    /// Layer normalization over the last axis with elementwise affine.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let d = *self.shape(x).last().unwrap();
        if self.shape(gain) != [d] || self.shape(bias) != [d] {
            return Err(Error::dim(format!(
                "layer norm affine must have shape [{d}], got {:?} and {:?}",
                self.shape(gain),
                self.shape(bias)
            )));
        }
        let xv = self.value(x);
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let rows = xv.numel() / d;
        let mut xhat = vec![0.0; xv.numel()];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; xv.numel()];
        for r in 0..rows {
            let row = &xv.data()[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[r] = is;
            for j in 0..d {
                let h = (row[j] - mean) * is;
                xhat[r * d + j] = h;
                out[r * d + j] = h * g[j] + b[j];
            }
        }
        let out = Tensor::new(xv.shape(), out)?;
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
        ))
    }

    /// Batched matrix product over the last two axes. Leading axes must
    /// match, or one operand may be a plain matrix shared across the batch.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() < 2 || sb.len() < 2 {
            return Err(Error::dim("matmul operands need at least 2 axes"));
        }
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (k2, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        if k != k2 {
            return Err(Error::dim(format!("matmul inner extents differ: {sa:?} x {sb:?}")));
        }
        let (ba, bb) = (batch_dims(&sa), batch_dims(&sb));
        let batch: Vec<usize> = if ba == bb || bb.is_empty() {
            ba.to_vec()
        } else if ba.is_empty() {
            bb.to_vec()
        } else {
            return Err(Error::dim(format!("matmul batch axes differ: {sa:?} x {sb:?}")));
        };
        let nb: usize = batch.iter().product();
        let (step_a, step_b) = (
            if ba.is_empty() { 0 } else { m * k },
            if bb.is_empty() { 0 } else { k * n },
        );
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; nb * m * n];
        for i in 0..nb {
            gemm(
                &av[i * step_a..i * step_a + m * k],
                &bv[i * step_b..i * step_b + k * n],
                &mut out[i * m * n..(i + 1) * m * n],
                m,
                k,
                n,
                false,
                false,
            );
        }
        let mut shape = batch;
        shape.extend([m, n]);
        let out = Tensor::new(&shape, out)?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// Reorders axes: output axis `k` is input axis `axes[k]`.
    pub fn permute(&mut self, a: Var, axes: &[usize]) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let mut seen = vec![false; shape.len()];
        if axes.len() != shape.len() || axes.iter().any(|&x| x >= shape.len() || std::mem::replace(&mut seen[x], true)) {
            return Err(Error::dim(format!("invalid permutation {axes:?} for {shape:?}")));
        }
        let out = permute_tensor(self.value(a), axes);
        Ok(self.push(out, Op::Permute(a, axes.to_vec())))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).clone().reshaped(shape)?;
        Ok(self.push(out, Op::Reshape(a)))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = self
            .shape(*parts.first().ok_or_else(|| Error::dim("concat of nothing"))?)
            .to_vec();
        if axis >= first.len() {
            return Err(Error::dim(format!("concat axis {axis} out of range")));
        }
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.len() != first.len()
                || s.iter().zip(&first).enumerate().any(|(k, (x, y))| k != axis && x != y)
            {
                return Err(Error::dim(format!("concat shapes {first:?} and {s:?} differ")));
            }
            total += s[axis];
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let ext = self.shape(p)[axis];
                let src = self.value(p).data();
                data.extend_from_slice(&src[o * ext * inner..(o + 1) * ext * inner]);
            }
        }
        let mut shape = first;
        shape[axis] = total;
        let out = Tensor::new(&shape, data)?;
        Ok(self.push(out, Op::Concat(parts.to_vec(), axis)))
    }

    /// `len` entries of `axis` starting at `start`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(Error::dim(format!(
                "slice [{start}, {}) of axis {axis} out of range for {shape:?}",
                start + len
            )));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * shape[axis] + start) * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let out = Tensor::new(&out_shape, data)?;
        Ok(self.push(out, Op::Slice(a, axis, start)))
    }

    /// Temporal convolution of `x: [B, L, Cin]` with `w: [K, Cin, Cout]`
    /// and bias `[Cout]`, output `[B, L, Cout]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, padding: Padding) -> Result<Var> {
        let (sx, sw) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if sx.len() != 3 || sw.len() != 3 || sw[1] != sx[2] || self.shape(b) != [sw[2]] {
            return Err(Error::dim(format!(
                "conv1d shapes x {sx:?}, w {sw:?}, b {:?} incompatible",
                self.shape(b)
            )));
        }
        if padding == Padding::Same && sw[0] % 2 == 0 {
            return Err(Error::config("centered convolution needs an odd kernel"));
        }
        let (nb, l, cin) = (sx[0], sx[1], sx[2]);
        let (k, cout) = (sw[0], sw[2]);
        let left = padding.left(k);
        let (xv, wv, bv) = (self.value(x).data(), self.value(w).data(), self.value(b).data());
        let mut out = vec![0.0; nb * l * cout];
        for bi in 0..nb {
            for t in 0..l {
                let orow = &mut out[(bi * l + t) * cout..(bi * l + t + 1) * cout];
                orow.copy_from_slice(bv);
                for j in 0..k {
                    let src = t as isize + j as isize - left as isize;
                    if src < 0 || src >= l as isize {
                        continue;
                    }
                    let xrow = &xv[(bi * l + src as usize) * cin..(bi * l + src as usize + 1) * cin];
                    gemm(xrow, &wv[j * cin * cout..(j + 1) * cin * cout], orow, 1, cin, cout, false, false);
                }
            }
        }
        let out = Tensor::new(&[nb, l, cout], out)?;
        Ok(self.push(out, Op::Conv1d { x, w, b, padding }))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let s = av.data().iter().sum::<f64>() / av.numel() as f64;
        self.push(Tensor::scalar(s), Op::Mean(a))
    }

    /// `x W + b` over the last axis.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let y = self.matmul(x, w)?;
        match b {
            Some(b) => self.add(y, b),
            None => Ok(y),
        }
    }

    /// Reverse sweep from a single-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).numel() != 1 {
            return Err(Error::dim("backward needs a single-element loss"));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(self.shape(loss), 1.0));
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Adds the gradients of all parameter nodes into the store.
    pub fn accumulate(&self, grads: &Gradients, store: &mut ParamStore) {
        for (&id, &v) in &self.params {
            if let Some(g) = grads.get(v) {
                store.get_mut(id).grad.add_assign(g);
            }
        }
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        let gd = g.data();
        let mut give = |v: Var, t: Tensor| match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&t),
            slot @ None => *slot = Some(t),
        };
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::Add(a, b, map) => {
                give(*a, g.clone());
                let mut gb = Tensor::zeros(self.shape(*b));
                for (x, &j) in gd.iter().zip(map.iter()) {
                    gb.data_mut()[j] += x;
                }
                give(*b, gb);
            }
            Op::Sub(a, b) => {
                give(*a, g.clone());
                give(*b, Tensor::from_fn(g.shape(), |i| -gd[i]));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                give(*a, Tensor::from_fn(g.shape(), |i| gd[i] * bv[i]));
                give(*b, Tensor::from_fn(g.shape(), |i| gd[i] * av[i]));
            }
            Op::Scale(a, k) => give(*a, Tensor::from_fn(g.shape(), |i| gd[i] * k)),
            Op::ScaleBy(a, s) => {
                let k = self.value(*s).data()[0];
                let av = self.value(*a).data();
                give(*a, Tensor::from_fn(g.shape(), |i| gd[i] * k));
                let ds: f64 = gd.iter().zip(av).map(|(x, y)| x * y).sum();
                give(*s, Tensor::full(self.shape(*s), ds));
            }
            Op::Relu(a) => {
                let av = self.value(*a).data();
                give(*a, Tensor::from_fn(g.shape(), |i| if av[i] > 0.0 { gd[i] } else { 0.0 }));
            }
            Op::Abs(a) => {
                let av = self.value(*a).data();
                give(*a, Tensor::from_fn(g.shape(), |i| gd[i] * sign(av[i])));
            }
            Op::Softmax(a) => {
                let y = node.value.data();
                let d = *node.value.shape().last().unwrap();
                let mut dx = vec![0.0; y.len()];
                for r in 0..y.len() / d {
                    let (ys, gs) = (&y[r * d..(r + 1) * d], &gd[r * d..(r + 1) * d]);
                    let dot: f64 = ys.iter().zip(gs).map(|(p, q)| p * q).sum();
                    for j in 0..d {
                        dx[r * d + j] = ys[j] * (gs[j] - dot);
                    }
                }
                give(*a, Tensor::new(g.shape(), dx).expect("shape preserved"));
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let d = *g.shape().last().unwrap();
                let gv = self.value(*gain).data();
                let mut dx = vec![0.0; gd.len()];
                let mut dg = vec![0.0; d];
                let mut db = vec![0.0; d];
                for r in 0..gd.len() / d {
                    let (gs, hs) = (&gd[r * d..(r + 1) * d], &xhat[r * d..(r + 1) * d]);
                    let mut sum_dh = 0.0;
                    let mut sum_dh_h = 0.0;
                    for j in 0..d {
                        dg[j] += gs[j] * hs[j];
                        db[j] += gs[j];
                        let dh = gs[j] * gv[j];
                        sum_dh += dh;
                        sum_dh_h += dh * hs[j];
                    }
                    let k = inv_std[r] / d as f64;
                    for j in 0..d {
                        let dh = gs[j] * gv[j];
                        dx[r * d + j] = k * (d as f64 * dh - sum_dh - hs[j] * sum_dh_h);
                    }
                }
                give(*x, Tensor::new(g.shape(), dx).expect("shape preserved"));
                give(*gain, Tensor::new(&[d], dg).expect("shape preserved"));
                give(*bias, Tensor::new(&[d], db).expect("shape preserved"));
            }
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
                let n = sb[sb.len() - 1];
                let (ba_empty, bb_empty) = (sa.len() == 2, sb.len() == 2);
                let nb = gd.len() / (m * n);
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                let mut da = vec![0.0; av.len()];
                let mut db = vec![0.0; bv.len()];
                for i in 0..nb {
                    let oa = if ba_empty { 0 } else { i * m * k };
                    let ob = if bb_empty { 0 } else { i * k * n };
                    let gi = &gd[i * m * n..(i + 1) * m * n];
                    // dA = dC B^T, dB = A^T dC
                    gemm(gi, &bv[ob..ob + k * n], &mut da[oa..oa + m * k], m, n, k, false, true);
                    gemm(&av[oa..oa + m * k], gi, &mut db[ob..ob + k * n], k, m, n, true, false);
                }
                give(*a, Tensor::new(sa, da).expect("shape preserved"));
                give(*b, Tensor::new(sb, db).expect("shape preserved"));
            }
            Op::Permute(a, axes) => {
                let mut inv = vec![0; axes.len()];
                for (k, &ax) in axes.iter().enumerate() {
                    inv[ax] = k;
                }
                give(*a, permute_tensor(g, &inv));
            }
            Op::Reshape(a) => {
                give(*a, g.clone().reshaped(self.shape(*a)).expect("same numel"));
            }
            Op::Concat(parts, axis) => {
                let shape = g.shape();
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[axis + 1..].iter().product();
                let total = shape[*axis];
                let mut offset = 0;
                for &p in parts {
                    let ext = self.shape(p)[*axis];
                    let mut gp = Vec::with_capacity(outer * ext * inner);
                    for o in 0..outer {
                        let base = (o * total + offset) * inner;
                        gp.extend_from_slice(&gd[base..base + ext * inner]);
                    }
                    offset += ext;
                    give(p, Tensor::new(self.shape(p), gp).expect("shape preserved"));
                }
            }
            Op::Slice(a, axis, start) => {
                let sa = self.shape(*a);
                let outer: usize = sa[..*axis].iter().product();
                let inner: usize = sa[axis + 1..].iter().product();
                let len = g.shape()[*axis];
                let mut ga = Tensor::zeros(sa);
                for o in 0..outer {
                    let base = (o * sa[*axis] + start) * inner;
                    ga.data_mut()[base..base + len * inner]
                        .copy_from_slice(&gd[o * len * inner..(o + 1) * len * inner]);
                }
                give(*a, ga);
            }
            Op::Conv1d { x, w, b, padding } => {
                let (sx, sw) = (self.shape(*x), self.shape(*w));
                let (nb, l, cin) = (sx[0], sx[1], sx[2]);
                let (k, cout) = (sw[0], sw[2]);
                let left = padding.left(k);
                let (xv, wv) = (self.value(*x).data(), self.value(*w).data());
                let mut dx = vec![0.0; xv.len()];
                let mut dw = vec![0.0; wv.len()];
                let mut dbias = vec![0.0; cout];
                for bi in 0..nb {
                    for t in 0..l {
                        let grow = &gd[(bi * l + t) * cout..(bi * l + t + 1) * cout];
                        for (acc, v) in dbias.iter_mut().zip(grow) {
                            *acc += v;
                        }
                        for j in 0..k {
                            let src = t as isize + j as isize - left as isize;
                            if src < 0 || src >= l as isize {
                                continue;
                            }
                            let xo = (bi * l + src as usize) * cin;
                            let wo = j * cin * cout;
                            // dx[src] += W_j grow ; dW_j += x[src]^T grow
                            gemm(&wv[wo..wo + cin * cout], grow, &mut dx[xo..xo + cin], cin, cout, 1, false, false);
                            gemm(&xv[xo..xo + cin], grow, &mut dw[wo..wo + cin * cout], cin, 1, cout, false, false);
                        }
                    }
                }
                give(*x, Tensor::new(sx, dx).expect("shape preserved"));
                give(*w, Tensor::new(sw, dw).expect("shape preserved"));
                give(*b, Tensor::new(&[cout], dbias).expect("shape preserved"));
            }
            Op::Sum(a) => give(*a, Tensor::full(self.shape(*a), gd[0])),
            Op::Mean(a) => {
                let n = self.value(*a).numel() as f64;
                give(*a, Tensor::full(self.shape(*a), gd[0] / n));
            }
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn softmax_row(row: &mut [f64], allowed: Option<&[bool]>) {
    let ok = |j: usize| allowed.is_none_or(|m| m[j]);
    let peak = row
        .iter()
        .enumerate()
        .filter(|(j, _)| ok(*j))
        .map(|(_, v)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (j, v) in row.iter_mut().enumerate() {
        *v = if ok(j) { (*v - peak).exp() } else { 0.0 };
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

pub(crate) fn permute_tensor(t: &Tensor, axes: &[usize]) -> Tensor {
    let shape = t.shape();
    let in_strides = strides(shape);
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let gather: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let numel = t.numel();
    let mut data = Vec::with_capacity(numel);
    let mut idx = vec![0usize; shape.len()];
    let src = t.data();
    for _ in 0..numel {
        let off: usize = idx.iter().zip(&gather).map(|(i, s)| i * s).sum();
        data.push(src[off]);
        for d in (0..out_shape.len()).rev() {
            idx[d] += 1;
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    Tensor::new(&out_shape, data).expect("permutation preserves numel")
}

/// Lower-triangular admissibility pattern for causal attention.
pub fn causal_mask(l: usize) -> Vec<bool> {
    (0..l * l).map(|k| k % l <= k / l).collect()
}
