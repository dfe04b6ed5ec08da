use rand::Rng;

use super::params::{ParamId, ParamStore};
use super::tape::{causal_mask, Padding, Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scorr::{SCorrTensor, TopUSCorr};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize, bias: bool, rng: &mut R) -> Self {
        let weight = store.add_glorot(format!("{name}.weight"), &[in_dim, out_dim], in_dim, out_dim, rng);
        let bias = bias.then(|| store.add(format!("{name}.bias"), Tensor::zeros(&[out_dim])));
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    /// Same layout, every weight zero.
    pub fn zeros(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize, bias: bool) -> Self {
        let weight = store.add(format!("{name}.weight"), Tensor::zeros(&[in_dim, out_dim]));
        let bias = bias.then(|| store.add(format!("{name}.bias"), Tensor::zeros(&[out_dim])));
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let b = self.bias.map(|b| tape.param(store, b));
        tape.linear(x, w, b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, d: usize) -> Self {
        Self {
            gain: store.add(format!("{name}.gain"), Tensor::full(&[d], 1.0)),
            bias: store.add(format!("{name}.bias"), Tensor::zeros(&[d])),
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let g = tape.param(store, self.gain);
        let b = tape.param(store, self.bias);
        tape.layer_norm(x, g, b, LAYER_NORM_EPS)
    }
}

/// Temporal convolution over `[B, L, in]` inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub kernel: usize,
    pub padding: Padding,
}

impl Conv1d {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        kernel: usize,
        padding: Padding,
        rng: &mut R,
    ) -> Result<Self> {
        if kernel == 0 || (padding == Padding::Same && kernel.is_multiple_of(2)) {
            return Err(Error::config(format!("kernel size {kernel} must be odd and positive")));
        }
        let weight = store.add_glorot(
            format!("{name}.weight"),
            &[kernel, in_dim, out_dim],
            kernel * in_dim,
            kernel * out_dim,
            rng,
        );
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[out_dim]));
        Ok(Self {
            weight,
            bias,
            kernel,
            padding,
        })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        tape.conv1d(x, w, b, self.padding)
    }
}

/// Symmetrically normalized adjacency `D^-1/2 A D^-1/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    n: usize,
    matrix: Vec<f64>,
}

impl NormalizedAdjacency {
    pub fn sensors(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(&[self.n, self.n], self.matrix.clone()).expect("square matrix")
    }
}

/// Returns `adj + I`.
pub fn with_self_loops(adj: &[f64], n: usize) -> Vec<f64> {
    let mut out = adj.to_vec();
    for i in 0..n {
        out[i * n + i] += 1.0;
    }
    out
}

pub fn laplacian_normalize(adj: &[f64], n: usize) -> Result<NormalizedAdjacency> {
    if adj.len() != n * n || n == 0 {
        return Err(Error::dim(format!("adjacency of {} entries is not {n}x{n}", adj.len())));
    }
    if let Some(v) = adj.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::Domain(format!("adjacency entry {v} is not a nonnegative number")));
    }
    let rows: Vec<f64> = adj.chunks(n).map(|r| r.iter().sum()).collect();
    if let Some(i) = rows.iter().position(|&s| s <= 0.0) {
        return Err(Error::Domain(format!("sensor {i} has no incident edge")));
    }
    let inv: Vec<f64> = rows.iter().map(|s| 1.0 / s.sqrt()).collect();
    let matrix = (0..n * n).map(|k| adj[k] * inv[k / n] * inv[k % n]).collect();
    Ok(NormalizedAdjacency { n, matrix })
}

fn transpose_last(tape: &mut Tape, z: Var) -> Result<Var> {
    let r = tape.shape(z).len();
    let mut axes: Vec<usize> = (0..r).collect();
    axes.swap(r - 2, r - 1);
    tape.permute(z, &axes)
}

/// Row softmax of `Z Z^T / sqrt(d)` for `z: [.., N, d]`.
pub fn spatial_dynamic_weights(tape: &mut Tape, z: Var) -> Result<Var> {
    let d = *tape.shape(z).last().unwrap();
    let zt = transpose_last(tape, z)?;
    let s = tape.matmul(z, zt)?;
    let s = tape.mul_scalar(s, 1.0 / (d as f64).sqrt());
    Ok(tape.softmax(s))
}

/// Correlation-information graph layer. Inputs are `[.., N, d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cignn {
    pub weight: ParamId,
    pub psi: Vec<ParamId>,
    pub omega: ParamId,
    scorr: Vec<Tensor>,
    adjacency: Tensor,
}

impl Cignn {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        d: usize,
        scorr: &SCorrTensor,
        adjacency: &NormalizedAdjacency,
        rng: &mut R,
    ) -> Result<Self> {
        let (n, c) = (scorr.sensors(), scorr.attributes());
        if adjacency.sensors() != n {
            return Err(Error::dim(format!(
                "correlation covers {n} sensors, adjacency {}",
                adjacency.sensors()
            )));
        }
        let weight = store.add_glorot(format!("{name}.weight"), &[d, d], d, d, rng);
        let psi = (0..c)
            .map(|ch| store.add(format!("{name}.psi{ch}"), Tensor::scalar(1.0 / c as f64)))
            .collect();
        let omega = store.add(format!("{name}.omega"), Tensor::scalar(1.0));
        let scorr = (0..c)
            .map(|ch| Tensor::new(&[n, n], scorr.attribute(ch).to_vec()).expect("square slab"))
            .collect();
        Ok(Self {
            weight,
            psi,
            omega,
            scorr,
            adjacency: adjacency.to_tensor(),
        })
    }

    pub fn sensors(&self) -> usize {
        self.adjacency.shape()[0]
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, z: Var) -> Result<Var> {
        let shape = tape.shape(z);
        if shape.len() < 2 || shape[shape.len() - 2] != self.sensors() {
            return Err(Error::dim(format!(
                "graph layer over {} sensors got input {shape:?}",
                self.sensors()
            )));
        }
        let w = tape.param(store, self.weight);
        let zw = tape.matmul(z, w)?;
        let sw = spatial_dynamic_weights(tape, z)?;
        let dyn_zw = tape.matmul(sw, zw)?;

        let a = tape.constant(self.adjacency.clone());
        let structural = tape.matmul(a, zw)?;
        let structural = tape.relu(structural);
        let omega = tape.param(store, self.omega);
        let mut acc = tape.scale_by(structural, omega)?;

        for (slab, &psi) in self.scorr.iter().zip(&self.psi) {
            let s = tape.constant(slab.clone());
            let branch = tape.matmul(s, dyn_zw)?;
            let branch = tape.relu(branch);
            let p = tape.param(store, psi);
            let branch = tape.scale_by(branch, p)?;
            acc = tape.add(acc, branch)?;
        }
        Ok(acc)
    }
}

/// Value-level key reconstruction `K~_i = (1/C) sum_c sum_u w[i][u][c] K[idx[i][u][c]]`
/// for `k: [N, ..]`.
pub fn reconstruct_keys(topu: &TopUSCorr, k: &Tensor) -> Result<Tensor> {
    let n = topu.sensors();
    if k.shape()[0] != n {
        return Err(Error::dim(format!("keys for {} sensors, top-U for {n}", k.shape()[0])));
    }
    let row = k.numel() / n;
    let c = topu.attributes();
    let mut out = Tensor::zeros(k.shape());
    for i in 0..n {
        for u in 0..topu.top_u() {
            for ch in 0..c {
                let j = topu.index(i, u, ch);
                let w = topu.weight(i, u, ch) / c as f64;
                let src = &k.data()[j * row..(j + 1) * row];
                for (o, s) in out.data_mut()[i * row..(i + 1) * row].iter_mut().zip(src) {
                    *o += w * s;
                }
            }
        }
    }
    Ok(out)
}

/// Query/key projection: pointwise, or a temporal convolution that adds
/// local context.
#[derive(Debug, Clone, PartialEq)]
pub enum Projection {
    Linear(Linear),
    Conv(Conv1d),
}

impl Projection {
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        match self {
            Projection::Linear(l) => l.forward(tape, store, x),
            Projection::Conv(c) => c.forward(tape, store, x),
        }
    }
}

/// Where the query and key projections look in time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContextSpec {
    /// Convolution kernel; `None` for pointwise projections.
    pub kernel: Option<usize>,
    pub query: Padding,
    pub key: Padding,
}

impl ContextSpec {
    pub fn pointwise() -> Self {
        Self {
            kernel: None,
            query: Padding::Same,
            key: Padding::Same,
        }
    }
}

/// Correlation-information multi-head attention over `[N, L, d]` inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Ciatt {
    pub query: Projection,
    pub key: Projection,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
    pub d_model: usize,
}

/// Attention output together with its weights `[N, H, Lq, Lk]`.
#[derive(Debug, Clone, Copy)]
pub struct AttentionOutput {
    pub output: Var,
    pub weights: Var,
}

impl Ciatt {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        d_model: usize,
        heads: usize,
        context: ContextSpec,
        rng: &mut R,
    ) -> Result<Self> {
        if heads == 0 || !d_model.is_multiple_of(heads) {
            return Err(Error::config(format!("d_model {d_model} is not divisible by {heads} heads")));
        }
        let mut proj = |tag: &str, padding: Padding, rng: &mut R| -> Result<Projection> {
            Ok(match context.kernel {
                Some(k) => Projection::Conv(Conv1d::new(store, &format!("{name}.{tag}"), d_model, d_model, k, padding, rng)?),
                None => Projection::Linear(Linear::new(store, &format!("{name}.{tag}"), d_model, d_model, true, rng)),
            })
        };
        let query = proj("query", context.query, rng)?;
        let key = proj("key", context.key, rng)?;
        let value = Linear::new(store, &format!("{name}.value"), d_model, d_model, true, rng);
        let output = Linear::new(store, &format!("{name}.output"), d_model, d_model, true, rng);
        Ok(Self {
            query,
            key,
            value,
            output,
            heads,
            d_model,
        })
    }

    fn split_heads(&self, tape: &mut Tape, x: Var, axes: &[usize]) -> Result<Var> {
        let s = tape.shape(x).to_vec();
        let x = tape.reshape(x, &[s[0], s[1], self.heads, self.d_model / self.heads])?;
        tape.permute(x, axes)
    }

    /// `q_in: [N, Lq, d]`, `kv_in: [N, Lk, d]`; `mixing` is the `[N, N]`
    /// top-U mixing matrix. `causal` requires `Lq == Lk`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        q_in: Var,
        kv_in: Var,
        mixing: Var,
        causal: bool,
    ) -> Result<AttentionOutput> {
        let (sq, sk) = (tape.shape(q_in).to_vec(), tape.shape(kv_in).to_vec());
        if sq.len() != 3 || sk.len() != 3 || sq[0] != sk[0] || sq[2] != self.d_model || sk[2] != self.d_model {
            return Err(Error::dim(format!("attention inputs {sq:?} and {sk:?} incompatible")));
        }
        let (n, lq, lk) = (sq[0], sq[1], sk[1]);
        if tape.shape(mixing) != [n, n] {
            return Err(Error::dim(format!(
                "mixing matrix {:?} does not cover {n} sensors",
                tape.shape(mixing)
            )));
        }
        if causal && lq != lk {
            return Err(Error::dim("causal attention needs equal query and key lengths"));
        }
        let dh = self.d_model / self.heads;

        let q = self.query.forward(tape, store, q_in)?;
        let k = self.key.forward(tape, store, kv_in)?;
        let v = self.value.forward(tape, store, kv_in)?;

        let flat = tape.reshape(k, &[n, lk * self.d_model])?;
        let mixed = tape.matmul(mixing, flat)?;
        let k_tilde = tape.reshape(mixed, &[n, lk, self.d_model])?;

        let qh = self.split_heads(tape, q, &[0, 2, 1, 3])?;
        let kh = self.split_heads(tape, k_tilde, &[0, 2, 3, 1])?;
        let vh = self.split_heads(tape, v, &[0, 2, 1, 3])?;

        let scores = tape.matmul(qh, kh)?;
        let scores = tape.mul_scalar(scores, 1.0 / (dh as f64).sqrt());
        let weights = if causal {
            tape.softmax_masked(scores, &causal_mask(lq))?
        } else {
            tape.softmax(scores)
        };
        let ctx = tape.matmul(weights, vh)?;
        let ctx = tape.permute(ctx, &[0, 2, 1, 3])?;
        let ctx = tape.reshape(ctx, &[n, lq, self.d_model])?;
        let output = self.output.forward(tape, store, ctx)?;
        Ok(AttentionOutput { output, weights })
    }
}

/// Mixing matrix of a top-U table as a tensor.
pub fn mixing_tensor(topu: &TopUSCorr) -> Tensor {
    let n = topu.sensors();
    Tensor::new(&[n, n], topu.mixing_matrix()).expect("square matrix")
}
