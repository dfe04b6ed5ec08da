//! Straight-line forward pass over plain vectors, reading parameters by
//! name. Shares no code with the tape engine.

use stcorr::scorr::top_u_normalize;
use stcorr::{Model, NormalizedAdjacency, SCorrTensor};

struct P<'a> {
    model: &'a Model,
}

impl<'a> P<'a> {
    fn get(&self, name: &str) -> &'a [f64] {
        let id = self.model.store.find(name).unwrap_or_else(|| panic!("missing {name}"));
        self.model.store.get(id).value.data()
    }
}

/// `[rows, din] x [din, dout] + b`.
fn linear(x: &[f64], rows: usize, din: usize, dout: usize, w: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; rows * dout];
    for r in 0..rows {
        for o in 0..dout {
            let mut acc = b[o];
            for i in 0..din {
                acc += x[r * din + i] * w[i * dout + o];
            }
            out[r * dout + o] = acc;
        }
    }
    out
}

/// Per sensor sequence `[n, l, d]`, kernel `[k, d, d]`.
#[allow(clippy::too_many_arguments)]
fn conv(x: &[f64], n: usize, l: usize, d: usize, w: &[f64], b: &[f64], k: usize, causal: bool) -> Vec<f64> {
    let left = if causal { k - 1 } else { (k - 1) / 2 } as isize;
    let mut out = vec![0.0; n * l * d];
    for s in 0..n {
        for t in 0..l {
            for o in 0..d {
                let mut acc = b[o];
                for j in 0..k {
                    let src = t as isize + j as isize - left;
                    if src < 0 || src >= l as isize {
                        continue;
                    }
                    for i in 0..d {
                        acc += x[(s * l + src as usize) * d + i] * w[(j * d + i) * d + o];
                    }
                }
                out[(s * l + t) * d + o] = acc;
            }
        }
    }
    out
}

fn layer_norm(x: &mut [f64], d: usize, g: &[f64], b: &[f64]) {
    for row in x.chunks_mut(d) {
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
        let s = (var + 1e-5).sqrt();
        for j in 0..d {
            row[j] = (row[j] - mean) / s * g[j] + b[j];
        }
    }
}

fn softmax(v: &mut [f64], allowed: usize) {
    let m = v[..allowed].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (j, x) in v.iter_mut().enumerate() {
        *x = if j < allowed { (*x - m).exp() } else { 0.0 };
        total += *x;
    }
    for x in v.iter_mut() {
        *x /= total;
    }
}

struct Ctx<'a> {
    p: P<'a>,
    n: usize,
    d: usize,
    heads: usize,
    kernel: Option<usize>,
    mixing: Vec<f64>,
    scorr: &'a SCorrTensor,
    adj: &'a [f64],
}

impl Ctx<'_> {
    fn project(&self, name: &str, x: &[f64], l: usize, causal: bool) -> Vec<f64> {
        let w = self.p.get(&format!("{name}.weight"));
        let b = self.p.get(&format!("{name}.bias"));
        match self.kernel {
            Some(k) => conv(x, self.n, l, self.d, w, b, k, causal),
            None => linear(x, self.n * l, self.d, self.d, w, b),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn attention(&self, name: &str, q_in: &[f64], lq: usize, kv_in: &[f64], lk: usize, q_causal: bool, k_causal: bool, mask: bool) -> Vec<f64> {
        let (n, d) = (self.n, self.d);
        let q = self.project(&format!("{name}.query"), q_in, lq, q_causal);
        let k = self.project(&format!("{name}.key"), kv_in, lk, k_causal);
        let v = linear(kv_in, n * lk, d, d, self.p.get(&format!("{name}.value.weight")), self.p.get(&format!("{name}.value.bias")));
        let mut kt = vec![0.0; n * lk * d];
        for i in 0..n {
            for j in 0..n {
                let m = self.mixing[i * n + j];
                for x in 0..lk * d {
                    kt[i * lk * d + x] += m * k[j * lk * d + x];
                }
            }
        }
        let dh = d / self.heads;
        let mut cat = vec![0.0; n * lq * d];
        for s in 0..n {
            for h in 0..self.heads {
                for t in 0..lq {
                    let mut sc: Vec<f64> = (0..lk)
                        .map(|u| {
                            (0..dh).map(|x| q[(s * lq + t) * d + h * dh + x] * kt[(s * lk + u) * d + h * dh + x]).sum::<f64>()
                                / (dh as f64).sqrt()
                        })
                        .collect();
                    softmax(&mut sc, if mask { t + 1 } else { lk });
                    for x in 0..dh {
                        cat[(s * lq + t) * d + h * dh + x] = (0..lk).map(|u| sc[u] * v[(s * lk + u) * d + h * dh + x]).sum();
                    }
                }
            }
        }
        linear(&cat, n * lq, d, d, self.p.get(&format!("{name}.output.weight")), self.p.get(&format!("{name}.output.bias")))
    }

    /// Graph layer applied independently at each of `l` steps of `[n, l, d]`.
    fn graph(&self, name: &str, x: &[f64], l: usize) -> Vec<f64> {
        let (n, d) = (self.n, self.d);
        let w = self.p.get(&format!("{name}.weight"));
        let omega = self.p.get(&format!("{name}.omega"))[0];
        let mut out = vec![0.0; n * l * d];
        for t in 0..l {
            let z: Vec<f64> = (0..n * d).map(|q| x[((q / d) * l + t) * d + q % d]).collect();
            let zw = linear(&z, n, d, d, w, &vec![0.0; d]);
            let mut sw = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    sw[i * n + j] = (0..d).map(|k| z[i * d + k] * z[j * d + k]).sum::<f64>() / (d as f64).sqrt();
                }
                softmax(&mut sw[i * n..(i + 1) * n], n);
            }
            let mm = |a: &[f64], b: &[f64]| -> Vec<f64> {
                (0..n * d).map(|x| (0..n).map(|j| a[(x / d) * n + j] * b[j * d + x % d]).sum()).collect()
            };
            let swzw = mm(&sw, &zw);
            let mut res: Vec<f64> = mm(self.adj, &zw).iter().map(|v| omega * v.max(0.0)).collect();
            for ch in 0..self.scorr.attributes() {
                let psi = self.p.get(&format!("{name}.psi{ch}"))[0];
                for (r, v) in res.iter_mut().zip(mm(self.scorr.attribute(ch), &swzw)) {
                    *r += psi * v.max(0.0);
                }
            }
            for i in 0..n {
                for k in 0..d {
                    out[(i * l + t) * d + k] = res[i * d + k];
                }
            }
        }
        out
    }

    fn residual_norm(&self, name: &str, h: &mut [f64], delta: &[f64]) {
        for (a, b) in h.iter_mut().zip(delta) {
            *a += b;
        }
        layer_norm(h, self.d, self.p.get(&format!("{name}.gain")), self.p.get(&format!("{name}.bias")));
    }

    fn embed(&self, x: &[f64], l: usize, c: usize, time: &str) -> Vec<f64> {
        let (n, d) = (self.n, self.d);
        let w = self.p.get("input.weight");
        let b = self.p.get("input.bias");
        let sp = self.p.get("spatial_embedding");
        let te = self.p.get(time);
        let mut h = vec![0.0; n * l * d];
        for s in 0..n {
            for t in 0..l {
                for o in 0..d {
                    let mut acc = b[o] + sp[s * d + o] + te[t * d + o];
                    for ch in 0..c {
                        acc += x[(t * n + s) * c + ch] * w[ch * d + o];
                    }
                    h[(s * l + t) * d + o] = acc;
                }
            }
        }
        h
    }
}

/// Teacher-forced forecasts `[L * N]` (timestamp-major) for normalized
/// inputs `enc: [T, N, C]` and `dec: [L, N, C]`.
pub fn forward(model: &Model, scorr: &SCorrTensor, adj: &NormalizedAdjacency, enc: &[f64], dec: &[f64]) -> Vec<f64> {
    let cfg = model.config();
    let n = scorr.sensors();
    let c = scorr.attributes();
    let d = cfg.d_model;
    let topu = top_u_normalize(scorr, cfg.top_u).unwrap();
    let mut mixing = vec![0.0; n * n];
    for i in 0..n {
        for u in 0..topu.top_u() {
            for ch in 0..c {
                mixing[i * n + topu.index(i, u, ch)] += topu.weight(i, u, ch) / c as f64;
            }
        }
    }
    let cx = Ctx {
        p: P { model },
        n,
        d,
        heads: cfg.heads,
        kernel: cfg.context_conv.then_some(cfg.kernel_size),
        mixing,
        scorr,
        adj: adj.matrix(),
    };
    let t_enc = enc.len() / (n * c);
    let l = cfg.horizon;

    let mut h = cx.embed(enc, t_enc, c, "encoder_time_embedding");
    for e in 0..cfg.encoder_layers {
        let p = format!("encoder{e}");
        let a = cx.attention(&format!("{p}.attention"), &h, t_enc, &h, t_enc, false, false, false);
        cx.residual_norm(&format!("{p}.norm_attention"), &mut h, &a);
        let g = cx.graph(&format!("{p}.graph"), &h, t_enc);
        cx.residual_norm(&format!("{p}.norm_graph"), &mut h, &g);
    }
    let memory = h;

    let mut y = cx.embed(dec, l, c, "decoder_time_embedding");
    for e in 0..cfg.decoder_layers {
        let p = format!("decoder{e}");
        let a = cx.attention(&format!("{p}.self_attention"), &y, l, &y, l, true, true, true);
        cx.residual_norm(&format!("{p}.norm_self"), &mut y, &a);
        let a = cx.attention(&format!("{p}.cross_attention"), &y, l, &memory, t_enc, true, false, false);
        cx.residual_norm(&format!("{p}.norm_cross"), &mut y, &a);
        let g = cx.graph(&format!("{p}.graph"), &y, l);
        cx.residual_norm(&format!("{p}.norm_graph"), &mut y, &g);
    }
    let head = linear(&y, n * l, d, 1, cx.p.get("head.weight"), cx.p.get("head.bias"));
    (0..l * n).map(|x| head[(x % n) * l + x / n]).collect()
}
