//! Spatial correlation tensors: MIC between every pair of sensors, per
//! attribute, plus the top-U softmax form used for key reconstruction.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mic::pairwise_mic;
use crate::series::SpatioTemporalTensor;

pub const SCORR_MAGIC: &[u8; 4] = b"SCOR";
pub const SCORR_VERSION: u32 = 1;
const FLAG_DEGENERATE: u32 = 1;

/// `N x N x C` correlation degrees in `[0, 1]`, attribute-major:
/// index `(attr * n + i) * n + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SCorrTensor {
    n: usize,
    c: usize,
    degrees: Vec<f64>,
    degenerate: Vec<bool>,
}

impl SCorrTensor {
    /// Builds a tensor from raw degrees after checking the structural
    /// invariants (range, symmetry, unit diagonal).
    pub fn from_degrees(n: usize, c: usize, degrees: Vec<f64>) -> Result<Self> {
        if n == 0 || c == 0 || degrees.len() != n * n * c {
            return Err(Error::dim(format!(
                "expected {} degrees for N={n}, C={c}, got {}",
                n * n * c,
                degrees.len()
            )));
        }
        for ch in 0..c {
            for i in 0..n {
                for j in 0..n {
                    let v = degrees[(ch * n + i) * n + j];
                    if !(0.0..=1.0).contains(&v) {
                        return Err(Error::Domain(format!(
                            "degree {v} at ({i},{j},{ch}) outside [0, 1]"
                        )));
                    }
                    if v != degrees[(ch * n + j) * n + i] {
                        return Err(Error::Domain(format!("asymmetric at ({i},{j},{ch})")));
                    }
                }
                if degrees[(ch * n + i) * n + i] != 1.0 {
                    return Err(Error::Domain(format!("diagonal ({i},{i},{ch}) is not 1")));
                }
            }
        }
        Ok(Self {
            n,
            c,
            degrees,
            degenerate: vec![false; n * c],
        })
    }

    /// Identity correlation: every sensor related only to itself.
    pub fn identity(n: usize, c: usize) -> Self {
        let mut degrees = vec![0.0; n * n * c];
        for ch in 0..c {
            for i in 0..n {
                degrees[(ch * n + i) * n + i] = 1.0;
            }
        }
        Self {
            n,
            c,
            degrees,
            degenerate: vec![false; n * c],
        }
    }

    pub fn sensors(&self) -> usize {
        self.n
    }

    pub fn attributes(&self) -> usize {
        self.c
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, attr: usize) -> f64 {
        self.degrees[(attr * self.n + i) * self.n + j]
    }

    /// Row-major `N x N` slab of one attribute.
    pub fn attribute(&self, attr: usize) -> &[f64] {
        let nn = self.n * self.n;
        &self.degrees[attr * nn..(attr + 1) * nn]
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    /// Whether sensor `i` had zero variance in attribute `attr` when the
    /// tensor was computed. Always false for tensors read from disk.
    pub fn is_degenerate(&self, i: usize, attr: usize) -> bool {
        self.degenerate[attr * self.n + i]
    }

    /// Same tensor with sensors reordered: output sensor `k` is input
    /// sensor `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n;
        let mut out = self.clone();
        for ch in 0..self.c {
            for i in 0..n {
                for j in 0..n {
                    out.degrees[(ch * n + i) * n + j] = self.get(perm[i], perm[j], ch);
                }
                out.degenerate[ch * n + i] = self.is_degenerate(perm[i], ch);
            }
        }
        out
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let flags = if self.degenerate.iter().any(|&d| d) {
            FLAG_DEGENERATE
        } else {
            0
        };
        w.write_all(SCORR_MAGIC)?;
        for v in [SCORR_VERSION, self.n as u32, self.c as u32, flags] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &self.degrees {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != SCORR_MAGIC {
            return Err(Error::Format("not an SCorr file (bad magic)".into()));
        }
        let mut header = [0u32; 4];
        for h in header.iter_mut() {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            *h = u32::from_le_bytes(b);
        }
        let [version, n, c, _flags] = header;
        if version != SCORR_VERSION {
            return Err(Error::Format(format!("unsupported SCorr version {version}")));
        }
        let (n, c) = (n as usize, c as usize);
        let mut degrees = vec![0.0; n * n * c];
        let mut b = [0u8; 8];
        for d in degrees.iter_mut() {
            r.read_exact(&mut b)?;
            *d = f64::from_le_bytes(b);
        }
        Self::from_degrees(n, c, degrees)
    }

    /// CSV with columns `sensor_i,sensor_j,attribute,degree`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["sensor_i", "sensor_j", "attribute", "degree"])
            .map_err(csv_err)?;
        for ch in 0..self.c {
            for i in 0..self.n {
                for j in 0..self.n {
                    out.write_record(&[
                        i.to_string(),
                        j.to_string(),
                        ch.to_string(),
                        format!("{}", self.get(i, j, ch)),
                    ])
                    .map_err(csv_err)?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// Static spatial correlation over the full time span of `x`.
pub fn compute_scorr(x: &SpatioTemporalTensor, eta: f64) -> Result<SCorrTensor> {
    if x.timestamps() < 2 {
        return Err(Error::dim("spatial correlation needs at least 2 timestamps"));
    }
    let (n, c) = (x.sensors(), x.attributes());
    let per_attr: Vec<_> = (0..c)
        .into_par_iter()
        .map(|ch| {
            let columns: Vec<Vec<f64>> = (0..n).map(|i| x.column(i, ch)).collect();
            pairwise_mic(&columns, eta)
        })
        .collect::<Result<_>>()?;
    let mut degrees = Vec::with_capacity(n * n * c);
    let mut degenerate = Vec::with_capacity(n * c);
    for m in &per_attr {
        degrees.extend_from_slice(m.values());
        degenerate.extend((0..n).map(|i| m.is_degenerate(i)));
    }
    Ok(SCorrTensor {
        n,
        c,
        degrees,
        degenerate,
    })
}

/// Spatial correlation on sliding windows: one tensor per window start
/// `0, stride, 2 * stride, ...` while the window fits.
pub fn windowed_scorr(
    x: &SpatioTemporalTensor,
    window: usize,
    stride: usize,
    eta: f64,
) -> Result<Vec<SCorrTensor>> {
    if stride == 0 {
        return Err(Error::config("stride must be at least 1"));
    }
    if window > x.timestamps() {
        return Err(Error::dim(format!(
            "window {window} exceeds {} timestamps",
            x.timestamps()
        )));
    }
    let count = (x.timestamps() - window) / stride + 1;
    (0..count)
        .map(|k| compute_scorr(&x.slice_time(k * stride, window)?, eta))
        .collect()
}

/// Per sensor and attribute, the `u` most correlated sensors with their
/// softmax-normalized degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct TopUSCorr {
    n: usize,
    u: usize,
    c: usize,
    /// `N x U x C`, index `(i * u + k) * c + attr`.
    indices: Vec<usize>,
    weights: Vec<f64>,
}

impl TopUSCorr {
    pub fn sensors(&self) -> usize {
        self.n
    }

    pub fn top_u(&self) -> usize {
        self.u
    }

    pub fn attributes(&self) -> usize {
        self.c
    }

    #[inline]
    pub fn index(&self, i: usize, k: usize, attr: usize) -> usize {
        self.indices[(i * self.u + k) * self.c + attr]
    }

    #[inline]
    pub fn weight(&self, i: usize, k: usize, attr: usize) -> f64 {
        self.weights[(i * self.u + k) * self.c + attr]
    }

    /// Builds a table from `N x U x C` arrays laid out as `(i * u + k) * c + attr`.
    pub fn from_parts(n: usize, u: usize, c: usize, indices: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if n == 0 || u == 0 || c == 0 || u > n {
            return Err(Error::config(format!("invalid top-U table {n}x{u}x{c}")));
        }
        if indices.len() != n * u * c || weights.len() != n * u * c {
            return Err(Error::dim(format!("top-U table {n}x{u}x{c} needs {} entries", n * u * c)));
        }
        if indices.iter().any(|&j| j >= n) {
            return Err(Error::OutOfRange(format!("top-U index beyond {n} sensors")));
        }
        Ok(Self {
            n,
            u,
            c,
            indices,
            weights,
        })
    }

    /// Each sensor attends only to itself with weight 1.
    pub fn self_identity(n: usize, c: usize) -> Self {
        Self {
            n,
            u: 1,
            c,
            indices: (0..n).flat_map(|i| std::iter::repeat_n(i, c)).collect(),
            weights: vec![1.0; n * c],
        }
    }

    /// Dense `N x N` matrix `R` with `R[i][j] = (1/C) sum_c sum_u w[i][u][c] [idx == j]`,
    /// so that reconstructed keys are `R` applied along the sensor axis.
    pub fn mixing_matrix(&self) -> Vec<f64> {
        let n = self.n;
        let mut r = vec![0.0; n * n];
        let inv_c = 1.0 / self.c as f64;
        for i in 0..n {
            for ch in 0..self.c {
                for k in 0..self.u {
                    r[i * n + self.index(i, k, ch)] += inv_c * self.weight(i, k, ch);
                }
            }
        }
        r
    }
}

/// Selects the `u` largest degrees of every row (ties toward the lower
/// sensor index) and softmax-normalizes them.
pub fn top_u_normalize(s: &SCorrTensor, u: usize) -> Result<TopUSCorr> {
    let (n, c) = (s.n, s.c);
    if u == 0 || u > n {
        return Err(Error::config(format!("top-U must lie in [1, {n}], got {u}")));
    }
    let mut indices = vec![0usize; n * u * c];
    let mut weights = vec![0.0; n * u * c];
    let mut order: Vec<usize> = Vec::with_capacity(n);
    for ch in 0..c {
        for i in 0..n {
            order.clear();
            order.extend(0..n);
            order.sort_by(|&a, &b| s.get(i, b, ch).total_cmp(&s.get(i, a, ch)).then(a.cmp(&b)));
            let top = &order[..u];
            let peak = s.get(i, top[0], ch);
            let exps: Vec<f64> = top.iter().map(|&j| (s.get(i, j, ch) - peak).exp()).collect();
            let total: f64 = exps.iter().sum();
            for (k, (&j, e)) in top.iter().zip(&exps).enumerate() {
                indices[(i * u + k) * c + ch] = j;
                weights[(i * u + k) * c + ch] = e / total;
            }
        }
    }
    Ok(TopUSCorr {
        n,
        u,
        c,
        indices,
        weights,
    })
}
