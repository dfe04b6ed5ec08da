//! Maximal information coefficient over equal-count grid partitions.
//!
//! For every admissible grid shape `A x B` with `A * B < M^eta`, each axis is
//! cut at its equal-count rank quantiles: the point of stable rank `r` lands
//! in bin `floor(r * A / M)`. The score of a shape is its mutual information
//! in bits divided by `log2(min(A, B))`, and the coefficient is the maximum
//! over shapes. Because only ranks enter the computation the result is
//! invariant under strictly increasing transforms of either axis.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Default partition exponent.
pub const DEFAULT_ETA: f64 = 0.6;

/// One grid shape together with the bound it must respect.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub a_bins: usize,
    pub b_bins: usize,
    pub cell_bound: f64,
}

impl GridSpec {
    pub fn new(a_bins: usize, b_bins: usize, cell_bound: f64) -> Result<Self> {
        if a_bins < 2 || b_bins < 2 {
            return Err(Error::Partition(format!(
                "grid needs at least 2 bins per axis, got {a_bins}x{b_bins}"
            )));
        }
        if ((a_bins * b_bins) as f64).partial_cmp(&cell_bound) != Some(Ordering::Less) {
            return Err(Error::Partition(format!(
                "grid {a_bins}x{b_bins} violates cell bound {cell_bound}"
            )));
        }
        Ok(Self {
            a_bins,
            b_bins,
            cell_bound,
        })
    }

    /// The bound `M^eta` for a sequence of length `m`.
    pub fn bound_for(m: usize, eta: f64) -> f64 {
        (m as f64).powf(eta)
    }
}

/// Result of a single MIC evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MicScore {
    pub value: f64,
    /// Set when either input had zero variance; `value` is then 0.
    pub degenerate: bool,
}

fn check_eta(eta: f64) -> Result<()> {
    if eta.is_finite() && eta > 0.0 && eta <= 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!("eta must lie in (0, 1], got {eta}")))
    }
}

/// All grid shapes `(A, B)` with `A, B >= 2` and `A * B < m^eta`.
///
/// When the bound admits no grid at all (`m^eta <= 4`, i.e. very short
/// sequences) the 2x2 grid is used as the floor.
pub fn admissible_shapes(m: usize, eta: f64) -> Vec<(usize, usize)> {
    let bound = GridSpec::bound_for(m, eta);
    let mut shapes = Vec::new();
    let mut a = 2;
    while ((2 * a) as f64) < bound {
        let mut b = 2;
        while ((a * b) as f64) < bound {
            shapes.push((a, b));
            b += 1;
        }
        a += 1;
    }
    if shapes.is_empty() {
        shapes.push((2, 2));
    }
    shapes
}

/// A validated sequence reduced to its stable ranks.
///
/// Ties are ordered by position, so equal values may fall into different
/// bins; this keeps the assignment deterministic.
#[derive(Debug, Clone)]
pub struct RankedSequence {
    ranks: Vec<u32>,
    degenerate: bool,
}

impl RankedSequence {
    pub fn new(values: &[f64]) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::dim(format!(
                "sequence needs at least 2 values, got {}",
                values.len()
            )));
        }
        if values.len() > u32::MAX as usize {
            return Err(Error::dim("sequence too long"));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite value at index {pos}")));
        }
        let degenerate = values.iter().all(|&v| v == values[0]);
        let mut order: Vec<u32> = (0..values.len() as u32).collect();
        order.sort_by(|&i, &j| {
            values[i as usize]
                .partial_cmp(&values[j as usize])
                .unwrap_or(Ordering::Equal)
                .then(i.cmp(&j))
        });
        let mut ranks = vec![0u32; values.len()];
        for (r, &i) in order.iter().enumerate() {
            ranks[i as usize] = r as u32;
        }
        Ok(Self { ranks, degenerate })
    }

    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    pub fn ranks(&self) -> &[u32] {
        &self.ranks
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }
}

/// Precomputed state shared by every pair of sequences of one length.
#[derive(Debug, Clone)]
pub struct MicKernel {
    m: usize,
    /// Shapes grouped by the y-axis bin count: `(b, [a...])`.
    by_b: Vec<(usize, Vec<usize>)>,
    /// `n * log2(n)` for `n = 0..=m`.
    nlogn: Vec<f64>,
    log2_m: f64,
}

impl MicKernel {
    pub fn new(m: usize, eta: f64) -> Result<Self> {
        check_eta(eta)?;
        if m < 2 {
            return Err(Error::dim(format!("sequence length {m} < 2")));
        }
        let mut by_b: Vec<(usize, Vec<usize>)> = Vec::new();
        for (a, b) in admissible_shapes(m, eta) {
            match by_b.iter_mut().find(|(bb, _)| *bb == b) {
                Some((_, list)) => list.push(a),
                None => by_b.push((b, vec![a])),
            }
        }
        by_b.sort_by_key(|(b, _)| *b);
        let nlogn = (0..=m)
            .map(|n| if n == 0 { 0.0 } else { n as f64 * (n as f64).log2() })
            .collect();
        Ok(Self {
            m,
            by_b,
            nlogn,
            log2_m: (m as f64).log2(),
        })
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn score(&self, x: &RankedSequence, y: &RankedSequence) -> Result<MicScore> {
        if x.len() != self.m || y.len() != self.m {
            return Err(Error::dim(format!(
                "kernel built for length {}, got {} and {}",
                self.m,
                x.len(),
                y.len()
            )));
        }
        if x.degenerate || y.degenerate {
            return Ok(MicScore {
                value: 0.0,
                degenerate: true,
            });
        }
        // Canonical argument order makes mic(x, y) and mic(y, x) run the
        // exact same arithmetic.
        let (x, y) = match x.ranks.cmp(&y.ranks) {
            Ordering::Greater => (y, x),
            _ => (x, y),
        };
        let m = self.m;
        // Identical rank orders are a noiseless monotone relationship.
        if x.ranks == y.ranks {
            return Ok(MicScore {
                value: 1.0,
                degenerate: false,
            });
        }
        let mut y_by_x = vec![0u32; m];
        for (rx, ry) in x.ranks.iter().zip(&y.ranks) {
            y_by_x[*rx as usize] = *ry;
        }

        let mut best = 0.0f64;
        let mut y_bins = vec![0u32; m];
        let mut counts: Vec<u32> = Vec::new();
        let mut col_counts: Vec<u32> = Vec::new();
        for (b, a_list) in &self.by_b {
            let b = *b;
            for (slot, &ry) in y_bins.iter_mut().zip(&y_by_x) {
                *slot = (ry as u64 * b as u64 / m as u64) as u32;
            }
            col_counts.clear();
            col_counts.resize(b, 0);
            for &yb in &y_bins {
                col_counts[yb as usize] += 1;
            }
            let col_term: f64 = col_counts.iter().map(|&n| self.nlogn[n as usize]).sum();

            for &a in a_list {
                counts.clear();
                counts.resize(a * b, 0);
                let mut row_term = 0.0;
                for xb in 0..a {
                    let lo = cut(xb, a, m);
                    let hi = cut(xb + 1, a, m);
                    row_term += self.nlogn[hi - lo];
                    let row = &mut counts[xb * b..(xb + 1) * b];
                    for &yb in &y_bins[lo..hi] {
                        row[yb as usize] += 1;
                    }
                }
                let cell_term: f64 = counts.iter().map(|&n| self.nlogn[n as usize]).sum();
                let mi = (cell_term - row_term - col_term) / m as f64 + self.log2_m;
                let score = mi / (a.min(b) as f64).log2();
                if score > best {
                    best = score;
                }
            }
        }
        Ok(MicScore {
            value: best.clamp(0.0, 1.0),
            degenerate: false,
        })
    }
}

/// First rank index belonging to bin `j` of an `parts`-way equal-count cut.
#[inline]
fn cut(j: usize, parts: usize, m: usize) -> usize {
    (j * m).div_ceil(parts)
}

/// Maximal information coefficient of two equal-length sequences.
pub fn mic(x: &[f64], y: &[f64], eta: f64) -> Result<MicScore> {
    if x.len() != y.len() {
        return Err(Error::dim(format!(
            "sequence lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    let kernel = MicKernel::new(x.len(), eta)?;
    kernel.score(&RankedSequence::new(x)?, &RankedSequence::new(y)?)
}

/// Mutual information (bits) of the empirical distribution on a grid with
/// explicit value boundaries.
///
/// `x_edges` has `a_bins + 1` strictly increasing entries covering the range
/// of `x`; bins are half-open except the last, which is closed.
pub fn mutual_information(
    x: &[f64],
    y: &[f64],
    grid: &GridSpec,
    x_edges: &[f64],
    y_edges: &[f64],
) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::dim(format!(
            "sequence lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::dim("empty sequences"));
    }
    let xl = assign_bins(x, x_edges, grid.a_bins, "x")?;
    let yl = assign_bins(y, y_edges, grid.b_bins, "y")?;
    let (a, b) = (grid.a_bins, grid.b_bins);
    let mut joint = vec![0usize; a * b];
    let mut row = vec![0usize; a];
    let mut col = vec![0usize; b];
    for (&i, &j) in xl.iter().zip(&yl) {
        joint[i * b + j] += 1;
        row[i] += 1;
        col[j] += 1;
    }
    let m = x.len() as f64;
    let mut mi = 0.0;
    for i in 0..a {
        for j in 0..b {
            let n = joint[i * b + j];
            if n == 0 {
                continue;
            }
            let q = n as f64 / m;
            let qa = row[i] as f64 / m;
            let qb = col[j] as f64 / m;
            mi += q * (q / (qa * qb)).log2();
        }
    }
    Ok(mi.max(0.0))
}

fn assign_bins(values: &[f64], edges: &[f64], bins: usize, axis: &str) -> Result<Vec<usize>> {
    if edges.len() != bins + 1 {
        return Err(Error::Partition(format!(
            "{axis}: expected {} edges for {bins} bins, got {}",
            bins + 1,
            edges.len()
        )));
    }
    if edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Partition(format!(
            "{axis}: edges must be strictly increasing"
        )));
    }
    let (lo, hi) = (edges[0], edges[bins]);
    values
        .iter()
        .map(|&v| {
            if !(v >= lo && v <= hi) {
                return Err(Error::Partition(format!(
                    "{axis}: value {v} outside edge range [{lo}, {hi}]"
                )));
            }
            // Index of the last edge <= v, capped so the top edge is closed.
            let idx = edges.partition_point(|&e| e <= v) - 1;
            Ok(idx.min(bins - 1))
        })
        .collect()
}

/// Symmetric matrix of pairwise MIC scores.
#[derive(Debug, Clone, PartialEq)]
pub struct MicMatrix {
    n: usize,
    values: Vec<f64>,
    degenerate: Vec<bool>,
}

impl MicMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Whether column `i` had zero variance.
    pub fn is_degenerate(&self, i: usize) -> bool {
        self.degenerate[i]
    }
}

/// MIC between every pair of columns.
///
/// The diagonal is 1 by convention (every sequence fully determines itself);
/// off-diagonal cells touching a zero-variance column are 0. The upper
/// triangle is evaluated in parallel on the current rayon pool and each cell
/// is written exactly once, so the result does not depend on the schedule.
pub fn pairwise_mic<C>(columns: &[C], eta: f64) -> Result<MicMatrix>
where
    C: AsRef<[f64]> + Sync,
{
    check_eta(eta)?;
    let n = columns.len();
    if n == 0 {
        return Ok(MicMatrix {
            n: 0,
            values: Vec::new(),
            degenerate: Vec::new(),
        });
    }
    let m = columns[0].as_ref().len();
    if let Some(bad) = columns.iter().position(|c| c.as_ref().len() != m) {
        return Err(Error::dim(format!(
            "column {bad} has length {}, expected {m}",
            columns[bad].as_ref().len()
        )));
    }
    let ranked: Vec<RankedSequence> = columns
        .par_iter()
        .map(|c| RankedSequence::new(c.as_ref()))
        .collect::<Result<_>>()?;
    let kernel = MicKernel::new(m, eta)?;

    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let scores: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| kernel.score(&ranked[i], &ranked[j]).map(|s| s.value))
        .collect::<Result<_>>()?;

    let mut values = vec![0.0; n * n];
    for i in 0..n {
        values[i * n + i] = 1.0;
    }
    for (&(i, j), &s) in pairs.iter().zip(&scores) {
        values[i * n + j] = s;
        values[j * n + i] = s;
    }
    Ok(MicMatrix {
        n,
        values,
        degenerate: ranked.iter().map(|r| r.degenerate).collect(),
    })
}
