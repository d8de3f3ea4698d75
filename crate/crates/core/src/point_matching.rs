//! Dense matching inside a matched patch pair: scaled feature cost matrix,
//! Sinkhorn with a dustbin row/column, and mutual top-K extraction.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::sampler::NodeClass;

#[derive(Debug, Clone, Serialize)]
pub struct PointMatchConfig {
    /// Dustbin score. Fixed (not learned): training is out of scope here.
    pub alpha: f64,
    pub sinkhorn_iters: usize,
    /// Mutual top-K rank bound.
    pub k: usize,
}

impl Default for PointMatchConfig {
    fn default() -> Self {
        PointMatchConfig {
            alpha: 0.0,
            sinkhorn_iters: 100,
            k: 3,
        }
    }
}

/// Feature cost matrix for one patch pair, scaled by 1/√d.
#[derive(Debug, Clone)]
pub struct CostMatrix {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<f64>,
    /// Class tag retained for reporting; both classes share the formula
    /// under hand-crafted features.
    pub class: NodeClass,
}

impl CostMatrix {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.cols + j]
    }
}

/// M = F̃_P F̃_Qᵀ / √d over the patch members' descriptors.
pub fn patch_cost(fp: &FeatureSet, fq: &FeatureSet, class: NodeClass) -> Result<CostMatrix> {
    if fp.is_empty() || fq.is_empty() {
        return Err(Error::EmptyPatch);
    }
    if fp.dim != fq.dim {
        return Err(Error::DimensionMismatch {
            left: fp.dim,
            right: fq.dim,
        });
    }
    let scale = 1.0 / (fp.dim as f64).sqrt();
    let (rows, cols) = (fp.len(), fq.len());
    let mut entries = vec![0.0f64; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            entries[i * cols + j] = fp.descriptors[i].dot(&fq.descriptors[j]) * scale;
        }
    }
    Ok(CostMatrix {
        rows,
        cols,
        entries,
        class,
    })
}

/// Soft assignment over the dustbin-augmented score matrix. The inner m×n
/// block is the confidence matrix.
#[derive(Debug, Clone)]
pub struct AssignmentMatrix {
    /// Inner block rows/cols (dustbin excluded).
    pub rows: usize,
    pub cols: usize,
    /// (rows+1) × (cols+1), row-major, dustbin last.
    pub entries: Vec<f64>,
}

impl AssignmentMatrix {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * (self.cols + 1) + j]
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    let vals: Vec<f64> = values.collect();
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + vals.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Log-domain Sinkhorn with dustbin score `alpha` and the slack marginal
/// convention: each real row and column carries unit mass, the dustbin row
/// absorbs up to `n` and the dustbin column up to `m`, so unmatched points
/// route to the dustbin instead of being forced onto bad partners.
pub fn sinkhorn(m: &CostMatrix, alpha: f64, iters: usize) -> Result<AssignmentMatrix> {
    if iters == 0 {
        return Err(Error::InvalidParameter {
            name: "iters",
            reason: "need at least one iteration".into(),
        });
    }
    let (rows, cols) = (m.rows, m.cols);
    let (ar, ac) = (rows + 1, cols + 1);
    let mut z = vec![alpha; ar * ac];
    for i in 0..rows {
        for j in 0..cols {
            z[i * ac + j] = m.get(i, j);
        }
    }
    let mut log_r = vec![0.0f64; ar];
    log_r[rows] = (cols as f64).ln();
    let mut log_c = vec![0.0f64; ac];
    log_c[cols] = (rows as f64).ln();

    let mut u = vec![0.0f64; ar];
    let mut v = vec![0.0f64; ac];
    for _ in 0..iters {
        for i in 0..ar {
            let lse = log_sum_exp((0..ac).map(|j| z[i * ac + j] + v[j]));
            u[i] = log_r[i] - lse;
        }
        for j in 0..ac {
            let lse = log_sum_exp((0..ar).map(|i| z[i * ac + j] + u[i]));
            v[j] = log_c[j] - lse;
        }
    }

    let mut entries = vec![0.0f64; ar * ac];
    for i in 0..ar {
        for j in 0..ac {
            entries[i * ac + j] = (z[i * ac + j] + u[i] + v[j]).exp();
        }
    }
    Ok(AssignmentMatrix {
        rows,
        cols,
        entries,
    })
}

/// Point pair (i, j) is selected iff its confidence ranks among the k
/// largest of row i and of column j, dustbin excluded. Returns row-major
/// (i, j, confidence) triples.
pub fn mutual_top_k(s: &AssignmentMatrix, k: usize) -> Vec<(usize, usize, f64)> {
    if k == 0 {
        return Vec::new();
    }
    let (rows, cols) = (s.rows, s.cols);
    // k-th largest value per row and per column of the inner block
    let row_thresh: Vec<f64> = (0..rows)
        .map(|i| {
            let mut vals: Vec<f64> = (0..cols).map(|j| s.get(i, j)).collect();
            vals.sort_by(|a, b| b.total_cmp(a));
            vals.get(k - 1).copied().unwrap_or(f64::NEG_INFINITY)
        })
        .collect();
    let col_thresh: Vec<f64> = (0..cols)
        .map(|j| {
            let mut vals: Vec<f64> = (0..rows).map(|i| s.get(i, j)).collect();
            vals.sort_by(|a, b| b.total_cmp(a));
            vals.get(k - 1).copied().unwrap_or(f64::NEG_INFINITY)
        })
        .collect();
    let mut picks = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            let val = s.get(i, j);
            if val >= row_thresh[i] && val >= col_thresh[j] {
                picks.push((i, j, val));
            }
        }
    }
    picks
}
