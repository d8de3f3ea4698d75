//! Spectral matching over a correspondence set: pairwise 3D-consistency
//! compatibility matrix, principal eigenvector by power iteration, greedy
//! extraction of the main mutually-consistent cluster.

use rayon::prelude::*;
use serde::Serialize;

use crate::cloud::Point3;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct SpectralConfig {
    /// Inlier threshold: length-difference at or beyond which two
    /// correspondences are in hard conflict (affinity zero).
    pub tau: f64,
    /// The loop stops filtering once the surviving set is this small.
    pub min_cluster: usize,
    /// Power iteration convergence tolerance.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        SpectralConfig {
            tau: 0.1,
            min_cluster: 3,
            tol: 1e-8,
            max_iters: 1000,
        }
    }
}

/// Symmetric non-negative affinity matrix with zero diagonal.
#[derive(Debug, Clone)]
pub struct CompatibilityMatrix {
    pub n: usize,
    entries: Vec<f64>,
}

impl CompatibilityMatrix {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }
}

/// Result of the greedy main-cluster extraction.
#[derive(Debug, Clone)]
pub struct ClusterResult {
    /// Indices of the kept correspondences, in acceptance order.
    pub kept: Vec<usize>,
    pub eigvec: Vec<f64>,
    /// Set when the compatibility matrix was all-zero.
    pub zero_eigenvalue: bool,
}

/// Pairwise affinity from length preservation: for correspondences
/// a = (pₛᵃ, p_tᵃ) and b = (pₛᵇ, p_tᵇ),
/// δ = | ‖pₛᵃ−pₛᵇ‖ − ‖p_tᵃ−p_tᵇ‖ | and the entry is max(0, 1 − δ²/τ²).
/// Two correspondences sharing a source or target point are in hard
/// conflict (entry 0), as is the diagonal.
pub fn compatibility(corrs: &[(Point3, Point3)], tau: f64) -> Result<CompatibilityMatrix> {
    if corrs.is_empty() {
        return Err(Error::InvalidParameter {
            name: "corrs",
            reason: "need at least one correspondence".into(),
        });
    }
    if tau <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "tau",
            reason: format!("{tau} must be > 0"),
        });
    }
    let n = corrs.len();
    let mut entries = vec![0.0f64; n * n];
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (si, ti) = &corrs[i];
            let mut row = vec![0.0f64; n];
            for (j, item) in row.iter_mut().enumerate() {
                if j == i {
                    continue;
                }
                let (sj, tj) = &corrs[j];
                if si == sj || ti == tj {
                    continue;
                }
                let ds = (si - sj).norm();
                let dt = (ti - tj).norm();
                let delta = (ds - dt).abs();
                *item = (1.0 - (delta * delta) / (tau * tau)).max(0.0);
            }
            row
        })
        .collect();
    for (i, row) in rows.into_iter().enumerate() {
        entries[i * n..(i + 1) * n].copy_from_slice(&row);
    }
    Ok(CompatibilityMatrix { n, entries })
}

/// Principal eigenvector by power iteration from the uniform start vector.
/// Returns the unit vector and whether the matrix was effectively zero.
pub fn principal_eigenvector(m: &CompatibilityMatrix, tol: f64, max_iters: usize) -> (Vec<f64>, bool) {
    let n = m.n;
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut y = vec![0.0f64; n];
    for _ in 0..max_iters {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            let row = &m.entries[i * n..(i + 1) * n];
            for (xj, mij) in x.iter().zip(row) {
                acc += mij * xj;
            }
            *yi = acc;
        }
        let lambda = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if lambda == 0.0 {
            // all-zero matrix: no dominant direction
            return (vec![1.0 / (n as f64).sqrt(); n], true);
        }
        let mut residual = 0.0f64;
        for (yi, xi) in y.iter().zip(&x) {
            let r = yi - lambda * xi;
            residual += r * r;
        }
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / lambda;
        }
        if residual.sqrt() <= tol * lambda {
            break;
        }
    }
    (x, false)
}

/// Greedy cluster extraction: repeatedly accept the remaining index with the
/// largest eigenvector value (ties to the lower index), then drop every
/// remaining candidate in hard conflict (zero affinity) with it. Stops when
/// the top value reaches zero or when the surviving pool (accepted plus
/// remaining) is no larger than `min_cluster`, in which case the survivors
/// are all kept.
pub fn greedy_main_cluster(
    m: &CompatibilityMatrix,
    cfg: &SpectralConfig,
) -> ClusterResult {
    let n = m.n;
    let (eigvec, zero_eigenvalue) = principal_eigenvector(m, cfg.tol, cfg.max_iters);
    let mut alive: Vec<bool> = vec![true; n];
    let mut alive_count = n;
    let mut kept: Vec<usize> = Vec::new();

    loop {
        if alive_count == 0 {
            break;
        }
        if kept.len() + alive_count <= cfg.min_cluster {
            // pool shrank to the floor: keep everything still alive
            for (i, a) in alive.iter().enumerate() {
                if *a {
                    kept.push(i);
                }
            }
            break;
        }
        let mut best: Option<usize> = None;
        for (i, a) in alive.iter().enumerate() {
            if *a && best.map_or(true, |b| eigvec[i] > eigvec[b]) {
                best = Some(i);
            }
        }
        let best = best.unwrap();
        if eigvec[best] <= 1e-12 {
            break;
        }
        alive[best] = false;
        alive_count -= 1;
        kept.push(best);
        for (j, a) in alive.iter_mut().enumerate() {
            if *a && m.get(best, j) == 0.0 {
                *a = false;
                alive_count -= 1;
            }
        }
    }

    ClusterResult {
        kept,
        eigvec,
        zero_eigenvalue,
    }
}

/// Convenience composition: compatibility → eigenvector → greedy cluster.
/// Returns indices into `corrs`, in acceptance order.
pub fn spectral_filter(corrs: &[(Point3, Point3)], cfg: &SpectralConfig) -> Result<Vec<usize>> {
    let m = compatibility(corrs, cfg.tau)?;
    Ok(greedy_main_cluster(&m, cfg).kept)
}
