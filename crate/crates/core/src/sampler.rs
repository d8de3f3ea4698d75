//! Hybrid node sampling: salient keypoints from weighted-covariance
//! eigen-analysis plus non-maximum suppression, backfilled with uniformly
//! distributed points in regions the salient set does not cover.

use std::collections::HashMap;

use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::Serialize;

use crate::cloud::{dist2, Point3, PointCloud};
use crate::error::{Error, Result};
use crate::index::SpatialIndex;

/// Node class label carried through patch matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NodeClass {
    Salient,
    NonSalient,
}

/// Eigen-analysis result for one candidate point.
#[derive(Debug, Clone)]
pub struct SaliencyRecord {
    pub point_id: usize,
    /// Descending eigenvalues of the distance-weighted neighborhood covariance.
    pub eigenvalues: [f64; 3],
    /// Saliency score: the smallest eigenvalue.
    pub v: f64,
    pub passes_ratio_test: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SamplerConfig {
    /// Covariance neighborhood radius.
    pub r: f64,
    /// Eigenvalue ratio thresholds: salient iff λ2/λ1 ≤ γ1 and λ3/λ2 ≤ γ2.
    pub gamma1: f64,
    pub gamma2: f64,
    /// Non-maximum suppression radius over accepted salient points.
    pub nms_radius: f64,
    /// A fill point is kept only if farther than this from every salient point.
    pub sigma: f64,
    /// Below this neighbor count the covariance is considered meaningless.
    pub min_neighbors: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        // Indoor-scan scale: r and sigma 0.15 m, nms at twice the mid-level
        // grid cell.
        SamplerConfig {
            r: 0.15,
            gamma1: 0.6,
            gamma2: 0.6,
            nms_radius: 0.10,
            sigma: 0.15,
            min_neighbors: 5,
        }
    }
}

/// The labeled node set: salient nodes followed by non-salient fill nodes.
#[derive(Debug, Clone, Default)]
pub struct HybridNodes {
    pub salient: Vec<Point3>,
    pub non_salient: Vec<Point3>,
}

impl HybridNodes {
    pub fn len(&self) -> usize {
        self.salient.len() + self.non_salient.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Node coordinates, salient first.
    pub fn all_points(&self) -> Vec<Point3> {
        let mut pts = self.salient.clone();
        pts.extend_from_slice(&self.non_salient);
        pts
    }

    pub fn class(&self, node_id: usize) -> NodeClass {
        if node_id < self.salient.len() {
            NodeClass::Salient
        } else {
            NodeClass::NonSalient
        }
    }

    pub fn point(&self, node_id: usize) -> Point3 {
        if node_id < self.salient.len() {
            self.salient[node_id]
        } else {
            self.non_salient[node_id - self.salient.len()]
        }
    }
}

/// Distance-weighted covariance eigen-analysis per point.
///
/// For each point, neighbors within `cfg.r` are weighted by inverse distance;
/// the weighted covariance of the offsets is eigen-decomposed and the
/// descending eigenvalue ratios are tested against (γ1, γ2). Points with
/// fewer than `cfg.min_neighbors` neighbors keep their eigenvalues but fail
/// the test.
pub fn iss_saliency(
    p2: &PointCloud,
    index: &SpatialIndex,
    cfg: &SamplerConfig,
) -> Result<Vec<SaliencyRecord>> {
    if p2.is_empty() {
        return Err(Error::EmptyCloud("iss_saliency"));
    }
    Ok(p2
        .points
        .par_iter()
        .enumerate()
        .map(|(id, p)| saliency_of(id, p, index, cfg))
        .collect())
}

fn saliency_of(id: usize, p: &Point3, index: &SpatialIndex, cfg: &SamplerConfig) -> SaliencyRecord {
    // zero-distance neighbors are already excluded by the index, which
    // realizes the coincident-point rule for the inverse-distance weights
    let neighbors = index.radius_neighbors(p, cfg.r);
    let mut cov = Matrix3::zeros();
    let mut weight_sum = 0.0;
    for &(j, d) in &neighbors {
        let w = 1.0 / d;
        let diff = p - index.point(j);
        cov += w * diff * diff.transpose();
        weight_sum += w;
    }
    let mut eigenvalues = [0.0f64; 3];
    if weight_sum > 0.0 {
        cov /= weight_sum;
        let mut eig: Vec<f64> = cov.symmetric_eigen().eigenvalues.iter().copied().collect();
        eig.sort_by(|a, b| b.total_cmp(a));
        for (i, l) in eig.iter().enumerate() {
            eigenvalues[i] = l.max(0.0);
        }
    }
    let passes = neighbors.len() >= cfg.min_neighbors && ratio_test(&eigenvalues, cfg);
    SaliencyRecord {
        point_id: id,
        eigenvalues,
        v: eigenvalues[2],
        passes_ratio_test: passes,
    }
}

/// λ2/λ1 ≤ γ1 and λ3/λ2 ≤ γ2 with degenerate denominators resolved as:
/// λ1 = 0 fails outright; λ2 = 0 with λ1 > 0 passes the second ratio
/// (keeps needle-like neighborhoods salient).
fn ratio_test(eig: &[f64; 3], cfg: &SamplerConfig) -> bool {
    let [l1, l2, l3] = *eig;
    if l1 <= 0.0 {
        return false;
    }
    if l2 / l1 > cfg.gamma1 {
        return false;
    }
    if l2 <= 0.0 {
        return true;
    }
    l3 / l2 <= cfg.gamma2
}

/// Greedy non-maximum suppression, descending saliency score `v` with
/// ascending-id tie-break. A candidate is accepted iff no already accepted
/// point lies strictly within `nms_radius`. Returns accepted point ids.
pub fn nms(records: &[SaliencyRecord], p2: &PointCloud, nms_radius: f64) -> Vec<usize> {
    let mut candidates: Vec<&SaliencyRecord> =
        records.iter().filter(|r| r.passes_ratio_test).collect();
    candidates.sort_by(|a, b| b.v.total_cmp(&a.v).then(a.point_id.cmp(&b.point_id)));

    let r2 = nms_radius * nms_radius;
    let cell = nms_radius.max(f64::MIN_POSITIVE);
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    let key = |p: &Point3| {
        (
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        )
    };

    let mut accepted = Vec::new();
    'outer: for rec in candidates {
        let p = &p2.points[rec.point_id];
        let (kx, ky, kz) = key(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(ids) = grid.get(&(kx + dx, ky + dy, kz + dz)) {
                        for &a in ids {
                            if dist2(p, &p2.points[a]) < r2 {
                                continue 'outer;
                            }
                        }
                    }
                }
            }
        }
        grid.entry((kx, ky, kz)).or_default().push(rec.point_id);
        accepted.push(rec.point_id);
    }
    accepted
}

/// Keeps the points of `p3` whose distance to the nearest salient point is
/// strictly greater than `sigma`. An empty salient set keeps everything.
pub fn select_non_salient(p3: &PointCloud, salient: &[Point3], sigma: f64) -> Vec<Point3> {
    if salient.is_empty() {
        return p3.points.clone();
    }
    let index = SpatialIndex::from_points(salient.to_vec());
    let s2 = sigma * sigma;
    p3.points
        .iter()
        .filter(|p| {
            let (id, _) = index.nearest(p).unwrap();
            dist2(p, index.point(id)) > s2
        })
        .copied()
        .collect()
}

/// Full hybrid sampling: saliency on the mid-resolution cloud, NMS, then
/// uniform fill from the coarse cloud in uncovered regions.
pub fn hybrid_points(
    p2: &PointCloud,
    p3: &PointCloud,
    cfg: &SamplerConfig,
) -> Result<HybridNodes> {
    if p2.is_empty() {
        return Err(Error::EmptyCloud("hybrid_points (mid level)"));
    }
    if p3.is_empty() {
        return Err(Error::EmptyCloud("hybrid_points (coarse level)"));
    }
    let index = SpatialIndex::build(p2);
    let records = iss_saliency(p2, &index, cfg)?;
    let salient_ids = nms(&records, p2, cfg.nms_radius);
    let salient: Vec<Point3> = salient_ids.iter().map(|&i| p2.points[i]).collect();
    let non_salient = select_non_salient(p3, &salient, cfg.sigma);
    Ok(HybridNodes {
        salient,
        non_salient,
    })
}
