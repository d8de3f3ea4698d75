//! Hand-crafted local descriptors: a rotation- and translation-invariant
//! angle histogram over normal pairs, plus normal estimation and patch-level
//! aggregation.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::Serialize;

use crate::cloud::{Normal, Point3, PointCloud};
use crate::error::{Error, Result};
use crate::index::SpatialIndex;

pub const DEFAULT_BINS: usize = 11;
/// Three angle features, `DEFAULT_BINS` bins each.
pub const DEFAULT_DIM: usize = 3 * DEFAULT_BINS;

#[derive(Debug, Clone, Serialize)]
pub struct FeatureConfig {
    /// Neighborhood radius for both normal estimation and the histogram.
    pub radius: f64,
    /// Bins per angle feature.
    pub bins: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        // 2.5x the mid-level grid cell at indoor scale
        FeatureConfig {
            radius: 0.125,
            bins: DEFAULT_BINS,
        }
    }
}

/// Unit-norm descriptor vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    pub values: Vec<f64>,
}

impl Descriptor {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn dot(&self, other: &Descriptor) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }
}

/// Descriptors aligned with a point list.
#[derive(Debug, Clone)]
pub struct FeatureSet {
    pub descriptors: Vec<Descriptor>,
    pub dim: usize,
}

impl FeatureSet {
    pub fn new(descriptors: Vec<Descriptor>) -> Result<Self> {
        let dim = descriptors.first().map(|d| d.dim()).unwrap_or(0);
        for d in &descriptors {
            if d.dim() != dim {
                return Err(Error::DimensionMismatch {
                    left: dim,
                    right: d.dim(),
                });
            }
        }
        Ok(FeatureSet { descriptors, dim })
    }

    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }

    /// Debug export: one row of `dim` ascii floats per descriptor.
    pub fn write_ascii(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        for d in &self.descriptors {
            let row: Vec<String> = d.values.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

/// Per-point normals from the least eigenvector of the unweighted
/// neighborhood covariance. The sign is fixed toward the +z hemisphere
/// (+x, then +y, on exact ties) so repeated runs agree. Points with fewer
/// than 3 neighbors get the placeholder normal (0,0,1) and a degeneracy flag.
///
/// Returns the cloud with normals attached plus the degeneracy flags.
pub fn estimate_normals(
    cloud: &PointCloud,
    index: &SpatialIndex,
    radius: f64,
) -> Result<(PointCloud, Vec<bool>)> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud("estimate_normals"));
    }
    let results: Vec<(Normal, bool)> = cloud
        .points
        .par_iter()
        .map(|p| normal_of(p, index, radius))
        .collect();
    let normals: Vec<Normal> = results.iter().map(|(n, _)| *n).collect();
    let degenerate: Vec<bool> = results.iter().map(|(_, d)| *d).collect();
    Ok((
        PointCloud {
            points: cloud.points.clone(),
            normals: Some(normals),
        },
        degenerate,
    ))
}

fn normal_of(p: &Point3, index: &SpatialIndex, radius: f64) -> (Normal, bool) {
    let neighbors = index.radius_neighbors(p, radius);
    if neighbors.len() < 3 {
        return (Vector3::z(), true);
    }
    // centroid over the neighborhood including the point itself
    let mut centroid = p.coords;
    for &(j, _) in &neighbors {
        centroid += index.point(j).coords;
    }
    centroid /= (neighbors.len() + 1) as f64;

    let mut cov = Matrix3::zeros();
    let d0 = p.coords - centroid;
    cov += d0 * d0.transpose();
    for &(j, _) in &neighbors {
        let d = index.point(j).coords - centroid;
        cov += d * d.transpose();
    }

    let eig = cov.symmetric_eigen();
    let mut min_i = 0;
    for i in 1..3 {
        if eig.eigenvalues[i] < eig.eigenvalues[min_i] {
            min_i = i;
        }
    }
    let mut n: Vector3<f64> = eig.eigenvectors.column(min_i).into_owned();
    let norm = n.norm();
    if norm == 0.0 {
        return (Vector3::z(), true);
    }
    n /= norm;
    // hemisphere sign rule: +z, then +x, then +y
    if n.z < 0.0
        || (n.z == 0.0 && n.x < 0.0)
        || (n.z == 0.0 && n.x == 0.0 && n.y < 0.0)
    {
        n = -n;
    }
    (n, false)
}

/// Histogram descriptor for one point.
///
/// For every neighbor within `cfg.radius` the three angle cosines between
/// the two normals and the normalized connecting line are accumulated:
///
///   f1 = |n_p · n_q|,  f2 = |n_p · u|,  f3 = |n_q · u|,  u = (q − p)/‖q − p‖
///
/// Absolute values make the features insensitive to the per-point normal
/// sign ambiguity, so the descriptor is invariant under rigid motion even
/// though hemisphere sign fixing is not. Each feature gets `cfg.bins` bins;
/// the concatenation is L1- then L2-normalized. A point with no neighbors
/// gets the uniform (maximally non-distinctive) histogram and a flag.
pub fn point_descriptor(
    cloud: &PointCloud,
    index: &SpatialIndex,
    point_id: usize,
    cfg: &FeatureConfig,
) -> Result<(Descriptor, bool)> {
    let normals = cloud.normals.as_ref().ok_or(Error::InvalidParameter {
        name: "cloud",
        reason: "normals required for point_descriptor".into(),
    })?;
    let p = &cloud.points[point_id];
    let np = &normals[point_id];
    let neighbors = index.radius_neighbors(p, cfg.radius);

    let dim = 3 * cfg.bins;
    let mut hist = vec![0.0f64; dim];
    if neighbors.is_empty() {
        let v = 1.0 / (dim as f64).sqrt();
        return Ok((
            Descriptor {
                values: vec![v; dim],
            },
            true,
        ));
    }

    for &(j, d) in &neighbors {
        let q = index.point(j);
        let nq = &normals[j];
        let u = (q - p) / d;
        let f1 = np.dot(nq).abs().min(1.0);
        let f2 = np.dot(&u).abs().min(1.0);
        let f3 = nq.dot(&u).abs().min(1.0);
        for (k, f) in [f1, f2, f3].into_iter().enumerate() {
            let mut bin = (f * cfg.bins as f64) as usize;
            if bin == cfg.bins {
                bin -= 1;
            }
            hist[k * cfg.bins + bin] += 1.0;
        }
    }

    let l1: f64 = hist.iter().sum();
    for h in hist.iter_mut() {
        *h /= l1;
    }
    let l2: f64 = hist.iter().map(|h| h * h).sum::<f64>().sqrt();
    for h in hist.iter_mut() {
        *h /= l2;
    }
    Ok((Descriptor { values: hist }, false))
}

/// Descriptors for every point of the cloud (normals required).
pub fn compute_features(
    cloud: &PointCloud,
    index: &SpatialIndex,
    cfg: &FeatureConfig,
) -> Result<FeatureSet> {
    if cloud.normals.is_none() {
        return Err(Error::InvalidParameter {
            name: "cloud",
            reason: "normals required for compute_features".into(),
        });
    }
    let descriptors: Vec<Descriptor> = (0..cloud.len())
        .into_par_iter()
        .map(|i| point_descriptor(cloud, index, i, cfg).map(|(d, _)| d))
        .collect::<Result<_>>()?;
    FeatureSet::new(descriptors)
}

/// Patch descriptor: component-wise mean of the members, re-normalized.
pub fn node_descriptor(members: &[&Descriptor]) -> Result<Descriptor> {
    let first = members.first().ok_or(Error::EmptyPatch)?;
    let dim = first.dim();
    let mut mean = vec![0.0f64; dim];
    for d in members {
        if d.dim() != dim {
            return Err(Error::DimensionMismatch {
                left: dim,
                right: d.dim(),
            });
        }
        for (m, v) in mean.iter_mut().zip(&d.values) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= members.len() as f64;
    }
    let norm: f64 = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for m in mean.iter_mut() {
            *m /= norm;
        }
    }
    Ok(Descriptor { values: mean })
}
