//! Registration metrics: inlier ratio, feature matching recall,
//! rotation/translation errors, and RMSE-based registration recall.

use serde::Serialize;

use crate::cloud::{Point3, PointCloud, RigidTransform};
use crate::index::SpatialIndex;

/// Metric thresholds at scene scale.
#[derive(Debug, Clone, Serialize)]
pub struct MetricThresholds {
    /// Correspondence inlier distance for IR.
    pub ir_tau: f64,
    /// Minimum IR for a pair to count toward FMR.
    pub fmr_min_ir: f64,
    /// RMSE bound for a successful registration.
    pub rmse_max: f64,
    /// Mutual-nearest-neighbor acceptance distance for the ground-truth
    /// overlap correspondences (2x the sampling step).
    pub nn_step: f64,
}

impl MetricThresholds {
    pub fn at_scale(scale: f64, sampling_step: f64) -> Self {
        MetricThresholds {
            ir_tau: 0.1 * scale,
            fmr_min_ir: 0.05,
            rmse_max: 0.2 * scale,
            nn_step: 2.0 * sampling_step,
        }
    }
}

/// Fraction of correspondences that land within `tau` of their target under
/// the ground truth. The flag marks an empty correspondence set (IR reported
/// as 0).
pub fn inlier_ratio(corrs: &[(Point3, Point3)], t_gt: &RigidTransform, tau: f64) -> (f64, bool) {
    if corrs.is_empty() {
        return (0.0, true);
    }
    let t2 = tau * tau;
    let inliers = corrs
        .iter()
        .filter(|(p, q)| (t_gt.apply(p) - q).norm_squared() < t2)
        .count();
    (inliers as f64 / corrs.len() as f64, false)
}

/// Fraction of pairs whose inlier ratio exceeds `tau_ir`.
pub fn fmr(pair_irs: &[f64], tau_ir: f64) -> f64 {
    if pair_irs.is_empty() {
        return 0.0;
    }
    pair_irs.iter().filter(|&&ir| ir > tau_ir).count() as f64 / pair_irs.len() as f64
}

/// Relative rotation error (degrees) and translation error (meters).
///
/// RRE is arccos((trace(R_gtᵀ R_est) − 1)/2) with the argument clamped to
/// [−1, 1]. The trace is accumulated with compensated products and the
/// near-identity branch evaluates the angle from 1 − arg directly: the naive
/// f64 expression quantizes at ~2e-6 degrees, which would drown exact
/// recoveries in formula noise.
pub fn rre_rte(t_est: &RigidTransform, t_gt: &RigidTransform) -> (f64, f64) {
    let rte = (t_est.translation - t_gt.translation).norm();

    // trace(R_gtᵀ R_est) = Σ_ij gt[i][j]·est[i][j] in double-double
    let mut sum = 0.0f64;
    let mut err = 0.0f64;
    for i in 0..3 {
        for j in 0..3 {
            let a = t_gt.rotation[(i, j)];
            let b = t_est.rotation[(i, j)];
            let p = a * b;
            let p_err = a.mul_add(b, -p);
            let s = sum + p;
            let bb = s - sum;
            err += (sum - (s - bb)) + (p - bb) + p_err;
            sum = s;
        }
    }
    // u = 1 − (trace − 1)/2 = (3 − trace)/2, kept in the compensated form
    let u = ((3.0 - sum) - err) / 2.0;
    let u = u.clamp(0.0, 2.0);
    let angle = if u < 1e-8 {
        // arccos(1 − u) ≈ sqrt(2u) for small u
        (2.0 * u).sqrt()
    } else {
        (1.0 - u).clamp(-1.0, 1.0).acos()
    };
    (angle.to_degrees(), rte)
}

/// Mutual nearest neighbors between the dense clouds under the ground
/// truth, accepted within `max_dist`. These pairs anchor the RMSE.
pub fn gt_overlap_correspondences(
    source: &PointCloud,
    target: &PointCloud,
    t_gt: &RigidTransform,
    max_dist: f64,
) -> Vec<(usize, usize)> {
    let mapped: Vec<Point3> = source.points.iter().map(|p| t_gt.apply(p)).collect();
    let source_index = SpatialIndex::from_points(mapped.clone());
    let target_index = SpatialIndex::build(target);
    let mut pairs = Vec::new();
    for (i, p) in mapped.iter().enumerate() {
        let Some((j, d)) = target_index.nearest(p) else {
            continue;
        };
        if d > max_dist {
            continue;
        }
        let (back, _) = source_index.nearest(&target.points[j]).unwrap();
        if back == i {
            pairs.push((i, j));
        }
    }
    pairs
}

/// Root-mean-square alignment error of the estimated transform over the
/// ground-truth overlap correspondences.
pub fn rmse(
    source: &PointCloud,
    target: &PointCloud,
    gt_pairs: &[(usize, usize)],
    t_est: &RigidTransform,
) -> f64 {
    if gt_pairs.is_empty() {
        return f64::INFINITY;
    }
    let sum: f64 = gt_pairs
        .iter()
        .map(|&(i, j)| (t_est.apply(&source.points[i]) - target.points[j]).norm_squared())
        .sum();
    (sum / gt_pairs.len() as f64).sqrt()
}

/// Per-pair evaluation record.
#[derive(Debug, Clone, Serialize)]
pub struct PairEvaluation {
    /// Inlier ratio of the final correspondences.
    pub ir: f64,
    /// True when the pair produced no correspondences at all.
    pub no_correspondences: bool,
    /// Degrees; infinite when registration failed.
    pub rre_deg: f64,
    /// Meters; infinite when registration failed.
    pub rte: f64,
    /// RMSE over ground-truth overlap correspondences; infinite on failure.
    pub rmse: f64,
    pub registered: bool,
    /// IR above the FMR threshold.
    pub fmr_success: bool,
    /// RMSE below the recall threshold.
    pub rr_success: bool,
    pub correspondence_count: usize,
}

/// Fraction of pairs with RMSE below `rmse_thresh`.
pub fn registration_recall(evals: &[PairEvaluation], rmse_thresh: f64) -> f64 {
    if evals.is_empty() {
        return 0.0;
    }
    evals.iter().filter(|e| e.rmse < rmse_thresh).count() as f64 / evals.len() as f64
}

/// Suite-level aggregate, recomputable from the per-pair records.
#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkSummary {
    pub rr: f64,
    pub fmr: f64,
    pub mean_ir: f64,
    /// Median over successfully registered pairs; absent when none.
    pub median_rre_deg: Option<f64>,
    pub median_rte: Option<f64>,
    pub pairs: Vec<PairEvaluation>,
}

fn median(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

impl BenchmarkSummary {
    pub fn from_pairs(pairs: Vec<PairEvaluation>) -> Self {
        let n = pairs.len().max(1) as f64;
        let rr = pairs.iter().filter(|e| e.rr_success).count() as f64 / n;
        let fmr = pairs.iter().filter(|e| e.fmr_success).count() as f64 / n;
        let mean_ir = pairs.iter().map(|e| e.ir).sum::<f64>() / n;
        let ok_rre: Vec<f64> = pairs
            .iter()
            .filter(|e| e.rr_success)
            .map(|e| e.rre_deg)
            .collect();
        let ok_rte: Vec<f64> = pairs
            .iter()
            .filter(|e| e.rr_success)
            .map(|e| e.rte)
            .collect();
        BenchmarkSummary {
            rr,
            fmr,
            mean_ir,
            median_rre_deg: median(ok_rre),
            median_rte: median(ok_rte),
            pairs,
        }
    }
}
