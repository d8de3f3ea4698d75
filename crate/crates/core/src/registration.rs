//! Rigid transform estimation from dense correspondences: weighted SVD
//! (Kabsch) solver, local-to-global hypothesize/score/refine, and a seeded
//! RANSAC baseline.

use nalgebra::{Matrix3, Vector3, SVD};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cloud::{Point3, RigidTransform};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct RegConfig {
    /// A correspondence counts as an inlier of a candidate when the mapped
    /// source lands within this radius of the target.
    pub accept_radius: f64,
    /// Re-fit rounds on the selected candidate's inliers.
    pub refine_iters: usize,
    pub ransac_iters: usize,
    pub ransac_threshold: f64,
    pub seed: u64,
}

impl Default for RegConfig {
    fn default() -> Self {
        RegConfig {
            accept_radius: 0.10,
            refine_iters: 5,
            ransac_iters: 1000,
            ransac_threshold: 0.10,
            seed: 0,
        }
    }
}

/// One weighted point correspondence.
#[derive(Debug, Clone, Copy)]
pub struct WeightedCorr {
    pub source: Point3,
    pub target: Point3,
    pub weight: f64,
}

impl WeightedCorr {
    pub fn new(source: Point3, target: Point3, weight: f64) -> Self {
        WeightedCorr {
            source,
            target,
            weight,
        }
    }
}

/// A per-patch transform hypothesis with its global support.
#[derive(Debug, Clone)]
pub struct TransformCandidate {
    pub transform: RigidTransform,
    pub inlier_count: usize,
    pub source_patch: usize,
}

#[derive(Debug, Clone)]
pub struct RegistrationResult {
    pub transform: RigidTransform,
    /// Indices into the pooled correspondence list.
    pub inliers: Vec<usize>,
    pub mean_residual: f64,
}

/// Weighted Procrustes: minimizes Σ w‖R·p + t − q‖². The reflection case is
/// corrected by flipping the singular direction with the smallest singular
/// value. Degenerate geometry (rank < 2 cross-covariance, e.g. collinear
/// sources) is an error.
pub fn weighted_svd(corrs: &[WeightedCorr]) -> Result<RigidTransform> {
    if corrs.len() < 3 {
        return Err(Error::Degenerate(format!(
            "{} correspondences, need at least 3",
            corrs.len()
        )));
    }
    let wsum: f64 = corrs.iter().map(|c| c.weight).sum();
    if wsum <= 0.0 {
        return Err(Error::Degenerate("total weight is zero".into()));
    }
    let mut cs = Vector3::zeros();
    let mut ct = Vector3::zeros();
    for c in corrs {
        cs += c.weight * c.source.coords;
        ct += c.weight * c.target.coords;
    }
    cs /= wsum;
    ct /= wsum;

    let mut h = Matrix3::zeros();
    for c in corrs {
        let ps = c.source.coords - cs;
        let pt = c.target.coords - ct;
        h += c.weight * pt * ps.transpose();
    }
    h /= wsum;

    let svd = SVD::new(h, true, true);
    let u = svd.u.ok_or_else(|| Error::Degenerate("SVD failed".into()))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Degenerate("SVD failed".into()))?;
    let s = svd.singular_values;
    if s[0] <= 0.0 || s[1] / s[0] < 1e-9 {
        return Err(Error::Degenerate(format!(
            "rank-deficient cross-covariance (singular values {:?})",
            s.as_slice()
        )));
    }

    let mut rotation = u * v_t;
    if rotation.determinant() < 0.0 {
        // flip the direction of least significance
        let mut u_fixed = u;
        u_fixed.column_mut(2).neg_mut();
        rotation = u_fixed * v_t;
    }
    let translation = ct - rotation * cs;
    Ok(RigidTransform {
        rotation,
        translation,
    })
}

fn count_inliers(corrs: &[WeightedCorr], t: &RigidTransform, radius: f64) -> usize {
    let r2 = radius * radius;
    corrs
        .iter()
        .filter(|c| (t.apply(&c.source) - c.target).norm_squared() < r2)
        .count()
}

fn inlier_ids(corrs: &[WeightedCorr], t: &RigidTransform, radius: f64) -> Vec<usize> {
    let r2 = radius * radius;
    corrs
        .iter()
        .enumerate()
        .filter(|(_, c)| (t.apply(&c.source) - c.target).norm_squared() < r2)
        .map(|(i, _)| i)
        .collect()
}

fn refine(
    pooled: &[WeightedCorr],
    start: RigidTransform,
    radius: f64,
    iters: usize,
) -> (RigidTransform, Vec<usize>) {
    let mut current = start;
    let mut inliers = inlier_ids(pooled, &current, radius);
    for _ in 0..iters {
        if inliers.len() < 3 {
            break;
        }
        let subset: Vec<WeightedCorr> = inliers.iter().map(|&i| pooled[i]).collect();
        match weighted_svd(&subset) {
            Ok(t) => {
                let next = inlier_ids(pooled, &t, radius);
                // keep the better-supported estimate
                if next.len() >= inliers.len() {
                    current = t;
                    inliers = next;
                } else {
                    break;
                }
            }
            Err(_) => break,
        }
    }
    (current, inliers)
}

fn finish(pooled: &[WeightedCorr], t: RigidTransform, inliers: Vec<usize>) -> RegistrationResult {
    let mean_residual = if inliers.is_empty() {
        0.0
    } else {
        inliers
            .iter()
            .map(|&i| (t.apply(&pooled[i].source) - pooled[i].target).norm())
            .sum::<f64>()
            / inliers.len() as f64
    };
    RegistrationResult {
        transform: t,
        inliers,
        mean_residual,
    }
}

/// Local-to-global registration. Each patch's correspondences produce a
/// candidate via weighted SVD; candidates are scored by inlier count over
/// the pooled correspondences; the winner is refined by re-fitting on its
/// inliers. Inlier indices refer to the flattened patch-order pooling.
pub fn lgr(
    per_patch: &[Vec<WeightedCorr>],
    cfg: &RegConfig,
) -> Result<(RegistrationResult, Vec<TransformCandidate>)> {
    let pooled: Vec<WeightedCorr> = per_patch.iter().flatten().copied().collect();
    if pooled.is_empty() {
        return Err(Error::RegistrationFailure(
            "no point correspondences".into(),
        ));
    }
    let candidates: Vec<TransformCandidate> = per_patch
        .par_iter()
        .enumerate()
        .filter_map(|(patch, corrs)| {
            if corrs.len() < 3 {
                return None;
            }
            weighted_svd(corrs).ok().map(|t| {
                let inlier_count = count_inliers(&pooled, &t, cfg.accept_radius);
                TransformCandidate {
                    transform: t,
                    inlier_count,
                    source_patch: patch,
                }
            })
        })
        .collect();
    let best = candidates
        .iter()
        .max_by(|a, b| {
            a.inlier_count
                .cmp(&b.inlier_count)
                .then(b.source_patch.cmp(&a.source_patch))
        })
        .ok_or_else(|| {
            Error::RegistrationFailure("no patch produced a valid candidate".into())
        })?;

    let (t, inliers) = refine(&pooled, best.transform, cfg.accept_radius, cfg.refine_iters);
    if inliers.len() < 3 {
        return Err(Error::RegistrationFailure(format!(
            "best candidate keeps only {} inliers",
            inliers.len()
        )));
    }
    Ok((finish(&pooled, t, inliers), candidates))
}

/// Seeded RANSAC baseline over 3-point minimal samples, refined on the best
/// consensus set.
pub fn ransac(
    corrs: &[WeightedCorr],
    iterations: usize,
    threshold: f64,
    seed: u64,
) -> Result<RegistrationResult> {
    if corrs.len() < 3 {
        return Err(Error::Degenerate(format!(
            "{} correspondences, need at least 3",
            corrs.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(usize, RigidTransform)> = None;
    for _ in 0..iterations {
        let picks = sample(&mut rng, corrs.len(), 3);
        let sampled: Vec<WeightedCorr> = picks.iter().map(|i| corrs[i]).collect();
        let Ok(t) = weighted_svd(&sampled) else {
            continue;
        };
        let count = count_inliers(corrs, &t, threshold);
        if best.as_ref().map_or(true, |(c, _)| count > *c) {
            best = Some((count, t));
        }
    }
    let (count, t) = best.ok_or_else(|| {
        Error::RegistrationFailure("no minimal sample produced a model".into())
    })?;
    if count < 3 {
        return Err(Error::RegistrationFailure(format!(
            "best model has only {count} inliers"
        )));
    }
    let (t, inliers) = refine(corrs, t, threshold, 3);
    Ok(finish(corrs, t, inliers))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn random_points(n: usize, rng: &mut impl Rng) -> Vec<Point3> {
        (0..n)
            .map(|_| {
                Point3::new(
                    2.0 * rng.random::<f64>() - 1.0,
                    2.0 * rng.random::<f64>() - 1.0,
                    2.0 * rng.random::<f64>() - 1.0,
                )
            })
            .collect()
    }

    fn planted(points: &[Point3], t: &RigidTransform) -> Vec<WeightedCorr> {
        points
            .iter()
            .map(|p| WeightedCorr::new(*p, t.apply(p), 1.0))
            .collect()
    }

    fn rre_degrees(a: &RigidTransform, b: &RigidTransform) -> f64 {
        let arg = ((a.rotation.transpose() * b.rotation).trace() - 1.0) / 2.0;
        arg.clamp(-1.0, 1.0).acos().to_degrees()
    }

    #[test]
    fn exact_identity_recovery() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let pts = random_points(10, &mut rng);
        let corrs = planted(&pts, &RigidTransform::identity());
        let t = weighted_svd(&corrs).unwrap();
        assert_relative_eq!(t.rotation, Matrix3::identity(), epsilon = 1e-12);
        assert_relative_eq!(t.translation, Vector3::zeros(), epsilon = 1e-12);
    }

    #[test]
    fn recovers_planted_rotation_translation() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let pts = random_points(10, &mut rng);
        let planted_t = RigidTransform::from_axis_angle(
            Vector3::z(),
            30f64.to_radians(),
            Vector3::new(1.0, 2.0, 3.0),
        );
        let t = weighted_svd(&planted(&pts, &planted_t)).unwrap();
        assert!(rre_degrees(&t, &planted_t) < 1e-5);
        assert_relative_eq!(t.rotation, planted_t.rotation, epsilon = 1e-12);
        assert_relative_eq!(t.translation, planted_t.translation, epsilon = 1e-9);
    }

    #[test]
    fn collinear_sources_are_degenerate() {
        let corrs: Vec<WeightedCorr> = (0..3)
            .map(|i| {
                WeightedCorr::new(
                    Point3::new(i as f64, 0.0, 0.0),
                    Point3::new(i as f64, 1.0, 0.0),
                    1.0,
                )
            })
            .collect();
        assert!(matches!(
            weighted_svd(&corrs),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn solver_is_equivariant_under_source_pretransform() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let pts = random_points(12, &mut rng);
        let t_planted = RigidTransform::from_axis_angle(
            Vector3::new(0.2, 0.5, -0.8),
            0.9,
            Vector3::new(-0.4, 0.7, 0.1),
        );
        let corrs = planted(&pts, &t_planted);
        let sol = weighted_svd(&corrs).unwrap();

        let t0 = RigidTransform::from_axis_angle(
            Vector3::new(1.0, -0.3, 0.2),
            0.6,
            Vector3::new(0.5, 0.5, -0.5),
        );
        let pre: Vec<WeightedCorr> = corrs
            .iter()
            .map(|c| WeightedCorr::new(t0.apply(&c.source), c.target, c.weight))
            .collect();
        let sol_pre = weighted_svd(&pre).unwrap();
        let recomposed = sol_pre.compose(&t0);
        assert_relative_eq!(recomposed.rotation, sol.rotation, epsilon = 1e-9);
        assert_relative_eq!(recomposed.translation, sol.translation, epsilon = 1e-9);
    }

    #[test]
    fn weight_scaling_does_not_change_solution() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let pts = random_points(8, &mut rng);
        let t_planted =
            RigidTransform::from_axis_angle(Vector3::x(), 0.4, Vector3::new(0.1, 0.2, 0.3));
        let mut corrs = planted(&pts, &t_planted);
        for (i, c) in corrs.iter_mut().enumerate() {
            c.weight = 0.1 + i as f64 * 0.2;
            c.target = Point3::new(
                c.target.x + 0.01 * rng.random::<f64>(),
                c.target.y,
                c.target.z,
            );
        }
        let a = weighted_svd(&corrs).unwrap();
        let doubled: Vec<WeightedCorr> = corrs
            .iter()
            .map(|c| WeightedCorr::new(c.source, c.target, 2.0 * c.weight))
            .collect();
        let b = weighted_svd(&doubled).unwrap();
        assert_relative_eq!(a.rotation, b.rotation, epsilon = 1e-12);
        assert_relative_eq!(a.translation, b.translation, epsilon = 1e-12);
    }

    #[test]
    fn solver_beats_rotation_grid_oracle_on_three_points() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let residual = |corrs: &[WeightedCorr], t: &RigidTransform| -> f64 {
            corrs
                .iter()
                .map(|c| c.weight * (t.apply(&c.source) - c.target).norm_squared())
                .sum()
        };
        for _ in 0..5 {
            // noisy 3-point problems
            let pts = random_points(3, &mut rng);
            let t_pl = RigidTransform::from_axis_angle(
                Vector3::new(rng.random(), rng.random(), rng.random()),
                rng.random::<f64>(),
                Vector3::new(rng.random(), rng.random(), rng.random()),
            );
            let corrs: Vec<WeightedCorr> = pts
                .iter()
                .map(|p| {
                    let q = t_pl.apply(p);
                    WeightedCorr::new(
                        *p,
                        Point3::new(
                            q.x + 0.05 * (rng.random::<f64>() - 0.5),
                            q.y + 0.05 * (rng.random::<f64>() - 0.5),
                            q.z + 0.05 * (rng.random::<f64>() - 0.5),
                        ),
                        1.0,
                    )
                })
                .collect();
            let Ok(sol) = weighted_svd(&corrs) else {
                continue;
            };
            let r_sol = residual(&corrs, &sol);

            // brute-force rotation grid + optimal translation per rotation
            let mut r_grid = f64::INFINITY;
            let step = 18f64.to_radians();
            let n = 20;
            for i in 0..n {
                for j in 0..n / 2 {
                    for k in 0..n {
                        let rot = nalgebra::Rotation3::from_euler_angles(
                            i as f64 * step,
                            j as f64 * step,
                            k as f64 * step,
                        )
                        .into_inner();
                        // optimal translation for fixed rotation: centroid match
                        let mut cs = Vector3::zeros();
                        let mut ct = Vector3::zeros();
                        for c in &corrs {
                            cs += c.source.coords;
                            ct += c.target.coords;
                        }
                        cs /= 3.0;
                        ct /= 3.0;
                        let t = RigidTransform {
                            rotation: rot,
                            translation: ct - rot * cs,
                        };
                        r_grid = r_grid.min(residual(&corrs, &t));
                    }
                }
            }
            assert!(
                r_sol <= r_grid + 1e-9,
                "solver residual {r_sol} above grid oracle {r_grid}"
            );
        }
    }

    #[test]
    fn lgr_consensus_on_clean_patches() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let t_pl = RigidTransform::from_axis_angle(
            Vector3::new(0.1, 0.9, 0.2),
            0.7,
            Vector3::new(0.3, -0.2, 0.5),
        );
        let per_patch: Vec<Vec<WeightedCorr>> = (0..6)
            .map(|_| planted(&random_points(8, &mut rng), &t_pl))
            .collect();
        let (result, candidates) = lgr(&per_patch, &RegConfig::default()).unwrap();
        assert_eq!(candidates.len(), 6);
        // the naive arccos form bottoms out near 2e-6 degrees, so exactness
        // is asserted on the matrix entries as well
        assert!(rre_degrees(&result.transform, &t_pl) < 1e-5);
        assert_relative_eq!(result.transform.rotation, t_pl.rotation, epsilon = 1e-12);
        assert!((result.transform.translation - t_pl.translation).norm() < 1e-9);
        assert_eq!(result.inliers.len(), 48);
    }

    #[test]
    fn lgr_rejects_poisoned_patch() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let t_pl = RigidTransform::from_axis_angle(
            Vector3::new(-0.3, 0.4, 0.9),
            1.2,
            Vector3::new(1.0, 0.0, -1.0),
        );
        let mut per_patch: Vec<Vec<WeightedCorr>> = (0..9)
            .map(|_| planted(&random_points(10, &mut rng), &t_pl))
            .collect();
        // poisoned patch: random garbage pairs
        per_patch.push(
            (0..10)
                .map(|_| {
                    WeightedCorr::new(
                        Point3::new(rng.random(), rng.random(), rng.random()),
                        Point3::new(
                            5.0 * rng.random::<f64>(),
                            5.0 * rng.random::<f64>(),
                            5.0 * rng.random::<f64>(),
                        ),
                        1.0,
                    )
                })
                .collect(),
        );
        let cfg = RegConfig::default();
        let (result, candidates) = lgr(&per_patch, &cfg).unwrap();
        let best = candidates.iter().max_by_key(|c| c.inlier_count).unwrap();
        assert!(best.source_patch < 9, "poisoned patch won selection");
        assert!(rre_degrees(&result.transform, &t_pl) < 0.1);
        // the returned inlier count dominates every candidate's own count
        for c in &candidates {
            assert!(result.inliers.len() >= c.inlier_count);
        }
    }

    #[test]
    fn lgr_without_valid_patches_fails() {
        let per_patch: Vec<Vec<WeightedCorr>> = vec![
            vec![WeightedCorr::new(Point3::origin(), Point3::origin(), 1.0); 2],
            Vec::new(),
        ];
        assert!(matches!(
            lgr(&per_patch, &RegConfig::default()),
            Err(Error::RegistrationFailure(_))
        ));
    }

    #[test]
    fn ransac_on_clean_correspondences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let t_pl = RigidTransform::from_axis_angle(
            Vector3::new(0.5, 0.5, 0.5),
            0.8,
            Vector3::new(-0.2, 0.4, 0.6),
        );
        let corrs = planted(&random_points(40, &mut rng), &t_pl);
        let result = ransac(&corrs, 100, 0.1, 9).unwrap();
        assert!(rre_degrees(&result.transform, &t_pl) < 1e-6);
        assert!((result.transform.translation - t_pl.translation).norm() < 1e-6);
    }

    #[test]
    fn ransac_survives_half_outliers() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        let t_pl = RigidTransform::from_axis_angle(
            Vector3::new(0.0, 0.3, 1.0),
            0.5,
            Vector3::new(0.7, -0.1, 0.2),
        );
        let mut corrs = planted(&random_points(50, &mut rng), &t_pl);
        for _ in 0..50 {
            corrs.push(WeightedCorr::new(
                Point3::new(rng.random(), rng.random(), rng.random()),
                Point3::new(
                    10.0 * rng.random::<f64>(),
                    10.0 * rng.random::<f64>(),
                    10.0 * rng.random::<f64>(),
                ),
                1.0,
            ));
        }
        let result = ransac(&corrs, 1000, 0.1, 11).unwrap();
        assert!(rre_degrees(&result.transform, &t_pl) < 0.5);
        // deterministic under the same seed
        let again = ransac(&corrs, 1000, 0.1, 11).unwrap();
        assert_eq!(result.transform, again.transform);
    }

    #[test]
    fn ransac_needs_three_correspondences() {
        let corrs = vec![
            WeightedCorr::new(Point3::origin(), Point3::origin(), 1.0),
            WeightedCorr::new(
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                1.0,
            ),
        ];
        assert!(ransac(&corrs, 10, 0.1, 0).is_err());
    }
}
