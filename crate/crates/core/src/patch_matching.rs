//! Patch-level matching: point-to-node grouping, feature correlation with
//! dual-normalization, top-K selection, and the dual-class merge that treats
//! salient and non-salient nodes as separate matching problems, with
//! spectral filtering on configured branches.

use rayon::prelude::*;
use serde::Serialize;

use crate::cloud::{Point3, PointCloud};
use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::index::SpatialIndex;
use crate::sampler::{HybridNodes, NodeClass};
use crate::spectral::{spectral_filter, SpectralConfig};

#[derive(Debug, Clone, Serialize)]
pub struct MatchConfig {
    /// Patch correspondences kept per branch before filtering.
    pub k: usize,
    /// Fraction of spectrally filtered correspondences retained (by
    /// confidence), at least one.
    pub keep_fraction: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            k: 128,
            keep_fraction: 0.10,
        }
    }
}

/// Nearest-node assignment of dense points.
#[derive(Debug, Clone)]
pub struct PatchPartition {
    /// dense point id → node id
    pub node_of: Vec<usize>,
    /// node id → member dense point ids (exact inverse of `node_of`)
    pub members: Vec<Vec<usize>>,
}

/// Assigns every dense point to its nearest node (ties to the lower node
/// id). Empty patches are permitted; matching skips them later.
pub fn point_to_node_group(dense: &PointCloud, nodes: &[Point3]) -> Result<PatchPartition> {
    if nodes.is_empty() {
        return Err(Error::InvalidParameter {
            name: "nodes",
            reason: "point-to-node grouping needs at least one node".into(),
        });
    }
    let index = SpatialIndex::from_points(nodes.to_vec());
    let node_of: Vec<usize> = dense
        .points
        .par_iter()
        .map(|p| index.nearest(p).unwrap().0)
        .collect();
    let mut members = vec![Vec::new(); nodes.len()];
    for (point_id, &node_id) in node_of.iter().enumerate() {
        members[node_id].push(point_id);
    }
    Ok(PatchPartition { node_of, members })
}

/// Dense row-major feature correlation matrix with node id maps.
#[derive(Debug, Clone)]
pub struct CorrelationMatrix {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<f64>,
    /// row index → source node id
    pub row_nodes: Vec<usize>,
    /// col index → target node id
    pub col_nodes: Vec<usize>,
}

impl CorrelationMatrix {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.cols + j]
    }
}

/// Inner products of unit-norm descriptors; entries lie in [-1, 1].
pub fn correlate(fs: &FeatureSet, ft: &FeatureSet) -> Result<CorrelationMatrix> {
    if fs.dim != ft.dim && !fs.is_empty() && !ft.is_empty() {
        return Err(Error::DimensionMismatch {
            left: fs.dim,
            right: ft.dim,
        });
    }
    let rows = fs.len();
    let cols = ft.len();
    let mut entries = vec![0.0f64; rows * cols];
    entries
        .par_chunks_mut(cols.max(1))
        .enumerate()
        .for_each(|(i, row)| {
            if i < rows {
                for (j, e) in row.iter_mut().enumerate() {
                    *e = fs.descriptors[i].dot(&ft.descriptors[j]);
                }
            }
        });
    Ok(CorrelationMatrix {
        rows,
        cols,
        entries,
        row_nodes: (0..rows).collect(),
        col_nodes: (0..cols).collect(),
    })
}

/// Dual normalization: the elementwise product of a row-wise softmax and a
/// column-wise softmax. Suppresses entries that are large in absolute terms
/// but not dominant in their row or column, while preserving per-row and
/// per-column argmaxes.
pub fn dual_normalize(c: &CorrelationMatrix) -> CorrelationMatrix {
    let (rows, cols) = (c.rows, c.cols);
    let mut row_soft = vec![0.0f64; rows * cols];
    for i in 0..rows {
        let row = &c.entries[i * cols..(i + 1) * cols];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (j, v) in row.iter().enumerate() {
            let e = (v - max).exp();
            row_soft[i * cols + j] = e;
            sum += e;
        }
        for j in 0..cols {
            row_soft[i * cols + j] /= sum;
        }
    }
    let mut col_soft = vec![0.0f64; rows * cols];
    for j in 0..cols {
        let mut max = f64::NEG_INFINITY;
        for i in 0..rows {
            max = max.max(c.entries[i * cols + j]);
        }
        let mut sum = 0.0;
        for i in 0..rows {
            let e = (c.entries[i * cols + j] - max).exp();
            col_soft[i * cols + j] = e;
            sum += e;
        }
        for i in 0..rows {
            col_soft[i * cols + j] /= sum;
        }
    }
    let entries: Vec<f64> = row_soft
        .iter()
        .zip(&col_soft)
        .map(|(r, c)| r * c)
        .collect();
    CorrelationMatrix {
        rows,
        cols,
        entries,
        row_nodes: c.row_nodes.clone(),
        col_nodes: c.col_nodes.clone(),
    }
}

/// One patch-level correspondence between node ids.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchCorrespondence {
    pub source_node: usize,
    pub target_node: usize,
    pub confidence: f64,
}

/// The K globally largest entries (ties resolved in row-major order), mapped
/// through the matrix's node id tables. Returns fewer when the matrix is
/// smaller than K.
pub fn top_k_matches(c: &CorrelationMatrix, k: usize) -> Vec<PatchCorrespondence> {
    let mut order: Vec<usize> = (0..c.entries.len()).collect();
    order.sort_by(|&a, &b| c.entries[b].total_cmp(&c.entries[a]).then(a.cmp(&b)));
    order
        .into_iter()
        .take(k)
        .map(|flat| PatchCorrespondence {
            source_node: c.row_nodes[flat / c.cols],
            target_node: c.col_nodes[flat % c.cols],
            confidence: c.entries[flat],
        })
        .collect()
}

/// Per-branch patch matching results; `merged` is what point matching sees.
#[derive(Debug, Clone, Default)]
pub struct PatchCorrespondences {
    /// Salient-branch correspondences (after per-branch filtering, if any).
    pub c1: Vec<PatchCorrespondence>,
    /// Raw non-salient-branch correspondences.
    pub c2: Vec<PatchCorrespondence>,
    /// Non-salient correspondences surviving the spectral filter and
    /// top-fraction truncation.
    pub c2_star: Vec<PatchCorrespondence>,
    pub merged: Vec<PatchCorrespondence>,
}

/// Which branches run the spectral filter (plus top-fraction retention).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SmPlacement {
    pub salient: bool,
    pub non_salient: bool,
}

impl Default for SmPlacement {
    fn default() -> Self {
        // the winning configuration: filter only the noisy non-salient branch
        SmPlacement {
            salient: false,
            non_salient: true,
        }
    }
}

fn branch_match(
    node_ids_s: &[usize],
    node_ids_t: &[usize],
    feats_s: &FeatureSet,
    feats_t: &FeatureSet,
    k: usize,
) -> Result<Vec<PatchCorrespondence>> {
    if node_ids_s.is_empty() || node_ids_t.is_empty() {
        return Ok(Vec::new());
    }
    let sub_s = FeatureSet::new(
        node_ids_s
            .iter()
            .map(|&i| feats_s.descriptors[i].clone())
            .collect(),
    )?;
    let sub_t = FeatureSet::new(
        node_ids_t
            .iter()
            .map(|&i| feats_t.descriptors[i].clone())
            .collect(),
    )?;
    let mut c = correlate(&sub_s, &sub_t)?;
    c.row_nodes = node_ids_s.to_vec();
    c.col_nodes = node_ids_t.to_vec();
    let normalized = dual_normalize(&c);
    Ok(top_k_matches(&normalized, k))
}

fn sm_retain(
    corrs: &[PatchCorrespondence],
    nodes_s: &HybridNodes,
    nodes_t: &HybridNodes,
    keep_fraction: f64,
    sm_cfg: &SpectralConfig,
) -> Result<Vec<PatchCorrespondence>> {
    if corrs.is_empty() {
        return Ok(Vec::new());
    }
    let pairs: Vec<(Point3, Point3)> = corrs
        .iter()
        .map(|c| (nodes_s.point(c.source_node), nodes_t.point(c.target_node)))
        .collect();
    let kept_idx = spectral_filter(&pairs, sm_cfg)?;
    let mut kept: Vec<PatchCorrespondence> = kept_idx.iter().map(|&i| corrs[i]).collect();
    kept.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then(a.source_node.cmp(&b.source_node))
            .then(a.target_node.cmp(&b.target_node))
    });
    let keep = ((keep_fraction * kept.len() as f64).ceil() as usize).max(1);
    kept.truncate(keep);
    Ok(kept)
}

/// Dual-class patch matching with configurable spectral-filter placement.
/// Feature sets are aligned with the hybrid node order (salient first).
pub fn match_patches(
    nodes_s: &HybridNodes,
    nodes_t: &HybridNodes,
    feats_s: &FeatureSet,
    feats_t: &FeatureSet,
    cfg: &MatchConfig,
    sm_cfg: &SpectralConfig,
    placement: SmPlacement,
) -> Result<PatchCorrespondences> {
    let class_ids = |nodes: &HybridNodes, class: NodeClass| -> Vec<usize> {
        (0..nodes.len()).filter(|&i| nodes.class(i) == class).collect()
    };

    let sap_raw = branch_match(
        &class_ids(nodes_s, NodeClass::Salient),
        &class_ids(nodes_t, NodeClass::Salient),
        feats_s,
        feats_t,
        cfg.k,
    )?;
    let c2 = branch_match(
        &class_ids(nodes_s, NodeClass::NonSalient),
        &class_ids(nodes_t, NodeClass::NonSalient),
        feats_s,
        feats_t,
        cfg.k,
    )?;

    let c1 = if placement.salient {
        sm_retain(&sap_raw, nodes_s, nodes_t, cfg.keep_fraction, sm_cfg)?
    } else {
        sap_raw
    };
    let c2_star = if placement.non_salient {
        sm_retain(&c2, nodes_s, nodes_t, cfg.keep_fraction, sm_cfg)?
    } else {
        c2.clone()
    };

    let mut merged = c1.clone();
    merged.extend_from_slice(&c2_star);
    Ok(PatchCorrespondences {
        c1,
        c2,
        c2_star,
        merged,
    })
}

/// The paper's default placement: salient correspondences kept as matched,
/// non-salient ones filtered spectrally and truncated to the top fraction.
pub fn dual_class_match(
    nodes_s: &HybridNodes,
    nodes_t: &HybridNodes,
    feats_s: &FeatureSet,
    feats_t: &FeatureSet,
    cfg: &MatchConfig,
    sm_cfg: &SpectralConfig,
) -> Result<PatchCorrespondences> {
    match_patches(
        nodes_s,
        nodes_t,
        feats_s,
        feats_t,
        cfg,
        sm_cfg,
        SmPlacement::default(),
    )
}

/// Single-class matching over all nodes at once (the grid-superpoint
/// baseline and the undifferentiated hybrid ablation): one branch, no
/// spectral filter.
pub fn single_class_match(
    nodes_s: &HybridNodes,
    nodes_t: &HybridNodes,
    feats_s: &FeatureSet,
    feats_t: &FeatureSet,
    cfg: &MatchConfig,
) -> Result<PatchCorrespondences> {
    let all_s: Vec<usize> = (0..nodes_s.len()).collect();
    let all_t: Vec<usize> = (0..nodes_t.len()).collect();
    let merged = branch_match(&all_s, &all_t, feats_s, feats_t, cfg.k)?;
    Ok(PatchCorrespondences {
        c1: merged.clone(),
        c2: Vec::new(),
        c2_star: Vec::new(),
        merged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::dist2;
    use crate::features::Descriptor;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn basis(dim: usize, i: usize) -> Descriptor {
        let mut values = vec![0.0; dim];
        values[i] = 1.0;
        Descriptor { values }
    }

    #[test]
    fn single_node_takes_all_points() {
        let dense: PointCloud = (0..10)
            .map(|i| Point3::new(i as f64, 0.0, 0.0))
            .collect();
        let part = point_to_node_group(&dense, &[Point3::origin()]).unwrap();
        assert_eq!(part.members[0].len(), 10);
        assert!(part.node_of.iter().all(|&n| n == 0));
    }

    #[test]
    fn equidistant_point_goes_to_lower_node_id() {
        let mut nodes: Vec<Point3> = (0..8)
            .map(|i| Point3::new(10.0 + i as f64 * 10.0, 20.0, 0.0))
            .collect();
        // nodes 3 and 7 at mirrored offsets from the query: an exact tie
        // must resolve to the lower node id
        nodes[3] = Point3::new(1.0, 0.0, 0.0);
        nodes[7] = Point3::new(-1.0, 0.0, 0.0);
        let dense = PointCloud::new(vec![Point3::origin()]);
        let part = point_to_node_group(&dense, &nodes).unwrap();
        assert_eq!(part.node_of[0], 3);
    }

    #[test]
    fn grouping_matches_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let dense: PointCloud = (0..500)
            .map(|_| Point3::new(rng.random(), rng.random(), rng.random()))
            .collect();
        let nodes: Vec<Point3> = (0..20)
            .map(|_| Point3::new(rng.random(), rng.random(), rng.random()))
            .collect();
        let part = point_to_node_group(&dense, &nodes).unwrap();
        for (pid, p) in dense.points.iter().enumerate() {
            let best = nodes
                .iter()
                .enumerate()
                .map(|(nid, n)| (nid, dist2(p, n)))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
                .unwrap()
                .0;
            assert_eq!(part.node_of[pid], best);
        }
        // members is the exact inverse of node_of
        for (nid, members) in part.members.iter().enumerate() {
            for &pid in members {
                assert_eq!(part.node_of[pid], nid);
            }
        }
        let total: usize = part.members.iter().map(|m| m.len()).sum();
        assert_eq!(total, dense.len());
    }

    #[test]
    fn correlation_of_identical_bases_is_identity() {
        let fs = FeatureSet::new(vec![basis(4, 0), basis(4, 1)]).unwrap();
        let c = correlate(&fs, &fs).unwrap();
        assert_eq!(c.get(0, 0), 1.0);
        assert_eq!(c.get(1, 1), 1.0);
        assert_eq!(c.get(0, 1), 0.0);
        assert_eq!(c.get(1, 0), 0.0);
    }

    #[test]
    fn correlation_of_orthogonal_sets_is_zero() {
        let fs = FeatureSet::new(vec![basis(6, 0), basis(6, 1)]).unwrap();
        let ft = FeatureSet::new(vec![basis(6, 2), basis(6, 3)]).unwrap();
        let c = correlate(&fs, &ft).unwrap();
        assert!(c.entries.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn correlation_entries_bounded_by_one() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mk = |rng: &mut rand_chacha::ChaCha8Rng| {
            let mut v: Vec<f64> = (0..8).map(|_| rng.random::<f64>() - 0.5).collect();
            let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            for x in v.iter_mut() {
                *x /= n;
            }
            Descriptor { values: v }
        };
        let fs = FeatureSet::new((0..5).map(|_| mk(&mut rng)).collect()).unwrap();
        let ft = FeatureSet::new((0..7).map(|_| mk(&mut rng)).collect()).unwrap();
        let c = correlate(&fs, &ft).unwrap();
        assert!(c.entries.iter().all(|v| v.abs() <= 1.0 + 1e-12));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let fs = FeatureSet::new(vec![basis(4, 0)]).unwrap();
        let ft = FeatureSet::new(vec![basis(5, 0)]).unwrap();
        assert!(correlate(&fs, &ft).is_err());
    }

    fn matrix(rows: usize, cols: usize, entries: Vec<f64>) -> CorrelationMatrix {
        CorrelationMatrix {
            rows,
            cols,
            entries,
            row_nodes: (0..rows).collect(),
            col_nodes: (0..cols).collect(),
        }
    }

    #[test]
    fn dual_normalize_uniform_matrix() {
        let (n, m) = (3, 5);
        let c = matrix(n, m, vec![0.42; n * m]);
        let d = dual_normalize(&c);
        for v in &d.entries {
            assert_relative_eq!(*v, (1.0 / m as f64) * (1.0 / n as f64), epsilon = 1e-12);
        }
    }

    #[test]
    fn dual_normalize_dominant_entry_approaches_column_weight() {
        // entry (0,0) dominates its row: its row softmax → 1, so the
        // normalized value approaches its column softmax weight
        let c = matrix(2, 2, vec![30.0, 0.0, 0.0, 0.0]);
        let d = dual_normalize(&c);
        let col_weight = (30f64).exp() / ((30f64).exp() + 1.0);
        assert_relative_eq!(d.get(0, 0), col_weight, epsilon = 1e-9);
    }

    #[test]
    fn dual_normalize_preserves_argmax_on_permutation_structure() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let n = 6;
            // random permutation structure with strong diagonal
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                let j = rng.random_range(0..=i);
                perm.swap(i, j);
            }
            let mut entries = vec![0.0f64; n * n];
            for i in 0..n {
                for j in 0..n {
                    entries[i * n + j] = if perm[i] == j {
                        0.9 + 0.1 * rng.random::<f64>()
                    } else {
                        0.4 * rng.random::<f64>()
                    };
                }
            }
            let c = matrix(n, n, entries);
            let d = dual_normalize(&c);
            for i in 0..n {
                let argmax = (0..n)
                    .max_by(|&a, &b| d.get(i, a).total_cmp(&d.get(i, b)))
                    .unwrap();
                assert_eq!(argmax, perm[i]);
            }
        }
    }

    #[test]
    fn top_k_on_identity_takes_the_diagonal() {
        let c = matrix(3, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let picks = top_k_matches(&c, 3);
        let pairs: Vec<(usize, usize)> =
            picks.iter().map(|p| (p.source_node, p.target_node)).collect();
        assert_eq!(pairs, vec![(0, 0), (1, 1), (2, 2)]);
    }

    #[test]
    fn top_k_clamps_to_matrix_size() {
        let c = matrix(2, 2, vec![0.1, 0.2, 0.3, 0.4]);
        assert_eq!(top_k_matches(&c, 100).len(), 4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn top_k_matches_full_sort_oracle(
            entries in prop::collection::vec(-1.0f64..1.0, 30),
            k in 1usize..12,
        ) {
            let c = matrix(5, 6, entries.clone());
            let picks = top_k_matches(&c, k);
            let mut oracle: Vec<(f64, usize)> = entries
                .iter()
                .enumerate()
                .map(|(i, &v)| (v, i))
                .collect();
            oracle.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            prop_assert_eq!(picks.len(), k.min(30));
            for (pick, &(v, flat)) in picks.iter().zip(&oracle) {
                prop_assert_eq!(pick.confidence, v);
                prop_assert_eq!(pick.source_node, flat / 6);
                prop_assert_eq!(pick.target_node, flat % 6);
            }
        }
    }

    /// Builds hybrid node sets and features where salient nodes carry
    /// distinctive descriptors and non-salient nodes nearly identical ones,
    /// mirroring corners versus planes.
    fn synthetic_node_problem(
        rng: &mut impl Rng,
        n_sap: usize,
        n_nsap: usize,
        noise: f64,
    ) -> (HybridNodes, HybridNodes, FeatureSet, FeatureSet) {
        let dim = 16;
        let unit = |v: &mut Vec<f64>| {
            let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            for x in v.iter_mut() {
                *x /= n;
            }
        };
        let mut base_plane: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
        unit(&mut base_plane);

        let mut nodes_s = HybridNodes::default();
        let mut nodes_t = HybridNodes::default();
        let mut ds = Vec::new();
        let mut dt = Vec::new();
        for i in 0..n_sap {
            let p = Point3::new(i as f64, 0.0, 0.0);
            nodes_s.salient.push(p);
            nodes_t.salient.push(p);
            let mut v: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() - 0.5).collect();
            unit(&mut v);
            ds.push(v.clone());
            let mut w: Vec<f64> = v
                .iter()
                .map(|x| x + noise * (rng.random::<f64>() - 0.5))
                .collect();
            unit(&mut w);
            dt.push(w);
        }
        for i in 0..n_nsap {
            let p = Point3::new(i as f64, 10.0, 0.0);
            nodes_s.non_salient.push(p);
            nodes_t.non_salient.push(p);
            let mut v: Vec<f64> = base_plane
                .iter()
                .map(|x| x + 0.02 * (rng.random::<f64>() - 0.5))
                .collect();
            unit(&mut v);
            ds.push(v);
            let mut w: Vec<f64> = base_plane
                .iter()
                .map(|x| x + 0.02 * (rng.random::<f64>() - 0.5))
                .collect();
            unit(&mut w);
            dt.push(w);
        }
        let fs = FeatureSet::new(ds.into_iter().map(|values| Descriptor { values }).collect())
            .unwrap();
        let ft = FeatureSet::new(dt.into_iter().map(|values| Descriptor { values }).collect())
            .unwrap();
        (nodes_s, nodes_t, fs, ft)
    }

    #[test]
    fn empty_branches_are_not_errors() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let cfg = MatchConfig::default();
        let sm = SpectralConfig::default();

        // no non-salient nodes: merged = salient matches only
        let (ns, nt, fs, ft) = synthetic_node_problem(&mut rng, 6, 0, 0.01);
        let out = dual_class_match(&ns, &nt, &fs, &ft, &cfg, &sm).unwrap();
        assert!(!out.c1.is_empty());
        assert!(out.c2.is_empty() && out.c2_star.is_empty());
        assert_eq!(out.merged.len(), out.c1.len());

        // no salient nodes: merged = filtered non-salient matches only
        let (ns, nt, fs, ft) = synthetic_node_problem(&mut rng, 0, 8, 0.01);
        let out = dual_class_match(&ns, &nt, &fs, &ft, &cfg, &sm).unwrap();
        assert!(out.c1.is_empty());
        assert!(!out.c2_star.is_empty());
        assert_eq!(out.merged.len(), out.c2_star.len());
    }

    #[test]
    fn classes_never_mix_and_size_bound_holds() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let (ns, nt, fs, ft) = synthetic_node_problem(&mut rng, 10, 14, 0.05);
        let cfg = MatchConfig { k: 20, keep_fraction: 0.10 };
        let sm = SpectralConfig::default();
        let out = dual_class_match(&ns, &nt, &fs, &ft, &cfg, &sm).unwrap();
        for c in &out.c1 {
            assert_eq!(ns.class(c.source_node), NodeClass::Salient);
            assert_eq!(nt.class(c.target_node), NodeClass::Salient);
        }
        for c in &out.c2 {
            assert_eq!(ns.class(c.source_node), NodeClass::NonSalient);
            assert_eq!(nt.class(c.target_node), NodeClass::NonSalient);
        }
        assert!(out.c2_star.len() <= out.c2.len());
        let bound = cfg.k + (0.1 * out.c2.len() as f64).ceil() as usize + 1;
        assert!(out.merged.len() <= bound);
    }

    #[test]
    fn salient_branch_outmatches_raw_non_salient() {
        // ground truth: node i corresponds to node i within each class
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let (ns, nt, fs, ft) = synthetic_node_problem(&mut rng, 24, 24, 0.05);
        let cfg = MatchConfig { k: 24, keep_fraction: 0.10 };
        let sm = SpectralConfig::default();
        let out = dual_class_match(&ns, &nt, &fs, &ft, &cfg, &sm).unwrap();

        let precision = |corrs: &[PatchCorrespondence]| -> f64 {
            if corrs.is_empty() {
                return 0.0;
            }
            let good = corrs
                .iter()
                .filter(|c| c.source_node == c.target_node)
                .count();
            good as f64 / corrs.len() as f64
        };
        let p1 = precision(&out.c1);
        let p2 = precision(&out.c2);
        assert!(
            p1 >= p2,
            "salient precision {p1} below raw non-salient {p2}"
        );
        assert!(p1 > 0.8, "salient precision {p1}");
    }
}
