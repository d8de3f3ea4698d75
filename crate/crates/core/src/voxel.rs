//! Voxel-grid downsampling.

use std::collections::BTreeMap;

use nalgebra::Vector3;

use crate::cloud::{Point3, PointCloud};
use crate::error::{Error, Result};

#[inline]
fn voxel_key(p: &Point3, cell: f64) -> (i64, i64, i64) {
    (
        (p.x / cell).floor() as i64,
        (p.y / cell).floor() as i64,
        (p.z / cell).floor() as i64,
    )
}

/// One output point per occupied voxel of side `cell`, at the centroid of the
/// voxel's members. Output order is the lexicographic voxel key, so repeated
/// runs produce identical clouds. Normals are dropped; levels that need them
/// re-estimate after downsampling.
pub fn grid_downsample(cloud: &PointCloud, cell: f64) -> Result<PointCloud> {
    if cell <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "cell",
            reason: format!("{cell} must be > 0"),
        });
    }
    if cloud.is_empty() {
        return Err(Error::EmptyCloud("grid_downsample"));
    }
    let mut cells: BTreeMap<(i64, i64, i64), (Vector3<f64>, usize)> = BTreeMap::new();
    for p in &cloud.points {
        let entry = cells
            .entry(voxel_key(p, cell))
            .or_insert((Vector3::zeros(), 0));
        entry.0 += p.coords;
        entry.1 += 1;
    }
    Ok(cells
        .values()
        .map(|(sum, n)| Point3::from(sum / *n as f64))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn unit_cube_corners() -> PointCloud {
        let mut pts = Vec::new();
        for x in [0.0, 1.0] {
            for y in [0.0, 1.0] {
                for z in [0.0, 1.0] {
                    pts.push(Point3::new(x, y, z));
                }
            }
        }
        PointCloud::new(pts)
    }

    #[test]
    fn single_voxel_centroid() {
        let out = grid_downsample(&unit_cube_corners(), 2.0).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out.points[0], Point3::new(0.5, 0.5, 0.5));
    }

    #[test]
    fn one_point_per_voxel_passthrough() {
        let out = grid_downsample(&unit_cube_corners(), 0.5).unwrap();
        assert_eq!(out.len(), 8);
        let mut expected = unit_cube_corners().points;
        expected.sort_by(|a, b| {
            a.x.total_cmp(&b.x)
                .then(a.y.total_cmp(&b.y))
                .then(a.z.total_cmp(&b.z))
        });
        assert_eq!(out.points, expected);
    }

    #[test]
    fn empty_cloud_is_an_error() {
        assert!(grid_downsample(&PointCloud::default(), 1.0).is_err());
    }

    #[test]
    fn matches_brute_force_bucketing() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let cloud: PointCloud = (0..1000)
            .map(|_| Point3::new(rng.random(), rng.random(), rng.random()))
            .collect();
        let cell = 0.1;
        let out = grid_downsample(&cloud, cell).unwrap();

        // brute-force bucketing oracle
        let mut buckets: BTreeMap<(i64, i64, i64), Vec<Point3>> = BTreeMap::new();
        for p in &cloud.points {
            buckets.entry(voxel_key(p, cell)).or_default().push(*p);
        }
        assert_eq!(out.len(), buckets.len());
        for (got, members) in out.points.iter().zip(buckets.values()) {
            let mut sum = Vector3::zeros();
            for p in members {
                sum += p.coords;
            }
            let centroid = Point3::from(sum / members.len() as f64);
            assert_eq!(*got, centroid);
        }

        // every output pair lives in a distinct voxel
        for i in 0..out.len() {
            for j in (i + 1)..out.len() {
                assert_ne!(
                    voxel_key(&out.points[i], cell),
                    voxel_key(&out.points[j], cell)
                );
            }
        }
    }

    #[test]
    fn size_non_increasing_over_nested_cells() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let cloud: PointCloud = (0..500)
            .map(|_| Point3::new(rng.random(), rng.random(), rng.random()))
            .collect();
        let mut prev = usize::MAX;
        for cell in [0.05, 0.1, 0.2, 0.4, 0.8] {
            let n = grid_downsample(&cloud, cell).unwrap().len();
            assert!(n <= prev, "cell {cell}: {n} > {prev}");
            prev = n;
        }
    }
}
