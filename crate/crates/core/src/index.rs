//! Spatial index over a point cloud: radius and nearest-neighbor queries.
//!
//! Implemented as an implicit kd-tree over an index permutation. All
//! distance predicates compare squared distances (see [`crate::cloud::dist2`])
//! and tie-break on the lower point id, so queries are deterministic and
//! match the brute-force oracle exactly.

use crate::cloud::{dist2, Point3, PointCloud};

pub struct SpatialIndex {
    points: Vec<Point3>,
    /// kd-tree layout: `order[lo..hi]` holds a subtree, median at the middle.
    order: Vec<u32>,
}

#[inline]
fn coord(p: &Point3, axis: usize) -> f64 {
    match axis {
        0 => p.x,
        1 => p.y,
        _ => p.z,
    }
}

impl SpatialIndex {
    pub fn build(cloud: &PointCloud) -> Self {
        Self::from_points(cloud.points.clone())
    }

    pub fn from_points(points: Vec<Point3>) -> Self {
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        if !points.is_empty() {
            build_recursive(&points, &mut order, 0);
        }
        SpatialIndex { points, order }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, id: usize) -> &Point3 {
        &self.points[id]
    }

    /// All indexed points with `0 < dist(q, p) < r`, ascending by distance
    /// (ties by id). Zero-distance hits are excluded: when the query is a
    /// member of the index, the point itself is not its own neighbor.
    pub fn radius_neighbors(&self, query: &Point3, r: f64) -> Vec<(usize, f64)> {
        let mut hits: Vec<(usize, f64)> = Vec::new();
        if self.points.is_empty() || r <= 0.0 {
            return hits;
        }
        let r2 = r * r;
        self.radius_recursive(query, r, r2, 0, self.order.len(), 0, &mut hits);
        hits.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        hits.iter()
            .map(|&(id, d2)| (id, d2.sqrt()))
            .collect()
    }

    fn radius_recursive(
        &self,
        query: &Point3,
        r: f64,
        r2: f64,
        lo: usize,
        hi: usize,
        depth: usize,
        hits: &mut Vec<(usize, f64)>,
    ) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let id = self.order[mid] as usize;
        let p = &self.points[id];
        let d2 = dist2(query, p);
        if d2 < r2 && d2 > 0.0 {
            hits.push((id, d2));
        }
        let axis = depth % 3;
        let diff = coord(query, axis) - coord(p, axis);
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.radius_recursive(query, r, r2, near.0, near.1, depth + 1, hits);
        if diff.abs() < r {
            self.radius_recursive(query, r, r2, far.0, far.1, depth + 1, hits);
        }
    }

    /// Nearest indexed point (including zero-distance hits); ties go to the
    /// lower id. Returns `(id, distance)`.
    pub fn nearest(&self, query: &Point3) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best: (usize, f64) = (usize::MAX, f64::INFINITY);
        self.nearest_recursive(query, 0, self.order.len(), 0, &mut best);
        Some((best.0, best.1.sqrt()))
    }

    fn nearest_recursive(
        &self,
        query: &Point3,
        lo: usize,
        hi: usize,
        depth: usize,
        best: &mut (usize, f64),
    ) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let id = self.order[mid] as usize;
        let p = &self.points[id];
        let d2 = dist2(query, p);
        if d2 < best.1 || (d2 == best.1 && id < best.0) {
            *best = (id, d2);
        }
        let axis = depth % 3;
        let diff = coord(query, axis) - coord(p, axis);
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.nearest_recursive(query, near.0, near.1, depth + 1, best);
        // <= so an equal-distance lower id on the far side is still found
        if diff * diff <= best.1 {
            self.nearest_recursive(query, far.0, far.1, depth + 1, best);
        }
    }
}

fn build_recursive(points: &[Point3], order: &mut [u32], depth: usize) {
    if order.len() <= 1 {
        return;
    }
    let axis = depth % 3;
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        coord(&points[a as usize], axis)
            .total_cmp(&coord(&points[b as usize], axis))
            .then(a.cmp(&b))
    });
    let (left, rest) = order.split_at_mut(mid);
    build_recursive(points, left, depth + 1);
    build_recursive(points, &mut rest[1..], depth + 1);
}
