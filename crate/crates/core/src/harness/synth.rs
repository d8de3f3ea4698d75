//! Synthetic scene-pair generation with planted ground truth.
//!
//! A master surface sampling of the scene is cropped into two overlapping
//! windows along x; the source window is moved into its own frame by the
//! inverse ground-truth transform, so registering source onto target should
//! recover the planted transform. Sampling is jittered in 3D: perfectly flat
//! or lattice-aligned samples produce degenerate eigenvalue ties that no
//! real scan has.

use std::str::FromStr;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::cloud::{Point3, PointCloud, RigidTransform};
use crate::error::{Error, Result};

/// Surface sampling step of the master scene, meters.
pub const SAMPLING_STEP: f64 = 0.02;
/// Perpendicular jitter applied to every sampled surface point.
const SURFACE_JITTER: f64 = 0.002;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SceneRecipe {
    /// Floor, two walls, and a clutter of boxes, pyramids and cylinders.
    Room,
    /// Two furnished rooms side by side with a gapped divider wall.
    TwoRooms,
    /// Furniture only at the far ends; the middle band is floor with a few
    /// shallow bumps and ridges, so window overlaps are plane-dominant.
    PlaneDominant,
}

impl FromStr for SceneRecipe {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "room" => Ok(SceneRecipe::Room),
            "two-rooms" => Ok(SceneRecipe::TwoRooms),
            "plane-dominant" => Ok(SceneRecipe::PlaneDominant),
            other => Err(Error::InvalidParameter {
                name: "recipe",
                reason: format!("unknown recipe `{other}` (room, two-rooms, plane-dominant)"),
            }),
        }
    }
}

impl SceneRecipe {
    pub fn name(&self) -> &'static str {
        match self {
            SceneRecipe::Room => "room",
            SceneRecipe::TwoRooms => "two-rooms",
            SceneRecipe::PlaneDominant => "plane-dominant",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScenePair {
    pub source: PointCloud,
    pub target: PointCloud,
    pub t_gt: RigidTransform,
    /// Fraction of source points that exist in the target window.
    pub gt_overlap: f64,
    pub noise_sigma: f64,
    /// Master surface sampling step (thresholds like "2x the sampling step"
    /// derive from this).
    pub sampling_step: f64,
}

struct Sampler {
    rng: ChaCha8Rng,
    points: Vec<Point3>,
}

impl Sampler {
    fn new(seed: u64) -> Self {
        Sampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
            points: Vec::new(),
        }
    }

    /// Jittered samples of the parallelogram `origin + s·u + t·v`.
    fn rect(&mut self, origin: Point3, u: Vector3<f64>, v: Vector3<f64>) {
        let nu = (u.norm() / SAMPLING_STEP).ceil().max(1.0) as usize;
        let nv = (v.norm() / SAMPLING_STEP).ceil().max(1.0) as usize;
        let normal = u.cross(&v).normalize();
        for i in 0..nu {
            for j in 0..nv {
                let a = (i as f64 + self.rng.random::<f64>()) / nu as f64;
                let b = (j as f64 + self.rng.random::<f64>()) / nv as f64;
                let h = SURFACE_JITTER * (2.0 * self.rng.random::<f64>() - 1.0);
                self.points.push(origin + a * u + b * v + h * normal);
            }
        }
    }

    /// Jittered samples of a triangle.
    fn triangle(&mut self, a: Point3, b: Point3, c: Point3) {
        let u = b - a;
        let v = c - a;
        let nu = (u.norm() / SAMPLING_STEP).ceil().max(1.0) as usize;
        let nv = (v.norm() / SAMPLING_STEP).ceil().max(1.0) as usize;
        let normal = u.cross(&v).normalize();
        for i in 0..nu {
            for j in 0..nv {
                let mut s = (i as f64 + self.rng.random::<f64>()) / nu as f64;
                let mut t = (j as f64 + self.rng.random::<f64>()) / nv as f64;
                if s + t > 1.0 {
                    // fold back into the triangle to keep density uniform
                    s = 1.0 - s;
                    t = 1.0 - t;
                }
                let h = SURFACE_JITTER * (2.0 * self.rng.random::<f64>() - 1.0);
                self.points.push(a + s * u + t * v + h * normal);
            }
        }
    }

    /// Closed box sitting on the floor: four sides and a top, yawed about z.
    fn box_on_floor(&mut self, cx: f64, cy: f64, ex: f64, ey: f64, height: f64, yaw: f64) {
        let dir_x = Vector3::new(yaw.cos(), yaw.sin(), 0.0);
        let dir_y = Vector3::new(-yaw.sin(), yaw.cos(), 0.0);
        let base = Point3::new(cx, cy, 0.0) - ex * dir_x - ey * dir_y;
        let ux = 2.0 * ex * dir_x;
        let uy = 2.0 * ey * dir_y;
        let uz = Vector3::new(0.0, 0.0, height);
        self.rect(base, ux, uz);
        self.rect(base, uy, uz);
        self.rect(base + ux, uy, uz);
        self.rect(base + uy, ux, uz);
        self.rect(base + uz, ux, uy);
    }

    /// Four-sided pyramid on the floor; slanted faces give dihedral angles
    /// that vary with the base/height ratio.
    fn pyramid(&mut self, cx: f64, cy: f64, half_base: f64, height: f64, yaw: f64) {
        let dir_x = Vector3::new(yaw.cos(), yaw.sin(), 0.0);
        let dir_y = Vector3::new(-yaw.sin(), yaw.cos(), 0.0);
        let c = Point3::new(cx, cy, 0.0);
        let corners = [
            c - half_base * dir_x - half_base * dir_y,
            c + half_base * dir_x - half_base * dir_y,
            c + half_base * dir_x + half_base * dir_y,
            c - half_base * dir_x + half_base * dir_y,
        ];
        let apex = Point3::new(cx, cy, height);
        for i in 0..4 {
            self.triangle(corners[i], corners[(i + 1) % 4], apex);
        }
    }

    /// Upright cylinder: lateral surface plus top disc.
    fn cylinder(&mut self, cx: f64, cy: f64, radius: f64, height: f64) {
        let n_around = ((2.0 * std::f64::consts::PI * radius) / SAMPLING_STEP).ceil() as usize;
        let n_up = (height / SAMPLING_STEP).ceil() as usize;
        for i in 0..n_around {
            for j in 0..n_up {
                let a = 2.0 * std::f64::consts::PI * (i as f64 + self.rng.random::<f64>())
                    / n_around as f64;
                let z = height * (j as f64 + self.rng.random::<f64>()) / n_up as f64;
                let h = SURFACE_JITTER * (2.0 * self.rng.random::<f64>() - 1.0);
                self.points.push(Point3::new(
                    cx + (radius + h) * a.cos(),
                    cy + (radius + h) * a.sin(),
                    z,
                ));
            }
        }
        // top disc by rings
        let rings = (radius / SAMPLING_STEP).ceil() as usize;
        self.points.push(Point3::new(cx, cy, height));
        for ring in 1..=rings {
            let r = radius * ring as f64 / rings as f64;
            let n = ((2.0 * std::f64::consts::PI * r) / SAMPLING_STEP).ceil().max(1.0) as usize;
            for i in 0..n {
                let a = 2.0 * std::f64::consts::PI * (i as f64 + self.rng.random::<f64>())
                    / n as f64;
                let h = SURFACE_JITTER * (2.0 * self.rng.random::<f64>() - 1.0);
                self.points
                    .push(Point3::new(cx + r * a.cos(), cy + r * a.sin(), height + h));
            }
        }
    }

    /// Shallow spherical cap rising from the floor: visible in descriptors,
    /// gentle enough to stay below the saliency ratio test.
    fn bump(&mut self, cx: f64, cy: f64, base_radius: f64, height: f64) {
        let sphere_r = (base_radius * base_radius + height * height) / (2.0 * height);
        let rings = (base_radius / SAMPLING_STEP).ceil() as usize;
        self.points.push(Point3::new(cx, cy, height));
        for ring in 1..=rings {
            let r = base_radius * ring as f64 / rings as f64;
            let z = height - (sphere_r - (sphere_r * sphere_r - r * r).max(0.0).sqrt());
            let n = ((2.0 * std::f64::consts::PI * r) / SAMPLING_STEP).ceil().max(1.0) as usize;
            for i in 0..n {
                let a = 2.0 * std::f64::consts::PI * (i as f64 + self.rng.random::<f64>())
                    / n as f64;
                let h = SURFACE_JITTER * (2.0 * self.rng.random::<f64>() - 1.0);
                self.points
                    .push(Point3::new(cx + r * a.cos(), cy + r * a.sin(), z + h));
            }
        }
    }

    /// Gentle tent ridge along a direction in the floor plane.
    fn ridge(&mut self, cx: f64, cy: f64, length: f64, half_width: f64, height: f64, yaw: f64) {
        let along = Vector3::new(yaw.cos(), yaw.sin(), 0.0);
        let across = Vector3::new(-yaw.sin(), yaw.cos(), 0.0);
        let start = Point3::new(cx, cy, 0.0) - (length / 2.0) * along;
        let crest = Vector3::new(0.0, 0.0, height);
        self.rect(start - half_width * across, length * along, half_width * across + crest);
        self.rect(start + half_width * across, length * along, -half_width * across + crest);
    }
}

fn build_scene(recipe: SceneRecipe, seed: u64) -> Vec<Point3> {
    let mut s = Sampler::new(seed);
    match recipe {
        SceneRecipe::Room => {
            let w = 3.2;
            s.rect(Point3::origin(), Vector3::new(w, 0.0, 0.0), Vector3::new(0.0, w, 0.0));
            s.rect(Point3::origin(), Vector3::new(w, 0.0, 0.0), Vector3::new(0.0, 0.0, 1.4));
            s.rect(Point3::origin(), Vector3::new(0.0, w, 0.0), Vector3::new(0.0, 0.0, 1.4));
            for _ in 0..6 {
                let cx = 0.5 + 2.2 * s.rng.random::<f64>();
                let cy = 0.5 + 2.2 * s.rng.random::<f64>();
                let ex = 0.12 + 0.28 * s.rng.random::<f64>();
                let ey = 0.12 + 0.28 * s.rng.random::<f64>();
                let h = 0.25 + 0.65 * s.rng.random::<f64>();
                let yaw = std::f64::consts::PI * s.rng.random::<f64>();
                s.box_on_floor(cx, cy, ex, ey, h, yaw);
            }
            for _ in 0..2 {
                let cx = 0.6 + 2.0 * s.rng.random::<f64>();
                let cy = 0.6 + 2.0 * s.rng.random::<f64>();
                let b = 0.18 + 0.22 * s.rng.random::<f64>();
                let h = 0.25 + 0.4 * s.rng.random::<f64>();
                let yaw = std::f64::consts::PI * s.rng.random::<f64>();
                s.pyramid(cx, cy, b, h, yaw);
            }
            for _ in 0..2 {
                let cx = 0.5 + 2.2 * s.rng.random::<f64>();
                let cy = 0.5 + 2.2 * s.rng.random::<f64>();
                let r = 0.12 + 0.18 * s.rng.random::<f64>();
                let h = 0.3 + 0.6 * s.rng.random::<f64>();
                s.cylinder(cx, cy, r, h);
            }
        }
        SceneRecipe::TwoRooms => {
            let (lx, ly) = (5.6, 3.0);
            s.rect(Point3::origin(), Vector3::new(lx, 0.0, 0.0), Vector3::new(0.0, ly, 0.0));
            s.rect(Point3::origin(), Vector3::new(lx, 0.0, 0.0), Vector3::new(0.0, 0.0, 1.3));
            // divider wall with a doorway gap
            let xw = lx / 2.0;
            s.rect(
                Point3::new(xw, 0.0, 0.0),
                Vector3::new(0.0, 1.1, 0.0),
                Vector3::new(0.0, 0.0, 1.3),
            );
            s.rect(
                Point3::new(xw, 2.0, 0.0),
                Vector3::new(0.0, ly - 2.0, 0.0),
                Vector3::new(0.0, 0.0, 1.3),
            );
            for _ in 0..8 {
                let cx = 0.5 + (lx - 1.0) * s.rng.random::<f64>();
                let cy = 0.5 + (ly - 1.0) * s.rng.random::<f64>();
                let ex = 0.12 + 0.26 * s.rng.random::<f64>();
                let ey = 0.12 + 0.26 * s.rng.random::<f64>();
                let h = 0.25 + 0.6 * s.rng.random::<f64>();
                let yaw = std::f64::consts::PI * s.rng.random::<f64>();
                s.box_on_floor(cx, cy, ex, ey, h, yaw);
            }
            for _ in 0..2 {
                let cx = 0.6 + (lx - 1.2) * s.rng.random::<f64>();
                let cy = 0.6 + (ly - 1.2) * s.rng.random::<f64>();
                let b = 0.18 + 0.2 * s.rng.random::<f64>();
                let h = 0.25 + 0.35 * s.rng.random::<f64>();
                let yaw = std::f64::consts::PI * s.rng.random::<f64>();
                s.pyramid(cx, cy, b, h, yaw);
            }
            for _ in 0..2 {
                let cx = 0.5 + (lx - 1.0) * s.rng.random::<f64>();
                let cy = 0.5 + (ly - 1.0) * s.rng.random::<f64>();
                let r = 0.12 + 0.16 * s.rng.random::<f64>();
                let h = 0.3 + 0.5 * s.rng.random::<f64>();
                s.cylinder(cx, cy, r, h);
            }
        }
        SceneRecipe::PlaneDominant => {
            let (lx, ly) = (5.0, 3.0);
            s.rect(Point3::origin(), Vector3::new(lx, 0.0, 0.0), Vector3::new(0.0, ly, 0.0));
            // salient furniture only at the two ends
            for end in [0.0, 1.0] {
                let x0 = if end == 0.0 { 0.35 } else { lx - 0.55 };
                for k in 0..3 {
                    let cx = x0 + 0.2 * s.rng.random::<f64>();
                    let cy = 0.5 + 0.8 * k as f64 + 0.3 * s.rng.random::<f64>();
                    let ex = 0.1 + 0.15 * s.rng.random::<f64>();
                    let ey = 0.1 + 0.15 * s.rng.random::<f64>();
                    let h = 0.3 + 0.5 * s.rng.random::<f64>();
                    let yaw = std::f64::consts::PI * s.rng.random::<f64>();
                    s.box_on_floor(cx, cy, ex, ey, h, yaw);
                }
            }
            // shallow relief in the middle band
            let band = [1.2, lx - 1.2];
            let spots = [
                (0.25, 0.5),
                (0.75, 0.3),
                (0.3, 0.85),
                (0.8, 0.75),
                (0.5, 0.15),
            ];
            for (k, (fx, fy)) in spots.iter().enumerate() {
                let cx = band[0] + (band[1] - band[0]) * fx;
                let cy = 0.35 + (ly - 0.7) * fy;
                let r = 0.25 + 0.15 * s.rng.random::<f64>() + 0.03 * k as f64;
                let h = 0.05 + 0.05 * s.rng.random::<f64>();
                s.bump(cx, cy, r, h);
            }
            for k in 0..2 {
                let cx = band[0] + (band[1] - band[0]) * (0.35 + 0.3 * k as f64);
                let cy = 0.8 + 1.2 * k as f64;
                let yaw = 0.4 + 0.9 * s.rng.random::<f64>();
                s.ridge(cx, cy, 1.0 + 0.6 * s.rng.random::<f64>(), 0.25, 0.06, yaw);
            }
        }
    }
    s.points
}

/// Generates a registered scene pair. `overlap` is the requested fraction of
/// source points present in the target window (within ±5%); both windows end
/// up the same size.
pub fn synth_pair(
    recipe: SceneRecipe,
    t_gt: &RigidTransform,
    overlap: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<ScenePair> {
    if !(overlap > 0.0 && overlap <= 1.0) {
        return Err(Error::Generation(format!(
            "requested overlap {overlap} outside (0, 1]"
        )));
    }
    if noise_sigma < 0.0 {
        return Err(Error::Generation(format!("negative noise {noise_sigma}")));
    }
    let master = build_scene(recipe, seed);
    let n = master.len();

    // same-size windows at both ends of the x-ordering; the shared middle
    // band realizes the requested overlap exactly up to discreteness
    let window = 1.0 / (2.0 - overlap);
    let take = ((window * n as f64).ceil() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        master[a]
            .x
            .total_cmp(&master[b].x)
            .then(master[a].y.total_cmp(&master[b].y))
            .then(master[a].z.total_cmp(&master[b].z))
    });
    let shared = 2 * take as i64 - n as i64;
    if shared < 16 {
        return Err(Error::Generation(format!(
            "overlap {overlap} leaves only {shared} shared samples for recipe {}",
            recipe.name()
        )));
    }
    let gt_overlap = shared as f64 / take as f64;

    let t_inv = t_gt.inverse();
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x517c_c1b7_2722_0a95);
    let normal = Normal::new(0.0, noise_sigma.max(f64::MIN_POSITIVE)).unwrap();
    let mut noisy = |p: Point3, rng: &mut ChaCha8Rng| -> Point3 {
        if noise_sigma == 0.0 {
            p
        } else {
            Point3::new(
                p.x + normal.sample(rng),
                p.y + normal.sample(rng),
                p.z + normal.sample(rng),
            )
        }
    };

    let source: PointCloud = order[..take]
        .iter()
        .map(|&i| noisy(t_inv.apply(&master[i]), &mut noise_rng))
        .collect();
    let target: PointCloud = order[n - take..]
        .iter()
        .map(|&i| noisy(master[i], &mut noise_rng))
        .collect();

    Ok(ScenePair {
        source,
        target,
        t_gt: *t_gt,
        gt_overlap,
        noise_sigma,
        sampling_step: SAMPLING_STEP,
    })
}

/// Seeded random rigid transform: uniform axis, angle up to `max_angle_deg`,
/// translation components up to `max_translation` in magnitude.
pub fn random_transform(seed: u64, max_angle_deg: f64, max_translation: f64) -> RigidTransform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let axis = loop {
        let v = Vector3::new(
            2.0 * rng.random::<f64>() - 1.0,
            2.0 * rng.random::<f64>() - 1.0,
            2.0 * rng.random::<f64>() - 1.0,
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            break v / n;
        }
    };
    let angle = max_angle_deg.to_radians() * rng.random::<f64>();
    let translation = Vector3::new(
        max_translation * (2.0 * rng.random::<f64>() - 1.0),
        max_translation * (2.0 * rng.random::<f64>() - 1.0),
        max_translation * (2.0 * rng.random::<f64>() - 1.0),
    );
    RigidTransform::from_axis_angle(axis, angle, translation)
}
