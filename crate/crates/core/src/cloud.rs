//! Point cloud container and rigid transforms.

use nalgebra::{Matrix3, Matrix4, Vector3};

use crate::error::{Error, Result};

/// A 3D point in meters.
pub type Point3 = nalgebra::Point3<f64>;

/// Unit normal vector.
pub type Normal = Vector3<f64>;

/// Squared Euclidean distance. All neighborhood predicates in this crate
/// compare squared distances so that index queries, brute-force oracles and
/// tie-breaking agree bit-for-bit.
#[inline]
pub fn dist2(a: &Point3, b: &Point3) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    dx * dx + dy * dy + dz * dz
}

/// An ordered set of points with optional per-point unit normals.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    pub normals: Option<Vec<Normal>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        PointCloud {
            points,
            normals: None,
        }
    }

    /// Attach normals; must be unit length (within 1e-6) and one per point.
    pub fn with_normals(points: Vec<Point3>, normals: Vec<Normal>) -> Result<Self> {
        if normals.len() != points.len() {
            return Err(Error::InvalidParameter {
                name: "normals",
                reason: format!("{} normals for {} points", normals.len(), points.len()),
            });
        }
        for (i, n) in normals.iter().enumerate() {
            if (n.norm() - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidParameter {
                    name: "normals",
                    reason: format!("normal {} has norm {}", i, n.norm()),
                });
            }
        }
        Ok(PointCloud {
            points,
            normals: Some(normals),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Checks every coordinate (and normal component) is finite.
    pub fn validate_finite(&self) -> Result<()> {
        for (i, p) in self.points.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
                return Err(Error::InvalidParameter {
                    name: "points",
                    reason: format!("point {} has non-finite coordinate", i),
                });
            }
        }
        if let Some(ns) = &self.normals {
            for (i, n) in ns.iter().enumerate() {
                if !(n.x.is_finite() && n.y.is_finite() && n.z.is_finite()) {
                    return Err(Error::InvalidParameter {
                        name: "normals",
                        reason: format!("normal {} has non-finite component", i),
                    });
                }
            }
        }
        Ok(())
    }
}

impl FromIterator<Point3> for PointCloud {
    fn from_iter<I: IntoIterator<Item = Point3>>(iter: I) -> Self {
        PointCloud::new(iter.into_iter().collect())
    }
}

/// A proper rigid motion: rotation followed by translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Validates orthonormality (RᵀR = I within 1e-9) and det = +1 within 1e-9.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let defect = (rotation.transpose() * rotation - Matrix3::identity()).norm();
        if defect > 1e-9 {
            return Err(Error::InvalidParameter {
                name: "rotation",
                reason: format!("not orthonormal (RᵀR-I norm {defect:.3e})"),
            });
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter {
                name: "rotation",
                reason: format!("determinant {det} (reflection?)"),
            });
        }
        Ok(RigidTransform {
            rotation,
            translation,
        })
    }

    /// Rotation about a unit axis by `angle` radians plus translation.
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let rotation = nalgebra::Rotation3::from_axis_angle(
            &nalgebra::Unit::new_normalize(axis),
            angle,
        )
        .into_inner();
        RigidTransform {
            rotation,
            translation,
        }
    }

    #[inline]
    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    #[inline]
    pub fn rotate_normal(&self, n: &Normal) -> Normal {
        self.rotation * n
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Row-major 4x4 homogeneous matrix.
    pub fn to_matrix4(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn from_matrix4(m: &Matrix4<f64>) -> Result<Self> {
        RigidTransform::new(
            m.fixed_view::<3, 3>(0, 0).into_owned(),
            m.fixed_view::<3, 1>(0, 3).into_owned(),
        )
    }
}

/// Maps every point through `T`; normals are rotated only.
pub fn apply_transform(cloud: &PointCloud, t: &RigidTransform) -> PointCloud {
    PointCloud {
        points: cloud.points.iter().map(|p| t.apply(p)).collect(),
        normals: cloud
            .normals
            .as_ref()
            .map(|ns| ns.iter().map(|n| t.rotate_normal(n)).collect()),
    }
}
