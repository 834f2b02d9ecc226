use serde::{Deserialize, Serialize};

use super::{Aabb, Vec3};
use crate::{Error, Result};

/// An ordered point sample of one design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub design_id: String,
    pub points: Vec<Vec3>,
}

/// Uniform scale + translation that maps model space into the normalized cube.
///
/// `normalized = (p - center) * scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitCubeTransform {
    pub scale: f64,
    pub center: Vec3,
}

impl UnitCubeTransform {
    pub fn apply(&self, p: Vec3) -> Vec3 {
        (p - self.center) * self.scale
    }

    pub fn invert(&self, p: Vec3) -> Vec3 {
        p / self.scale + self.center
    }
}

impl PointCloud {
    /// Validates that the cloud is non-empty and finite.
    pub fn new(design_id: impl Into<String>, points: Vec<Vec3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("point cloud"));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::Invalid(format!("point {i} has a non-finite component")));
        }
        Ok(Self {
            design_id: design_id.into(),
            points,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn aabb(&self) -> Option<Aabb> {
        Aabb::from_points(&self.points)
    }

    /// Maps the cloud into `[-1, 1]^3` with a single uniform scale
    /// `2 / max_extent` about the bounding-box center.
    pub fn normalize_to_unit_cube(&self) -> Result<(PointCloud, UnitCubeTransform)> {
        let bbox = self.aabb().ok_or(Error::Empty("point cloud"))?;
        let extent = bbox.max_extent();
        if !(extent > 0.0) {
            return Err(Error::DegenerateExtent);
        }
        let tf = UnitCubeTransform {
            scale: 2.0 / extent,
            center: bbox.center(),
        };
        let points = self
            .points
            .iter()
            .map(|&p| {
                let q = tf.apply(p);
                // Rounding can push the extreme coordinate a hair past 1.
                Vec3::new(q.x.clamp(-1.0, 1.0), q.y.clamp(-1.0, 1.0), q.z.clamp(-1.0, 1.0))
            })
            .collect();
        Ok((
            PointCloud {
                design_id: self.design_id.clone(),
                points,
            },
            tf,
        ))
    }

    pub fn transformed(&self, f: impl Fn(Vec3) -> Vec3) -> PointCloud {
        PointCloud {
            design_id: self.design_id.clone(),
            points: self.points.iter().map(|&p| f(p)).collect(),
        }
    }
}

/// `n` nearly uniform points on the sphere of radius `r` about the origin
/// (golden-angle spiral).
pub fn fibonacci_sphere(n: usize, r: f64) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let rho = (1.0 - z * z).sqrt();
            let th = golden * i as f64;
            Vec3::new(rho * th.cos(), rho * th.sin(), z) * r
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cloud(pts: &[[f64; 3]]) -> PointCloud {
        PointCloud::new("t", pts.iter().map(|&a| Vec3::from_array(a)).collect()).unwrap()
    }

    #[test]
    fn tall_box_maps_z_to_full_range() {
        let c = cloud(&[[0.0, 0.0, 0.0], [1.0, 1.0, 7.0], [0.5, 0.2, 3.0]]);
        let (n, tf) = c.normalize_to_unit_cube().unwrap();
        assert!((tf.scale - 2.0 / 7.0).abs() < 1e-15);
        let bb = n.aabb().unwrap();
        assert!((bb.min.z + 1.0).abs() < 1e-12 && (bb.max.z - 1.0).abs() < 1e-12);
        assert!((bb.min.x + 1.0 / 7.0).abs() < 1e-12 && (bb.max.x - 1.0 / 7.0).abs() < 1e-12);
        assert!((bb.min.y + 1.0 / 7.0).abs() < 1e-12 && (bb.max.y - 1.0 / 7.0).abs() < 1e-12);
        let back = tf.invert(n.points[2]);
        assert!(back.distance(Vec3::new(0.5, 0.2, 3.0)) < 1e-12);
    }

    #[test]
    fn already_normalized_is_identity_up_to_centering() {
        let c = cloud(&[[-1.0, -0.5, -1.0], [1.0, 0.5, 1.0], [0.3, 0.1, -0.2]]);
        let (n, tf) = c.normalize_to_unit_cube().unwrap();
        assert_eq!(tf.scale, 1.0);
        assert_eq!(n.points, c.points);
    }

    #[test]
    fn repeated_point_is_degenerate() {
        let c = cloud(&[[2.0, 2.0, 2.0]; 5]);
        assert!(matches!(c.normalize_to_unit_cube(), Err(Error::DegenerateExtent)));
    }

    #[test]
    fn rejects_nan_and_empty() {
        assert!(PointCloud::new("e", vec![]).is_err());
        assert!(PointCloud::new("n", vec![Vec3::new(f64::NAN, 0.0, 0.0)]).is_err());
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(pts in prop::collection::vec(prop::array::uniform3(-50.0f64..50.0), 2..60)) {
            let c = cloud(&pts);
            prop_assume!(c.aabb().unwrap().max_extent() > 1e-6);
            let (once, _) = c.normalize_to_unit_cube().unwrap();
            let (twice, _) = once.normalize_to_unit_cube().unwrap();
            for (a, b) in once.points.iter().zip(&twice.points) {
                prop_assert!(a.distance(*b) <= 1e-12);
            }
            let bb = once.aabb().unwrap();
            prop_assert!(bb.min.x >= -1.0 && bb.max.x <= 1.0);
            prop_assert!(bb.min.z >= -1.0 && bb.max.z <= 1.0);
            prop_assert!((bb.max_extent() - 2.0).abs() < 1e-12);
        }
    }
}
