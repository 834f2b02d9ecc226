use crate::geom::{Aabb, ConvexHull, KdTree, PointCloud, Vec3};
use crate::{Error, Result};

/// Labelling context for one normalized cloud: the hull gives the sign and
/// the near-boundary subset of the cloud gives the distance magnitude.
#[derive(Debug, Clone)]
pub struct SignedField {
    pub hull: ConvexHull,
    pub surf_tree: KdTree,
    pub bounds: Aabb,
    pub tol_sign: f64,
    pub tol_surf: f64,
}

impl SignedField {
    pub fn build(cloud: &PointCloud, tol_sign: f64, tol_surf: f64) -> Result<Self> {
        let hull = ConvexHull::build(&cloud.points)?;
        let surf: Vec<Vec3> = cloud
            .points
            .iter()
            .copied()
            .filter(|&q| hull.violation_margin(q).abs() <= tol_surf)
            .collect();
        if surf.is_empty() {
            return Err(Error::EmptySurfaceSubset(tol_surf));
        }
        let bounds = cloud.aabb().ok_or(Error::Empty("point cloud"))?;
        Ok(Self {
            hull,
            surf_tree: KdTree::build(surf)?,
            bounds,
            tol_sign,
            tol_surf,
        })
    }

    pub fn surface_points(&self) -> &[Vec3] {
        self.surf_tree.points()
    }

    pub fn sign(&self, x: Vec3) -> f64 {
        if self.hull.violation_margin(x) <= self.tol_sign {
            -1.0
        } else {
            1.0
        }
    }

    /// Unclamped signed distance estimate.
    pub fn signed_distance(&self, x: Vec3) -> f64 {
        self.sign(x) * self.surf_tree.nearest_distance(x)
    }

    pub fn evaluate(&self, x: Vec3, delta: f64) -> f64 {
        self.signed_distance(x).clamp(-delta, delta)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::Rng;

    /// Fibonacci lattice on the sphere of radius `r`.
    pub(crate) fn sphere_points(n: usize, r: f64) -> Vec<Vec3> {
        crate::geom::fibonacci_sphere(n, r)
    }

    fn sphere_field(n: usize) -> SignedField {
        let cloud = PointCloud::new("s", sphere_points(n, 1.0)).unwrap();
        SignedField::build(&cloud, 0.0, 1e-3).unwrap()
    }

    #[test]
    fn surface_subset_of_pure_surface_cloud_is_everything() {
        let f = sphere_field(2000);
        assert_eq!(f.surface_points().len(), 2000);
    }

    #[test]
    fn interior_points_are_excluded() {
        let mut pts = sphere_points(2000, 1.0);
        let mut rng = crate::seeds::rng(3);
        for _ in 0..500 {
            let p = Vec3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
            pts.push(p);
        }
        let f = SignedField::build(&PointCloud::new("s", pts).unwrap(), 0.0, 1e-3).unwrap();
        assert_eq!(f.surface_points().len(), 2000);
    }

    #[test]
    fn tiny_clouds_fail() {
        let pts = vec![Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)];
        assert!(SignedField::build(&PointCloud::new("t", pts).unwrap(), 0.0, 1e-3).is_err());
    }

    #[test]
    fn sphere_values() {
        let f = sphere_field(50_000);
        assert_eq!(f.evaluate(Vec3::ZERO, 0.1), -0.1);
        let inner = f.evaluate(Vec3::new(0.0, 0.0, 0.95), 0.1);
        let outer = f.evaluate(Vec3::new(0.0, 0.0, 1.02), 0.1);
        // Lattice spacing is about sqrt(4 pi / n) ~ 0.016.
        assert!((inner + 0.05).abs() < 0.016, "{inner}");
        assert!((outer - 0.02).abs() < 0.016, "{outer}");
    }

    #[test]
    fn box_signs_match_analytic() {
        let mut pts = Vec::new();
        let g = 40;
        for i in 0..=g {
            for j in 0..=g {
                let (u, v) = (-1.0 + 2.0 * i as f64 / g as f64, -1.0 + 2.0 * j as f64 / g as f64);
                for s in [-1.0, 1.0] {
                    pts.push(Vec3::new(u, v, s));
                    pts.push(Vec3::new(u, s, v));
                    pts.push(Vec3::new(s, u, v));
                }
            }
        }
        let f = SignedField::build(&PointCloud::new("b", pts).unwrap(), 0.0, 1e-3).unwrap();
        let spacing = 2.0 / g as f64;
        let mut rng = crate::seeds::rng(8);
        for _ in 0..2000 {
            let x = Vec3::new(rng.random_range(-1.3..1.3), rng.random_range(-1.3..1.3), rng.random_range(-1.3..1.3));
            let q = x.abs() - Vec3::splat(1.0);
            let analytic = q.max(Vec3::ZERO).norm() + q.max_element().min(0.0);
            if analytic.abs() > spacing {
                assert_eq!(f.sign(x), analytic.signum(), "{x:?}");
            }
        }
    }
}
