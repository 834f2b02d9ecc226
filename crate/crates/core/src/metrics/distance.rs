use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geom::{Aabb, KdTree, PointCloud, Vec3};
use crate::mesh::TriangleMesh;
use crate::sdf::SignedField;
use crate::{Error, Result};

/// How the predicted surface is represented when measuring distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SurfaceMode {
    /// Area-weighted uniform samples of the mesh, searched in a kd-tree.
    Sampled { n: usize, seed: u64 },
    /// Exact point-to-triangle distance.
    Exact,
}

impl Default for SurfaceMode {
    fn default() -> Self {
        SurfaceMode::Sampled { n: 100_000, seed: 0 }
    }
}

/// Which cloud points act as the reference set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ReferenceSet {
    /// Every point of the cloud, interior ones included.
    Full,
    /// Only points within `tol` of the cloud's convex-hull boundary.
    HullSurface { tol: f64 },
}

impl Default for ReferenceSet {
    fn default() -> Self {
        ReferenceSet::HullSurface { tol: 1e-3 }
    }
}

pub fn reference_points(cloud: &PointCloud, set: ReferenceSet) -> Result<Vec<Vec3>> {
    match set {
        ReferenceSet::Full => Ok(cloud.points.clone()),
        ReferenceSet::HullSurface { tol } => Ok(SignedField::build(cloud, 0.0, tol)?.surface_points().to_vec()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub design_id: String,
    pub mean_directed_distance: f64,
    pub n_ref: usize,
    /// Largest side of the reference points' bounding box.
    pub d_max_reference: f64,
}

impl DistanceReport {
    pub fn relative(&self) -> f64 {
        self.mean_directed_distance / self.d_max_reference
    }
}

/// Distance from each reference point to the nearest point of `pred`.
pub fn point_to_surface_distances(reference: &[Vec3], pred: &TriangleMesh, mode: SurfaceMode) -> Result<Vec<f64>> {
    if reference.is_empty() {
        return Err(Error::Empty("reference points"));
    }
    if pred.is_empty() || !(pred.area() > 0.0) {
        return Err(Error::NoPredictedSurface);
    }
    match mode {
        SurfaceMode::Sampled { n, seed } => {
            if n == 0 {
                return Err(Error::Invalid("surface sample count must be positive".into()));
            }
            let tree = KdTree::build(pred.sample_surface(n, seed)?)?;
            Ok(reference.par_iter().map(|&x| tree.nearest_distance(x)).collect())
        }
        SurfaceMode::Exact => {
            let index = TriangleIndex::new(pred)?;
            Ok(reference.par_iter().map(|&x| index.distance(x)).collect())
        }
    }
}

/// Mean over reference points of the distance to the predicted surface.
/// Directed: swapping the roles of the two shapes changes the value.
pub fn surface_distance(reference: &[Vec3], pred: &TriangleMesh, mode: SurfaceMode) -> Result<f64> {
    let d = point_to_surface_distances(reference, pred, mode)?;
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}

/// Mean nearest-neighbour distance from `reference` to a point set.
pub fn point_set_distance(reference: &[Vec3], pred: &[Vec3]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::Empty("reference points"));
    }
    if pred.is_empty() {
        return Err(Error::NoPredictedSurface);
    }
    let tree = KdTree::build(pred.to_vec())?;
    let d: Vec<f64> = reference.par_iter().map(|&x| tree.nearest_distance(x)).collect();
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}

pub fn distance_report(design_id: &str, reference: &[Vec3], pred: &TriangleMesh, mode: SurfaceMode) -> Result<DistanceReport> {
    let mean = surface_distance(reference, pred, mode)?;
    let bounds = Aabb::from_points(reference).ok_or(Error::Empty("reference points"))?;
    Ok(DistanceReport {
        design_id: design_id.to_string(),
        mean_directed_distance: mean,
        n_ref: reference.len(),
        d_max_reference: bounds.max_extent(),
    })
}

/// CSV with header `design_id,distance`.
pub fn write_distance_csv(path: &Path, reports: &[DistanceReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["design_id", "distance"])?;
    for r in reports {
        w.write_record([r.design_id.clone(), format!("{:e}", r.mean_directed_distance)])?;
    }
    w.flush()?;
    Ok(())
}

/// Closest point to `p` on triangle `abc`.
pub fn closest_point_on_triangle(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

/// Triangle lookup by centroid: every point of a triangle lies within
/// `radius` of its centroid, which bounds the candidates to examine.
struct TriangleIndex<'a> {
    mesh: &'a TriangleMesh,
    centroids: KdTree,
    radius: f64,
}

impl<'a> TriangleIndex<'a> {
    fn new(mesh: &'a TriangleMesh) -> Result<Self> {
        let mut radius: f64 = 0.0;
        let centroids: Vec<Vec3> = (0..mesh.triangles.len())
            .map(|t| {
                let [a, b, c] = mesh.corners(t);
                let g = (a + b + c) / 3.0;
                radius = radius.max(g.distance(a)).max(g.distance(b)).max(g.distance(c));
                g
            })
            .collect();
        Ok(Self { mesh, centroids: KdTree::build(centroids)?, radius })
    }

    fn tri_distance(&self, x: Vec3, t: usize) -> f64 {
        let [a, b, c] = self.mesh.corners(t);
        closest_point_on_triangle(x, a, b, c).distance(x)
    }

    fn distance(&self, x: Vec3) -> f64 {
        let first = self.centroids.nearest(x);
        let mut best = self.tri_distance(x, first.index);
        let mut k = 16;
        loop {
            let near = self.centroids.k_nearest(x, k.min(self.centroids.len()));
            for n in &near {
                if n.distance > best + self.radius {
                    return best;
                }
                best = best.min(self.tri_distance(x, n.index));
            }
            if near.len() == self.centroids.len() {
                return best;
            }
            k *= 4;
        }
    }
}
