use rand::Rng;

use super::{BladeParams, Profile};
use crate::geom::{PointCloud, Vec3};
use crate::{seeds, Error, Result};

/// Linear loft between a bottom section at `z = 0` and a coaxial top section
/// at `z = height`.
#[derive(Debug, Clone)]
pub struct BladeSolid {
    pub bottom: Profile,
    pub top: Profile,
    pub height: f64,
}

impl BladeSolid {
    pub fn from_params(p: &BladeParams) -> Result<Self> {
        Self::new(
            Profile::two_circle_hull(p.bld, p.bsd, p.bcd)?,
            Profile::two_circle_hull(p.ld(), p.sd(), p.cd())?,
            p.height,
        )
    }

    pub fn new(bottom: Profile, top: Profile, height: f64) -> Result<Self> {
        if bottom.len() != top.len() {
            return Err(Error::Invalid("bottom and top sections need equal vertex counts".into()));
        }
        if !(height > 0.0) {
            return Err(Error::Invalid(format!("blade height must be positive, got {height}")));
        }
        Ok(Self { bottom, top, height })
    }

    /// Cross-section at height fraction `t` in `[0, 1]`.
    pub fn section(&self, t: f64) -> Profile {
        self.bottom.lerp(&self.top, t)
    }

    /// Boundary triangles: side strip plus both caps.
    pub fn surface_triangles(&self) -> Vec<[Vec3; 3]> {
        let n = self.bottom.len();
        let lift = |v: [f64; 2], z: f64| Vec3::new(v[0], v[1], z);
        let mut tris = Vec::with_capacity(4 * n);
        for k in 0..n {
            let k1 = (k + 1) % n;
            let a0 = lift(self.bottom.vertices[k], 0.0);
            let a1 = lift(self.bottom.vertices[k1], 0.0);
            let b0 = lift(self.top.vertices[k], self.height);
            let b1 = lift(self.top.vertices[k1], self.height);
            tris.push([a0, a1, b1]);
            tris.push([a0, b1, b0]);
        }
        for k in 1..n - 1 {
            // Bottom faces down, top faces up.
            tris.push([
                lift(self.bottom.vertices[0], 0.0),
                lift(self.bottom.vertices[k + 1], 0.0),
                lift(self.bottom.vertices[k], 0.0),
            ]);
            tris.push([
                lift(self.top.vertices[0], self.height),
                lift(self.top.vertices[k], self.height),
                lift(self.top.vertices[k + 1], self.height),
            ]);
        }
        tris
    }

    pub fn contains(&self, p: Vec3) -> bool {
        if p.z < 0.0 || p.z > self.height {
            return false;
        }
        self.section(p.z / self.height).contains([p.x, p.y])
    }

    fn bounds(&self) -> (Vec3, Vec3) {
        let (a0, a1, a2, a3) = self.bottom.bounds();
        let (b0, b1, b2, b3) = self.top.bounds();
        (
            Vec3::new(a0.min(b0), a2.min(b2), 0.0),
            Vec3::new(a1.max(b1), a3.max(b3), self.height),
        )
    }

    /// `n_surface` boundary points followed by `n_interior` volume points.
    ///
    /// When `n_surface` allows it, the first surface points are the section
    /// vertices themselves, so the convex hull of the surface points encloses
    /// the whole loft (and therefore every interior point). The remainder are
    /// area-weighted uniform samples on the boundary triangles.
    pub fn sample_cloud(&self, design_id: &str, n_surface: usize, n_interior: usize, seed: u64) -> Result<PointCloud> {
        if n_surface == 0 || n_interior == 0 {
            return Err(Error::Invalid("cloud needs surface and interior samples".into()));
        }
        let mut rng = seeds::rng(seed);
        let mut points = Vec::with_capacity(n_surface + n_interior);

        let n = self.bottom.len();
        if n_surface >= 4 * n {
            points.extend(self.bottom.vertices.iter().map(|v| Vec3::new(v[0], v[1], 0.0)));
            points.extend(self.top.vertices.iter().map(|v| Vec3::new(v[0], v[1], self.height)));
        }

        let tris = self.surface_triangles();
        let mut cumulative = Vec::with_capacity(tris.len());
        let mut total = 0.0;
        for [a, b, c] in &tris {
            total += 0.5 * (*b - *a).cross(*c - *a).norm();
            cumulative.push(total);
        }
        while points.len() < n_surface {
            let r = rng.random::<f64>() * total;
            let i = cumulative.partition_point(|&c| c <= r).min(tris.len() - 1);
            let [a, b, c] = tris[i];
            let (u, v): (f64, f64) = (rng.random(), rng.random());
            let su = u.sqrt();
            points.push(a * (1.0 - su) + b * (su * (1.0 - v)) + c * (su * v));
        }

        let (lo, hi) = self.bounds();
        let mut accepted = 0;
        let mut attempts = 0usize;
        while accepted < n_interior {
            attempts += 1;
            if attempts > 1000 * n_interior {
                return Err(Error::Invalid("interior rejection sampling stalled".into()));
            }
            let p = Vec3::new(
                rng.random_range(lo.x..=hi.x),
                rng.random_range(lo.y..=hi.y),
                rng.random_range(lo.z..=hi.z),
            );
            if self.contains(p) {
                points.push(p);
                accepted += 1;
            }
        }
        PointCloud::new(design_id, points)
    }
}

/// Builds the loft for `params` and samples it.
pub fn synthesize_cloud(
    design_id: &str,
    params: &BladeParams,
    n_surface: usize,
    n_interior: usize,
) -> Result<PointCloud> {
    BladeSolid::from_params(params)?.sample_cloud(
        design_id,
        n_surface,
        n_interior,
        seeds::derive(params.seed, "cloud", 0),
    )
}
