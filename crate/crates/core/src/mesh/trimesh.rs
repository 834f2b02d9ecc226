use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geom::{Aabb, Vec3};
use crate::{seeds, Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    /// Counter-clockwise seen from outside.
    pub triangles: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn corners(&self, t: usize) -> [Vec3; 3] {
        self.triangles[t].map(|i| self.vertices[i as usize])
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        0.5 * (b - a).cross(c - a).norm()
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Signed enclosed volume; positive for outward orientation.
    pub fn volume(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.corners(t);
                a.dot(b.cross(c)) / 6.0
            })
            .sum()
    }

    pub fn bounds(&self) -> Option<Aabb> {
        Aabb::from_points(&self.vertices)
    }

    /// Longest edge over twice `sqrt(3)` times the inradius; 1 for an
    /// equilateral triangle, infinite for a degenerate one.
    pub fn aspect_ratio(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        let l = [(b - a).norm(), (c - b).norm(), (a - c).norm()];
        let area = 0.5 * (b - a).cross(c - a).norm();
        if area == 0.0 {
            return f64::INFINITY;
        }
        let lmax = l[0].max(l[1]).max(l[2]);
        lmax * (l[0] + l[1] + l[2]) / (4.0 * 3f64.sqrt() * area)
    }

    pub fn max_aspect_ratio(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.aspect_ratio(t)).fold(0.0, f64::max)
    }

    /// Drops triangles whose area is at most `min_area` and then any
    /// vertices no longer referenced.
    pub fn remove_degenerate(&mut self, min_area: f64) -> usize {
        let before = self.triangles.len();
        let keep: Vec<bool> = (0..before).map(|t| self.triangle_area(t) > min_area).collect();
        let mut k = keep.iter();
        self.triangles.retain(|_| *k.next().unwrap());
        self.compact();
        before - self.triangles.len()
    }

    pub(crate) fn compact(&mut self) {
        let mut remap = vec![u32::MAX; self.vertices.len()];
        let mut vertices = Vec::new();
        for tri in &mut self.triangles {
            for v in tri.iter_mut() {
                if remap[*v as usize] == u32::MAX {
                    remap[*v as usize] = vertices.len() as u32;
                    vertices.push(self.vertices[*v as usize]);
                }
                *v = remap[*v as usize];
            }
        }
        self.vertices = vertices;
    }

    /// `n` points uniformly distributed over the surface by area.
    pub fn sample_surface(&self, n: usize, seed: u64) -> Result<Vec<Vec3>> {
        let mut cumulative = Vec::with_capacity(self.triangles.len());
        let mut total = 0.0;
        for t in 0..self.triangles.len() {
            total += self.triangle_area(t);
            cumulative.push(total);
        }
        if !(total > 0.0) {
            return Err(Error::NoPredictedSurface);
        }
        let mut rng = seeds::rng(seed);
        Ok((0..n)
            .map(|_| {
                let r = rng.random::<f64>() * total;
                let t = cumulative.partition_point(|&c| c <= r).min(cumulative.len() - 1);
                let [a, b, c] = self.corners(t);
                let (u, v): (f64, f64) = (rng.random(), rng.random());
                let su = u.sqrt();
                a * (1.0 - su) + b * (su * (1.0 - v)) + c * (su * v)
            })
            .collect())
    }

    pub fn transformed(&self, f: impl Fn(Vec3) -> Vec3) -> Self {
        Self {
            vertices: self.vertices.iter().map(|&v| f(v)).collect(),
            triangles: self.triangles.clone(),
        }
    }

    pub fn write_obj(&self, path: &Path) -> Result<()> {
        let mut s = String::with_capacity(40 * (self.vertices.len() + self.triangles.len()));
        for v in &self.vertices {
            writeln!(s, "v {} {} {}", v.x, v.y, v.z).unwrap();
        }
        for t in &self.triangles {
            writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).unwrap();
        }
        fs::write(path, s)?;
        Ok(())
    }

    /// Reads `v` and `f` records; polygon faces are fan-triangulated and
    /// texture or normal indices after `/` are ignored.
    pub fn read_obj(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut mesh = Self::default();
        for (ln, line) in text.lines().enumerate() {
            let mut it = line.split_whitespace();
            let bad = |m: &str| Error::parse(path, format!("line {}: {m}", ln + 1));
            match it.next() {
                Some("v") => {
                    let c: Vec<f64> = it.take(3).map(|s| s.parse().map_err(|_| bad("bad coordinate"))).collect::<Result<_>>()?;
                    if c.len() != 3 {
                        return Err(bad("vertex needs three coordinates"));
                    }
                    mesh.vertices.push(Vec3::new(c[0], c[1], c[2]));
                }
                Some("f") => {
                    let idx: Vec<u32> = it
                        .map(|s| {
                            let i: i64 = s.split('/').next().unwrap_or("").parse().map_err(|_| bad("bad face index"))?;
                            let n = mesh.vertices.len() as i64;
                            let i = if i < 0 { n + i } else { i - 1 };
                            if i < 0 || i >= n {
                                return Err(bad("face index out of range"));
                            }
                            Ok(i as u32)
                        })
                        .collect::<Result<_>>()?;
                    if idx.len() < 3 {
                        return Err(bad("face needs three vertices"));
                    }
                    for w in 1..idx.len() - 1 {
                        mesh.triangles.push([idx[0], idx[w], idx[w + 1]]);
                    }
                }
                _ => {}
            }
        }
        Ok(mesh)
    }

    pub fn write_stl(&self, path: &Path) -> Result<()> {
        let mut out = Vec::with_capacity(84 + 50 * self.triangles.len());
        out.extend_from_slice(&[0u8; 80]);
        out.extend_from_slice(&(self.triangles.len() as u32).to_le_bytes());
        for t in 0..self.triangles.len() {
            let [a, b, c] = self.corners(t);
            let n = (b - a).cross(c - a).normalized().unwrap_or(Vec3::ZERO);
            for v in [n, a, b, c] {
                for x in [v.x, v.y, v.z] {
                    out.extend_from_slice(&(x as f32).to_le_bytes());
                }
            }
            out.extend_from_slice(&[0, 0]);
        }
        fs::write(path, out)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WatertightReport {
    pub watertight: bool,
    /// Undirected edges used by exactly one triangle.
    pub boundary_edges: usize,
    /// Undirected edges used by more than two triangles.
    pub nonmanifold_edges: usize,
    /// Edges shared by two triangles that traverse them in the same direction.
    pub misoriented_edges: usize,
    pub reason: Option<String>,
}

/// Closed, consistently oriented 2-manifold test: every directed edge must
/// occur exactly once and its reverse exactly once.
pub fn check_watertight(mesh: &TriangleMesh) -> WatertightReport {
    if mesh.is_empty() {
        return WatertightReport {
            watertight: false,
            boundary_edges: 0,
            nonmanifold_edges: 0,
            misoriented_edges: 0,
            reason: Some("empty".into()),
        };
    }
    let mut directed: HashMap<(u32, u32), u32> = HashMap::with_capacity(3 * mesh.triangles.len());
    for t in &mesh.triangles {
        for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            *directed.entry((a, b)).or_default() += 1;
        }
    }
    let mut undirected: HashMap<(u32, u32), (u32, u32)> = HashMap::new();
    for (&(a, b), &n) in &directed {
        let e = undirected.entry((a.min(b), a.max(b))).or_default();
        if a < b {
            e.0 += n;
        } else {
            e.1 += n;
        }
    }
    let (mut boundary, mut nonmanifold, mut misoriented) = (0, 0, 0);
    for &(fwd, bwd) in undirected.values() {
        match fwd + bwd {
            1 => boundary += 1,
            2 if fwd != 1 => misoriented += 1,
            2 => {}
            _ => nonmanifold += 1,
        }
    }
    let watertight = boundary == 0 && nonmanifold == 0 && misoriented == 0;
    let reason = (!watertight).then(|| {
        format!("{boundary} boundary, {nonmanifold} non-manifold, {misoriented} misoriented edges")
    });
    WatertightReport {
        watertight,
        boundary_edges: boundary,
        nonmanifold_edges: nonmanifold,
        misoriented_edges: misoriented,
        reason,
    }
}
