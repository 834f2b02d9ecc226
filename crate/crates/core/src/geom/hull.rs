//! Exact 3D convex hull (quickhull) with outward-oriented supporting planes.
//!
//! The hull doubles as an inside/outside oracle for near-convex solids: a
//! point is inside iff it satisfies every supporting half-space, and the
//! violation margin `max_f(n_f . x - b_f)` measures by how much it fails.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::Vec3;
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvexHull {
    pub vertices: Vec<Vec3>,
    /// Counter-clockwise when seen from outside.
    pub faces: Vec<[usize; 3]>,
    pub face_normals: Vec<Vec3>,
    pub face_offsets: Vec<f64>,
    /// Index of each hull vertex in the input point list.
    pub source_indices: Vec<usize>,
}

struct Face {
    v: [usize; 3],
    normal: Vec3,
    offset: f64,
    outside: Vec<usize>,
    alive: bool,
}

impl Face {
    fn new(points: &[Vec3], v: [usize; 3]) -> Self {
        let (a, b, c) = (points[v[0]], points[v[1]], points[v[2]]);
        let normal = (b - a).cross(c - a).normalized().unwrap_or(Vec3::ZERO);
        let offset = (normal.dot(a) + normal.dot(b) + normal.dot(c)) / 3.0;
        Self {
            v,
            normal,
            offset,
            outside: Vec::new(),
            alive: true,
        }
    }

    #[inline]
    fn distance(&self, p: Vec3) -> f64 {
        self.normal.dot(p) - self.offset
    }

    fn edges(&self) -> [(usize, usize); 3] {
        let [a, b, c] = self.v;
        [(a, b), (b, c), (c, a)]
    }
}

impl ConvexHull {
    /// Builds the hull of `points`; needs at least four non-coplanar points.
    pub fn build(points: &[Vec3]) -> Result<Self> {
        if points.len() < 4 {
            return Err(Error::DegenerateHull(format!(
                "need at least 4 points, got {}",
                points.len()
            )));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::Invalid("non-finite point passed to hull".into()));
        }
        let scale = points
            .iter()
            .fold(0.0f64, |m, p| m.max(p.abs().max_element()))
            .max(f64::MIN_POSITIVE);
        let eps = 1e-11 * scale.max(1.0);

        let simplex = initial_simplex(points, scale)?;
        let mut faces: Vec<Face> = Vec::new();
        let mut edge_face: HashMap<(usize, usize), usize> = HashMap::new();

        let interior = simplex
            .iter()
            .fold(Vec3::ZERO, |acc, &i| acc + points[i])
            / 4.0;
        let [a, b, c, d] = simplex;
        for tri in [[a, b, c], [a, b, d], [a, c, d], [b, c, d]] {
            let mut f = Face::new(points, tri);
            if f.distance(interior) > 0.0 {
                f = Face::new(points, [tri[0], tri[2], tri[1]]);
            }
            let id = faces.len();
            for e in f.edges() {
                edge_face.insert(e, id);
            }
            faces.push(f);
        }

        for (i, &p) in points.iter().enumerate() {
            if simplex.contains(&i) {
                continue;
            }
            if let Some(f) = faces.iter_mut().find(|f| f.distance(p) > eps) {
                f.outside.push(i);
            }
        }

        let mut pending: Vec<usize> = (0..faces.len())
            .filter(|&i| !faces[i].outside.is_empty())
            .collect();
        let mut visible: Vec<usize> = Vec::new();
        let mut is_visible: HashMap<usize, bool> = HashMap::new();
        let mut horizon: Vec<(usize, usize)> = Vec::new();

        while let Some(fid) = pending.pop() {
            if !faces[fid].alive || faces[fid].outside.is_empty() {
                continue;
            }
            let eye = *faces[fid]
                .outside
                .iter()
                .max_by(|&&i, &&j| {
                    faces[fid]
                        .distance(points[i])
                        .total_cmp(&faces[fid].distance(points[j]))
                        .then(j.cmp(&i))
                })
                .expect("non-empty outside set");
            let eye_p = points[eye];

            // Flood the set of faces that can see the eye point.
            visible.clear();
            is_visible.clear();
            horizon.clear();
            visible.push(fid);
            is_visible.insert(fid, true);
            let mut cursor = 0;
            while cursor < visible.len() {
                let f = visible[cursor];
                cursor += 1;
                for (a, b) in faces[f].edges() {
                    let nb = *edge_face
                        .get(&(b, a))
                        .ok_or_else(|| Error::DegenerateHull("hull topology lost a twin edge".into()))?;
                    match is_visible.get(&nb) {
                        Some(true) => {}
                        Some(false) => horizon.push((a, b)),
                        None => {
                            if faces[nb].distance(eye_p) > eps {
                                is_visible.insert(nb, true);
                                visible.push(nb);
                            } else {
                                is_visible.insert(nb, false);
                                horizon.push((a, b));
                            }
                        }
                    }
                }
            }
            let mut orphans: Vec<usize> = Vec::new();
            for &f in &visible {
                let face = &mut faces[f];
                face.alive = false;
                orphans.extend(face.outside.drain(..).filter(|&i| i != eye));
                for e in face.edges() {
                    if edge_face.get(&e) == Some(&f) {
                        edge_face.remove(&e);
                    }
                }
            }

            let first_new = faces.len();
            for &(a, b) in &horizon {
                let f = Face::new(points, [a, b, eye]);
                let id = faces.len();
                for e in f.edges() {
                    edge_face.insert(e, id);
                }
                faces.push(f);
            }
            for i in orphans {
                let p = points[i];
                if let Some(f) = faces[first_new..].iter_mut().find(|f| f.distance(p) > eps) {
                    f.outside.push(i);
                }
            }
            pending.extend((first_new..faces.len()).filter(|&i| !faces[i].outside.is_empty()));
        }

        Self::finish(points, faces.into_iter().filter(|f| f.alive).map(|f| f.v).collect())
    }

    fn finish(points: &[Vec3], tris: Vec<[usize; 3]>) -> Result<Self> {
        let mut remap: HashMap<usize, usize> = HashMap::new();
        let mut source_indices = Vec::new();
        let mut faces = Vec::with_capacity(tris.len());
        for t in tris {
            let mut out = [0usize; 3];
            for (k, &src) in t.iter().enumerate() {
                out[k] = *remap.entry(src).or_insert_with(|| {
                    source_indices.push(src);
                    source_indices.len() - 1
                });
            }
            faces.push(out);
        }
        if faces.len() < 4 {
            return Err(Error::DegenerateHull(format!("only {} faces", faces.len())));
        }
        let vertices: Vec<Vec3> = source_indices.iter().map(|&i| points[i]).collect();
        let centroid = vertices.iter().fold(Vec3::ZERO, |a, &p| a + p) / vertices.len() as f64;

        let mut face_normals = Vec::with_capacity(faces.len());
        let mut face_offsets = Vec::with_capacity(faces.len());
        for f in faces.iter_mut() {
            let face = Face::new(&vertices, *f);
            let (normal, offset) = if face.distance(centroid) > 0.0 {
                f.swap(1, 2);
                (-face.normal, -face.offset)
            } else {
                (face.normal, face.offset)
            };
            face_normals.push(normal);
            face_offsets.push(offset);
        }
        Ok(Self {
            vertices,
            faces,
            face_normals,
            face_offsets,
            source_indices,
        })
    }

    /// `max_f (n_f . x - b_f)`: negative strictly inside, positive outside.
    pub fn violation_margin(&self, x: Vec3) -> f64 {
        self.face_normals
            .iter()
            .zip(&self.face_offsets)
            .fold(f64::NEG_INFINITY, |m, (n, b)| m.max(n.dot(x) - b))
    }

    /// Whether `x` is within `tol` of the boundary, assuming `x` is not
    /// outside the hull by more than `tol` (true for every input point).
    /// Stops at the first supporting plane that comes within `tol`.
    pub fn near_boundary_from_inside(&self, x: Vec3, tol: f64) -> bool {
        self.face_normals
            .iter()
            .zip(&self.face_offsets)
            .any(|(n, b)| n.dot(x) - b >= -tol)
    }

    pub fn contains(&self, x: Vec3, tol: f64) -> bool {
        self.violation_margin(x) <= tol
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    /// Enclosed volume via the divergence theorem.
    pub fn volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                let [a, b, c] = f.map(|i| self.vertices[i]);
                a.dot(b.cross(c)) / 6.0
            })
            .sum()
    }
}

fn initial_simplex(points: &[Vec3], scale: f64) -> Result<[usize; 4]> {
    let degenerate_tol = 1e-9 * scale;

    let mut extremes = [0usize; 6];
    for (i, p) in points.iter().enumerate() {
        for axis in 0..3 {
            if p[axis] < points[extremes[2 * axis]][axis] {
                extremes[2 * axis] = i;
            }
            if p[axis] > points[extremes[2 * axis + 1]][axis] {
                extremes[2 * axis + 1] = i;
            }
        }
    }
    let mut best = (0, 0, -1.0);
    for &i in &extremes {
        for &j in &extremes {
            let d = points[i].distance_squared(points[j]);
            if d > best.2 {
                best = (i, j, d);
            }
        }
    }
    let (i0, i1, d01) = best;
    if d01.sqrt() <= degenerate_tol {
        return Err(Error::DegenerateHull("all points coincide".into()));
    }

    let (p0, p1) = (points[i0], points[i1]);
    let dir = (p1 - p0) / d01.sqrt();
    let (i2, d2) = points
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let v = p - p0;
            (i, (v - dir * v.dot(dir)).norm())
        })
        .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
        .expect("non-empty");
    if d2 <= degenerate_tol {
        return Err(Error::DegenerateHull("points are collinear".into()));
    }

    let n = (p1 - p0).cross(points[i2] - p0).normalized().expect("non-collinear");
    let (i3, d3) = points
        .iter()
        .enumerate()
        .map(|(i, &p)| (i, n.dot(p - p0).abs()))
        .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
        .expect("non-empty");
    if d3 <= degenerate_tol {
        return Err(Error::DegenerateHull("points are coplanar".into()));
    }
    Ok([i0, i1, i2, i3])
}
