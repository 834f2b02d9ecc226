use std::collections::BTreeSet;

use super::TriangleMesh;
use crate::geom::Vec3;

const MAX_PASSES: usize = 16;
/// Edges shorter than this fraction of the mean edge length are collapsed
/// regardless of aspect ratio.
const SHORT_EDGE: f64 = 0.1;

fn aspect(p: [Vec3; 3]) -> f64 {
    let [a, b, c] = p;
    let l = [(b - a).norm(), (c - b).norm(), (a - c).norm()];
    let area = 0.5 * (b - a).cross(c - a).norm();
    if area == 0.0 {
        return f64::INFINITY;
    }
    l[0].max(l[1]).max(l[2]) * (l[0] + l[1] + l[2]) / (4.0 * 3f64.sqrt() * area)
}

fn normal(p: [Vec3; 3]) -> Vec3 {
    (p[1] - p[0]).cross(p[2] - p[0])
}

struct Collapser<'a> {
    verts: &'a [Vec3],
    tris: Vec<[u32; 3]>,
    alive: Vec<bool>,
    incident: Vec<Vec<u32>>,
}

impl Collapser<'_> {
    fn corners(&self, t: u32) -> [Vec3; 3] {
        self.tris[t as usize].map(|v| self.verts[v as usize])
    }

    fn live(&self, v: u32) -> impl Iterator<Item = u32> + '_ {
        self.incident[v as usize].iter().copied().filter(|&t| self.alive[t as usize])
    }

    fn neighbours(&self, v: u32) -> BTreeSet<u32> {
        self.live(v)
            .flat_map(|t| self.tris[t as usize])
            .filter(|&u| u != v)
            .collect()
    }

    /// Worst aspect ratio over the triangles around `keep` and `drop`, before
    /// and after merging `drop` into `keep`; `None` when the merge would break
    /// the manifold or fold a triangle.
    fn evaluate(&self, keep: u32, drop: u32) -> Option<(f64, f64)> {
        let shared: Vec<u32> = self.live(drop).filter(|&t| self.tris[t as usize].contains(&keep)).collect();
        if shared.len() != 2 {
            return None;
        }
        let opposite: BTreeSet<u32> = shared
            .iter()
            .flat_map(|&t| self.tris[t as usize])
            .filter(|&u| u != keep && u != drop)
            .collect();
        if opposite.len() != 2 {
            return None;
        }
        let (na, nb) = (self.neighbours(keep), self.neighbours(drop));
        if na.intersection(&nb).copied().collect::<BTreeSet<_>>() != opposite {
            return None;
        }
        if na.union(&nb).filter(|&&u| u != keep && u != drop).count() < 3 {
            return None;
        }
        let mut before_worst: f64 = 0.0;
        let mut worst: f64 = 0.0;
        for t in self.live(drop).chain(self.live(keep)) {
            before_worst = before_worst.max(aspect(self.corners(t)));
        }
        for t in self.live(drop).filter(|t| !shared.contains(t)) {
            let before = self.corners(t);
            let after = self.tris[t as usize].map(|v| self.verts[if v == drop { keep } else { v } as usize]);
            let (n0, n1) = (normal(before), normal(after));
            // Already-degenerate triangles may stay degenerate for now; a
            // later collapse of the remaining coincident pair removes them.
            if n0.norm_squared() > 0.0 && n0.dot(n1) <= 0.0 {
                return None;
            }
            worst = worst.max(aspect(after));
        }
        for t in self.live(keep).filter(|t| !shared.contains(t)) {
            worst = worst.max(aspect(self.corners(t)));
        }
        Some((before_worst, worst))
    }

    /// Replaces the diagonal `u v` of the quad formed by its two triangles
    /// with the other diagonal. Returns the worst aspect ratio of the pair
    /// before and after, or `None` when the flip is not admissible.
    fn evaluate_flip(&self, u: u32, v: u32) -> Option<(f64, f64, [u32; 2], [[u32; 3]; 2])> {
        let pair: Vec<u32> = self.live(u).filter(|&t| self.tris[t as usize].contains(&v)).collect();
        if pair.len() != 2 {
            return None;
        }
        let apex = |t: u32| self.tris[t as usize].into_iter().find(|&q| q != u && q != v).unwrap();
        // Orient so that the first triangle runs u -> v.
        let runs_uv = |t: u32| {
            let tri = self.tris[t as usize];
            (0..3).any(|i| tri[i] == u && tri[(i + 1) % 3] == v)
        };
        let (t1, t2) = if runs_uv(pair[0]) { (pair[0], pair[1]) } else { (pair[1], pair[0]) };
        if !runs_uv(t1) || runs_uv(t2) {
            return None;
        }
        let (w, x) = (apex(t1), apex(t2));
        if w == x || self.neighbours(w).contains(&x) {
            return None;
        }
        let new = [[w, u, x], [x, v, w]];
        let pos = |t: [u32; 3]| t.map(|q| self.verts[q as usize]);
        let n_old = normal(self.corners(t1)) + normal(self.corners(t2));
        for t in new {
            let n = normal(pos(t));
            if n.norm_squared() == 0.0 || n.dot(n_old) <= 0.0 {
                return None;
            }
        }
        let before = aspect(self.corners(t1)).max(aspect(self.corners(t2)));
        let after = aspect(pos(new[0])).max(aspect(pos(new[1])));
        Some((before, after, [t1, t2], new))
    }

    fn apply_flip(&mut self, pair: [u32; 2], new: [[u32; 3]; 2]) {
        let old = pair.map(|t| self.tris[t as usize]);
        for (&t, tri) in pair.iter().zip(new) {
            self.tris[t as usize] = tri;
        }
        for q in old.iter().flatten().copied().collect::<BTreeSet<u32>>() {
            let inc = &mut self.incident[q as usize];
            inc.retain(|t| !pair.contains(t));
            inc.extend(pair.iter().filter(|&&t| self.tris[t as usize].contains(&q)));
        }
    }

    fn apply(&mut self, keep: u32, drop: u32) {
        let moved: Vec<u32> = self.live(drop).collect();
        for t in moved {
            let tri = &mut self.tris[t as usize];
            if tri.contains(&keep) {
                self.alive[t as usize] = false;
            } else {
                for v in tri.iter_mut().filter(|v| **v == drop) {
                    *v = keep;
                }
                self.incident[keep as usize].push(t);
            }
        }
        self.incident[drop as usize].clear();
    }
}

/// Removes sliver triangles by half-edge collapses: for every triangle whose
/// aspect ratio exceeds `max_aspect`, its shortest collapsible edge is merged
/// into one of its endpoints. Collapses respect the link condition and never
/// fold a neighbouring triangle, so closed manifolds stay closed, and
/// surviving vertices keep their original positions. Returns the number of
/// collapses.
pub fn collapse_slivers(mesh: &mut TriangleMesh, max_aspect: f64) -> usize {
    let mut incident = vec![Vec::new(); mesh.vertices.len()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        for &v in tri {
            incident[v as usize].push(t as u32);
        }
    }
    let mut c = Collapser {
        verts: &mesh.vertices,
        tris: std::mem::take(&mut mesh.triangles),
        alive: vec![true; incident.iter().map(Vec::len).sum::<usize>() / 3],
        incident,
    };
    let mut total = 0;

    // Very short edges first: they are where needles come from, and they
    // often cluster so that no single collapse improves the worst ratio.
    let mean_edge = {
        let (sum, n) = c.tris.iter().fold((0.0, 0usize), |(s, n), t| {
            let p = t.map(|q| c.verts[q as usize]);
            (s + (p[1] - p[0]).norm() + (p[2] - p[1]).norm() + (p[0] - p[2]).norm(), n + 3)
        });
        sum / n.max(1) as f64
    };
    for _ in 0..MAX_PASSES {
        let mut short: Vec<(f64, u32, u32)> = Vec::new();
        for (t, tri) in c.tris.iter().enumerate() {
            if !c.alive[t] {
                continue;
            }
            for i in 0..3 {
                let (u, v) = (tri[i], tri[(i + 1) % 3]);
                let len = (c.verts[u as usize] - c.verts[v as usize]).norm();
                if u < v && len < SHORT_EDGE * mean_edge {
                    short.push((len, u, v));
                }
            }
        }
        short.sort_by(|x, y| x.0.total_cmp(&y.0).then((x.1, x.2).cmp(&(y.1, y.2))));
        let mut collapsed = 0;
        for (_, u, v) in short {
            let best = [(u, v), (v, u)]
                .into_iter()
                .filter_map(|(keep, drop)| c.evaluate(keep, drop).map(|(_, new)| (new, keep, drop)))
                .min_by(|x, y| x.0.total_cmp(&y.0));
            if let Some((_, keep, drop)) = best {
                c.apply(keep, drop);
                collapsed += 1;
            }
        }
        total += collapsed;
        if collapsed == 0 {
            break;
        }
    }

    for _ in 0..MAX_PASSES {
        let mut bad: Vec<(f64, u32)> = (0..c.tris.len() as u32)
            .map(|t| (aspect(c.corners(t)), t))
            .filter(|&(a, _)| a > max_aspect)
            .collect();
        bad.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
        let mut collapsed = 0;
        for (_, t) in bad {
            if !c.alive[t as usize] {
                continue;
            }
            if aspect(c.corners(t)) <= max_aspect {
                continue;
            }
            let [a, b, d] = c.tris[t as usize];
            let mut edges = [(a, b), (b, d), (d, a)];
            edges.sort_by(|x, y| {
                let len = |e: &(u32, u32)| (c.verts[e.0 as usize] - c.verts[e.1 as usize]).norm();
                len(x).total_cmp(&len(y))
            });
            let collapse = edges
                .iter()
                .flat_map(|&(u, v)| [(u, v), (v, u)])
                .filter_map(|(keep, drop)| c.evaluate(keep, drop).map(|(old, new)| (old, new, keep, drop)))
                .filter(|&(old, new, _, _)| new < old || old.is_infinite())
                .min_by(|x, y| x.1.total_cmp(&y.1));
            let flip = edges
                .iter()
                .filter_map(|&(u, v)| c.evaluate_flip(u, v))
                .filter(|&(old, new, _, _)| new < old)
                .min_by(|x, y| x.1.total_cmp(&y.1));
            match (collapse, flip) {
                (Some((_, cn, keep, drop)), f) if f.is_none_or(|f| cn <= f.1) => c.apply(keep, drop),
                (_, Some((_, _, pair, tris))) => c.apply_flip(pair, tris),
                _ => continue,
            }
            collapsed += 1;
        }
        total += collapsed;
        if collapsed == 0 {
            break;
        }
    }
    mesh.triangles = c
        .tris
        .into_iter()
        .zip(c.alive)
        .filter_map(|(t, keep)| keep.then_some(t))
        .collect();
    drop_zero_area_components(mesh);
    mesh.compact();
    total
}

fn find(parent: &mut [u32], mut v: u32) -> u32 {
    while parent[v as usize] != v {
        parent[v as usize] = parent[parent[v as usize] as usize];
        v = parent[v as usize];
    }
    v
}

/// Removes connected pieces that enclose nothing, such as the point-sized
/// bubble left around a lattice point that sits exactly on the level set.
fn drop_zero_area_components(mesh: &mut TriangleMesh) {
    let mut parent: Vec<u32> = (0..mesh.vertices.len() as u32).collect();
    for t in &mesh.triangles {
        for &v in &t[1..] {
            let (ra, rb) = (find(&mut parent, t[0]), find(&mut parent, v));
            parent[ra.max(rb) as usize] = ra.min(rb);
        }
    }
    let mut area = vec![0.0; mesh.vertices.len()];
    for t in 0..mesh.triangles.len() {
        let root = find(&mut parent, mesh.triangles[t][0]);
        area[root as usize] += mesh.triangle_area(t);
    }
    let tris = std::mem::take(&mut mesh.triangles);
    mesh.triangles = tris
        .into_iter()
        .filter(|t| area[find(&mut parent, t[0]) as usize] > 1e-12)
        .collect();
}
