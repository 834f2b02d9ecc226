use std::collections::HashMap;

use super::tables::TRI_TABLE;
use super::{collapse_slivers, ScalarGrid, TriangleMesh};
use crate::geom::Vec3;

/// Cell corner offsets.
pub(super) const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

/// Cell edges as corner pairs, in the numbering the triangle table uses.
pub(super) const EDGES: [[usize; 2]; 12] = [
    [0, 1],
    [1, 2],
    [3, 2],
    [0, 3],
    [4, 5],
    [5, 6],
    [7, 6],
    [4, 7],
    [0, 4],
    [1, 5],
    [2, 6],
    [3, 7],
];

/// Aspect ratio above which extracted slivers are collapsed.
pub const DEFAULT_MAX_ASPECT: f64 = 20.0;

/// Extracts the `iso` level set with outward orientation (normals point
/// toward increasing field values) and collapses sliver triangles whose
/// aspect ratio exceeds [`DEFAULT_MAX_ASPECT`].
pub fn marching_cubes(grid: &ScalarGrid, iso: f64) -> TriangleMesh {
    marching_cubes_with(grid, iso, Some(DEFAULT_MAX_ASPECT))
}

/// As [`marching_cubes`]; `max_aspect = None` returns the raw table output.
///
/// Vertices are shared through their lattice edge, so the raw output is a
/// closed manifold whenever the field does not cross `iso` on the grid
/// boundary. A crossing that lands exactly on a lattice point yields
/// coincident vertices; the sliver pass merges them.
pub fn marching_cubes_with(grid: &ScalarGrid, iso: f64, max_aspect: Option<f64>) -> TriangleMesh {
    let r = grid.res;
    let mut vertex_of: HashMap<u64, u32> = HashMap::new();
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();

    let mut edge_vertex = |a: [usize; 3], b: [usize; 3], va: f64, vb: f64| -> u32 {
        let axis = (0..3).find(|&d| a[d] != b[d]).unwrap() as u64;
        let key = grid.index(a[0], a[1], a[2]) as u64 * 3 + axis;
        *vertex_of.entry(key).or_insert_with(|| {
            let t = ((iso - va) / (vb - va)).clamp(0.0, 1.0);
            let pa = grid.point(a[0], a[1], a[2]);
            let pb = grid.point(b[0], b[1], b[2]);
            vertices.push(pa + (pb - pa) * t);
            (vertices.len() - 1) as u32
        })
    };

    for k in 0..r - 1 {
        for j in 0..r - 1 {
            for i in 0..r - 1 {
                let mut vals = [0.0; 8];
                let mut mask = 0usize;
                for (c, off) in CORNERS.iter().enumerate() {
                    vals[c] = grid.value(i + off[0], j + off[1], k + off[2]);
                    if vals[c] < iso {
                        mask |= 1 << c;
                    }
                }
                if mask == 0 || mask == 255 {
                    continue;
                }
                let mut local = [u32::MAX; 12];
                for tri in TRI_TABLE[mask].chunks_exact(3).take_while(|t| t[0] >= 0) {
                    let mut idx = [0u32; 3];
                    for (slot, &e) in idx.iter_mut().zip(tri) {
                        let e = e as usize;
                        if local[e] == u32::MAX {
                            let [ca, cb] = EDGES[e];
                            let lift = |c: usize| [i + CORNERS[c][0], j + CORNERS[c][1], k + CORNERS[c][2]];
                            local[e] = edge_vertex(lift(ca), lift(cb), vals[ca], vals[cb]);
                        }
                        *slot = local[e];
                    }
                    triangles.push([idx[0], idx[2], idx[1]]);
                }
            }
        }
    }
    let mut mesh = TriangleMesh { vertices, triangles };
    if mesh.is_empty() {
        log::warn!("marching cubes: field never crosses {iso}, mesh is empty");
    } else if let Some(limit) = max_aspect {
        collapse_slivers(&mut mesh, limit);
    }
    mesh
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::check_watertight;
    use rand::Rng;

    fn sphere(res: usize, r: f64) -> TriangleMesh {
        let g = ScalarGrid::from_fn(res, 1.0, |p| p.norm() - r).unwrap();
        marching_cubes(&g, 0.0)
    }

    #[test]
    fn sphere_at_64() {
        let m = sphere(64, 0.5);
        let cell = 2.0 / 63.0;
        let worst = m.vertices.iter().map(|v| (v.norm() - 0.5).abs()).fold(0.0, f64::max);
        assert!(worst <= 2.0 * cell, "{worst}");
        let area = m.area();
        assert!((area - std::f64::consts::PI).abs() / std::f64::consts::PI < 0.02, "{area}");
        assert!(m.volume() > 0.0);
        let report = check_watertight(&m);
        assert!(report.watertight, "{report:?}");
    }

    #[test]
    fn normals_point_up_the_gradient() {
        let m = sphere(32, 0.6);
        for t in 0..m.triangles.len() {
            let [a, b, c] = m.corners(t);
            let n = (b - a).cross(c - a);
            assert!(n.dot(a + b + c) > 0.0);
        }
    }

    #[test]
    fn flat_fields_give_empty_meshes() {
        let g = ScalarGrid::from_fn(8, 1.0, |p| p.norm() + 1.0).unwrap();
        let m = marching_cubes(&g, 0.0);
        assert!(m.is_empty());
        assert_eq!(check_watertight(&m).reason.as_deref(), Some("empty"));
    }

    #[test]
    fn box_volume_at_128() {
        let g = ScalarGrid::from_fn(128, 1.0, |p| p.abs().max_element() - 0.5).unwrap();
        let m = marching_cubes(&g, 0.0);
        assert!((m.volume() - 1.0).abs() < 0.02, "{}", m.volume());
        assert!(check_watertight(&m).watertight);
    }

    #[test]
    fn removing_a_triangle_opens_three_edges() {
        let mut m = sphere(24, 0.5);
        m.triangles.pop();
        let r = check_watertight(&m);
        assert!(!r.watertight);
        assert_eq!(r.boundary_edges, 3);
    }

    #[test]
    fn vertices_lie_on_the_interpolated_level_set() {
        let g = ScalarGrid::from_fn(40, 1.0, |p| (3.0 * p.x).sin() * (2.0 * p.y).cos() + p.z * p.z - 0.3).unwrap();
        let (lo, hi) = g.value_range();
        let m = marching_cubes(&g, 0.0);
        assert!(!m.is_empty());
        for v in &m.vertices {
            assert!(g.trilinear(*v).abs() <= 1e-6 * (hi - lo));
        }
    }

    #[test]
    fn sphere_volume_converges_quadratically() {
        let exact = 4.0 / 3.0 * std::f64::consts::PI * 0.5f64.powi(3);
        let errs: Vec<f64> = [32, 64, 128].iter().map(|&r| (sphere(r, 0.5).volume() - exact).abs()).collect();
        let order = ((errs[0] / errs[2]).ln() / 4f64.ln()).abs();
        assert!((1.6..=2.6).contains(&order), "errors {errs:?}, order {order}");
    }

    /// Random fields kept positive on the boundary must always extract to
    /// closed, consistently oriented surfaces, ambiguous cells included.
    #[test]
    fn random_fields_are_watertight() {
        let mut rng = crate::seeds::rng(17);
        for trial in 0..40 {
            let res = 12;
            let mut values: Vec<f64> = (0..res * res * res).map(|_| rng.random_range(-1.0..1.0)).collect();
            for k in 0..res {
                for j in 0..res {
                    for i in 0..res {
                        if [i, j, k].iter().any(|&c| c == 0 || c == res - 1) {
                            values[i + res * (j + res * k)] = 1.0;
                        }
                    }
                }
            }
            if trial % 2 == 0 {
                // Exercise exact hits on lattice points.
                for v in values.iter_mut().step_by(7) {
                    if v.abs() < 0.3 {
                        *v = 0.0;
                    }
                }
            }
            let g = ScalarGrid::new(res, 1.0, values).unwrap();
            let m = marching_cubes(&g, 0.0);
            let r = check_watertight(&m);
            assert!(r.watertight, "trial {trial}: {r:?}");
            if trial % 2 == 1 {
                // With exact hits two sheets may touch at a saddle lattice
                // point; their coincident vertices cannot be merged without a
                // pinch, so zero-area triangles are only ruled out otherwise.
                assert!((0..m.triangles.len()).all(|t| m.triangle_area(t) > 1e-12), "trial {trial}");
            }
        }
    }

    /// Smooth random fields (a few low Fourier modes) extract to closed
    /// meshes free of slivers.
    #[test]
    fn smooth_random_fields_have_bounded_aspect() {
        let mut rng = crate::seeds::rng(23);
        for trial in 0..12 {
            let modes: Vec<(Vec3, f64, f64)> = (0..6)
                .map(|_| {
                    let k = Vec3::new(rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0));
                    (k, rng.random_range(0.0..6.3), rng.random_range(0.02..0.06))
                })
                .collect();
            let g = ScalarGrid::from_fn(48, 1.0, |p| {
                let wave: f64 = modes.iter().map(|(k, ph, a)| a * (k.dot(p) + ph).sin()).sum();
                p.norm() - 0.6 + wave
            })
            .unwrap();
            let m = marching_cubes(&g, 0.0);
            assert!(check_watertight(&m).watertight, "trial {trial}");
            assert!(m.max_aspect_ratio() <= 50.0, "trial {trial}: {}", m.max_aspect_ratio());
        }
    }
}
