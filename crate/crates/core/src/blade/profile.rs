use std::f64::consts::TAU;

use crate::{Error, Result};

/// Number of vertices on every section polyline.
pub const PROFILE_VERTICES: usize = 256;

/// Closed, convex, counter-clockwise section polyline (first vertex not repeated).
///
/// Vertex `k` is the support point of the section in direction
/// `2*pi*k / n`, so two profiles built with the same vertex count correspond
/// vertex-by-vertex along matching outward normals.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub vertices: Vec<[f64; 2]>,
}

impl Profile {
    /// Convex hull of two circles: diameter `large_d` centred at the origin and
    /// diameter `small_d` centred at `(center_dist, 0)`.
    ///
    /// A zero centre distance collapses to the larger circle. A positive
    /// centre distance that leaves one circle strictly inside the other is
    /// rejected.
    pub fn two_circle_hull(large_d: f64, small_d: f64, center_dist: f64) -> Result<Self> {
        Self::two_circle_hull_with(large_d, small_d, center_dist, PROFILE_VERTICES)
    }

    pub fn two_circle_hull_with(large_d: f64, small_d: f64, center_dist: f64, n: usize) -> Result<Self> {
        if !(large_d > 0.0 && small_d > 0.0 && center_dist >= 0.0) || n < 3 {
            return Err(Error::Invalid(format!(
                "profile needs positive diameters and a non-negative centre distance \
                 (got {large_d}, {small_d}, {center_dist})"
            )));
        }
        let (ra, rb) = (large_d / 2.0, small_d / 2.0);
        if center_dist > 0.0 && center_dist < (ra - rb).abs() {
            return Err(Error::Invalid(format!(
                "centre distance {center_dist} places one circle inside the other"
            )));
        }
        let vertices = (0..n)
            .map(|k| {
                let theta = TAU * k as f64 / n as f64;
                let (s, c) = theta.sin_cos();
                let support_a = ra;
                let support_b = c * center_dist + rb;
                if support_b > support_a {
                    [center_dist + rb * c, rb * s]
                } else {
                    [ra * c, ra * s]
                }
            })
            .collect();
        Ok(Self { vertices })
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// `(min_x, max_x, min_y, max_y)`.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        self.vertices.iter().fold(
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
            |(a, b, c, d), v| (a.min(v[0]), b.max(v[0]), c.min(v[1]), d.max(v[1])),
        )
    }

    /// Extent along the chord (x) axis.
    pub fn chord_length(&self) -> f64 {
        let (x0, x1, _, _) = self.bounds();
        x1 - x0
    }

    /// Extent across the chord (y axis).
    pub fn thickness(&self) -> f64 {
        let (_, _, y0, y1) = self.bounds();
        y1 - y0
    }

    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        0.5 * (0..n)
            .map(|i| {
                let (a, b) = (self.vertices[i], self.vertices[(i + 1) % n]);
                a[0] * b[1] - b[0] * a[1]
            })
            .sum::<f64>()
    }

    /// Vertex-wise blend `(1 - t) * self + t * other`.
    pub fn lerp(&self, other: &Profile, t: f64) -> Profile {
        Profile {
            vertices: self
                .vertices
                .iter()
                .zip(&other.vertices)
                .map(|(a, b)| [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t])
                .collect(),
        }
    }

    /// Point-in-polygon for a convex counter-clockwise polyline.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let n = self.vertices.len();
        (0..n).all(|i| {
            let (a, b) = (self.vertices[i], self.vertices[(i + 1) % n]);
            (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= 0.0
        })
    }

    /// True if every turn is a left turn (convex, counter-clockwise, simple).
    pub fn is_convex_ccw(&self) -> bool {
        let n = self.vertices.len();
        let mut winding = 0.0;
        for i in 0..n {
            let (a, b, c) = (self.vertices[i], self.vertices[(i + 1) % n], self.vertices[(i + 2) % n]);
            let cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]);
            if cross < -1e-12 {
                return false;
            }
            let ang = |u: [f64; 2], v: [f64; 2]| (v[1] - u[1]).atan2(v[0] - u[0]);
            let mut turn = ang(b, c) - ang(a, b);
            while turn <= -std::f64::consts::PI {
                turn += TAU;
            }
            while turn > std::f64::consts::PI {
                turn -= TAU;
            }
            winding += turn;
        }
        (winding - TAU).abs() < 1e-6
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stadium_chord() {
        let p = Profile::two_circle_hull(1.0, 1.0, 2.0).unwrap();
        assert!((p.chord_length() - 3.0).abs() < 1e-12);
        assert!((p.thickness() - 1.0).abs() < 1e-12);
        assert!(p.is_convex_ccw());
    }

    #[test]
    fn teardrop_chord_from_hand_geometry() {
        // Leading edge at -BLD/2 = -1, trailing edge at BCD + BSD/2 = 4.5.
        let p = Profile::two_circle_hull(2.0, 1.0, 4.0).unwrap();
        assert!((p.chord_length() - 5.5).abs() < 1e-12);
        assert_eq!(p.len(), PROFILE_VERTICES);
        assert!(p.is_convex_ccw());
    }

    #[test]
    fn zero_centre_distance_is_the_larger_circle() {
        let p = Profile::two_circle_hull(2.0, 0.5, 0.0).unwrap();
        for v in &p.vertices {
            assert!(((v[0] * v[0] + v[1] * v[1]).sqrt() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn nested_circles_are_rejected() {
        assert!(Profile::two_circle_hull(2.0, 0.5, 0.3).is_err());
        assert!(Profile::two_circle_hull(-1.0, 0.5, 2.0).is_err());
    }

    #[test]
    fn area_approaches_two_circle_hull_area() {
        // Capsule of radius 0.5 and straight length 2: pi r^2 + 2 r L.
        let p = Profile::two_circle_hull_with(1.0, 1.0, 2.0, 4096).unwrap();
        let exact = std::f64::consts::PI * 0.25 + 2.0;
        assert!((p.area() - exact).abs() / exact < 1e-5);
    }

    #[test]
    fn lerp_keeps_convexity() {
        let a = Profile::two_circle_hull(2.0, 0.4, 3.5).unwrap();
        let b = Profile::two_circle_hull(0.3, 0.7, 0.9).unwrap();
        for t in [0.0, 0.25, 0.5, 0.9, 1.0] {
            assert!(a.lerp(&b, t).is_convex_ccw(), "t = {t}");
        }
    }

    #[test]
    fn contains_basic() {
        let p = Profile::two_circle_hull(2.0, 1.0, 4.0).unwrap();
        assert!(p.contains([0.0, 0.0]));
        assert!(p.contains([4.4, 0.0]));
        assert!(!p.contains([4.6, 0.0]));
        assert!(!p.contains([0.0, 1.01]));
    }
}
