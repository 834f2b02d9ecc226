use serde::{Deserialize, Serialize};

use super::Vec3;

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        debug_assert!(min.x <= max.x && min.y <= max.y && min.z <= max.z);
        Self { min, max }
    }

    /// The cube `[-h, h]^3`.
    pub fn cube(h: f64) -> Self {
        Self::new(Vec3::splat(-h), Vec3::splat(h))
    }

    /// Tight box around `points`; `None` when empty.
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let (min, max) = it.fold((first, first), |(lo, hi), p| (lo.min(*p), hi.max(*p)));
        Some(Self { min, max })
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn max_extent(&self) -> f64 {
        self.extent().max_element()
    }

    pub fn inflate(&self, by: f64) -> Self {
        Self::new(self.min - Vec3::splat(by), self.max + Vec3::splat(by))
    }

    /// Overlap of two boxes, `None` if they are disjoint.
    pub fn intersect(&self, o: &Aabb) -> Option<Self> {
        let min = self.min.max(o.min);
        let max = self.max.min(o.max);
        (min.x <= max.x && min.y <= max.y && min.z <= max.z).then_some(Self { min, max })
    }

    pub fn contains(&self, p: Vec3) -> bool {
        p.x >= self.min.x
            && p.y >= self.min.y
            && p.z >= self.min.z
            && p.x <= self.max.x
            && p.y <= self.max.y
            && p.z <= self.max.z
    }

    pub fn volume(&self) -> f64 {
        let e = self.extent();
        e.x * e.y * e.z
    }
}
