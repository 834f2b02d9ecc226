//! Exact nearest-neighbour queries over a static point list.

use super::Vec3;
use crate::{Error, Result};

const LEAF_SIZE: usize = 8;

/// Balanced 3-d tree stored implicitly: node `(lo, hi)` holds its split point
/// at `mid = (lo + hi) / 2` of the permuted index array.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec3>,
    order: Vec<u32>,
    axis: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

impl KdTree {
    pub fn build(points: Vec<Vec3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("kd-tree"));
        }
        assert!(points.len() < u32::MAX as usize, "kd-tree too large");
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut axis = vec![0u8; points.len()];
        build_range(&points, &mut order, &mut axis, 0, points.len());
        Ok(Self { points, order, axis })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    /// Exact nearest neighbour; ties go to the lowest index.
    pub fn nearest(&self, x: Vec3) -> Neighbor {
        let mut best = (f64::INFINITY, usize::MAX);
        self.search(x, 0, self.points.len(), &mut best);
        Neighbor {
            index: best.1,
            distance: best.0.sqrt(),
        }
    }

    pub fn nearest_distance(&self, x: Vec3) -> f64 {
        self.nearest(x).distance
    }

    /// The `k` nearest points sorted by distance (then index).
    pub fn k_nearest(&self, x: Vec3, k: usize) -> Vec<Neighbor> {
        let mut heap: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        if k > 0 {
            self.search_k(x, 0, self.points.len(), k, &mut heap);
        }
        heap.into_iter()
            .map(|(d, i)| Neighbor {
                index: i,
                distance: d.sqrt(),
            })
            .collect()
    }

    fn search(&self, x: Vec3, lo: usize, hi: usize, best: &mut (f64, usize)) {
        if hi - lo <= LEAF_SIZE {
            for &i in &self.order[lo..hi] {
                let d = self.points[i as usize].distance_squared(x);
                if d < best.0 || (d == best.0 && (i as usize) < best.1) {
                    *best = (d, i as usize);
                }
            }
            return;
        }
        let mid = (lo + hi) / 2;
        let i = self.order[mid] as usize;
        let p = self.points[i];
        let d = p.distance_squared(x);
        if d < best.0 || (d == best.0 && i < best.1) {
            *best = (d, i);
        }
        let axis = self.axis[mid] as usize;
        let diff = x[axis] - p[axis];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(x, near.0, near.1, best);
        if diff * diff <= best.0 {
            self.search(x, far.0, far.1, best);
        }
    }

    fn search_k(&self, x: Vec3, lo: usize, hi: usize, k: usize, heap: &mut Vec<(f64, usize)>) {
        let offer = |d: f64, i: usize, heap: &mut Vec<(f64, usize)>| {
            if heap.len() < k || (d, i) < *heap.last().expect("full heap") {
                let pos = heap.partition_point(|e| *e < (d, i));
                heap.insert(pos, (d, i));
                heap.truncate(k);
            }
        };
        if hi - lo <= LEAF_SIZE {
            for &i in &self.order[lo..hi] {
                offer(self.points[i as usize].distance_squared(x), i as usize, heap);
            }
            return;
        }
        let mid = (lo + hi) / 2;
        let i = self.order[mid] as usize;
        let p = self.points[i];
        offer(p.distance_squared(x), i, heap);
        let axis = self.axis[mid] as usize;
        let diff = x[axis] - p[axis];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search_k(x, near.0, near.1, k, heap);
        let bound = if heap.len() < k { f64::INFINITY } else { heap[k - 1].0 };
        if diff * diff <= bound {
            self.search_k(x, far.0, far.1, k, heap);
        }
    }
}

fn build_range(points: &[Vec3], order: &mut [u32], axis: &mut [u8], lo: usize, hi: usize) {
    if hi - lo <= LEAF_SIZE {
        return;
    }
    let slice = &order[lo..hi];
    let mut min = points[slice[0] as usize];
    let mut max = min;
    for &i in slice {
        min = min.min(points[i as usize]);
        max = max.max(points[i as usize]);
    }
    let ext = max - min;
    let ax = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    let mid = (lo + hi) / 2;
    order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
        points[a as usize][ax].total_cmp(&points[b as usize][ax])
    });
    axis[mid] = ax as u8;
    build_range(points, order, axis, lo, mid);
    build_range(points, order, axis, mid + 1, hi);
}
