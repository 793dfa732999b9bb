//! Exact nearest-neighbor kd-tree over points of arbitrary dimension.
//!
//! Splits at the median of the axis with the largest spread. Queries return
//! the same neighbor as an exhaustive scan, ties going to the lowest index.

use std::cmp::Ordering;

use crate::geometry::Point3;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist_sq: f64,
}

impl Neighbor {
    pub fn distance(&self) -> f64 {
        self.dist_sq.sqrt()
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
pub struct KdTree {
    dim: usize,
    coords: Vec<f64>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

/// Squared Euclidean distance, summed in axis order.
#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl KdTree {
    /// `coords` holds `len × dim` values, point-major.
    pub fn new(dim: usize, coords: Vec<f64>) -> Self {
        assert!(dim > 0, "kd-tree dimension must be positive");
        assert_eq!(coords.len() % dim, 0, "coordinate count not a multiple of dim");
        let n = coords.len() / dim;
        let mut tree = Self {
            dim,
            coords,
            order: (0..n).collect(),
            nodes: Vec::new(),
        };
        if n > 0 {
            tree.build(0, n);
        }
        tree
    }

    pub fn from_rows<R: AsRef<[f64]>>(dim: usize, rows: &[R]) -> Self {
        let mut coords = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            assert_eq!(r.as_ref().len(), dim, "row dimension mismatch");
            coords.extend_from_slice(r.as_ref());
        }
        Self::new(dim, coords)
    }

    pub fn from_points(points: &[Point3]) -> Self {
        Self::new(3, points.iter().flat_map(Point3::as_array).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn point(&self, index: usize) -> &[f64] {
        &self.coords[index * self.dim..(index + 1) * self.dim]
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let axis = self.widest_axis(start, end);
        if self.spread(axis, start, end) == 0.0 {
            // all points coincide
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        let (dim, coords) = (self.dim, &self.coords);
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            coords[a * dim + axis]
                .total_cmp(&coords[b * dim + axis])
                .then(a.cmp(&b))
        });
        let value = self.coords[self.order[mid] * dim + axis];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    fn spread(&self, axis: usize, start: usize, end: usize) -> f64 {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &i in &self.order[start..end] {
            let v = self.coords[i * self.dim + axis];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        hi - lo
    }

    fn widest_axis(&self, start: usize, end: usize) -> usize {
        (0..self.dim)
            .map(|a| (a, self.spread(a, start, end)))
            .max_by(|x, y| x.1.total_cmp(&y.1).then(y.0.cmp(&x.0)))
            .map(|(a, _)| a)
            .unwrap_or(0)
    }

    pub fn nearest(&self, query: &[f64]) -> Option<Neighbor> {
        self.nearest_where(query, |_| true)
    }

    /// Nearest point among those whose index satisfies `keep`.
    pub fn nearest_where(&self, query: &[f64], keep: impl Fn(usize) -> bool) -> Option<Neighbor> {
        assert_eq!(query.len(), self.dim, "query dimension mismatch");
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = Neighbor {
            index: usize::MAX,
            dist_sq: f64::INFINITY,
        };
        self.search(0, query, &keep, &mut best);
        (best.index != usize::MAX).then_some(best)
    }

    fn search(&self, node: usize, q: &[f64], keep: &impl Fn(usize) -> bool, best: &mut Neighbor) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    if !keep(i) {
                        continue;
                    }
                    let d = squared_distance(self.point(i), q);
                    let better = match d.partial_cmp(&best.dist_sq) {
                        Some(Ordering::Less) => true,
                        Some(Ordering::Equal) => i < best.index,
                        _ => false,
                    };
                    if better {
                        *best = Neighbor { index: i, dist_sq: d };
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, keep, best);
                // `<=` so equal-distance points with lower indices are still found
                if diff * diff <= best.dist_sq {
                    self.search(far, q, keep, best);
                }
            }
        }
    }
}
