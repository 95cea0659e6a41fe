//! Static 3-D k-d tree for k-nearest-neighbor queries.

use crate::reconstruct::Point3;

const LEAF_SIZE: usize = 16;

enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

pub struct KdTree<'a> {
    points: &'a [Point3],
    order: Vec<usize>,
    root: Node,
}

#[inline]
fn coord(p: &Point3, axis: usize) -> f64 {
    match axis {
        0 => p.x,
        1 => p.y,
        _ => p.z,
    }
}

impl<'a> KdTree<'a> {
    pub fn build(points: &'a [Point3]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let root = Self::build_node(points, &mut order, 0, points.len());
        Self {
            points,
            order,
            root,
        }
    }

    fn build_node(points: &[Point3], order: &mut [usize], start: usize, end: usize) -> Node {
        if end - start <= LEAF_SIZE {
            return Node::Leaf { start, end };
        }
        let slice = &mut order[start..end];
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in slice.iter() {
            for a in 0..3 {
                let v = coord(&points[i], a);
                lo[a] = lo[a].min(v);
                hi[a] = hi[a].max(v);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap_or(0);
        let mid = slice.len() / 2;
        slice.select_nth_unstable_by(mid, |&a, &b| {
            coord(&points[a], axis).total_cmp(&coord(&points[b], axis))
        });
        let value = coord(&points[slice[mid]], axis);
        let left = Box::new(Self::build_node(points, order, start, start + mid));
        let right = Box::new(Self::build_node(points, order, start + mid, end));
        Node::Split {
            axis,
            value,
            left,
            right,
        }
    }

    /// Squared distances to the `k` nearest points other than `exclude`,
    /// ascending. Equidistant candidates are ordered by index.
    pub fn nearest_sq(&self, query: &Point3, k: usize, exclude: Option<usize>) -> Vec<(f64, usize)> {
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        if k > 0 {
            self.search(&self.root, query, k, exclude, &mut best);
        }
        best
    }

    fn search(
        &self,
        node: &Node,
        q: &Point3,
        k: usize,
        exclude: Option<usize>,
        best: &mut Vec<(f64, usize)>,
    ) {
        match node {
            Node::Leaf { start, end } => {
                for &i in &self.order[*start..*end] {
                    if Some(i) == exclude {
                        continue;
                    }
                    let d = self.points[i].distance_squared(q);
                    let cand = (d, i);
                    if best.len() == k && !lt(cand, best[k - 1]) {
                        continue;
                    }
                    let pos = best.partition_point(|&b| lt(b, cand));
                    best.insert(pos, cand);
                    best.truncate(k);
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = coord(q, *axis) - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, k, exclude, best);
                if best.len() < k || diff * diff <= best[k - 1].0 {
                    self.search(far, q, k, exclude, best);
                }
            }
        }
    }
}

#[inline]
fn lt(a: (f64, usize), b: (f64, usize)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}
