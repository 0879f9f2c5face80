//! Static KD-tree over the rows of a matrix, answering inclusive radius queries.

use super::{sq_dist, FeatureMatrix};

const LEAF_SIZE: usize = 16;

struct Node {
    lo: Vec<f64>,
    hi: Vec<f64>,
    start: usize,
    end: usize,
    children: Option<(usize, usize)>,
}

pub struct KdTree<'a> {
    points: &'a FeatureMatrix,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl<'a> KdTree<'a> {
    pub fn build(points: &'a FeatureMatrix) -> Self {
        let mut t = KdTree { points, order: (0..points.rows()).collect(), nodes: Vec::new() };
        if points.rows() > 0 {
            t.build_node(0, points.rows());
        }
        t
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let d = self.points.cols();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for &i in &self.order[start..end] {
            for (j, &v) in self.points.row(i).iter().enumerate() {
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        let id = self.nodes.len();
        let widest = (0..d).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])).then(b.cmp(&a))).unwrap_or(0);
        let spread = hi[widest] - lo[widest];
        self.nodes.push(Node { lo, hi, start, end, children: None });
        if end - start <= LEAF_SIZE || spread <= 0.0 {
            return id;
        }
        let mid = start + (end - start) / 2;
        let pts = self.points;
        self.order[start..end]
            .select_nth_unstable_by(mid - start, |&a, &b| pts.row(a)[widest].total_cmp(&pts.row(b)[widest]));
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id].children = Some((left, right));
        id
    }

    /// Indices of every row within `radius` of `query` (boundary included),
    /// in ascending order.
    pub fn within(&self, query: &[f64], radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.visit(query, radius, |i| out.push(i));
        out.sort_unstable();
        out
    }

    /// Call `f` on every row within `radius` of `query`, in tree order.
    pub fn visit(&self, query: &[f64], radius: f64, mut f: impl FnMut(usize)) {
        if self.nodes.is_empty() {
            return;
        }
        let r2 = radius * radius;
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if box_sq_dist(query, &node.lo, &node.hi) > r2 {
                continue;
            }
            match node.children {
                Some((l, r)) => {
                    stack.push(r);
                    stack.push(l);
                }
                None => {
                    for &i in &self.order[node.start..node.end] {
                        if sq_dist(query, self.points.row(i)) <= r2 {
                            f(i);
                        }
                    }
                }
            }
        }
    }
}

/// Lower bound on the squared distance from `q` to any point in the box.
/// Summed in dimension order so it never exceeds `sq_dist` to a contained
/// point under rounding.
fn box_sq_dist(q: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    q.iter()
        .zip(lo.iter().zip(hi))
        .map(|(&x, (&l, &h))| {
            let d = if x < l {
                l - x
            } else if x > h {
                x - h
            } else {
                0.0
            };
            d * d
        })
        .sum()
}
