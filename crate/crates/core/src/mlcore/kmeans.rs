//! Seeded K-Means: k-means++ initialisation followed by Lloyd iterations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{sq_dist, FeatureMatrix};

pub const MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centers: FeatureMatrix,
    pub assignment: Vec<usize>,
    /// Within-cluster sum of squares after each assignment step.
    pub sse_history: Vec<f64>,
}

impl KMeans {
    pub fn sse(&self) -> f64 {
        self.sse_history.last().copied().unwrap_or(0.0)
    }

    /// Distance from `row` to its nearest center.
    pub fn nearest_distance(&self, row: &[f64]) -> f64 {
        nearest(&self.centers, row).1.sqrt()
    }
}

/// Index of the nearest center and the squared distance to it; ties go to
/// the lowest index.
fn nearest(centers: &FeatureMatrix, row: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter_rows().enumerate() {
        let d = sq_dist(row, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn seed_centers(m: &FeatureMatrix, k: usize, rng: &mut ChaCha8Rng) -> FeatureMatrix {
    let n = m.rows();
    let mut centers = FeatureMatrix::new(m.cols()).expect("matrix has columns");
    let first = rng.random_range(0..n);
    centers.push_row(m.row(first)).expect("valid row");
    let mut d2: Vec<f64> = m.iter_rows().map(|r| sq_dist(r, m.row(first))).collect();
    while centers.rows() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    pick = i;
                    break;
                }
            }
            if d2[pick] == 0.0 {
                pick = d2.iter().rposition(|&d| d > 0.0).expect("total is positive");
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centers.push_row(m.row(pick)).expect("valid row");
        for (i, r) in m.iter_rows().enumerate() {
            d2[i] = d2[i].min(sq_dist(r, m.row(pick)));
        }
    }
    centers
}

/// Cluster the rows into `min(k, n)` groups. The result depends only on the
/// input and `seed`.
pub fn kmeans(m: &FeatureMatrix, k: usize, seed: u64) -> KMeans {
    let n = m.rows();
    let d = m.cols();
    assert!(n >= 1, "kmeans needs at least one row");
    let k = k.clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = seed_centers(m, k, &mut rng);
    let mut assignment = vec![usize::MAX; n];
    let mut sse_history = Vec::new();

    for _ in 0..MAX_ITERATIONS {
        let mut changed = false;
        let mut sse = 0.0;
        let mut dists = vec![0.0; n];
        for (i, r) in m.iter_rows().enumerate() {
            let (c, dd) = nearest(&centers, r);
            if assignment[i] != c {
                assignment[i] = c;
                changed = true;
            }
            dists[i] = dd;
            sse += dd;
        }
        sse_history.push(sse);
        if !changed {
            break;
        }

        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for (i, r) in m.iter_rows().enumerate() {
            let c = assignment[i];
            counts[c] += 1;
            for (s, v) in sums[c * d..(c + 1) * d].iter_mut().zip(r) {
                *s += v;
            }
        }
        let mut next = FeatureMatrix::new(d).expect("matrix has columns");
        let mut taken = vec![false; n];
        for c in 0..k {
            if counts[c] > 0 {
                let mean: Vec<f64> = sums[c * d..(c + 1) * d].iter().map(|s| s / counts[c] as f64).collect();
                next.push_row(&mean).expect("finite mean");
                continue;
            }
            // Empty cluster: move it onto the point farthest from its center.
            let far = (0..n)
                .filter(|&i| !taken[i])
                .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)));
            match far {
                Some(i) if dists[i] > 0.0 => {
                    taken[i] = true;
                    dists[i] = 0.0;
                    next.push_row(m.row(i)).expect("valid row");
                }
                _ => next.push_row(centers.row(c)).expect("valid row"),
            }
        }
        centers = next;
    }
    KMeans { centers, assignment, sse_history }
}
