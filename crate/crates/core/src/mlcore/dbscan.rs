//! Density-based clustering. Identical rows are collapsed into weighted
//! points before neighbourhood search, so heavily duplicated inputs stay cheap.

use std::cmp::Ordering;

use super::{sq_dist, FeatureMatrix, KdTree};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DbscanParams {
    /// Neighbourhood radius; a point at exactly this distance is a neighbour.
    pub eps: f64,
    /// Neighbour count, self included, that makes a point a core point.
    pub min_points: usize,
}

impl Default for DbscanParams {
    fn default() -> Self {
        DbscanParams { eps: 4e-3, min_points: 40 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dbscan {
    /// Cluster id per row, `None` for noise. Clusters are numbered in order of
    /// their lowest core row index.
    pub labels: Vec<Option<usize>>,
    pub core: Vec<bool>,
    pub n_clusters: usize,
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
}

pub fn dbscan(m: &FeatureMatrix, p: DbscanParams) -> Dbscan {
    let n = m.rows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| lex_cmp(m.row(a), m.row(b)).then(a.cmp(&b)));

    // Collapse duplicates; each unique point keeps its lowest row index.
    let mut unique_of = vec![0usize; n];
    let mut first_row: Vec<usize> = Vec::new();
    let mut weight: Vec<usize> = Vec::new();
    let mut uniq = FeatureMatrix::new(m.cols()).expect("matrix has columns");
    for (k, &i) in order.iter().enumerate() {
        if k == 0 || lex_cmp(m.row(order[k - 1]), m.row(i)).is_ne() {
            uniq.push_row(m.row(i)).expect("rows already validated");
            first_row.push(i);
            weight.push(0);
        }
        let u = first_row.len() - 1;
        unique_of[i] = u;
        weight[u] += 1;
    }

    let nu = first_row.len();
    let tree = KdTree::build(&uniq);
    let core: Vec<bool> = (0..nu)
        .map(|u| {
            let mut count = 0usize;
            tree.visit(uniq.row(u), p.eps, |v| count += weight[v]);
            count >= p.min_points
        })
        .collect();

    let mut seeds: Vec<usize> = (0..nu).filter(|&u| core[u]).collect();
    seeds.sort_by_key(|&u| first_row[u]);
    let mut cluster: Vec<Option<usize>> = vec![None; nu];
    let mut n_clusters = 0;
    let mut stack = Vec::new();
    for s in seeds {
        if cluster[s].is_some() {
            continue;
        }
        cluster[s] = Some(n_clusters);
        stack.push(s);
        while let Some(u) = stack.pop() {
            tree.visit(uniq.row(u), p.eps, |v| {
                if core[v] && cluster[v].is_none() {
                    cluster[v] = Some(n_clusters);
                    stack.push(v);
                }
            });
        }
        n_clusters += 1;
    }

    for u in 0..nu {
        if !core[u] {
            let mut best: Option<usize> = None;
            tree.visit(uniq.row(u), p.eps, |v| {
                if let (true, Some(c)) = (core[v], cluster[v]) {
                    best = Some(best.map_or(c, |b| b.min(c)));
                }
            });
            cluster[u] = best;
        }
    }

    Dbscan {
        labels: (0..n).map(|i| cluster[unique_of[i]]).collect(),
        core: (0..n).map(|i| core[unique_of[i]]).collect(),
        n_clusters,
    }
}

/// Quadratic reference with the same numbering and border rules.
pub fn dbscan_naive(m: &FeatureMatrix, p: DbscanParams) -> Dbscan {
    let n = m.rows();
    let r2 = p.eps * p.eps;
    let near = |i: usize, j: usize| sq_dist(m.row(i), m.row(j)) <= r2;
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| near(i, j)).count() >= p.min_points).collect();
    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut n_clusters = 0;
    for s in 0..n {
        if !core[s] || labels[s].is_some() {
            continue;
        }
        labels[s] = Some(n_clusters);
        let mut stack = vec![s];
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if core[j] && labels[j].is_none() && near(i, j) {
                    labels[j] = Some(n_clusters);
                    stack.push(j);
                }
            }
        }
        n_clusters += 1;
    }
    for i in 0..n {
        if !core[i] {
            labels[i] = (0..n).filter(|&j| core[j] && near(i, j)).filter_map(|j| labels[j]).min();
        }
    }
    Dbscan { labels, core, n_clusters }
}
