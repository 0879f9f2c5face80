//! Vertex cover selection. Small instances are solved exactly by
//! branch-and-bound; larger ones use a pruned greedy cover.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

/// Largest instance the exact solver accepts.
pub const MAX_EXACT_VERTICES: usize = 64;

/// Cover the given edges (pairs of vertex ids). Returns ascending vertex ids.
/// With at most `exact_cutoff` distinct endpoints the result is a minimum
/// cover, and among minimum covers the lexicographically smallest.
pub fn vertex_cover(edges: &[(usize, usize)], exact_cutoff: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = edges.iter().flat_map(|&(a, b)| [a, b]).collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.is_empty() {
        return Vec::new();
    }
    let local = |v: usize| ids.binary_search(&v).expect("endpoint listed");
    let mut local_edges: Vec<(usize, usize)> =
        edges.iter().map(|&(a, b)| (local(a).min(local(b)), local(a).max(local(b)))).collect();
    local_edges.sort_unstable();
    local_edges.dedup();

    let cover = if ids.len() <= exact_cutoff.min(MAX_EXACT_VERTICES) {
        exact_cover(ids.len(), &local_edges)
    } else {
        approx_cover(ids.len(), &local_edges)
    };
    cover.into_iter().map(|v| ids[v]).collect()
}

pub fn is_cover(edges: &[(usize, usize)], cover: &[usize]) -> bool {
    edges.iter().all(|(a, b)| cover.binary_search(a).is_ok() || cover.binary_search(b).is_ok())
}

struct Exact {
    n: usize,
    adj: Vec<u64>,
    best: u64,
    best_size: u32,
}

impl Exact {
    /// Size of a greedy maximal matching among edges with both endpoints
    /// neither chosen nor decided; a lower bound on the cover still needed.
    fn matching_bound(&self, from: usize, chosen: u64) -> u32 {
        let mut used = chosen;
        let mut size = 0;
        for v in from..self.n {
            if used >> v & 1 == 1 {
                continue;
            }
            let free = self.adj[v] & !used & !((1u64 << from) - 1);
            if free != 0 {
                used |= 1 << v | 1 << free.trailing_zeros();
                size += 1;
            }
        }
        size
    }

    fn search(&mut self, v: usize, chosen: u64) {
        if chosen.count_ones() + self.matching_bound(v, chosen) >= self.best_size {
            return;
        }
        if v == self.n {
            self.best = chosen;
            self.best_size = chosen.count_ones();
            return;
        }
        let bit = 1u64 << v;
        let open = self.adj[v] & !chosen;
        if chosen & bit != 0 || open == 0 {
            self.search(v + 1, chosen);
            return;
        }
        // including first visits covers in lexicographic order
        self.search(v + 1, chosen | bit);
        self.search(v + 1, chosen | open);
    }
}

fn exact_cover(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut adj = vec![0u64; n];
    let mut forced = 0u64;
    for &(a, b) in edges {
        if a == b {
            forced |= 1 << a;
        } else {
            adj[a] |= 1 << b;
            adj[b] |= 1 << a;
        }
    }
    let start: u64 = approx_cover(n, edges).iter().fold(0, |m, &v| m | 1 << v);
    let mut s = Exact { n, adj, best: start, best_size: start.count_ones() + 1 };
    s.search(0, forced);
    (0..n).filter(|&v| s.best >> v & 1 == 1).collect()
}

/// Max-degree greedy cover with redundant vertices pruned, compared against
/// the endpoints of a maximal matching; the smaller wins.
fn approx_cover(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut in_cover = vec![false; n];
    for &(a, b) in edges {
        if a == b {
            in_cover[a] = true;
        } else {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    let mut degree: Vec<usize> = (0..n).map(|v| if in_cover[v] { 0 } else { adj[v].iter().filter(|&&u| !in_cover[u]).count() }).collect();
    let mut heap: BinaryHeap<(usize, Reverse<usize>)> = (0..n).filter(|&v| degree[v] > 0).map(|v| (degree[v], Reverse(v))).collect();
    while let Some((d, Reverse(v))) = heap.pop() {
        if in_cover[v] || d != degree[v] || d == 0 {
            continue;
        }
        in_cover[v] = true;
        degree[v] = 0;
        for &u in &adj[v] {
            if !in_cover[u] && degree[u] > 0 {
                degree[u] -= 1;
                if degree[u] > 0 {
                    heap.push((degree[u], Reverse(u)));
                }
            }
        }
    }
    let self_loop: Vec<bool> = {
        let mut s = vec![false; n];
        edges.iter().filter(|(a, b)| a == b).for_each(|&(a, _)| s[a] = true);
        s
    };
    for v in 0..n {
        if in_cover[v] && !self_loop[v] && adj[v].iter().all(|&u| in_cover[u]) {
            in_cover[v] = false;
        }
    }
    let greedy: Vec<usize> = (0..n).filter(|&v| in_cover[v]).collect();

    let mut matched: Vec<bool> = self_loop.clone();
    for &(a, b) in edges {
        if a != b && !matched[a] && !matched[b] {
            matched[a] = true;
            matched[b] = true;
        }
    }
    let matching: Vec<usize> = (0..n).filter(|&v| matched[v]).collect();
    if matching.len() < greedy.len() {
        matching
    } else {
        greedy
    }
}

/// Group center edges by their covering vertex. An edge with both endpoints
/// in the cover appears under both.
pub fn edges_by_vertex(edges: &[(usize, usize)], cover: &[usize]) -> BTreeMap<usize, Vec<usize>> {
    let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &(a, b)) in edges.iter().enumerate() {
        if cover.binary_search(&a).is_ok() {
            out.entry(a).or_default().push(i);
        }
        if b != a && cover.binary_search(&b).is_ok() {
            out.entry(b).or_default().push(i);
        }
    }
    out
}
