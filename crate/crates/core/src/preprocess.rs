//! Graph preprocessing: connected components, statistical filtering of
//! ordinary components, structural edge features and density-based
//! pre-clustering of edges.

use std::collections::HashMap;

use crate::graph::{EdgeRef, InteractionGraph};
use crate::mlcore::{dbscan, dist, minmax_normalize, DbscanParams, FeatureMatrix};

/// Above this many distinct feature rows a pre-cluster center is chosen among
/// the rows nearest the cluster mean instead of all rows.
const MEDOID_EXACT_LIMIT: usize = 4096;
const MEDOID_CANDIDATES: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Component {
    /// Ascending vertex ids.
    pub vertices: Vec<usize>,
    pub short_edges: Vec<usize>,
    pub long_edges: Vec<usize>,
}

impl Component {
    pub fn edges(&self) -> impl Iterator<Item = EdgeRef> + '_ {
        self.short_edges.iter().map(|&i| EdgeRef::Short(i)).chain(self.long_edges.iter().map(|&i| EdgeRef::Long(i)))
    }

    pub fn edge_count(&self) -> usize {
        self.short_edges.len() + self.long_edges.len()
    }
}

/// Undirected connected components, ordered by their lowest vertex id.
pub fn components(g: &InteractionGraph) -> Vec<Component> {
    let n = g.vertices().len();
    let mut adj: Vec<Vec<EdgeRef>> = vec![Vec::new(); n];
    for e in g.edge_refs() {
        let (s, d) = g.endpoints(e);
        adj[s].push(e);
        if d != s {
            adj[d].push(e);
        }
    }
    let mut comp_of = vec![usize::MAX; n];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for root in 0..n {
        if comp_of[root] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut c = Component::default();
        comp_of[root] = id;
        stack.push(root);
        while let Some(v) = stack.pop() {
            c.vertices.push(v);
            for &e in &adj[v] {
                let (s, d) = g.endpoints(e);
                // record each edge once, from its source side
                if s == v {
                    match e {
                        EdgeRef::Short(i) => c.short_edges.push(i),
                        EdgeRef::Long(i) => c.long_edges.push(i),
                    }
                }
                let other = if s == v { d } else { s };
                if comp_of[other] == usize::MAX {
                    comp_of[other] = id;
                    stack.push(other);
                }
            }
        }
        c.vertices.sort_unstable();
        c.short_edges.sort_unstable();
        c.long_edges.sort_unstable();
        out.push(c);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ComponentStats {
    pub n_long_flows: u64,
    pub n_short_flows: u64,
    pub n_short_edges: u64,
    pub bytes_long: u64,
    pub bytes_short: u64,
}

impl ComponentStats {
    pub fn to_row(&self) -> [f64; 5] {
        [
            self.n_long_flows as f64,
            self.n_short_flows as f64,
            self.n_short_edges as f64,
            self.bytes_long as f64,
            self.bytes_short as f64,
        ]
    }
}

pub fn component_stats(c: &Component, g: &InteractionGraph) -> ComponentStats {
    let mut s = ComponentStats { n_long_flows: c.long_edges.len() as u64, ..Default::default() };
    for &i in &c.long_edges {
        // bucket midpoints stand in for the discarded exact lengths
        s.bytes_long += g.long_edges()[i].len_hist.bins.iter().map(|(&code, &n)| (code as u64 * 10 + 5) * n as u64).sum::<u64>();
    }
    for &i in &c.short_edges {
        let e = &g.short_edges()[i];
        s.n_short_flows += e.flow_count as u64;
        s.n_short_edges += 1;
        s.bytes_short += e.flow_count as u64 * e.features.iter().map(|f| f.len as u64).sum::<u64>();
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentFilter {
    pub normal: Vec<usize>,
    pub abnormal: Vec<usize>,
    /// Distance of each component to its nearest cluster center in
    /// normalized units; infinite when no cluster formed.
    pub distances: Vec<f64>,
    pub threshold: f64,
}

/// Nearest-rank percentile of an unsorted list.
pub fn nearest_rank(values: &[f64], pct: u32) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (pct as usize * sorted.len()).div_ceil(100).max(1);
    sorted[rank - 1]
}

/// Split components into ordinary and abnormal ones: cluster the normalized
/// statistics and flag every component whose distance to the nearest
/// cluster mean exceeds the 99th percentile of all such distances.
pub fn filter_components(stats: &[ComponentStats], p: DbscanParams) -> ComponentFilter {
    let rows: Vec<[f64; 5]> = stats.iter().map(ComponentStats::to_row).collect();
    let m = minmax_normalize(&FeatureMatrix::from_rows(5, &rows).expect("counts are finite"));
    let db = dbscan(&m, p);
    if db.n_clusters == 0 {
        return ComponentFilter {
            normal: Vec::new(),
            abnormal: (0..stats.len()).collect(),
            distances: vec![f64::INFINITY; stats.len()],
            threshold: f64::INFINITY,
        };
    }
    let mut sums = vec![[0.0f64; 5]; db.n_clusters];
    let mut counts = vec![0usize; db.n_clusters];
    for (i, l) in db.labels.iter().enumerate() {
        if let Some(c) = *l {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(m.row(i)) {
                *s += v;
            }
        }
    }
    let centers: Vec<[f64; 5]> = sums.iter().zip(&counts).map(|(s, &n)| s.map(|v| v / n as f64)).collect();
    let distances: Vec<f64> =
        m.iter_rows().map(|r| centers.iter().map(|c| dist(r, c)).fold(f64::INFINITY, f64::min)).collect();
    let threshold = nearest_rank(&distances, 99);
    let (abnormal, normal) = (0..stats.len()).partition(|&i| distances[i] > threshold);
    ComponentFilter { normal, abnormal, distances, threshold }
}

fn all_equal<T: PartialEq>(mut it: impl Iterator<Item = T>) -> bool {
    match it.next() {
        Some(first) => it.all(|x| x == first),
        None => true,
    }
}

/// Structural features: for short edges the four shared-field flags followed
/// by the endpoint degrees, for long edges the degrees alone.
pub fn edge_struct_features(e: EdgeRef, g: &InteractionGraph) -> Vec<f64> {
    let (s, d) = g.endpoints(e);
    let degrees = [g.in_degree(s), g.out_degree(s), g.in_degree(d), g.out_degree(d)].map(|v| v as f64);
    match e {
        EdgeRef::Short(i) => {
            let m = &g.short_edges()[i].members;
            let flag = |b: bool| if b { 1.0 } else { 0.0 };
            let mut f = vec![
                flag(all_equal(m.iter().map(|k| k.src))),
                flag(all_equal(m.iter().map(|k| k.sport))),
                flag(all_equal(m.iter().map(|k| k.dst))),
                flag(all_equal(m.iter().map(|k| k.dport))),
            ];
            f.extend(degrees);
            f
        }
        EdgeRef::Long(_) => degrees.to_vec(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreCluster {
    pub members: Vec<EdgeRef>,
    pub center: EdgeRef,
    /// Latest member end minus earliest member start, in seconds.
    pub time_range: f64,
}

/// Pre-cluster edges of one kind by structural similarity. Each density
/// cluster becomes one group represented by its medoid; unclustered edges
/// become singleton groups. Groups are ordered by their first member.
pub fn pre_cluster(edges: &[EdgeRef], g: &InteractionGraph, p: DbscanParams) -> Vec<PreCluster> {
    if edges.is_empty() {
        return Vec::new();
    }
    let rows: Vec<Vec<f64>> = edges.iter().map(|&e| edge_struct_features(e, g)).collect();
    let m = minmax_normalize(&FeatureMatrix::from_rows(rows[0].len(), &rows).expect("degrees are finite"));
    let db = dbscan(&m, p);

    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot: HashMap<usize, usize> = HashMap::new();
    for (i, l) in db.labels.iter().enumerate() {
        match l {
            Some(c) => {
                let gi = *slot.entry(*c).or_insert_with(|| {
                    groups.push(Vec::new());
                    groups.len() - 1
                });
                groups[gi].push(i);
            }
            None => groups.push(vec![i]),
        }
    }
    groups
        .into_iter()
        .map(|members| {
            let center = edges[medoid(&m, &members)];
            let lo = members.iter().map(|&i| g.first_ts(edges[i])).fold(f64::INFINITY, f64::min);
            let hi = members.iter().map(|&i| g.last_ts(edges[i])).fold(f64::NEG_INFINITY, f64::max);
            PreCluster { members: members.iter().map(|&i| edges[i]).collect(), center, time_range: (hi - lo).max(0.0) }
        })
        .collect()
}

/// Member row minimizing the summed distance to all members; ties go to the
/// earliest member.
fn medoid(m: &FeatureMatrix, members: &[usize]) -> usize {
    if members.len() == 1 {
        return members[0];
    }
    // weighted distinct rows, each remembering its earliest member
    let mut distinct: Vec<(usize, usize)> = Vec::new();
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    for &i in members {
        let key: Vec<u64> = m.row(i).iter().map(|v| v.to_bits()).collect();
        match seen.get(&key) {
            Some(&k) => distinct[k].1 += 1,
            None => {
                seen.insert(key, distinct.len());
                distinct.push((i, 1));
            }
        }
    }
    let candidates: Vec<usize> = if distinct.len() <= MEDOID_EXACT_LIMIT {
        (0..distinct.len()).collect()
    } else {
        let mut mean = vec![0.0; m.cols()];
        for &i in members {
            for (s, v) in mean.iter_mut().zip(m.row(i)) {
                *s += v / members.len() as f64;
            }
        }
        let mut idx: Vec<usize> = (0..distinct.len()).collect();
        idx.sort_by(|&a, &b| dist(m.row(distinct[a].0), &mean).total_cmp(&dist(m.row(distinct[b].0), &mean)).then(a.cmp(&b)));
        idx.truncate(MEDOID_CANDIDATES);
        idx.sort_unstable();
        idx
    };
    let mut best = (f64::INFINITY, usize::MAX);
    for c in candidates {
        let row = m.row(distinct[c].0);
        let total: f64 = distinct.iter().map(|&(j, w)| w as f64 * dist(row, m.row(j))).sum();
        if total < best.0 {
            best = (total, c);
        }
    }
    distinct[best.1].0
}
