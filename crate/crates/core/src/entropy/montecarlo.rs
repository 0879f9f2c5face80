//! Simulation oracle for the closed forms. A concrete state diagram is built
//! with equal arc weights and a stationary law matching the binomial as
//! closely as integer degrees allow; flows of geometric length walk it and
//! each recording rule is applied to the sampled sequences.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DtmcParams, EntropyError, ModeMetrics};

pub const MIN_FLOWS: usize = 10_000;
const MAX_SHUFFLES: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarlo {
    pub ideal: ModeMetrics,
    pub graph: ModeMetrics,
    pub sampling: ModeMetrics,
    /// `None` when no packet in the sample fired an event.
    pub event: Option<ModeMetrics>,
    pub event_h: f64,
    /// Plug-in entropy rate of the walk, nats per packet.
    pub rate: f64,
    pub mean_len: f64,
    /// States 0..=s with their arc counts in the synthesized diagram.
    pub degrees: Vec<u32>,
}

/// Binomial(s, p) probabilities of 0..=s.
pub fn binomial_pmf(s: u32, p: f64) -> Vec<f64> {
    let mut log_c = 0.0;
    (0..=s)
        .map(|k| {
            if k > 0 {
                log_c += ((s - k + 1) as f64).ln() - (k as f64).ln();
            }
            (log_c + k as f64 * p.ln() + (s - k) as f64 * (1.0 - p).ln()).exp()
        })
        .collect()
}

/// Split `total` into integers proportional to `weights` by largest
/// remainder; equal remainders favour the lower index.
fn apportion(total: u32, weights: &[f64]) -> Vec<u32> {
    let sum: f64 = weights.iter().sum();
    let raw: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut out: Vec<u32> = raw.iter().map(|r| r.floor() as u32).collect();
    let short = total - out.iter().sum::<u32>();
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())).then(a.cmp(&b)));
    for &i in order.iter().take(short as usize) {
        out[i] += 1;
    }
    out
}

fn plugin_entropy<'a>(counts: impl IntoIterator<Item = &'a u64>) -> f64 {
    let counts: Vec<f64> = counts.into_iter().filter(|&&c| c > 0).map(|&c| c as f64).collect();
    let n: f64 = counts.iter().sum();
    if n == 0.0 {
        return 0.0;
    }
    -counts.iter().map(|c| c / n * (c / n).ln()).sum::<f64>()
}

fn bernoulli_entropy(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        -t * t.ln() - (1.0 - t) * (1.0 - t).ln()
    }
}

/// Exact entropy of the event indicator: a flow is silent with probability
/// `q(1 - p^s) / (1 - (1-q)(1 - p^s))`.
pub fn event_exact_entropy(p: &DtmcParams) -> f64 {
    let x = p.p.powi(p.s as i32);
    let silent = p.q * (1.0 - x) / (1.0 - (1.0 - p.q) * (1.0 - x));
    bernoulli_entropy(silent)
}

/// Outgoing arcs per state as (arc id, target). Every state has equal in- and
/// out-degree, so a uniform choice among out-arcs is stationary in
/// proportion to degree.
struct Diagram {
    out: Vec<Vec<(usize, usize)>>,
    arc_origin: Vec<usize>,
}

fn strongly_connected(out: &[Vec<(usize, usize)>], active: &[usize]) -> bool {
    let n = out.len();
    let reach = |forward: bool| {
        let mut rev: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (u, arcs) in out.iter().enumerate() {
            for &(_, v) in arcs {
                if forward {
                    rev[u].push(v);
                } else {
                    rev[v].push(u);
                }
            }
        }
        let mut seen = vec![false; n];
        let mut stack = vec![active[0]];
        seen[active[0]] = true;
        while let Some(u) = stack.pop() {
            for &v in &rev[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        active.iter().all(|&a| seen[a])
    };
    reach(true) && reach(false)
}

fn build_diagram(degrees: &[u32], rng: &mut ChaCha8Rng) -> Result<Diagram, EntropyError> {
    let arc_origin: Vec<usize> = degrees.iter().enumerate().flat_map(|(i, &d)| std::iter::repeat_n(i, d as usize)).collect();
    let active: Vec<usize> = (0..degrees.len()).filter(|&i| degrees[i] > 0).collect();
    let mut targets = arc_origin.clone();
    for _ in 0..MAX_SHUFFLES {
        targets.shuffle(rng);
        let mut out: Vec<Vec<(usize, usize)>> = vec![Vec::new(); degrees.len()];
        for (a, (&u, &v)) in arc_origin.iter().zip(&targets).enumerate() {
            out[u].push((a, v));
        }
        if strongly_connected(&out, &active) {
            return Ok(Diagram { out, arc_origin });
        }
    }
    Err(EntropyError::Degenerate("no irreducible state diagram found".into()))
}

fn geometric(rng: &mut ChaCha8Rng, q: f64) -> u32 {
    if q >= 1.0 {
        return 1;
    }
    // inverse transform on (0, 1]
    let u: f64 = 1.0 - rng.random::<f64>();
    1 + (u.ln() / (1.0 - q).ln()).floor().min(u32::MAX as f64 - 1.0) as u32
}

pub fn monte_carlo(p: &DtmcParams, n_flows: usize, seed: u64) -> Result<MonteCarlo, EntropyError> {
    p.validate(false)?;
    if n_flows < MIN_FLOWS {
        return Err(EntropyError::InvalidParam { name: "n_flows", msg: format!("must be at least {MIN_FLOWS}") });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let degrees = apportion(p.e_count, &binomial_pmf(p.s, p.p));
    let diagram = build_diagram(&degrees, &mut rng)?;
    let n_states = degrees.len();
    let fire = p.p.powi(p.s as i32);
    let k = p.k_thresh;

    let mut arc_counts = vec![0u64; diagram.arc_origin.len()];
    let mut origin_counts = vec![0u64; n_states];
    let mut sums: BTreeMap<(u32, u32), u64> = BTreeMap::new();
    let mut per_len: BTreeMap<u32, u64> = BTreeMap::new();
    let mut counters: BTreeMap<(u32, usize, u32), u64> = BTreeMap::new();
    let mut total_len = 0u64;
    let mut silent = 0u64;
    let mut short_len = 0u64;
    let mut long_flows = 0u64;
    let mut visits = vec![0u32; n_states];

    for _ in 0..n_flows {
        let len = geometric(&mut rng, p.q);
        total_len += len as u64;
        let mut state = diagram.arc_origin[rng.random_range(0..diagram.arc_origin.len())];
        let mut sum = state as u32;
        let mut fired = rng.random::<f64>() < fire;
        visits.iter_mut().for_each(|v| *v = 0);
        visits[state] += 1;
        for _ in 1..len {
            let arcs = &diagram.out[state];
            let (arc, next) = arcs[rng.random_range(0..arcs.len())];
            arc_counts[arc] += 1;
            origin_counts[state] += 1;
            state = next;
            sum += state as u32;
            visits[state] += 1;
            fired |= rng.random::<f64>() < fire;
        }
        *sums.entry((len, sum)).or_default() += 1;
        *per_len.entry(len).or_default() += 1;
        if !fired {
            silent += 1;
        }
        if len <= k {
            short_len += len as u64;
        } else {
            long_flows += 1;
            for (i, &v) in visits.iter().enumerate() {
                *counters.entry((len, i, v)).or_default() += 1;
            }
        }
    }

    let n = n_flows as f64;
    let rate = plugin_entropy(&arc_counts) - plugin_entropy(&origin_counts);
    let mean_len = total_len as f64 / n;
    let ideal = ModeMetrics::new(rate * mean_len, mean_len)?;

    let mut h_sampling = 0.0;
    for (&len, &n_len) in &per_len {
        let within = sums.range((len, 0)..=(len, u32::MAX)).map(|(_, c)| c);
        h_sampling += n_len as f64 / n * plugin_entropy(within);
    }
    let sampling = ModeMetrics::new(h_sampling, 1.0)?;

    let theta = silent as f64 / n;
    let event_h = bernoulli_entropy(theta);
    let event = if silent < n_flows as u64 { Some(ModeMetrics::new(event_h, 1.0 - theta)?) } else { None };

    let mut h_long = 0.0;
    for (&len, &n_len) in per_len.range(k + 1..) {
        for i in 0..n_states {
            let within = counters.range((len, i, 0)..=(len, i, u32::MAX)).map(|(_, c)| c);
            h_long += n_len as f64 / n * plugin_entropy(within);
        }
    }
    let h_graph = rate * short_len as f64 / n + h_long;
    let l_graph = (short_len as f64 / p.c_agg + long_flows as f64 * p.s as f64) / n;
    let graph = ModeMetrics::new(h_graph, l_graph)?;

    Ok(MonteCarlo { ideal, graph, sampling, event, event_h, rate, mean_len, degrees })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(p: f64, q: f64) -> DtmcParams {
        DtmcParams { s: 8, e_count: 64, p, q, k_thresh: 15, c_agg: 1.5 }
    }

    #[test]
    fn pmf_sums_to_one() {
        let pmf = binomial_pmf(8, 0.3);
        assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((pmf[0] - 0.7f64.powi(8)).abs() < 1e-15);
    }

    #[test]
    fn apportion_exact_total() {
        let d = apportion(64, &binomial_pmf(8, 0.5));
        assert_eq!(d.iter().sum::<u32>(), 64);
        assert_eq!(d, vec![0, 2, 7, 14, 18, 14, 7, 2, 0]);
    }

    #[test]
    fn deterministic() {
        let a = monte_carlo(&params(0.5, 0.7), MIN_FLOWS, 3).unwrap();
        let b = monte_carlo(&params(0.5, 0.7), MIN_FLOWS, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mean_length() {
        let mc = monte_carlo(&params(0.5, 0.6), 100_000, 1).unwrap();
        assert!((mc.ideal.l - 1.0 / 0.6).abs() / (1.0 / 0.6) < 0.02);
    }

    #[test]
    fn graph_mode_keeps_less_information() {
        // a low q produces long flows
        for q in [0.1, 0.3] {
            let mc = monte_carlo(&params(0.5, q), 50_000, 5).unwrap();
            assert!(mc.graph.h <= mc.ideal.h * 1.01, "{mc:?}");
        }
    }

    #[test]
    fn rejects_small_samples() {
        assert!(monte_carlo(&params(0.5, 0.7), 100, 0).is_err());
    }
}
