//! Integration of information density over the feasible parameter box and
//! grid sweeps of the ideal-versus-graph information gap.

use super::{mode_graph, mode_ideal, DtmcParams, EntropyError, Mode};

pub const P_RANGE: (f64, f64) = (0.1, 0.9);
pub const Q_RANGE: (f64, f64) = (0.5, 0.9);
pub const MIN_GRID: usize = 32;

/// Parameter sets (s, e_count, K, C) standing in for packet length, arrival
/// interval and protocol features.
pub const CALIBRATION_PRESETS: [(&str, DtmcParams); 3] = [
    ("length", DtmcParams { s: 32, e_count: 600, p: 0.5, q: 0.7, k_thresh: 15, c_agg: 1.4 }),
    ("interval", DtmcParams { s: 24, e_count: 300, p: 0.5, q: 0.7, k_thresh: 15, c_agg: 1.5 }),
    ("protocol", DtmcParams { s: 16, e_count: 120, p: 0.5, q: 0.7, k_thresh: 15, c_agg: 1.5 }),
];

/// `i`-th of `n + 1` evenly spaced points on `range`, endpoints exact.
pub fn grid_point(range: (f64, f64), i: usize, n: usize) -> f64 {
    let t = i as f64 / n as f64;
    range.0 * (1.0 - t) + range.1 * t
}

/// Composite trapezoid rule over the feasible box with `n` intervals per axis.
pub fn trapezoid_2d(n: usize, mut f: impl FnMut(f64, f64) -> f64) -> f64 {
    let hp = (P_RANGE.1 - P_RANGE.0) / n as f64;
    let hq = (Q_RANGE.1 - Q_RANGE.0) / n as f64;
    let weight = |i: usize| if i == 0 || i == n { 0.5 } else { 1.0 };
    let mut total = 0.0;
    for i in 0..=n {
        let p = grid_point(P_RANGE, i, n);
        let mut row = 0.0;
        for j in 0..=n {
            row += weight(j) * f(p, grid_point(Q_RANGE, j, n));
        }
        total += weight(i) * row;
    }
    total * hp * hq
}

/// Integral of a mode's information density over the feasible box; `base`
/// supplies everything except p and q.
pub fn integrate_density(mode: Mode, base: &DtmcParams, grid_n: usize) -> Result<f64, EntropyError> {
    if grid_n < MIN_GRID {
        return Err(EntropyError::InvalidParam { name: "grid_n", msg: format!("must be at least {MIN_GRID}") });
    }
    let mut err = None;
    let v = trapezoid_2d(grid_n, |p, q| match mode.metrics(&base.with_pq(p, q)) {
        Ok(m) => m.d,
        Err(e) => {
            err.get_or_insert(e);
            0.0
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

/// `(p, q, h_ideal - h_graph)` on an `(n_p + 1) x (n_q + 1)` grid.
pub fn dpi_gaps(base: &DtmcParams, n_p: usize, n_q: usize) -> Result<Vec<(f64, f64, f64)>, EntropyError> {
    let mut out = Vec::with_capacity((n_p + 1) * (n_q + 1));
    for i in 0..=n_p {
        for j in 0..=n_q {
            let prm = base.with_pq(grid_point(P_RANGE, i, n_p), grid_point(Q_RANGE, j, n_q));
            out.push((prm.p, prm.q, mode_ideal(&prm)?.h - mode_graph(&prm)?.h));
        }
    }
    Ok(out)
}
