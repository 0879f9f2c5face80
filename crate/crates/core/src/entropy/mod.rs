//! Information model of flow recording. Per-packet feature values follow a
//! stationary Markov chain with a binomial stationary law and flow lengths are
//! geometric; closed forms give the expected information, storage and density
//! of four recording modes.

mod integrate;
mod montecarlo;

use std::f64::consts::{E, LN_2, PI};

use thiserror::Error;

pub use integrate::{
    dpi_gaps, grid_point, integrate_density, trapezoid_2d, CALIBRATION_PRESETS, P_RANGE, Q_RANGE,
};
pub use montecarlo::{binomial_pmf, event_exact_entropy, monte_carlo, MonteCarlo, MIN_FLOWS};

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Error, PartialEq)]
pub enum EntropyError {
    #[error("invalid parameter {name}: {msg}")]
    InvalidParam { name: &'static str, msg: String },
    #[error("{0} lies outside the feasible region")]
    OutsideRegion(&'static str),
    #[error("degenerate result: {0}")]
    Degenerate(String),
    #[error("event probability underflows to zero")]
    Underflow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtmcParams {
    /// Number of feature states.
    pub s: u32,
    /// Number of edges in the state diagram.
    pub e_count: u32,
    /// Binomial parameter of the stationary law.
    pub p: f64,
    /// Geometric parameter of the flow length.
    pub q: f64,
    /// Packet count separating short from long flows.
    pub k_thresh: u32,
    /// Mean number of flows per aggregated short edge.
    pub c_agg: f64,
}

impl DtmcParams {
    pub fn with_pq(&self, p: f64, q: f64) -> Self {
        DtmcParams { p, q, ..*self }
    }

    /// Check structural constraints, and the feasible box when `region` is set.
    pub fn validate(&self, region: bool) -> Result<(), EntropyError> {
        let bad = |name, msg: &str| Err(EntropyError::InvalidParam { name, msg: msg.to_string() });
        if self.s < 2 {
            return bad("s", "must be at least 2");
        }
        if self.e_count < 2 || self.e_count as u64 > self.s as u64 * self.s as u64 {
            return bad("e_count", "must lie in [2, s^2]");
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return bad("p", "must lie in (0, 1)");
        }
        if !(self.q > 0.0 && self.q <= 1.0) {
            return bad("q", "must lie in (0, 1]");
        }
        if self.k_thresh < 1 {
            return bad("k", "must be at least 1");
        }
        if !(self.c_agg >= 1.0 && self.c_agg.is_finite()) {
            return bad("c", "must be a finite value >= 1");
        }
        if region {
            if !(P_RANGE.0..=P_RANGE.1).contains(&self.p) {
                return Err(EntropyError::OutsideRegion("p"));
            }
            if !(Q_RANGE.0..=Q_RANGE.1).contains(&self.q) {
                return Err(EntropyError::OutsideRegion("q"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeMetrics {
    /// Expected information per flow, in nats.
    pub h: f64,
    /// Expected storage per flow.
    pub l: f64,
    /// Information density `h / l`.
    pub d: f64,
}

impl ModeMetrics {
    pub fn new(h: f64, l: f64) -> Result<Self, EntropyError> {
        if !(l > 0.0 && l.is_finite() && h.is_finite()) {
            return Err(EntropyError::Degenerate(format!("h = {h}, l = {l}")));
        }
        Ok(ModeMetrics { h, l, d: h / l })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Ideal,
    Graph,
    Sampling,
    Event,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Ideal, Mode::Graph, Mode::Sampling, Mode::Event];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Ideal => "ideal",
            Mode::Graph => "hv",
            Mode::Sampling => "samp",
            Mode::Event => "eve",
        }
    }

    pub fn metrics(self, p: &DtmcParams) -> Result<ModeMetrics, EntropyError> {
        match self {
            Mode::Ideal => mode_ideal(p),
            Mode::Graph => mode_graph(p),
            Mode::Sampling => mode_sampling(p),
            Mode::Event => mode_event(p),
        }
    }
}

/// Gaussian approximation of the stationary binomial law's entropy,
/// `½ ln(2π e s p (1-p))`.
fn binomial_entropy_approx(p: &DtmcParams) -> Result<f64, EntropyError> {
    let v = p.p * (1.0 - p.p);
    if v <= 0.0 {
        return Err(EntropyError::InvalidParam { name: "p", msg: "p(1-p) must be positive".into() });
    }
    Ok(0.5 * (2.0 * PI * p.s as f64 * E * v).ln())
}

/// Entropy rate of the chain in nats per packet.
pub fn entropy_rate(p: &DtmcParams) -> Result<f64, EntropyError> {
    Ok((p.e_count as f64).ln() - binomial_entropy_approx(p)?)
}

/// Record every packet.
pub fn mode_ideal(p: &DtmcParams) -> Result<ModeMetrics, EntropyError> {
    let rate = entropy_rate(p)?;
    ModeMetrics::new(rate / p.q, 1.0 / p.q)
}

/// Record short flows in full (shared by aggregation) and long flows as
/// per-state counters.
pub fn mode_graph(p: &DtmcParams) -> Result<ModeMetrics, EntropyError> {
    let rate = entropy_rate(p)?;
    let s = p.s as f64;
    let k = p.k_thresh as f64;
    let tail = (1.0 - p.q).powi(p.k_thresh as i32);
    let short_mass = (1.0 - (k * p.q + 1.0) * tail) / p.q;
    let h_short = short_mass * rate;
    let h_long = 0.25
        * s
        * tail
        * ((1.0 + s) * (p.p * s).ln() + 2.0 * (2.0 * PI * E).ln() + 2.0 * p.q * k.ln()
            - 2.0 * s * (1.0 + p.p + EULER_GAMMA));
    let l = s * tail + short_mass / p.c_agg;
    ModeMetrics::new(h_short + h_long, l)
}

/// Record one accumulated statistic per flow.
pub fn mode_sampling(p: &DtmcParams) -> Result<ModeMetrics, EntropyError> {
    let h = binomial_entropy_approx(p)? + LN_2 / 2.0 * p.q * (1.0 - p.q);
    ModeMetrics::new(h, 1.0)
}

/// Record only whether an event fired during the flow; each packet fires
/// with probability `p^s`.
pub fn mode_event(p: &DtmcParams) -> Result<ModeMetrics, EntropyError> {
    let x = p.p.powi(p.s as i32);
    if x == 0.0 {
        return Err(EntropyError::Underflow);
    }
    let eta = p.q + x * (1.0 - p.q);
    // silence probability is (q - q x) / eta = 1 - x / eta; keep the small
    // complement exact when x is far below machine epsilon
    let fired = x / eta;
    let theta = 1.0 - fired;
    let h = if theta > 0.0 { -2.0 * theta * (-fired).ln_1p() } else { 0.0 };
    ModeMetrics::new(h, fired)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(s: u32, e_count: u32, p: f64, q: f64) -> DtmcParams {
        DtmcParams { s, e_count, p, q, k_thresh: 15, c_agg: 1.5 }
    }

    #[test]
    fn rate_value() {
        let r = entropy_rate(&params(4, 16, 0.5, 0.7)).unwrap();
        assert!((r - (16f64.ln() - 0.5 * (2.0 * PI * E).ln())).abs() < 1e-12);
        assert!((r - 1.3537).abs() < 1e-4);
    }

    #[test]
    fn doubling_edges_adds_ln2() {
        let a = entropy_rate(&params(8, 20, 0.3, 0.7)).unwrap();
        let b = entropy_rate(&params(8, 40, 0.3, 0.7)).unwrap();
        assert!((b - a - LN_2).abs() < 1e-12);
    }

    #[test]
    fn rate_minimal_at_half() {
        let mid = entropy_rate(&params(8, 40, 0.5, 0.7)).unwrap();
        for p in [0.1, 0.3, 0.49, 0.51, 0.9] {
            assert!(entropy_rate(&params(8, 40, p, 0.7)).unwrap() > mid);
        }
    }

    #[test]
    fn rate_rejects_degenerate_p() {
        assert!(entropy_rate(&params(8, 40, 0.0, 0.7)).is_err());
        assert!(entropy_rate(&params(8, 40, 1.0, 0.7)).is_err());
    }

    #[test]
    fn ideal_limits() {
        let p = params(8, 40, 0.4, 1.0);
        let m = mode_ideal(&p).unwrap();
        assert_eq!(m.h, entropy_rate(&p).unwrap());
        assert_eq!(m.l, 1.0);
        assert_eq!(mode_ideal(&params(8, 40, 0.4, 0.5)).unwrap().l, 2.0);
        let d1 = mode_ideal(&params(8, 40, 0.4, 0.6)).unwrap().d;
        let d2 = mode_ideal(&params(8, 40, 0.4, 0.85)).unwrap().d;
        assert!((d1 - d2).abs() < 1e-12);
    }

    #[test]
    fn graph_mode_large_threshold() {
        let mut p = params(16, 120, 0.5, 0.9);
        p.k_thresh = 200;
        let hv = mode_graph(&p).unwrap();
        let ideal = mode_ideal(&p).unwrap();
        assert!((hv.h - ideal.h).abs() < 1e-12);
    }

    #[test]
    fn graph_mode_without_aggregation() {
        let mut p = params(16, 120, 0.5, 0.6);
        p.c_agg = 1.0;
        let k = p.k_thresh as i32;
        let tail = (1.0 - p.q).powi(k);
        // expected length truncated at the threshold
        let truncated: f64 = (1..=k).map(|l| l as f64 * p.q * (1.0 - p.q).powi(l - 1)).sum();
        let hv = mode_graph(&p).unwrap();
        assert!((hv.l - p.s as f64 * tail - truncated).abs() < 1e-12);
    }

    #[test]
    fn sampling_values() {
        let m = mode_sampling(&params(4, 16, 0.5, 0.5)).unwrap();
        assert!((m.h - 1.5055).abs() < 1e-4);
        assert_eq!(m.l, 1.0);
        let m1 = mode_sampling(&params(4, 16, 0.5, 1.0)).unwrap();
        assert!((m1.h - 0.5 * (2.0 * PI * E).ln()).abs() < 1e-12);
    }

    #[test]
    fn event_values() {
        // an event on every packet carries no information
        let m = mode_event(&params(2, 4, 1.0 - 1e-12, 0.7)).unwrap();
        assert!(m.h.abs() < 1e-9);
        // theta of one half
        let theta: f64 = 0.5;
        assert!((-2.0 * theta * theta.ln() - LN_2).abs() < 1e-12);
        assert_eq!(mode_event(&params(64, 64, 1e-6, 0.7)), Err(EntropyError::Underflow));
    }

    #[test]
    fn region_check() {
        assert!(params(8, 40, 0.05, 0.7).validate(true).is_err());
        assert!(params(8, 40, 0.05, 0.7).validate(false).is_ok());
        assert!(params(8, 40, 0.5, 0.95).validate(true).is_err());
        assert!(params(8, 65, 0.5, 0.7).validate(false).is_err());
        assert!(params(1, 1, 0.5, 0.7).validate(false).is_err());
    }

    proptest! {
        #[test]
        fn density_is_ratio(s in 2u32..=64, e in 2u32..4096, p in 0.1f64..=0.9, q in 0.5f64..=0.9, k in 1u32..40, c in 1.0f64..4.0) {
            let e = e.min(s * s).max(2);
            let prm = DtmcParams { s, e_count: e, p, q, k_thresh: k, c_agg: c };
            for mode in Mode::ALL {
                match mode.metrics(&prm) {
                    Ok(m) => {
                        prop_assert_eq!(m.d, m.h / m.l);
                        prop_assert!(m.h.is_finite() && m.l > 0.0);
                    }
                    Err(EntropyError::Underflow) => prop_assert_eq!(mode, Mode::Event),
                    Err(err) => prop_assert!(false, "{err}"),
                }
            }
        }

        #[test]
        fn event_theta_is_silence_probability(s in 2u32..=16, p in 0.1f64..=0.9, q in 0.5f64..=0.9) {
            let x = p.powi(s as i32);
            let silent = q * (1.0 - x) / (1.0 - (1.0 - q) * (1.0 - x));
            let exact = event_exact_entropy(&params(s, 4, p, q));
            let bernoulli = -silent * silent.ln() - (1.0 - silent) * (1.0 - silent).ln();
            prop_assert!((exact - bernoulli).abs() < 1e-12);
            let m = mode_event(&params(s, 4, p, q)).unwrap();
            let theta = (m.h / -2.0).abs();
            prop_assert!(theta <= 1.0 && m.l > 0.0);
        }
    }
}
