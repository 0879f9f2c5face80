//! Run configuration: flat `key = value` text, `#` starts a comment. Unknown
//! keys are rejected so a misspelled hyper-parameter never falls back to its
//! default silently.

use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::detect::{DetectConfig, LossWeights, MAX_EXACT_VERTICES};
use crate::flow_table::FlowTableConfig;
use crate::mlcore::DbscanParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("invalid value for `{key}`: {msg}")]
    Value { key: String, msg: String },
}

impl ConfigError {
    fn value(key: &str, msg: impl Into<String>) -> Self {
        ConfigError::Value { key: key.to_string(), msg: msg.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Config {
    /// Idle time after which a flow is complete, seconds.
    pub pkt_timeout: f64,
    /// Flows with more packets than this are long.
    pub flow_line: usize,
    /// Short-flow groups larger than this are aggregated.
    pub agg_line: usize,
    pub epsilon: f64,
    pub min_points: usize,
    pub k: usize,
    pub threshold: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Trace time between flow-table sweeps, seconds.
    pub judge_interval: f64,
    /// Analysis window length, seconds.
    pub window: f64,
    pub seed: u64,
    /// Largest vertex count solved exactly by the vertex-cover search.
    pub exact_vc_cutoff: usize,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            pkt_timeout: 10.0,
            flow_line: 15,
            agg_line: 20,
            epsilon: 4e-3,
            min_points: 40,
            k: 10,
            threshold: 10.0,
            alpha: 0.1,
            beta: 0.5,
            gamma: 1.7,
            judge_interval: 1.0,
            window: 45.0,
            seed: 0,
            exact_vc_cutoff: 30,
        }
    }
}

pub const KEYS: [&str; 14] = [
    "pkt_timeout",
    "flow_line",
    "agg_line",
    "epsilon",
    "min_points",
    "k",
    "threshold",
    "alpha",
    "beta",
    "gamma",
    "judge_interval",
    "window",
    "seed",
    "exact_vc_cutoff",
];

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| ConfigError::value(key, format!("cannot parse `{v}`")))
}

impl Config {
    /// Parse config text over the defaults. Returns the config and the keys
    /// that were set, in file order.
    pub fn parse(text: &str) -> Result<(Config, Vec<String>), ConfigError> {
        let mut cfg = Config::default();
        let mut set: Vec<String> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: line_no })?;
            let (key, value) = (key.trim(), value.trim().trim_matches('"'));
            if key.is_empty() {
                return Err(ConfigError::Syntax { line: line_no });
            }
            if !KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey { line: line_no, key: key.to_string() });
            }
            if set.iter().any(|k| k == key) {
                return Err(ConfigError::Duplicate { line: line_no, key: key.to_string() });
            }
            cfg.set(key, value)?;
            set.push(key.to_string());
        }
        cfg.validate()?;
        Ok((cfg, set))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Config, Vec<String>), ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Config::parse(&text)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        match key {
            "pkt_timeout" => self.pkt_timeout = parse_num(key, v)?,
            "flow_line" => self.flow_line = parse_num(key, v)?,
            "agg_line" => self.agg_line = parse_num(key, v)?,
            "epsilon" => self.epsilon = parse_num(key, v)?,
            "min_points" => self.min_points = parse_num(key, v)?,
            "k" => self.k = parse_num(key, v)?,
            "threshold" => self.threshold = parse_num(key, v)?,
            "alpha" => self.alpha = parse_num(key, v)?,
            "beta" => self.beta = parse_num(key, v)?,
            "gamma" => self.gamma = parse_num(key, v)?,
            "judge_interval" => self.judge_interval = parse_num(key, v)?,
            "window" => self.window = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "exact_vc_cutoff" => self.exact_vc_cutoff = parse_num(key, v)?,
            _ => return Err(ConfigError::UnknownKey { line: 0, key: key.to_string() }),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |key: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ConfigError::value(key, format!("must be a positive number, got {v}")))
            }
        };
        let non_negative = |key: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(ConfigError::value(key, format!("must be a non-negative number, got {v}")))
            }
        };
        let at_least_one = |key: &str, v: usize| {
            if v >= 1 {
                Ok(())
            } else {
                Err(ConfigError::value(key, "must be at least 1"))
            }
        };
        positive("pkt_timeout", self.pkt_timeout)?;
        at_least_one("flow_line", self.flow_line)?;
        at_least_one("agg_line", self.agg_line)?;
        positive("epsilon", self.epsilon)?;
        at_least_one("min_points", self.min_points)?;
        at_least_one("k", self.k)?;
        non_negative("threshold", self.threshold)?;
        non_negative("alpha", self.alpha)?;
        non_negative("beta", self.beta)?;
        non_negative("gamma", self.gamma)?;
        positive("judge_interval", self.judge_interval)?;
        if self.window.is_nan() || self.window <= 0.0 {
            return Err(ConfigError::value("window", format!("must be positive, got {}", self.window)));
        }
        if self.exact_vc_cutoff > MAX_EXACT_VERTICES {
            return Err(ConfigError::value("exact_vc_cutoff", format!("must be at most {MAX_EXACT_VERTICES}")));
        }
        Ok(())
    }

    pub fn flow_table(&self) -> FlowTableConfig {
        FlowTableConfig { judge_interval: self.judge_interval, pkt_timeout: self.pkt_timeout, flow_line: self.flow_line }
    }

    pub fn detect(&self) -> DetectConfig {
        DetectConfig {
            dbscan: DbscanParams { eps: self.epsilon, min_points: self.min_points },
            k: self.k,
            seed: self.seed,
            weights: LossWeights { alpha: self.alpha, beta: self.beta, gamma: self.gamma, threshold: self.threshold },
            exact_vc_cutoff: self.exact_vc_cutoff,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = Config::default();
        assert_eq!((c.pkt_timeout, c.flow_line, c.agg_line), (10.0, 15, 20));
        assert_eq!((c.epsilon, c.min_points, c.k), (4e-3, 40, 10));
        assert_eq!((c.threshold, c.alpha, c.beta, c.gamma), (10.0, 0.1, 0.5, 1.7));
        assert_eq!((c.judge_interval, c.window, c.exact_vc_cutoff), (1.0, 45.0, 30));
        c.validate().unwrap();
    }

    #[test]
    fn derived_configs_agree_with_module_defaults() {
        let c = Config::default();
        assert_eq!(c.flow_table(), FlowTableConfig::default());
        assert_eq!(c.detect(), DetectConfig::default());
    }

    #[test]
    fn parse_overrides() {
        let (c, set) = Config::parse("# tuned\nk = 5\n\nthreshold=12.5  # stricter\nseed = 9\n").unwrap();
        assert_eq!((c.k, c.threshold, c.seed), (5, 12.5, 9));
        assert_eq!(set, ["k", "threshold", "seed"]);
        assert_eq!(c.alpha, 0.1);
    }

    #[test]
    fn unknown_key() {
        let e = Config::parse("treshold = 3").unwrap_err();
        assert!(matches!(e, ConfigError::UnknownKey { line: 1, .. }), "{e}");
    }

    #[test]
    fn negative_threshold_names_key() {
        let e = Config::parse("threshold = -1").unwrap_err();
        assert!(e.to_string().contains("threshold"), "{e}");
    }

    #[test]
    fn bad_number_names_key() {
        let e = Config::parse("min_points = lots").unwrap_err();
        assert!(e.to_string().contains("min_points"), "{e}");
    }

    #[test]
    fn syntax_and_duplicates() {
        assert!(matches!(Config::parse("k 5").unwrap_err(), ConfigError::Syntax { line: 1 }));
        assert!(matches!(Config::parse("k=1\nk=2").unwrap_err(), ConfigError::Duplicate { line: 2, .. }));
    }

    #[test]
    fn cutoff_bounded() {
        assert!(Config::parse("exact_vc_cutoff = 65").is_err());
        assert!(Config::parse("exact_vc_cutoff = 64").is_ok());
    }

    #[test]
    fn every_key_settable() {
        let mut c = Config::default();
        for k in KEYS {
            c.set(k, "1").unwrap();
        }
        c.validate().unwrap();
    }
}
