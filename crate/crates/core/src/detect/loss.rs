//! Clustering loss of an edge: distance to the nearest center, penalised by
//! the pre-cluster's activity span and rewarded by the number of flows it
//! denotes.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Losses strictly above this are malicious.
    pub threshold: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { alpha: 0.1, beta: 0.5, gamma: 1.7, threshold: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub loss: f64,
    pub center: f64,
    pub cluster: f64,
    pub count: f64,
}

impl LossParts {
    pub fn is_malicious(&self, w: &LossWeights) -> bool {
        self.loss > w.threshold
    }
}

/// `center_dist`: distance to the nearest cluster center; `time_range`:
/// seconds spanned by the pre-cluster; `size`: flows it denotes.
pub fn edge_loss(center_dist: f64, time_range: f64, size: u64, w: &LossWeights) -> LossParts {
    let count = ((size + 1) as f64).log2();
    LossParts { loss: w.alpha * center_dist - w.beta * time_range + w.gamma * count, center: center_dist, cluster: time_range, count }
}
