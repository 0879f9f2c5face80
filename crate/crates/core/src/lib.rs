//! Flow interaction graph construction and unsupervised detection of
//! malicious traffic, plus an information-theoretic model of flow recording.

pub mod cli;
pub mod config;
pub mod detect;
pub mod entropy;
pub mod eval;
pub mod flow_table;
pub mod graph;
pub mod ingest;
pub mod mlcore;
pub mod pipeline;
pub mod preprocess;
