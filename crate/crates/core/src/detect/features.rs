//! Full edge feature vectors: structural features followed by traffic
//! statistics.

use crate::graph::{EdgeRef, InteractionGraph};
use crate::preprocess::edge_struct_features;

pub const SHORT_DIM: usize = 13;
pub const LONG_DIM: usize = 11;

pub fn edge_full_features(e: EdgeRef, g: &InteractionGraph) -> Vec<f64> {
    let mut f = edge_struct_features(e, g);
    match e {
        EdgeRef::Short(i) => {
            let s = &g.short_edges()[i];
            let n = s.features.len();
            let bytes: u64 = s.features.iter().map(|p| p.len as u64).sum();
            let mean_interval = if n == 0 { 0.0 } else { s.features.iter().map(|p| p.interval).sum::<f64>() / n as f64 };
            f.extend([s.flow_count as f64, n as f64, bytes as f64, s.protocol_mask as f64, mean_interval]);
        }
        EdgeRef::Long(i) => {
            let l = &g.long_edges()[i];
            // a flow whose packets share one timestamp reports its packet count as rate
            let rate = if l.fct > 0.0 { l.pkt_count as f64 / l.fct } else { l.pkt_count as f64 };
            let (len_code, len_count) = l.len_hist.max_bin().unwrap_or((0, 0));
            let (proto_code, proto_count) = l.proto_hist.max_bin().unwrap_or((0, 0));
            f.extend([
                l.fct,
                rate,
                l.pkt_count as f64,
                len_count as f64,
                len_code as f64,
                proto_count as f64,
                proto_code as f64,
            ]);
        }
    }
    f
}
