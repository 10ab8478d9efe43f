use serde::{Deserialize, Serialize};

use crate::analysis::matching::{TruePathMatch, Verdict};
use crate::sounder::PdpTensor;

/// RSSI of one identified path on its best PAC, scan by scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockageSeries {
    pub label: String,
    pub delay_bin: usize,
    pub best_pac: usize,
    pub times_s: Vec<f64>,
    pub rssi_dbm: Vec<f64>,
}

/// One series per true match, in input order.
pub fn blockage_timeseries(x: &PdpTensor, matches: &[TruePathMatch]) -> Vec<BlockageSeries> {
    matches
        .iter()
        .filter(|m| m.verdict == Verdict::True && m.measured_bin < x.n_dly() && m.best_pac < x.n_dir())
        .map(|m| BlockageSeries {
            label: m.label.clone(),
            delay_bin: m.measured_bin,
            best_pac: m.best_pac,
            times_s: (0..x.n_scan()).map(|j| j as f64 * x.scan_period_s).collect(),
            rssi_dbm: (0..x.n_scan()).map(|j| x.get(m.measured_bin, m.best_pac, j)).collect(),
        })
        .collect()
}

/// First scan whose RSSI falls `drop_db` below the median of the first
/// `baseline_scans` scans.
pub fn onset_scan(series: &[f64], baseline_scans: usize, drop_db: f64) -> Option<usize> {
    let mut head: Vec<f64> = series.iter().take(baseline_scans.max(1)).copied().collect();
    if head.is_empty() {
        return None;
    }
    head.sort_by(f64::total_cmp);
    let baseline = head[head.len() / 2];
    series.iter().position(|v| *v < baseline - drop_db)
}
