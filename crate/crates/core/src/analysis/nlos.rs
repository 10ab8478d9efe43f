use serde::{Deserialize, Serialize};

use crate::analysis::omni::OmniPdp;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PeakOptions {
    /// Peaks must exceed `P_N` by this much.
    pub threshold_db: f64,
    /// Minimum spacing between reported peaks, bins.
    pub min_separation: usize,
}

impl Default for PeakOptions {
    fn default() -> Self {
        Self {
            threshold_db: 3.0,
            min_separation: 2,
        }
    }
}

/// Local maxima of `P_av` after the LOS bin that clear `P_N + threshold`.
/// When two maxima are closer than the separation the stronger one stays.
pub fn detect_nlos_peaks(s: &OmniPdp, p_noise_dbm: f64, k_los: usize, opts: &PeakOptions) -> Vec<usize> {
    let p = s.mean_power_dbm();
    let threshold = p_noise_dbm + opts.threshold_db;
    let mut peaks: Vec<usize> = (k_los + 1..p.len())
        .filter(|&t| p[t] > threshold && p[t] >= p[t - 1] && (t + 1 == p.len() || p[t] > p[t + 1]))
        .collect();
    peaks.sort_by(|a, b| p[*b].total_cmp(&p[*a]).then(a.cmp(b)));
    let mut kept: Vec<usize> = Vec::new();
    for t in peaks {
        if kept.iter().all(|k| k.abs_diff(t) >= opts.min_separation) {
            kept.push(t);
        }
    }
    kept.sort_unstable();
    kept
}
