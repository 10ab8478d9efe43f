use rayon::prelude::*;

use crate::sounder::PdpTensor;
use crate::{db_to_mw, mw_to_db};

/// `S(τ, j)`: per delay and scan, the strongest sample over all PACs.
#[derive(Debug, Clone, PartialEq)]
pub struct OmniPdp {
    n_dly: usize,
    n_scan: usize,
    /// Source tensor's PAC count.
    pub n_dir: usize,
    pub sample_period_ns: f64,
    pub scan_period_s: f64,
    /// Scan-major, dBm.
    data: Vec<f64>,
}

impl OmniPdp {
    pub fn n_dly(&self) -> usize {
        self.n_dly
    }

    pub fn n_scan(&self) -> usize {
        self.n_scan
    }

    pub fn get(&self, tau: usize, j: usize) -> f64 {
        self.data[j * self.n_dly + tau]
    }

    pub fn scan(&self, j: usize) -> &[f64] {
        &self.data[j * self.n_dly..(j + 1) * self.n_dly]
    }

    /// `P_av(τ)`: linear-power mean over scans, in dBm.
    pub fn mean_power_dbm(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.n_dly];
        for j in 0..self.n_scan {
            for (a, v) in acc.iter_mut().zip(self.scan(j)) {
                *a += db_to_mw(*v);
            }
        }
        acc.into_iter().map(|a| mw_to_db(a / self.n_scan as f64)).collect()
    }
}

pub fn synthesize_omni(x: &PdpTensor) -> OmniPdp {
    let (n_dly, n_dir, n_scan) = (x.n_dly(), x.n_dir(), x.n_scan());
    let mut data = vec![f64::NEG_INFINITY; n_dly * n_scan];
    data.par_chunks_mut(n_dly).enumerate().for_each(|(j, row)| {
        for n in 0..n_dir {
            for (s, v) in row.iter_mut().zip(x.pdp(n, j)) {
                *s = s.max(*v as f64);
            }
        }
    });
    OmniPdp {
        n_dly,
        n_scan,
        n_dir,
        sample_period_ns: x.sample_period_ns,
        scan_period_s: x.scan_period_s,
        data,
    }
}
