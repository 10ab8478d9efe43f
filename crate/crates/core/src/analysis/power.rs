use serde::{Deserialize, Serialize};

use crate::analysis::omni::OmniPdp;
use crate::error::{Error, Result};
use crate::{db_to_mw, mw_to_db};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NlosPower {
    pub delay_bin: usize,
    /// Noise-subtracted link power, dBm.
    pub p_nlos_dbm: f64,
    /// `P'`: link power relative to the LOS link, dB.
    pub p_rel_db: f64,
}

/// Power accounting of one omni-PDP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerReport {
    /// `P_av(τ)`, dBm.
    pub p_av_dbm: Vec<f64>,
    pub p_noise_dbm: f64,
    pub guard_m: usize,
    pub k_los: usize,
    pub p_rx_dbm: f64,
    pub p_los_dbm: f64,
    pub los_fraction_pct: f64,
    pub nlos: Vec<NlosPower>,
}

impl PowerReport {
    /// `P'` of a link at `p_nlos_dbm` against this report's LOS link.
    pub fn relative_db(&self, p_nlos_dbm: f64) -> f64 {
        relative_power_db(p_nlos_dbm, self.p_los_dbm)
    }
}

pub fn relative_power_db(p_nlos_dbm: f64, p_los_dbm: f64) -> f64 {
    p_nlos_dbm - p_los_dbm
}

/// Noise power: linear mean of `P_av` over the bins that precede the LOS
/// pulse by more than `guard_m`.
pub fn noise_power_dbm(p_av_dbm: &[f64], k_los: usize, guard_m: usize) -> Result<f64> {
    if k_los <= guard_m || k_los >= p_av_dbm.len() {
        return Err(Error::InsufficientNoiseRegion { k_los, guard: guard_m });
    }
    let region = &p_av_dbm[..k_los - guard_m];
    Ok(mw_to_db(
        region.iter().map(|v| db_to_mw(*v)).sum::<f64>() / region.len() as f64,
    ))
}

fn link_power_mw(p_av_dbm: f64, noise_mw: f64) -> f64 {
    (db_to_mw(p_av_dbm) - noise_mw).max(0.0)
}

pub fn power_report(s: &OmniPdp, k_los: usize, nlos_bins: &[usize], guard_m: usize) -> Result<PowerReport> {
    let p_av_dbm = s.mean_power_dbm();
    let p_noise_dbm = noise_power_dbm(&p_av_dbm, k_los, guard_m)?;
    let noise_mw = db_to_mw(p_noise_dbm);
    for &b in nlos_bins {
        if b >= p_av_dbm.len() {
            return Err(Error::BinOutOfRange {
                bin: b,
                n_dly: p_av_dbm.len(),
            });
        }
    }
    let p_rx_mw: f64 = p_av_dbm.iter().map(|v| link_power_mw(*v, noise_mw)).sum();
    let p_los_mw = link_power_mw(p_av_dbm[k_los], noise_mw);
    let p_los_dbm = mw_to_db(p_los_mw);
    let los_fraction_pct = if p_rx_mw > 0.0 { 100.0 * p_los_mw / p_rx_mw } else { 0.0 };
    let nlos = nlos_bins
        .iter()
        .map(|&b| {
            let p = mw_to_db(link_power_mw(p_av_dbm[b], noise_mw));
            NlosPower {
                delay_bin: b,
                p_nlos_dbm: p,
                p_rel_db: relative_power_db(p, p_los_dbm),
            }
        })
        .collect();
    Ok(PowerReport {
        p_av_dbm,
        p_noise_dbm,
        guard_m,
        k_los,
        p_rx_dbm: mw_to_db(p_rx_mw),
        p_los_dbm,
        los_fraction_pct,
        nlos,
    })
}
