use crate::analysis::omni::OmniPdp;
use crate::error::{Error, Result};
use crate::sounder::PdpTensor;
use crate::{db_to_mw, mw_to_db};

/// Margin over the initial noise estimate a bin must clear to count as signal.
pub const LOS_DETECT_MARGIN_DB: f64 = 6.0;

/// Index of the first arrival in the omni-PDP.
///
/// The noise level is first estimated from the leading 10% of bins; the
/// first bin whose scan-averaged power clears it by 6 dB starts the LOS
/// pulse, and the LOS index is the top of that first peak.
pub fn detect_los_index(s: &OmniPdp) -> Result<usize> {
    let p_av = s.mean_power_dbm();
    let head = (p_av.len() / 10).max(1);
    let noise = p_av[..head].iter().map(|v| db_to_mw(*v)).sum::<f64>() / head as f64;
    let threshold = mw_to_db(noise) + LOS_DETECT_MARGIN_DB;
    let first = p_av.iter().position(|v| *v > threshold).ok_or(Error::NoSignal)?;
    let mut k = first;
    while k + 1 < p_av.len() && p_av[k + 1] > p_av[k] {
        k += 1;
    }
    Ok(k)
}

/// Per-PAC linear mean over scans of the samples in delay bin `k`, dBm.
pub fn extract_rssi(x: &PdpTensor, k: usize) -> Result<Vec<f64>> {
    if k >= x.n_dly() {
        return Err(Error::BinOutOfRange {
            bin: k,
            n_dly: x.n_dly(),
        });
    }
    let mut acc = vec![0.0; x.n_dir()];
    for j in 0..x.n_scan() {
        for (n, a) in acc.iter_mut().enumerate() {
            *a += db_to_mw(x.get(k, n, j));
        }
    }
    Ok(acc.into_iter().map(|a| mw_to_db(a / x.n_scan() as f64)).collect())
}
