//! The measurement analysis chain: omni-PDP, LOS detection, direction
//! finding, power accounting, NLOS identification and blockage series.

pub mod blockage;
pub mod los;
pub mod ls;
pub mod matching;
pub mod nlos;
pub mod omni;
pub mod power;

pub use blockage::{blockage_timeseries, onset_scan, BlockageSeries};
pub use los::{detect_los_index, extract_rssi};
pub use ls::{ls_direction_find, LsOptions, LsSolver, PathEstimate};
pub use matching::{correlation_rho, match_candidates, MatchOptions, TruePathMatch, Verdict};
pub use nlos::{detect_nlos_peaks, PeakOptions};
pub use omni::{synthesize_omni, OmniPdp};
pub use power::{noise_power_dbm, power_report, relative_power_db, NlosPower, PowerReport};
