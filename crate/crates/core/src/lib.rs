//! Directional 60 GHz channel-sounder simulator and the analysis chain
//! that recovers LOS/NLOS path directions and powers from its output.

pub mod analysis;
pub mod array;
pub mod env;
pub mod error;
pub mod geometry;
pub mod io;
pub mod pipeline;
pub mod raytrace;
pub mod reference;
pub mod report;
pub mod sounder;

pub use error::{Error, Result};

/// dBm (or any dB power) to linear mW.
pub fn db_to_mw(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Linear mW to dBm.
pub fn mw_to_db(mw: f64) -> f64 {
    10.0 * mw.log10()
}
