use std::fmt;

use serde::{Deserialize, Serialize};

use crate::analysis::ls::PathEstimate;
use crate::array::ArrayTables;
use crate::error::{Error, Result};
use crate::raytrace::{predict_rssi, RayPath};

/// Pearson correlation of two per-PAC vectors, in the dB domain.
pub fn correlation_rho(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    True,
    Rejected,
    NonExistent,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::True => "true",
            Verdict::Rejected => "rejected",
            Verdict::NonExistent => "non-existent",
        })
    }
}

/// Outcome of comparing one measured peak with one traced path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruePathMatch {
    pub measured_bin: usize,
    /// Index into the traced path list.
    pub candidate: usize,
    pub label: String,
    /// `|ω̂ − ω|` per component: φ_TX, φ_RX, θ_TX, θ_RX.
    pub gaps_deg: [f64; 4],
    pub rho: Option<f64>,
    pub verdict: Verdict,
    /// Strongest measured PAC at this peak.
    pub best_pac: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchOptions {
    pub delay_tol_bins: i64,
    pub angle_tol_deg: f64,
    pub sample_period_ns: f64,
    /// Added to a traced path's bin to land on the measured delay axis.
    pub bin_offset: i64,
}

impl Default for MatchOptions {
    fn default() -> Self {
        Self {
            delay_tol_bins: 1,
            angle_tol_deg: 5.0,
            sample_period_ns: 0.8,
            bin_offset: 0,
        }
    }
}

/// Classify every traced path against one measured peak: paths outside
/// the delay gate are non-existent; of the rest, those within the angle
/// gate are scored by ρ and the best scorer is declared the true path.
pub fn match_candidates(
    est: &PathEstimate,
    traced: &[RayPath],
    tables: &ArrayTables,
    opts: &MatchOptions,
) -> Vec<TruePathMatch> {
    let best_pac = est.best_pac();
    let mut out: Vec<TruePathMatch> = traced
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let bin = p.delay_bin(opts.sample_period_ns) + opts.bin_offset;
            let gaps_deg = est.omega_hat.gaps(&p.omega);
            let in_delay = (bin - est.delay_bin as i64).abs() <= opts.delay_tol_bins;
            let in_angle = gaps_deg.iter().all(|g| *g <= opts.angle_tol_deg);
            let rho = if in_delay && in_angle {
                predict_rssi(tables, p)
                    .ok()
                    .and_then(|pred| correlation_rho(&est.rssi_vector, pred.values()).ok())
            } else {
                None
            };
            TruePathMatch {
                measured_bin: est.delay_bin,
                candidate: i,
                label: p.label(),
                gaps_deg,
                rho,
                verdict: if in_delay {
                    Verdict::Rejected
                } else {
                    Verdict::NonExistent
                },
                best_pac,
            }
        })
        .collect();
    let winner = out.iter().enumerate().filter_map(|(i, m)| m.rho.map(|r| (i, r))).fold(
        None,
        |best: Option<(usize, f64)>, (i, r)| match best {
            Some((_, br)) if br >= r => best,
            _ => Some((i, r)),
        },
    );
    if let Some((i, _)) = winner {
        out[i].verdict = Verdict::True;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::{synth_codebook, AoaAodPair, CodebookParams};
    use crate::geometry::Point3;
    use crate::raytrace::{PathTag, C_M_PER_NS};

    fn tables() -> ArrayTables {
        let t = synth_codebook(&CodebookParams::default()).unwrap();
        ArrayTables::new(t.clone(), t)
    }

    fn path(delay_ns: f64, omega: AoaAodPair) -> RayPath {
        RayPath {
            vertices: vec![Point3::ORIGIN, Point3::new(delay_ns * C_M_PER_NS, 0.0, 0.0)],
            interactions: vec![],
            length_m: delay_ns * C_M_PER_NS,
            delay_ns,
            path_gain_db: -70.0,
            omega,
            tag: PathTag::Los,
        }
    }

    fn estimate(bin: usize, omega_hat: AoaAodPair, truth: AoaAodPair) -> PathEstimate {
        let rssi = tables().gain_vector(&truth).unwrap().iter().map(|g| g - 70.0).collect();
        PathEstimate {
            delay_bin: bin,
            rssi_vector: rssi,
            omega_hat,
            rssi0_dbm: -70.0,
            residual_var_db2: 0.0,
        }
    }

    #[test]
    fn rho_basics() {
        let a = [1.0, 2.0, 4.0, 8.0];
        assert!((correlation_rho(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = a.iter().map(|v| 3.0 - v).collect();
        assert!((correlation_rho(&a, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert!(matches!(correlation_rho(&a, &[1.0; 4]), Err(Error::ZeroVariance)));
        assert!(correlation_rho(&a, &[1.0; 3]).is_err());
    }

    #[test]
    fn sole_survivor_is_true() {
        let truth = AoaAodPair::new(10.0, -20.0, -4.0, 6.0);
        let est = estimate(25, AoaAodPair::new(12.0, -22.0, -2.0, 8.0), truth);
        let traced = vec![path(20.0, truth), path(40.0, truth)];
        let m = match_candidates(&est, &traced, &tables(), &MatchOptions::default());
        assert_eq!(m[0].verdict, Verdict::True);
        assert!(m[0].rho.unwrap() > 0.99);
        assert_eq!(m[1].verdict, Verdict::NonExistent);
    }

    #[test]
    fn higher_rho_wins_among_survivors() {
        let truth = AoaAodPair::new(10.0, -20.0, -4.0, 6.0);
        let other = AoaAodPair::new(14.0, -16.0, 0.0, 10.0);
        let est = estimate(25, AoaAodPair::new(12.0, -18.0, -2.0, 8.0), truth);
        let traced = vec![path(20.0, other), path(20.2, truth)];
        let m = match_candidates(&est, &traced, &tables(), &MatchOptions::default());
        assert!(m[1].rho.unwrap() > m[0].rho.unwrap());
        assert_eq!(m[1].verdict, Verdict::True);
        assert_eq!(m[0].verdict, Verdict::Rejected);
    }

    #[test]
    fn angle_gate_rejects_regardless_of_rho() {
        let truth = AoaAodPair::new(10.0, -20.0, -4.0, 6.0);
        let est = estimate(25, AoaAodPair::new(16.0, -20.0, -4.0, 6.0), truth);
        let m = match_candidates(&est, &[path(20.0, truth)], &tables(), &MatchOptions::default());
        assert_eq!(m[0].verdict, Verdict::Rejected);
        assert!(m[0].rho.is_none());
    }

    #[test]
    fn delay_gate_uses_offset() {
        let truth = AoaAodPair::default();
        let est = estimate(45, truth, truth);
        let opts = MatchOptions {
            bin_offset: 20,
            ..MatchOptions::default()
        };
        let m = match_candidates(&est, &[path(20.0, truth), path(21.6, truth)], &tables(), &opts);
        assert_eq!(m[0].verdict, Verdict::True);
        assert_eq!(m[1].verdict, Verdict::NonExistent);
    }
}
