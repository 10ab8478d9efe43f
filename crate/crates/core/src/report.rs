//! Plot-ready CSV tables and the machine-readable run summary.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::analysis::{relative_power_db, Verdict};
use crate::array::AoaAodPair;
use crate::error::Result;
use crate::pipeline::{BlockageRun, CaseAnalysis};
use crate::raytrace::RayPath;
use crate::reference::ground_truth_name;

/// One row of the per-case LOS power table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig5Row {
    pub case_id: u32,
    pub k_los: usize,
    pub p_los_dbm: f64,
    pub p_rx_dbm: f64,
    pub p_noise_dbm: f64,
    pub los_fraction_pct: f64,
    pub rho_los: Option<f64>,
}

impl Fig5Row {
    pub fn from_analysis(a: &CaseAnalysis) -> Self {
        Self {
            case_id: a.case_id.unwrap_or(0),
            k_los: a.k_los,
            p_los_dbm: a.power.p_los_dbm,
            p_rx_dbm: a.power.p_rx_dbm,
            p_noise_dbm: a.power.p_noise_dbm,
            los_fraction_pct: a.power.los_fraction_pct,
            rho_los: a.rho_los,
        }
    }
}

/// One populated cell of the NLOS power table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Cell {
    pub case_id: u32,
    pub path: String,
    pub p_nlos_dbm: f64,
    pub p_rel_db: f64,
}

/// NLOS cells of one analysed case: every peak whose true match is a named
/// ground-truth path.
pub fn table2_cells(traced: &[RayPath], a: &CaseAnalysis) -> Vec<Table2Cell> {
    a.nlos
        .iter()
        .zip(&a.power.nlos)
        .filter_map(|(peak, power)| {
            let m = peak.true_match()?;
            let name = ground_truth_name(traced.get(m.candidate)?)?;
            Some(Table2Cell {
                case_id: a.case_id.unwrap_or(0),
                path: name.to_string(),
                p_nlos_dbm: power.p_nlos_dbm,
                p_rel_db: power.p_rel_db,
            })
        })
        .collect()
}

/// LOS power implied by each case's cells, `P_nlos − P'`, averaged.
pub fn implied_los_dbm(cells: &[Table2Cell]) -> BTreeMap<u32, f64> {
    let mut acc: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for c in cells {
        let e = acc.entry(c.case_id).or_default();
        e.0 += c.p_nlos_dbm - c.p_rel_db;
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

/// Recompute `P'` of each cell against the given per-case LOS powers.
/// Cells of cases without a LOS entry are dropped.
pub fn with_relative_power(cells: &[Table2Cell], p_los_dbm: &BTreeMap<u32, f64>) -> Vec<Table2Cell> {
    cells
        .iter()
        .filter_map(|c| {
            let los = p_los_dbm.get(&c.case_id)?;
            Some(Table2Cell {
                p_rel_db: relative_power_db(c.p_nlos_dbm, *los),
                ..c.clone()
            })
        })
        .collect()
}

fn write_rows<W: Write, T: Serialize>(w: W, rows: &[T]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn read_rows<R: Read, T: for<'de> Deserialize<'de>>(r: R) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    let mut rows = Vec::new();
    for row in rdr.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

pub fn write_fig5_csv<W: Write>(w: W, rows: &[Fig5Row]) -> Result<()> {
    write_rows(w, rows)
}

pub fn write_table2_csv<W: Write>(w: W, cells: &[Table2Cell]) -> Result<()> {
    write_rows(w, cells)
}

pub fn read_table2_csv<R: Read>(r: R) -> Result<Vec<Table2Cell>> {
    read_rows(r)
}

/// `time_s` then one RSSI column per series, one row per scan.
pub fn write_fig9_csv<W: Write>(w: W, run: &BlockageRun) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["time_s".to_string()];
    header.extend(
        run.series
            .iter()
            .map(|s| format!("{} bin{} pac{}", s.label, s.delay_bin, s.best_pac)),
    );
    out.write_record(&header)?;
    let n = run.series.first().map_or(0, |s| s.times_s.len());
    for j in 0..n {
        let mut rec = vec![format!("{}", run.series[0].times_s[j])];
        rec.extend(run.series.iter().map(|s| format!("{}", s.rssi_dbm[j])));
        out.write_record(&rec)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub label: String,
    pub ground_truth: Option<String>,
    pub verdict: Verdict,
    pub rho: Option<f64>,
    pub gaps_deg: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakSummary {
    pub delay_bin: usize,
    pub omega_hat: AoaAodPair,
    pub rssi0_dbm: f64,
    pub residual_var_db2: f64,
    pub best_pac: usize,
    pub candidates: Vec<CandidateSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSummary {
    pub case_id: u32,
    /// Set when the case could not be analysed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_los: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_los: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub peaks: Vec<PeakSummary>,
}

impl CaseSummary {
    pub fn failed(case_id: u32, error: impl ToString) -> Self {
        Self {
            case_id,
            error: Some(error.to_string()),
            k_los: None,
            rho_los: None,
            peaks: Vec::new(),
        }
    }

    pub fn from_analysis(traced: &[RayPath], a: &CaseAnalysis) -> Self {
        let peaks = a
            .peaks()
            .map(|p| PeakSummary {
                delay_bin: p.estimate.delay_bin,
                omega_hat: p.estimate.omega_hat,
                rssi0_dbm: p.estimate.rssi0_dbm,
                residual_var_db2: p.estimate.residual_var_db2,
                best_pac: p.estimate.best_pac(),
                candidates: p
                    .candidates
                    .iter()
                    .map(|m| CandidateSummary {
                        label: m.label.clone(),
                        ground_truth: traced.get(m.candidate).and_then(ground_truth_name).map(str::to_string),
                        verdict: m.verdict,
                        rho: m.rho,
                        gaps_deg: m.gaps_deg,
                    })
                    .collect(),
            })
            .collect();
        Self {
            case_id: a.case_id.unwrap_or(0),
            error: None,
            k_los: Some(a.k_los),
            rho_los: a.rho_los,
            peaks,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub cases: Vec<CaseSummary>,
}

impl RunSummary {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(case_id: u32, path: &str, p: f64, rel: f64) -> Table2Cell {
        Table2Cell {
            case_id,
            path: path.into(),
            p_nlos_dbm: p,
            p_rel_db: rel,
        }
    }

    #[test]
    fn implied_los_is_mean_over_cells() {
        let cells = [
            cell(1, "Path 1", -58.0, -10.0),
            cell(1, "Path 5", -68.0, -19.0),
            cell(2, "Path 1", -60.0, -12.0),
        ];
        let los = implied_los_dbm(&cells);
        assert!((los[&1] + 48.5).abs() < 1e-12);
        assert!((los[&2] + 48.0).abs() < 1e-12);
        let again = with_relative_power(&cells, &los);
        assert!((again[0].p_rel_db + 9.5).abs() < 1e-12);
        assert!((again[1].p_rel_db + 19.5).abs() < 1e-12);
    }

    #[test]
    fn table2_csv_round_trips() {
        let cells = vec![cell(3, "Path 3", -59.2, -10.75), cell(4, "Path 1", -58.67, -10.39)];
        let mut buf = Vec::new();
        write_table2_csv(&mut buf, &cells).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("case_id,path,p_nlos_dbm,p_rel_db\n"));
        assert_eq!(read_table2_csv(&buf[..]).unwrap(), cells);
    }

    #[test]
    fn failed_case_serialises_without_analysis_fields() {
        let s = RunSummary {
            cases: vec![CaseSummary::failed(5, "no signal detected above the noise threshold")],
        };
        let json = s.to_json().unwrap();
        assert!(json.contains("\"error\""));
        assert!(!json.contains("k_los"));
        let back: RunSummary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }
}
