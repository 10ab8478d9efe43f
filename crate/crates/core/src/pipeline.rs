//! Scene → trace → simulate → analyze, per measurement case.

use serde::{Deserialize, Serialize};

use crate::analysis::{
    blockage_timeseries, correlation_rho, detect_los_index, detect_nlos_peaks, extract_rssi, match_candidates,
    noise_power_dbm, onset_scan, power_report, synthesize_omni, BlockageSeries, LsOptions, LsSolver, MatchOptions,
    PathEstimate, PeakOptions, PowerReport, TruePathMatch, Verdict,
};
use crate::array::{synth_codebook, ArrayTables, CodebookParams, OrientationCase};
use crate::env::{NodePose, Scene};
use crate::error::{Error, Result};
use crate::raytrace::{predict_rssi, trace_paths, RayPath};
use crate::sounder::{synthesize_tensor, PdpTensor, SimConfig};

/// Everything the pipeline needs besides the scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub tx_power_dbm: f64,
    pub codebook: CodebookParams,
    pub sim: SimConfig,
    pub guard_m: usize,
    pub peaks: PeakOptions,
    pub delay_tol_bins: i64,
    pub angle_tol_deg: f64,
    /// Direction finding only uses PACs above `P_N` plus this margin.
    pub mask_noise_margin_db: Option<f64>,
    /// Scans averaged for the pre-blockage baseline.
    pub onset_baseline_scans: usize,
    /// Drop below baseline that marks a blockage onset.
    pub onset_drop_db: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tx_power_dbm: 7.5,
            codebook: CodebookParams::default(),
            sim: SimConfig::default(),
            guard_m: 5,
            peaks: PeakOptions::default(),
            delay_tol_bins: 1,
            angle_tol_deg: 5.0,
            mask_noise_margin_db: Some(3.0),
            onset_baseline_scans: 100,
            onset_drop_db: 3.0,
        }
    }
}

impl PipelineConfig {
    pub fn tables(&self) -> Result<ArrayTables> {
        let t = synth_codebook(&self.codebook)?;
        Ok(ArrayTables::new(t.clone(), t))
    }

    pub fn ls_options(&self, p_noise_dbm: f64) -> LsOptions {
        LsOptions {
            mask_below_dbm: self.mask_noise_margin_db.map(|m| p_noise_dbm + m),
        }
    }

    /// Simulation settings for one case; each case draws its own noise.
    pub fn sim_for_case(&self, case_id: u32) -> SimConfig {
        SimConfig {
            rng_seed: self.sim.rng_seed.wrapping_add(case_id as u64),
            case_id: Some(case_id),
            ..self.sim.clone()
        }
    }
}

pub fn case_poses(scene: &Scene, case: &OrientationCase) -> (NodePose, NodePose) {
    case.apply(&scene.tx, &scene.rx)
}

pub fn trace_case(scene: &Scene, case: &OrientationCase, cfg: &PipelineConfig) -> Result<Vec<RayPath>> {
    let (tx, rx) = case_poses(scene, case);
    trace_paths(&scene.environment, &tx, &rx, cfg.tx_power_dbm)
}

pub fn simulate_case(
    scene: &Scene,
    case: &OrientationCase,
    cfg: &PipelineConfig,
    tables: &ArrayTables,
    with_blocker: bool,
) -> Result<(Vec<RayPath>, PdpTensor)> {
    let paths = trace_case(scene, case, cfg)?;
    let traj = if with_blocker { scene.blocker.as_ref() } else { None };
    let x = synthesize_tensor(&paths, tables, &cfg.sim_for_case(case.case_id), traj)?;
    Ok((paths, x))
}

/// Direction estimate and candidate verdicts for one measured peak.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakAnalysis {
    pub estimate: PathEstimate,
    /// Candidates inside the delay gate; non-existent paths are omitted.
    pub candidates: Vec<TruePathMatch>,
}

impl PeakAnalysis {
    pub fn true_match(&self) -> Option<&TruePathMatch> {
        self.candidates.iter().find(|m| m.verdict == Verdict::True)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseAnalysis {
    pub case_id: Option<u32>,
    pub k_los: usize,
    /// Measured LOS RSSI vector against the traced LOS prediction.
    pub rho_los: Option<f64>,
    pub los: PeakAnalysis,
    pub nlos: Vec<PeakAnalysis>,
    pub power: PowerReport,
}

impl CaseAnalysis {
    pub fn peaks(&self) -> impl Iterator<Item = &PeakAnalysis> {
        std::iter::once(&self.los).chain(&self.nlos)
    }
}

#[allow(clippy::too_many_arguments)]
fn analyze_peak(
    x: &PdpTensor,
    bin: usize,
    solver: &LsSolver,
    traced: &[RayPath],
    tables: &ArrayTables,
    cfg: &PipelineConfig,
    p_noise: f64,
    opts: &MatchOptions,
) -> Result<PeakAnalysis> {
    let rssi = extract_rssi(x, bin)?;
    let estimate = solver.solve(&rssi, bin, &cfg.ls_options(p_noise))?;
    let candidates = match_candidates(&estimate, traced, tables, opts)
        .into_iter()
        .filter(|m| m.verdict != Verdict::NonExistent)
        .collect();
    Ok(PeakAnalysis { estimate, candidates })
}

/// Full analysis chain of one tensor against the traced paths of its case.
pub fn analyze_tensor(
    x: &PdpTensor,
    traced: &[RayPath],
    tables: &ArrayTables,
    cfg: &PipelineConfig,
    case_id: Option<u32>,
) -> Result<CaseAnalysis> {
    if x.n_dir() != tables.n_dir() {
        return Err(Error::LengthMismatch(x.n_dir(), tables.n_dir()));
    }
    let s = synthesize_omni(x);
    let k_los = detect_los_index(&s)?;
    let p_noise = noise_power_dbm(&s.mean_power_dbm(), k_los, cfg.guard_m)?;
    let nlos_bins = detect_nlos_peaks(&s, p_noise, k_los, &cfg.peaks);
    let power = power_report(&s, k_los, &nlos_bins, cfg.guard_m)?;

    // The traced delays are aligned to the measurement on the first arrival.
    let first_traced = traced.iter().map(|p| p.delay_bin(x.sample_period_ns)).min();
    let opts = MatchOptions {
        delay_tol_bins: cfg.delay_tol_bins,
        angle_tol_deg: cfg.angle_tol_deg,
        sample_period_ns: x.sample_period_ns,
        bin_offset: first_traced.map_or(0, |b| k_los as i64 - b),
    };
    let solver = LsSolver::new(tables);
    let los = analyze_peak(x, k_los, &solver, traced, tables, cfg, p_noise, &opts)?;
    let rho_los = traced
        .iter()
        .find(|p| p.interactions.is_empty())
        .and_then(|p| predict_rssi(tables, p).ok())
        .and_then(|pred| correlation_rho(&los.estimate.rssi_vector, pred.values()).ok());
    let nlos = nlos_bins
        .iter()
        .map(|&b| analyze_peak(x, b, &solver, traced, tables, cfg, p_noise, &opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(CaseAnalysis {
        case_id,
        k_los,
        rho_los,
        los,
        nlos,
        power,
    })
}

pub fn run_case(
    scene: &Scene,
    case: &OrientationCase,
    cfg: &PipelineConfig,
    tables: &ArrayTables,
) -> Result<(Vec<RayPath>, CaseAnalysis)> {
    let (paths, x) = simulate_case(scene, case, cfg, tables, false)?;
    let analysis = analyze_tensor(&x, &paths, tables, cfg, Some(case.case_id))?;
    Ok((paths, analysis))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockageRun {
    pub case_id: u32,
    pub p_noise_dbm: f64,
    pub series: Vec<BlockageSeries>,
    /// First blocked scan per series, same order.
    pub onsets: Vec<Option<usize>>,
}

impl BlockageRun {
    /// Number of series above `P_N + margin` at scan `j`.
    pub fn paths_available(&self, j: usize, margin_db: f64) -> usize {
        self.series
            .iter()
            .filter(|s| s.rssi_dbm[j] > self.p_noise_dbm + margin_db)
            .count()
    }
}

/// Blockage time series of the paths identified in the static analysis of
/// the same case, read from a tensor simulated with the blocker walking.
pub fn run_blockage(blocked: &PdpTensor, static_analysis: &CaseAnalysis, cfg: &PipelineConfig) -> BlockageRun {
    let matches: Vec<TruePathMatch> = static_analysis
        .peaks()
        .filter_map(|p| p.true_match().cloned())
        .collect();
    let series = blockage_timeseries(blocked, &matches);
    let onsets = series
        .iter()
        .map(|s| onset_scan(&s.rssi_dbm, cfg.onset_baseline_scans, cfg.onset_drop_db))
        .collect();
    BlockageRun {
        case_id: static_analysis.case_id.unwrap_or(0),
        p_noise_dbm: static_analysis.power.p_noise_dbm,
        series,
        onsets,
    }
}
