use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use beamscan_core::array::{case_by_id, ArrayTables};
use beamscan_core::env::Scene;
use beamscan_core::io::write_atomic_with;
use beamscan_core::pipeline::{analyze_tensor, run_blockage, simulate_case, trace_case, BlockageRun, CaseAnalysis};
use beamscan_core::raytrace::{write_path_dump, RayPath};
use beamscan_core::reference::BLOCKAGE_CASE;
use beamscan_core::report::{
    table2_cells, write_fig5_csv, write_fig9_csv, write_table2_csv, CaseSummary, Fig5Row, RunSummary, Table2Cell,
};
use beamscan_core::sounder::PdpTensor;
use beamscan_core::Error;

use crate::config::RunConfig;

/// One or more cases produced no usable analysis.
#[derive(Debug)]
pub struct AnalysisFailure(pub String);

impl fmt::Display for AnalysisFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for AnalysisFailure {}

/// Output directory guarded against silent overwrites.
pub struct OutDir {
    root: PathBuf,
    force: bool,
}

impl OutDir {
    pub fn new(root: &Path, force: bool) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("cannot create {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            force,
        })
    }

    /// Checks every target up front so a refused run writes nothing.
    pub fn claim(&self, names: &[String]) -> Result<Vec<PathBuf>> {
        let paths: Vec<PathBuf> = names.iter().map(|n| self.root.join(n)).collect();
        if !self.force {
            if let Some(p) = paths.iter().find(|p| p.exists()) {
                bail!("{} exists (use --force to overwrite)", p.display());
            }
        }
        Ok(paths)
    }

    pub fn join(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    Ok(write_atomic_with(path, |w| w.write_all(text.as_bytes()))?)
}

fn echo_config(path: &Path, cfg: &RunConfig) -> Result<()> {
    write_text(path, &cfg.to_toml()?)
}

fn tensor_name(id: u32, blocked: bool) -> String {
    if blocked {
        format!("case{id:02}_blocked.bscn")
    } else {
        format!("case{id:02}.bscn")
    }
}

pub fn trace(cfg: &RunConfig, out: &OutDir, all_paths: bool) -> Result<()> {
    let scene = cfg.scene()?;
    let tables = cfg.pipeline.tables()?;
    let mut names: Vec<String> = cfg.cases.iter().map(|id| format!("trace_case{id:02}.csv")).collect();
    names.push("trace.config.toml".into());
    let targets = out.claim(&names)?;
    for (id, path) in cfg.cases.iter().zip(&targets) {
        let case = case_by_id(*id)?;
        let mut paths = trace_case(&scene, &case, &cfg.pipeline)?;
        let total = paths.len();
        if !all_paths {
            paths.retain(|p| tables.contains(&p.omega));
        }
        eprintln!("case {id}: {} of {total} paths", paths.len());
        write_atomic_with(path, |w| write_path_dump(w, &paths).map_err(std::io::Error::other))?;
    }
    echo_config(&targets[targets.len() - 1], cfg)
}

pub fn simulate(cfg: &RunConfig, out: &OutDir, with_blocker: bool) -> Result<()> {
    let scene = cfg.scene()?;
    if with_blocker && scene.blocker.is_none() {
        bail!("scene has no blocker trajectory");
    }
    let tables = cfg.pipeline.tables()?;
    let mut names = Vec::new();
    for &id in &cfg.cases {
        names.push(tensor_name(id, false));
        if with_blocker {
            names.push(tensor_name(id, true));
        }
    }
    names.push("simulate.config.toml".into());
    out.claim(&names)?;
    for &id in &cfg.cases {
        let case = case_by_id(id)?;
        let (_, x) = simulate_case(&scene, &case, &cfg.pipeline, &tables, false)?;
        x.save(&out.join(&tensor_name(id, false)))?;
        if with_blocker {
            let (_, xb) = simulate_case(&scene, &case, &cfg.pipeline, &tables, true)?;
            xb.save(&out.join(&tensor_name(id, true)))?;
        }
        eprintln!("case {id}: simulated");
    }
    echo_config(&out.join("simulate.config.toml"), cfg)
}

/// Per-case outcome shared by `analyze` and `run`.
struct CaseResult {
    id: u32,
    traced: Vec<RayPath>,
    analysis: std::result::Result<CaseAnalysis, Error>,
    blockage: Option<BlockageRun>,
}

/// Errors that mean "the data holds no analysable signal" rather than a
/// malformed input.
fn is_analysis_error(e: &Error) -> bool {
    matches!(
        e,
        Error::NoSignal | Error::InsufficientNoiseRegion { .. } | Error::ZeroVariance
    )
}

fn analyze_case(
    id: u32,
    scene: &Scene,
    cfg: &RunConfig,
    tables: &ArrayTables,
    x: &PdpTensor,
    blocked: Option<&PdpTensor>,
) -> Result<CaseResult> {
    let case = case_by_id(id)?;
    let traced = trace_case(scene, &case, &cfg.pipeline)?;
    let analysis = match analyze_tensor(x, &traced, tables, &cfg.pipeline, Some(id)) {
        Err(e) if !is_analysis_error(&e) => return Err(e).with_context(|| format!("case {id}")),
        r => r,
    };
    let blockage = match (&analysis, blocked) {
        (Ok(a), Some(xb)) => Some(run_blockage(xb, a, &cfg.pipeline)),
        _ => None,
    };
    match &analysis {
        Ok(a) => eprintln!("case {id}: LOS at bin {}, {} NLOS peaks", a.k_los, a.nlos.len()),
        Err(e) => eprintln!("case {id}: {e}"),
    }
    Ok(CaseResult {
        id,
        traced,
        analysis,
        blockage,
    })
}

fn report_names(results: &[CaseResult], config_name: &str) -> Vec<String> {
    let mut names = vec!["fig5.csv".to_string(), "table2.csv".into(), "summary.json".into()];
    for r in results {
        if r.blockage.is_some() {
            names.push(format!("fig9_case{:02}.csv", r.id));
        }
    }
    names.push(config_name.into());
    names
}

fn write_reports(results: &[CaseResult], cfg: &RunConfig, out: &OutDir, config_name: &str) -> Result<()> {
    out.claim(&report_names(results, config_name))?;
    let mut fig5 = Vec::new();
    let mut cells: Vec<Table2Cell> = Vec::new();
    let mut summary = RunSummary { cases: Vec::new() };
    let mut failed = Vec::new();
    for r in results {
        match &r.analysis {
            Ok(a) => {
                fig5.push(Fig5Row::from_analysis(a));
                cells.extend(table2_cells(&r.traced, a));
                summary.cases.push(CaseSummary::from_analysis(&r.traced, a));
            }
            Err(e) => {
                summary.cases.push(CaseSummary::failed(r.id, e));
                failed.push(r.id);
            }
        }
        if let Some(b) = &r.blockage {
            write_atomic_with(&out.join(&format!("fig9_case{:02}.csv", r.id)), |w| {
                write_fig9_csv(w, b).map_err(std::io::Error::other)
            })?;
        }
    }
    write_atomic_with(&out.join("fig5.csv"), |w| {
        write_fig5_csv(w, &fig5).map_err(std::io::Error::other)
    })?;
    write_atomic_with(&out.join("table2.csv"), |w| {
        write_table2_csv(w, &cells).map_err(std::io::Error::other)
    })?;
    write_text(&out.join("summary.json"), &summary.to_json()?)?;
    echo_config(&out.join(config_name), cfg)?;
    if !failed.is_empty() {
        let ids: Vec<String> = failed.iter().map(u32::to_string).collect();
        return Err(AnalysisFailure(format!("no usable LOS in case(s) {}", ids.join(", "))).into());
    }
    Ok(())
}

pub fn analyze(cfg: &RunConfig, out: &OutDir, tensors: &Path) -> Result<()> {
    let scene = cfg.scene()?;
    let tables = cfg.pipeline.tables()?;
    let mut results = Vec::new();
    for &id in &cfg.cases {
        let path = tensors.join(tensor_name(id, false));
        if !path.exists() {
            bail!("tensor not found: {}", path.display());
        }
        let x = PdpTensor::load(&path)?;
        let blocked_path = tensors.join(tensor_name(id, true));
        let blocked = if blocked_path.exists() {
            Some(PdpTensor::load(&blocked_path)?)
        } else {
            None
        };
        results.push(analyze_case(id, &scene, cfg, &tables, &x, blocked.as_ref())?);
    }
    write_reports(&results, cfg, out, "analyze.config.toml")
}

pub fn run(cfg: &RunConfig, out: &OutDir, with_blocker: bool) -> Result<()> {
    let scene = cfg.scene()?;
    let tables = cfg.pipeline.tables()?;
    // Fail on an existing output before spending time on simulation.
    let mut names = vec!["fig5.csv".to_string(), "table2.csv".into(), "summary.json".into()];
    names.push("run.config.toml".into());
    out.claim(&names)?;
    let mut results = Vec::new();
    for &id in &cfg.cases {
        let case = case_by_id(id)?;
        let (_, x) = simulate_case(&scene, &case, &cfg.pipeline, &tables, false)?;
        let blocked = if with_blocker && id == BLOCKAGE_CASE && scene.blocker.is_some() {
            Some(simulate_case(&scene, &case, &cfg.pipeline, &tables, true)?.1)
        } else {
            None
        };
        results.push(analyze_case(id, &scene, cfg, &tables, &x, blocked.as_ref())?);
    }
    write_reports(&results, cfg, out, "run.config.toml")
}
