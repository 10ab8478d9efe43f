//! Directional channel-sounder simulator.
//!
//! Produces the measurement tensor `X(τ, n, j)`: for every scan `j` and
//! every PAC `n`, a power delay profile of `N_dly` samples in dBm. Each
//! traced path lands in a single delay bin (optionally spread over three
//! taps), powers add in mW, a constant noise floor is added to every
//! sample, and each sample gets log-domain Gaussian jitter.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array::ArrayTables;
use crate::env::{blocker_position, BlockerTrajectory};
use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::raytrace::RayPath;
use crate::{db_to_mw, mw_to_db};

const TENSOR_MAGIC: &[u8; 4] = b"BSCN";
const TENSOR_VERSION: u32 = 1;
const TENSOR_UNITS: &[u8; 4] = b"dBm\0";
/// Bytes before the sample payload.
pub const TENSOR_HEADER_BYTES: usize = 48;

/// Raw sounding record in dBm, stored scan-major, then PAC, then delay.
#[derive(Debug, Clone, PartialEq)]
pub struct PdpTensor {
    n_dly: usize,
    n_dir: usize,
    n_scan: usize,
    pub sample_period_ns: f64,
    pub scan_period_s: f64,
    pub noise_floor_dbm: f64,
    data: Vec<f32>,
}

impl PdpTensor {
    pub fn new(
        n_dly: usize,
        n_dir: usize,
        n_scan: usize,
        sample_period_ns: f64,
        scan_period_s: f64,
        noise_floor_dbm: f64,
        data: Vec<f32>,
    ) -> Result<Self> {
        if n_dly == 0 || n_dir == 0 || n_scan == 0 {
            return Err(Error::InvalidTensor("empty dimension".into()));
        }
        if data.len() != n_dly * n_dir * n_scan {
            return Err(Error::InvalidTensor(format!(
                "{} samples for dims {n_dly} x {n_dir} x {n_scan}",
                data.len()
            )));
        }
        if !(sample_period_ns > 0.0 && scan_period_s > 0.0) {
            return Err(Error::InvalidTensor("periods must be positive".into()));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidTensor(format!("non-finite sample at {i}")));
        }
        Ok(Self {
            n_dly,
            n_dir,
            n_scan,
            sample_period_ns,
            scan_period_s,
            noise_floor_dbm,
            data,
        })
    }

    /// Build from a function of `(tau, n, j)`.
    pub fn from_fn(
        n_dly: usize,
        n_dir: usize,
        n_scan: usize,
        noise_floor_dbm: f64,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(n_dly * n_dir * n_scan);
        for j in 0..n_scan {
            for n in 0..n_dir {
                for tau in 0..n_dly {
                    data.push(f(tau, n, j) as f32);
                }
            }
        }
        Self::new(n_dly, n_dir, n_scan, 0.8, 3.2e-3, noise_floor_dbm, data)
    }

    pub fn n_dly(&self) -> usize {
        self.n_dly
    }

    pub fn n_dir(&self) -> usize {
        self.n_dir
    }

    pub fn n_scan(&self) -> usize {
        self.n_scan
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// `X(τ, n, j)` in dBm.
    pub fn get(&self, tau: usize, n: usize, j: usize) -> f64 {
        self.data[(j * self.n_dir + n) * self.n_dly + tau] as f64
    }

    /// All PDPs of scan `j`, PAC-major.
    pub fn scan(&self, j: usize) -> &[f32] {
        let len = self.n_dir * self.n_dly;
        &self.data[j * len..(j + 1) * len]
    }

    /// The PDP of PAC `n` in scan `j`.
    pub fn pdp(&self, n: usize, j: usize) -> &[f32] {
        let start = (j * self.n_dir + n) * self.n_dly;
        &self.data[start..start + self.n_dly]
    }

    pub fn file_len(&self) -> usize {
        TENSOR_HEADER_BYTES + 4 * self.data.len()
    }

    pub fn write_to<W: Write + ?Sized>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(TENSOR_MAGIC)?;
        for v in [TENSOR_VERSION, self.n_dly as u32, self.n_dir as u32, self.n_scan as u32] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in [self.sample_period_ns, self.scan_period_s, self.noise_floor_dbm] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(TENSOR_UNITS)?;
        let mut buf = Vec::with_capacity(4 * self.n_dly * self.n_dir);
        for chunk in self.data.chunks(self.n_dly * self.n_dir) {
            buf.clear();
            for v in chunk {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::InvalidTensor(m.to_string());
        if bytes.len() < TENSOR_HEADER_BYTES {
            return Err(bad("truncated header"));
        }
        if &bytes[..4] != TENSOR_MAGIC {
            return Err(bad("bad magic"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32_at(4);
        if version != TENSOR_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let (n_dly, n_dir, n_scan) = (u32_at(8) as usize, u32_at(12) as usize, u32_at(16) as usize);
        let (sample_period_ns, scan_period_s, noise_floor_dbm) = (f64_at(20), f64_at(28), f64_at(36));
        if &bytes[44..48] != TENSOR_UNITS {
            return Err(bad("units must be dBm"));
        }
        let payload = &bytes[TENSOR_HEADER_BYTES..];
        let expected = n_dly
            .checked_mul(n_dir)
            .and_then(|v| v.checked_mul(n_scan))
            .and_then(|v| v.checked_mul(4))
            .ok_or_else(|| bad("dimension overflow"))?;
        if payload.len() != expected {
            return Err(bad(&format!(
                "payload is {} bytes, header implies {expected}",
                payload.len()
            )));
        }
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Self::new(
            n_dly,
            n_dir,
            n_scan,
            sample_period_ns,
            scan_period_s,
            noise_floor_dbm,
            data,
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic_with(path, |w| self.write_to(w))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }
}

/// Simulation knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_dly: usize,
    pub n_scan: usize,
    pub sample_period_ns: f64,
    pub scan_period_s: f64,
    pub noise_floor_dbm: f64,
    /// Standard deviation of the per-sample log-domain jitter.
    pub noise_sigma_db: f64,
    pub rng_seed: u64,
    /// The earliest path is shifted to at least this bin so that a
    /// noise-only region precedes it.
    pub min_first_bin: usize,
    /// Spread each path over three taps (¼, ½, ¼ of its power).
    pub pulse_spread: bool,
    /// Overrides the trajectory's own attenuation when set.
    pub blocker_attenuation_db: Option<f64>,
    pub case_id: Option<u32>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_dly: 192,
            n_scan: 1750,
            sample_period_ns: 0.8,
            scan_period_s: 3.2e-3,
            noise_floor_dbm: -85.0,
            noise_sigma_db: 0.15,
            rng_seed: 1,
            min_first_bin: 20,
            pulse_spread: false,
            blocker_attenuation_db: None,
            case_id: None,
        }
    }
}

impl SimConfig {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n_dly == 0 || self.n_scan == 0 {
            return bad("tensor dimensions must be positive");
        }
        if !(self.sample_period_ns > 0.0 && self.scan_period_s > 0.0) {
            return bad("periods must be positive");
        }
        if !self.noise_floor_dbm.is_finite() {
            return bad("noise floor must be finite");
        }
        if !(self.noise_sigma_db.is_finite() && self.noise_sigma_db >= 0.0) {
            return bad("noise sigma must be >= 0");
        }
        Ok(())
    }

    /// Whole-bin shift that moves the earliest path to `min_first_bin`.
    pub fn delay_offset_bins(&self, paths: &[RayPath]) -> i64 {
        paths
            .iter()
            .map(|p| p.delay_bin(self.sample_period_ns))
            .min()
            .map(|first| (self.min_first_bin as i64 - first).max(0))
            .unwrap_or(0)
    }
}

/// Paths whose AoD and AoA both fall inside the pattern grids. Paths
/// outside either array's field of view contribute nothing.
pub fn visible_paths<'a>(paths: &'a [RayPath], tables: &ArrayTables) -> Vec<&'a RayPath> {
    paths.iter().filter(|p| tables.contains(&p.omega)).collect()
}

/// Smallest horizontal distance between the blocker axis and the part of
/// segment `a`-`b` lying within the cylinder's height band.
fn axis_distance(a: Point3, b: Point3, base: Point3, height: f64) -> Option<f64> {
    let (z0, z1) = (base.z, base.z + height);
    let dz = b.z - a.z;
    let (mut s0, mut s1) = (0.0f64, 1.0f64);
    if dz.abs() < 1e-15 {
        if a.z < z0 || a.z > z1 {
            return None;
        }
    } else {
        let (ta, tb) = ((z0 - a.z) / dz, (z1 - a.z) / dz);
        s0 = s0.max(ta.min(tb));
        s1 = s1.min(ta.max(tb));
        if s0 > s1 {
            return None;
        }
    }
    let (px, py) = (a.x + s0 * (b.x - a.x), a.y + s0 * (b.y - a.y));
    let (qx, qy) = (a.x + s1 * (b.x - a.x), a.y + s1 * (b.y - a.y));
    let (ex, ey) = (qx - px, qy - py);
    let len2 = ex * ex + ey * ey;
    let u = if len2 < 1e-24 {
        0.0
    } else {
        (((base.x - px) * ex + (base.y - py) * ey) / len2).clamp(0.0, 1.0)
    };
    Some((px + u * ex - base.x).hypot(py + u * ey - base.y))
}

/// Loss (dB) the blocker imposes on `path` at `t_s`; zero outside the
/// trajectory's time span. The full attenuation applies once the path is
/// inside the cylinder, with a raised-cosine ramp across the edge.
pub fn blockage_attenuation(path: &RayPath, t_s: f64, traj: &BlockerTrajectory) -> f64 {
    let Ok(base) = blocker_position(traj, t_s) else {
        return 0.0;
    };
    let Some(d) = path
        .vertices
        .windows(2)
        .filter_map(|w| axis_distance(w[0], w[1], base, traj.height_m))
        .reduce(f64::min)
    else {
        return 0.0;
    };
    let (r, e) = (traj.radius_m, traj.edge_width_m);
    let weight = if e <= 0.0 {
        if d < r {
            1.0
        } else {
            0.0
        }
    } else {
        let u = ((d - (r - e / 2.0)) / e).clamp(0.0, 1.0);
        0.5 * (1.0 + (std::f64::consts::PI * u).cos())
    };
    traj.attenuation_db * weight
}

struct Injected {
    bin: usize,
    /// Linear received power per PAC (mW).
    power_mw: Vec<f64>,
    path: usize,
}

/// Generate the sounding tensor for one case.
pub fn synthesize_tensor(
    paths: &[RayPath],
    tables: &ArrayTables,
    cfg: &SimConfig,
    traj: Option<&BlockerTrajectory>,
) -> Result<PdpTensor> {
    cfg.validate()?;
    let n_dir = tables.n_dir();
    let n_dly = cfg.n_dly;
    let offset = cfg.delay_offset_bins(paths);
    let taps: &[(i64, f64)] = if cfg.pulse_spread {
        &[(-1, 0.25), (0, 0.5), (1, 0.25)]
    } else {
        &[(0, 1.0)]
    };

    let mut injected = Vec::new();
    for (idx, p) in paths.iter().enumerate() {
        if !tables.contains(&p.omega) {
            continue;
        }
        let center = p.delay_bin(cfg.sample_period_ns) + offset;
        let gains = tables.gain_vector(&p.omega)?;
        for &(dt, w) in taps {
            let bin = center + dt;
            if bin < 0 || bin >= n_dly as i64 {
                return Err(Error::DelayBeyondWindow {
                    delay_ns: p.delay_ns,
                    bin,
                    n_dly,
                });
            }
            injected.push(Injected {
                bin: bin as usize,
                power_mw: gains.iter().map(|g| w * db_to_mw(p.path_gain_db + g)).collect(),
                path: idx,
            });
        }
    }

    let mut bins: Vec<usize> = injected.iter().map(|i| i.bin).collect();
    bins.sort_unstable();
    bins.dedup();

    let traj_att = traj.map(|t| {
        let mut t = t.clone();
        if let Some(a) = cfg.blocker_attenuation_db {
            t.attenuation_db = a;
        }
        t
    });
    let noise_mw = db_to_mw(cfg.noise_floor_dbm);
    let noise_db = mw_to_db(noise_mw) as f32;
    let sigma = cfg.noise_sigma_db;
    // Shift so the jitter leaves the mean linear power unchanged.
    let jitter_bias = sigma * sigma * std::f64::consts::LN_10 / 20.0;

    let scan_len = n_dir * n_dly;
    let mut data = vec![0f32; scan_len * cfg.n_scan];
    data.par_chunks_mut(scan_len).enumerate().for_each(|(j, scan)| {
        let t = j as f64 * cfg.scan_period_s;
        let factors: Vec<f64> = paths
            .iter()
            .map(|p| match &traj_att {
                Some(tr) => db_to_mw(-blockage_attenuation(p, t, tr)),
                None => 1.0,
            })
            .collect();
        scan.fill(noise_db);
        let mut acc = vec![0f64; n_dir];
        for &bin in &bins {
            acc.fill(noise_mw);
            for inj in injected.iter().filter(|i| i.bin == bin) {
                let f = factors[inj.path];
                for (a, p) in acc.iter_mut().zip(&inj.power_mw) {
                    *a += p * f;
                }
            }
            for (n, a) in acc.iter().enumerate() {
                scan[n * n_dly + bin] = mw_to_db(*a) as f32;
            }
        }
        if sigma > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
            rng.set_stream(j as u64);
            for v in scan.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = (*v as f64 + sigma * z - jitter_bias) as f32;
            }
        }
    });

    PdpTensor::new(
        n_dly,
        n_dir,
        cfg.n_scan,
        cfg.sample_period_ns,
        cfg.scan_period_s,
        cfg.noise_floor_dbm,
        data,
    )
}
