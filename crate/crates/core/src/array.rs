//! Phased-array codebooks and the coordinate frames of the two arrays.
//!
//! A [`PatternTable`] stores the gain of every codebook beam on a regular
//! (azimuth, elevation) grid in the array's local frame. A pointing angle
//! combination ([`Pac`]) selects one TX and one RX beam; its combined gain
//! toward an AoD/AoA pair is the sum of the two table lookups in dB.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::NodePose;
use crate::error::{Error, Result};
use crate::geometry::Point3;

const PATTERN_MAGIC: &[u8; 4] = b"BSPT";
const PATTERN_VERSION: u32 = 1;

/// Gains of every beam of one array on an (azimuth, elevation) grid, dBi.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternTable {
    az_grid: Vec<f64>,
    el_grid: Vec<f64>,
    beams: usize,
    /// Row-major `[beam][az][el]`.
    gain_db: Vec<f64>,
}

fn check_grid(name: &str, grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::InvalidPattern(format!("{name} grid needs >= 2 nodes")));
    }
    if grid.iter().any(|v| !v.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidPattern(format!(
            "{name} grid must be finite and strictly increasing"
        )));
    }
    Ok(())
}

impl PatternTable {
    pub fn new(az_grid: Vec<f64>, el_grid: Vec<f64>, beams: usize, gain_db: Vec<f64>) -> Result<Self> {
        check_grid("azimuth", &az_grid)?;
        check_grid("elevation", &el_grid)?;
        if beams == 0 {
            return Err(Error::InvalidPattern("no beams".into()));
        }
        let per_beam = az_grid.len() * el_grid.len();
        if gain_db.len() != beams * per_beam {
            return Err(Error::InvalidPattern(format!(
                "expected {} gains, got {}",
                beams * per_beam,
                gain_db.len()
            )));
        }
        if gain_db.iter().any(|g| !g.is_finite()) {
            return Err(Error::InvalidPattern("non-finite gain".into()));
        }
        for (c, beam) in gain_db.chunks(per_beam).enumerate() {
            let peak = beam.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !(0.0..=40.0).contains(&peak) {
                return Err(Error::InvalidPattern(format!(
                    "beam {c} peak gain {peak:.2} dBi outside [0, 40]"
                )));
            }
        }
        Ok(Self {
            az_grid,
            el_grid,
            beams,
            gain_db,
        })
    }

    /// A table with the same gain everywhere, for every beam.
    pub fn constant(az_grid: Vec<f64>, el_grid: Vec<f64>, beams: usize, gain_dbi: f64) -> Result<Self> {
        let n = beams * az_grid.len() * el_grid.len();
        Self::new(az_grid, el_grid, beams, vec![gain_dbi; n])
    }

    pub fn beams(&self) -> usize {
        self.beams
    }

    pub fn az_grid(&self) -> &[f64] {
        &self.az_grid
    }

    pub fn el_grid(&self) -> &[f64] {
        &self.el_grid
    }

    /// Number of (azimuth, elevation) grid nodes.
    pub fn nodes(&self) -> usize {
        self.az_grid.len() * self.el_grid.len()
    }

    /// Angles of a flat node index (azimuth-major).
    pub fn node_angles(&self, node: usize) -> (f64, f64) {
        let ne = self.el_grid.len();
        (self.az_grid[node / ne], self.el_grid[node % ne])
    }

    /// Gain of beam `c` at a grid node.
    pub fn node_gain(&self, c: usize, node: usize) -> f64 {
        self.gain_db[c * self.nodes() + node]
    }

    pub fn gains(&self) -> &[f64] {
        &self.gain_db
    }

    pub fn contains(&self, phi_deg: f64, theta_deg: f64) -> bool {
        let (a0, a1) = (self.az_grid[0], self.az_grid[self.az_grid.len() - 1]);
        let (e0, e1) = (self.el_grid[0], self.el_grid[self.el_grid.len() - 1]);
        (a0..=a1).contains(&phi_deg) && (e0..=e1).contains(&theta_deg)
    }

    /// Bilinear interpolation of beam `c` at `(phi, theta)` degrees.
    pub fn gain(&self, c: usize, phi_deg: f64, theta_deg: f64) -> Result<f64> {
        if c >= self.beams {
            return Err(Error::InvalidPattern(format!("beam {c} out of range")));
        }
        if !self.contains(phi_deg, theta_deg) {
            return Err(Error::OutsideGrid { phi_deg, theta_deg });
        }
        let (ia, fa) = locate(&self.az_grid, phi_deg);
        let (ie, fe) = locate(&self.el_grid, theta_deg);
        let ne = self.el_grid.len();
        let base = c * self.nodes();
        let g = |a: usize, e: usize| self.gain_db[base + a * ne + e];
        // Exact node hits skip the blend so on-grid lookups are bit-exact.
        let along_el = |a: usize| {
            if fe == 0.0 {
                g(a, ie)
            } else {
                g(a, ie) * (1.0 - fe) + g(a, ie + 1) * fe
            }
        };
        Ok(if fa == 0.0 {
            along_el(ia)
        } else {
            along_el(ia) * (1.0 - fa) + along_el(ia + 1) * fa
        })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(PATTERN_MAGIC)?;
        for v in [
            PATTERN_VERSION,
            self.beams as u32,
            self.az_grid.len() as u32,
            self.el_grid.len() as u32,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in self.az_grid.iter().chain(&self.el_grid).chain(&self.gain_db) {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let bad = |reason: &str| Error::InvalidPattern(reason.to_string());
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != PATTERN_MAGIC {
            return Err(bad("bad magic"));
        }
        let mut word = [0u8; 4];
        let mut next_u32 = |r: &mut R| -> Result<u32> {
            r.read_exact(&mut word).map_err(|_| bad("truncated header"))?;
            Ok(u32::from_le_bytes(word))
        };
        let version = next_u32(&mut r)?;
        if version != PATTERN_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let beams = next_u32(&mut r)? as usize;
        let n_az = next_u32(&mut r)? as usize;
        let n_el = next_u32(&mut r)? as usize;
        let total = n_az + n_el + beams * n_az * n_el;
        let mut bytes = vec![0u8; total * 4];
        r.read_exact(&mut bytes).map_err(|_| bad("truncated body"))?;
        let vals: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        let (az, rest) = vals.split_at(n_az);
        let (el, gains) = rest.split_at(n_el);
        Self::new(az.to_vec(), el.to_vec(), beams, gains.to_vec())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).map_err(|e| Error::io(path, e))?;
        crate::io::write_atomic(path, &buf)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

/// Cell index and fractional offset of `x` in a strictly increasing grid.
fn locate(grid: &[f64], x: f64) -> (usize, f64) {
    let hi = grid.partition_point(|g| *g <= x);
    if hi == 0 {
        return (0, 0.0);
    }
    let lo = hi - 1;
    if grid[lo] == x || lo + 1 == grid.len() {
        return (lo, 0.0);
    }
    (lo, (x - grid[lo]) / (grid[lo + 1] - grid[lo]))
}

/// TX and RX pattern tables used together.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayTables {
    pub tx: PatternTable,
    pub rx: PatternTable,
}

impl ArrayTables {
    pub fn new(tx: PatternTable, rx: PatternTable) -> Self {
        Self { tx, rx }
    }

    /// Number of pointing angle combinations.
    pub fn n_dir(&self) -> usize {
        self.tx.beams() * self.rx.beams()
    }

    pub fn pac(&self, n: usize) -> Result<Pac> {
        Pac::from_index(n, self.tx.beams(), self.rx.beams())
    }

    pub fn pacs(&self) -> impl Iterator<Item = Pac> + '_ {
        let nr = self.rx.beams();
        (0..self.n_dir()).map(move |n| Pac {
            n,
            tx_beam: n / nr,
            rx_beam: n % nr,
        })
    }

    pub fn contains(&self, omega: &AoaAodPair) -> bool {
        self.tx.contains(omega.phi_tx, omega.theta_tx) && self.rx.contains(omega.phi_rx, omega.theta_rx)
    }

    /// `G(n, ω)` for every PAC, in PAC order.
    pub fn gain_vector(&self, omega: &AoaAodPair) -> Result<Vec<f64>> {
        let tx: Vec<f64> = (0..self.tx.beams())
            .map(|c| self.tx.gain(c, omega.phi_tx, omega.theta_tx))
            .collect::<Result<_>>()?;
        let rx: Vec<f64> = (0..self.rx.beams())
            .map(|c| self.rx.gain(c, omega.phi_rx, omega.theta_rx))
            .collect::<Result<_>>()?;
        Ok(tx.iter().flat_map(|gt| rx.iter().map(move |gr| gt + gr)).collect())
    }
}

/// One pointing angle combination: TX beam × RX beam, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pac {
    pub n: usize,
    pub tx_beam: usize,
    pub rx_beam: usize,
}

impl Pac {
    pub fn from_index(n: usize, tx_beams: usize, rx_beams: usize) -> Result<Self> {
        if n >= tx_beams * rx_beams {
            return Err(Error::PacOutOfRange(n));
        }
        Ok(Pac {
            n,
            tx_beam: n / rx_beams,
            rx_beam: n % rx_beams,
        })
    }

    pub fn from_beams(tx_beam: usize, rx_beam: usize, tx_beams: usize, rx_beams: usize) -> Result<Self> {
        if tx_beam >= tx_beams || rx_beam >= rx_beams {
            return Err(Error::PacOutOfRange(tx_beam * rx_beams + rx_beam));
        }
        Ok(Pac {
            n: tx_beam * rx_beams + rx_beam,
            tx_beam,
            rx_beam,
        })
    }
}

/// AoD at the TX and AoA at the RX, each in its array's local frame (deg).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AoaAodPair {
    pub phi_tx: f64,
    pub phi_rx: f64,
    pub theta_tx: f64,
    pub theta_rx: f64,
}

impl AoaAodPair {
    pub fn new(phi_tx: f64, phi_rx: f64, theta_tx: f64, theta_rx: f64) -> Self {
        Self {
            phi_tx,
            phi_rx,
            theta_tx,
            theta_rx,
        }
    }

    /// Absolute per-component differences, azimuths wrapped to [0, 180].
    pub fn gaps(&self, other: &AoaAodPair) -> [f64; 4] {
        [
            wrap_deg(self.phi_tx - other.phi_tx).abs(),
            wrap_deg(self.phi_rx - other.phi_rx).abs(),
            (self.theta_tx - other.theta_tx).abs(),
            (self.theta_rx - other.theta_rx).abs(),
        ]
    }
}

/// `G(n, ω)`: TX gain of the PAC's TX beam plus RX gain of its RX beam.
pub fn combined_gain(tables: &ArrayTables, pac: Pac, omega: &AoaAodPair) -> Result<f64> {
    Ok(tables.tx.gain(pac.tx_beam, omega.phi_tx, omega.theta_tx)?
        + tables.rx.gain(pac.rx_beam, omega.phi_rx, omega.theta_rx)?)
}

/// Parameters of the synthetic Gaussian-lobe codebook.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CodebookParams {
    pub beams: usize,
    /// Azimuth half-power beamwidth.
    pub hpbw_deg: f64,
    pub peak_gain_dbi: f64,
    /// Azimuth spread of the beam centers; beams are placed uniformly.
    pub steering_span_deg: f64,
    /// Elevation half-power beamwidth; `None` reuses `hpbw_deg`.
    pub elevation_hpbw_deg: Option<f64>,
    /// Beams alternate between ±half of this elevation offset.
    pub elevation_stagger_deg: f64,
    /// Depth of the sidelobe floor below the peak.
    pub sidelobe_floor_db: f64,
    pub az_limit_deg: f64,
    pub el_limit_deg: f64,
    pub grid_step_deg: f64,
}

impl Default for CodebookParams {
    fn default() -> Self {
        Self {
            beams: 12,
            hpbw_deg: 36.0,
            peak_gain_dbi: 15.0,
            steering_span_deg: 160.0,
            elevation_hpbw_deg: Some(50.0),
            elevation_stagger_deg: 40.0,
            sidelobe_floor_db: 20.0,
            az_limit_deg: 90.0,
            el_limit_deg: 60.0,
            grid_step_deg: 2.0,
        }
    }
}

impl CodebookParams {
    pub fn new(beams: usize, hpbw_deg: f64, peak_gain_dbi: f64, steering_span_deg: f64) -> Self {
        Self {
            beams,
            hpbw_deg,
            peak_gain_dbi,
            steering_span_deg,
            ..Self::default()
        }
    }

    fn elevation_hpbw(&self) -> f64 {
        self.elevation_hpbw_deg.unwrap_or(self.hpbw_deg)
    }

    /// `(azimuth, elevation)` center of every beam.
    pub fn beam_centers(&self) -> Vec<(f64, f64)> {
        if self.beams == 1 {
            return vec![(0.0, 0.0)];
        }
        let step = self.steering_span_deg / (self.beams - 1) as f64;
        let half_stagger = self.elevation_stagger_deg / 2.0;
        (0..self.beams)
            .map(|c| {
                let az = -self.steering_span_deg / 2.0 + c as f64 * step;
                let el = if c % 2 == 0 { -half_stagger } else { half_stagger };
                (az, el)
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidCodebook(m.to_string()));
        if self.beams == 0 {
            return bad("need at least one beam");
        }
        if !(self.hpbw_deg.is_finite() && self.hpbw_deg > 0.0) {
            return bad("hpbw must be positive");
        }
        if !(self.elevation_hpbw().is_finite() && self.elevation_hpbw() > 0.0) {
            return bad("elevation hpbw must be positive");
        }
        let span_ok = self.steering_span_deg.is_finite()
            && (self.steering_span_deg > 0.0 || (self.beams == 1 && self.steering_span_deg == 0.0));
        if !span_ok {
            return bad("steering span must be positive");
        }
        if !(0.0..=40.0).contains(&self.peak_gain_dbi) {
            return bad("peak gain must lie in [0, 40] dBi");
        }
        if !(self.sidelobe_floor_db.is_finite() && self.sidelobe_floor_db > 0.0) {
            return bad("sidelobe floor depth must be positive");
        }
        if !(self.grid_step_deg > 0.0 && self.az_limit_deg > 0.0 && self.el_limit_deg > 0.0) {
            return bad("grid limits and step must be positive");
        }
        Ok(())
    }

    /// Gain of beam `c` evaluated analytically (before f32 quantization).
    pub fn lobe_gain(&self, center: (f64, f64), phi_deg: f64, theta_deg: f64) -> f64 {
        let da = (phi_deg - center.0) / self.hpbw_deg;
        let de = (theta_deg - center.1) / self.elevation_hpbw();
        // 12 (d / hpbw)^2 dB puts the -3 dB point at d = hpbw / 2.
        let lobe_db = -12.0 * (da * da + de * de);
        let floor = 10f64.powf(-self.sidelobe_floor_db / 10.0);
        let rel = (10f64.powf(lobe_db / 10.0) + floor) / (1.0 + floor);
        self.peak_gain_dbi + 10.0 * rel.log10()
    }
}

fn symmetric_grid(limit: f64, step: f64) -> Vec<f64> {
    let k = (limit / step).floor() as i64;
    (-k..=k).map(|i| i as f64 * step).collect()
}

/// Build a synthetic codebook: Gaussian main lobes over a smooth sidelobe
/// floor, beams steered uniformly across the azimuth span.
pub fn synth_codebook(params: &CodebookParams) -> Result<PatternTable> {
    params.validate()?;
    let az = symmetric_grid(params.az_limit_deg, params.grid_step_deg);
    let el = symmetric_grid(params.el_limit_deg, params.grid_step_deg);
    let mut gains = Vec::with_capacity(params.beams * az.len() * el.len());
    for center in params.beam_centers() {
        for &a in &az {
            for &e in &el {
                // Quantize through f32 so the table survives a file round trip.
                gains.push(params.lobe_gain(center, a, e) as f32 as f64);
            }
        }
    }
    PatternTable::new(az, el, params.beams, gains)
}

/// Wrap an angle to (-180, 180].
pub fn wrap_deg(a: f64) -> f64 {
    let w = a.rem_euclid(360.0);
    if w > 180.0 {
        w - 360.0
    } else {
        w
    }
}

fn yaw_tilt(pose: &NodePose) -> (f64, f64) {
    (
        (pose.heading_deg + pose.mount_azimuth_deg).to_radians(),
        pose.mount_elevation_deg.to_radians(),
    )
}

/// Unit room-frame vector for local angles `(phi, theta)` of an array.
pub fn local_to_global(pose: &NodePose, phi_deg: f64, theta_deg: f64) -> Point3 {
    let (phi, theta) = (phi_deg.to_radians(), theta_deg.to_radians());
    // Local frame: x boresight, azimuth clockwise from above (toward -y).
    let v = Point3::new(theta.cos() * phi.cos(), -theta.cos() * phi.sin(), theta.sin());
    let (yaw, tilt) = yaw_tilt(pose);
    let (st, ct) = tilt.sin_cos();
    let v = Point3::new(v.x * ct - v.z * st, v.y, v.x * st + v.z * ct);
    let (sy, cy) = yaw.sin_cos();
    Point3::new(v.x * cy + v.y * sy, -v.x * sy + v.y * cy, v.z)
}

/// Local `(phi, theta)` degrees of a room-frame direction as seen by an array.
pub fn global_to_local(pose: &NodePose, direction: Point3) -> Result<(f64, f64)> {
    let v = direction.normalized().ok_or(Error::ZeroDirection)?;
    let (yaw, tilt) = yaw_tilt(pose);
    let (sy, cy) = yaw.sin_cos();
    let v = Point3::new(v.x * cy - v.y * sy, v.x * sy + v.y * cy, v.z);
    let (st, ct) = tilt.sin_cos();
    let v = Point3::new(v.x * ct + v.z * st, v.y, -v.x * st + v.z * ct);
    let theta = v.z.clamp(-1.0, 1.0).asin().to_degrees();
    let phi = if v.x.abs() < 1e-15 && v.y.abs() < 1e-15 {
        0.0
    } else {
        wrap_deg((-v.y).atan2(v.x).to_degrees())
    };
    Ok((phi, theta))
}

/// Gimbal settings of one measurement case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientationCase {
    pub case_id: u32,
    pub theta_tx0: f64,
    pub theta_rx0: f64,
    pub phi_tx0: f64,
    pub phi_rx0: f64,
}

impl OrientationCase {
    /// Poses for this case given the scene's reference poses.
    pub fn apply(&self, tx: &NodePose, rx: &NodePose) -> (NodePose, NodePose) {
        (
            tx.with_mount(self.phi_tx0, self.theta_tx0),
            rx.with_mount(self.phi_rx0, self.theta_rx0),
        )
    }
}

/// The shipped case table.
pub const CASE_TABLE: &str = include_str!("../data/cases.txt");

/// Parse a whitespace-separated case table (`#` starts a comment).
pub fn parse_case_table(text: &str) -> Result<Vec<OrientationCase>> {
    let mut cases = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = || Error::MalformedScene(format!("case table line {}: `{line}`", lineno + 1));
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 5 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        cases.push(OrientationCase {
            case_id: f[0].parse().map_err(|_| bad())?,
            theta_tx0: num(f[1])?,
            theta_rx0: num(f[2])?,
            phi_tx0: num(f[3])?,
            phi_rx0: num(f[4])?,
        });
    }
    Ok(cases)
}

/// The twelve measurement cases.
pub fn standard_cases() -> Vec<OrientationCase> {
    parse_case_table(CASE_TABLE).expect("shipped case table parses")
}

pub fn case_by_id(id: u32) -> Result<OrientationCase> {
    standard_cases()
        .into_iter()
        .find(|c| c.case_id == id)
        .ok_or(Error::UnknownCase(id))
}
