//! Image-method ray tracer.
//!
//! Enumerates the direct path and every specular path with up to two
//! reflections, builds each one from mirrored source images, and validates
//! it segment by segment against the venue polygons. A path may pass
//! straight through at most one non-opaque surface. Diffraction and diffuse
//! scattering are not modeled.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::array::{global_to_local, AoaAodPair, ArrayTables};
use crate::env::{Environment, NodePose, Surface, TransmissionLoss};
use crate::error::{Error, Result};
use crate::geometry::Point3;

/// Speed of light in m/ns.
pub const C_M_PER_NS: f64 = 0.299_792_458;
const C_M_PER_S: f64 = 299_792_458.0;

/// Segment parameters closer than this to an endpoint are not intersections.
const SEGMENT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum InteractionKind {
    Reflection,
    Transmission,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Interaction {
    pub surface_id: String,
    pub kind: InteractionKind,
}

impl fmt::Display for Interaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let k = match self.kind {
            InteractionKind::Reflection => 'R',
            InteractionKind::Transmission => 'T',
        };
        write!(f, "{}:{k}", self.surface_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PathTag {
    #[serde(rename = "LOS")]
    Los,
    #[serde(rename = "NLOS-1st")]
    Nlos1st,
    #[serde(rename = "NLOS-2nd")]
    Nlos2nd,
}

impl fmt::Display for PathTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PathTag::Los => "LOS",
            PathTag::Nlos1st => "NLOS-1st",
            PathTag::Nlos2nd => "NLOS-2nd",
        })
    }
}

/// One traced propagation path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayPath {
    /// TX, interaction points in order, RX.
    pub vertices: Vec<Point3>,
    pub interactions: Vec<Interaction>,
    pub length_m: f64,
    pub delay_ns: f64,
    /// Received power before antenna gains: TX power minus free-space and
    /// interaction losses (dBm).
    pub path_gain_db: f64,
    pub omega: AoaAodPair,
    pub tag: PathTag,
}

impl RayPath {
    pub fn reflections(&self) -> impl Iterator<Item = &Interaction> {
        self.interactions
            .iter()
            .filter(|i| i.kind == InteractionKind::Reflection)
    }

    /// `LOS`, or the interacting surfaces joined by `+` (transmissions
    /// suffixed with `(T)`).
    pub fn label(&self) -> String {
        if self.interactions.is_empty() {
            return "LOS".to_string();
        }
        self.interactions
            .iter()
            .map(|i| match i.kind {
                InteractionKind::Reflection => i.surface_id.clone(),
                InteractionKind::Transmission => format!("{}(T)", i.surface_id),
            })
            .collect::<Vec<_>>()
            .join("+")
    }

    /// Delay bin for a given sample period, before any window offset.
    pub fn delay_bin(&self, sample_period_ns: f64) -> i64 {
        (self.delay_ns / sample_period_ns).round() as i64
    }
}

/// Free-space path loss in dB.
pub fn fspl(frequency_hz: f64, distance_m: f64) -> Result<f64> {
    if !(distance_m > 0.0 && distance_m.is_finite()) {
        return Err(Error::NonPositiveDistance(distance_m));
    }
    Ok(20.0 * (4.0 * std::f64::consts::PI * distance_m * frequency_hz / C_M_PER_S).log10())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TraceOptions {
    pub max_reflections: usize,
    pub max_transmissions: usize,
    /// Paths weaker than the strongest by more than this are dropped.
    pub dynamic_range_db: f64,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self {
            max_reflections: 2,
            max_transmissions: 1,
            dynamic_range_db: 60.0,
        }
    }
}

/// Trace all paths between two nodes with the default options.
pub fn trace_paths(env: &Environment, tx: &NodePose, rx: &NodePose, tx_power_dbm: f64) -> Result<Vec<RayPath>> {
    trace_paths_with(env, tx, rx, tx_power_dbm, &TraceOptions::default())
}

pub fn trace_paths_with(
    env: &Environment,
    tx: &NodePose,
    rx: &NodePose,
    tx_power_dbm: f64,
    opts: &TraceOptions,
) -> Result<Vec<RayPath>> {
    let (a, b) = (tx.position, rx.position);
    if a.distance(b) < 1e-9 {
        return Err(Error::DegenerateGeometry("TX and RX coincide".into()));
    }
    for s in env.surfaces() {
        for (name, p) in [("TX", a), ("RX", b)] {
            if s.plane().signed_distance(p).abs() < 1e-9 {
                return Err(Error::DegenerateGeometry(format!(
                    "{name} lies on the plane of surface `{}`",
                    s.id()
                )));
            }
        }
    }

    let surfaces = env.surfaces();
    let mut chains: Vec<Vec<usize>> = vec![Vec::new()];
    if opts.max_reflections >= 1 {
        chains.extend((0..surfaces.len()).map(|i| vec![i]));
    }
    if opts.max_reflections >= 2 {
        for i in 0..surfaces.len() {
            for j in 0..surfaces.len() {
                if i != j {
                    chains.push(vec![i, j]);
                }
            }
        }
    }

    let mut paths = Vec::new();
    for chain in &chains {
        if let Some(p) = build_path(env, chain, tx, rx, tx_power_dbm, opts)? {
            paths.push(p);
        }
    }

    if let Some(strongest) = paths.iter().map(|p| p.path_gain_db).reduce(f64::max) {
        paths.retain(|p| p.path_gain_db >= strongest - opts.dynamic_range_db);
    }
    paths.sort_by(|p, q| {
        p.delay_ns
            .total_cmp(&q.delay_ns)
            .then_with(|| p.interactions.cmp(&q.interactions))
    });
    Ok(paths)
}

/// Specular vertices for a reflection chain, or `None` if the geometry
/// admits no valid specular path through those polygons.
fn specular_vertices(surfaces: &[Surface], chain: &[usize], a: Point3, b: Point3) -> Option<Vec<Point3>> {
    let mut images = Vec::with_capacity(chain.len() + 1);
    images.push(a);
    for &s in chain {
        let prev = *images.last().unwrap();
        images.push(surfaces[s].plane().mirror(prev));
    }
    let mut points = vec![Point3::ORIGIN; chain.len()];
    let mut target = b;
    for k in (0..chain.len()).rev() {
        let s = &surfaces[chain[k]];
        let t = s.plane().intersect_param(images[k + 1], target)?;
        if !(SEGMENT_EPS..=1.0 - SEGMENT_EPS).contains(&t) {
            return None;
        }
        let p = images[k + 1].lerp(target, t);
        if !s.contains(p) {
            return None;
        }
        points[k] = p;
        target = p;
    }
    let mut vertices = Vec::with_capacity(chain.len() + 2);
    vertices.push(a);
    vertices.extend(points);
    vertices.push(b);
    // Both neighbours of a reflection point must sit strictly on the same side.
    for (k, &s) in chain.iter().enumerate() {
        let plane = surfaces[s].plane();
        let d0 = plane.signed_distance(vertices[k]);
        let d1 = plane.signed_distance(vertices[k + 2]);
        if d0 * d1 <= 0.0 || d0.abs() < 1e-9 || d1.abs() < 1e-9 {
            return None;
        }
    }
    if vertices.windows(2).any(|w| w[0].distance(w[1]) < 1e-9) {
        return None;
    }
    Some(vertices)
}

fn build_path(
    env: &Environment,
    chain: &[usize],
    tx: &NodePose,
    rx: &NodePose,
    tx_power_dbm: f64,
    opts: &TraceOptions,
) -> Result<Option<RayPath>> {
    let surfaces = env.surfaces();
    let Some(vertices) = specular_vertices(surfaces, chain, tx.position, rx.position) else {
        return Ok(None);
    };

    let mut interactions = Vec::new();
    let mut loss_db = 0.0;
    let mut transmissions = 0;
    for (seg, w) in vertices.windows(2).enumerate() {
        let (p, q) = (w[0], w[1]);
        // Surfaces the segment starts or ends on are not obstacles for it.
        let start_on = seg.checked_sub(1).map(|k| chain[k]);
        let end_on = chain.get(seg).copied();
        let mut crossings: Vec<(f64, usize)> = Vec::new();
        for (i, s) in surfaces.iter().enumerate() {
            if Some(i) == start_on || Some(i) == end_on {
                continue;
            }
            let Some(t) = s.plane().intersect_param(p, q) else {
                continue;
            };
            if t <= SEGMENT_EPS || t >= 1.0 - SEGMENT_EPS || !s.contains(p.lerp(q, t)) {
                continue;
            }
            match s.transmission_loss() {
                TransmissionLoss::Opaque => return Ok(None),
                TransmissionLoss::Db(_) => crossings.push((t, i)),
            }
        }
        crossings.sort_by(|x, y| x.0.total_cmp(&y.0));
        for (_, i) in crossings {
            transmissions += 1;
            if transmissions > opts.max_transmissions {
                return Ok(None);
            }
            if let TransmissionLoss::Db(db) = surfaces[i].transmission_loss() {
                loss_db += db;
            }
            interactions.push(Interaction {
                surface_id: surfaces[i].id().to_string(),
                kind: InteractionKind::Transmission,
            });
        }
        if let Some(i) = end_on {
            loss_db += surfaces[i].reflection_loss_db();
            interactions.push(Interaction {
                surface_id: surfaces[i].id().to_string(),
                kind: InteractionKind::Reflection,
            });
        }
    }

    let length_m: f64 = vertices.windows(2).map(|w| w[0].distance(w[1])).sum();
    let path_gain_db = tx_power_dbm - fspl(env.carrier_frequency_hz, length_m)? - loss_db;
    let (phi_tx, theta_tx) = global_to_local(tx, vertices[1] - vertices[0])?;
    let n = vertices.len();
    let (phi_rx, theta_rx) = global_to_local(rx, vertices[n - 2] - vertices[n - 1])?;
    let tag = match chain.len() {
        0 if interactions.is_empty() => PathTag::Los,
        0 | 1 => PathTag::Nlos1st,
        _ => PathTag::Nlos2nd,
    };
    Ok(Some(RayPath {
        vertices,
        interactions,
        length_m,
        delay_ns: length_m / C_M_PER_NS,
        path_gain_db,
        omega: AoaAodPair::new(phi_tx, phi_rx, theta_tx, theta_rx),
        tag,
    }))
}

/// Largest gap, over all reflection vertices of `path`, between the angle
/// of incidence and the angle of reflection (rad). Also covers the
/// in-plane condition: the outgoing ray is compared against the mirrored
/// incoming ray. `None` if a reflecting surface is missing from `env`.
pub fn specular_error_rad(env: &Environment, path: &RayPath) -> Option<f64> {
    let mut worst = 0.0f64;
    for (k, i) in path.reflections().enumerate() {
        let n = env.surface(&i.surface_id)?.plane().normal;
        let (p0, p, p1) = (path.vertices[k], path.vertices[k + 1], path.vertices[k + 2]);
        let d_in = (p - p0).normalized()?;
        let d_out = (p1 - p).normalized()?;
        let mirrored = d_in - n * (2.0 * d_in.dot(n));
        let gap = mirrored.dot(d_out).clamp(-1.0, 1.0).acos();
        let incidence = d_in.dot(n).abs().clamp(0.0, 1.0).acos();
        let reflection = d_out.dot(n).abs().clamp(0.0, 1.0).acos();
        worst = worst.max(gap).max((incidence - reflection).abs());
    }
    Some(worst)
}

/// Ray-traced RSSI of one path in every PAC (dBm).
#[derive(Debug, Clone, PartialEq)]
pub struct RssiPrediction(pub Vec<f64>);

impl RssiPrediction {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// `RSSI_est(n) = path gain + G(n, ω)` for a single path.
pub fn predict_rssi(tables: &ArrayTables, path: &RayPath) -> Result<RssiPrediction> {
    let g = tables.gain_vector(&path.omega)?;
    Ok(RssiPrediction(g.into_iter().map(|g| path.path_gain_db + g).collect()))
}

/// Write the path dump CSV.
pub fn write_path_dump<W: Write>(w: W, paths: &[RayPath]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "tag",
        "length_m",
        "delay_ns",
        "path_gain_db",
        "phi_tx",
        "theta_tx",
        "phi_rx",
        "theta_rx",
        "interactions",
    ])?;
    for p in paths {
        let inter = p
            .interactions
            .iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join(";");
        out.write_record([
            p.tag.to_string(),
            format!("{:.6}", p.length_m),
            format!("{:.6}", p.delay_ns),
            format!("{:.4}", p.path_gain_db),
            format!("{:.4}", p.omega.phi_tx),
            format!("{:.4}", p.omega.theta_tx),
            format!("{:.4}", p.omega.phi_rx),
            format!("{:.4}", p.omega.theta_rx),
            inter,
        ])?;
    }
    out.flush().map_err(|e| Error::io("path dump", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::{synth_codebook, CodebookParams, PatternTable};

    fn pose(x: f64, y: f64, z: f64, heading: f64) -> NodePose {
        NodePose::new(Point3::new(x, y, z), heading)
    }

    fn rect(id: &str, pts: [[f64; 3]; 4], rl: f64, tl: TransmissionLoss) -> Surface {
        Surface::new(id, pts.iter().map(|p| Point3::from(*p)).collect(), rl, tl).unwrap()
    }

    fn floor(half: f64) -> Surface {
        rect(
            "floor",
            [
                [-half, -half, 0.0],
                [half, -half, 0.0],
                [half, half, 0.0],
                [-half, half, 0.0],
            ],
            5.0,
            TransmissionLoss::Opaque,
        )
    }

    #[test]
    fn fspl_values() {
        // 20 log10(4 pi f / c) at 60 GHz = 68.0 dB.
        assert!((fspl(60e9, 1.0).unwrap() - 68.0).abs() < 0.05);
        assert!((fspl(60e9, 3.0).unwrap() - 77.5).abs() < 0.1);
        let d = fspl(60e9, 4.0).unwrap() - fspl(60e9, 2.0).unwrap();
        assert!((d - 6.02).abs() < 0.01);
        assert!(fspl(60e9, 0.0).is_err());
        assert!(fspl(60e9, -1.0).is_err());
    }

    #[test]
    fn free_space_single_los() {
        let env = Environment::free_space();
        let paths = trace_paths(&env, &pose(0.0, 0.0, 1.0, 0.0), &pose(3.0, 0.0, 1.0, 180.0), 0.0).unwrap();
        assert_eq!(paths.len(), 1);
        let p = &paths[0];
        assert_eq!(p.tag, PathTag::Los);
        assert!(p.interactions.is_empty());
        assert!((p.delay_ns - 10.006_922).abs() < 1e-5);
        assert!((p.delay_ns - 3.0 / C_M_PER_NS).abs() < 1e-12);
        assert!(p.omega.phi_tx.abs() < 1e-9 && p.omega.phi_rx.abs() < 1e-9);
    }

    #[test]
    fn floor_bounce_via_image() {
        let env = Environment::new(60e9, vec![floor(100.0)]).unwrap();
        let paths = trace_paths(&env, &pose(0.0, 0.0, 1.0, 0.0), &pose(4.0, 0.0, 1.0, 180.0), 0.0).unwrap();
        assert_eq!(paths.len(), 2);
        assert_eq!(paths[0].tag, PathTag::Los);
        let bounce = &paths[1];
        assert_eq!(bounce.tag, PathTag::Nlos1st);
        assert!((bounce.length_m - 20f64.sqrt()).abs() < 1e-12);
        assert!((bounce.length_m - 4.4721).abs() < 1e-4);
        assert_eq!(bounce.vertices[1], Point3::new(2.0, 0.0, 0.0));
        let expected_gain = -fspl(60e9, 20f64.sqrt()).unwrap() - 5.0;
        assert!((bounce.path_gain_db - expected_gain).abs() < 1e-9);
        // Departs and arrives 26.57 deg below the horizon.
        let dip = -(0.5f64).atan().to_degrees();
        assert!((bounce.omega.theta_tx - dip).abs() < 1e-9);
        assert!((bounce.omega.theta_rx - dip).abs() < 1e-9);
    }

    #[test]
    fn opaque_wall_blocks_los() {
        let wall = rect(
            "wall",
            [[2.0, -1.0, 0.5], [2.0, 1.0, 0.5], [2.0, 1.0, 3.0], [2.0, -1.0, 3.0]],
            3.0,
            TransmissionLoss::Opaque,
        );
        let env = Environment::new(60e9, vec![floor(50.0), wall]).unwrap();
        let paths = trace_paths(&env, &pose(0.0, 0.0, 1.0, 0.0), &pose(4.0, 0.0, 1.0, 180.0), 0.0).unwrap();
        assert!(paths.iter().all(|p| p.tag != PathTag::Los));
        assert!(paths.iter().all(|p| p.reflections().count() >= 1));
        // The floor bounce passes under the wall.
        assert!(paths.iter().any(|p| p.label() == "floor"));
    }

    #[test]
    fn glass_adds_one_transmission() {
        let glass = rect(
            "glass",
            [[2.0, -1.0, 0.0], [2.0, 1.0, 0.0], [2.0, 1.0, 3.0], [2.0, -1.0, 3.0]],
            10.0,
            TransmissionLoss::Db(4.0),
        );
        let env = Environment::new(60e9, vec![glass]).unwrap();
        let paths = trace_paths(&env, &pose(0.0, 0.0, 1.0, 0.0), &pose(4.0, 0.0, 1.0, 180.0), 0.0).unwrap();
        assert_eq!(paths.len(), 1);
        let p = &paths[0];
        assert_eq!(p.tag, PathTag::Nlos1st);
        assert_eq!(p.interactions[0].kind, InteractionKind::Transmission);
        assert!((p.path_gain_db + fspl(60e9, 4.0).unwrap() + 4.0).abs() < 1e-9);
    }

    #[test]
    fn second_order_between_parallel_walls() {
        let wall = |id: &str, y: f64| {
            rect(
                id,
                [[-10.0, y, 0.0], [10.0, y, 0.0], [10.0, y, 3.0], [-10.0, y, 3.0]],
                3.0,
                TransmissionLoss::Opaque,
            )
        };
        let env = Environment::new(60e9, vec![wall("north", 2.0), wall("south", -2.0)]).unwrap();
        let paths = trace_paths(&env, &pose(0.0, 0.0, 1.0, 0.0), &pose(4.0, 0.0, 1.0, 180.0), 0.0).unwrap();
        // LOS, two single bounces, two double bounces.
        assert_eq!(paths.len(), 5);
        let doubles: Vec<_> = paths.iter().filter(|p| p.tag == PathTag::Nlos2nd).collect();
        assert_eq!(doubles.len(), 2);
        for d in doubles {
            // Unfolded: 4 m along x, 8 m across.
            assert!((d.length_m - 80f64.sqrt()).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_geometry_rejected() {
        let env = Environment::new(60e9, vec![floor(10.0)]).unwrap();
        assert!(trace_paths(&env, &pose(0.0, 0.0, 0.0, 0.0), &pose(3.0, 0.0, 1.0, 0.0), 0.0).is_err());
        assert!(trace_paths(&env, &pose(1.0, 0.0, 1.0, 0.0), &pose(1.0, 0.0, 1.0, 0.0), 0.0).is_err());
    }

    #[test]
    fn weak_paths_dropped() {
        let env = Environment::new(
            60e9,
            vec![rect(
                "lossy",
                [
                    [-50.0, -50.0, 0.0],
                    [50.0, -50.0, 0.0],
                    [50.0, 50.0, 0.0],
                    [-50.0, 50.0, 0.0],
                ],
                70.0,
                TransmissionLoss::Opaque,
            )],
        )
        .unwrap();
        let paths = trace_paths(&env, &pose(0.0, 0.0, 1.0, 0.0), &pose(4.0, 0.0, 1.0, 180.0), 0.0).unwrap();
        assert_eq!(paths.len(), 1);
    }

    fn tables() -> ArrayTables {
        let t = synth_codebook(&CodebookParams::default()).unwrap();
        ArrayTables::new(t.clone(), t)
    }

    #[test]
    fn constant_patterns_give_flat_prediction() {
        let cb = synth_codebook(&CodebookParams::default()).unwrap();
        let zero = PatternTable::constant(cb.az_grid().to_vec(), cb.el_grid().to_vec(), 12, 0.0).unwrap();
        let t = ArrayTables::new(zero.clone(), zero);
        let env = Environment::free_space();
        let paths = trace_paths(&env, &pose(0.0, 0.0, 1.0, 0.0), &pose(3.0, 0.0, 1.0, 180.0), 10.0).unwrap();
        let pred = predict_rssi(&t, &paths[0]).unwrap();
        assert_eq!(pred.values().len(), 144);
        assert!(pred.values().iter().all(|v| *v == paths[0].path_gain_db));
    }

    #[test]
    fn boresight_los_peaks_in_boresight_pac() {
        let params = CodebookParams {
            steering_span_deg: 90.0,
            beams: 11,
            elevation_stagger_deg: 0.0,
            ..CodebookParams::default()
        };
        let t = synth_codebook(&params).unwrap();
        let t = ArrayTables::new(t.clone(), t);
        let env = Environment::free_space();
        let paths = trace_paths(&env, &pose(0.0, 0.0, 1.0, 0.0), &pose(3.0, 0.0, 1.0, 180.0), 0.0).unwrap();
        let pred = predict_rssi(&t, &paths[0]).unwrap();
        let best = (0..pred.values().len())
            .max_by(|a, b| pred.values()[*a].total_cmp(&pred.values()[*b]))
            .unwrap();
        // Beam 5 of 11 points at 0 deg.
        assert_eq!(best, 5 * 11 + 5);
    }

    #[test]
    fn prediction_range_bounded_by_codebook_dynamic_range() {
        let params = CodebookParams::default();
        let t = tables();
        let env = Environment::new(60e9, vec![floor(50.0)]).unwrap();
        let paths = trace_paths(&env, &pose(0.0, 0.0, 2.0, 0.0), &pose(5.0, 1.0, 1.2, 180.0), 0.0).unwrap();
        // Peak-to-floor per side, derived from the lobe formula: 10 log10((1 + f) / f).
        let f = 10f64.powf(-params.sidelobe_floor_db / 10.0);
        let per_side = 10.0 * ((1.0 + f) / f).log10();
        for p in &paths {
            let pred = predict_rssi(&t, p).unwrap();
            let hi = pred.values().iter().copied().fold(f64::MIN, f64::max);
            let lo = pred.values().iter().copied().fold(f64::MAX, f64::min);
            assert!(hi - lo <= 2.0 * per_side + 1e-4);
        }
    }

    #[test]
    fn path_dump_columns() {
        let env = Environment::new(60e9, vec![floor(100.0)]).unwrap();
        let paths = trace_paths(&env, &pose(0.0, 0.0, 1.0, 0.0), &pose(4.0, 0.0, 1.0, 180.0), 0.0).unwrap();
        let mut buf = Vec::new();
        write_path_dump(&mut buf, &paths).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(
            lines[0],
            "tag,length_m,delay_ns,path_gain_db,phi_tx,theta_tx,phi_rx,theta_rx,interactions"
        );
        assert!(lines[1].starts_with("LOS,4.000000,"));
        assert!(lines[2].ends_with(",floor:R"));
    }
}
