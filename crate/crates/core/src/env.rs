//! Venue description: reflecting surfaces, node poses and the moving blocker.
//!
//! A scene document is a small TOML body behind a one-line version header:
//!
//! ```text
//! beamscan-scene v1
//! carrier_frequency_hz = 60000000000.0
//!
//! [tx]
//! position = [0.0, 0.0, 2.63]
//! ...
//! ```
//!
//! Lengths are meters, angles degrees, losses dB. Every type in here is
//! validated on construction and immutable afterwards.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Plane, Point3};

/// First line of every scene document.
pub const SCENE_HEADER: &str = "beamscan-scene v1";

/// Maximum distance of a polygon vertex from its best-fit plane.
pub const COPLANAR_TOL_M: f64 = 1e-3;

pub const DEFAULT_CARRIER_HZ: f64 = 60e9;

/// Loss applied when a path passes straight through a surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransmissionLoss {
    Opaque,
    Db(f64),
}

impl TransmissionLoss {
    pub fn is_opaque(&self) -> bool {
        matches!(self, TransmissionLoss::Opaque)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawTransmission {
    Db(f64),
    Word(String),
}

impl Serialize for TransmissionLoss {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            TransmissionLoss::Opaque => RawTransmission::Word("opaque".into()).serialize(s),
            TransmissionLoss::Db(db) => RawTransmission::Db(*db).serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for TransmissionLoss {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match RawTransmission::deserialize(d)? {
            RawTransmission::Db(db) => Ok(TransmissionLoss::Db(db)),
            RawTransmission::Word(w) if w == "opaque" => Ok(TransmissionLoss::Opaque),
            RawTransmission::Word(w) => Err(serde::de::Error::custom(format!(
                "transmission_loss_db must be a number or \"opaque\", got \"{w}\""
            ))),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct SurfaceDoc {
    id: String,
    polygon: Vec<Point3>,
    reflection_loss_db: f64,
    transmission_loss_db: TransmissionLoss,
}

/// A planar convex reflector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SurfaceDoc", into = "SurfaceDoc")]
pub struct Surface {
    id: String,
    polygon: Vec<Point3>,
    reflection_loss_db: f64,
    transmission_loss: TransmissionLoss,
    plane: Plane,
}

impl TryFrom<SurfaceDoc> for Surface {
    type Error = Error;
    fn try_from(doc: SurfaceDoc) -> Result<Self> {
        Surface::new(doc.id, doc.polygon, doc.reflection_loss_db, doc.transmission_loss_db)
    }
}

impl From<Surface> for SurfaceDoc {
    fn from(s: Surface) -> Self {
        SurfaceDoc {
            id: s.id,
            polygon: s.polygon,
            reflection_loss_db: s.reflection_loss_db,
            transmission_loss_db: s.transmission_loss,
        }
    }
}

impl Surface {
    pub fn new(
        id: impl Into<String>,
        polygon: Vec<Point3>,
        reflection_loss_db: f64,
        transmission_loss: TransmissionLoss,
    ) -> Result<Self> {
        let id = id.into();
        let invalid = |reason: &str| Error::InvalidSurface {
            id: id.clone(),
            reason: reason.to_string(),
        };
        if id.is_empty() {
            return Err(invalid("empty id"));
        }
        if polygon.len() < 3 {
            return Err(invalid("polygon needs at least 3 vertices"));
        }
        if polygon.iter().any(|p| !p.is_finite()) {
            return Err(invalid("non-finite vertex"));
        }
        if !(reflection_loss_db.is_finite() && reflection_loss_db >= 0.0) {
            return Err(invalid("reflection loss must be a finite dB value >= 0"));
        }
        if let TransmissionLoss::Db(db) = transmission_loss {
            if !(db.is_finite() && db >= 0.0) {
                return Err(invalid("transmission loss must be a finite dB value >= 0"));
            }
        }

        // Newell's method: robust normal for any simple polygon.
        let mut n = Point3::ORIGIN;
        for (i, a) in polygon.iter().enumerate() {
            let b = polygon[(i + 1) % polygon.len()];
            n.x += (a.y - b.y) * (a.z + b.z);
            n.y += (a.z - b.z) * (a.x + b.x);
            n.z += (a.x - b.x) * (a.y + b.y);
        }
        let normal = n.normalized().ok_or_else(|| invalid("degenerate polygon normal"))?;
        let centroid = polygon.iter().fold(Point3::ORIGIN, |acc, p| acc + *p) * (1.0 / polygon.len() as f64);
        let plane = Plane {
            normal,
            offset: normal.dot(centroid),
        };
        for (vertex, p) in polygon.iter().enumerate() {
            let offset_m = plane.signed_distance(*p).abs();
            if offset_m > COPLANAR_TOL_M {
                return Err(Error::NonCoplanar { id, vertex, offset_m });
            }
        }
        let k = polygon.len();
        for i in 0..k {
            let e0 = polygon[(i + 1) % k] - polygon[i];
            let e1 = polygon[(i + 2) % k] - polygon[(i + 1) % k];
            if e0.cross(e1).dot(normal) < -1e-9 {
                return Err(invalid("polygon is not convex"));
            }
        }

        Ok(Self {
            id,
            polygon,
            reflection_loss_db,
            transmission_loss,
            plane,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn polygon(&self) -> &[Point3] {
        &self.polygon
    }

    pub fn reflection_loss_db(&self) -> f64 {
        self.reflection_loss_db
    }

    pub fn transmission_loss(&self) -> TransmissionLoss {
        self.transmission_loss
    }

    pub fn plane(&self) -> &Plane {
        &self.plane
    }

    /// Whether `p` (assumed on the surface plane) lies inside the polygon.
    pub fn contains(&self, p: Point3) -> bool {
        let k = self.polygon.len();
        (0..k).all(|i| {
            let a = self.polygon[i];
            let edge = self.polygon[(i + 1) % k] - a;
            edge.cross(p - a).dot(self.plane.normal) >= -1e-9 * edge.norm().max(1.0)
        })
    }
}

/// The set of surfaces making up the venue.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Environment {
    pub carrier_frequency_hz: f64,
    surfaces: Vec<Surface>,
}

impl Environment {
    pub fn new(carrier_frequency_hz: f64, surfaces: Vec<Surface>) -> Result<Self> {
        if !(carrier_frequency_hz.is_finite() && carrier_frequency_hz > 0.0) {
            return Err(Error::MalformedScene(format!(
                "carrier frequency must be positive, got {carrier_frequency_hz}"
            )));
        }
        let mut seen = HashSet::new();
        for s in &surfaces {
            if !seen.insert(s.id()) {
                return Err(Error::DuplicateSurface(s.id().to_string()));
            }
        }
        Ok(Self {
            carrier_frequency_hz,
            surfaces,
        })
    }

    pub fn free_space() -> Self {
        Self {
            carrier_frequency_hz: DEFAULT_CARRIER_HZ,
            surfaces: Vec::new(),
        }
    }

    pub fn surfaces(&self) -> &[Surface] {
        &self.surfaces
    }

    pub fn surface(&self, id: &str) -> Option<&Surface> {
        self.surfaces.iter().find(|s| s.id() == id)
    }

    /// Copy of this environment with the named surface removed.
    pub fn without(&self, id: &str) -> Environment {
        Environment {
            carrier_frequency_hz: self.carrier_frequency_hz,
            surfaces: self.surfaces.iter().filter(|s| s.id() != id).cloned().collect(),
        }
    }
}

/// Position and gimbal orientation of one array.
///
/// `heading_deg` is the room-frame yaw of the gimbal's zero position;
/// `mount_azimuth_deg` and `mount_elevation_deg` are the gimbal settings
/// reported per measurement case. Azimuths are clockwise-positive viewed
/// from above, elevation is positive for an up-tilt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodePose {
    pub position: Point3,
    #[serde(default)]
    pub heading_deg: f64,
    #[serde(default)]
    pub mount_azimuth_deg: f64,
    #[serde(default)]
    pub mount_elevation_deg: f64,
}

impl NodePose {
    pub fn new(position: Point3, heading_deg: f64) -> Self {
        Self {
            position,
            heading_deg,
            mount_azimuth_deg: 0.0,
            mount_elevation_deg: 0.0,
        }
    }

    pub fn with_mount(mut self, azimuth_deg: f64, elevation_deg: f64) -> Self {
        self.mount_azimuth_deg = azimuth_deg;
        self.mount_elevation_deg = elevation_deg;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.position.is_finite() {
            return Err(Error::InvalidPose("non-finite position".into()));
        }
        let in_half_open = |a: f64| a > -180.0 && a <= 180.0;
        if !in_half_open(self.heading_deg) {
            return Err(Error::InvalidPose(format!(
                "heading {} deg outside (-180, 180]",
                self.heading_deg
            )));
        }
        if !in_half_open(self.mount_azimuth_deg) {
            return Err(Error::InvalidPose(format!(
                "azimuth {} deg outside (-180, 180]",
                self.mount_azimuth_deg
            )));
        }
        if !(-90.0..=90.0).contains(&self.mount_elevation_deg) {
            return Err(Error::InvalidPose(format!(
                "elevation {} deg outside [-90, 90]",
                self.mount_elevation_deg
            )));
        }
        Ok(())
    }
}

/// One timed position of the blocker's cylinder axis base.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Waypoint {
    pub time_s: f64,
    pub position: Point3,
}

impl From<[f64; 4]> for Waypoint {
    fn from(v: [f64; 4]) -> Self {
        Waypoint {
            time_s: v[0],
            position: Point3::new(v[1], v[2], v[3]),
        }
    }
}

impl From<Waypoint> for [f64; 4] {
    fn from(w: Waypoint) -> Self {
        [w.time_s, w.position.x, w.position.y, w.position.z]
    }
}

fn default_blocker_attenuation() -> f64 {
    20.0
}

fn default_edge_width() -> f64 {
    0.1
}

#[derive(Serialize, Deserialize)]
struct TrajectoryDoc {
    radius_m: f64,
    height_m: f64,
    #[serde(default = "default_blocker_attenuation")]
    attenuation_db: f64,
    #[serde(default = "default_edge_width")]
    edge_width_m: f64,
    waypoints: Vec<Waypoint>,
}

/// A person modeled as a vertical cylinder walking a piecewise-linear route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TrajectoryDoc", into = "TrajectoryDoc")]
pub struct BlockerTrajectory {
    pub radius_m: f64,
    pub height_m: f64,
    /// Loss applied to a path that passes through the cylinder.
    pub attenuation_db: f64,
    /// Width of the raised-cosine transition straddling the cylinder edge.
    pub edge_width_m: f64,
    waypoints: Vec<Waypoint>,
}

impl TryFrom<TrajectoryDoc> for BlockerTrajectory {
    type Error = Error;
    fn try_from(d: TrajectoryDoc) -> Result<Self> {
        let mut t = BlockerTrajectory::new(d.radius_m, d.height_m, d.waypoints)?;
        t.attenuation_db = d.attenuation_db;
        t.edge_width_m = d.edge_width_m;
        t.validate()?;
        Ok(t)
    }
}

impl From<BlockerTrajectory> for TrajectoryDoc {
    fn from(t: BlockerTrajectory) -> Self {
        TrajectoryDoc {
            radius_m: t.radius_m,
            height_m: t.height_m,
            attenuation_db: t.attenuation_db,
            edge_width_m: t.edge_width_m,
            waypoints: t.waypoints,
        }
    }
}

impl BlockerTrajectory {
    pub fn new(radius_m: f64, height_m: f64, waypoints: Vec<Waypoint>) -> Result<Self> {
        let t = Self {
            radius_m,
            height_m,
            attenuation_db: default_blocker_attenuation(),
            edge_width_m: default_edge_width(),
            waypoints,
        };
        t.validate()?;
        Ok(t)
    }

    fn validate(&self) -> Result<()> {
        if !(self.radius_m.is_finite() && self.radius_m > 0.0) {
            return Err(Error::InvalidTrajectory("radius must be > 0".into()));
        }
        if !(self.height_m.is_finite() && self.height_m > 0.0) {
            return Err(Error::InvalidTrajectory("height must be > 0".into()));
        }
        if !(self.attenuation_db.is_finite() && self.attenuation_db >= 0.0) {
            return Err(Error::InvalidTrajectory("attenuation must be >= 0 dB".into()));
        }
        if !(self.edge_width_m.is_finite() && self.edge_width_m >= 0.0) {
            return Err(Error::InvalidTrajectory("edge width must be >= 0".into()));
        }
        if self.waypoints.is_empty() {
            return Err(Error::InvalidTrajectory("no waypoints".into()));
        }
        if self
            .waypoints
            .iter()
            .any(|w| !w.time_s.is_finite() || !w.position.is_finite())
        {
            return Err(Error::InvalidTrajectory("non-finite waypoint".into()));
        }
        if self.waypoints.windows(2).any(|w| w[1].time_s <= w[0].time_s) {
            return Err(Error::InvalidTrajectory(
                "waypoint times must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }

    pub fn start_s(&self) -> f64 {
        self.waypoints[0].time_s
    }

    pub fn end_s(&self) -> f64 {
        self.waypoints[self.waypoints.len() - 1].time_s
    }

    pub fn covers(&self, t_s: f64) -> bool {
        t_s >= self.start_s() && t_s <= self.end_s()
    }
}

/// Blocker axis base at time `t_s`, linearly interpolated between waypoints.
pub fn blocker_position(traj: &BlockerTrajectory, t_s: f64) -> Result<Point3> {
    if !traj.covers(t_s) {
        return Err(Error::OutsideTrajectory {
            t_s,
            start_s: traj.start_s(),
            end_s: traj.end_s(),
        });
    }
    let w = traj.waypoints();
    // First waypoint with time >= t; exact hits return the waypoint itself.
    let hi = w.partition_point(|p| p.time_s < t_s);
    if w[hi].time_s == t_s || hi == 0 {
        return Ok(w[hi].position);
    }
    let (a, b) = (w[hi - 1], w[hi]);
    let frac = (t_s - a.time_s) / (b.time_s - a.time_s);
    Ok(a.position.lerp(b.position, frac))
}

/// A fully validated scene: venue, both node poses and an optional blocker.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub environment: Environment,
    pub tx: NodePose,
    pub rx: NodePose,
    pub blocker: Option<BlockerTrajectory>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneDoc {
    #[serde(default = "default_carrier")]
    carrier_frequency_hz: f64,
    tx: NodePose,
    rx: NodePose,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    blocker: Option<BlockerTrajectory>,
    #[serde(default)]
    surfaces: Vec<Surface>,
}

fn default_carrier() -> f64 {
    DEFAULT_CARRIER_HZ
}

impl fmt::Display for Scene {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let doc = SceneDoc {
            carrier_frequency_hz: self.environment.carrier_frequency_hz,
            tx: self.tx,
            rx: self.rx,
            blocker: self.blocker.clone(),
            surfaces: self.environment.surfaces().to_vec(),
        };
        let body = toml::to_string(&doc).map_err(|_| fmt::Error)?;
        write!(f, "{SCENE_HEADER}\n{body}")
    }
}

/// Parse and validate a scene document.
pub fn load_environment(source: &str) -> Result<Scene> {
    let body = source
        .strip_prefix(SCENE_HEADER)
        .filter(|rest| rest.is_empty() || rest.starts_with('\n') || rest.starts_with("\r\n"))
        .ok_or_else(|| Error::MalformedScene(format!("missing `{SCENE_HEADER}` header line")))?;
    let doc: SceneDoc = toml::from_str(body).map_err(|e| {
        // Validation errors raised inside serde come back as plain messages.
        Error::MalformedScene(e.message().to_string())
    })?;
    doc.tx.validate()?;
    doc.rx.validate()?;
    let environment = Environment::new(doc.carrier_frequency_hz, doc.surfaces)?;
    Ok(Scene {
        environment,
        tx: doc.tx,
        rx: doc.rx,
        blocker: doc.blocker,
    })
}

pub fn load_scene_file(path: &Path) -> Result<Scene> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    load_environment(&text)
}
