//! The shipped reference venue and its ground-truth path list.

use crate::env::{load_environment, Environment, Scene, Surface, TransmissionLoss};
use crate::error::Result;
use crate::geometry::Point3;
use crate::raytrace::RayPath;

pub const REFERENCE_SCENE: &str = include_str!("../data/reference_scene.toml");

pub const CEILING_HEIGHT_M: f64 = 2.73;

/// Named paths of the venue and the surfaces each one reflects off.
pub const GROUND_TRUTH: [(&str, &[&str]); 6] = [
    ("LOS", &[]),
    ("Path 1", &["floor"]),
    ("Path 2", &["pole_n"]),
    ("Path 3", &["pole_s"]),
    ("Path 4", &["cabinet", "floor"]),
    ("Path 5", &["back_wall", "pillar"]),
];

/// Case used for the blockage run.
pub const BLOCKAGE_CASE: u32 = 8;

pub fn reference_scene() -> Result<Scene> {
    load_environment(REFERENCE_SCENE)
}

/// The reference scene with a ceiling added.
pub fn reference_scene_with_ceiling() -> Result<Scene> {
    let mut scene = reference_scene()?;
    let z = CEILING_HEIGHT_M;
    let ceiling = Surface::new(
        "ceiling",
        vec![
            Point3::new(-3.0, -6.0, z),
            Point3::new(-3.0, 6.0, z),
            Point3::new(9.0, 6.0, z),
            Point3::new(9.0, -6.0, z),
        ],
        6.0,
        TransmissionLoss::Opaque,
    )?;
    let mut surfaces = scene.environment.surfaces().to_vec();
    surfaces.push(ceiling);
    scene.environment = Environment::new(scene.environment.carrier_frequency_hz, surfaces)?;
    Ok(scene)
}

/// Ground-truth name of a traced path, matched on the set of surfaces it
/// reflects off (order and transmissions ignored).
pub fn ground_truth_name(path: &RayPath) -> Option<&'static str> {
    let mut refl: Vec<&str> = path.reflections().map(|i| i.surface_id.as_str()).collect();
    refl.sort_unstable();
    GROUND_TRUTH.iter().find_map(|(name, surfaces)| {
        let mut want = surfaces.to_vec();
        want.sort_unstable();
        (want == refl).then_some(*name)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::case_by_id;
    use crate::raytrace::trace_paths;

    #[test]
    fn loads() {
        let s = reference_scene().unwrap();
        assert_eq!(s.environment.surfaces().len(), 7);
        assert!(s.blocker.is_some());
        assert_eq!(s.tx.position.z, 2.63);
        assert_eq!(s.rx.position.z, 1.37);
    }

    #[test]
    fn case8_has_all_named_paths() {
        let s = reference_scene().unwrap();
        let (tx, rx) = case_by_id(8).unwrap().apply(&s.tx, &s.rx);
        let paths = trace_paths(&s.environment, &tx, &rx, 0.0).unwrap();
        for (name, _) in GROUND_TRUTH {
            assert!(
                paths.iter().any(|p| ground_truth_name(p) == Some(name)),
                "{name} missing"
            );
        }
    }

    #[test]
    fn ceiling_bounce_is_unresolvable() {
        let s = reference_scene_with_ceiling().unwrap();
        let (tx, rx) = case_by_id(8).unwrap().apply(&s.tx, &s.rx);
        let paths = trace_paths(&s.environment, &tx, &rx, 0.0).unwrap();
        let los = paths.iter().find(|p| p.label() == "LOS").unwrap();
        let ceil = paths.iter().find(|p| p.label() == "ceiling").unwrap();
        assert!(ceil.length_m - los.length_m < 0.24);
        assert!(ceil.delay_ns - los.delay_ns < 0.8);
    }
}
