//! Scene files: the JSON description a [`WorldState`] is built from.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Rect, Vec3};
use crate::graph::{ContainerState, Location};
use crate::world::{ContainerInfo, NoiseMap, SpillZone, WorldObject, WorldState};

pub const SCENE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDoc {
    pub version: u32,
    pub seed: u64,
    pub free_surface: Option<String>,
    #[serde(default)]
    pub spill_zone: Option<SpillZone>,
    pub objects: Vec<SceneObject>,
    #[serde(default)]
    pub containers: Vec<SceneContainer>,
    #[serde(default)]
    pub covers: Vec<SceneCover>,
    #[serde(default)]
    pub noise: NoiseMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: String,
    pub category: String,
    #[serde(default)]
    pub color: Option<String>,
    #[serde(default)]
    pub attributes: BTreeSet<String>,
    pub position: [f64; 3],
    pub half_extents: [f64; 3],
    /// Defaults to `on(floor)`.
    #[serde(default)]
    pub location: Option<Location>,
    #[serde(default)]
    pub surface: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneContainer {
    pub id: String,
    pub state: ContainerState,
    #[serde(default)]
    pub front_zone: Option<Rect>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneCover {
    pub cover: String,
    pub covered: String,
}

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("cannot read scene: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed scene json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported scene version {0}")]
    Version(u32),
    #[error("duplicate object id `{0}`")]
    DuplicateId(String),
    #[error("`{object}` refers to undeclared `{target}`")]
    DanglingContainer { object: String, target: String },
    #[error("container entry `{0}` has no matching object")]
    UnknownContainer(String),
    #[error("container `{0}` must be open or closed")]
    BadContainerState(String),
    #[error("`{0}` is placed inside non-container `{1}`")]
    NotAContainer(String, String),
    #[error("cover relation through `{0}` is cyclic or nested")]
    CoverCycle(String),
    #[error("`{0}` is covered more than once")]
    DoubleCover(String),
    #[error("non-finite geometry on `{0}`")]
    NonFinite(String),
    #[error(transparent)]
    Noise(#[from] crate::world::WorldError),
}

fn vec3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

/// Reads and builds a scene from disk.
pub fn load_scene_file(path: impl AsRef<Path>) -> Result<WorldState, SceneError> {
    load_scene(&std::fs::read_to_string(path)?)
}

/// Parses and builds a scene, using the seed stored in the file.
pub fn load_scene(json: &str) -> Result<WorldState, SceneError> {
    let doc: SceneDoc = serde_json::from_str(json)?;
    build_world(&doc)
}

pub fn build_world(doc: &SceneDoc) -> Result<WorldState, SceneError> {
    if doc.version != SCENE_VERSION {
        return Err(SceneError::Version(doc.version));
    }
    let mut world = WorldState::empty(doc.seed);

    for (order, o) in doc.objects.iter().enumerate() {
        if world.objects.contains_key(&o.id) {
            return Err(SceneError::DuplicateId(o.id.clone()));
        }
        let center = vec3(o.position);
        let half = vec3(o.half_extents);
        if !center.is_finite() || !half.is_finite() {
            return Err(SceneError::NonFinite(o.id.clone()));
        }
        world.objects.insert(
            o.id.clone(),
            WorldObject {
                id: o.id.clone(),
                category: o.category.clone(),
                color: o.color.clone(),
                attributes: o.attributes.clone(),
                center,
                half_extents: half,
                order: order as u32,
                surface: o.surface,
            },
        );
        let loc = o.location.clone().unwrap_or_else(|| Location::On("floor".into()));
        world.locations.insert(o.id.clone(), loc);
    }

    for c in &doc.containers {
        if !world.objects.contains_key(&c.id) {
            return Err(SceneError::UnknownContainer(c.id.clone()));
        }
        if !c.state.is_container() {
            return Err(SceneError::BadContainerState(c.id.clone()));
        }
        world.containers.insert(
            c.id.clone(),
            ContainerInfo {
                state: c.state,
                front_zone: c.front_zone,
            },
        );
    }

    for (id, loc) in &world.locations {
        match loc {
            Location::Inside(c) => {
                if !world.objects.contains_key(c) {
                    return Err(SceneError::DanglingContainer { object: id.clone(), target: c.clone() });
                }
                if !world.containers.contains_key(c) {
                    return Err(SceneError::NotAContainer(id.clone(), c.clone()));
                }
            }
            Location::On(s) if s != "floor" && !world.objects.contains_key(s) => {
                return Err(SceneError::DanglingContainer { object: id.clone(), target: s.clone() });
            }
            _ => {}
        }
    }

    let mut covered_by: BTreeMap<&str, &str> = BTreeMap::new();
    for c in &doc.covers {
        for id in [&c.cover, &c.covered] {
            if !world.objects.contains_key(id) {
                return Err(SceneError::DanglingContainer { object: c.cover.clone(), target: id.clone() });
            }
        }
        if c.cover == c.covered {
            return Err(SceneError::CoverCycle(c.cover.clone()));
        }
        if covered_by.insert(&c.covered, &c.cover).is_some() {
            return Err(SceneError::DoubleCover(c.covered.clone()));
        }
    }
    // Covers are one level deep: a covered object cannot itself cover anything.
    for (&covered, &cover) in &covered_by {
        if covered_by.contains_key(cover) {
            return Err(SceneError::CoverCycle(covered.to_string()));
        }
    }
    for (covered, cover) in covered_by {
        world.locations.insert(covered.to_string(), Location::CoveredBy(cover.to_string()));
    }

    if let Some(free) = &doc.free_surface {
        if !world.objects.get(free).is_some_and(|o| o.surface) {
            return Err(SceneError::DanglingContainer { object: "free_surface".into(), target: free.clone() });
        }
    }
    world.free_surface = doc.free_surface.clone();
    world.spill_zone = doc.spill_zone;
    Ok(world.inject_noise(&doc.noise)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCENE: &str = r#"{
      "version": 1, "seed": 3, "free_surface": "table",
      "spill_zone": {"origin": {"x": 0.6, "y": 0.1, "z": 0.0}, "step": {"x": 0.08, "y": 0.0, "z": 0.0}},
      "objects": [
        {"id": "table", "category": "table", "position": [0, 0.5, -0.01], "half_extents": [1, 1, 0.01], "surface": true},
        {"id": "drawer", "category": "drawer", "position": [0.1, 0.45, 0.05], "half_extents": [0.1, 0.1, 0.05], "location": "on(table)"},
        {"id": "apple", "category": "apple", "attributes": ["fruit"], "position": [0.1, 0.45, 0.05], "half_extents": [0.03, 0.03, 0.03], "location": "inside(drawer)"},
        {"id": "towel", "category": "towel", "position": [-0.3, 0.2, 0.01], "half_extents": [0.08, 0.08, 0.01], "location": "on(table)"},
        {"id": "toy", "category": "toy", "position": [-0.3, 0.2, 0.02], "half_extents": [0.03, 0.03, 0.03], "location": "on(table)"}
      ],
      "containers": [{"id": "drawer", "state": "closed", "front_zone": {"x": [0.0, 0.2], "y": [0.15, 0.35]}}],
      "covers": [{"cover": "towel", "covered": "toy"}],
      "noise": {"GRASP": 0.25}
    }"#;

    fn edit(f: impl FnOnce(&mut SceneDoc)) -> Result<WorldState, SceneError> {
        let mut doc: SceneDoc = serde_json::from_str(SCENE).unwrap();
        f(&mut doc);
        build_world(&doc)
    }

    #[test]
    fn loads_a_valid_scene() {
        let w = load_scene(SCENE).unwrap();
        assert_eq!(w.rng.seed(), 3);
        assert_eq!(w.location("toy"), Some(&Location::CoveredBy("towel".into())));
        assert_eq!(w.container_state("drawer"), ContainerState::Closed);
        assert_eq!(w.contents("drawer"), vec!["apple"]);
        assert_eq!(w.objects["apple"].order, 2);
        assert_eq!(w.noise.len(), 1);
    }

    #[test]
    fn rejects_duplicates() {
        let err = edit(|d| {
            let dup = d.objects[1].clone();
            d.objects.push(dup);
        });
        assert!(matches!(err, Err(SceneError::DuplicateId(id)) if id == "drawer"));
    }

    #[test]
    fn rejects_dangling_container() {
        let err = edit(|d| d.objects[2].location = Some(Location::Inside("fridge".into())));
        assert!(matches!(err, Err(SceneError::DanglingContainer { .. })));
        let err = edit(|d| d.objects[2].location = Some(Location::Inside("towel".into())));
        assert!(matches!(err, Err(SceneError::NotAContainer(..))));
    }

    #[test]
    fn rejects_cover_cycles() {
        let err = edit(|d| d.covers.push(SceneCover { cover: "toy".into(), covered: "towel".into() }));
        assert!(matches!(err, Err(SceneError::CoverCycle(_))));
        let err = edit(|d| d.covers.push(SceneCover { cover: "apple".into(), covered: "toy".into() }));
        assert!(matches!(err, Err(SceneError::DoubleCover(_))));
    }

    #[test]
    fn rejects_bad_noise_and_version() {
        assert!(matches!(
            edit(|d| { d.noise.insert(crate::action::Verb::Open, 2.0); }),
            Err(SceneError::Noise(_))
        ));
        assert!(matches!(edit(|d| d.version = 9), Err(SceneError::Version(9))));
    }
}
