#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use explore_loop::geometry::Vec3;
use explore_loop::graph::{LayoutEntry, Relation, RelationEdge};
use explore_loop::harness::benchmark_noise;
use explore_loop::llm::BackendConfig;
use explore_loop::orchestrator::{BackendChoice, EpisodeConfig, Mode};

pub fn root() -> &'static Path {
    Path::new(env!("CARGO_MANIFEST_DIR"))
}

pub fn scene(n: u32) -> PathBuf {
    root().join(format!("tasks/task{n}.scene.json"))
}

pub fn fixture(name: &str) -> PathBuf {
    root().join("fixtures").join(name)
}

pub fn noisy(n: u32, mode: Mode, seed: u64) -> EpisodeConfig {
    EpisodeConfig {
        seed,
        mode,
        noise: Some(benchmark_noise()),
        ..EpisodeConfig::for_scene(scene(n))
    }
}

pub fn quiet(n: u32, mode: Mode) -> EpisodeConfig {
    EpisodeConfig {
        noise: Some(Default::default()),
        ..noisy(n, mode, 0)
    }
}

/// The recorded Task-3 session.
pub const TASK3_SESSION: &str = "task3_session.jsonl";
/// Task 5 with a planner that drops the GRASP before its first PLACE.
pub const TASK5_FLAWED: &str = "task5_flawed.jsonl";

pub fn task3_session() -> EpisodeConfig {
    noisy(3, Mode::Full, 3)
}

pub fn task5_flawed() -> EpisodeConfig {
    noisy(5, Mode::Full, 5)
}

pub fn replaying(cfg: EpisodeConfig, name: &str) -> EpisodeConfig {
    EpisodeConfig {
        backend: BackendChoice::External(BackendConfig::replay(fixture(name))),
        ..cfg
    }
}

pub const TAU: f64 = 0.02;

/// Brute force over ordered pairs: `a r b` when b sits beyond a along r's axis
/// by more than the threshold plus both half-extents.
pub fn oracle(layout: &[LayoutEntry]) -> BTreeSet<RelationEdge> {
    let table = [
        (Relation::Left, 0usize, 1.0),
        (Relation::Right, 0, -1.0),
        (Relation::Front, 1, 1.0),
        (Relation::Behind, 1, -1.0),
        (Relation::Below, 2, 1.0),
        (Relation::Above, 2, -1.0),
    ];
    let coord = |v: &Vec3, k: usize| [v.x, v.y, v.z][k];
    let mut out = BTreeSet::new();
    for a in layout {
        for b in layout {
            if a.id == b.id {
                continue;
            }
            for (rel, k, sign) in table {
                let gap = sign * (coord(&b.center, k) - coord(&a.center, k));
                if gap > TAU + (coord(&a.half_extents, k) + coord(&b.half_extents, k)) {
                    out.insert(RelationEdge::new(&a.id, rel, &b.id));
                }
            }
        }
    }
    out
}
