//! One PASS/FAIL line per acceptance criterion. Tolerances are pinned below.

mod common;

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use common::*;
use explore_loop::action::{Place, PrimitiveAction};
use explore_loop::feedback::FailureReason;
use explore_loop::geometry::Vec3;
use explore_loop::graph::{derive_relations, LayoutEntry, RelationGraph, Thresholds};
use explore_loop::harness::{benchmark_noise, run_benchmark, BenchmarkSpec};
use explore_loop::orchestrator::{read_trace, replay_episode, run_episode, trace_bytes, EpisodeConfig, Mode};
use explore_loop::perception::{ground_truth, perceive, ObservabilityRules};
use explore_loop::planner::{resolve_placeholders, StagePlanBundle};
use explore_loop::predicate::{eval_predicate, ContainerQuery, GoalPredicate, PlaceSpec, Selector};
use explore_loop::reflection::reflect;
use explore_loop::scene::load_scene_file;
use explore_loop::world::WorldState;

/// Minimum per-task success over 10 noisy episodes, tasks 1 to 5.
const PROTOCOL_FLOOR: [f64; 5] = [1.0, 1.0, 1.0, 0.9, 0.8];
const PROTOCOL_EPISODES: u32 = 10;
const PROTOCOL_BUDGET: Duration = Duration::from_secs(10);

const ABLATION_EPISODES: u32 = 100;
const NO_GRAPH_CEILING: f64 = 0.40;
/// Task 5 successes out of 100 at base seed 0, frozen from the first verified run.
const ABLATION_GOLDEN: [(Mode, u32); 4] = [
    (Mode::Full, 100),
    (Mode::NoGraph, 36),
    (Mode::SingleStage, 16),
    (Mode::NoValidator, 0),
];

const SOUNDNESS_EPISODES_PER_TASK: u32 = 200;
const IDEMPOTENCE_BUNDLES: usize = 100;
const ORACLE_LAYOUTS: usize = 500;
const REPLAY_SEEDS: u64 = 4;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn spec(tasks: &[u32], mode: Mode, episodes: u32) -> BenchmarkSpec {
    let mut s = BenchmarkSpec::new(tasks.iter().map(|&n| scene(n)).collect(), mode, episodes);
    s.noise = Some(benchmark_noise());
    s
}

fn protocol() -> Outcome {
    let start = Instant::now();
    let batch = match run_benchmark(&spec(&[1, 2, 3, 4, 5], Mode::Full, PROTOCOL_EPISODES)) {
        Ok(b) => b,
        Err(e) => return outcome(false, e.to_string()),
    };
    let elapsed = start.elapsed();
    let mut pass = elapsed < PROTOCOL_BUDGET;
    let mut parts = Vec::new();
    for (row, floor) in batch.report.rows.iter().zip(PROTOCOL_FLOOR) {
        let rate = row.success_rate.unwrap_or(0.0);
        pass &= rate >= floor;
        parts.push(format!("{} {}/{}", row.task, row.successes, row.episodes));
    }
    outcome(pass, format!("{} in {:.2}s", parts.join(", "), elapsed.as_secs_f64()))
}

fn ablation() -> Outcome {
    let mut got = BTreeMap::new();
    for (mode, _) in ABLATION_GOLDEN {
        match run_benchmark(&spec(&[5], mode, ABLATION_EPISODES)) {
            Ok(b) => got.insert(mode, b.report.rows[0].successes),
            Err(e) => return outcome(false, e.to_string()),
        };
    }
    let n = |m: Mode| got[&m];
    let ordered = n(Mode::Full) > n(Mode::NoGraph) && n(Mode::NoGraph) > n(Mode::SingleStage) && n(Mode::SingleStage) > n(Mode::NoValidator);
    let ceiling = f64::from(n(Mode::NoGraph)) / f64::from(ABLATION_EPISODES) <= NO_GRAPH_CEILING;
    let golden = ABLATION_GOLDEN.iter().all(|&(m, k)| n(m) == k);
    let detail = ABLATION_GOLDEN
        .iter()
        .map(|&(m, k)| format!("{m} {}/{ABLATION_EPISODES} (golden {k})", n(m)))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(ordered && ceiling && golden && n(Mode::NoValidator) == 0, detail)
}

fn soundness() -> Outcome {
    let batch = match run_benchmark(&spec(&[1, 2, 3, 4, 5], Mode::Full, SOUNDNESS_EPISODES_PER_TASK)) {
        Ok(b) => b,
        Err(e) => return outcome(false, e.to_string()),
    };
    let (mut episodes, mut failed_steps, mut misses, mut false_yes) = (0, 0, 0, 0);
    for (_, results) in &batch.episodes {
        for r in results {
            episodes += 1;
            for e in &r.trace {
                let Some(fb) = &e.feedback else {
                    misses += 1;
                    continue;
                };
                if !e.outcome.succeeded {
                    failed_steps += 1;
                    if fb.is_yes() || fb.reason != FailureReason::PrimitiveFailed {
                        misses += 1;
                    }
                }
                if fb.is_yes() && !e.outcome.succeeded {
                    false_yes += 1;
                }
            }
        }
    }
    outcome(
        episodes == 1000 && misses == 0 && false_yes == 0,
        format!("{episodes} episodes, {failed_steps} failed steps, {misses} misses, {false_yes} false yes"),
    )
}

fn see(w: &WorldState) -> RelationGraph {
    perceive(w, &ObservabilityRules::default(), 0).expect("valid scene")
}

/// Reflects `bundle` once, then runs it step by step without noise and
/// without replanning. Placeholders are bound after the exploration stage.
fn execute_repaired(bundle: &StagePlanBundle) -> Result<(), String> {
    let cfg = quiet(5, Mode::Full);
    let goal = cfg.load_goal().map_err(|e| e.to_string())?;
    let mut world = cfg.load_world().map_err(|e| e.to_string())?;
    let (fixed, report) = reflect(bundle, &see(&world));
    if !report.repaired {
        return Err("reflection could not repair".into());
    }
    let run = |plan: &[PrimitiveAction], world: &mut WorldState| -> Result<(), String> {
        for a in plan {
            let (next, out) = world.apply_primitive(a);
            if !out.succeeded {
                return Err(format!("{a} refused: {:?}", out.refusal_reason));
            }
            *world = next;
        }
        Ok(())
    };
    run(fixed.explore_plan.as_deref().unwrap_or_default(), &mut world)?;
    let bound = resolve_placeholders(&fixed, &see(&world)).map_err(|e| e.to_string())?;
    run(bound.complete_plan.as_deref().unwrap_or_default(), &mut world)?;
    let g = ground_truth(&world, 0).map_err(|e| e.to_string())?;
    if eval_predicate(&goal, &g).is_true() {
        Ok(())
    } else {
        Err("goal not met".into())
    }
}

fn random_bundle(rng: &mut ChaCha8Rng) -> StagePlanBundle {
    const TOKEN: &str = "?container_0";
    let mut pick = |n: u64| (rng.next_u64() % n) as usize;
    let items = ["banana", "cup"];
    let drawers = ["green_drawer", "blue_drawer"];
    let plan = |pick: &mut dyn FnMut(u64) -> usize, allow_token: bool| -> Option<Vec<PrimitiveAction>> {
        if pick(4) == 0 {
            return None;
        }
        let len = pick(6);
        Some(
            (0..len)
                .map(|_| match pick(4) {
                    0 => PrimitiveAction::grasp(items[pick(2)]),
                    1 => PrimitiveAction::open(drawers[pick(2)]),
                    2 => PrimitiveAction::close(drawers[pick(2)]),
                    _ => {
                        let dest = match pick(if allow_token { 4 } else { 3 }) {
                            0 => Place::On("table".into()),
                            3 => Place::Inside(TOKEN.into()),
                            k => Place::Inside(drawers[k - 1].into()),
                        };
                        PrimitiveAction::place(items[pick(2)], dest)
                    }
                })
                .collect(),
        )
    };
    let explore = plan(&mut pick, false);
    let complete = plan(&mut pick, true);
    let q = ContainerQuery::contains_only(Some("drawer"), "fruit");
    StagePlanBundle {
        explore_goal: explore.as_ref().map(|_| GoalPredicate::Identified { query: q.clone() }),
        explore_plan: explore,
        complete_goal: complete
            .as_ref()
            .map(|_| GoalPredicate::at(Selector::id("banana"), PlaceSpec::Inside(TOKEN.into()))),
        complete_plan: complete,
        placeholders: BTreeMap::from([(TOKEN.to_string(), q)]),
    }
}

fn reflection() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    for name in ["missing_grasp.bundle.json", "unblocked_open.bundle.json"] {
        let text = std::fs::read_to_string(fixture(name)).unwrap_or_default();
        let result = serde_json::from_str::<StagePlanBundle>(&text)
            .map_err(|e| e.to_string())
            .and_then(|b| execute_repaired(&b));
        pass &= result.is_ok();
        notes.push(format!("{name}: {}", result.err().unwrap_or_else(|| "repaired, succeeds".into())));
    }
    let g = see(&load_scene_file(scene(5)).expect("task 5 scene"));
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let stable = (0..IDEMPOTENCE_BUNDLES)
        .filter(|_| {
            let b = random_bundle(&mut rng);
            let (once, _) = reflect(&b, &g);
            reflect(&once, &g).0 == once
        })
        .count();
    pass &= stable == IDEMPOTENCE_BUNDLES;
    notes.push(format!("idempotent on {stable}/{IDEMPOTENCE_BUNDLES} random bundles"));
    outcome(pass, notes.join("; "))
}

fn fidelity() -> Outcome {
    let mut cases = Vec::new();
    for n in 1..=5 {
        for mode in Mode::ALL {
            for seed in 0..REPLAY_SEEDS {
                cases.push(noisy(n, mode, seed));
            }
        }
    }
    cases.push(replaying(task3_session(), TASK3_SESSION));
    let check = |cfg: &EpisodeConfig| -> Result<(), String> {
        let a = run_episode(cfg).map_err(|e| e.to_string())?;
        let b = run_episode(cfg).map_err(|e| e.to_string())?;
        let bytes = trace_bytes(&a.trace);
        if bytes != trace_bytes(&b.trace) {
            return Err("trace bytes differ between runs".into());
        }
        let back = read_trace(bytes.as_slice()).map_err(|e| e.to_string())?;
        if trace_bytes(&back) != bytes {
            return Err("trace changed after a parse round trip".into());
        }
        replay_episode(cfg, &back).map_err(|e| e.to_string())
    };
    let failures: Vec<String> = cases
        .iter()
        .filter_map(|c| check(c).err().map(|e| format!("{} seed {}: {e}", c.scene.display(), c.seed)))
        .collect();
    let detail = match failures.first() {
        None => format!("{} traces replayed byte for byte", cases.len()),
        Some(f) => format!("{} of {} failed, first: {f}", failures.len(), cases.len()),
    };
    outcome(failures.is_empty(), detail)
}

fn graph_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut grid = |lo: i64, hi: i64| (lo + (rng.next_u64() % (hi - lo + 1) as u64) as i64) as f64 * 0.005;
    let (mut matched, mut paired) = (0, 0);
    for _ in 0..ORACLE_LAYOUTS {
        let count = grid(0, 5) / 0.005;
        let layout: Vec<LayoutEntry> = (0..count as usize)
            .map(|i| {
                let c = Vec3::new(grid(-100, 100), grid(-100, 100), grid(0, 60));
                let h = Vec3::new(grid(0, 20), grid(0, 20), grid(0, 20));
                LayoutEntry::new(format!("o{i}"), c, h)
            })
            .collect();
        let edges = derive_relations(&layout, Thresholds::uniform(TAU)).expect("valid layout");
        matched += usize::from(edges == oracle(&layout));
        paired += usize::from(edges.iter().all(|e| edges.contains(&e.mirror())));
    }
    outcome(
        matched == ORACLE_LAYOUTS && paired == ORACLE_LAYOUTS,
        format!("{matched}/{ORACLE_LAYOUTS} layouts match brute force, {paired}/{ORACLE_LAYOUTS} fully paired"),
    )
}

fn external_replay() -> Outcome {
    match run_episode(&replaying(task3_session(), TASK3_SESSION)) {
        Ok(r) => outcome(r.success, format!("task3 {:?} after {} steps, offline", r.termination, r.steps)),
        Err(e) => outcome(false, e.to_string()),
    }
}

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("success under noise, 10 episodes per task", protocol),
        ("ablation ordering on task 5", ablation),
        ("validator soundness over 1000 episodes", soundness),
        ("reflection repairs and idempotence", reflection),
        ("trace replay fidelity", fidelity),
        ("relation graph oracle", graph_oracle),
        ("external backend replay", external_replay),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let r = check();
        failed += usize::from(!r.pass);
        println!("{} criterion {}: {name}: {}", if r.pass { "PASS" } else { "FAIL" }, i + 1, r.detail);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
