mod common;

use common::*;
use explore_loop::action::{Place, PrimitiveAction};
use explore_loop::orchestrator::{
    read_trace, replay_episode, run_episode, trace_bytes, EpisodeError, Mode, ReplayError, Termination,
};

#[test]
fn task5_noise_free_runs_the_expected_sequence() {
    let r = run_episode(&quiet(5, Mode::Full)).unwrap();
    assert!(r.success);
    let actions: Vec<PrimitiveAction> = r.trace.iter().map(|e| e.action.clone()).collect();
    assert_eq!(
        actions,
        vec![
            PrimitiveAction::open("green_drawer"),
            PrimitiveAction::grasp("cup"),
            PrimitiveAction::place("cup", Place::On("table".into())),
            PrimitiveAction::open("blue_drawer"),
            PrimitiveAction::grasp("banana"),
            PrimitiveAction::place("banana", Place::Inside("blue_drawer".into())),
            PrimitiveAction::close("green_drawer"),
            PrimitiveAction::close("blue_drawer"),
        ]
    );
}

#[test]
fn every_task_succeeds_without_noise() {
    for n in 1..=5 {
        let r = run_episode(&quiet(n, Mode::Full)).unwrap();
        assert!(r.success, "task {n}: {:?}", r.termination);
        assert!(r.trace.iter().all(|e| e.outcome.succeeded), "task {n}");
    }
}

#[test]
fn same_config_gives_identical_trace_bytes() {
    for n in 1..=5 {
        let a = run_episode(&noisy(n, Mode::Full, 11)).unwrap();
        let b = run_episode(&noisy(n, Mode::Full, 11)).unwrap();
        assert_eq!(trace_bytes(&a.trace), trace_bytes(&b.trace));
    }
}

#[test]
fn traces_round_trip_and_replay() {
    for mode in Mode::ALL {
        let cfg = noisy(5, mode, 4);
        let r = run_episode(&cfg).unwrap();
        let bytes = trace_bytes(&r.trace);
        let back = read_trace(bytes.as_slice()).unwrap();
        assert!(trace_bytes(&back) == bytes, "{mode}: trace bytes changed after a round trip");
        replay_episode(&cfg, &back).unwrap_or_else(|e| panic!("{mode}: {e}"));
    }
}

#[test]
fn tampered_trace_is_caught() {
    let cfg = noisy(5, Mode::Full, 4);
    let mut trace = run_episode(&cfg).unwrap().trace;
    let last = trace.len() - 1;
    trace[last].outcome.succeeded = !trace[last].outcome.succeeded;
    assert!(matches!(
        replay_episode(&cfg, &trace),
        Err(ReplayError::Mismatch { what: "outcome", .. })
    ));
}

#[test]
fn tiny_budget_is_exhausted() {
    let mut cfg = quiet(5, Mode::Full);
    cfg.max_steps = 3;
    let r = run_episode(&cfg).unwrap();
    assert!(!r.success);
    assert_eq!(r.termination, Termination::BudgetExhausted);
    assert_eq!(r.steps, 3);
}

#[test]
fn zero_budget_is_a_config_error() {
    let mut cfg = quiet(1, Mode::Full);
    cfg.max_steps = 0;
    assert!(matches!(run_episode(&cfg), Err(EpisodeError::ZeroBudget)));
}

#[test]
fn open_loop_carries_no_feedback() {
    let r = run_episode(&noisy(5, Mode::NoValidator, 1)).unwrap();
    assert!(!r.success);
    assert!(r.trace.iter().all(|e| e.feedback.is_none()));
    assert_eq!(r.termination, Termination::PlanExhausted);
}

#[test]
fn missing_scene_is_reported() {
    let mut cfg = quiet(1, Mode::Full);
    cfg.scene = root().join("tasks/nope.scene.json");
    assert!(matches!(run_episode(&cfg), Err(EpisodeError::Scene(_))));
}
