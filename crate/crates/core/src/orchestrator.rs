//! The closed perceive, plan, execute, validate loop.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::PrimitiveAction;
use crate::feedback::{Feedback, Stage};
use crate::graph::RelationGraph;
use crate::perception::{ground_truth, PerceptionBackend, PerceptionError, SimPerception};
use crate::planner::{Capabilities, PlannerBackend, PlannerError, StagePlanBundle, SymbolicPlanner};
use crate::predicate::{eval_predicate, GoalPredicate};
use crate::reflection::{reflect, ReflectionReport};
use crate::scene::{load_scene_file, SceneError};
use crate::validator::validate;
use crate::world::{NoiseMap, PrimitiveOutcome, WorldState};

pub const DEFAULT_MAX_STEPS: u32 = 60;

/// Which parts of the loop are switched off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Full,
    NoGraph,
    NoReflection,
    NoValidator,
    OpenLoop,
    SingleStage,
}

impl Mode {
    pub const ALL: [Mode; 6] = [
        Mode::Full,
        Mode::NoGraph,
        Mode::NoReflection,
        Mode::NoValidator,
        Mode::OpenLoop,
        Mode::SingleStage,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::NoGraph => "no_graph",
            Mode::NoReflection => "no_reflection",
            Mode::NoValidator => "no_validator",
            Mode::OpenLoop => "open_loop",
            Mode::SingleStage => "single_stage",
        }
    }

    pub fn capabilities(self) -> Capabilities {
        match self {
            Mode::NoGraph => Capabilities {
                relational: false,
                ..Capabilities::FULL
            },
            Mode::SingleStage => Capabilities {
                explore: false,
                relational: false,
                reason_aware: false,
                restore: true,
            },
            _ => Capabilities::FULL,
        }
    }

    pub fn reflects(self) -> bool {
        !matches!(self, Mode::NoReflection | Mode::SingleStage)
    }

    pub fn closed_loop(self) -> bool {
        !matches!(self, Mode::NoValidator | Mode::OpenLoop)
    }

    pub fn planner_sees_edges(self) -> bool {
        !matches!(self, Mode::NoGraph | Mode::SingleStage)
    }

    pub fn validator_sees_edges(self) -> bool {
        self != Mode::NoGraph
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown mode `{0}` (expected one of full, no_graph, no_reflection, no_validator, open_loop, single_stage)")]
pub struct ModeParseError(pub String);

impl FromStr for Mode {
    type Err = ModeParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| ModeParseError(s.to_string()))
    }
}

fn view(g: &RelationGraph, edges: bool) -> RelationGraph {
    if edges {
        g.clone()
    } else {
        g.without_edges()
    }
}

/// Loop settings independent of where scene, goal and backends come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub seed: u64,
    pub max_steps: u32,
    pub mode: Mode,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            max_steps: DEFAULT_MAX_STEPS,
            mode: Mode::Full,
        }
    }
}

/// One executed step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub step: u32,
    pub graph_before: RelationGraph,
    /// Planner output, when the planner was called this step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bundle: Option<StagePlanBundle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reflection: Option<ReflectionReport>,
    pub stage: Stage,
    pub action: PrimitiveAction,
    pub subgoal: GoalPredicate,
    pub outcome: PrimitiveOutcome,
    pub graph_after: RelationGraph,
    /// Absent when the validator is switched off.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<Feedback>,
    /// Wall-clock time of the step; not part of the canonical record.
    #[serde(skip)]
    pub duration: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// The planner signalled completion.
    Finished,
    /// The step budget ran out.
    BudgetExhausted,
    /// The planner had nothing executable left while the goal was unmet.
    Stalled,
    /// An open-loop plan ran to its end.
    PlanExhausted,
    /// A backend failed; not a task failure.
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub success: bool,
    pub steps: u32,
    pub termination: Termination,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abort_reason: Option<String>,
    pub trace: Vec<TraceEvent>,
}

impl EpisodeResult {
    pub fn aborted(&self) -> bool {
        self.termination == Termination::Aborted
    }
}

fn goal_met(world: &WorldState, goal: &GoalPredicate) -> bool {
    ground_truth(world, 0).is_ok_and(|g| eval_predicate(goal, &g).is_true())
}

/// Picks the next step of a reflected bundle.
pub fn choose(bundle: &StagePlanBundle) -> Option<(Stage, PrimitiveAction, GoalPredicate)> {
    if let (Some(plan), Some(goal)) = (&bundle.explore_plan, &bundle.explore_goal) {
        if let Some(first) = plan.first() {
            return Some((Stage::Explore, first.clone(), goal.clone()));
        }
    }
    match (&bundle.complete_plan, &bundle.complete_goal) {
        (Some(plan), Some(goal)) => plan
            .first()
            .filter(|a| !a.has_placeholder())
            .map(|a| (Stage::Complete, a.clone(), goal.clone())),
        _ => None,
    }
}

/// Binds each placeholder to its first candidate in declaration order.
pub fn guess_placeholders(bundle: &StagePlanBundle, g: &RelationGraph) -> StagePlanBundle {
    let mut out = bundle.clone();
    for (token, q) in &bundle.placeholders {
        if let Some(first) = q.candidates(g).first() {
            out = out.substitute(token, &first.id);
        }
    }
    out
}

struct Run<'a> {
    cfg: LoopConfig,
    goal: &'a GoalPredicate,
    world: WorldState,
    trace: Vec<TraceEvent>,
}

impl Run<'_> {
    fn finish(self, success: bool, termination: Termination, abort_reason: Option<String>) -> EpisodeResult {
        EpisodeResult {
            success,
            steps: self.trace.len() as u32,
            termination,
            abort_reason,
            trace: self.trace,
        }
    }

    fn abort(self, why: String) -> EpisodeResult {
        self.finish(false, Termination::Aborted, Some(why))
    }
}

/// Runs one episode against caller-supplied backends.
///
/// `world` should already carry the episode seed and noise.
pub fn run_episode_with(
    world: WorldState,
    goal: &GoalPredicate,
    cfg: LoopConfig,
    planner: &mut dyn PlannerBackend,
    perception: &mut dyn PerceptionBackend,
) -> EpisodeResult {
    let run = Run {
        cfg,
        goal,
        world,
        trace: Vec::new(),
    };
    if cfg.mode.closed_loop() {
        closed_loop(run, planner, perception)
    } else {
        open_loop(run, planner, perception)
    }
}

fn closed_loop(
    mut run: Run<'_>,
    planner: &mut dyn PlannerBackend,
    perception: &mut dyn PerceptionBackend,
) -> EpisodeResult {
    let mode = run.cfg.mode;
    let mut g = match perception.perceive(&run.world, 0) {
        Ok(g) => g,
        Err(e) => return run.abort(e.to_string()),
    };
    let mut feedback: Option<Feedback> = None;
    for step in 0..run.cfg.max_steps {
        let started = Instant::now();
        let planner_view = view(&g, mode.planner_sees_edges());
        let bundle = match planner.generate(&planner_view, run.goal, feedback.as_ref()) {
            Ok(b) => b,
            Err(e) => return run.abort(e.to_string()),
        };
        if let Err(e) = bundle.check() {
            return run.abort(format!("invalid bundle: {e}"));
        }
        let (exec, report) = if mode.reflects() {
            let (b, r) = reflect(&bundle, &planner_view);
            (b, Some(r))
        } else {
            (bundle.clone(), None)
        };
        if exec.is_finished() {
            let ok = goal_met(&run.world, run.goal);
            return run.finish(ok, Termination::Finished, None);
        }
        let Some((stage, action, subgoal)) = choose(&exec) else {
            return run.finish(false, Termination::Stalled, None);
        };
        let (next, outcome) = run.world.apply_primitive(&action);
        let after = match perception.perceive(&next, step as u64 + 1) {
            Ok(a) => a,
            Err(e) => return run.abort(e.to_string()),
        };
        let edges = mode.validator_sees_edges();
        let fb = validate(&view(&g, edges), &view(&after, edges), &action, &subgoal, stage);
        run.trace.push(TraceEvent {
            step,
            graph_before: g,
            bundle: Some(bundle),
            reflection: report,
            stage,
            action,
            subgoal,
            outcome,
            graph_after: after.clone(),
            feedback: Some(fb.clone()),
            duration: started.elapsed(),
        });
        feedback = Some(fb);
        g = after;
        run.world = next;
    }
    run.finish(false, Termination::BudgetExhausted, None)
}

fn open_loop(
    mut run: Run<'_>,
    planner: &mut dyn PlannerBackend,
    perception: &mut dyn PerceptionBackend,
) -> EpisodeResult {
    let started = Instant::now();
    let g = match perception.perceive(&run.world, 0) {
        Ok(g) => g,
        Err(e) => return run.abort(e.to_string()),
    };
    let bundle = match planner.generate(&g, run.goal, None) {
        Ok(b) => b,
        Err(e) => return run.abort(e.to_string()),
    };
    if let Err(e) = bundle.check() {
        return run.abort(format!("invalid bundle: {e}"));
    }
    if bundle.is_finished() {
        let ok = goal_met(&run.world, run.goal);
        return run.finish(ok, Termination::Finished, None);
    }
    let (reflected, report) = reflect(&bundle, &g);
    let exec = guess_placeholders(&reflected, &g);
    let mut steps: Vec<(Stage, PrimitiveAction, GoalPredicate)> = Vec::new();
    if let (Some(p), Some(goal)) = (&exec.explore_plan, &exec.explore_goal) {
        steps.extend(p.iter().map(|a| (Stage::Explore, a.clone(), goal.clone())));
    }
    if let (Some(p), Some(goal)) = (&exec.complete_plan, &exec.complete_goal) {
        steps.extend(p.iter().map(|a| (Stage::Complete, a.clone(), goal.clone())));
    }
    let mut before = g;
    let mut pending = Some((bundle, report));
    for (i, (stage, action, subgoal)) in steps.into_iter().enumerate() {
        if i as u32 >= run.cfg.max_steps {
            return run.finish(false, Termination::BudgetExhausted, None);
        }
        let t0 = if i == 0 { started } else { Instant::now() };
        let (next, outcome) = run.world.apply_primitive(&action);
        let after = match perception.perceive(&next, i as u64 + 1) {
            Ok(a) => a,
            Err(e) => return run.abort(e.to_string()),
        };
        let (bundle, reflection) = pending.take().map_or((None, None), |(b, r)| (Some(b), Some(r)));
        run.trace.push(TraceEvent {
            step: i as u32,
            graph_before: before,
            bundle,
            reflection,
            stage,
            action,
            subgoal,
            outcome,
            graph_after: after.clone(),
            feedback: None,
            duration: t0.elapsed(),
        });
        before = after;
        run.world = next;
    }
    let ok = goal_met(&run.world, run.goal);
    run.finish(ok, Termination::PlanExhausted, None)
}

/// Where planning and perception come from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendChoice {
    #[default]
    Symbolic,
    External(crate::llm::BackendConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub scene: PathBuf,
    pub goal: PathBuf,
    pub seed: u64,
    pub max_steps: u32,
    pub mode: Mode,
    /// Overrides the scene's failure probabilities when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseMap>,
    #[serde(default)]
    pub backend: BackendChoice,
}

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error("cannot read goal {0}: {1}")]
    Goal(PathBuf, String),
    #[error("max_steps must be at least 1")]
    ZeroBudget,
    #[error(transparent)]
    Backend(#[from] crate::llm::LlmError),
}

impl EpisodeConfig {
    pub fn new(scene: impl Into<PathBuf>, goal: impl Into<PathBuf>) -> Self {
        Self {
            scene: scene.into(),
            goal: goal.into(),
            seed: 0,
            max_steps: DEFAULT_MAX_STEPS,
            mode: Mode::Full,
            noise: None,
            backend: BackendChoice::Symbolic,
        }
    }

    /// The goal file that sits next to `scene`: `taskN.scene.json` pairs with `taskN.goal.json`.
    pub fn for_scene(scene: impl AsRef<Path>) -> Self {
        let scene = scene.as_ref();
        let name = scene.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let goal = match name.strip_suffix(".scene.json") {
            Some(stem) => scene.with_file_name(format!("{stem}.goal.json")),
            None => scene.with_extension("goal.json"),
        };
        Self::new(scene, goal)
    }

    pub fn loop_config(&self) -> LoopConfig {
        LoopConfig {
            seed: self.seed,
            max_steps: self.max_steps,
            mode: self.mode,
        }
    }

    pub fn load_goal(&self) -> Result<GoalPredicate, EpisodeError> {
        let text = std::fs::read_to_string(&self.goal).map_err(|e| EpisodeError::Goal(self.goal.clone(), e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| EpisodeError::Goal(self.goal.clone(), e.to_string()))
    }

    /// Initial world with this episode's seed and noise applied.
    pub fn load_world(&self) -> Result<WorldState, EpisodeError> {
        let mut world = load_scene_file(&self.scene)?.with_seed(self.seed);
        if let Some(noise) = &self.noise {
            world = world.inject_noise(noise).map_err(SceneError::from)?;
        }
        Ok(world)
    }

    pub fn planner(&self) -> Result<Box<dyn PlannerBackend + Send>, EpisodeError> {
        let symbolic = SymbolicPlanner::new(self.mode.capabilities(), self.seed);
        Ok(match &self.backend {
            BackendChoice::Symbolic => Box::new(symbolic),
            BackendChoice::External(cfg) => Box::new(crate::llm::RemotePlanner::from_config(cfg)?),
        })
    }

    pub fn perception(&self) -> Result<Box<dyn PerceptionBackend + Send>, EpisodeError> {
        Ok(match &self.backend {
            BackendChoice::Symbolic => Box::new(SimPerception::default()),
            BackendChoice::External(cfg) => Box::new(crate::llm::RemotePerception::from_config(cfg)?),
        })
    }
}

/// Loads scene, goal and backends, then runs the episode.
pub fn run_episode(cfg: &EpisodeConfig) -> Result<EpisodeResult, EpisodeError> {
    if cfg.max_steps == 0 {
        return Err(EpisodeError::ZeroBudget);
    }
    let goal = cfg.load_goal()?;
    let world = cfg.load_world()?;
    let mut planner = cfg.planner()?;
    let mut perception = cfg.perception()?;
    Ok(run_episode_with(world, &goal, cfg.loop_config(), planner.as_mut(), perception.as_mut()))
}

/// Canonical line-delimited rendering of a trace.
pub fn write_trace(events: &[TraceEvent], mut out: impl Write) -> std::io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn trace_bytes(events: &[TraceEvent]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_trace(events, &mut buf).expect("writing to memory");
    buf
}

pub fn read_trace(input: impl BufRead) -> Result<Vec<TraceEvent>, serde_json::Error> {
    input
        .lines()
        .map(|l| l.map_err(serde_json::Error::io))
        .filter(|l| !matches!(l, Ok(s) if s.trim().is_empty()))
        .map(|l| serde_json::from_str(&l?))
        .collect()
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("step {step}: recorded {what} differs from replay")]
    Mismatch { step: u32, what: &'static str },
    #[error("step {0}: replay could not run: {1}")]
    Failed(u32, String),
}

fn same<T: Serialize>(a: &T, b: &T) -> bool {
    serde_json::to_vec(a).ok() == serde_json::to_vec(b).ok()
}

/// Re-runs `trace` through simulation, perception, planning and validation and
/// checks every recorded graph, bundle, outcome and feedback byte for byte.
pub fn replay(
    world: WorldState,
    goal: &GoalPredicate,
    cfg: LoopConfig,
    planner: &mut dyn PlannerBackend,
    perception: &mut dyn PerceptionBackend,
    trace: &[TraceEvent],
) -> Result<(), ReplayError> {
    let mode = cfg.mode;
    let mut world = world;
    let mut feedback: Option<Feedback> = None;
    let mismatch = |step, what| Err(ReplayError::Mismatch { step, what });
    for e in trace {
        let g = perception
            .perceive(&world, e.step as u64)
            .map_err(|err: PerceptionError| ReplayError::Failed(e.step, err.to_string()))?;
        if !same(&g, &e.graph_before) {
            return mismatch(e.step, "graph_before");
        }
        if let Some(recorded) = &e.bundle {
            let edges = !mode.closed_loop() || mode.planner_sees_edges();
            let b = planner
                .generate(&view(&g, edges), goal, feedback.as_ref())
                .map_err(|err: PlannerError| ReplayError::Failed(e.step, err.to_string()))?;
            if !same(&b, recorded) {
                return mismatch(e.step, "bundle");
            }
        }
        let (next, outcome) = world.apply_primitive(&e.action);
        if outcome != e.outcome {
            return mismatch(e.step, "outcome");
        }
        let after = perception
            .perceive(&next, e.step as u64 + 1)
            .map_err(|err| ReplayError::Failed(e.step, err.to_string()))?;
        if !same(&after, &e.graph_after) {
            return mismatch(e.step, "graph_after");
        }
        if let Some(recorded) = &e.feedback {
            let edges = mode.validator_sees_edges();
            let fb = validate(
                &view(&e.graph_before, edges),
                &view(&e.graph_after, edges),
                &e.action,
                &e.subgoal,
                e.stage,
            );
            if !same(&fb, recorded) {
                return mismatch(e.step, "feedback");
            }
        }
        feedback = e.feedback.clone();
        world = next;
    }
    Ok(())
}

/// Replays a trace recorded from `cfg` with freshly built backends.
pub fn replay_episode(cfg: &EpisodeConfig, trace: &[TraceEvent]) -> Result<(), ReplayError> {
    let setup = || -> Result<_, EpisodeError> { Ok((cfg.load_goal()?, cfg.load_world()?, cfg.planner()?, cfg.perception()?)) };
    let (goal, world, mut planner, mut perception) = setup().map_err(|e| ReplayError::Failed(0, e.to_string()))?;
    replay(world, &goal, cfg.loop_config(), planner.as_mut(), perception.as_mut(), trace)
}
