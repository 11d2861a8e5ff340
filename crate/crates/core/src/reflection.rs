//! Pre-execution plan check and repair.
//!
//! Three criteria are checked over the exploration and completion stages
//! together, with an abstract gripper and container state carried across the
//! stage boundary:
//!
//! * `a`: every placeholder is covered by an exploration query, and every
//!   undecided candidate of such a query is opened during exploration;
//! * `b`: gripper and container preconditions hold at every step;
//! * `c`: nothing stands in front of an OPEN or GRASP target.
//!
//! Repairs only insert actions; user actions are never removed or reordered.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::action::{Place, PrimitiveAction, Verb};
use crate::feedback::Stage;
use crate::graph::{ContainerState, Location, RelationGraph};
use crate::planner::StagePlanBundle;
use crate::predicate::{is_placeholder, ContainerQuery, GoalPredicate, Truth};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    A,
    B,
    C,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub criterion: Criterion,
    pub description: String,
    pub stage: Stage,
    /// Position of the offending action in the input stage plan.
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairKind {
    Insert,
    Append,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Repair {
    pub kind: RepairKind,
    pub stage: Stage,
    /// Position in the output stage plan.
    pub index: usize,
    pub action: PrimitiveAction,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ReflectionReport {
    pub violations: Vec<Violation>,
    pub repairs: Vec<Repair>,
    pub repaired: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReflectConfig {
    /// Containers left open are closed later by the planner's restoration pass.
    pub restore_deferred: bool,
}

impl Default for ReflectConfig {
    fn default() -> Self {
        Self { restore_deferred: true }
    }
}

struct Pass<'a> {
    g: &'a RelationGraph,
    free: Option<String>,
    held: Option<String>,
    states: BTreeMap<String, ContainerState>,
    locations: BTreeMap<String, Location>,
    moved: BTreeSet<String>,
    opened: Vec<String>,
    stage: Stage,
    index: usize,
    out: Vec<PrimitiveAction>,
    report: ReflectionReport,
    stuck: bool,
}

impl<'a> Pass<'a> {
    fn new(g: &'a RelationGraph) -> Self {
        Self {
            g,
            free: g.free_surface().map(|n| n.id.clone()),
            held: g.held().map(|n| n.id.clone()),
            states: g
                .nodes
                .values()
                .filter(|n| n.is_container())
                .map(|n| (n.id.clone(), n.container_state))
                .collect(),
            locations: g.nodes.values().map(|n| (n.id.clone(), n.location.clone())).collect(),
            moved: BTreeSet::new(),
            opened: Vec::new(),
            stage: Stage::Explore,
            index: 0,
            out: Vec::new(),
            report: ReflectionReport::default(),
            stuck: false,
        }
    }

    fn violation(&mut self, criterion: Criterion, description: String) {
        self.report.violations.push(Violation {
            criterion,
            description,
            stage: self.stage,
            index: self.index,
        });
    }

    fn insert(&mut self, criterion: Criterion, why: String, action: PrimitiveAction) {
        self.violation(criterion, why);
        self.prepare(&action);
        self.report.repairs.push(Repair {
            kind: RepairKind::Insert,
            stage: self.stage,
            index: self.out.len(),
            action: action.clone(),
        });
        self.push(action);
    }

    fn push(&mut self, a: PrimitiveAction) {
        match a.verb {
            Verb::Grasp => {
                self.held = Some(a.object.clone());
                self.locations.insert(a.object.clone(), Location::Gripper);
                self.moved.insert(a.object.clone());
            }
            Verb::Place => {
                if self.held.as_deref() == Some(a.object.as_str()) {
                    self.held = None;
                }
                if let Some(d) = &a.destination {
                    self.locations.insert(a.object.clone(), d.as_location());
                }
                self.moved.insert(a.object.clone());
            }
            Verb::Open => {
                self.states.insert(a.object.clone(), ContainerState::Open);
                if !self.opened.contains(&a.object) {
                    self.opened.push(a.object.clone());
                }
            }
            Verb::Close => {
                self.states.insert(a.object.clone(), ContainerState::Closed);
                self.opened.retain(|c| c != &a.object);
            }
        }
        self.out.push(a);
    }

    fn is_closed(&self, c: &str) -> bool {
        self.states.get(c) == Some(&ContainerState::Closed)
    }

    fn empty_gripper(&mut self, before: &PrimitiveAction) {
        let Some(h) = self.held.clone() else { return };
        if before.verb == Verb::Place && before.object == h {
            return;
        }
        let Some(free) = self.free.clone() else {
            self.violation(Criterion::B, format!("gripper holds {h} before {before} and there is no free surface"));
            self.stuck = true;
            return;
        };
        self.insert(
            Criterion::B,
            format!("gripper holds {h} before {before}"),
            PrimitiveAction::place(h, Place::On(free)),
        );
    }

    fn clear_front_of(&mut self, target: &str, before: &PrimitiveAction) {
        let blockers: Vec<String> = self
            .g
            .obstacles_for(target)
            .into_iter()
            .map(|n| n.id.clone())
            .filter(|id| !self.moved.contains(id))
            .collect();
        for b in blockers {
            let Some(free) = self.free.clone() else {
                self.violation(Criterion::C, format!("{b} blocks {target} and there is no free surface"));
                self.stuck = true;
                continue;
            };
            self.empty_gripper(&PrimitiveAction::grasp(b.clone()));
            self.report.violations.push(Violation {
                criterion: Criterion::C,
                description: format!("{b} stands in front of {target} before {before}"),
                stage: self.stage,
                index: self.index,
            });
            for a in [PrimitiveAction::grasp(b.clone()), PrimitiveAction::place(b.clone(), Place::On(free))] {
                self.report.repairs.push(Repair {
                    kind: RepairKind::Insert,
                    stage: self.stage,
                    index: self.out.len(),
                    action: a.clone(),
                });
                self.push(a);
            }
        }
    }

    fn open_if_closed(&mut self, c: &str, before: &PrimitiveAction) {
        if self.is_closed(c) {
            self.insert(Criterion::B, format!("{c} is closed before {before}"), PrimitiveAction::open(c));
        }
    }

    /// Inserts whatever `a` needs to be executable from the current abstract state.
    fn prepare(&mut self, a: &PrimitiveAction) {
        match a.verb {
            Verb::Grasp => {
                if self.held.as_deref() == Some(a.object.as_str()) {
                    return;
                }
                self.empty_gripper(a);
                if let Some(Location::Inside(c)) = self.locations.get(&a.object).cloned() {
                    self.open_if_closed(&c, a);
                    self.clear_front_of(&c, a);
                }
            }
            Verb::Open => {
                self.empty_gripper(a);
                self.clear_front_of(&a.object, a);
            }
            Verb::Close => self.empty_gripper(a),
            Verb::Place => {
                let dst_closed = match &a.destination {
                    Some(Place::Inside(d)) if !is_placeholder(d) => self.is_closed(d).then(|| d.clone()),
                    _ => None,
                };
                let holding = self.held.as_deref() == Some(a.object.as_str());
                if holding && dst_closed.is_none() {
                    return;
                }
                if let Some(d) = dst_closed {
                    if holding {
                        let why = format!("{d} is closed while {} is held", a.object);
                        self.violation(Criterion::B, why);
                    }
                    self.empty_gripper(&PrimitiveAction::open(d.clone()));
                    self.open_if_closed(&d, a);
                }
                if self.held.as_deref() != Some(a.object.as_str()) {
                    self.insert(
                        Criterion::B,
                        format!("{a} without a preceding GRASP({})", a.object),
                        PrimitiveAction::grasp(a.object.clone()),
                    );
                }
            }
        }
    }

    fn run_stage(&mut self, stage: Stage, plan: &[PrimitiveAction]) -> Vec<PrimitiveAction> {
        self.stage = stage;
        self.out = Vec::new();
        for (i, a) in plan.iter().enumerate() {
            self.index = i;
            self.prepare(a);
            self.push(a.clone());
        }
        std::mem::take(&mut self.out)
    }
}

fn goal_queries(goal: &Option<GoalPredicate>) -> Vec<ContainerQuery> {
    goal.as_ref().map(GoalPredicate::queries).unwrap_or_default()
}

/// Criterion `a`: placeholders are covered and exploration can decide its queries.
fn check_stage_goals(bundle: &mut StagePlanBundle, g: &RelationGraph, report: &mut ReflectionReport) -> bool {
    let mut ok = true;
    let mut explored = goal_queries(&bundle.explore_goal);
    for token in bundle.placeholder_tokens() {
        let Some(q) = bundle.placeholders.get(&token).cloned() else {
            report.violations.push(Violation {
                criterion: Criterion::A,
                description: format!("placeholder {token} has no query"),
                stage: Stage::Complete,
                index: 0,
            });
            ok = false;
            continue;
        };
        if explored.contains(&q) {
            continue;
        }
        report.violations.push(Violation {
            criterion: Criterion::A,
            description: format!("placeholder {token} is not decided by the exploration goal"),
            stage: Stage::Explore,
            index: 0,
        });
        let goal = GoalPredicate::Identified { query: q.clone() };
        bundle.explore_goal = Some(match bundle.explore_goal.take() {
            None => goal,
            Some(GoalPredicate::AllOf(mut ps)) => {
                ps.push(goal);
                GoalPredicate::AllOf(ps)
            }
            Some(other) => GoalPredicate::AllOf(vec![other, goal]),
        });
        bundle.explore_plan.get_or_insert_with(Vec::new);
        explored.push(q);
    }
    for q in &explored {
        let cands = q.candidates(g);
        if cands.is_empty() || q.identified(g) == Truth::False {
            report.violations.push(Violation {
                criterion: Criterion::A,
                description: format!("no container can satisfy {q}"),
                stage: Stage::Explore,
                index: 0,
            });
            ok = false;
            continue;
        }
        let plan = bundle.explore_plan.get_or_insert_with(Vec::new);
        for c in cands {
            let open = PrimitiveAction::open(c.id.clone());
            if q.holds_for(c, g) == Truth::Unknown && !plan.contains(&open) {
                report.violations.push(Violation {
                    criterion: Criterion::A,
                    description: format!("exploration never opens candidate {} of {q}", c.id),
                    stage: Stage::Explore,
                    index: plan.len(),
                });
                report.repairs.push(Repair {
                    kind: RepairKind::Append,
                    stage: Stage::Explore,
                    index: plan.len(),
                    action: open.clone(),
                });
                plan.push(open);
            }
        }
    }
    ok
}

/// Checks and repairs `bundle` against the percept `g`, deferring closes to restoration.
pub fn reflect(bundle: &StagePlanBundle, g: &RelationGraph) -> (StagePlanBundle, ReflectionReport) {
    reflect_with(bundle, g, ReflectConfig::default())
}

pub fn reflect_with(
    bundle: &StagePlanBundle,
    g: &RelationGraph,
    cfg: ReflectConfig,
) -> (StagePlanBundle, ReflectionReport) {
    if bundle.is_finished() {
        return (bundle.clone(), ReflectionReport { repaired: true, ..Default::default() });
    }
    let mut out = bundle.clone();
    let mut report = ReflectionReport::default();
    let decidable = check_stage_goals(&mut out, g, &mut report);

    let mut pass = Pass::new(g);
    pass.report = report;
    if let Some(plan) = out.explore_plan.take() {
        out.explore_plan = Some(pass.run_stage(Stage::Explore, &plan));
    }
    if let Some(plan) = out.complete_plan.take() {
        let mut repaired = pass.run_stage(Stage::Complete, &plan);
        if !cfg.restore_deferred && !pass.opened.is_empty() {
            pass.stage = Stage::Complete;
            pass.index = plan.len();
            pass.out = std::mem::take(&mut repaired);
            for c in pass.opened.clone() {
                let close = PrimitiveAction::close(c.clone());
                pass.violation(Criterion::B, format!("{c} is opened but never closed"));
                pass.prepare(&close);
                pass.report.repairs.push(Repair {
                    kind: RepairKind::Append,
                    stage: Stage::Complete,
                    index: pass.out.len(),
                    action: close.clone(),
                });
                pass.push(close);
            }
            repaired = std::mem::take(&mut pass.out);
        }
        out.complete_plan = Some(repaired);
    }
    let mut report = pass.report;
    report.repaired = decidable && !pass.stuck;
    (out, report)
}
