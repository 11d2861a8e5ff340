//! Per-step execution check: did the primitive take effect, and does the
//! sub-goal now hold?
//!
//! The validator sees only the two percepts, never the simulator's outcome.

use crate::action::{Place, PrimitiveAction, Verb};
use crate::feedback::{FailureReason, Feedback, FeedbackDetail, Stage};
use crate::graph::{graph_diff, ContainerState, GraphChangeSet, Location, NodeField, RelationGraph, StateChange};
use crate::predicate::{eval_predicate, is_placeholder, GoalPredicate, Truth};

/// The change set `action` should produce from `before`.
///
/// Only the listed changes are required; content nodes appearing on OPEN or
/// vanishing on CLOSE are tolerated.
pub fn expected_effect(action: &PrimitiveAction, before: &RelationGraph) -> GraphChangeSet {
    let old_location = |id: &str| {
        before
            .node(id)
            .map_or_else(|| Location::Unknown.to_string(), |n| n.location.to_string())
    };
    let change = match action.verb {
        Verb::Grasp => StateChange::new(&action.object, NodeField::Location, old_location(&action.object), Location::Gripper),
        Verb::Place => StateChange::new(
            &action.object,
            NodeField::Location,
            Location::Gripper,
            action.destination.as_ref().map_or(Location::Unknown, Place::as_location),
        ),
        Verb::Open => StateChange::new(&action.object, NodeField::ContainerState, ContainerState::Closed, ContainerState::Open),
        Verb::Close => StateChange::new(&action.object, NodeField::ContainerState, ContainerState::Open, ContainerState::Closed),
    };
    GraphChangeSet {
        state_changes: vec![change],
        ..GraphChangeSet::default()
    }
}

/// Whether every required change of `expected` appears in `actual`.
pub fn effect_matches(expected: &GraphChangeSet, actual: &GraphChangeSet) -> bool {
    expected
        .state_changes
        .iter()
        .all(|e| actual.change_of(&e.id, e.field).is_some_and(|a| a.new == e.new))
}

/// Why `action` could never have worked from `before`, if it could not.
pub fn structural_problem(action: &PrimitiveAction, before: &RelationGraph) -> Option<String> {
    let Some(node) = before.node(&action.object) else {
        return Some(format!("{} is not in the scene", action.object));
    };
    let held = before.held().map(|n| n.id.as_str());
    match action.verb {
        Verb::Grasp => {
            if !node.is_item() {
                return Some(format!("{} cannot be grasped", node.id));
            }
            if let Some(h) = held {
                return Some(format!("gripper already holds {h}"));
            }
        }
        Verb::Place => {
            if held != Some(node.id.as_str()) {
                return Some(format!("gripper does not hold {}", node.id));
            }
            let dst = action.destination.as_ref()?;
            if is_placeholder(dst.target()) {
                return Some(format!("destination {dst} is unresolved"));
            }
            let Some(target) = before.node(dst.target()) else {
                return Some(format!("destination {} is not in the scene", dst.target()));
            };
            match dst {
                Place::Inside(_) if !target.is_container() => return Some(format!("{} is not a container", target.id)),
                Place::Inside(_) if target.container_state == ContainerState::Closed => {
                    return Some(format!("{} is closed", target.id))
                }
                Place::On(_) if !target.is_surface() => return Some(format!("{} is not a surface", target.id)),
                _ => {}
            }
        }
        Verb::Open | Verb::Close => {
            if !node.is_container() {
                return Some(format!("{} is not a container", node.id));
            }
            let want = if action.verb == Verb::Open { ContainerState::Open } else { ContainerState::Closed };
            if node.container_state == want {
                return Some(format!("{} is already {want}", node.id));
            }
            if let Some(h) = held {
                return Some(format!("gripper holds {h}"));
            }
        }
    }
    None
}

/// Container whose front must be clear for `action`.
fn reach_target<'a>(action: &'a PrimitiveAction, before: &'a RelationGraph) -> Option<&'a str> {
    match action.verb {
        Verb::Open | Verb::Close => Some(action.object.as_str()),
        Verb::Grasp => before.node(&action.object).and_then(|n| n.location.container()),
        Verb::Place => None,
    }
}

/// Two-stage check of one executed step.
pub fn validate(
    before: &RelationGraph,
    after: &RelationGraph,
    action: &PrimitiveAction,
    subgoal: &GoalPredicate,
    stage: Stage,
) -> Feedback {
    let diff = graph_diff(before, after);
    let detail = FeedbackDetail {
        action: Some(action.clone()),
        ..FeedbackDetail::default()
    };
    if !effect_matches(&expected_effect(action, before), &diff) {
        if let Some(why) = structural_problem(action, before) {
            return Feedback::no(stage, FailureReason::PlanLogicError, FeedbackDetail { unmet: Some(why), ..detail });
        }
        if !diff.has_node_changes() {
            let blocker = reach_target(action, before)
                .and_then(|t| before.obstacles_for(t).first().map(|n| n.id.clone()));
            if let Some(b) = blocker {
                return Feedback::no(
                    stage,
                    FailureReason::ObstacleBlocking,
                    FeedbackDetail { blocker: Some(b), ..detail },
                );
            }
        }
        return Feedback::no(stage, FailureReason::PrimitiveFailed, detail);
    }
    if eval_predicate(subgoal, after) == Truth::True {
        Feedback::yes(stage, action.clone())
    } else {
        Feedback::no(
            stage,
            FailureReason::SubgoalIncomplete,
            FeedbackDetail { unmet: Some(subgoal.to_string()), ..detail },
        )
    }
}
