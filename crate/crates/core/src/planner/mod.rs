//! Dual-stage planning: an optional exploration stage that gathers missing
//! facts, and a completion stage that may wait on placeholders.

mod bundle;
mod memory;
mod symbolic;

use thiserror::Error;

pub use bundle::{BundleError, StagePlanBundle};
pub use memory::{PlannerMemory, Suspect};
pub use symbolic::{
    conjuncts, sufficiency_check, undecided_queries, Capabilities, Sufficiency, SymbolicPlanner, PLACEHOLDER_PREFIX,
    SUSPECT_AFTER,
};

use crate::feedback::Feedback;
use crate::graph::RelationGraph;
use crate::predicate::{GoalPredicate, Truth};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlannerError {
    /// The backend could not be reached or timed out.
    #[error("planner backend unavailable: {0}")]
    Transport(String),
    /// The backend answered with something that is not a valid bundle.
    #[error("planner output rejected: {0}")]
    Malformed(String),
}

/// Anything that turns a percept, a goal and the last feedback into a bundle.
pub trait PlannerBackend {
    fn generate(
        &mut self,
        g: &RelationGraph,
        goal: &GoalPredicate,
        feedback: Option<&Feedback>,
    ) -> Result<StagePlanBundle, PlannerError>;

    /// Episode memory, for backends that keep one.
    fn memory(&self) -> Option<&PlannerMemory> {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResolveError {
    #[error("placeholder `{0}` still needs exploration")]
    Undecided(String),
    #[error("no container satisfies placeholder `{0}`")]
    Unsatisfiable(String),
}

/// Binds every placeholder whose query `belief` decides; ties go to the lowest id.
pub fn resolve_placeholders(bundle: &StagePlanBundle, belief: &RelationGraph) -> Result<StagePlanBundle, ResolveError> {
    let mut out = bundle.clone();
    for (token, query) in &bundle.placeholders {
        match query.identified(belief) {
            Truth::Unknown => return Err(ResolveError::Undecided(token.clone())),
            Truth::False => return Err(ResolveError::Unsatisfiable(token.clone())),
            Truth::True => {
                let id = query.satisfying(belief).remove(0);
                out = out.substitute(token, &id);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::{Place, PrimitiveAction};
    use crate::feedback::{FailureReason, FeedbackDetail, Stage};
    use crate::perception::{perceive, ObservabilityRules};
    use crate::predicate::{ContainerQuery, PlaceSpec, Selector};
    use crate::scene::load_scene;
    use crate::world::WorldState;

    const TASK5: &str = include_str!("../../tasks/task5.scene.json");
    const TASK5_GOAL: &str = include_str!("../../tasks/task5.goal.json");

    fn task5() -> (WorldState, GoalPredicate) {
        (load_scene(TASK5).unwrap(), serde_json::from_str(TASK5_GOAL).unwrap())
    }

    fn see(w: &WorldState) -> RelationGraph {
        perceive(w, &ObservabilityRules::default(), 0).unwrap()
    }

    fn run(w: WorldState, actions: &[PrimitiveAction]) -> WorldState {
        actions.iter().fold(w, |w, a| {
            let (n, out) = w.apply_primitive(a);
            assert!(out.succeeded, "{a}: {:?}", out.refusal_reason);
            n
        })
    }

    #[test]
    fn initial_task5_bundle_explores_both_drawers() {
        let (w, goal) = task5();
        let mut p = SymbolicPlanner::new(Capabilities::FULL, 0);
        let b = p.plan(&see(&w), &goal, None);
        assert!(b.check().is_ok());
        let q = ContainerQuery::contains_only(Some("drawer"), "fruit");
        assert_eq!(
            b.explore_plan.as_deref(),
            Some(&[PrimitiveAction::open("green_drawer"), PrimitiveAction::open("blue_drawer")][..])
        );
        assert_eq!(b.explore_goal, Some(GoalPredicate::Identified { query: q.clone() }));
        assert_eq!(
            b.complete_plan.as_deref(),
            Some(
                &[
                    PrimitiveAction::grasp("banana"),
                    PrimitiveAction::place("banana", Place::Inside("?container_0".into()))
                ][..]
            )
        );
        assert_eq!(
            b.complete_goal,
            Some(GoalPredicate::at(Selector::id("banana"), PlaceSpec::Inside("?container_0".into())))
        );
        assert_eq!(b.placeholders.get("?container_0"), Some(&q));
    }

    #[test]
    fn exploration_resolves_the_placeholder() {
        let (w, goal) = task5();
        let mut p = SymbolicPlanner::new(Capabilities::FULL, 0);
        p.plan(&see(&w), &goal, None);
        let w = run(
            w,
            &[
                PrimitiveAction::open("green_drawer"),
                PrimitiveAction::grasp("cup"),
                PrimitiveAction::place("cup", Place::On("table".into())),
                PrimitiveAction::open("blue_drawer"),
            ],
        );
        let fb = Feedback::yes(Stage::Explore, PrimitiveAction::open("blue_drawer"));
        let b = p.plan(&see(&w), &goal, Some(&fb));
        assert!(b.explore_plan.is_none() && b.explore_goal.is_none());
        assert!(b.placeholders.is_empty());
        assert_eq!(
            b.complete_plan.unwrap(),
            vec![
                PrimitiveAction::grasp("banana"),
                PrimitiveAction::place("banana", Place::Inside("blue_drawer".into()))
            ]
        );

        // Finishing restores both drawers, then signals termination.
        let w = run(
            w,
            &[
                PrimitiveAction::grasp("banana"),
                PrimitiveAction::place("banana", Place::Inside("blue_drawer".into())),
            ],
        );
        let b = p.plan(&see(&w), &goal, None);
        assert_eq!(
            b.complete_plan.unwrap(),
            vec![PrimitiveAction::close("green_drawer"), PrimitiveAction::close("blue_drawer")]
        );
        let w = run(w, &[PrimitiveAction::close("green_drawer"), PrimitiveAction::close("blue_drawer")]);
        assert!(p.plan(&see(&w), &goal, None).is_finished());
    }

    #[test]
    fn sufficiency_examples() {
        let t2 = load_scene(include_str!("../../tasks/task2.scene.json")).unwrap();
        let g2: GoalPredicate = serde_json::from_str(include_str!("../../tasks/task2.goal.json")).unwrap();
        assert_eq!(sufficiency_check(&see(&t2), &g2), Sufficiency::Sufficient);

        let t3 = load_scene(include_str!("../../tasks/task3.scene.json")).unwrap();
        let g3: GoalPredicate = serde_json::from_str(include_str!("../../tasks/task3.goal.json")).unwrap();
        let Sufficiency::Missing(qs) = sufficiency_check(&see(&t3), &g3) else {
            panic!("task 3 needs exploration")
        };
        assert_eq!(qs, vec![ContainerQuery::contains_match(Selector::Category("pepsi_can".into()))]);
        let cands: Vec<_> = qs[0].candidates(&see(&t3)).iter().map(|n| n.id.clone()).collect();
        assert_eq!(cands, vec!["cabinet", "fridge"]);

        assert_eq!(sufficiency_check(&see(&t2), &GoalPredicate::AllOf(vec![])), Sufficiency::Sufficient);
    }

    #[test]
    fn task2_evicts_the_eggplant_first() {
        let w = load_scene(include_str!("../../tasks/task2.scene.json")).unwrap();
        let goal: GoalPredicate = serde_json::from_str(include_str!("../../tasks/task2.goal.json")).unwrap();
        let b = SymbolicPlanner::new(Capabilities::FULL, 0).plan(&see(&w), &goal, None);
        assert_eq!(
            b.complete_plan.unwrap(),
            vec![
                PrimitiveAction::grasp("eggplant"),
                PrimitiveAction::place("eggplant", Place::On("table".into())),
                PrimitiveAction::grasp("bread"),
                PrimitiveAction::place("bread", Place::On("plate".into())),
            ]
        );
    }

    #[test]
    fn satisfied_goal_finishes_immediately() {
        let (w, _) = task5();
        let goal = GoalPredicate::at(Selector::id("cup"), PlaceSpec::On("table".into()));
        assert!(SymbolicPlanner::new(Capabilities::FULL, 0).plan(&see(&w), &goal, None).is_finished());
    }

    #[test]
    fn obstacle_feedback_prepends_clearing() {
        let (w, goal) = task5();
        let mut p = SymbolicPlanner::new(Capabilities::FULL, 0);
        let w = run(w, &[PrimitiveAction::open("green_drawer")]);
        let fb = Feedback::no(
            Stage::Explore,
            FailureReason::ObstacleBlocking,
            FeedbackDetail {
                action: Some(PrimitiveAction::open("blue_drawer")),
                blocker: Some("cup".into()),
                unmet: None,
            },
        );
        let b = p.plan(&see(&w), &goal, Some(&fb));
        assert_eq!(
            b.explore_plan.unwrap(),
            vec![
                PrimitiveAction::grasp("cup"),
                PrimitiveAction::place("cup", Place::On("table".into())),
                PrimitiveAction::open("blue_drawer"),
            ]
        );
    }

    #[test]
    fn resolve_picks_lowest_id_and_reports_undecided() {
        let (w, goal) = task5();
        let mut p = SymbolicPlanner::new(Capabilities::FULL, 0);
        let g = see(&w);
        let b = p.plan(&g, &goal, None);
        assert_eq!(resolve_placeholders(&b, &g), Err(ResolveError::Undecided("?container_0".into())));

        // Put a fruit in the green drawer too: both qualify, lowest id wins.
        let mut w2 = w.clone();
        w2.locations.insert("cable".into(), crate::graph::Location::On("table".into()));
        let w2 = run(w2, &[PrimitiveAction::open("green_drawer")]);
        let mut w2 = w2;
        w2.locations.insert("banana".into(), crate::graph::Location::Inside("green_drawer".into()));
        let w2 = run(w2, &[PrimitiveAction::grasp("cup"), PrimitiveAction::place("cup", Place::On("table".into()))]);
        let w2 = run(w2, &[PrimitiveAction::open("blue_drawer")]);
        let resolved = resolve_placeholders(&b, &see(&w2)).unwrap();
        assert!(resolved.placeholders.is_empty());
        assert_eq!(
            resolved.complete_plan.unwrap()[1],
            PrimitiveAction::place("banana", Place::Inside("blue_drawer".into()))
        );
        assert_eq!(resolve_placeholders(&StagePlanBundle::finished(), &g), Ok(StagePlanBundle::finished()));
    }
}
