use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{Place, PrimitiveAction};
use crate::predicate::{is_placeholder, ContainerQuery, GoalPredicate, PlaceSpec};

/// Planner output: an optional exploration stage and an optional completion stage.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StagePlanBundle {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explore_plan: Option<Vec<PrimitiveAction>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explore_goal: Option<GoalPredicate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complete_plan: Option<Vec<PrimitiveAction>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complete_goal: Option<GoalPredicate>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub placeholders: BTreeMap<String, ContainerQuery>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BundleError {
    #[error("exploration plan and goal must be present together")]
    ExploreMismatch,
    #[error("completion plan and goal must be present together")]
    CompleteMismatch,
    #[error("placeholder `{0}` has no query")]
    UndeclaredPlaceholder(String),
    #[error("malformed action: {0}")]
    Action(#[from] crate::action::ActionError),
}

impl StagePlanBundle {
    /// The termination signal.
    pub fn finished() -> Self {
        Self::default()
    }

    pub fn is_finished(&self) -> bool {
        self.explore_plan.is_none()
            && self.explore_goal.is_none()
            && self.complete_plan.is_none()
            && self.complete_goal.is_none()
    }

    pub fn completion(plan: Vec<PrimitiveAction>, goal: GoalPredicate) -> Self {
        Self {
            complete_plan: Some(plan),
            complete_goal: Some(goal),
            ..Self::default()
        }
    }

    pub fn has_exploration(&self) -> bool {
        self.explore_plan.as_ref().is_some_and(|p| !p.is_empty())
    }

    /// Placeholder tokens used by the completion stage.
    pub fn placeholder_tokens(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let mut push = |t: &str| {
            if is_placeholder(t) && !out.iter().any(|o| o == t) {
                out.push(t.to_string());
            }
        };
        for a in self.complete_plan.iter().flatten() {
            push(&a.object);
            if let Some(d) = &a.destination {
                push(d.target());
            }
        }
        if let Some(g) = &self.complete_goal {
            for t in g.placeholders() {
                push(&t);
            }
        }
        out
    }

    pub fn check(&self) -> Result<(), BundleError> {
        if self.explore_plan.is_some() != self.explore_goal.is_some() {
            return Err(BundleError::ExploreMismatch);
        }
        if self.complete_plan.is_some() != self.complete_goal.is_some() {
            return Err(BundleError::CompleteMismatch);
        }
        for a in self.explore_plan.iter().chain(self.complete_plan.iter()).flatten() {
            a.check_arity()?;
        }
        for t in self.placeholder_tokens() {
            if !self.placeholders.contains_key(&t) {
                return Err(BundleError::UndeclaredPlaceholder(t));
            }
        }
        Ok(())
    }

    /// Replaces `token` with `id` throughout the completion stage and drops its entry.
    pub fn substitute(&self, token: &str, id: &str) -> StagePlanBundle {
        let swap = |s: &str| if s == token { id.to_string() } else { s.to_string() };
        let mut out = self.clone();
        if let Some(plan) = out.complete_plan.as_mut() {
            for a in plan.iter_mut() {
                a.object = swap(&a.object);
                a.destination = a.destination.as_ref().map(|d| match d {
                    Place::On(s) => Place::On(swap(s)),
                    Place::Inside(s) => Place::Inside(swap(s)),
                });
            }
        }
        out.complete_goal = out.complete_goal.as_ref().map(|g| {
            g.map_places(&|p| match p {
                PlaceSpec::Inside(s) => PlaceSpec::Inside(swap(s)),
                other => other.clone(),
            })
        });
        out.placeholders.remove(token);
        out
    }

    /// Stable rendering used in traces and prompts.
    pub fn canonical_text(&self) -> String {
        if self.is_finished() {
            return "bundle finished\n".to_string();
        }
        let mut out = String::from("bundle\n");
        let mut stage = |name: &str, plan: &Option<Vec<PrimitiveAction>>, goal: &Option<GoalPredicate>| {
            if let (Some(plan), Some(goal)) = (plan, goal) {
                let _ = writeln!(out, "{name}_goal {goal}");
                for (i, a) in plan.iter().enumerate() {
                    let _ = writeln!(out, "{name}[{i}] {a}");
                }
            }
        };
        stage("explore", &self.explore_plan, &self.explore_goal);
        stage("complete", &self.complete_plan, &self.complete_goal);
        for (t, q) in &self.placeholders {
            let _ = writeln!(out, "placeholder {t} = {q}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predicate::Selector;

    fn drawer_bundle() -> StagePlanBundle {
        let q = ContainerQuery::contains_only(Some("drawer"), "fruit");
        StagePlanBundle {
            explore_plan: Some(vec![PrimitiveAction::open("green_drawer"), PrimitiveAction::open("blue_drawer")]),
            explore_goal: Some(GoalPredicate::Identified { query: q.clone() }),
            complete_plan: Some(vec![
                PrimitiveAction::grasp("banana"),
                PrimitiveAction::place("banana", Place::Inside("?container_0".into())),
            ]),
            complete_goal: Some(GoalPredicate::at(
                Selector::id("banana"),
                PlaceSpec::Inside("?container_0".into()),
            )),
            placeholders: BTreeMap::from([("?container_0".to_string(), q)]),
        }
    }

    #[test]
    fn invariants() {
        assert!(StagePlanBundle::finished().is_finished());
        assert!(drawer_bundle().check().is_ok());
        let mut b = drawer_bundle();
        b.explore_goal = None;
        assert_eq!(b.check(), Err(BundleError::ExploreMismatch));
        let mut b = drawer_bundle();
        b.placeholders.clear();
        assert_eq!(b.check(), Err(BundleError::UndeclaredPlaceholder("?container_0".into())));
    }

    #[test]
    fn substitution_removes_every_token() {
        let b = drawer_bundle().substitute("?container_0", "blue_drawer");
        assert!(b.placeholder_tokens().is_empty());
        assert!(b.placeholders.is_empty());
        assert_eq!(
            b.complete_plan.unwrap()[1],
            PrimitiveAction::place("banana", Place::Inside("blue_drawer".into()))
        );
    }

    #[test]
    fn canonical_text_golden() {
        let text = drawer_bundle().canonical_text();
        let expected = "bundle\n\
            explore_goal identified(drawer containing only fruit)\n\
            explore[0] OPEN(green_drawer)\n\
            explore[1] OPEN(blue_drawer)\n\
            complete_goal at(banana, inside(?container_0))\n\
            complete[0] GRASP(banana)\n\
            complete[1] PLACE(banana -> inside(?container_0))\n\
            placeholder ?container_0 = drawer containing only fruit\n";
        assert_eq!(text, expected);
    }
}
