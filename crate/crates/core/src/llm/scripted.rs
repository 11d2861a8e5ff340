use serde::Deserialize;

use super::remote::{PERCEPTION_TEMPLATE_VERSION, PLANNER_TEMPLATE_VERSION};
use std::path::Path;

use super::fixture::RecordingTransport;
use super::remote::{RemotePerception, RemotePlanner};
use super::transport::{ChatRequest, ChatTransport};
use super::{BackendConfig, LlmError};
use crate::action::Verb;
use crate::feedback::Feedback;
use crate::orchestrator::{run_episode_with, EpisodeConfig, EpisodeError, EpisodeResult};
use crate::graph::RelationGraph;
use crate::planner::{Capabilities, SymbolicPlanner};
use crate::predicate::GoalPredicate;

/// Deliberate mistakes a scripted responder can make.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Flaw {
    #[default]
    None,
    /// Drops the GRASP that precedes the first PLACE of the completion stage.
    MissingGrasp,
}

/// A stand-in model that answers prompts from their context block, planning
/// with the symbolic planner. Used to produce recorded fixtures.
pub struct ScriptedResponder {
    planner: SymbolicPlanner,
    pub flaw: Flaw,
}

#[derive(Deserialize)]
struct PlannerContext {
    graph: RelationGraph,
    goal: GoalPredicate,
    feedback: Option<Feedback>,
}

#[derive(Deserialize)]
struct PerceptionContext {
    graph: RelationGraph,
}

impl ScriptedResponder {
    pub fn new(seed: u64, flaw: Flaw) -> Self {
        Self {
            planner: SymbolicPlanner::new(Capabilities::FULL, seed),
            flaw,
        }
    }

    fn context(request: &ChatRequest) -> Result<&str, LlmError> {
        let prompt = request
            .messages
            .iter()
            .find(|m| m.role == "user")
            .ok_or_else(|| LlmError::Schema("no user message".into()))?;
        prompt
            .content
            .rsplit_once("Context:\n")
            .map(|(_, c)| c.trim())
            .ok_or_else(|| LlmError::Schema("prompt has no context block".into()))
    }
}

impl ChatTransport for ScriptedResponder {
    fn complete(&mut self, request: &ChatRequest) -> Result<String, LlmError> {
        let ctx = Self::context(request)?;
        let bad = |e: serde_json::Error| LlmError::Schema(e.to_string());
        match request.template_version.as_str() {
            PLANNER_TEMPLATE_VERSION => {
                let c: PlannerContext = serde_json::from_str(ctx).map_err(bad)?;
                let mut bundle = self.planner.plan(&c.graph, &c.goal, c.feedback.as_ref());
                if self.flaw == Flaw::MissingGrasp {
                    if let Some(plan) = bundle.complete_plan.as_mut() {
                        if let Some(i) = plan.iter().position(|a| a.verb == Verb::Place) {
                            if i > 0 && plan[i - 1].verb == Verb::Grasp {
                                plan.remove(i - 1);
                            }
                        }
                    }
                }
                serde_json::to_string(&bundle).map_err(bad)
            }
            PERCEPTION_TEMPLATE_VERSION => {
                let c: PerceptionContext = serde_json::from_str(ctx).map_err(bad)?;
                serde_json::to_string(&c.graph).map_err(bad)
            }
            other => Err(LlmError::Schema(format!("unknown template {other}"))),
        }
    }
}

/// Runs one episode against scripted planner and perception replies, appending
/// every exchange to `path`. The requests match what `BackendConfig::replay`
/// sends, so the file can be replayed with the same episode settings.
pub fn record_episode(cfg: &EpisodeConfig, flaw: Flaw, path: &Path) -> Result<EpisodeResult, EpisodeError> {
    let shape = BackendConfig::replay(path);
    let goal = cfg.load_goal()?;
    let world = cfg.load_world()?;
    let scripted = || RecordingTransport::new(ScriptedResponder::new(cfg.seed, flaw), path);
    let mut planner = RemotePlanner::new(Box::new(scripted()), &shape.model, shape.temperature);
    let mut perception = RemotePerception::new(Box::new(scripted()), &shape.model, shape.temperature);
    Ok(run_episode_with(world, &goal, cfg.loop_config(), &mut planner, &mut perception))
}
