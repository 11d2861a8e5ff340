use serde::de::DeserializeOwned;

use super::transport::{ChatMessage, ChatRequest, ChatTransport};
use super::{BackendConfig, LlmError};
use crate::feedback::Feedback;
use crate::graph::{RelationGraph, DEFAULT_CONTAINER_CATEGORIES};
use crate::perception::{perceive, ObservabilityRules, PerceptionBackend, PerceptionError};
use crate::planner::{PlannerBackend, PlannerError, StagePlanBundle};
use crate::predicate::GoalPredicate;
use crate::world::WorldState;

pub const PLANNER_TEMPLATE: &str = include_str!("prompts/planner_v1.txt");
pub const PLANNER_TEMPLATE_VERSION: &str = "planner-v1";
pub const PERCEPTION_TEMPLATE: &str = include_str!("prompts/perception_v1.txt");
pub const PERCEPTION_TEMPLATE_VERSION: &str = "perception-v1";

const SYSTEM: &str = "You are a careful robot task assistant. Answer with JSON only.";

/// Fills `{{name}}` slots.
pub fn render_template(template: &str, slots: &[(&str, &str)]) -> String {
    slots
        .iter()
        .fold(template.to_string(), |t, (k, v)| t.replace(&format!("{{{{{k}}}}}"), v))
}

/// The JSON object inside a reply, tolerating code fences and chatter around it.
pub fn extract_json(reply: &str) -> Option<&str> {
    let start = reply.find('{')?;
    let end = reply.rfind('}')?;
    (end >= start).then(|| &reply[start..=end])
}

fn parse_reply<T: DeserializeOwned>(reply: &str, gate: impl Fn(&T) -> Result<(), String>) -> Result<T, String> {
    let body = extract_json(reply).ok_or_else(|| "reply contains no JSON object".to_string())?;
    let value: T = serde_json::from_str(body).map_err(|e| e.to_string())?;
    gate(&value)?;
    Ok(value)
}

/// Sends `request`; on a schema violation asks once more, quoting the violation.
fn ask<T: DeserializeOwned>(
    transport: &mut dyn ChatTransport,
    mut request: ChatRequest,
    gate: impl Fn(&T) -> Result<(), String>,
) -> Result<T, LlmError> {
    let reply = transport.complete(&request)?;
    let why = match parse_reply(&reply, &gate) {
        Ok(v) => return Ok(v),
        Err(why) => why,
    };
    request.messages.push(ChatMessage::assistant(reply));
    request.messages.push(ChatMessage::user(format!(
        "That reply was rejected: {why}. Reply with one corrected JSON object and nothing else."
    )));
    let reply = transport.complete(&request)?;
    parse_reply(&reply, &gate).map_err(LlmError::Schema)
}

/// Planner backed by a chat-completion model.
pub struct RemotePlanner {
    transport: Box<dyn ChatTransport + Send>,
    pub model: String,
    pub temperature: f64,
}

impl RemotePlanner {
    pub fn new(transport: Box<dyn ChatTransport + Send>, model: impl Into<String>, temperature: f64) -> Self {
        Self {
            transport,
            model: model.into(),
            temperature,
        }
    }

    pub fn from_config(cfg: &BackendConfig) -> Result<Self, LlmError> {
        Ok(Self::new(cfg.transport()?, cfg.model.clone(), cfg.temperature))
    }

    pub fn request(&self, g: &RelationGraph, goal: &GoalPredicate, feedback: Option<&Feedback>) -> ChatRequest {
        let context = serde_json::json!({"graph": g, "goal": goal, "feedback": feedback});
        let fb = feedback.map_or_else(|| "none".to_string(), ToString::to_string);
        let prompt = render_template(
            PLANNER_TEMPLATE,
            &[
                ("graph", &g.canonical_text()),
                ("goal", &goal.to_string()),
                ("feedback", &fb),
                ("context", &context.to_string()),
            ],
        );
        ChatRequest {
            template_version: PLANNER_TEMPLATE_VERSION.into(),
            model: self.model.clone(),
            temperature: self.temperature,
            messages: vec![ChatMessage::system(SYSTEM), ChatMessage::user(prompt)],
        }
    }

    pub fn generate_plan_remote(
        &mut self,
        g: &RelationGraph,
        goal: &GoalPredicate,
        feedback: Option<&Feedback>,
    ) -> Result<StagePlanBundle, LlmError> {
        let request = self.request(g, goal, feedback);
        ask(self.transport.as_mut(), request, |b: &StagePlanBundle| {
            b.check().map_err(|e| e.to_string())
        })
    }
}

fn planner_error(e: LlmError) -> PlannerError {
    match e {
        LlmError::Schema(s) => PlannerError::Malformed(s),
        other => PlannerError::Transport(other.to_string()),
    }
}

impl PlannerBackend for RemotePlanner {
    fn generate(
        &mut self,
        g: &RelationGraph,
        goal: &GoalPredicate,
        feedback: Option<&Feedback>,
    ) -> Result<StagePlanBundle, PlannerError> {
        self.generate_plan_remote(g, goal, feedback).map_err(planner_error)
    }
}

/// Perception backed by a chat-completion model reading the simulator's observation.
pub struct RemotePerception {
    transport: Box<dyn ChatTransport + Send>,
    pub model: String,
    pub temperature: f64,
    pub rules: ObservabilityRules,
}

impl RemotePerception {
    pub fn new(transport: Box<dyn ChatTransport + Send>, model: impl Into<String>, temperature: f64) -> Self {
        Self {
            transport,
            model: model.into(),
            temperature,
            rules: ObservabilityRules::default(),
        }
    }

    pub fn from_config(cfg: &BackendConfig) -> Result<Self, LlmError> {
        Ok(Self::new(cfg.transport()?, cfg.model.clone(), cfg.temperature))
    }

    pub fn request(&self, observation: &RelationGraph) -> ChatRequest {
        let context = serde_json::json!({ "graph": observation });
        let prompt = render_template(
            PERCEPTION_TEMPLATE,
            &[("graph", &observation.canonical_text()), ("context", &context.to_string())],
        );
        ChatRequest {
            template_version: PERCEPTION_TEMPLATE_VERSION.into(),
            model: self.model.clone(),
            temperature: self.temperature,
            messages: vec![ChatMessage::system(SYSTEM), ChatMessage::user(prompt)],
        }
    }
}

impl PerceptionBackend for RemotePerception {
    fn perceive(&mut self, world: &WorldState, timestamp: u64) -> Result<RelationGraph, PerceptionError> {
        let observation = perceive(world, &self.rules, timestamp)?;
        let request = self.request(&observation);
        let mut g: RelationGraph = ask(self.transport.as_mut(), request, |g: &RelationGraph| {
            g.validate(DEFAULT_CONTAINER_CATEGORIES).map_err(|e| e.to_string())
        })
        .map_err(|e| PerceptionError::Backend(e.to_string()))?;
        g.timestamp = timestamp;
        Ok(g)
    }
}
