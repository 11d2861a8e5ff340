//! Per-step verdicts passed from the validator back to the planner.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::action::PrimitiveAction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Yes,
    No,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Explore,
    Complete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    PrimitiveFailed,
    SubgoalIncomplete,
    PlanLogicError,
    ObstacleBlocking,
    None,
}

impl FailureReason {
    pub fn as_str(self) -> &'static str {
        match self {
            FailureReason::PrimitiveFailed => "primitive_failed",
            FailureReason::SubgoalIncomplete => "subgoal_incomplete",
            FailureReason::PlanLogicError => "plan_logic_error",
            FailureReason::ObstacleBlocking => "obstacle_blocking",
            FailureReason::None => "none",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FeedbackDetail {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<PrimitiveAction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocker: Option<String>,
    /// Rendered sub-goal that did not hold.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unmet: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feedback {
    pub verdict: Verdict,
    pub stage: Stage,
    pub reason: FailureReason,
    #[serde(default)]
    pub detail: FeedbackDetail,
}

impl Feedback {
    pub fn yes(stage: Stage, action: PrimitiveAction) -> Self {
        Self {
            verdict: Verdict::Yes,
            stage,
            reason: FailureReason::None,
            detail: FeedbackDetail {
                action: Some(action),
                ..FeedbackDetail::default()
            },
        }
    }

    pub fn no(stage: Stage, reason: FailureReason, detail: FeedbackDetail) -> Self {
        debug_assert!(reason != FailureReason::None);
        Self {
            verdict: Verdict::No,
            stage,
            reason,
            detail,
        }
    }

    pub fn is_yes(&self) -> bool {
        self.verdict == Verdict::Yes
    }

    /// The primitive was attempted and did what it should, whatever the sub-goal says.
    pub fn action_took_effect(&self) -> bool {
        matches!(self.reason, FailureReason::None | FailureReason::SubgoalIncomplete)
    }
}

impl fmt::Display for Feedback {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.is_yes() { "yes" } else { "no" };
        write!(f, "{verdict} {}", self.reason.as_str())?;
        if let Some(a) = &self.detail.action {
            write!(f, " action={a}")?;
        }
        if let Some(b) = &self.detail.blocker {
            write!(f, " blocker={b}")?;
        }
        Ok(())
    }
}
