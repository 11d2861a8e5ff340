//! The four primitive skills every plan is written in.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::graph::{split_call, Location};
use crate::predicate::is_placeholder;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verb {
    Grasp,
    Place,
    Open,
    Close,
}

impl Verb {
    pub const ALL: [Verb; 4] = [Verb::Grasp, Verb::Place, Verb::Open, Verb::Close];

    pub fn as_str(self) -> &'static str {
        match self {
            Verb::Grasp => "GRASP",
            Verb::Place => "PLACE",
            Verb::Open => "OPEN",
            Verb::Close => "CLOSE",
        }
    }
}

impl fmt::Display for Verb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown verb `{0}`")]
pub struct VerbParseError(pub String);

impl FromStr for Verb {
    type Err = VerbParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "GRASP" => Ok(Verb::Grasp),
            "PLACE" => Ok(Verb::Place),
            "OPEN" => Ok(Verb::Open),
            "CLOSE" => Ok(Verb::Close),
            _ => Err(VerbParseError(s.to_string())),
        }
    }
}

/// Destination of a PLACE.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Place {
    On(String),
    Inside(String),
}

impl Place {
    pub fn target(&self) -> &str {
        match self {
            Place::On(s) | Place::Inside(s) => s,
        }
    }

    pub fn is_placeholder(&self) -> bool {
        is_placeholder(self.target())
    }

    pub fn as_location(&self) -> Location {
        match self {
            Place::On(s) => Location::On(s.clone()),
            Place::Inside(s) => Location::Inside(s.clone()),
        }
    }
}

impl fmt::Display for Place {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Place::On(s) => write!(f, "on({s})"),
            Place::Inside(s) => write!(f, "inside({s})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed place `{0}`")]
pub struct PlaceParseError(pub String);

impl FromStr for Place {
    type Err = PlaceParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || PlaceParseError(s.to_string());
        let (head, arg) = split_call(s.trim()).ok_or_else(err)?;
        if arg.is_empty() {
            return Err(err());
        }
        match head {
            "on" => Ok(Place::On(arg.to_string())),
            "inside" => Ok(Place::Inside(arg.to_string())),
            _ => Err(err()),
        }
    }
}

impl Serialize for Place {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Place {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?.parse().map_err(serde::de::Error::custom)
    }
}

/// One primitive skill invocation.
///
/// `object` is the manipulated object for every verb; PLACE additionally names
/// its destination and its object is the one expected in the gripper.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PrimitiveAction {
    pub verb: Verb,
    pub object: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub destination: Option<Place>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ActionError {
    #[error("{0} needs a non-empty object id")]
    EmptyObject(Verb),
    #[error("PLACE needs a destination")]
    MissingDestination,
    #[error("{0} takes no destination")]
    UnexpectedDestination(Verb),
}

impl PrimitiveAction {
    pub fn grasp(object: impl Into<String>) -> Self {
        Self {
            verb: Verb::Grasp,
            object: object.into(),
            destination: None,
        }
    }

    pub fn place(object: impl Into<String>, destination: Place) -> Self {
        Self {
            verb: Verb::Place,
            object: object.into(),
            destination: Some(destination),
        }
    }

    pub fn open(container: impl Into<String>) -> Self {
        Self {
            verb: Verb::Open,
            object: container.into(),
            destination: None,
        }
    }

    pub fn close(container: impl Into<String>) -> Self {
        Self {
            verb: Verb::Close,
            object: container.into(),
            destination: None,
        }
    }

    pub fn check_arity(&self) -> Result<(), ActionError> {
        if self.object.is_empty() {
            return Err(ActionError::EmptyObject(self.verb));
        }
        match (self.verb, &self.destination) {
            (Verb::Place, None) => Err(ActionError::MissingDestination),
            (Verb::Place, Some(d)) if d.target().is_empty() => Err(ActionError::MissingDestination),
            (Verb::Place, Some(_)) => Ok(()),
            (v, Some(_)) => Err(ActionError::UnexpectedDestination(v)),
            (_, None) => Ok(()),
        }
    }

    pub fn has_placeholder(&self) -> bool {
        is_placeholder(&self.object) || self.destination.as_ref().is_some_and(Place::is_placeholder)
    }
}

impl fmt::Display for PrimitiveAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.destination {
            Some(d) => write!(f, "{}({} -> {})", self.verb, self.object, d),
            None => write!(f, "{}({})", self.verb, self.object),
        }
    }
}
