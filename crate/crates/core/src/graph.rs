//! Object-centric spatial relation graph.
//!
//! Nodes are objects with semantic attributes and a location; directed edges
//! carry exactly six directional relations. Containment and covering are
//! node locations, never edge labels.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::geometry::{Axis, Rect, Vec3};

/// Tag carried by support objects (tables, plates). Surfaces never block.
pub const SURFACE_TAG: &str = "surface";
/// Tag carried by the surface obstacles and spare objects are relocated onto.
pub const FREE_SURFACE_TAG: &str = "free_surface";

/// Categories allowed to carry a container state.
pub const DEFAULT_CONTAINER_CATEGORIES: &[&str] =
    &["drawer", "cabinet", "fridge", "refrigerator", "carton", "box", "basket"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContainerState {
    Open,
    Closed,
    NotAContainer,
}

impl ContainerState {
    pub fn is_container(self) -> bool {
        self != ContainerState::NotAContainer
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ContainerState::Open => "open",
            ContainerState::Closed => "closed",
            ContainerState::NotAContainer => "not_a_container",
        }
    }
}

impl fmt::Display for ContainerState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where an object is.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Location {
    On(String),
    Inside(String),
    Gripper,
    CoveredBy(String),
    Unknown,
}

impl Location {
    pub fn container(&self) -> Option<&str> {
        match self {
            Location::Inside(c) => Some(c),
            _ => None,
        }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::On(s) => write!(f, "on({s})"),
            Location::Inside(c) => write!(f, "inside({c})"),
            Location::Gripper => f.write_str("gripper"),
            Location::CoveredBy(x) => write!(f, "covered_by({x})"),
            Location::Unknown => f.write_str("unknown"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed location `{0}`")]
pub struct LocationParseError(pub String);

/// Parses `name(arg)` into its two parts.
pub(crate) fn split_call(s: &str) -> Option<(&str, &str)> {
    let open = s.find('(')?;
    let inner = s[open + 1..].strip_suffix(')')?;
    Some((s[..open].trim(), inner.trim()))
}

impl FromStr for Location {
    type Err = LocationParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s {
            "gripper" => return Ok(Location::Gripper),
            "unknown" => return Ok(Location::Unknown),
            _ => {}
        }
        let (head, arg) = split_call(s).ok_or_else(|| LocationParseError(s.to_string()))?;
        if arg.is_empty() {
            return Err(LocationParseError(s.to_string()));
        }
        match head {
            "on" => Ok(Location::On(arg.to_string())),
            "inside" => Ok(Location::Inside(arg.to_string())),
            "covered_by" => Ok(Location::CoveredBy(arg.to_string())),
            _ => Err(LocationParseError(s.to_string())),
        }
    }
}

impl Serialize for Location {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Location {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectNode {
    pub id: String,
    pub category: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<String>,
    pub container_state: ContainerState,
    #[serde(default)]
    pub attributes: BTreeSet<String>,
    pub location: Location,
    /// Declaration rank in the scene; drives deterministic exploration order.
    #[serde(default)]
    pub order: u32,
    /// Table-plane footprint, absent for held objects.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub footprint: Option<Rect>,
    /// Region that must be clear for the arm to reach this container.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub front_zone: Option<Rect>,
}

impl ObjectNode {
    pub fn new(id: impl Into<String>, category: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            category: category.into(),
            color: None,
            container_state: ContainerState::NotAContainer,
            attributes: BTreeSet::new(),
            location: Location::Unknown,
            order: 0,
            footprint: None,
            front_zone: None,
        }
    }

    pub fn with_color(mut self, color: impl Into<String>) -> Self {
        self.color = Some(color.into());
        self
    }

    pub fn with_state(mut self, state: ContainerState) -> Self {
        self.container_state = state;
        self
    }

    pub fn with_location(mut self, location: Location) -> Self {
        self.location = location;
        self
    }

    pub fn with_attribute(mut self, tag: impl Into<String>) -> Self {
        self.attributes.insert(tag.into());
        self
    }

    pub fn with_order(mut self, order: u32) -> Self {
        self.order = order;
        self
    }

    pub fn is_container(&self) -> bool {
        self.container_state.is_container()
    }

    pub fn is_surface(&self) -> bool {
        self.attributes.contains(SURFACE_TAG)
    }

    /// Items are the things a gripper may pick up.
    pub fn is_item(&self) -> bool {
        !self.is_container() && !self.is_surface()
    }

    pub fn has_attribute(&self, tag: &str) -> bool {
        self.attributes.contains(tag)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Above,
    Below,
    Left,
    Right,
    Front,
    Behind,
}

impl Relation {
    pub const ALL: [Relation; 6] = [
        Relation::Above,
        Relation::Below,
        Relation::Left,
        Relation::Right,
        Relation::Front,
        Relation::Behind,
    ];

    pub fn inverse(self) -> Relation {
        match self {
            Relation::Above => Relation::Below,
            Relation::Below => Relation::Above,
            Relation::Left => Relation::Right,
            Relation::Right => Relation::Left,
            Relation::Front => Relation::Behind,
            Relation::Behind => Relation::Front,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Relation::Above => "above",
            Relation::Below => "below",
            Relation::Left => "left",
            Relation::Right => "right",
            Relation::Front => "front",
            Relation::Behind => "behind",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `source relation target`, e.g. `cup front blue_drawer`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationEdge {
    pub source: String,
    pub relation: Relation,
    pub target: String,
}

impl RelationEdge {
    pub fn new(source: impl Into<String>, relation: Relation, target: impl Into<String>) -> Self {
        Self {
            source: source.into(),
            relation,
            target: target.into(),
        }
    }

    pub fn mirror(&self) -> RelationEdge {
        RelationEdge::new(self.target.clone(), self.relation.inverse(), self.source.clone())
    }
}

impl fmt::Display for RelationEdge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.source, self.relation, self.target)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("duplicate object id `{0}`")]
    DuplicateId(String),
    #[error("non-finite position for `{0}`")]
    NonFinite(String),
    #[error("relation threshold must be positive on every axis")]
    BadThreshold,
    #[error("edge `{0}` names a missing node")]
    DanglingEdge(String),
    #[error("edge `{0}` is a self loop")]
    SelfLoop(String),
    #[error("edge `{0}` has no mirrored inverse")]
    Unpaired(String),
    #[error("more than one object in the gripper")]
    MultipleHeld,
    #[error("`{0}` is inside missing container `{1}`")]
    MissingContainer(String, String),
    #[error("`{0}` has a container state but category `{1}` is not a container category")]
    NotContainerCategory(String, String),
    #[error("node keyed `{0}` carries id `{1}`")]
    KeyMismatch(String, String),
}

/// Per-axis separation thresholds, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Thresholds {
    pub const fn uniform(tau: f64) -> Self {
        Self { x: tau, y: tau, z: tau }
    }

    pub fn axis(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.x,
            Axis::Y => self.y,
            Axis::Z => self.z,
        }
    }
}

impl Default for Thresholds {
    fn default() -> Self {
        Self::uniform(0.02)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayoutEntry {
    pub id: String,
    pub center: Vec3,
    pub half_extents: Vec3,
}

impl LayoutEntry {
    pub fn new(id: impl Into<String>, center: Vec3, half_extents: Vec3) -> Self {
        Self {
            id: id.into(),
            center,
            half_extents,
        }
    }
}

/// The relation pair emitted when `high` exceeds `low` on an axis:
/// (relation of `low` to `high`, relation of `high` to `low`).
fn axis_relations(axis: Axis) -> (Relation, Relation) {
    match axis {
        Axis::X => (Relation::Left, Relation::Right),
        Axis::Y => (Relation::Front, Relation::Behind),
        Axis::Z => (Relation::Below, Relation::Above),
    }
}

/// Derives directional edges from object centers and half-extents.
///
/// A pair is related on an axis when the center gap exceeds the axis threshold
/// plus both half-extents on that axis. Pairs may be related on several axes.
pub fn derive_relations(
    layout: &[LayoutEntry],
    thresholds: Thresholds,
) -> Result<BTreeSet<RelationEdge>, GraphError> {
    if Axis::ALL.iter().any(|&a| thresholds.axis(a).partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)) {
        return Err(GraphError::BadThreshold);
    }
    let mut seen = BTreeSet::new();
    for entry in layout {
        if !seen.insert(entry.id.as_str()) {
            return Err(GraphError::DuplicateId(entry.id.clone()));
        }
        if !entry.center.is_finite() || !entry.half_extents.is_finite() {
            return Err(GraphError::NonFinite(entry.id.clone()));
        }
    }

    let mut edges = BTreeSet::new();
    for (i, a) in layout.iter().enumerate() {
        for b in &layout[i + 1..] {
            for axis in Axis::ALL {
                let gap = b.center.axis(axis) - a.center.axis(axis);
                let need = thresholds.axis(axis) + (a.half_extents.axis(axis) + b.half_extents.axis(axis));
                let (low_rel, high_rel) = axis_relations(axis);
                let (low, high) = if gap > need {
                    (a, b)
                } else if -gap > need {
                    (b, a)
                } else {
                    continue;
                };
                edges.insert(RelationEdge::new(&low.id, low_rel, &high.id));
                edges.insert(RelationEdge::new(&high.id, high_rel, &low.id));
            }
        }
    }
    Ok(edges)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RelationGraph {
    pub timestamp: u64,
    pub nodes: BTreeMap<String, ObjectNode>,
    pub edges: BTreeSet<RelationEdge>,
    /// Closed containers whose contents are nonetheless known (belief graphs).
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub known_contents: BTreeSet<String>,
}

impl RelationGraph {
    pub fn new(timestamp: u64) -> Self {
        Self {
            timestamp,
            ..Self::default()
        }
    }

    pub fn insert_node(&mut self, node: ObjectNode) {
        self.nodes.insert(node.id.clone(), node);
    }

    pub fn node(&self, id: &str) -> Option<&ObjectNode> {
        self.nodes.get(id)
    }

    pub fn held(&self) -> Option<&ObjectNode> {
        self.nodes.values().find(|n| n.location == Location::Gripper)
    }

    /// Nodes in declaration order, ties broken by id.
    pub fn nodes_in_order(&self) -> Vec<&ObjectNode> {
        let mut v: Vec<_> = self.nodes.values().collect();
        v.sort_by(|a, b| a.order.cmp(&b.order).then_with(|| a.id.cmp(&b.id)));
        v
    }

    pub fn has_edge(&self, source: &str, relation: Relation, target: &str) -> bool {
        self.edges.contains(&RelationEdge::new(source, relation, target))
    }

    /// Objects directly inside a container, or resting on a surface.
    pub fn contents_of<'a>(&'a self, holder: &'a str) -> impl Iterator<Item = &'a ObjectNode> + 'a {
        self.nodes.values().filter(move |n| match &n.location {
            Location::Inside(c) | Location::On(c) => c == holder,
            _ => false,
        })
    }

    /// Whether the contents of `holder` are observable in this graph.
    pub fn contents_known(&self, holder: &ObjectNode) -> bool {
        match holder.container_state {
            ContainerState::NotAContainer | ContainerState::Open => true,
            ContainerState::Closed => self.known_contents.contains(&holder.id),
        }
    }

    /// The surface obstacles get relocated to: the lowest-ordered node tagged
    /// `free_surface`, falling back to any surface.
    pub fn free_surface(&self) -> Option<&ObjectNode> {
        let ordered = self.nodes_in_order();
        ordered
            .iter()
            .find(|n| n.has_attribute(FREE_SURFACE_TAG))
            .or_else(|| ordered.iter().find(|n| n.is_surface()))
            .copied()
    }

    /// Items whose footprint lies in `target`'s front zone and that stand in
    /// front of it according to the edge set.
    pub fn obstacles_for(&self, target: &str) -> Vec<&ObjectNode> {
        let Some(zone) = self.node(target).and_then(|n| n.front_zone) else {
            return Vec::new();
        };
        self.nodes_in_order()
            .into_iter()
            .filter(|n| n.id != target && n.is_item())
            .filter(|n| matches!(n.location, Location::On(_)))
            .filter(|n| n.footprint.is_some_and(|f| f.overlaps(&zone)))
            .filter(|n| self.has_edge(&n.id, Relation::Front, target))
            .collect()
    }

    /// The same graph with every edge removed: a bare object list.
    pub fn without_edges(&self) -> RelationGraph {
        RelationGraph {
            edges: BTreeSet::new(),
            ..self.clone()
        }
    }

    /// Checks every structural invariant of a relation graph.
    pub fn validate(&self, container_categories: &[&str]) -> Result<(), GraphError> {
        let mut held = 0;
        for (key, node) in &self.nodes {
            if key != &node.id {
                return Err(GraphError::KeyMismatch(key.clone(), node.id.clone()));
            }
            if node.is_container() && !container_categories.contains(&node.category.as_str()) {
                return Err(GraphError::NotContainerCategory(node.id.clone(), node.category.clone()));
            }
            match &node.location {
                Location::Gripper => held += 1,
                Location::Inside(c) if !self.nodes.contains_key(c) => {
                    return Err(GraphError::MissingContainer(node.id.clone(), c.clone()));
                }
                _ => {}
            }
        }
        if held > 1 {
            return Err(GraphError::MultipleHeld);
        }
        for edge in &self.edges {
            if edge.source == edge.target {
                return Err(GraphError::SelfLoop(edge.to_string()));
            }
            if !self.nodes.contains_key(&edge.source) || !self.nodes.contains_key(&edge.target) {
                return Err(GraphError::DanglingEdge(edge.to_string()));
            }
            if !self.edges.contains(&edge.mirror()) {
                return Err(GraphError::Unpaired(edge.to_string()));
            }
        }
        Ok(())
    }

    /// Stable line-oriented rendering used in traces, prompts and golden tests.
    pub fn canonical_text(&self) -> String {
        let mut out = format!("graph t={}\n", self.timestamp);
        for node in self.nodes.values() {
            out.push_str(&format!(
                "node {} category={} color={} state={} location={} attributes=[{}]",
                node.id,
                node.category,
                node.color.as_deref().unwrap_or("-"),
                node.container_state,
                node.location,
                node.attributes.iter().cloned().collect::<Vec<_>>().join(","),
            ));
            if let Some(f) = node.footprint {
                out.push_str(&format!(" footprint={}", fmt_rect(&f)));
            }
            if let Some(z) = node.front_zone {
                out.push_str(&format!(" front_zone={}", fmt_rect(&z)));
            }
            out.push('\n');
        }
        for c in &self.known_contents {
            out.push_str(&format!("known {c}\n"));
        }
        for edge in &self.edges {
            out.push_str(&format!("edge {edge}\n"));
        }
        out
    }
}

fn fmt_rect(r: &Rect) -> String {
    format!("[{:.3},{:.3}]x[{:.3},{:.3}]", r.x[0], r.x[1], r.y[0], r.y[1])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeField {
    Category,
    Color,
    ContainerState,
    Attributes,
    Location,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StateChange {
    pub id: String,
    pub field: NodeField,
    pub old: String,
    pub new: String,
}

impl StateChange {
    pub fn new(id: impl Into<String>, field: NodeField, old: impl ToString, new: impl ToString) -> Self {
        Self {
            id: id.into(),
            field,
            old: old.to_string(),
            new: new.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GraphChangeSet {
    pub added_nodes: BTreeSet<String>,
    pub removed_nodes: BTreeSet<String>,
    pub state_changes: Vec<StateChange>,
    pub added_edges: BTreeSet<RelationEdge>,
    pub removed_edges: BTreeSet<RelationEdge>,
}

impl GraphChangeSet {
    pub fn is_empty(&self) -> bool {
        self.added_nodes.is_empty()
            && self.removed_nodes.is_empty()
            && self.state_changes.is_empty()
            && self.added_edges.is_empty()
            && self.removed_edges.is_empty()
    }

    pub fn change_of(&self, id: &str, field: NodeField) -> Option<&StateChange> {
        self.state_changes.iter().find(|c| c.id == id && c.field == field)
    }

    /// Whether any semantic node state changed (ignoring edges).
    pub fn has_node_changes(&self) -> bool {
        !self.added_nodes.is_empty() || !self.removed_nodes.is_empty() || !self.state_changes.is_empty()
    }
}

fn attrs_text(a: &BTreeSet<String>) -> String {
    format!("[{}]", a.iter().cloned().collect::<Vec<_>>().join(","))
}

/// Exact set difference between two graphs.
///
/// Geometry (footprints, zones, declaration order) is not part of the diff;
/// only semantic fields are compared.
pub fn graph_diff(before: &RelationGraph, after: &RelationGraph) -> GraphChangeSet {
    let mut set = GraphChangeSet::default();
    for id in after.nodes.keys() {
        if !before.nodes.contains_key(id) {
            set.added_nodes.insert(id.clone());
        }
    }
    for (id, old) in &before.nodes {
        let Some(new) = after.nodes.get(id) else {
            set.removed_nodes.insert(id.clone());
            continue;
        };
        if old.category != new.category {
            set.state_changes.push(StateChange::new(id, NodeField::Category, &old.category, &new.category));
        }
        if old.color != new.color {
            set.state_changes.push(StateChange::new(
                id,
                NodeField::Color,
                old.color.as_deref().unwrap_or("-"),
                new.color.as_deref().unwrap_or("-"),
            ));
        }
        if old.container_state != new.container_state {
            set.state_changes.push(StateChange::new(
                id,
                NodeField::ContainerState,
                old.container_state,
                new.container_state,
            ));
        }
        if old.attributes != new.attributes {
            set.state_changes.push(StateChange::new(
                id,
                NodeField::Attributes,
                attrs_text(&old.attributes),
                attrs_text(&new.attributes),
            ));
        }
        if old.location != new.location {
            set.state_changes.push(StateChange::new(id, NodeField::Location, &old.location, &new.location));
        }
    }
    set.added_edges = after.edges.difference(&before.edges).cloned().collect();
    set.removed_edges = before.edges.difference(&after.edges).cloned().collect();
    set
}
