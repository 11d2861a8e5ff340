//! Turning a world into the relation graph an agent sees.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{
    derive_relations, ContainerState, GraphError, LayoutEntry, Location, ObjectNode, RelationGraph, Thresholds,
    DEFAULT_CONTAINER_CATEGORIES, FREE_SURFACE_TAG, SURFACE_TAG,
};
use crate::world::WorldState;

/// What the camera can and cannot see.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservabilityRules {
    pub thresholds: Thresholds,
    /// Contents of closed containers are invisible.
    pub hide_closed_contents: bool,
    /// Objects under a cover are invisible.
    pub hide_covered: bool,
}

impl Default for ObservabilityRules {
    fn default() -> Self {
        Self {
            thresholds: Thresholds::default(),
            hide_closed_contents: true,
            hide_covered: true,
        }
    }
}

impl ObservabilityRules {
    /// Sees everything, including closed contents and covered objects.
    pub fn omniscient() -> Self {
        Self {
            hide_closed_contents: false,
            hide_covered: false,
            ..Self::default()
        }
    }
}

#[derive(Debug, Error)]
pub enum PerceptionError {
    #[error("perceived graph is invalid: {0}")]
    InvalidGraph(#[from] GraphError),
    #[error("perception backend failed: {0}")]
    Backend(String),
}

/// Whether `id` is visible under `rules`, following containment outward.
pub fn is_visible(world: &WorldState, id: &str, rules: &ObservabilityRules) -> bool {
    let mut current = id;
    // Containment depth is bounded by the object count; guard against malformed worlds.
    for _ in 0..=world.objects.len() {
        match world.location(current) {
            None => return false,
            Some(Location::CoveredBy(_)) if rules.hide_covered => return false,
            Some(Location::Inside(c)) => {
                if rules.hide_closed_contents && world.container_state(c) == ContainerState::Closed {
                    return false;
                }
                current = c;
            }
            Some(_) => return true,
        }
    }
    false
}

/// Renders the visible part of `world` as a relation graph stamped `timestamp`.
pub fn perceive(world: &WorldState, rules: &ObservabilityRules, timestamp: u64) -> Result<RelationGraph, PerceptionError> {
    let mut graph = RelationGraph::new(timestamp);
    let mut layout = Vec::new();
    for obj in world.objects.values() {
        if !is_visible(world, &obj.id, rules) {
            continue;
        }
        let location = world.location(&obj.id).cloned().unwrap_or(Location::Unknown);
        let held = location == Location::Gripper;
        let mut node = ObjectNode::new(&obj.id, &obj.category)
            .with_state(world.container_state(&obj.id))
            .with_location(location)
            .with_order(obj.order);
        node.color = obj.color.clone();
        node.attributes = obj.attributes.clone();
        if obj.surface {
            node.attributes.insert(SURFACE_TAG.to_string());
        }
        if world.free_surface.as_deref() == Some(obj.id.as_str()) {
            node.attributes.insert(FREE_SURFACE_TAG.to_string());
        }
        if !held {
            node.footprint = Some(obj.footprint());
            layout.push(LayoutEntry::new(&obj.id, obj.center, obj.half_extents));
        }
        node.front_zone = world.containers.get(&obj.id).and_then(|c| c.front_zone);
        if !rules.hide_closed_contents && world.is_container(&obj.id) {
            graph.known_contents.insert(obj.id.clone());
        }
        graph.insert_node(node);
    }
    graph.edges = derive_relations(&layout, rules.thresholds)?;
    graph.validate(DEFAULT_CONTAINER_CATEGORIES)?;
    Ok(graph)
}

/// The full-information graph used to judge success.
pub fn ground_truth(world: &WorldState, timestamp: u64) -> Result<RelationGraph, PerceptionError> {
    perceive(world, &ObservabilityRules::omniscient(), timestamp)
}

/// Anything that can produce a relation graph from the current world.
pub trait PerceptionBackend {
    fn perceive(&mut self, world: &WorldState, timestamp: u64) -> Result<RelationGraph, PerceptionError>;
}

/// Perception read straight off the simulator.
#[derive(Debug, Clone, Default)]
pub struct SimPerception {
    pub rules: ObservabilityRules,
}

impl PerceptionBackend for SimPerception {
    fn perceive(&mut self, world: &WorldState, timestamp: u64) -> Result<RelationGraph, PerceptionError> {
        perceive(world, &self.rules, timestamp)
    }
}
