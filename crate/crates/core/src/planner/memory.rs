use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::action::PrimitiveAction;
use crate::graph::{ContainerState, Location, ObjectNode, RelationGraph};
use crate::predicate::ContainerQuery;

/// A committed guess about what stands in front of a container.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Suspect {
    pub object: Option<String>,
    pub cleared: bool,
}

/// What the planner carries between steps of one episode.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PlannerMemory {
    /// Last observed contents of every container seen open.
    pub observed_contents: BTreeMap<String, BTreeMap<String, ObjectNode>>,
    /// Container states at first sight.
    pub initial_states: BTreeMap<String, ContainerState>,
    /// Queries decided by exploration, with the chosen container.
    pub resolved: BTreeMap<ContainerQuery, String>,
    /// Targets committed without evidence.
    pub guesses: BTreeMap<ContainerQuery, String>,
    /// Blockers reported by the validator, keyed by blocked container.
    pub blockers: BTreeMap<String, BTreeSet<String>>,
    /// Action failing repeatedly without explanation, with the streak length.
    pub failure_streak: Option<(PrimitiveAction, u32)>,
    pub suspects: BTreeMap<String, Suspect>,
}

impl PlannerMemory {
    /// Records container states and the contents of every open container in `g`.
    pub fn observe(&mut self, g: &RelationGraph) {
        for node in g.nodes.values().filter(|n| n.is_container()) {
            self.initial_states.entry(node.id.clone()).or_insert(node.container_state);
            if node.container_state == ContainerState::Open {
                let contents = g
                    .nodes
                    .values()
                    .filter(|n| n.location == Location::Inside(node.id.clone()))
                    .map(|n| (n.id.clone(), n.clone()))
                    .collect();
                self.observed_contents.insert(node.id.clone(), contents);
            }
        }
    }

    /// `g` extended with remembered contents of containers that are closed again.
    pub fn belief(&self, g: &RelationGraph) -> RelationGraph {
        let mut b = g.clone();
        for (c, contents) in &self.observed_contents {
            let Some(container) = g.node(c) else { continue };
            if container.container_state != ContainerState::Closed {
                continue;
            }
            for (id, node) in contents {
                if !b.nodes.contains_key(id) {
                    b.insert_node(node.clone());
                }
            }
            b.known_contents.insert(c.clone());
        }
        b
    }

    /// Containers found closed at first sight and open in `g`, in declaration order.
    pub fn opened_by_us<'a>(&self, g: &'a RelationGraph) -> Vec<&'a ObjectNode> {
        g.nodes_in_order()
            .into_iter()
            .filter(|n| n.container_state == ContainerState::Open)
            .filter(|n| self.initial_states.get(&n.id) == Some(&ContainerState::Closed))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn belief_remembers_closed_contents() {
        let mut g = RelationGraph::new(0);
        g.insert_node(ObjectNode::new("blue", "drawer").with_state(ContainerState::Open));
        g.insert_node(ObjectNode::new("apple", "apple").with_location(Location::Inside("blue".into())));
        let mut m = PlannerMemory::default();
        m.observe(&g);

        let mut closed = RelationGraph::new(1);
        closed.insert_node(ObjectNode::new("blue", "drawer").with_state(ContainerState::Closed));
        m.observe(&closed);
        let b = m.belief(&closed);
        assert!(b.node("apple").is_some());
        assert!(b.known_contents.contains("blue"));
        assert_eq!(m.initial_states["blue"], ContainerState::Open);
        assert!(m.opened_by_us(&g).is_empty());
    }
}
