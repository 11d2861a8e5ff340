//! Structured goal predicates and their three-valued evaluation over a graph.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::graph::{ContainerState, Location, ObjectNode, RelationGraph};

/// Kleene truth value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truth {
    True,
    False,
    Unknown,
}

impl Truth {
    pub fn and(self, other: Truth) -> Truth {
        match (self, other) {
            (Truth::False, _) | (_, Truth::False) => Truth::False,
            (Truth::True, Truth::True) => Truth::True,
            _ => Truth::Unknown,
        }
    }

    pub fn or(self, other: Truth) -> Truth {
        match (self, other) {
            (Truth::True, _) | (_, Truth::True) => Truth::True,
            (Truth::False, Truth::False) => Truth::False,
            _ => Truth::Unknown,
        }
    }

    pub fn is_true(self) -> bool {
        self == Truth::True
    }

    /// Conjunction over an iterator; empty is true.
    pub fn all(iter: impl IntoIterator<Item = Truth>) -> Truth {
        iter.into_iter().fold(Truth::True, Truth::and)
    }

    /// Disjunction over an iterator; empty is false.
    pub fn any(iter: impl IntoIterator<Item = Truth>) -> Truth {
        iter.into_iter().fold(Truth::False, Truth::or)
    }
}

impl From<bool> for Truth {
    fn from(b: bool) -> Self {
        if b {
            Truth::True
        } else {
            Truth::False
        }
    }
}

/// Picks out nodes. `It` is the variable bound by `for_all`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    Id(String),
    Category(String),
    Color(String),
    Attribute(String),
    It,
}

impl Selector {
    pub fn id(s: impl Into<String>) -> Self {
        Selector::Id(s.into())
    }

    pub fn matches(&self, node: &ObjectNode, bound: Option<&str>) -> bool {
        match self {
            Selector::Id(id) => &node.id == id,
            Selector::Category(c) => &node.category == c,
            Selector::Color(c) => node.color.as_deref() == Some(c.as_str()),
            Selector::Attribute(a) => node.has_attribute(a),
            Selector::It => bound == Some(node.id.as_str()),
        }
    }

    /// Matching nodes in declaration order.
    pub fn select<'a>(&self, graph: &'a RelationGraph, bound: Option<&str>) -> Vec<&'a ObjectNode> {
        graph
            .nodes_in_order()
            .into_iter()
            .filter(|n| self.matches(n, bound))
            .collect()
    }

    fn bind(&self, bound: Option<&str>) -> Selector {
        match (self, bound) {
            (Selector::It, Some(id)) => Selector::Id(id.to_string()),
            _ => self.clone(),
        }
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Selector::Id(s) => write!(f, "{s}"),
            Selector::Category(s) => write!(f, "category={s}"),
            Selector::Color(s) => write!(f, "color={s}"),
            Selector::Attribute(s) => write!(f, "attribute={s}"),
            Selector::It => f.write_str("·"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// Non-empty contents, every item carrying the attribute.
    ContainsOnly(String),
    /// At least one content item matching the selector.
    ContainsMatch(Selector),
}

/// A container described by what it holds rather than by id.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ContainerQuery {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    pub condition: Condition,
}

impl ContainerQuery {
    pub fn contains_only(category: Option<&str>, attribute: &str) -> Self {
        Self {
            category: category.map(str::to_string),
            condition: Condition::ContainsOnly(attribute.to_string()),
        }
    }

    pub fn contains_match(selector: Selector) -> Self {
        Self {
            category: None,
            condition: Condition::ContainsMatch(selector),
        }
    }

    /// Containers this query ranges over, in declaration order.
    pub fn candidates<'a>(&self, graph: &'a RelationGraph) -> Vec<&'a ObjectNode> {
        graph
            .nodes_in_order()
            .into_iter()
            .filter(|n| n.is_container())
            .filter(|n| self.category.as_ref().is_none_or(|c| &n.category == c))
            .collect()
    }

    /// Whether `container` satisfies the condition on `graph`.
    pub fn holds_for(&self, container: &ObjectNode, graph: &RelationGraph) -> Truth {
        if self.category.as_ref().is_some_and(|c| &container.category != c) {
            return Truth::False;
        }
        if !graph.contents_known(container) {
            return Truth::Unknown;
        }
        let contents: Vec<_> = graph.contents_of(&container.id).collect();
        match &self.condition {
            Condition::ContainsOnly(attr) => {
                Truth::from(!contents.is_empty() && contents.iter().all(|n| n.has_attribute(attr)))
            }
            Condition::ContainsMatch(sel) => Truth::from(contents.iter().any(|n| sel.matches(n, None))),
        }
    }

    /// `true` once some candidate satisfies the query, `false` once all are ruled out.
    pub fn identified(&self, graph: &RelationGraph) -> Truth {
        Truth::any(self.candidates(graph).into_iter().map(|c| self.holds_for(c, graph)))
    }

    /// Candidates known to satisfy the query, lowest id first.
    pub fn satisfying(&self, graph: &RelationGraph) -> Vec<String> {
        let mut ids: Vec<String> = self
            .candidates(graph)
            .into_iter()
            .filter(|c| self.holds_for(c, graph).is_true())
            .map(|c| c.id.clone())
            .collect();
        ids.sort();
        ids
    }
}

impl fmt::Display for ContainerQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = self.category.as_deref().unwrap_or("container");
        match &self.condition {
            Condition::ContainsOnly(a) => write!(f, "{kind} containing only {a}"),
            Condition::ContainsMatch(s) => write!(f, "{kind} containing {s}"),
        }
    }
}

/// Placeholder tokens stand for containers still to be identified.
pub fn is_placeholder(token: &str) -> bool {
    token.starts_with('?')
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaceSpec {
    On(String),
    /// A concrete container id or a placeholder token.
    Inside(String),
    InsideMatching(ContainerQuery),
}

impl fmt::Display for PlaceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlaceSpec::On(s) => write!(f, "on({s})"),
            PlaceSpec::Inside(s) => write!(f, "inside({s})"),
            PlaceSpec::InsideMatching(q) => write!(f, "inside({q})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalPredicate {
    At { object: Selector, place: PlaceSpec },
    Holds { object: Selector },
    ContainerStateIs { container: Selector, state: ContainerState },
    ContainsOnly { container: Selector, attribute: String },
    Identified { query: ContainerQuery },
    AllOf(Vec<GoalPredicate>),
    AnyOf(Vec<GoalPredicate>),
    ForAll { selector: Selector, predicate: Box<GoalPredicate> },
}

impl GoalPredicate {
    pub fn at(object: Selector, place: PlaceSpec) -> Self {
        GoalPredicate::At { object, place }
    }

    pub fn for_all(selector: Selector, predicate: GoalPredicate) -> Self {
        GoalPredicate::ForAll {
            selector,
            predicate: Box::new(predicate),
        }
    }

    /// Every container query the predicate mentions, in first-seen order.
    pub fn queries(&self) -> Vec<ContainerQuery> {
        let mut out = Vec::new();
        self.walk(&mut |p| {
            let q = match p {
                GoalPredicate::Identified { query } => Some(query),
                GoalPredicate::At {
                    place: PlaceSpec::InsideMatching(q),
                    ..
                } => Some(q),
                _ => None,
            };
            if let Some(q) = q {
                if !out.contains(q) {
                    out.push(q.clone());
                }
            }
        });
        out
    }

    /// Placeholder tokens used anywhere in the predicate.
    pub fn placeholders(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.walk(&mut |p| {
            if let GoalPredicate::At {
                place: PlaceSpec::Inside(t),
                ..
            } = p
            {
                if is_placeholder(t) && !out.contains(t) {
                    out.push(t.clone());
                }
            }
        });
        out
    }

    fn walk(&self, f: &mut impl FnMut(&GoalPredicate)) {
        f(self);
        match self {
            GoalPredicate::AllOf(ps) | GoalPredicate::AnyOf(ps) => ps.iter().for_each(|p| p.walk(f)),
            GoalPredicate::ForAll { predicate, .. } => predicate.walk(f),
            _ => {}
        }
    }

    /// Rewrites every place with `map`.
    pub fn map_places(&self, map: &impl Fn(&PlaceSpec) -> PlaceSpec) -> GoalPredicate {
        match self {
            GoalPredicate::At { object, place } => GoalPredicate::At {
                object: object.clone(),
                place: map(place),
            },
            GoalPredicate::AllOf(ps) => GoalPredicate::AllOf(ps.iter().map(|p| p.map_places(map)).collect()),
            GoalPredicate::AnyOf(ps) => GoalPredicate::AnyOf(ps.iter().map(|p| p.map_places(map)).collect()),
            GoalPredicate::ForAll { selector, predicate } => GoalPredicate::ForAll {
                selector: selector.clone(),
                predicate: Box::new(predicate.map_places(map)),
            },
            other => other.clone(),
        }
    }

    /// Replaces the bound variable with a concrete id.
    pub fn bind(&self, id: &str) -> GoalPredicate {
        let b = Some(id);
        match self {
            GoalPredicate::At { object, place } => GoalPredicate::At {
                object: object.bind(b),
                place: place.clone(),
            },
            GoalPredicate::Holds { object } => GoalPredicate::Holds { object: object.bind(b) },
            GoalPredicate::ContainerStateIs { container, state } => GoalPredicate::ContainerStateIs {
                container: container.bind(b),
                state: *state,
            },
            GoalPredicate::ContainsOnly { container, attribute } => GoalPredicate::ContainsOnly {
                container: container.bind(b),
                attribute: attribute.clone(),
            },
            GoalPredicate::AllOf(ps) => GoalPredicate::AllOf(ps.iter().map(|p| p.bind(id)).collect()),
            GoalPredicate::AnyOf(ps) => GoalPredicate::AnyOf(ps.iter().map(|p| p.bind(id)).collect()),
            // Inner quantifiers rebind `It`; leave them alone.
            other => other.clone(),
        }
    }
}

impl fmt::Display for GoalPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn list(f: &mut fmt::Formatter<'_>, name: &str, ps: &[GoalPredicate]) -> fmt::Result {
            write!(f, "{name}(")?;
            for (i, p) in ps.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{p}")?;
            }
            f.write_str(")")
        }
        match self {
            GoalPredicate::At { object, place } => write!(f, "at({object}, {place})"),
            GoalPredicate::Holds { object } => write!(f, "holds({object})"),
            GoalPredicate::ContainerStateIs { container, state } => {
                write!(f, "container_state_is({container}, {state})")
            }
            GoalPredicate::ContainsOnly { container, attribute } => {
                write!(f, "contains_only({container}, {attribute})")
            }
            GoalPredicate::Identified { query } => write!(f, "identified({query})"),
            GoalPredicate::AllOf(ps) => list(f, "all_of", ps),
            GoalPredicate::AnyOf(ps) => list(f, "any_of", ps),
            GoalPredicate::ForAll { selector, predicate } => write!(f, "for_all({selector}, {predicate})"),
        }
    }
}

fn place_truth(node: &ObjectNode, place: &PlaceSpec, graph: &RelationGraph) -> Truth {
    match (&node.location, place) {
        (Location::Unknown, _) => Truth::Unknown,
        (_, PlaceSpec::Inside(t)) if is_placeholder(t) => Truth::Unknown,
        (loc, PlaceSpec::On(s)) => Truth::from(*loc == Location::On(s.clone())),
        (loc, PlaceSpec::Inside(c)) => Truth::from(*loc == Location::Inside(c.clone())),
        (Location::Inside(c), PlaceSpec::InsideMatching(q)) => match graph.node(c) {
            Some(container) => q.holds_for(container, graph),
            None => Truth::Unknown,
        },
        (_, PlaceSpec::InsideMatching(_)) => Truth::False,
    }
}

fn eval_bound(p: &GoalPredicate, g: &RelationGraph, bound: Option<&str>) -> Truth {
    match p {
        GoalPredicate::At { object, place } => {
            let nodes = object.select(g, bound);
            if nodes.is_empty() {
                return Truth::False;
            }
            Truth::all(nodes.into_iter().map(|n| place_truth(n, place, g)))
        }
        GoalPredicate::Holds { object } => {
            let nodes = object.select(g, bound);
            if nodes.iter().any(|n| n.location == Location::Gripper) {
                Truth::True
            } else if nodes.iter().any(|n| n.location == Location::Unknown) {
                Truth::Unknown
            } else {
                Truth::False
            }
        }
        GoalPredicate::ContainerStateIs { container, state } => {
            let nodes = container.select(g, bound);
            if nodes.is_empty() {
                return Truth::False;
            }
            Truth::all(nodes.into_iter().map(|n| Truth::from(n.container_state == *state)))
        }
        GoalPredicate::ContainsOnly { container, attribute } => {
            let nodes = container.select(g, bound);
            if nodes.is_empty() {
                return Truth::False;
            }
            let q = ContainerQuery {
                category: None,
                condition: crate::predicate::Condition::ContainsOnly(attribute.clone()),
            };
            Truth::all(nodes.into_iter().map(|n| {
                if n.is_container() || n.is_surface() {
                    q.holds_for(n, g)
                } else {
                    Truth::False
                }
            }))
        }
        GoalPredicate::Identified { query } => query.identified(g),
        GoalPredicate::AllOf(ps) => Truth::all(ps.iter().map(|p| eval_bound(p, g, bound))),
        GoalPredicate::AnyOf(ps) => Truth::any(ps.iter().map(|p| eval_bound(p, g, bound))),
        GoalPredicate::ForAll { selector, predicate } => Truth::all(
            selector
                .select(g, bound)
                .into_iter()
                .map(|n| eval_bound(predicate, g, Some(&n.id))),
        ),
    }
}

/// Evaluates a goal predicate on a graph.
///
/// Empty selectors make `at`, `holds` and the container leaves false, while a
/// universal over an empty selector is vacuously true.
pub fn eval_predicate(p: &GoalPredicate, g: &RelationGraph) -> Truth {
    eval_bound(p, g, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::SURFACE_TAG;

    fn drawer(id: &str, state: ContainerState, order: u32) -> ObjectNode {
        ObjectNode::new(id, "drawer").with_state(state).with_order(order)
    }

    fn fruit(id: &str, loc: Location) -> ObjectNode {
        ObjectNode::new(id, id).with_attribute("fruit").with_location(loc)
    }

    fn fruit_goal() -> GoalPredicate {
        GoalPredicate::for_all(
            Selector::Attribute("fruit".into()),
            GoalPredicate::at(
                Selector::It,
                PlaceSpec::InsideMatching(ContainerQuery::contains_only(Some("drawer"), "fruit")),
            ),
        )
    }

    #[test]
    fn kleene_tables() {
        use Truth::*;
        assert_eq!(True.and(Unknown), Unknown);
        assert_eq!(False.and(Unknown), False);
        assert_eq!(True.or(Unknown), True);
        assert_eq!(False.or(Unknown), Unknown);
        assert_eq!(Truth::all([]), True);
        assert_eq!(Truth::any([]), False);
    }

    #[test]
    fn closed_drawer_contents_are_unknown() {
        let mut g = RelationGraph::new(0);
        g.insert_node(drawer("blue_drawer", ContainerState::Closed, 0));
        let p = GoalPredicate::ContainsOnly {
            container: Selector::id("blue_drawer"),
            attribute: "fruit".into(),
        };
        assert_eq!(eval_predicate(&p, &g), Truth::Unknown);
        g.known_contents.insert("blue_drawer".into());
        assert_eq!(eval_predicate(&p, &g), Truth::False);
    }

    #[test]
    fn banana_in_fruit_drawer() {
        let mut g = RelationGraph::new(9);
        g.insert_node(drawer("blue_drawer", ContainerState::Open, 0));
        g.insert_node(drawer("green_drawer", ContainerState::Open, 1));
        g.insert_node(fruit("apple", Location::Inside("blue_drawer".into())));
        g.insert_node(fruit("banana", Location::Inside("blue_drawer".into())));
        g.insert_node(ObjectNode::new("cable", "cable").with_location(Location::Inside("green_drawer".into())));
        let at = GoalPredicate::at(Selector::id("banana"), PlaceSpec::Inside("blue_drawer".into()));
        assert_eq!(eval_predicate(&at, &g), Truth::True);
        assert_eq!(eval_predicate(&fruit_goal(), &g), Truth::True);
    }

    #[test]
    fn vacuous_universal_is_true() {
        let mut g = RelationGraph::new(0);
        g.insert_node(ObjectNode::new("carton", "carton").with_state(ContainerState::Open));
        let p = GoalPredicate::for_all(
            Selector::Attribute("fruit".into()),
            GoalPredicate::at(Selector::It, PlaceSpec::Inside("carton".into())),
        );
        assert_eq!(eval_predicate(&p, &g), Truth::True);
    }

    #[test]
    fn empty_selectors_are_false() {
        let g = RelationGraph::new(0);
        let at = GoalPredicate::at(Selector::Category("pepsi_can".into()), PlaceSpec::On("table".into()));
        assert_eq!(eval_predicate(&at, &g), Truth::False);
        let holds = GoalPredicate::Holds {
            object: Selector::Category("pepsi_can".into()),
        };
        assert_eq!(eval_predicate(&holds, &g), Truth::False);
    }

    #[test]
    fn identified_follows_observation() {
        let q = ContainerQuery::contains_only(Some("drawer"), "fruit");
        let mut g = RelationGraph::new(0);
        g.insert_node(drawer("green_drawer", ContainerState::Open, 0));
        g.insert_node(drawer("blue_drawer", ContainerState::Closed, 1));
        g.insert_node(ObjectNode::new("cable", "cable").with_location(Location::Inside("green_drawer".into())));
        assert_eq!(q.identified(&g), Truth::Unknown);
        g.nodes.get_mut("blue_drawer").unwrap().container_state = ContainerState::Open;
        g.insert_node(fruit("apple", Location::Inside("blue_drawer".into())));
        assert_eq!(q.identified(&g), Truth::True);
        assert_eq!(q.satisfying(&g), vec!["blue_drawer".to_string()]);
    }

    #[test]
    fn surfaces_have_observable_contents() {
        let mut g = RelationGraph::new(0);
        g.insert_node(ObjectNode::new("plate", "plate").with_attribute(SURFACE_TAG));
        g.insert_node(ObjectNode::new("eggplant", "eggplant").with_location(Location::On("plate".into())));
        let only_bread = GoalPredicate::ContainsOnly {
            container: Selector::id("plate"),
            attribute: "bread".into(),
        };
        assert_eq!(eval_predicate(&only_bread, &g), Truth::False);
    }

    #[test]
    fn placeholders_are_unknown_and_collected() {
        let mut g = RelationGraph::new(0);
        g.insert_node(fruit("banana", Location::On("table".into())));
        let p = GoalPredicate::at(Selector::id("banana"), PlaceSpec::Inside("?container_0".into()));
        assert_eq!(eval_predicate(&p, &g), Truth::Unknown);
        assert_eq!(p.placeholders(), vec!["?container_0".to_string()]);
    }

    #[test]
    fn bind_replaces_the_variable() {
        let inner = GoalPredicate::at(Selector::It, PlaceSpec::Inside("carton".into()));
        assert_eq!(
            inner.bind("toy"),
            GoalPredicate::at(Selector::id("toy"), PlaceSpec::Inside("carton".into()))
        );
    }

    #[test]
    fn serde_shape_is_stable() {
        let json = serde_json::to_string(&fruit_goal()).unwrap();
        assert_eq!(
            json,
            r#"{"for_all":{"selector":{"attribute":"fruit"},"predicate":{"at":{"object":"it","place":{"inside_matching":{"category":"drawer","condition":{"contains_only":"fruit"}}}}}}}"#
        );
        let back: GoalPredicate = serde_json::from_str(&json).unwrap();
        assert_eq!(back, fruit_goal());
    }
}
