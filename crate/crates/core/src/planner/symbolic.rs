use std::collections::{BTreeMap, BTreeSet};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use super::bundle::StagePlanBundle;
use super::memory::{PlannerMemory, Suspect};
use super::{PlannerBackend, PlannerError};
use crate::action::{Place, PrimitiveAction, Verb};
use crate::feedback::{Feedback, FailureReason};
use crate::graph::{ContainerState, Location, RelationGraph};
use crate::predicate::{eval_predicate, ContainerQuery, GoalPredicate, PlaceSpec, Selector, Truth};

/// Placeholder tokens are this prefix plus an index.
pub const PLACEHOLDER_PREFIX: &str = "?container_";

/// Consecutive unexplained failures on one action before a suspect is committed.
pub const SUSPECT_AFTER: u32 = 2;

/// Mixed into the episode seed so guesses never share a stream with the simulator.
const GUESS_STREAM: u64 = 0x5851_f42d_4c95_7f2d;

/// What the planner is allowed to rely on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    /// Emit exploration stages for undecided queries.
    pub explore: bool,
    /// The percept carries relation edges.
    pub relational: bool,
    /// Failure reasons are acted on individually.
    pub reason_aware: bool,
    /// Close containers opened along the way before finishing.
    pub restore: bool,
}

impl Capabilities {
    pub const FULL: Capabilities = Capabilities {
        explore: true,
        relational: true,
        reason_aware: true,
        restore: true,
    };
}

impl Default for Capabilities {
    fn default() -> Self {
        Self::FULL
    }
}

/// Result of checking whether a goal can be planned on a graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Sufficiency {
    Sufficient,
    Missing(Vec<ContainerQuery>),
}

/// Flattens conjunctions and expands universals over the objects present in `g`.
pub fn conjuncts(goal: &GoalPredicate, g: &RelationGraph) -> Vec<GoalPredicate> {
    match goal {
        GoalPredicate::AllOf(ps) => ps.iter().flat_map(|p| conjuncts(p, g)).collect(),
        GoalPredicate::ForAll { selector, predicate } => selector
            .select(g, None)
            .into_iter()
            .flat_map(|n| conjuncts(&predicate.bind(&n.id), g))
            .collect(),
        other => vec![other.clone()],
    }
}

/// Selector of an `at`/`holds` leaf when it names objects absent from `g`.
fn absent_object(p: &GoalPredicate, g: &RelationGraph) -> Option<Selector> {
    let sel = match p {
        GoalPredicate::At { object, .. } | GoalPredicate::Holds { object } => object,
        _ => return None,
    };
    (*sel != Selector::It && sel.select(g, None).is_empty()).then(|| sel.clone())
}

/// Queries whose answer `g` cannot decide, in first-seen order.
pub fn undecided_queries(goal: &GoalPredicate, g: &RelationGraph) -> Vec<ContainerQuery> {
    let mut out: Vec<ContainerQuery> = Vec::new();
    let mut push = |q: ContainerQuery| {
        if q.identified(g) == Truth::Unknown && !out.contains(&q) {
            out.push(q);
        }
    };
    for c in conjuncts(goal, g) {
        if eval_predicate(&c, g) == Truth::True {
            continue;
        }
        for q in c.queries() {
            push(q);
        }
        if let Some(sel) = absent_object(&c, g) {
            push(ContainerQuery::contains_match(sel));
        }
    }
    out
}

/// Whether `g` holds enough information to plan for `goal`.
pub fn sufficiency_check(g: &RelationGraph, goal: &GoalPredicate) -> Sufficiency {
    let missing = undecided_queries(goal, g);
    if missing.is_empty() {
        Sufficiency::Sufficient
    } else {
        Sufficiency::Missing(missing)
    }
}

#[derive(Debug, Clone)]
enum Obligation {
    Move(String, Place),
    SetState(String, ContainerState),
    Hold(String),
}

/// Abstract execution state used while compiling obligations into primitives.
struct Compiler<'a> {
    belief: &'a RelationGraph,
    free: Option<String>,
    held: Option<String>,
    states: BTreeMap<String, ContainerState>,
    out: Vec<PrimitiveAction>,
}

impl<'a> Compiler<'a> {
    fn new(belief: &'a RelationGraph) -> Self {
        Self {
            belief,
            free: belief.free_surface().map(|n| n.id.clone()),
            held: belief.held().map(|n| n.id.clone()),
            states: belief
                .nodes
                .values()
                .filter(|n| n.is_container())
                .map(|n| (n.id.clone(), n.container_state))
                .collect(),
            out: Vec::new(),
        }
    }

    fn ensure_empty(&mut self) {
        if let (Some(h), Some(free)) = (self.held.clone(), self.free.clone()) {
            self.out.push(PrimitiveAction::place(h, Place::On(free)));
            self.held = None;
        }
    }

    fn set_state(&mut self, c: &str, to: ContainerState) {
        let Some(&now) = self.states.get(c) else { return };
        if now == to {
            return;
        }
        self.ensure_empty();
        self.out.push(match to {
            ContainerState::Open => PrimitiveAction::open(c),
            _ => PrimitiveAction::close(c),
        });
        self.states.insert(c.to_string(), to);
    }

    fn closed_container(&self, place: &Place) -> Option<String> {
        match place {
            Place::Inside(d) if self.states.get(d) == Some(&ContainerState::Closed) => Some(d.clone()),
            _ => None,
        }
    }

    fn grasp(&mut self, o: &str) {
        if self.held.as_deref() == Some(o) {
            return;
        }
        self.ensure_empty();
        if let Some(Location::Inside(c)) = self.belief.node(o).map(|n| n.location.clone()) {
            self.set_state(&c, ContainerState::Open);
        }
        self.out.push(PrimitiveAction::grasp(o));
        self.held = Some(o.to_string());
    }

    fn run(&mut self, ob: &Obligation) {
        match ob {
            Obligation::Move(o, dst) => {
                if let Some(d) = self.closed_container(dst) {
                    if self.held.as_deref() == Some(o.as_str()) {
                        self.ensure_empty();
                    }
                    if self.held.as_deref() != Some(o.as_str()) {
                        self.ensure_empty();
                        self.set_state(&d, ContainerState::Open);
                    }
                }
                self.grasp(o);
                self.out.push(PrimitiveAction::place(o.clone(), dst.clone()));
                self.held = None;
            }
            Obligation::SetState(c, s) => self.set_state(c, *s),
            Obligation::Hold(o) => self.grasp(o),
        }
    }
}

/// The reference planner: deterministic goal regression over a belief graph.
#[derive(Debug, Clone)]
pub struct SymbolicPlanner {
    pub caps: Capabilities,
    pub memory: PlannerMemory,
    rng: ChaCha8Rng,
}

impl SymbolicPlanner {
    pub fn new(caps: Capabilities, seed: u64) -> Self {
        Self {
            caps,
            memory: PlannerMemory::default(),
            rng: ChaCha8Rng::seed_from_u64(seed ^ GUESS_STREAM),
        }
    }

    fn pick(&mut self, n: usize) -> usize {
        (self.rng.next_u64() % n as u64) as usize
    }

    /// Container an action has to reach, when it has a front zone.
    fn reach_target(action: &PrimitiveAction, g: &RelationGraph) -> Option<String> {
        let t = match action.verb {
            Verb::Open | Verb::Close => Some(action.object.clone()),
            Verb::Grasp => g.node(&action.object).and_then(|n| n.location.container().map(str::to_string)),
            Verb::Place => match &action.destination {
                Some(Place::Inside(d)) => Some(d.clone()),
                _ => None,
            },
        }?;
        g.node(&t)?.front_zone.is_some().then_some(t)
    }

    fn absorb(&mut self, fb: &Feedback, g: &RelationGraph) {
        let action = fb.detail.action.clone();
        let generic = match fb.reason {
            FailureReason::ObstacleBlocking if self.caps.reason_aware => {
                if let (Some(b), Some(t)) = (
                    fb.detail.blocker.clone(),
                    action.as_ref().and_then(|a| Self::reach_target(a, g)),
                ) {
                    self.memory.blockers.entry(t).or_default().insert(b);
                }
                false
            }
            FailureReason::PrimitiveFailed | FailureReason::ObstacleBlocking => true,
            _ => false,
        };
        let Some(action) = action else {
            self.memory.failure_streak = None;
            return;
        };
        if !generic {
            self.memory.failure_streak = None;
            if fb.action_took_effect() && action.verb == Verb::Place {
                for s in self.memory.suspects.values_mut() {
                    if s.object.as_deref() == Some(action.object.as_str()) {
                        s.cleared = true;
                    }
                }
            }
            return;
        }
        let count = match &self.memory.failure_streak {
            Some((a, n)) if *a == action => n + 1,
            _ => 1,
        };
        self.memory.failure_streak = Some((action.clone(), count));
        let blind = !self.caps.relational || !self.caps.reason_aware;
        if blind && count >= SUSPECT_AFTER {
            if let Some(t) = Self::reach_target(&action, g) {
                if !self.memory.suspects.contains_key(&t) {
                    let pool: Vec<String> = g
                        .nodes_in_order()
                        .into_iter()
                        .filter(|n| n.is_item() && matches!(n.location, Location::On(_)))
                        .map(|n| n.id.clone())
                        .collect();
                    let i = self.pick(pool.len() + 1);
                    let object = i.checked_sub(1).map(|k| pool[k].clone());
                    self.memory.suspects.insert(t, Suspect { object, cleared: false });
                }
            }
        }
    }

    /// Concrete destination for a place, or a placeholder token, or `None` when unsatisfiable.
    fn destination(
        &mut self,
        place: &PlaceSpec,
        belief: &RelationGraph,
        tokens: &mut BTreeMap<String, ContainerQuery>,
    ) -> Option<Place> {
        let q = match place {
            PlaceSpec::On(s) => return Some(Place::On(s.clone())),
            PlaceSpec::Inside(c) => return Some(Place::Inside(c.clone())),
            PlaceSpec::InsideMatching(q) => q,
        };
        if let Some(id) = self.memory.guesses.get(q).or_else(|| self.memory.resolved.get(q)) {
            return Some(Place::Inside(id.clone()));
        }
        match q.identified(belief) {
            Truth::True => {
                let id = q.satisfying(belief).into_iter().next()?;
                self.memory.resolved.insert(q.clone(), id.clone());
                Some(Place::Inside(id))
            }
            Truth::False => None,
            Truth::Unknown if self.caps.explore => {
                let token = match tokens.iter().find(|(_, v)| *v == q) {
                    Some((t, _)) => t.clone(),
                    None => format!("{PLACEHOLDER_PREFIX}{}", tokens.len()),
                };
                tokens.insert(token.clone(), q.clone());
                Some(Place::Inside(token))
            }
            Truth::Unknown => self.guess(q, belief).map(Place::Inside),
        }
    }

    /// Commits a uniformly drawn candidate for an undecided query.
    fn guess(&mut self, q: &ContainerQuery, belief: &RelationGraph) -> Option<String> {
        if let Some(id) = self.memory.guesses.get(q) {
            return Some(id.clone());
        }
        let cands: Vec<String> = q.candidates(belief).into_iter().map(|n| n.id.clone()).collect();
        if cands.is_empty() {
            return None;
        }
        let id = cands[self.pick(cands.len())].clone();
        self.memory.guesses.insert(q.clone(), id.clone());
        Some(id)
    }

    fn obligations(
        &mut self,
        unmet: &[GoalPredicate],
        belief: &RelationGraph,
        tokens: &mut BTreeMap<String, ContainerQuery>,
        residual: &mut Vec<GoalPredicate>,
    ) -> Vec<Obligation> {
        let free = belief.free_surface().map(|n| n.id.clone());
        let (mut evict, mut moves, mut states, mut holds) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let mut moved: BTreeSet<String> = BTreeSet::new();
        for c in unmet {
            match c {
                GoalPredicate::At { object, place } => {
                    let dst = self.destination(place, belief, tokens);
                    let concrete = match &dst {
                        Some(Place::Inside(t)) => PlaceSpec::Inside(t.clone()),
                        _ => place.clone(),
                    };
                    residual.push(GoalPredicate::at(object.clone(), concrete.clone()));
                    if object.select(belief, None).is_empty() && !self.caps.explore {
                        if let Some(id) = self.guess(&ContainerQuery::contains_match(object.clone()), belief) {
                            states.push(Obligation::SetState(id, ContainerState::Open));
                        }
                    }
                    let Some(dst) = dst else { continue };
                    for n in object.select(belief, None) {
                        let leaf = GoalPredicate::at(Selector::id(&n.id), concrete.clone());
                        if eval_predicate(&leaf, belief) != Truth::True && moved.insert(n.id.clone()) {
                            moves.push(Obligation::Move(n.id.clone(), dst.clone()));
                        }
                    }
                }
                GoalPredicate::ContainsOnly { container, attribute } => {
                    residual.push(c.clone());
                    let Some(free) = &free else { continue };
                    for holder in container.select(belief, None) {
                        for item in belief.contents_of(&holder.id) {
                            if !item.has_attribute(attribute) && moved.insert(item.id.clone()) {
                                evict.push(Obligation::Move(item.id.clone(), Place::On(free.clone())));
                            }
                        }
                    }
                }
                GoalPredicate::ContainerStateIs { container, state } => {
                    residual.push(c.clone());
                    for n in container.select(belief, None) {
                        states.push(Obligation::SetState(n.id.clone(), *state));
                    }
                }
                GoalPredicate::Holds { object } => {
                    residual.push(c.clone());
                    if let Some(n) = object.select(belief, None).first() {
                        holds.push(Obligation::Hold(n.id.clone()));
                    }
                }
                GoalPredicate::AnyOf(ps) => {
                    if let Some(first) = ps.first() {
                        let inner = conjuncts(first, belief);
                        let mut sub = Vec::new();
                        moves.extend(self.obligations(&inner, belief, tokens, &mut sub));
                        residual.push(c.clone());
                    }
                }
                _ => residual.push(c.clone()),
            }
        }
        evict.into_iter().chain(moves).chain(states).chain(holds).collect()
    }

    /// Clearing moves owed to reported blockers and committed suspects.
    fn clearing(&self, g: &RelationGraph) -> Vec<(String, Obligation)> {
        let Some(free) = g.free_surface().map(|n| n.id.clone()) else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for (t, bs) in &self.memory.blockers {
            let still: Vec<String> = g.obstacles_for(t).into_iter().map(|n| n.id.clone()).collect();
            for b in bs.iter().filter(|b| still.contains(b)) {
                out.push((t.clone(), Obligation::Move(b.clone(), Place::On(free.clone()))));
            }
        }
        for (t, s) in &self.memory.suspects {
            if let (Some(x), false) = (&s.object, s.cleared) {
                if g.node(x).is_some_and(|n| n.location != Location::Gripper) {
                    out.push((t.clone(), Obligation::Move(x.clone(), Place::On(free.clone()))));
                }
            }
        }
        out
    }

    fn compile(&self, belief: &RelationGraph, obligations: &[Obligation], g: &RelationGraph) -> Vec<PrimitiveAction> {
        let mut draft = Compiler::new(belief);
        obligations.iter().for_each(|o| draft.run(o));
        let touched: BTreeSet<String> = draft
            .out
            .iter()
            .filter_map(|a| Self::reach_target(a, belief))
            .collect();
        let pre: Vec<Obligation> = self
            .clearing(g)
            .into_iter()
            .filter(|(t, _)| touched.contains(t))
            .map(|(_, o)| o)
            .collect();
        if pre.is_empty() {
            return draft.out;
        }
        let mut full = Compiler::new(belief);
        pre.iter().chain(obligations).for_each(|o| full.run(o));
        full.out
    }

    fn restoration(&self, g: &RelationGraph, belief: &RelationGraph) -> StagePlanBundle {
        let opened = self.memory.opened_by_us(g);
        if !self.caps.restore || opened.is_empty() {
            return StagePlanBundle::finished();
        }
        let obligations: Vec<Obligation> = opened
            .iter()
            .map(|n| Obligation::SetState(n.id.clone(), ContainerState::Closed))
            .collect();
        let goals: Vec<GoalPredicate> = opened
            .iter()
            .map(|n| GoalPredicate::ContainerStateIs {
                container: Selector::id(&n.id),
                state: ContainerState::Closed,
            })
            .collect();
        StagePlanBundle::completion(self.compile(belief, &obligations, g), conjunction(goals))
    }

    /// One planning call: update memory from the percept and feedback, then plan.
    pub fn plan(&mut self, g: &RelationGraph, goal: &GoalPredicate, feedback: Option<&Feedback>) -> StagePlanBundle {
        self.memory.observe(g);
        if let Some(fb) = feedback {
            self.absorb(fb, g);
        }
        let belief = self.memory.belief(g);
        if eval_predicate(goal, &belief) == Truth::True {
            return self.restoration(g, &belief);
        }

        let missing: Vec<ContainerQuery> = if self.caps.explore {
            undecided_queries(goal, &belief)
                .into_iter()
                .filter(|q| !self.memory.resolved.contains_key(q))
                .collect()
        } else {
            Vec::new()
        };

        let unmet: Vec<GoalPredicate> = conjuncts(goal, &belief)
            .into_iter()
            .filter(|c| eval_predicate(c, &belief) != Truth::True)
            .collect();
        let mut tokens = BTreeMap::new();
        let mut residual = Vec::new();
        let obligations = self.obligations(&unmet, &belief, &mut tokens, &mut residual);
        let complete_goal = conjunction(residual);

        if missing.is_empty() {
            let plan = self.compile(&belief, &obligations, g);
            return StagePlanBundle::completion(plan, complete_goal);
        }

        let mut opens = Vec::new();
        for q in &missing {
            for c in q.candidates(&belief) {
                if q.holds_for(c, &belief) == Truth::Unknown
                    && !opens.iter().any(|o: &Obligation| matches!(o, Obligation::SetState(id, _) if id == &c.id))
                {
                    opens.push(Obligation::SetState(c.id.clone(), ContainerState::Open));
                }
            }
        }
        let explore_goal = conjunction(missing.into_iter().map(|query| GoalPredicate::Identified { query }).collect());
        StagePlanBundle {
            explore_plan: Some(self.compile(&belief, &opens, g)),
            explore_goal: Some(explore_goal),
            complete_plan: Some(self.compile(&belief, &obligations, g)),
            complete_goal: Some(complete_goal),
            placeholders: tokens,
        }
    }
}

fn conjunction(mut ps: Vec<GoalPredicate>) -> GoalPredicate {
    if ps.len() == 1 {
        ps.remove(0)
    } else {
        GoalPredicate::AllOf(ps)
    }
}

impl PlannerBackend for SymbolicPlanner {
    fn generate(
        &mut self,
        g: &RelationGraph,
        goal: &GoalPredicate,
        feedback: Option<&Feedback>,
    ) -> Result<StagePlanBundle, PlannerError> {
        Ok(self.plan(g, goal, feedback))
    }

    fn memory(&self) -> Option<&PlannerMemory> {
        Some(&self.memory)
    }
}
