//! Closed-loop task planning over relation graphs, with a seeded tabletop
//! simulator and a benchmark harness.

pub mod action;
pub mod feedback;
pub mod geometry;
pub mod graph;
pub mod harness;
pub mod llm;
pub mod orchestrator;
pub mod perception;
pub mod planner;
pub mod predicate;
pub mod reflection;
pub mod scene;
pub mod validator;
pub mod world;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/relation-graph.md")]
    mod relation_graph {}
    #[doc = include_str!("../../../book/src/goals.md")]
    mod goals {}
    #[doc = include_str!("../../../book/src/world.md")]
    mod world {}
    #[doc = include_str!("../../../book/src/planning.md")]
    mod planning {}
    #[doc = include_str!("../../../book/src/reflection.md")]
    mod reflection {}
    #[doc = include_str!("../../../book/src/validation.md")]
    mod validation {}
    #[doc = include_str!("../../../book/src/loop.md")]
    mod closed_loop {}
    #[doc = include_str!("../../../book/src/backends.md")]
    mod backends {}
    #[doc = include_str!("../../../book/src/benchmarks.md")]
    mod benchmarks {}
}
