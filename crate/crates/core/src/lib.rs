//! A deterministic chase engine for key and inclusion dependencies.
//!
//! The crate covers the whole pipeline from text inputs to answers:
//!
//! - [`model`] and [`constant`]: predicates, facts, dependencies and the total
//!   orders that make each chase step deterministic;
//! - [`dsl`]: the line-oriented schema, dependency and instance formats;
//! - [`validate`]: recognition of conceptual dependency sets (Extended-ER
//!   encodings) with a witnessing entity/relationship/attribute partition;
//! - [`chase`]: the leveled chase with budgets and traces;
//! - [`query`]: conjunctive queries over chase prefixes, a brute-force
//!   reference evaluator, and containment via freezing;
//! - [`lab`]: the family of instances whose chase needs a level linear in
//!   the data size before a query answer appears;
//! - [`render`] and [`cli`]: text, JSON and DOT output and the command line.

pub mod chase;
pub mod cli;
pub mod constant;
pub mod dsl;
pub mod lab;
pub mod model;
pub mod query;
pub mod render;
pub mod validate;

pub use chase::{run_chase, run_chase_traced, Budget, ChaseEngine, ChaseState, ChaseStatus};
pub use constant::{compare_constants, Constant};
pub use model::{
    dependency_sort_key, fact_sort_key, Atom, Database, DependencyRef, DependencySet, Fact, InclusionDependency,
    KeyDependency, Predicate, Schema,
};
pub use query::{
    brute_force_evaluate, check_containment, evaluate_over_prefix, find_homomorphisms, freeze_query, ConjunctiveQuery,
};
pub use validate::{is_cyclic, is_full_width, validate_cd_set, CdPartition};
