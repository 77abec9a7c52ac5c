//! Finite-domain constraint solver built around compact-table propagation
//! for positive table constraints.
//!
//! The propagator keeps the set of still-valid tuples of each table in a
//! packed bitset (`currTable`) and intersects it with per-value support rows
//! to enforce generalized arc consistency. Both phases of the propagator —
//! the table update and the domain filtering — exist in a serial form and in
//! data-parallel forms that run on a portable grid/block executor, so the
//! same constraint can be propagated by four interchangeable backends
//! (`serial`, `u`, `f`, `uf`).
//!
//! The crate also ships a small DFS engine with a bounds-consistent linear
//! equality propagator, a JSON model format with a CLI, two benchmark
//! instance generators, and brute-force oracles plus a benchmark harness
//! used to cross-check the propagators.

pub mod bitset;
pub mod engine;
pub mod exec;
pub mod gen;
pub mod grid;
pub mod model;
pub mod state;
pub mod table;
pub mod verify;

pub use bitset::WordArray;
pub use engine::{
    CpResult, Inconsistency, LinearEq, SearchConfig, SearchMode, SearchOutcome, SearchStats,
    SearchStatus, Solver, ValueHeuristic,
};
pub use exec::{Executor, GridSpec, ReduceOp};
pub use state::{DomainStore, VarId};
pub use table::{Backend, TableConstraint};
