//! Numerical laboratory for a coupled Hardy-critical system with
//! Schrödinger–KdV coupling in Emden–Fowler coordinates.

// `!(x > 0.0)` is used on purpose: it rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod closed_forms;
pub mod dual;
pub mod ef_grid;
pub mod emit;
pub mod error;
pub mod functional;
pub mod run;
pub mod scenario;
pub mod solvers;
pub mod verify;

pub use closed_forms::{Dimension, LevelSet, ProfileParams};
pub use ef_grid::{EfGrid, Field, GridSettings, StatePair, WeightSpec};
pub use emit::{emit, EmitSummary, Format};
pub use error::{LabError, Result};
pub use functional::{Problem, ProblemSpec, Slot, Variant};
pub use run::{run_one, run_scenario, Assertion, RunRecord, Status, Timing};
pub use scenario::{Command, Document, Scenario};
pub use verify::{verify_suite, VerifyOptions, VerifySummary};
