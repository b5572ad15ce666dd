//! Loop-navigating symbolic execution for a small imperative language.
//!
//! The pipeline has three phases:
//!
//! 1. the program is parsed, lowered to a control-flow graph and unfolded
//!    into *chain program form* ([`chain`]);
//! 2. every chain is symbolically executed once to express loop-modified
//!    variables as functions of per-path iteration counters, which yields a
//!    system of counter constraints per chain ([`constraints`]);
//! 3. a modified symbolic execution walks the root chains and consults the
//!    counter systems at every loop node to decide which path through the
//!    loop to take next ([`nav`]).
//!
//! [`pipeline`] strings the phases together and [`interp`] provides the
//! concrete interpreter used to validate every witness.

pub mod chain;
pub mod constraints;
pub mod corpus;
pub mod counter_solver;
pub mod error;
pub mod feasibility;
pub mod interp;
pub mod ir;
pub mod nav;
pub mod pipeline;
pub mod smtlib;
pub mod sym;

pub use chain::{Chain, ChainId, ChainKind, ChainNode, ChainOptions, ChainProgramForm, Instr, StopAt};
pub use constraints::{ChainSummary, Constraint, ConstraintSystem, Phase2};
pub use counter_solver::{CounterValuation, IntervalSet, IntervalSolution};
pub use error::{Error, Result};
pub use feasibility::{PathCondition, SatResult, Witness};
pub use interp::ExecResult;
pub use ir::ast::Program;
pub use ir::cfg::{Cfg, Label};
pub use nav::{Evidence, NavConfig, Outcome, Stats};
pub use pipeline::{analyze_source, RunReport, RunStats};
pub use sym::{Atom, Counter, InputSym, Rel, ResetRef, SymExpr};
