//! The benchmark corpus shipped under `benchmarks/`.

use crate::nav::NavConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expected {
    Feasible,
    Infeasible,
}

#[derive(Debug, Clone, Copy)]
pub struct BenchCase {
    pub name: &'static str,
    pub file: &'static str,
    pub source: &'static str,
    pub expected: Expected,
    /// Overrides the default state budget.
    pub max_states: Option<u64>,
}

impl BenchCase {
    pub fn config(&self, base: &NavConfig) -> NavConfig {
        let mut c = base.clone();
        if let Some(m) = self.max_states {
            c.max_states = c.max_states.max(m);
        }
        c
    }
}

macro_rules! case {
    ($name:literal, $file:literal, $exp:ident) => {
        case!($name, $file, $exp, None)
    };
    ($name:literal, $file:literal, $exp:ident, $states:expr) => {
        BenchCase {
            name: $name,
            file: $file,
            source: include_str!(concat!("../../../benchmarks/", $file)),
            expected: Expected::$exp,
            max_states: $states,
        }
    };
}

/// The nine benchmarks, sorted by name.
pub const CASES: [BenchCase; 9] = [
    case!("DOIF", "doif.ln", Feasible),
    case!("DOIFex", "doifex.ln", Feasible),
    case!("EQCNT", "eqcnt.ln", Feasible),
    case!("EQCNTex", "eqcntex.ln", Infeasible, Some(1_000_000)),
    case!("HW", "hw.ln", Feasible),
    case!("HWM", "hwm.ln", Feasible, Some(1_000_000)),
    case!("Hello", "hello.ln", Feasible),
    case!("OneLoop", "oneloop.ln", Infeasible),
    case!("TwoLoops", "twoloops.ln", Infeasible),
];

/// The running example and its refuted variant.
pub const RUNNING_EXAMPLE: &str = include_str!("../../../benchmarks/fig1.ln");
pub const RUNNING_EXAMPLE_A17: &str = include_str!("../../../benchmarks/fig1_a17.ln");

pub fn find(name: &str) -> Option<&'static BenchCase> {
    CASES.iter().find(|c| c.name.eq_ignore_ascii_case(name))
}
