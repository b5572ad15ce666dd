//! The three phases end to end, with witness validation.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use crate::chain::{extract_chains, ChainOptions, ChainProgramForm};
use crate::constraints::{build_all, Phase2};
use crate::error::{Error, Result};
use crate::feasibility::Witness;
use crate::interp::{run_program, ExecResult, DEFAULT_STEP_LIMIT};
use crate::ir::ast::Program;
use crate::ir::cfg::{build_cfg, Cfg};
use crate::ir::normalize::normalize_assignments;
use crate::ir::parser::parse_program;
use crate::nav::{NavConfig, Navigator, Outcome};

/// Every tally reported for one run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RunStats {
    pub chains_root: usize,
    pub chains_all: usize,
    pub elim: usize,
    pub constraints: usize,
    pub sstat: u64,
    pub csol_initial: u64,
    pub csol_rest: u64,
    pub smt: u64,
    pub pc_len: usize,
    pub unknown: u64,
    pub backtracks: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Timings {
    pub chains_ms: f64,
    pub constraints_ms: f64,
    pub navigation_ms: f64,
}

impl Timings {
    pub fn total_ms(&self) -> f64 {
        self.chains_ms + self.constraints_ms + self.navigation_ms
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub outcome: Outcome,
    pub stats: RunStats,
    pub timings: Timings,
}

impl RunReport {
    pub fn witness(&self) -> Option<&Witness> {
        match &self.outcome {
            Outcome::Feasible { witness, .. } => Some(witness),
            _ => None,
        }
    }

    pub fn to_json(&self) -> Value {
        let mut v = json!({
            "outcome": self.outcome.name(),
            "stats": self.stats,
            "timings_ms": self.timings,
        });
        match &self.outcome {
            Outcome::Feasible { root, pc, witness } => {
                v["root"] = json!(format!("c{root}"));
                v["pc"] = pc.lits.iter().map(|l| l.to_string()).collect();
                let w: serde_json::Map<String, Value> =
                    witness.iter().map(|(k, x)| (k.to_string(), big_json(x))).collect();
                v["witness"] = Value::Object(w);
            }
            Outcome::Infeasible { evidence } => v["evidence"] = json!(evidence),
            Outcome::Inconclusive { reason } => v["reason"] = json!(reason),
        }
        v
    }
}

/// Result of the first two phases.
pub struct Prepared {
    pub program: Program,
    pub cfg: Cfg,
    pub chains: ChainProgramForm,
    pub phase2: Phase2,
    pub arrays: BTreeMap<String, usize>,
    pub timings: Timings,
}

pub fn prepare(src: &str) -> Result<Prepared> {
    let t = Instant::now();
    let program = parse_program(src)?;
    let cfg = normalize_assignments(&build_cfg(&program)?)?;
    let chains = extract_chains(&cfg, ChainOptions::default())?;
    let chains_ms = ms(t);
    let t = Instant::now();
    let arrays: BTreeMap<String, usize> =
        program.inputs.iter().filter_map(|d| d.len.map(|n| (d.name.clone(), n))).collect();
    let phase2 = build_all(&chains, &cfg.scalars, &arrays)?;
    let timings = Timings { chains_ms, constraints_ms: ms(t), navigation_ms: 0.0 };
    Ok(Prepared { program, cfg, chains, phase2, arrays, timings })
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1000.0
}

/// Run all phases. A feasible outcome is only reported once its witness
/// drives the interpreter to the target.
pub fn analyze_source(src: &str, config: &NavConfig) -> Result<RunReport> {
    let p = prepare(src)?;
    let t = Instant::now();
    let mut nav = Navigator::new(&p.chains, &p.phase2, &p.cfg.scalars, &p.arrays, config.clone());
    let outcome = nav.run();
    let mut timings = p.timings.clone();
    timings.navigation_ms = ms(t);
    validate(&p.program, &outcome)?;
    let ns = &nav.stats;
    let stats = RunStats {
        chains_root: p.chains.roots.len(),
        chains_all: p.chains.chains.len(),
        elim: p.phase2.eliminated.len(),
        constraints: p.phase2.total_constraints(),
        sstat: ns.sstat,
        csol_initial: ns.csol_initial,
        csol_rest: ns.csol_rest,
        smt: ns.smt,
        pc_len: match &outcome {
            Outcome::Feasible { pc, .. } => pc.len(),
            _ => 0,
        },
        unknown: ns.unknown,
        backtracks: ns.backtracks,
    };
    Ok(RunReport { outcome, stats, timings })
}

/// Replay a feasible outcome's witness on the interpreter.
pub fn validate(program: &Program, outcome: &Outcome) -> Result<()> {
    if let Outcome::Feasible { witness, .. } = outcome {
        let r = run_program(program, witness, DEFAULT_STEP_LIMIT);
        if r != ExecResult::ReachedTarget {
            return Err(Error::ValidationFailure(format!("witness ends with {r:?}")));
        }
    }
    Ok(())
}

fn big_json(x: &num_bigint::BigInt) -> Value {
    match i64::try_from(x) {
        Ok(v) => json!(v),
        Err(_) => json!(x.to_string()),
    }
}
