//! Phase 3: symbolic execution of the chain program form, steered at loop
//! nodes by the counter constraint systems, with backtracking.

use std::collections::{BTreeMap, BTreeSet};
use std::rc::Rc;
use std::time::{Duration, Instant};

use num_traits::ToPrimitive;
use serde::Serialize;

use crate::chain::{ChainId, ChainKind, ChainProgramForm, Instr};
use crate::constraints::{ConstraintSystem, Literal, Phase2};
use crate::counter_solver::{direction_in, Direction, is_solution, reachable_box, solve_intervals, CounterValuation};
use crate::feasibility::{check_sat, PathCondition, SatResult, Witness};
use crate::ir::ast::{BinOp, Expr};
use crate::smtlib::check_sat_external;
use crate::sym::{Atom, Counter, InputSym, Poly, ResetRef, SymExpr};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NavConfig {
    /// Maximum number of chain nodes executed.
    pub max_states: u64,
    /// Maximum value of any single counter.
    pub max_counter: u64,
    pub timeout: Duration,
    /// Shell command of an external SMT-LIB solver, consulted when the
    /// built-in procedure answers unknown.
    pub external_smt: Option<String>,
    /// Try roots and tie-break subchains by descending id.
    pub reverse: bool,
}

impl Default for NavConfig {
    fn default() -> Self {
        NavConfig {
            max_states: 100_000,
            max_counter: 10_000,
            timeout: Duration::from_secs(60),
            external_smt: None,
            reverse: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Evidence {
    /// Every root chain was refuted before navigation.
    EliminatedRoots,
    /// Navigation explored all options without reaching the target.
    ExhaustedSearch,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Feasible { root: ChainId, pc: PathCondition, witness: Witness },
    Infeasible { evidence: Evidence },
    Inconclusive { reason: String },
}

impl Outcome {
    pub fn name(&self) -> &'static str {
        match self {
            Outcome::Feasible { .. } => "feasible",
            Outcome::Infeasible { .. } => "infeasible",
            Outcome::Inconclusive { .. } => "inconclusive",
        }
    }
}

/// Navigation tallies.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Stats {
    /// Chain nodes executed.
    pub sstat: u64,
    /// Interval solves on chain entry.
    pub csol_initial: u64,
    /// Interval solves at loop-node decisions.
    pub csol_rest: u64,
    /// Path-condition satisfiability checks.
    pub smt: u64,
    /// Checks answered unknown, plus literals outside the solver fragment.
    pub unknown: u64,
    pub backtracks: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Opt {
    Continue,
    Sub(ChainId),
}

#[derive(Debug, Clone)]
struct Frame {
    chain: ChainId,
    node: usize,
    system: Rc<ConstraintSystem>,
}

#[derive(Debug, Clone)]
struct ExecState {
    store: BTreeMap<String, SymExpr>,
    counters: CounterValuation,
    /// Shared with the snapshots at decision points; cloned on write.
    pc: Rc<Vec<Rc<Literal>>>,
    witness: Rc<Witness>,
    frames: Vec<Frame>,
}

struct DecisionPoint {
    state: ExecState,
    /// Subchains not tried yet, in preference order.
    untried: Vec<ChainId>,
    continue_left: bool,
    cache: Option<Rc<Guide>>,
}

impl DecisionPoint {
    fn take(&mut self, opt: Opt) {
        match opt {
            Opt::Continue => self.continue_left = false,
            Opt::Sub(s) => {
                if let Some(i) = self.untried.iter().position(|&x| x == s) {
                    self.untried.remove(i);
                }
            }
        }
    }
}

/// What the counters say at a loop node.
#[derive(Debug, Clone)]
enum Guide {
    /// No solution is reachable from the current counters.
    Dead,
    Solved,
    Improve(Direction),
}

enum Dead {
    Pruned,
    /// Pruned without a proof (solver unknown, unsupported literal, or a
    /// budget); an exhausted search is then inconclusive.
    Tainted,
}

enum Step {
    Continue,
    Decide,
    Target,
    Dead(Dead),
}

pub struct Navigator<'a> {
    cpf: &'a ChainProgramForm,
    p2: &'a Phase2,
    cfg: NavConfig,
    scalars: Vec<String>,
    arrays: BTreeMap<String, usize>,
    /// Counters incremented when a chain completes.
    counters_of: BTreeMap<ChainId, Vec<Counter>>,
    closures: BTreeMap<ChainId, BTreeSet<ChainId>>,
    pub stats: Stats,
    tainted: bool,
    started: Instant,
}

fn reset_of(cpf: &ChainProgramForm, owner: ChainId) -> ResetRef {
    match cpf.chains[owner].kind {
        ChainKind::Root => ResetRef::Root,
        ChainKind::Sub => ResetRef::Chain(owner),
    }
}

impl<'a> Navigator<'a> {
    pub fn new(
        cpf: &'a ChainProgramForm,
        p2: &'a Phase2,
        scalars: &[String],
        arrays: &BTreeMap<String, usize>,
        cfg: NavConfig,
    ) -> Self {
        let mut counters_of: BTreeMap<ChainId, Vec<Counter>> = BTreeMap::new();
        for c in &cpf.chains {
            let mut ks: Vec<Counter> = c.parents.iter().map(|(p, _)| Counter::new(c.id, reset_of(cpf, *p))).collect();
            ks.sort();
            ks.dedup();
            counters_of.insert(c.id, ks);
        }
        let closures = cpf.chains.iter().map(|c| (c.id, cpf.closure(c.id))).collect();
        Navigator {
            cpf,
            p2,
            cfg,
            scalars: scalars.to_vec(),
            arrays: arrays.clone(),
            counters_of,
            closures,
            stats: Stats::default(),
            tainted: false,
            started: Instant::now(),
        }
    }

    /// Navigate every surviving root in order.
    pub fn run(&mut self) -> Outcome {
        self.started = Instant::now();
        let mut roots: Vec<ChainId> =
            self.cpf.roots.iter().copied().filter(|r| !self.p2.eliminated.contains(r)).collect();
        if roots.is_empty() {
            return Outcome::Infeasible { evidence: Evidence::EliminatedRoots };
        }
        if self.cfg.reverse {
            roots.reverse();
        }
        for root in roots {
            match self.run_root(root) {
                Ok(Some((pc, witness))) => return Outcome::Feasible { root, pc, witness },
                Ok(None) => {}
                Err(reason) => return Outcome::Inconclusive { reason },
            }
        }
        if self.tainted {
            Outcome::Inconclusive { reason: "search pruned branches without proof".into() }
        } else {
            Outcome::Infeasible { evidence: Evidence::ExhaustedSearch }
        }
    }

    fn budget(&self) -> Result<(), String> {
        if self.stats.sstat > self.cfg.max_states {
            return Err(format!("state budget of {} exhausted", self.cfg.max_states));
        }
        if self.started.elapsed() > self.cfg.timeout {
            return Err(format!("time budget of {:?} exhausted", self.cfg.timeout));
        }
        Ok(())
    }

    /// Enter a chain: reset its counters and instantiate its system with
    /// the current store. `false` if the system is already unsatisfiable.
    fn enter(&mut self, st: &mut ExecState, chain: ChainId) -> bool {
        let reset = ResetRef::Chain(chain);
        for (k, v) in st.counters.iter_mut() {
            if k.reset == reset {
                *v = 0;
            }
        }
        let store = st.store.clone();
        let sys = self.p2.systems[chain].instantiate(&|a| match a {
            Atom::Init(v) => store.get(v).cloned(),
            _ => None,
        });
        let Some(sys) = sys else { return false };
        if !sys.is_empty() {
            self.stats.csol_initial += 1;
            if solve_intervals(&sys).unsat {
                return false;
            }
        }
        st.frames.push(Frame { chain, node: 0, system: Rc::new(sys) });
        true
    }

    fn run_root(&mut self, root: ChainId) -> Result<Option<(PathCondition, Witness)>, String> {
        let mut st = ExecState {
            store: self.scalars.iter().map(|v| (v.clone(), SymExpr::int(0))).collect(),
            counters: CounterValuation::new(),
            pc: Rc::default(),
            witness: Rc::default(),
            frames: Vec::new(),
        };
        if !self.enter(&mut st, root) {
            return Ok(None);
        }
        let mut stack: Vec<DecisionPoint> = Vec::new();
        let mut current = Some(st);
        loop {
            self.budget()?;
            let Some(mut st) = current.take() else {
                // Backtrack to the latest decision point with an option left.
                let Some(dp) = stack.last_mut() else { return Ok(None) };
                self.stats.backtracks += 1;
                match self.next_option(dp) {
                    None => {
                        stack.pop();
                    }
                    Some(opt) => {
                        dp.take(opt);
                        let mut next = dp.state.clone();
                        if self.apply(&mut next, opt) {
                            current = Some(next);
                        }
                    }
                }
                continue;
            };
            match self.step(&mut st) {
                Step::Continue => current = Some(st),
                Step::Target => {
                    let pc = PathCondition { lits: st.pc.iter().map(|l| (**l).clone()).collect() };
                    return Ok(Some((pc, Rc::unwrap_or_clone(st.witness))));
                }
                Step::Dead(d) => {
                    if matches!(d, Dead::Tainted) {
                        self.tainted = true;
                    }
                }
                Step::Decide => {
                    let mut dp = self.decision_point(st);
                    if let Some(opt) = self.next_option(&mut dp) {
                        dp.take(opt);
                        let mut next = dp.state.clone();
                        if self.apply(&mut next, opt) {
                            current = Some(next);
                        }
                        stack.push(dp);
                    }
                }
            }
        }
    }

    /// Take a decision: run a subchain or continue past the loop node.
    fn apply(&mut self, st: &mut ExecState, opt: Opt) -> bool {
        match opt {
            Opt::Continue => {
                // Leaving the loop executes the loop node's own instruction.
                let frame = st.frames.last_mut().expect("frame");
                let instr = self.cpf.chains[frame.chain].nodes[frame.node].instr.clone();
                frame.node += 1;
                match self.exec_instr(st, &instr) {
                    Step::Continue => true,
                    Step::Dead(Dead::Tainted) => {
                        self.tainted = true;
                        false
                    }
                    _ => false,
                }
            }
            Opt::Sub(s) => self.enter(st, s),
        }
    }

    fn frozen(&self, frame: &Frame) -> BTreeSet<Counter> {
        let chain = &self.cpf.chains[frame.chain];
        let reset = reset_of(self.cpf, frame.chain);
        chain.nodes[..frame.node]
            .iter()
            .flat_map(|n| n.loop_subchains.iter().map(|&s| Counter::new(s, reset.clone())))
            .collect()
    }

    /// Choose the next option at a decision point: `None` when no option
    /// is left or the counters cannot reach a solution any more.
    fn decision_point(&self, state: ExecState) -> DecisionPoint {
        let frame = state.frames.last().expect("frame");
        let mut untried = self.cpf.chains[frame.chain].nodes[frame.node].loop_subchains.clone();
        if self.cfg.reverse {
            untried.reverse();
        }
        DecisionPoint { state, untried, continue_left: true, cache: None }
    }

    /// Choose the next option at a decision point: `None` when no option
    /// is left or the counters cannot reach a solution any more.
    fn next_option(&mut self, dp: &mut DecisionPoint) -> Option<Opt> {
        if dp.untried.is_empty() && !dp.continue_left {
            return None;
        }
        let guide = match &dp.cache {
            Some(g) => g.clone(),
            None => {
                let frame = dp.state.frames.last().expect("frame");
                let (g, reusable) = self.choose_chain(frame, &dp.untried, &dp.state.counters);
                let g = Rc::new(g);
                if reusable {
                    dp.cache = Some(g.clone());
                }
                g
            }
        };
        let pick = match &*guide {
            Guide::Dead => return None,
            Guide::Solved => None,
            Guide::Improve(dir) => dp
                .untried
                .iter()
                .copied()
                .find(|s| dir.update.contains(s))
                .or_else(|| dp.untried.iter().copied().find(|s| dir.reset.contains(s))),
        };
        match pick {
            Some(s) => Some(Opt::Sub(s)),
            None if dp.continue_left => Some(Opt::Continue),
            None => dp.untried.first().map(|&s| Opt::Sub(s)),
        }
    }

    /// The decision rule at a loop node, and whether the answer stays
    /// valid as options are used up: it does when no option can reset a
    /// counter of the system.
    fn choose_chain(&mut self, frame: &Frame, untried: &[ChainId], w: &CounterValuation) -> (Guide, bool) {
        let sys = &frame.system;
        if sys.is_empty() {
            return (Guide::Solved, true);
        }
        self.stats.csol_rest += 1;
        let frozen = self.frozen(frame);
        let candidates: Vec<(ChainId, BTreeSet<ChainId>)> =
            untried.iter().map(|&s| (s, self.closures[&s].clone())).collect();
        let resettable: BTreeSet<ChainId> = candidates.iter().flat_map(|(_, c)| c.iter().copied()).collect();
        let reusable = !sys.counters().iter().any(|k| matches!(k.reset, ResetRef::Chain(r) if resettable.contains(&r)));
        let sol = reachable_box(w, sys, &resettable, &frozen);
        let guide = if sol.unsat {
            Guide::Dead
        } else if is_solution(w, sys) {
            Guide::Solved
        } else {
            Guide::Improve(direction_in(w, &sol, &candidates))
        };
        (guide, reusable)
    }

    /// Execute until the next decision, target, or dead end.
    fn step(&mut self, st: &mut ExecState) -> Step {
        let Some(frame) = st.frames.last() else { return Step::Dead(Dead::Pruned) };
        let chain = &self.cpf.chains[frame.chain];
        if frame.node == chain.nodes.len() {
            // Subchain finished: count it and return to the loop node.
            let done = frame.chain;
            st.frames.pop();
            if st.frames.is_empty() {
                return Step::Dead(Dead::Pruned);
            }
            for k in &self.counters_of[&done] {
                let v = st.counters.entry(k.clone()).or_insert(0);
                *v += 1;
                if *v > self.cfg.max_counter {
                    return Step::Dead(Dead::Tainted);
                }
            }
            return Step::Decide;
        }
        let node = &chain.nodes[frame.node];
        if node.is_loop() {
            return Step::Decide;
        }
        let instr = node.instr.clone();
        st.frames.last_mut().unwrap().node += 1;
        self.exec_instr(st, &instr)
    }

    fn exec_instr(&mut self, st: &mut ExecState, instr: &Instr) -> Step {
        self.stats.sstat += 1;
        match instr {
            Instr::Target => Step::Target,
            Instr::Assign { var, value } => match self.eval(value, &st.store) {
                Ok(v) => {
                    st.store.insert(var.clone(), v);
                    Step::Continue
                }
                Err(d) => Step::Dead(d),
            },
            Instr::Assume(cmp) => {
                let (l, r) = match (self.eval(&cmp.lhs, &st.store), self.eval(&cmp.rhs, &st.store)) {
                    (Ok(l), Ok(r)) => (l, r),
                    (Err(d), _) | (_, Err(d)) => return Step::Dead(d),
                };
                let lit = Literal::new(l, cmp.rel, r);
                if let Some(b) = lit.const_value() {
                    return if b { Step::Continue } else { Step::Dead(Dead::Pruned) };
                }
                Rc::make_mut(&mut st.pc).push(Rc::new(lit));
                self.stats.smt += 1;
                match self.check(&relevant_slice(&st.pc)) {
                    SatResult::Sat(w) => {
                        // Literals outside the slice share no symbol with it,
                        // so the previous model still satisfies them.
                        Rc::make_mut(&mut st.witness).extend(w);
                        Step::Continue
                    }
                    SatResult::Unsat => Step::Dead(Dead::Pruned),
                    SatResult::Unknown => {
                        self.stats.unknown += 1;
                        Step::Dead(Dead::Tainted)
                    }
                }
            }
        }
    }

    fn check(&self, pc: &PathCondition) -> SatResult {
        match check_sat(pc) {
            Ok(SatResult::Unknown) | Err(_) => match &self.cfg.external_smt {
                Some(cmd) => match check_sat_external(cmd, pc) {
                    // An external model is only trusted if it checks out.
                    Ok(SatResult::Sat(w)) if pc.holds(&w) => SatResult::Sat(w),
                    Ok(SatResult::Unsat) => SatResult::Unsat,
                    _ => SatResult::Unknown,
                },
                None => SatResult::Unknown,
            },
            Ok(r) => r,
        }
    }

    fn eval(&mut self, e: &Expr, store: &BTreeMap<String, SymExpr>) -> Result<SymExpr, Dead> {
        Ok(match e {
            Expr::Const(c) => SymExpr::Poly(Poly::constant(c.clone())),
            Expr::Var(v) => store
                .get(v)
                .cloned()
                .unwrap_or_else(|| SymExpr::Poly(Poly::input(InputSym::Scalar(v.clone())))),
            Expr::Read(a, idx) => {
                let i = self.eval(idx, store)?;
                let Some(k) = i.as_const() else {
                    self.stats.unknown += 1;
                    return Err(Dead::Tainted);
                };
                match k.to_usize() {
                    Some(k) if self.arrays.get(a).is_some_and(|n| k < *n) => {
                        SymExpr::Poly(Poly::input(InputSym::Elem(a.clone(), k)))
                    }
                    // Out-of-bounds reads end the concrete run.
                    _ => return Err(Dead::Pruned),
                }
            }
            Expr::Neg(x) => -self.eval(x, store)?,
            Expr::Bin(op, a, b) => {
                let (a, b) = (self.eval(a, store)?, self.eval(b, store)?);
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                }
            }
        })
    }
}

/// The literals connected to the last one through shared symbols.
fn relevant_slice(pc: &[Rc<Literal>]) -> PathCondition {
    let syms: Vec<BTreeSet<InputSym>> = pc.iter().map(|l| literal_symbols(l)).collect();
    let mut keep = vec![false; syms.len()];
    let Some(last) = syms.len().checked_sub(1) else { return PathCondition::default() };
    keep[last] = true;
    let mut reach = syms[last].clone();
    loop {
        let mut grew = false;
        for (i, s) in syms.iter().enumerate() {
            if !keep[i] && !s.is_disjoint(&reach) {
                keep[i] = true;
                reach.extend(s.iter().cloned());
                grew = true;
            }
        }
        if !grew {
            break;
        }
    }
    PathCondition { lits: pc.iter().zip(keep).filter(|(_, k)| *k).map(|(l, _)| (**l).clone()).collect() }
}

fn literal_symbols(l: &Literal) -> BTreeSet<InputSym> {
    l.atoms()
        .into_iter()
        .filter_map(|a| match a {
            Atom::Input(s) => Some(s),
            _ => None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{extract_chains, ChainOptions};
    use crate::constraints::build_all;
    use crate::interp::{run_program, ExecResult, DEFAULT_STEP_LIMIT};
    use crate::ir::cfg::build_cfg;
    use crate::ir::normalize::normalize_assignments;
    use crate::ir::parser::parse_program;

    fn navigate(src: &str, cfg: NavConfig) -> (Outcome, Stats) {
        let prog = parse_program(src).unwrap();
        let g = normalize_assignments(&build_cfg(&prog).unwrap()).unwrap();
        let cpf = extract_chains(&g, ChainOptions::default()).unwrap();
        let arrays = prog.inputs.iter().filter_map(|d| d.len.map(|n| (d.name.clone(), n))).collect();
        let p2 = build_all(&cpf, &g.scalars, &arrays).unwrap();
        let mut nav = Navigator::new(&cpf, &p2, &g.scalars, &arrays, cfg);
        let out = nav.run();
        if let Outcome::Feasible { witness, .. } = &out {
            assert_eq!(run_program(&prog, witness, DEFAULT_STEP_LIMIT), ExecResult::ReachedTarget);
        }
        (out, nav.stats)
    }

    fn elem(a: &str, i: usize) -> InputSym {
        InputSym::Elem(a.into(), i)
    }

    #[test]
    fn running_example_is_feasible() {
        let (out, stats) = navigate(include_str!("../../../benchmarks/fig1.ln"), NavConfig::default());
        let Outcome::Feasible { pc, witness, .. } = out else { panic!("{out:?}") };
        assert_eq!(pc.len(), 30);
        let ones = (0..15).filter(|&i| witness[&elem("A", i)] == 1.into()).count();
        let twos = (0..15).filter(|&i| witness[&elem("B", i)] == 2.into()).count();
        assert!(ones > 12);
        assert_eq!(ones + twos, 23);
        assert_eq!(stats.smt, 30);
        assert_eq!(stats.backtracks, 0);
    }

    #[test]
    fn refuted_root_needs_no_states() {
        let (out, stats) = navigate(include_str!("../../../benchmarks/fig1_a17.ln"), NavConfig::default());
        assert_eq!(out, Outcome::Infeasible { evidence: Evidence::EliminatedRoots });
        assert_eq!(stats.sstat, 0);
    }

    const BACKTRACK: &str = "input int A[4];
int c = 0;
for (int i = 0; i < 4; ++i) { if (A[i] == 1) { ++c; } }
if (c == 2 && A[0] == 0 && A[1] == 0) { target; }";

    #[test]
    fn wrong_guess_is_undone() {
        let (out, stats) = navigate(BACKTRACK, NavConfig::default());
        let Outcome::Feasible { witness, .. } = out else { panic!("{out:?}") };
        assert_eq!(witness[&elem("A", 2)], 1.into());
        assert_eq!(witness[&elem("A", 3)], 1.into());
        assert!(stats.backtracks > 0);
    }

    #[test]
    fn reverse_order_also_succeeds() {
        let cfg = NavConfig { reverse: true, ..NavConfig::default() };
        let (out, _) = navigate(BACKTRACK, cfg);
        assert_eq!(out.name(), "feasible");
    }

    #[test]
    fn exhausted_search_is_infeasible() {
        let src = "input int A[2];
int c = 0;
for (int i = 0; i < 2; ++i) { if (A[i] == 1) { ++c; } }
if (c == 1 && A[0] != 1 && A[1] != 1) { target; }";
        let (out, _) = navigate(src, NavConfig::default());
        assert_eq!(out, Outcome::Infeasible { evidence: Evidence::ExhaustedSearch });
    }

    #[test]
    fn symbolic_index_taints_the_search() {
        let src = "input int A[4];
input int n;
if (A[n] == 1 && n == 9) { target; }";
        let (out, stats) = navigate(src, NavConfig::default());
        assert_eq!(out.name(), "inconclusive");
        assert!(stats.unknown > 0);
    }

    #[test]
    fn state_budget_gives_up() {
        let cfg = NavConfig { max_states: 10, ..NavConfig::default() };
        let (out, _) = navigate(include_str!("../../../benchmarks/fig1.ln"), cfg);
        assert_eq!(out.name(), "inconclusive");
    }
}
