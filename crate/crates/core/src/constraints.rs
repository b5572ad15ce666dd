//! Phase 2: symbolic execution of chains, closed forms for loop effects and
//! counter constraint systems.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigInt;
use num_traits::ToPrimitive;
use serde_json::{json, Value};

use crate::chain::{ChainId, ChainKind, ChainProgramForm, Instr};
use crate::counter_solver::solve_intervals;
use crate::error::{Error, Result};
use crate::ir::ast::{BinOp, Cmp, Expr};
use crate::sym::{merge_values, solve_recurrence, Atom, Counter, InputSym, Monomial, Poly, Rel, ResetRef, SymExpr};

/// `lhs rel rhs` over symbolic values.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Literal {
    pub lhs: SymExpr,
    pub rel: Rel,
    pub rhs: SymExpr,
}

impl Literal {
    pub fn new(lhs: SymExpr, rel: Rel, rhs: SymExpr) -> Self {
        Literal { lhs, rel, rhs }
    }

    pub fn has_star(&self) -> bool {
        self.lhs.is_star() || self.rhs.is_star()
    }

    pub fn has_counter(&self) -> bool {
        self.lhs.has_counter() || self.rhs.has_counter()
    }

    pub fn atoms(&self) -> BTreeSet<Atom> {
        let mut s = self.lhs.atoms();
        s.extend(self.rhs.atoms());
        s
    }

    pub fn eval(&self, val: &impl Fn(&Atom) -> Option<BigInt>) -> Option<bool> {
        Some(self.rel.holds(&self.lhs.eval(val)?, &self.rhs.eval(val)?))
    }

    /// `lhs - rhs` as a polynomial, when both sides are polynomials.
    pub fn difference(&self) -> Option<Poly> {
        Some(self.lhs.as_poly()? - self.rhs.as_poly()?)
    }

    pub fn subst(&self, f: &impl Fn(&Atom) -> Option<SymExpr>) -> Literal {
        Literal { lhs: self.lhs.subst(f), rel: self.rel, rhs: self.rhs.subst(f) }
    }

    /// Both sides constant: the truth value.
    pub fn const_value(&self) -> Option<bool> {
        Some(self.rel.holds(&self.lhs.as_const()?, &self.rhs.as_const()?))
    }
}

fn rel_text(r: Rel) -> &'static str {
    match r {
        Rel::Eq => "=",
        r => r.symbol(),
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.lhs, rel_text(self.rel), self.rhs)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constraint {
    pub lit: Literal,
    /// The constraint only applies when the guard holds.
    pub guard: Option<Literal>,
    /// Chain node the constraint was harvested from.
    pub origin: (ChainId, usize),
}

impl Constraint {
    pub fn counters(&self) -> BTreeSet<Counter> {
        let mut atoms = self.lit.atoms();
        if let Some(g) = &self.guard {
            atoms.extend(g.atoms());
        }
        atoms
            .into_iter()
            .filter_map(|a| match a {
                Atom::Counter(c) => Some(c),
                _ => None,
            })
            .collect()
    }

    /// Truth under a full valuation; `None` when some atom has no value.
    pub fn eval(&self, val: &impl Fn(&Atom) -> Option<BigInt>) -> Option<bool> {
        if let Some(g) = &self.guard {
            if !g.eval(val)? {
                return Some(true);
            }
        }
        self.lit.eval(val)
    }

    /// Canonical comparison key: `(lhs - rhs, rel)` plus the guard's.
    pub fn canonical(&self) -> String {
        let canon = |l: &Literal| match l.difference() {
            Some(d) => format!("{d} {} 0", rel_text(l.rel)),
            None => l.to_string(),
        };
        match &self.guard {
            Some(g) => format!("{} if {}", canon(&self.lit), canon(g)),
            None => canon(&self.lit),
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.lit.fmt(f)?;
        if let Some(g) = &self.guard {
            write!(f, " if {g}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConstraintSystem {
    pub owner: ChainId,
    pub constraints: Vec<Constraint>,
}

impl ConstraintSystem {
    pub fn counters(&self) -> BTreeSet<Counter> {
        self.constraints.iter().flat_map(|c| c.counters()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    /// Substitute atoms (typically initial values at chain entry). Returns
    /// `None` if some constraint becomes a constant falsehood.
    pub fn instantiate(&self, f: &impl Fn(&Atom) -> Option<SymExpr>) -> Option<ConstraintSystem> {
        let mut out = ConstraintSystem { owner: self.owner, constraints: Vec::new() };
        for c in &self.constraints {
            let lit = c.lit.subst(f);
            let guard = c.guard.as_ref().map(|g| g.subst(f));
            if lit.has_star() {
                continue;
            }
            let guard = match guard {
                Some(g) if g.has_star() => continue,
                Some(g) => match g.const_value() {
                    Some(false) => continue,
                    Some(true) => None,
                    None => Some(g),
                },
                None => None,
            };
            if guard.is_none() && lit.const_value() == Some(false) {
                return None;
            }
            if lit.const_value() == Some(true) {
                continue;
            }
            out.constraints.push(Constraint { lit, guard, origin: c.origin });
        }
        Some(out)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "owner": self.owner,
            "constraints": self.constraints.iter().map(|c| json!({
                "constraint": c.lit.to_string(),
                "guard": c.guard.as_ref().map(|g| g.to_string()),
                "origin": [c.origin.0, c.origin.1],
            })).collect::<Vec<_>>(),
        })
    }
}

impl fmt::Display for ConstraintSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.constraints.iter().enumerate() {
            writeln!(f, "({}) {c}", i + 1)?;
        }
        Ok(())
    }
}

/// Closed forms computed at one loop node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopValues {
    pub node: usize,
    /// Per subchain: variables it changes, as functions of its counter.
    pub per_sub: BTreeMap<ChainId, BTreeMap<String, SymExpr>>,
    /// Changed variables after any interleaving of the subchains, before
    /// substituting the values at loop entry.
    pub merged: BTreeMap<String, SymExpr>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainSummary {
    pub chain: ChainId,
    /// Value of every variable after one pass, over entry values `a_v`
    /// and the counters of this chain's loop nodes.
    pub values: BTreeMap<String, SymExpr>,
    /// Variables whose final value no longer depends on their entry value.
    pub reset_set: BTreeSet<String>,
    pub loops: Vec<LoopValues>,
    /// Some assumption is statically false: the chain never runs to the end.
    pub infeasible: bool,
}

/// Output of Phase 2 for a whole chain program form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Phase2 {
    pub summaries: Vec<ChainSummary>,
    pub systems: Vec<ConstraintSystem>,
    /// Roots shown infeasible before navigation.
    pub eliminated: Vec<ChainId>,
}

impl Phase2 {
    pub fn total_constraints(&self) -> usize {
        self.systems.iter().map(ConstraintSystem::len).sum()
    }
}

/// The reset a temporary counter resolves to: the chain owning the loop
/// node, which is `Root` when that chain is a root.
fn owner_reset(cpf: &ChainProgramForm, owner: ChainId) -> ResetRef {
    match cpf.chains[owner].kind {
        ChainKind::Root => ResetRef::Root,
        ChainKind::Sub => ResetRef::Chain(owner),
    }
}

/// Replace temporary counters `k_s^v` of subchains `s` associated with a
/// loop node of `owner` by `k_s^owner`.
pub fn resolve_temporary_counters(cpf: &ChainProgramForm, owner: ChainId, e: &SymExpr) -> Result<SymExpr> {
    let subs = loop_subchains_of(cpf, owner);
    resolve_with(cpf, owner, &subs, e)
}

fn loop_subchains_of(cpf: &ChainProgramForm, owner: ChainId) -> BTreeSet<ChainId> {
    cpf.chains[owner].nodes.iter().flat_map(|n| n.loop_subchains.iter().copied()).collect()
}

fn resolve_with(cpf: &ChainProgramForm, owner: ChainId, subs: &BTreeSet<ChainId>, e: &SymExpr) -> Result<SymExpr> {
    for a in e.atoms() {
        if let Atom::Counter(Counter { update, reset: ResetRef::Temp(v) }) = a {
            if !subs.contains(&update) {
                return Err(Error::AmbiguousReset { chain: update, var: v });
            }
        }
    }
    let reset = owner_reset(cpf, owner);
    Ok(e.map_counters(&|c| match &c.reset {
        ResetRef::Temp(_) => Counter::new(c.update, reset.clone()),
        _ => c.clone(),
    }))
}

/// Evaluate a program expression in a symbolic store.
pub fn eval_in_store(
    e: &Expr,
    store: &BTreeMap<String, SymExpr>,
    array_len: &impl Fn(&str) -> Option<usize>,
) -> SymExpr {
    match e {
        Expr::Const(c) => SymExpr::Poly(Poly::constant(c.clone())),
        Expr::Var(v) => store
            .get(v)
            .cloned()
            .unwrap_or_else(|| SymExpr::Poly(Poly::input(InputSym::Scalar(v.clone())))),
        Expr::Read(a, idx) => match eval_in_store(idx, store, array_len).as_const().and_then(|k| k.to_usize()) {
            Some(k) if array_len(a).is_some_and(|n| k < n) => SymExpr::Poly(Poly::input(InputSym::Elem(a.clone(), k))),
            _ => SymExpr::Star,
        },
        Expr::Neg(x) => -eval_in_store(x, store, array_len),
        Expr::Bin(op, a, b) => {
            let (a, b) = (eval_in_store(a, store, array_len), eval_in_store(b, store, array_len));
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
            }
        }
    }
}

pub fn instantiate_cmp(
    c: &Cmp,
    store: &BTreeMap<String, SymExpr>,
    array_len: &impl Fn(&str) -> Option<usize>,
) -> Literal {
    Literal::new(eval_in_store(&c.lhs, store, array_len), c.rel, eval_in_store(&c.rhs, store, array_len))
}

/// Constraints for the exit literal `psi` of a loop node whose subchain
/// counters are `loop_counters`. The previous-iteration companion is added
/// only when the counters enter `lhs - rhs` as a plain unit sum and every
/// iteration is known to start with the negated literal.
pub fn loop_exit_constraints(
    psi: &Literal,
    loop_counters: &BTreeSet<Counter>,
    iterations_start_with_negation: bool,
    origin: (ChainId, usize),
) -> Vec<Constraint> {
    let mut out = vec![Constraint { lit: psi.clone(), guard: None, origin }];
    if !iterations_start_with_negation || loop_counters.is_empty() {
        return out;
    }
    let (Some(l), Some(r)) = (psi.lhs.as_poly(), psi.rhs.as_poly()) else { return out };
    let sum = Poly::from_terms(
        loop_counters.iter().map(|k| (Monomial(vec![Atom::Counter(k.clone())]), BigInt::from(1))),
    );
    let (lc, _) = l.split_counters();
    let (rc, _) = r.split_counters();
    let one = Poly::constant(1);
    let prev = if lc == sum && rc.is_zero() {
        Literal::new(SymExpr::Poly(l - &one), psi.rel.negate(), psi.rhs.clone())
    } else if rc == sum && lc.is_zero() {
        Literal::new(psi.lhs.clone(), psi.rel.negate(), SymExpr::Poly(r - &one))
    } else {
        return out;
    };
    let guard = Literal::new(SymExpr::Poly(sum), Rel::Gt, SymExpr::int(0));
    out.push(Constraint { lit: prev, guard: Some(guard), origin });
    out
}

struct Builder<'a> {
    cpf: &'a ChainProgramForm,
    scalars: &'a [String],
    lens: BTreeMap<String, usize>,
    done: Vec<Option<(ChainSummary, ConstraintSystem)>>,
}

impl Builder<'_> {
    fn array_len(&self, a: &str) -> Option<usize> {
        self.lens.get(a).copied()
    }

    fn build(&mut self, id: ChainId) -> Result<()> {
        if self.done[id].is_some() {
            return Ok(());
        }
        let chain = &self.cpf.chains[id];
        let mut store: BTreeMap<String, SymExpr> = self
            .scalars
            .iter()
            .map(|v| {
                let init = match chain.kind {
                    ChainKind::Root => SymExpr::int(0),
                    ChainKind::Sub => SymExpr::init(v),
                };
                (v.clone(), init)
            })
            .collect();
        let mut system = ConstraintSystem { owner: id, constraints: Vec::new() };
        let mut loops = Vec::new();
        let mut infeasible = false;

        for (idx, node) in chain.nodes.iter().enumerate() {
            if node.is_loop() {
                let lv = self.loop_node(id, idx, &node.loop_subchains)?;
                let entry = store.clone();
                let at_entry = |a: &Atom| match a {
                    Atom::Init(v) => entry.get(v).cloned(),
                    _ => None,
                };
                for (v, f) in &lv.merged {
                    store.insert(v.clone(), f.subst(&at_entry));
                }
                loops.push(lv);
            }
            match &node.instr {
                Instr::Assign { var, value } => {
                    let val = eval_in_store(value, &store, &|a| self.array_len(a));
                    store.insert(var.clone(), val);
                }
                Instr::Assume(cmp) => {
                    let lit = instantiate_cmp(cmp, &store, &|a| self.array_len(a));
                    if lit.has_star() {
                        continue;
                    }
                    if lit.const_value() == Some(false) {
                        infeasible = true;
                        break;
                    }
                    if !lit.has_counter() {
                        continue;
                    }
                    if node.is_loop() {
                        let reset = owner_reset(self.cpf, id);
                        let counters: BTreeSet<Counter> =
                            node.loop_subchains.iter().map(|&s| Counter::new(s, reset.clone())).collect();
                        let negated = cmp.negate();
                        let starts_negated = node.loop_subchains.iter().all(|&s| {
                            self.summary(s).infeasible
                                || matches!(&self.cpf.chains[s].nodes[0].instr, Instr::Assume(c) if *c == negated)
                        });
                        system.constraints.extend(loop_exit_constraints(&lit, &counters, starts_negated, (id, idx)));
                    } else {
                        system.constraints.push(Constraint { lit, guard: None, origin: (id, idx) });
                    }
                }
                Instr::Target => {}
            }
        }

        let reset_set = store
            .iter()
            .filter(|(v, e)| !e.is_star() && !e.atoms().contains(&Atom::Init((*v).clone())))
            .map(|(v, _)| v.clone())
            .collect();
        let summary = ChainSummary { chain: id, values: store, reset_set, loops, infeasible };
        self.done[id] = Some((summary, system));
        Ok(())
    }

    fn summary(&self, id: ChainId) -> &ChainSummary {
        &self.done[id].as_ref().expect("built before use").0
    }

    fn loop_node(&mut self, owner: ChainId, node: usize, subs: &[ChainId]) -> Result<LoopValues> {
        for &s in subs {
            self.build(s)?;
        }
        let live: Vec<ChainId> = subs.iter().copied().filter(|&s| !self.summary(s).infeasible).collect();
        // A variable is invariant across iterations if no live subchain changes it.
        let changed: BTreeSet<String> = live
            .iter()
            .flat_map(|&s| {
                self.summary(s)
                    .values
                    .iter()
                    .filter(|(v, e)| **e != SymExpr::init(v))
                    .map(|(v, _)| v.clone())
                    .collect::<Vec<_>>()
            })
            .collect();
        let invariant = |a: &Atom| match a {
            Atom::Init(w) => !changed.contains(w),
            Atom::Input(_) => true,
            Atom::Counter(_) => false,
        };
        let owned = loop_subchains_of(self.cpf, owner);
        let mut per_sub: BTreeMap<ChainId, BTreeMap<String, SymExpr>> = BTreeMap::new();
        let mut merged = BTreeMap::new();
        for v in &changed {
            let mut closed = Vec::new();
            for &s in &live {
                let f = &self.summary(s).values[v];
                let temp = Counter::new(s, ResetRef::Temp(v.clone()));
                let c = resolve_with(self.cpf, owner, &owned, &solve_recurrence(v, f, &temp, &invariant))?;
                if c != SymExpr::init(v) {
                    per_sub.entry(s).or_default().insert(v.clone(), c.clone());
                }
                closed.push(c);
            }
            merged.insert(v.clone(), merge_values(v, &closed));
        }
        Ok(LoopValues { node, per_sub, merged })
    }
}

/// Run Phase 2 over every chain and prune roots whose systems have no
/// solution.
pub fn build_all(cpf: &ChainProgramForm, scalars: &[String], arrays: &BTreeMap<String, usize>) -> Result<Phase2> {
    let mut b = Builder { cpf, scalars, lens: arrays.clone(), done: vec![None; cpf.chains.len()] };
    for id in 0..cpf.chains.len() {
        b.build(id)?;
    }
    let (summaries, systems): (Vec<_>, Vec<_>) = b.done.into_iter().map(|d| d.expect("all built")).unzip();
    let mut p2 = Phase2 { summaries, systems, eliminated: Vec::new() };
    p2.eliminated = prune_infeasible_roots(cpf, &p2);
    Ok(p2)
}

/// Roots that are statically infeasible or whose system has no solution.
pub fn prune_infeasible_roots(cpf: &ChainProgramForm, p2: &Phase2) -> Vec<ChainId> {
    cpf.roots
        .iter()
        .copied()
        .filter(|&r| p2.summaries[r].infeasible || solve_intervals(&p2.systems[r]).unsat)
        .collect()
}

fn counter_args(e: &SymExpr) -> String {
    let ks: Vec<String> = e
        .atoms()
        .into_iter()
        .filter_map(|a| match a {
            Atom::Counter(c) => Some(c.to_string()),
            _ => None,
        })
        .collect();
    if ks.is_empty() {
        String::new()
    } else {
        format!("({})", ks.join(","))
    }
}

/// Text rendering: closed forms per loop node, then each non-empty system.
pub fn render(cpf: &ChainProgramForm, p2: &Phase2) -> String {
    let mut out = String::new();
    for s in &p2.summaries {
        for lv in &s.loops {
            out.push_str(&format!("c{} node {}:\n", s.chain, lv.node));
            for (sub, vals) in &lv.per_sub {
                for (v, e) in vals {
                    out.push_str(&format!("  c{sub}: {v}{} = {e}\n", counter_args(e)));
                }
            }
            for (v, e) in &lv.merged {
                out.push_str(&format!("  merged: {v}{} = {e}\n", counter_args(e)));
            }
        }
    }
    for sys in &p2.systems {
        if sys.is_empty() {
            continue;
        }
        let kind = if cpf.chains[sys.owner].kind == ChainKind::Root { " (root)" } else { "" };
        out.push_str(&format!("S(c{}){kind}:\n{sys}", sys.owner));
    }
    if !p2.eliminated.is_empty() {
        let ids: Vec<String> = p2.eliminated.iter().map(|c| format!("c{c}")).collect();
        out.push_str(&format!("eliminated: {}\n", ids.join(", ")));
    }
    out
}

pub fn to_json(p2: &Phase2) -> Value {
    json!({
        "systems": p2.systems.iter().filter(|s| !s.is_empty()).map(ConstraintSystem::to_json).collect::<Vec<_>>(),
        "eliminated": p2.eliminated,
    })
}

/// Total number of counters in use, for statistics.
pub fn counter_count(p2: &Phase2) -> usize {
    p2.systems.iter().flat_map(|s| s.counters()).collect::<BTreeSet<_>>().len()
}
