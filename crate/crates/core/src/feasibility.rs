//! Satisfiability of path conditions over input symbols.
//!
//! Literals are split into clusters that share no symbol. Each cluster is
//! solved by bound propagation and a depth-first search that tries the
//! smallest non-negative values first.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::constraints::Literal;
use crate::error::{Error, Result};
use crate::sym::{Atom, InputSym, Poly, Rel, SymExpr};

/// Concrete input values.
pub type Witness = BTreeMap<InputSym, BigInt>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SatResult {
    Sat(Witness),
    Unsat,
    Unknown,
}

impl SatResult {
    pub fn is_sat(&self) -> bool {
        matches!(self, SatResult::Sat(_))
    }
}

/// Conjunction of literals in execution order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PathCondition {
    pub lits: Vec<Literal>,
}

impl PathCondition {
    pub fn len(&self) -> usize {
        self.lits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lits.is_empty()
    }

    pub fn push(&mut self, lit: Literal) {
        self.lits.push(lit);
    }

    pub fn symbols(&self) -> BTreeSet<InputSym> {
        self.lits
            .iter()
            .flat_map(|l| l.atoms())
            .filter_map(|a| match a {
                Atom::Input(s) => Some(s),
                _ => None,
            })
            .collect()
    }

    /// Every literal evaluates to true under `w` (missing symbols read 0).
    pub fn holds(&self, w: &Witness) -> bool {
        let val = |a: &Atom| match a {
            Atom::Input(s) => Some(w.get(s).cloned().unwrap_or_default()),
            _ => None,
        };
        self.lits.iter().all(|l| l.eval(&val) == Some(true))
    }
}

impl fmt::Display for PathCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.lits.iter().map(|l| l.to_string()).collect();
        f.write_str(&parts.join(" && "))
    }
}

/// Search budget per cluster; exceeding it yields `Unknown`.
pub const NODE_CAP: usize = 200_000;

/// `d rel 0` with `d` a polynomial over the cluster's variables.
#[derive(Debug, Clone)]
struct Lit {
    poly: Poly,
    rel: Rel,
    /// Linear view: coefficients by variable index and constant.
    linear: Option<(Vec<(usize, BigInt)>, BigInt)>,
    vars: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Dom {
    lo: Option<BigInt>,
    hi: Option<BigInt>,
    excluded: BTreeSet<BigInt>,
}

impl Dom {
    fn full() -> Self {
        Dom { lo: None, hi: None, excluded: BTreeSet::new() }
    }

    fn fixed(&self) -> Option<&BigInt> {
        match (&self.lo, &self.hi) {
            (Some(l), Some(h)) if l == h => Some(l),
            _ => None,
        }
    }

    fn is_empty(&self) -> bool {
        matches!((&self.lo, &self.hi), (Some(l), Some(h)) if l > h)
    }

    fn contains(&self, v: &BigInt) -> bool {
        self.lo.as_ref().is_none_or(|l| l <= v) && self.hi.as_ref().is_none_or(|h| v <= h) && !self.excluded.contains(v)
    }

    /// Move bounds inward past excluded values.
    fn normalize(&mut self) {
        if let Some(l) = &mut self.lo {
            while self.excluded.contains(l) {
                *l += 1;
            }
        }
        if let Some(h) = &mut self.hi {
            while self.excluded.contains(h) {
                *h -= 1;
            }
        }
    }

    fn raise(&mut self, v: BigInt) -> bool {
        if self.lo.as_ref().is_none_or(|l| *l < v) {
            self.lo = Some(v);
            self.normalize();
            true
        } else {
            false
        }
    }

    fn lower(&mut self, v: BigInt) -> bool {
        if self.hi.as_ref().is_none_or(|h| v < *h) {
            self.hi = Some(v);
            self.normalize();
            true
        } else {
            false
        }
    }

    fn exclude(&mut self, v: BigInt) -> bool {
        if self.contains(&v) {
            self.excluded.insert(v);
            self.normalize();
            true
        } else {
            false
        }
    }
}

fn term_bounds(a: &BigInt, d: &Dom) -> (Option<BigInt>, Option<BigInt>) {
    let lo = d.lo.as_ref().map(|l| a * l);
    let hi = d.hi.as_ref().map(|h| a * h);
    if a.is_positive() {
        (lo, hi)
    } else {
        (hi, lo)
    }
}

struct Cluster {
    vars: Vec<InputSym>,
    lits: Vec<Lit>,
    window: BigInt,
    difference_like: bool,
}

enum Search {
    Found(Vec<BigInt>),
    Exhausted { clipped: bool },
    Budget,
}

impl Cluster {
    fn propagate(&self, doms: &mut [Dom]) -> bool {
        for _ in 0..64 {
            let mut changed = false;
            for lit in &self.lits {
                let Some((coeffs, k)) = &lit.linear else {
                    // Nonlinear: only checked once fully assigned.
                    if lit.vars.iter().all(|&v| doms[v].fixed().is_some()) && !self.check(lit, doms) {
                        return false;
                    }
                    continue;
                };
                let ge = |coeffs: &[(usize, BigInt)], k: &BigInt, doms: &mut [Dom]| -> Option<bool> {
                    // sum(coeffs) + k >= 0
                    let mut changed = false;
                    for (j, aj) in coeffs {
                        let mut rest = Some(k.clone());
                        for (i, a) in coeffs {
                            if i != j {
                                rest = match (rest, term_bounds(a, &doms[*i]).1) {
                                    (Some(r), Some(t)) => Some(r + t),
                                    _ => None,
                                };
                            }
                        }
                        let Some(rest) = rest else { continue };
                        let bound = -rest;
                        changed |= if aj.is_positive() {
                            doms[*j].raise(bound.div_ceil(aj))
                        } else {
                            doms[*j].lower(bound.div_floor(aj))
                        };
                        if doms[*j].is_empty() {
                            return None;
                        }
                    }
                    Some(changed)
                };
                let neg: Vec<(usize, BigInt)> = coeffs.iter().map(|(i, a)| (*i, -a)).collect();
                let res = match lit.rel {
                    Rel::Ge => ge(coeffs, k, doms),
                    Rel::Gt => ge(coeffs, &(k - 1), doms),
                    Rel::Le => ge(&neg, &-k, doms),
                    Rel::Lt => ge(&neg, &(-k - 1), doms),
                    Rel::Eq => ge(coeffs, k, doms).and_then(|a| ge(&neg, &-k, doms).map(|b| a || b)),
                    Rel::Ne => {
                        let open: Vec<&(usize, BigInt)> = coeffs.iter().filter(|(i, _)| doms[*i].fixed().is_none()).collect();
                        match open.as_slice() {
                            [] => Some(false).filter(|_| self.check(lit, doms)),
                            [(j, aj)] => {
                                let mut rest = k.clone();
                                for (i, a) in coeffs {
                                    if i != j {
                                        rest += a * doms[*i].fixed().unwrap();
                                    }
                                }
                                let (q, r) = (-rest).div_rem(aj);
                                let c = r.is_zero() && doms[*j].exclude(q);
                                if doms[*j].is_empty() {
                                    None
                                } else {
                                    Some(c)
                                }
                            }
                            _ => Some(false),
                        }
                    }
                };
                match res {
                    None => return false,
                    Some(c) => changed |= c,
                }
            }
            if !changed {
                break;
            }
        }
        doms.iter().all(|d| !d.is_empty())
    }

    fn check(&self, lit: &Lit, doms: &[Dom]) -> bool {
        let v = lit.poly.eval(&|a| match a {
            Atom::Input(s) => self.vars.iter().position(|x| x == s).and_then(|i| doms[i].fixed().cloned()),
            _ => None,
        });
        v.is_some_and(|v| lit.rel.holds(&v, &BigInt::zero()))
    }

    /// Candidate values for a variable: non-negative ascending, then
    /// negative descending, inside the domain and the search window.
    fn candidates(&self, d: &Dom) -> (Box<dyn Iterator<Item = BigInt>>, bool) {
        let w = &self.window;
        let lo = match &d.lo {
            Some(l) if *l > *w => l.clone(),
            Some(l) => l.clone().max(-w),
            None => -w,
        };
        let hi = match &d.hi {
            Some(h) if *h < -w => h.clone(),
            Some(h) => h.clone().min(w.clone()),
            None => w.clone(),
        };
        let (lo, hi) = if lo > *w {
            (lo.clone(), hi.min(&lo + w))
        } else if hi < -w {
            (lo.max(&hi - w), hi)
        } else {
            (lo, hi)
        };
        let clipped = d.lo.as_ref().is_none_or(|l| *l < lo) || d.hi.as_ref().is_none_or(|h| *h > hi);
        let up_hi = hi.clone();
        let up = std::iter::successors(Some(lo.clone().max(BigInt::zero())), |v| Some(v + 1))
            .take_while(move |v| *v <= up_hi);
        let down = std::iter::successors(Some(hi.min(-BigInt::one())), |v| Some(v - 1)).take_while(move |v| *v >= lo);
        let excluded = d.excluded.clone();
        (Box::new(up.chain(down).filter(move |v| !excluded.contains(v))), clipped)
    }

    fn search(&self, doms: Vec<Dom>, nodes: &mut usize) -> Search {
        *nodes += 1;
        if *nodes > NODE_CAP {
            return Search::Budget;
        }
        let mut doms = doms;
        if !self.propagate(&mut doms) {
            return Search::Exhausted { clipped: false };
        }
        let open = (0..doms.len()).filter(|&i| doms[i].fixed().is_none()).min_by_key(|&i| {
            match (&doms[i].lo, &doms[i].hi) {
                (Some(l), Some(h)) => h - l,
                _ => BigInt::from(u64::MAX),
            }
        });
        let Some(i) = open else {
            return if self.lits.iter().all(|l| self.check(l, &doms)) {
                Search::Found(doms.iter().map(|d| d.fixed().unwrap().clone()).collect())
            } else {
                Search::Exhausted { clipped: false }
            };
        };
        let (cands, mut clipped) = self.candidates(&doms[i]);
        for v in cands {
            let mut next = doms.clone();
            next[i] = Dom { lo: Some(v.clone()), hi: Some(v), excluded: BTreeSet::new() };
            match self.search(next, nodes) {
                Search::Found(w) => return Search::Found(w),
                Search::Budget => return Search::Budget,
                Search::Exhausted { clipped: c } => clipped |= c,
            }
        }
        Search::Exhausted { clipped }
    }
}

fn lit_of(l: &Literal) -> Result<(Poly, Rel)> {
    match l.difference() {
        Some(d) if d.atoms().iter().all(|a| matches!(a, Atom::Input(_))) => Ok((d, l.rel)),
        _ => Err(Error::UnsupportedLiteral(l.to_string())),
    }
}

/// Decide a path condition with the built-in procedure.
pub fn check_sat(pc: &PathCondition) -> Result<SatResult> {
    let mut polys = Vec::new();
    for l in &pc.lits {
        let (d, rel) = lit_of(l)?;
        if let Some(c) = d.as_const() {
            if !rel.holds(&c, &BigInt::zero()) {
                return Ok(SatResult::Unsat);
            }
            continue;
        }
        polys.push((d, rel));
    }
    let Some(defs) = eliminate_unit_equalities(&mut polys) else { return Ok(SatResult::Unsat) };

    // Union-find over symbols to form clusters.
    let syms: Vec<InputSym> = polys
        .iter()
        .flat_map(|(p, _)| p.atoms())
        .filter_map(|a| match a {
            Atom::Input(s) => Some(s),
            _ => None,
        })
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: BTreeMap<&InputSym, usize> = syms.iter().enumerate().map(|(i, s)| (s, i)).collect();
    let mut parent: Vec<usize> = (0..syms.len()).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        if p[i] != i {
            let r = find(p, p[i]);
            p[i] = r;
        }
        p[i]
    }
    let lit_syms: Vec<Vec<usize>> = polys
        .iter()
        .map(|(p, _)| {
            p.atoms()
                .into_iter()
                .filter_map(|a| match a {
                    Atom::Input(s) => Some(index[&s]),
                    _ => None,
                })
                .collect()
        })
        .collect();
    for vs in &lit_syms {
        for w in vs.windows(2) {
            let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
            parent[a] = b;
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (li, vs) in lit_syms.iter().enumerate() {
        groups.entry(find(&mut parent, vs[0])).or_default().push(li);
    }

    let mut witness = Witness::new();
    let mut unknown = false;
    for lits in groups.values() {
        let mut vars: Vec<InputSym> = lits.iter().flat_map(|&l| lit_syms[l].iter().map(|&i| syms[i].clone())).collect();
        vars.sort();
        vars.dedup();
        let local = |s: &InputSym| vars.iter().position(|x| x == s).unwrap();
        let mut sum = BigInt::zero();
        let mut difference_like = true;
        let cl_lits: Vec<Lit> = lits
            .iter()
            .map(|&l| {
                let (p, rel) = &polys[l];
                for (_, c) in p.terms() {
                    sum += c.abs();
                }
                let linear = p.input_linear().map(|(cs, k)| (cs.iter().map(|(s, a)| (local(s), a.clone())).collect::<Vec<_>>(), k));
                difference_like &= match &linear {
                    Some((cs, _)) => match cs.as_slice() {
                        [(_, a)] => a.abs().is_one(),
                        [(_, a), (_, b)] => a.abs().is_one() && b.abs().is_one() && a.sign() != b.sign(),
                        _ => false,
                    },
                    None => false,
                };
                let vs = p
                    .atoms()
                    .into_iter()
                    .filter_map(|a| match a {
                        Atom::Input(s) => Some(local(&s)),
                        _ => None,
                    })
                    .collect();
                Lit { poly: p.clone(), rel: *rel, linear, vars: vs }
            })
            .collect();
        let window = (sum + BigInt::from(vars.len() + 1)) * 2;
        let cluster = Cluster { vars, lits: cl_lits, window, difference_like };
        let mut nodes = 0;
        match cluster.search(vec![Dom::full(); cluster.vars.len()], &mut nodes) {
            Search::Found(vals) => {
                for (s, v) in cluster.vars.iter().zip(vals) {
                    witness.insert(s.clone(), v);
                }
            }
            Search::Exhausted { clipped } => {
                if clipped && !cluster.difference_like {
                    unknown = true;
                } else {
                    return Ok(SatResult::Unsat);
                }
            }
            Search::Budget => unknown = true,
        }
    }
    if unknown {
        return Ok(SatResult::Unknown);
    }
    for (x, def) in defs.iter().rev() {
        for a in def.atoms() {
            if let Atom::Input(y) = a {
                witness.entry(y).or_insert_with(BigInt::zero);
            }
        }
        let v = def.eval(&|a| match a {
            Atom::Input(y) => witness.get(y).cloned(),
            _ => None,
        });
        witness.insert(x.clone(), v.expect("definitions range over inputs"));
    }
    Ok(SatResult::Sat(witness))
}

/// Gaussian elimination restricted to unit coefficients: while some
/// linear equality has a variable with coefficient +-1, solve for it and
/// substitute everywhere. Returns the definitions in elimination order, or
/// `None` if a literal became constantly false.
fn eliminate_unit_equalities(polys: &mut Vec<(Poly, Rel)>) -> Option<Vec<(InputSym, Poly)>> {
    let mut defs = Vec::new();
    loop {
        let pick = polys.iter().enumerate().find_map(|(i, (p, rel))| {
            if *rel != Rel::Eq {
                return None;
            }
            let (cs, _) = p.input_linear()?;
            let (x, a) = cs.into_iter().find(|(_, a)| a.abs().is_one())?;
            Some((i, x, a))
        });
        let Some((i, x, a)) = pick else { break };
        let (p, _) = polys.remove(i);
        // a*x + rest = 0 with a = +-1, so x = -a * rest.
        let rest = &p - &Poly::input(x.clone()).scale(&a);
        let def = rest.scale(&-a);
        let f = |atom: &Atom| match atom {
            Atom::Input(y) if *y == x => Some(SymExpr::Poly(def.clone())),
            _ => None,
        };
        for (q, rel) in polys.iter_mut() {
            *q = q.subst(&f).as_poly().cloned().expect("polynomial substitution");
            if let Some(c) = q.as_const() {
                if !rel.holds(&c, &BigInt::zero()) {
                    return None;
                }
            }
        }
        polys.retain(|(q, _)| q.as_const().is_none());
        for (_, d) in defs.iter_mut() {
            let e: &mut Poly = d;
            *e = e.subst(&f).as_poly().cloned().expect("polynomial substitution");
        }
        defs.push((x, def));
    }
    Some(defs)
}

/// Exhaustive oracle: first assignment in `[lo, hi]^n` (lexicographic over
/// the sorted symbols) satisfying the condition.
pub fn brute_force(pc: &PathCondition, lo: i64, hi: i64) -> Option<Witness> {
    let syms: Vec<InputSym> = pc.symbols().into_iter().collect();
    let mut cur = vec![lo; syms.len()];
    loop {
        let w: Witness = syms.iter().cloned().zip(cur.iter().map(|v| BigInt::from(*v))).collect();
        if pc.holds(&w) {
            return Some(w);
        }
        let mut i = syms.len();
        loop {
            if i == 0 {
                return None;
            }
            i -= 1;
            if cur[i] < hi {
                cur[i] += 1;
                for x in &mut cur[i + 1..] {
                    *x = lo;
                }
                break;
            }
        }
    }
}
