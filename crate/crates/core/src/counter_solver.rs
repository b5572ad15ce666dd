//! Interval reasoning over counter constraint systems.
//!
//! Counters range over the naturals. Each counter gets a finite union of
//! intervals that over-approximates its projection of the solution set.
//! Only constraints mentioning nothing but counters take part; anything
//! else is left to the path-condition solver.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::chain::ChainId;
use crate::constraints::{Constraint, ConstraintSystem, Literal};
use crate::sym::{Atom, Counter, Poly, Rel, ResetRef, SymExpr};

/// Concrete counter values.
pub type CounterValuation = BTreeMap<Counter, u64>;

/// Sorted, disjoint, non-adjacent closed intervals within `[0, inf)`;
/// `None` as an upper bound means unbounded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntervalSet(Vec<(BigInt, Option<BigInt>)>);

impl IntervalSet {
    pub fn full() -> Self {
        IntervalSet(vec![(BigInt::zero(), None)])
    }

    pub fn empty() -> Self {
        IntervalSet(Vec::new())
    }

    pub fn point(v: impl Into<BigInt>) -> Self {
        let v = v.into();
        if v.is_negative() {
            return IntervalSet::empty();
        }
        IntervalSet(vec![(v.clone(), Some(v))])
    }

    /// `[lo, hi]`, clipped to the naturals.
    pub fn range(lo: impl Into<BigInt>, hi: Option<BigInt>) -> Self {
        let lo = lo.into().max(BigInt::zero());
        match &hi {
            Some(h) if *h < lo => IntervalSet::empty(),
            _ => IntervalSet(vec![(lo, hi)]),
        }
    }

    pub fn intervals(&self) -> &[(BigInt, Option<BigInt>)] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn min(&self) -> Option<&BigInt> {
        self.0.first().map(|i| &i.0)
    }

    /// `Some(None)` when unbounded above, `None` when empty.
    pub fn max(&self) -> Option<Option<&BigInt>> {
        self.0.last().map(|i| i.1.as_ref())
    }

    pub fn as_point(&self) -> Option<&BigInt> {
        match self.0.as_slice() {
            [(lo, Some(hi))] if lo == hi => Some(lo),
            _ => None,
        }
    }

    pub fn contains(&self, v: &BigInt) -> bool {
        self.0.iter().any(|(lo, hi)| lo <= v && hi.as_ref().is_none_or(|h| v <= h))
    }

    pub fn intersect(&self, other: &IntervalSet) -> IntervalSet {
        let mut out = Vec::new();
        for (a_lo, a_hi) in &self.0 {
            for (b_lo, b_hi) in &other.0 {
                let lo = a_lo.max(b_lo).clone();
                let hi = match (a_hi, b_hi) {
                    (None, None) => None,
                    (Some(x), None) | (None, Some(x)) => Some(x.clone()),
                    (Some(x), Some(y)) => Some(x.min(y).clone()),
                };
                if hi.as_ref().is_none_or(|h| lo <= *h) {
                    out.push((lo, hi));
                }
            }
        }
        out.sort();
        IntervalSet(out)
    }

    pub fn at_least(&self, lo: &BigInt) -> IntervalSet {
        self.intersect(&IntervalSet::range(lo.clone(), None))
    }

    pub fn at_most(&self, hi: &BigInt) -> IntervalSet {
        if hi.is_negative() {
            return IntervalSet::empty();
        }
        self.intersect(&IntervalSet::range(0, Some(hi.clone())))
    }

    pub fn without(&self, v: &BigInt) -> IntervalSet {
        let mut out = Vec::new();
        for (lo, hi) in &self.0 {
            let inside = lo <= v && hi.as_ref().is_none_or(|h| v <= h);
            if !inside {
                out.push((lo.clone(), hi.clone()));
                continue;
            }
            if lo < v {
                out.push((lo.clone(), Some(v - 1)));
            }
            if hi.as_ref().is_none_or(|h| v < h) {
                out.push((v + 1, hi.clone()));
            }
        }
        IntervalSet(out)
    }

    /// Smallest member strictly greater than `v`.
    pub fn next_above(&self, v: &BigInt) -> Option<BigInt> {
        let w = v + 1;
        self.0.iter().find_map(|(lo, hi)| {
            if hi.as_ref().is_some_and(|h| *h < w) {
                None
            } else {
                Some(lo.clone().max(w.clone()))
            }
        })
    }
}

impl fmt::Display for IntervalSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("{}");
        }
        for (i, (lo, hi)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" u ")?;
            }
            match hi {
                Some(h) if h == lo => write!(f, "{{{lo}}}")?,
                Some(h) => write!(f, "[{lo}, {h}]")?,
                None => write!(f, "[{lo}, inf)")?,
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntervalSolution {
    pub boxes: BTreeMap<Counter, IntervalSet>,
    pub unsat: bool,
}

impl IntervalSolution {
    pub fn get(&self, k: &Counter) -> IntervalSet {
        self.boxes.get(k).cloned().unwrap_or_else(IntervalSet::full)
    }

    pub fn contains(&self, w: &CounterValuation) -> bool {
        !self.unsat && self.boxes.iter().all(|(k, b)| b.contains(&BigInt::from(w.get(k).copied().unwrap_or(0))))
    }
}

impl fmt::Display for IntervalSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.unsat {
            return f.write_str("unsat");
        }
        let parts: Vec<String> = self.boxes.iter().map(|(k, b)| format!("{k} in {b}")).collect();
        f.write_str(&parts.join(", "))
    }
}

/// `sum(coeffs * k) + constant rel 0` with `rel` one of `>=`, `==`, `!=`.
#[derive(Debug, Clone)]
struct Linear {
    coeffs: BTreeMap<Counter, BigInt>,
    constant: BigInt,
    rel: Rel,
}

fn linearize(lit: &Literal) -> Option<Linear> {
    let (coeffs, constant) = lit.difference()?.counter_linear()?;
    // Strict and upper-bound forms become `>=` over integers.
    Some(match lit.rel {
        Rel::Ge => Linear { coeffs, constant, rel: Rel::Ge },
        Rel::Gt => Linear { coeffs, constant: constant - 1, rel: Rel::Ge },
        Rel::Le => Linear { coeffs: neg(&coeffs), constant: -constant, rel: Rel::Ge },
        Rel::Lt => Linear { coeffs: neg(&coeffs), constant: -constant - 1, rel: Rel::Ge },
        Rel::Eq | Rel::Ne => Linear { coeffs, constant, rel: lit.rel },
    })
}

fn neg(c: &BTreeMap<Counter, BigInt>) -> BTreeMap<Counter, BigInt> {
    c.iter().map(|(k, v)| (k.clone(), -v)).collect()
}

/// Range `[lo, hi]` of `a * k` for `k` in `set` (`None` = unbounded).
fn term_range(a: &BigInt, set: &IntervalSet) -> (Option<BigInt>, Option<BigInt>) {
    let lo = set.min().cloned().unwrap_or_default();
    let hi = set.max().and_then(|h| h.cloned());
    if a.is_positive() {
        (Some(a * lo), hi.map(|h| a * h))
    } else {
        (hi.map(|h| a * h), Some(a * lo))
    }
}

fn sum_opt(a: Option<BigInt>, b: Option<BigInt>) -> Option<BigInt> {
    Some(a? + b?)
}

fn div_ceil(a: &BigInt, b: &BigInt) -> BigInt {
    a.div_ceil(b)
}

fn div_floor(a: &BigInt, b: &BigInt) -> BigInt {
    a.div_floor(b)
}

/// Range of a linear form over the boxes.
fn linear_range(l: &Linear, boxes: &BTreeMap<Counter, IntervalSet>) -> (Option<BigInt>, Option<BigInt>) {
    let mut lo = Some(l.constant.clone());
    let mut hi = Some(l.constant.clone());
    for (k, a) in &l.coeffs {
        let (tl, th) = term_range(a, &boxes[k]);
        lo = sum_opt(lo, tl);
        hi = sum_opt(hi, th);
    }
    (lo, hi)
}

/// Tighten boxes with one linear constraint; returns whether anything changed.
fn propagate_linear(l: &Linear, boxes: &mut BTreeMap<Counter, IntervalSet>) -> bool {
    let mut changed = false;
    match l.rel {
        Rel::Ge => {
            // aj * kj >= -(constant + max of the other terms). The maxima
            // are taken once up front; stale values only weaken the bound.
            let highs: Vec<Option<BigInt>> = l.coeffs.iter().map(|(k, a)| term_range(a, &boxes[k]).1).collect();
            let unbounded = highs.iter().filter(|h| h.is_none()).count();
            let finite: BigInt = &l.constant + highs.iter().flatten().sum::<BigInt>();
            for ((j, aj), hj) in l.coeffs.iter().zip(&highs) {
                let rest_hi = match (hj, unbounded) {
                    (Some(h), 0) => &finite - h,
                    (None, 1) => finite.clone(),
                    _ => continue,
                };
                let bound = -rest_hi;
                let new = if aj.is_positive() {
                    boxes[j].at_least(&div_ceil(&bound, aj))
                } else {
                    boxes[j].at_most(&div_floor(&bound, aj))
                };
                if new != boxes[j] {
                    boxes.insert(j.clone(), new);
                    changed = true;
                }
            }
        }
        Rel::Eq => {
            changed |= propagate_linear(&Linear { rel: Rel::Ge, ..l.clone() }, boxes);
            let flipped = Linear { coeffs: neg(&l.coeffs), constant: -&l.constant, rel: Rel::Ge };
            changed |= propagate_linear(&flipped, boxes);
            // Divisibility for a single remaining unknown.
            let unfixed: Vec<&Counter> = l.coeffs.keys().filter(|k| boxes[*k].as_point().is_none()).collect();
            if unfixed.is_empty() {
                let (lo, _) = linear_range(l, boxes);
                if lo.is_some_and(|v| !v.is_zero()) {
                    for k in l.coeffs.keys() {
                        boxes.insert(k.clone(), IntervalSet::empty());
                    }
                    return true;
                }
            }
        }
        Rel::Ne => {
            let unfixed: Vec<&Counter> = l.coeffs.keys().filter(|k| boxes[*k].as_point().is_none()).collect();
            match unfixed.as_slice() {
                [] => {
                    let (lo, _) = linear_range(l, boxes);
                    if lo.is_some_and(|v| v.is_zero()) {
                        for k in l.coeffs.keys() {
                            boxes.insert(k.clone(), IntervalSet::empty());
                        }
                        return true;
                    }
                }
                [j] => {
                    let j = (*j).clone();
                    let mut rest = l.constant.clone();
                    for (k, a) in &l.coeffs {
                        if *k != j {
                            rest += a * boxes[k].as_point().unwrap();
                        }
                    }
                    let aj = &l.coeffs[&j];
                    let (q, r) = (-&rest).div_rem(aj);
                    if r.is_zero() {
                        let new = boxes[&j].without(&q);
                        if new != boxes[&j] {
                            boxes.insert(j, new);
                            changed = true;
                        }
                    }
                }
                _ => {}
            }
        }
        _ => unreachable!("linear forms are normalized"),
    }
    changed
}

/// `coeff * base^k rel c` with constant `coeff`, `c` and `base >= 2`.
struct Geometric {
    counter: Counter,
    coeff: BigInt,
    base: BigInt,
    rel: Rel,
    rhs: BigInt,
}

fn geometric(lit: &Literal) -> Option<Geometric> {
    let (g, c, rel) = match (&lit.lhs, &lit.rhs) {
        (SymExpr::Geo { coeff, bases }, SymExpr::Poly(p)) => ((coeff, bases), p, lit.rel),
        (SymExpr::Poly(p), SymExpr::Geo { coeff, bases }) => ((coeff, bases), p, lit.rel.swap()),
        _ => return None,
    };
    let (coeff, bases) = g;
    if bases.len() != 1 {
        return None;
    }
    let (counter, base) = bases.iter().next().unwrap();
    if *base < BigInt::from(2) {
        return None;
    }
    Some(Geometric { counter: counter.clone(), coeff: coeff.as_const()?, base: base.clone(), rel, rhs: c.as_const()? })
}

/// Admissible counter values for a geometric constraint. Past the first
/// `n` with `|coeff| * base^n > |rhs|` the sign of the difference is fixed.
fn geometric_set(g: &Geometric) -> IntervalSet {
    let mut set = IntervalSet::empty();
    let mut n = 0u64;
    let mut term = g.coeff.clone();
    loop {
        if term.abs() > g.rhs.abs() {
            break;
        }
        if g.rel.holds(&term, &g.rhs) {
            set = union(&set, &IntervalSet::point(n));
        }
        n += 1;
        term *= &g.base;
    }
    if g.rel.holds(&term, &g.rhs) {
        set = union(&set, &IntervalSet::range(n, None));
    }
    set
}

fn union(a: &IntervalSet, b: &IntervalSet) -> IntervalSet {
    let mut all: Vec<(BigInt, Option<BigInt>)> = a.0.iter().chain(b.0.iter()).cloned().collect();
    all.sort();
    let mut out: Vec<(BigInt, Option<BigInt>)> = Vec::new();
    for (lo, hi) in all {
        if let Some(last) = out.last_mut() {
            let touches = last.1.as_ref().is_none_or(|h| lo <= h + 1);
            if touches {
                last.1 = match (&last.1, &hi) {
                    (None, _) | (_, None) => None,
                    (Some(x), Some(y)) => Some(x.max(y).clone()),
                };
                continue;
            }
        }
        out.push((lo, hi));
    }
    IntervalSet(out)
}

const MAX_ROUNDS: usize = 200;

/// Guard holds for every point in the boxes.
fn entailed(guard: &Literal, boxes: &BTreeMap<Counter, IntervalSet>) -> bool {
    let Some(l) = linearize(guard) else { return false };
    if l.coeffs.keys().any(|k| !boxes.contains_key(k)) {
        return false;
    }
    let (lo, hi) = linear_range(&l, boxes);
    match l.rel {
        Rel::Ge => lo.is_some_and(|v| !v.is_negative()),
        Rel::Eq => lo.as_ref().is_some_and(Zero::is_zero) && hi.as_ref().is_some_and(Zero::is_zero),
        Rel::Ne => lo.is_some_and(|v| v.is_positive()) || hi.is_some_and(|v| v.is_negative()),
        _ => false,
    }
}

fn only_counters(lit: &Literal) -> bool {
    lit.atoms().iter().all(|a| matches!(a, Atom::Counter(_)))
}

/// Interval propagation to a fixpoint (or the round cap), starting from
/// `initial` boxes; counters without an initial box start at `[0, inf)`.
pub fn solve_intervals_from(sys: &ConstraintSystem, initial: &BTreeMap<Counter, IntervalSet>) -> IntervalSolution {
    let mut boxes = initial.clone();
    for k in sys.counters() {
        boxes.entry(k).or_insert_with(IntervalSet::full);
    }
    let usable: Vec<(&Constraint, Option<Linear>, Option<Geometric>)> = sys
        .constraints
        .iter()
        .filter(|c| only_counters(&c.lit) && c.guard.as_ref().is_none_or(only_counters))
        .map(|c| match linearize(&c.lit) {
            Some(l) => (c, Some(l), None),
            None => (c, None, geometric(&c.lit)),
        })
        .collect();
    for _ in 0..MAX_ROUNDS {
        if boxes.values().any(IntervalSet::is_empty) {
            break;
        }
        let mut changed = false;
        for (c, lin, geo) in &usable {
            if let Some(g) = &c.guard {
                if !entailed(g, &boxes) {
                    continue;
                }
            }
            if let Some(l) = lin {
                if l.coeffs.is_empty() {
                    let holds = match l.rel {
                        Rel::Ge => !l.constant.is_negative(),
                        Rel::Eq => l.constant.is_zero(),
                        _ => !l.constant.is_zero(),
                    };
                    if !holds {
                        return IntervalSolution { boxes, unsat: true };
                    }
                    continue;
                }
                changed |= propagate_linear(l, &mut boxes);
            } else if let Some(g) = geo {
                let new = boxes[&g.counter].intersect(&geometric_set(g));
                if new != boxes[&g.counter] {
                    boxes.insert(g.counter.clone(), new);
                    changed = true;
                }
            }
            if boxes.values().any(IntervalSet::is_empty) {
                break;
            }
        }
        if !changed {
            break;
        }
    }
    let unsat = boxes.values().any(IntervalSet::is_empty);
    IntervalSolution { boxes, unsat }
}

pub fn solve_intervals(sys: &ConstraintSystem) -> IntervalSolution {
    solve_intervals_from(sys, &BTreeMap::new())
}

fn valuation_fn(w: &CounterValuation) -> impl Fn(&Atom) -> Option<BigInt> + '_ {
    move |a| match a {
        Atom::Counter(k) => Some(BigInt::from(w.get(k).copied().unwrap_or(0))),
        _ => None,
    }
}

/// Every constraint holds (or is disabled by its guard) under `w`;
/// constraints that still mention non-counter symbols count as satisfied.
pub fn is_solution(w: &CounterValuation, sys: &ConstraintSystem) -> bool {
    let val = valuation_fn(w);
    sys.constraints.iter().all(|c| c.eval(&val).unwrap_or(true))
}

/// Boxes for solutions reachable from `w` by running more chains: counters
/// can only grow unless their reset chain may run, and `frozen` counters
/// cannot change at all.
pub fn reachable_box(
    w: &CounterValuation,
    sys: &ConstraintSystem,
    resettable: &BTreeSet<ChainId>,
    frozen: &BTreeSet<Counter>,
) -> IntervalSolution {
    let mut initial = BTreeMap::new();
    for k in sys.counters() {
        let v = BigInt::from(w.get(&k).copied().unwrap_or(0));
        let set = if frozen.contains(&k) {
            IntervalSet::point(v)
        } else if matches!(k.reset, crate::sym::ResetRef::Chain(r) if resettable.contains(&r)) {
            IntervalSet::full()
        } else {
            IntervalSet::range(v, None)
        };
        initial.insert(k, set);
    }
    solve_intervals_from(sys, &initial)
}

/// Candidate chains partitioned by how running them could move `w`
/// toward a solution.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Direction {
    /// Running the chain increments a counter that must grow.
    pub update: BTreeSet<ChainId>,
    /// Running the chain resets a counter that must shrink.
    pub reset: BTreeSet<ChainId>,
}

/// `candidates` pairs each chain with its closure (itself and everything
/// nested below it).
pub fn improvement_direction(
    w: &CounterValuation,
    sys: &ConstraintSystem,
    candidates: &[(ChainId, BTreeSet<ChainId>)],
    frozen: &BTreeSet<Counter>,
) -> Direction {
    let resettable: BTreeSet<ChainId> = candidates.iter().flat_map(|(_, cl)| cl.iter().copied()).collect();
    direction_in(w, &reachable_box(w, sys, &resettable, frozen), candidates)
}

/// [`improvement_direction`] over an already computed reachable box.
pub fn direction_in(w: &CounterValuation, sol: &IntervalSolution, candidates: &[(ChainId, BTreeSet<ChainId>)]) -> Direction {
    let mut dir = Direction::default();
    if sol.unsat {
        return dir;
    }
    let mut growing = BTreeSet::new();
    let mut shrinking = BTreeSet::new();
    for (k, b) in &sol.boxes {
        let cur = BigInt::from(w.get(k).copied().unwrap_or(0));
        if b.next_above(&cur).is_some() {
            growing.insert(k.update);
        }
        if let ResetRef::Chain(r) = k.reset {
            if !b.contains(&cur) && b.min().is_some_and(|m| *m < cur) {
                shrinking.insert(r);
            }
        }
    }
    for (d, closure) in candidates {
        if closure.iter().any(|c| growing.contains(c)) {
            dir.update.insert(*d);
        }
        if closure.iter().any(|c| shrinking.contains(c)) {
            dir.reset.insert(*d);
        }
    }
    dir
}

/// First solution in lexicographic order over `[0, bound]^n`.
pub fn solve_enumerate(sys: &ConstraintSystem, bound: u64) -> Option<CounterValuation> {
    let ks: Vec<Counter> = sys.counters().into_iter().collect();
    let mut cur = vec![0u64; ks.len()];
    loop {
        let w: CounterValuation = ks.iter().cloned().zip(cur.iter().copied()).collect();
        if is_solution(&w, sys) {
            return Some(w);
        }
        // odometer increment, last position fastest
        let mut i = ks.len();
        loop {
            if i == 0 {
                return None;
            }
            i -= 1;
            if cur[i] < bound {
                cur[i] += 1;
                for x in &mut cur[i + 1..] {
                    *x = 0;
                }
                break;
            }
        }
    }
}

/// Value of a polynomial over counters at `w`, if it mentions only counters.
pub fn eval_counters(p: &Poly, w: &CounterValuation) -> Option<BigInt> {
    p.eval(&valuation_fn(w))
}

/// Smallest value of `k` in the box not below `w[k]`, used by callers to
/// report targets.
pub fn target_value(sol: &IntervalSolution, k: &Counter, w: &CounterValuation) -> Option<u64> {
    let cur = BigInt::from(w.get(k).copied().unwrap_or(0));
    let b = sol.get(k);
    if b.contains(&cur) {
        return cur.to_u64();
    }
    b.next_above(&cur).and_then(|v| v.to_u64())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sym::ResetRef;

    fn k(i: usize) -> Counter {
        Counter::new(i, ResetRef::Root)
    }

    fn kp(i: usize) -> Poly {
        Poly::counter(k(i))
    }

    fn lit(lhs: Poly, rel: Rel, rhs: i64) -> Literal {
        Literal::new(SymExpr::Poly(lhs), rel, SymExpr::int(rhs))
    }

    fn c(l: Literal) -> Constraint {
        Constraint { lit: l, guard: None, origin: (0, 0) }
    }

    fn fig2(a_bound: i64) -> ConstraintSystem {
        let s12 = &kp(1) + &kp(2);
        let s34 = &kp(3) + &kp(4);
        let one = Poly::constant(1);
        let guard = |s: &Poly| Some(lit(s.clone(), Rel::Gt, 0));
        ConstraintSystem {
            owner: 0,
            constraints: vec![
                c(lit(s12.clone(), Rel::Ge, 15)),
                Constraint { lit: lit(&s12 - &one, Rel::Lt, 15), guard: guard(&s12), origin: (0, 0) },
                c(lit(s34.clone(), Rel::Ge, 15)),
                Constraint { lit: lit(&s34 - &one, Rel::Lt, 15), guard: guard(&s34), origin: (0, 0) },
                c(lit(kp(1), Rel::Gt, a_bound)),
                c(lit(&kp(1) + &kp(3), Rel::Eq, 23)),
            ],
        }
    }

    fn val(vs: &[u64]) -> CounterValuation {
        vs.iter().enumerate().map(|(i, v)| (k(i + 1), *v)).collect()
    }

    #[test]
    fn single_lower_bound() {
        let sys = ConstraintSystem { owner: 0, constraints: vec![c(lit(kp(1), Rel::Gt, 12))] };
        let sol = solve_intervals(&sys);
        assert_eq!(sol.get(&k(1)).to_string(), "[13, inf)");
    }

    #[test]
    fn running_example_boxes() {
        let sol = solve_intervals(&fig2(12));
        assert!(!sol.unsat);
        assert_eq!(sol.get(&k(1)).to_string(), "[13, 15]");
        assert_eq!(sol.get(&k(3)).to_string(), "[8, 10]");
    }

    #[test]
    fn unreachable_variant_is_unsat() {
        assert!(solve_intervals(&fig2(17)).unsat);
        assert_eq!(solve_enumerate(&fig2(17), 24), None);
    }

    #[test]
    fn solution_checks() {
        let sys = fig2(12);
        assert!(is_solution(&val(&[13, 2, 10, 5]), &sys));
        assert!(!is_solution(&val(&[0, 0, 0, 0]), &sys));
        assert!(is_solution(&val(&[0]), &ConstraintSystem::default()));
        let first = solve_enumerate(&sys, 30).unwrap();
        assert!(is_solution(&first, &sys));
        assert!(first[&k(1)] >= 13);
        assert_eq!(first[&k(1)] + first[&k(2)], 15);
        assert_eq!(first[&k(1)] + first[&k(3)], 23);
        assert_eq!(solve_enumerate(&ConstraintSystem::default(), 0), Some(CounterValuation::new()));
    }

    #[test]
    fn both_first_loop_chains_can_help() {
        let sys = fig2(12);
        let cands = vec![(1, BTreeSet::from([1])), (2, BTreeSet::from([2]))];
        let d = improvement_direction(&val(&[0, 0, 0, 0]), &sys, &cands, &BTreeSet::new());
        assert_eq!(d.update, BTreeSet::from([1, 2]));
        assert!(d.reset.is_empty());
    }

    #[test]
    fn frozen_counters_bound_the_future() {
        let sys = fig2(12);
        // First loop done with k1 = 13, k2 = 2: the second loop must give k3 = 10.
        let frozen = BTreeSet::from([k(1), k(2)]);
        let sol = reachable_box(&val(&[13, 2, 0, 0]), &sys, &BTreeSet::new(), &frozen);
        assert_eq!(sol.get(&k(3)).to_string(), "{10}");
        assert_eq!(sol.get(&k(4)).to_string(), "{5}");
        // A bad first loop leaves no solution.
        let bad = reachable_box(&val(&[12, 3, 0, 0]), &sys, &BTreeSet::new(), &frozen);
        assert!(bad.unsat);
    }

    #[test]
    fn geometric_thresholds() {
        let g = Literal::new(
            SymExpr::Geo { coeff: Poly::constant(1), bases: BTreeMap::from([(k(1), BigInt::from(2))]) },
            Rel::Ge,
            SymExpr::int(100),
        );
        let sol = solve_intervals(&ConstraintSystem { owner: 0, constraints: vec![c(g)] });
        assert_eq!(sol.get(&k(1)).to_string(), "[7, inf)");
        let e = Literal::new(
            SymExpr::Geo { coeff: Poly::constant(3), bases: BTreeMap::from([(k(1), BigInt::from(2))]) },
            Rel::Eq,
            SymExpr::int(24),
        );
        let sol = solve_intervals(&ConstraintSystem { owner: 0, constraints: vec![c(e)] });
        assert_eq!(sol.get(&k(1)).to_string(), "{3}");
    }

    #[test]
    fn disequality_splits() {
        let sys = ConstraintSystem {
            owner: 0,
            constraints: vec![c(lit(kp(1), Rel::Le, 5)), c(lit(kp(1), Rel::Ne, 3))],
        };
        assert_eq!(solve_intervals(&sys).get(&k(1)).to_string(), "[0, 2] u [4, 5]");
    }
}
