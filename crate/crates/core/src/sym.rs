//! Symbolic values: polynomials over counters, initial values and inputs,
//! geometric terms `c * g^k`, and the unknown value `*`.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_traits::{One, Pow, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::chain::ChainId;
pub use crate::ir::ast::Rel;

/// A single input value: a scalar input or one array element.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum InputSym {
    Scalar(String),
    Elem(String, usize),
}

impl InputSym {
    /// Identifier used in SMT-LIB output (`A[3]` becomes `A_3`).
    pub fn smt_name(&self) -> String {
        match self {
            InputSym::Scalar(n) => n.clone(),
            InputSym::Elem(a, i) => format!("{a}_{i}"),
        }
    }
}

impl fmt::Display for InputSym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputSym::Scalar(n) => f.write_str(n),
            InputSym::Elem(a, i) => write!(f, "{a}[{i}]"),
        }
    }
}

/// When a counter is reset to zero.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ResetRef {
    /// Only at program start.
    Root,
    /// Each time the given chain is entered.
    Chain(ChainId),
    /// Not yet resolved; the variable whose recurrence introduced it.
    Temp(String),
}

/// Counts executions of chain `update` since the last entry into `reset`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Counter {
    pub update: ChainId,
    pub reset: ResetRef,
}

impl Counter {
    pub fn new(update: ChainId, reset: ResetRef) -> Self {
        Counter { update, reset }
    }
}

impl fmt::Display for Counter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.reset {
            ResetRef::Root => write!(f, "k{}", self.update),
            ResetRef::Chain(r) => write!(f, "k{}^c{}", self.update, r),
            ResetRef::Temp(v) => write!(f, "k{}^{}", self.update, v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Atom {
    Counter(Counter),
    /// Value of a program variable on entry to the current chain.
    Init(String),
    Input(InputSym),
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Counter(c) => c.fmt(f),
            Atom::Init(v) => write!(f, "a_{v}"),
            Atom::Input(s) => s.fmt(f),
        }
    }
}

/// Sorted product of atoms; the empty monomial is the constant 1.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Monomial(pub Vec<Atom>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn atom(a: Atom) -> Self {
        Monomial(vec![a])
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    fn times(&self, other: &Monomial) -> Monomial {
        let mut v = self.0.clone();
        v.extend(other.0.iter().cloned());
        v.sort();
        Monomial(v)
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("*")?;
            }
            a.fmt(f)?;
        }
        Ok(())
    }
}

/// Integer polynomial; zero coefficients are never stored.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Poly(BTreeMap<Monomial, BigInt>);

impl Poly {
    pub fn zero() -> Self {
        Poly(BTreeMap::new())
    }

    pub fn constant(c: impl Into<BigInt>) -> Self {
        let c = c.into();
        let mut m = BTreeMap::new();
        if !c.is_zero() {
            m.insert(Monomial::one(), c);
        }
        Poly(m)
    }

    pub fn atom(a: Atom) -> Self {
        Poly(BTreeMap::from([(Monomial::atom(a), BigInt::one())]))
    }

    pub fn counter(c: Counter) -> Self {
        Poly::atom(Atom::Counter(c))
    }

    pub fn init(v: &str) -> Self {
        Poly::atom(Atom::Init(v.to_string()))
    }

    pub fn input(s: InputSym) -> Self {
        Poly::atom(Atom::Input(s))
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &BigInt)> {
        self.0.iter()
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (Monomial, BigInt)>) -> Self {
        let mut p = Poly::zero();
        for (m, c) in terms {
            p.add_term(m, c);
        }
        p
    }

    fn add_term(&mut self, m: Monomial, c: BigInt) {
        if c.is_zero() {
            return;
        }
        match self.0.entry(m) {
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
            Entry::Vacant(v) => {
                v.insert(c);
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    /// The constant term.
    pub fn constant_term(&self) -> BigInt {
        self.0.get(&Monomial::one()).cloned().unwrap_or_default()
    }

    /// `Some(c)` if the polynomial is the constant `c`.
    pub fn as_const(&self) -> Option<BigInt> {
        match self.0.len() {
            0 => Some(BigInt::zero()),
            1 => self.0.get(&Monomial::one()).cloned(),
            _ => None,
        }
    }

    pub fn atoms(&self) -> BTreeSet<Atom> {
        self.0.keys().flat_map(|m| m.0.iter().cloned()).collect()
    }

    pub fn counters(&self) -> BTreeSet<Counter> {
        self.atoms()
            .into_iter()
            .filter_map(|a| match a {
                Atom::Counter(c) => Some(c),
                _ => None,
            })
            .collect()
    }

    pub fn has_counter(&self) -> bool {
        self.0.keys().any(|m| m.0.iter().any(|a| matches!(a, Atom::Counter(_))))
    }

    /// Split into terms mentioning a counter and the rest.
    pub fn split_counters(&self) -> (Poly, Poly) {
        let (mut with, mut without) = (Poly::zero(), Poly::zero());
        for (m, c) in &self.0 {
            if m.0.iter().any(|a| matches!(a, Atom::Counter(_))) {
                with.0.insert(m.clone(), c.clone());
            } else {
                without.0.insert(m.clone(), c.clone());
            }
        }
        (with, without)
    }

    /// `Some((coeffs, constant))` when the polynomial is linear in counters
    /// and mentions no other atom.
    pub fn counter_linear(&self) -> Option<(BTreeMap<Counter, BigInt>, BigInt)> {
        let mut coeffs = BTreeMap::new();
        let mut k = BigInt::zero();
        for (m, c) in &self.0 {
            match m.0.as_slice() {
                [] => k = c.clone(),
                [Atom::Counter(x)] => {
                    coeffs.insert(x.clone(), c.clone());
                }
                _ => return None,
            }
        }
        Some((coeffs, k))
    }

    /// `Some((coeffs, constant))` when the polynomial is linear in inputs
    /// and mentions no other atom.
    pub fn input_linear(&self) -> Option<(BTreeMap<InputSym, BigInt>, BigInt)> {
        let mut coeffs = BTreeMap::new();
        let mut k = BigInt::zero();
        for (m, c) in &self.0 {
            match m.0.as_slice() {
                [] => k = c.clone(),
                [Atom::Input(x)] => {
                    coeffs.insert(x.clone(), c.clone());
                }
                _ => return None,
            }
        }
        Some((coeffs, k))
    }

    pub fn scale(&self, k: &BigInt) -> Poly {
        if k.is_zero() {
            return Poly::zero();
        }
        Poly(self.0.iter().map(|(m, c)| (m.clone(), c * k)).collect())
    }

    /// Replace atoms by polynomials; atoms mapped to `None` stay.
    pub fn subst(&self, f: &impl Fn(&Atom) -> Option<SymExpr>) -> SymExpr {
        let mut acc = SymExpr::Poly(Poly::zero());
        for (m, c) in &self.0 {
            let mut term = SymExpr::Poly(Poly::constant(c.clone()));
            for a in &m.0 {
                let v = f(a).unwrap_or_else(|| SymExpr::Poly(Poly::atom(a.clone())));
                term = term * v;
            }
            acc = acc + term;
        }
        acc
    }

    /// Evaluate with `val` giving values of atoms; `None` if some atom has
    /// no value.
    pub fn eval(&self, val: &impl Fn(&Atom) -> Option<BigInt>) -> Option<BigInt> {
        let mut sum = BigInt::zero();
        for (m, c) in &self.0 {
            let mut t = c.clone();
            for a in &m.0 {
                t *= val(a)?;
            }
            sum += t;
        }
        Some(sum)
    }

    /// Write in display order: counter terms first, constant last.
    fn write_terms(&self, f: &mut fmt::Formatter<'_>, mut first: bool) -> fmt::Result {
        let ordered = self.0.iter().filter(|(m, _)| !m.is_one()).chain(self.0.iter().filter(|(m, _)| m.is_one()));
        for (m, c) in ordered {
            let neg = c.is_negative();
            let mag = c.abs();
            match (first, neg) {
                (true, true) => f.write_str("-")?,
                (true, false) => {}
                (false, true) => f.write_str(" - ")?,
                (false, false) => f.write_str(" + ")?,
            }
            if m.is_one() {
                write!(f, "{mag}")?;
            } else if mag.is_one() {
                write!(f, "{m}")?;
            } else {
                write!(f, "{mag}*{m}")?;
            }
            first = false;
        }
        if first {
            f.write_str("0")?;
        }
        Ok(())
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_terms(f, true)
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &rhs.0 {
            out.add_term(m.clone(), c.clone());
        }
        out
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        self + &-rhs
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        Poly(self.0.iter().map(|(m, c)| (m.clone(), -c)).collect())
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (m1, c1) in &self.0 {
            for (m2, c2) in &rhs.0 {
                out.add_term(m1.times(m2), c1 * c2);
            }
        }
        out
    }
}

/// A symbolic value.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SymExpr {
    /// Unknown.
    Star,
    Poly(Poly),
    /// `coeff * prod(base^counter)`, with a non-empty base map, bases
    /// outside {0, 1}, and a counter-free coefficient.
    Geo { coeff: Poly, bases: BTreeMap<Counter, BigInt> },
}

impl From<Poly> for SymExpr {
    fn from(p: Poly) -> Self {
        SymExpr::Poly(p)
    }
}

impl SymExpr {
    pub fn int(c: i64) -> Self {
        SymExpr::Poly(Poly::constant(c))
    }

    pub fn init(v: &str) -> Self {
        SymExpr::Poly(Poly::init(v))
    }

    pub fn is_star(&self) -> bool {
        matches!(self, SymExpr::Star)
    }

    pub fn as_poly(&self) -> Option<&Poly> {
        match self {
            SymExpr::Poly(p) => Some(p),
            _ => None,
        }
    }

    pub fn as_const(&self) -> Option<BigInt> {
        self.as_poly().and_then(Poly::as_const)
    }

    fn geo(coeff: Poly, bases: BTreeMap<Counter, BigInt>) -> SymExpr {
        if coeff.is_zero() {
            SymExpr::Poly(Poly::zero())
        } else if bases.is_empty() {
            SymExpr::Poly(coeff)
        } else {
            SymExpr::Geo { coeff, bases }
        }
    }

    /// Atoms occurring in the expression (counters of geometric bases
    /// included).
    pub fn atoms(&self) -> BTreeSet<Atom> {
        match self {
            SymExpr::Star => BTreeSet::new(),
            SymExpr::Poly(p) => p.atoms(),
            SymExpr::Geo { coeff, bases } => {
                let mut s = coeff.atoms();
                s.extend(bases.keys().cloned().map(Atom::Counter));
                s
            }
        }
    }

    pub fn has_counter(&self) -> bool {
        self.atoms().iter().any(|a| matches!(a, Atom::Counter(_)))
    }

    /// Substitute atoms by symbolic values.
    pub fn subst(&self, f: &impl Fn(&Atom) -> Option<SymExpr>) -> SymExpr {
        match self {
            SymExpr::Star => SymExpr::Star,
            SymExpr::Poly(p) => p.subst(f),
            SymExpr::Geo { coeff, bases } => {
                let mut acc = coeff.subst(f);
                for (k, g) in bases {
                    let factor = match f(&Atom::Counter(k.clone())) {
                        None => SymExpr::Geo { coeff: Poly::constant(1), bases: BTreeMap::from([(k.clone(), g.clone())]) },
                        Some(SymExpr::Poly(p)) => match p.as_const().and_then(|c| c.to_u32()) {
                            Some(n) => SymExpr::Poly(Poly::constant(Pow::pow(g, n))),
                            None => match p.counter_linear() {
                                Some((cs, c0)) if cs.len() == 1 && c0.is_zero() && cs.values().all(One::is_one) => {
                                    let k2 = cs.into_keys().next().unwrap();
                                    SymExpr::Geo { coeff: Poly::constant(1), bases: BTreeMap::from([(k2, g.clone())]) }
                                }
                                _ => SymExpr::Star,
                            },
                        },
                        Some(_) => SymExpr::Star,
                    };
                    acc = acc * factor;
                }
                acc
            }
        }
    }

    /// Rename counters (used when resolving temporary counters).
    pub fn map_counters(&self, f: &impl Fn(&Counter) -> Counter) -> SymExpr {
        self.subst(&|a| match a {
            Atom::Counter(c) => Some(SymExpr::Poly(Poly::counter(f(c)))),
            _ => None,
        })
    }

    pub fn eval(&self, val: &impl Fn(&Atom) -> Option<BigInt>) -> Option<BigInt> {
        match self {
            SymExpr::Star => None,
            SymExpr::Poly(p) => p.eval(val),
            SymExpr::Geo { coeff, bases } => {
                let mut v = coeff.eval(val)?;
                for (k, g) in bases {
                    let n = val(&Atom::Counter(k.clone()))?.to_u32()?;
                    v *= Pow::pow(g, n);
                }
                Some(v)
            }
        }
    }
}

impl Add for SymExpr {
    type Output = SymExpr;
    fn add(self, rhs: SymExpr) -> SymExpr {
        use SymExpr::*;
        match (self, rhs) {
            (Star, _) | (_, Star) => Star,
            (Poly(a), Poly(b)) => Poly(&a + &b),
            (g @ Geo { .. }, Poly(p)) | (Poly(p), g @ Geo { .. }) => {
                if p.is_zero() {
                    g
                } else {
                    Star
                }
            }
            (Geo { coeff: c1, bases: b1 }, Geo { coeff: c2, bases: b2 }) => {
                if b1 == b2 {
                    SymExpr::geo(&c1 + &c2, b1)
                } else {
                    Star
                }
            }
        }
    }
}

impl Neg for SymExpr {
    type Output = SymExpr;
    fn neg(self) -> SymExpr {
        match self {
            SymExpr::Star => SymExpr::Star,
            SymExpr::Poly(p) => SymExpr::Poly(-&p),
            SymExpr::Geo { coeff, bases } => SymExpr::Geo { coeff: -&coeff, bases },
        }
    }
}

impl Sub for SymExpr {
    type Output = SymExpr;
    fn sub(self, rhs: SymExpr) -> SymExpr {
        self + -rhs
    }
}

impl Mul for SymExpr {
    type Output = SymExpr;
    fn mul(self, rhs: SymExpr) -> SymExpr {
        use SymExpr::*;
        match (self, rhs) {
            (Poly(a), Poly(b)) => Poly(&a * &b),
            // Multiplying by zero is exact even for unknown values.
            (Poly(p), _) | (_, Poly(p)) if p.is_zero() => Poly(p),
            (Star, _) | (_, Star) => Star,
            (Geo { coeff, bases }, Poly(p)) | (Poly(p), Geo { coeff, bases }) => {
                if p.has_counter() {
                    Star
                } else {
                    SymExpr::geo(&coeff * &p, bases)
                }
            }
            (Geo { .. }, Geo { .. }) => Star,
        }
    }
}

impl fmt::Display for SymExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SymExpr::Star => f.write_str("*"),
            SymExpr::Poly(p) => p.fmt(f),
            SymExpr::Geo { coeff, bases } => {
                let simple = coeff.terms().count() == 1;
                if coeff.as_const().is_some_and(|c| c.is_one()) {
                } else if coeff.as_const().is_some_and(|c| c == -BigInt::one()) {
                    f.write_str("-")?;
                } else if simple {
                    write!(f, "{coeff}*")?;
                } else {
                    write!(f, "({coeff})*")?;
                }
                for (i, (k, g)) in bases.iter().enumerate() {
                    if i > 0 {
                        f.write_str("*")?;
                    }
                    if g.is_negative() {
                        write!(f, "({g})^{k}")?;
                    } else {
                        write!(f, "{g}^{k}")?;
                    }
                }
                Ok(())
            }
        }
    }
}

/// Closed form of a variable after `counter` iterations of a chain whose
/// single pass maps the entry value `a_var` to `f`. Shapes handled:
/// identity, arithmetic `a_var + d`, and geometric `g * a_var`; anything
/// else is unknown. `invariant` decides whether an atom keeps its value
/// across iterations.
pub fn solve_recurrence(var: &str, f: &SymExpr, counter: &Counter, invariant: &impl Fn(&Atom) -> bool) -> SymExpr {
    let alpha = Poly::init(var);
    let p = match f {
        SymExpr::Poly(p) => p,
        _ => return SymExpr::Star,
    };
    if *p == alpha {
        return SymExpr::Poly(alpha);
    }
    let d = p - &alpha;
    let d_atoms = d.atoms();
    if !d_atoms.contains(&Atom::Init(var.to_string()))
        && !d.has_counter()
        && d_atoms.iter().all(invariant)
    {
        return SymExpr::Poly(&alpha + &(&d * &Poly::counter(counter.clone())));
    }
    // g * a_var with constant g outside {0, 1}
    if p.terms().count() == 1 {
        let (m, g) = p.terms().next().unwrap();
        if m.0 == [Atom::Init(var.to_string())] && !g.is_zero() && !g.is_one() {
            return SymExpr::Geo { coeff: alpha, bases: BTreeMap::from([(counter.clone(), g.clone())]) };
        }
    }
    SymExpr::Star
}

/// Combine per-subchain closed forms of one variable into the value after
/// an arbitrary interleaving of the subchains of a loop node. Identity
/// contributions are neutral; sums of arithmetic forms add; products of
/// geometric forms multiply; everything else is unknown.
pub fn merge_values(var: &str, values: &[SymExpr]) -> SymExpr {
    let alpha = Poly::init(var);
    let mut deltas: Vec<(Monomial, BigInt)> = Vec::new();
    let mut bases: BTreeMap<Counter, BigInt> = BTreeMap::new();
    for v in values {
        match v {
            SymExpr::Star => return SymExpr::Star,
            SymExpr::Poly(p) => {
                if *p == alpha {
                    continue;
                }
                let d = p - &alpha;
                if d.atoms().contains(&Atom::Init(var.to_string())) {
                    return SymExpr::Star;
                }
                deltas.extend(d.0);
            }
            SymExpr::Geo { coeff, bases: b } => {
                if *coeff != alpha {
                    return SymExpr::Star;
                }
                for (k, g) in b {
                    bases.insert(k.clone(), g.clone());
                }
            }
        }
    }
    let delta = Poly::from_terms(deltas);
    match (delta.is_zero(), bases.is_empty()) {
        (_, true) => SymExpr::Poly(&alpha + &delta),
        (true, false) => SymExpr::Geo { coeff: alpha, bases },
        (false, false) => SymExpr::Star,
    }
}
