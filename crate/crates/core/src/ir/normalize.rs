//! Splitting of variables whose definitions never meet at a common use.
//!
//! Definitions of a variable that reach a common use are merged into one
//! class. When a variable has several classes each class gets its own fresh
//! name, so later phases see one variable per independent chain of updates.

use std::collections::{BTreeMap, BTreeSet};

use super::ast::{Cmp, Expr};
use super::cfg::{Cfg, VertexId, VertexKind};
use crate::error::{Error, Result};

/// A definition site: `None` is the implicit zero value at program entry.
type Def = Option<VertexId>;

fn reads(kind: &VertexKind) -> Vec<String> {
    match kind {
        VertexKind::Assign { value, .. } => value.vars().into_iter().map(String::from).collect(),
        VertexKind::Branch(c) => {
            let mut v: Vec<String> = c.lhs.vars().into_iter().map(String::from).collect();
            for x in c.rhs.vars() {
                if !v.iter().any(|y| y == x) {
                    v.push(x.to_string());
                }
            }
            v
        }
        _ => Vec::new(),
    }
}

fn defined(kind: &VertexKind) -> Option<&str> {
    match kind {
        VertexKind::Assign { var, .. } => Some(var),
        _ => None,
    }
}

/// Reaching definitions per vertex (the IN sets), keyed by variable.
fn reaching(cfg: &Cfg) -> Vec<BTreeMap<String, BTreeSet<Def>>> {
    let mut inn: Vec<BTreeMap<String, BTreeSet<Def>>> = vec![BTreeMap::new(); cfg.len()];
    inn[cfg.start] = cfg.scalars.iter().map(|v| (v.clone(), BTreeSet::from([None]))).collect();
    let mut work: Vec<VertexId> = (0..cfg.len()).collect();
    while let Some(v) = work.pop() {
        let mut out = inn[v].clone();
        if let Some(x) = defined(&cfg.vertices[v]) {
            out.insert(x.to_string(), BTreeSet::from([Some(v)]));
        }
        for &(_, w) in &cfg.succ[v] {
            let mut grew = false;
            for (x, ds) in &out {
                let entry = inn[w].entry(x.clone()).or_default();
                for d in ds {
                    grew |= entry.insert(*d);
                }
            }
            if grew && !work.contains(&w) {
                work.push(w);
            }
        }
    }
    inn
}

struct UnionFind(BTreeMap<Def, Def>);

impl UnionFind {
    fn find(&mut self, d: Def) -> Def {
        let p = *self.0.entry(d).or_insert(d);
        if p == d {
            return d;
        }
        let r = self.find(p);
        self.0.insert(d, r);
        r
    }

    fn union(&mut self, a: Def, b: Def) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Keep the smaller representative so class order is stable.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.0.insert(hi, lo);
        }
    }
}

/// Vertices lying on some cycle, labeled by strongly connected component.
fn cyclic_components(cfg: &Cfg) -> Vec<Option<usize>> {
    // Tarjan's algorithm, iterative.
    let n = cfg.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut on = vec![false; n];
    let mut comp = vec![None; n];
    let mut stack = Vec::new();
    let mut next = 0;
    let mut ncomp = 0;
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        let mut call: Vec<(VertexId, usize)> = vec![(root, 0)];
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on[root] = true;
        while let Some(&mut (v, ref mut i)) = call.last_mut() {
            if let Some(&(_, w)) = cfg.succ[v].get(*i) {
                *i += 1;
                if index[w] == usize::MAX {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on[w] = true;
                    call.push((w, 0));
                } else if on[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(p, _)) = call.last() {
                    low[p] = low[p].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut members = Vec::new();
                    loop {
                        let w = stack.pop().unwrap();
                        on[w] = false;
                        members.push(w);
                        if w == v {
                            break;
                        }
                    }
                    let cyclic = members.len() > 1 || cfg.succ[v].iter().any(|&(_, w)| w == v);
                    if cyclic {
                        for w in members {
                            comp[w] = Some(ncomp);
                        }
                        ncomp += 1;
                    }
                }
            }
        }
    }
    comp
}

fn fresh(base: &str, k: usize, taken: &BTreeSet<String>) -> String {
    let mut name = format!("{base}_{k}");
    while taken.contains(&name) {
        name.push('_');
    }
    name
}

/// Rename variables so that each independent class of definitions has its
/// own name. Rejects programs whose splitting would need to track a
/// self-dependent update through a second, separately named definition
/// inside the same loop.
pub fn normalize_assignments(cfg: &Cfg) -> Result<Cfg> {
    let inn = reaching(cfg);
    let mut uf = UnionFind(BTreeMap::new());
    // (vertex, var) -> one reaching def; defs reaching the same use are merged.
    let mut use_def: BTreeMap<(VertexId, String), Def> = BTreeMap::new();
    for v in 0..cfg.len() {
        for x in reads(&cfg.vertices[v]) {
            if !cfg.scalars.contains(&x) {
                continue;
            }
            let ds: Vec<Def> = inn[v].get(&x).map(|s| s.iter().copied().collect()).unwrap_or_default();
            let first = ds.first().copied().unwrap_or(None);
            for d in &ds[1.min(ds.len())..] {
                uf.union(first, *d);
            }
            use_def.insert((v, x), first);
        }
    }

    let var_of = |d: Def| -> Option<&str> { d.and_then(|v| defined(&cfg.vertices[v])) };
    let used_entries: BTreeSet<(String, Def)> = use_def
        .iter()
        .filter(|(_, d)| d.is_none())
        .map(|((_, x), d)| (x.clone(), *d))
        .collect();

    // Classes per variable, ordered by representative.
    let mut classes: BTreeMap<String, BTreeSet<Def>> = BTreeMap::new();
    for v in 0..cfg.len() {
        if let Some(x) = var_of(Some(v)) {
            let r = uf.find(Some(v));
            classes.entry(x.to_string()).or_default().insert(r);
        }
    }
    for (x, d) in &used_entries {
        let r = uf.find(*d);
        classes.entry(x.clone()).or_default().insert(r);
    }
    // The entry pseudo-definition of each variable shares the `None` key, so
    // classes are kept per variable and keyed by (var, representative).
    let split: BTreeMap<String, Vec<Def>> = classes
        .into_iter()
        .filter(|(_, reps)| reps.len() > 1)
        .map(|(x, reps)| (x, reps.into_iter().collect()))
        .collect();
    if split.is_empty() {
        return Ok(cfg.clone());
    }

    let comp = cyclic_components(cfg);
    for (x, _) in &split {
        let defs: Vec<VertexId> = (0..cfg.len()).filter(|&v| var_of(Some(v)) == Some(x.as_str())).collect();
        for &d1 in &defs {
            let self_dependent = reads(&cfg.vertices[d1]).contains(x);
            if !self_dependent || comp[d1].is_none() {
                continue;
            }
            for &d2 in &defs {
                if d1 == d2 || comp[d1] != comp[d2] || uf.find(Some(d1)) == uf.find(Some(d2)) {
                    continue;
                }
                if inn[d2].get(x).is_some_and(|s| s.contains(&Some(d1))) && reads(&cfg.vertices[d2]).contains(x) {
                    return Err(Error::NormalizationUnsupported {
                        var: x.clone(),
                        reason: format!(
                            "definitions at vertices {d1} and {d2} update `{x}` in the same loop through separate classes"
                        ),
                    });
                }
            }
        }
    }

    let mut taken: BTreeSet<String> = cfg.scalars.iter().cloned().collect();
    taken.extend(cfg.inputs.iter().map(|d| d.name.clone()));
    let mut names: BTreeMap<(String, Def), String> = BTreeMap::new();
    for (x, reps) in &split {
        for (k, r) in reps.iter().enumerate() {
            let name = fresh(x, k + 1, &taken);
            taken.insert(name.clone());
            names.insert((x.clone(), *r), name);
        }
    }

    let mut out = cfg.clone();
    for v in 0..cfg.len() {
        let mut local: BTreeMap<String, String> = BTreeMap::new();
        for x in reads(&cfg.vertices[v]) {
            if let Some(d) = use_def.get(&(v, x.clone())) {
                let r = uf.find(*d);
                if let Some(n) = names.get(&(x.clone(), r)) {
                    local.insert(x, n.clone());
                }
            }
        }
        let f = |s: &str| local.get(s).cloned().unwrap_or_else(|| s.to_string());
        out.vertices[v] = match &cfg.vertices[v] {
            VertexKind::Assign { var, value } => {
                let r = uf.find(Some(v));
                let var = names.get(&(var.clone(), r)).cloned().unwrap_or_else(|| var.clone());
                VertexKind::Assign { var, value: value.rename(&f) }
            }
            VertexKind::Branch(c) => {
                VertexKind::Branch(Cmp { rel: c.rel, lhs: c.lhs.rename(&f), rhs: c.rhs.rename(&f) })
            }
            k => k.clone(),
        };
    }
    let mut scalars = Vec::new();
    for x in &cfg.scalars {
        match split.get(x) {
            Some(reps) => scalars.extend(reps.iter().map(|r| names[&(x.clone(), *r)].clone())),
            None => scalars.push(x.clone()),
        }
    }
    out.scalars = scalars;
    Ok(out)
}

/// Whether `e` reads any variable in `vars`.
pub fn reads_any(e: &Expr, vars: &[String]) -> bool {
    e.vars().iter().any(|v| vars.iter().any(|w| w == v))
}
