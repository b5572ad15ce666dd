//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line
//! (written straight to stderr so it shows without `--nocapture`).

mod common;

use std::collections::BTreeSet;
use std::io::Write;
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use loopnav_core::chain::{enumerate_cfg_paths, enumerate_execution_paths, extract_chains, ChainOptions, StopAt};
use loopnav_core::constraints::Literal;
use loopnav_core::corpus::{Expected, CASES, RUNNING_EXAMPLE, RUNNING_EXAMPLE_A17};
use loopnav_core::counter_solver::{solve_enumerate, solve_intervals};
use loopnav_core::feasibility::{brute_force, check_sat};
use loopnav_core::sym::{merge_values, solve_recurrence, Poly};
use loopnav_core::{
    analyze_source, Atom, Constraint, ConstraintSystem, Counter, Error, Evidence, InputSym, NavConfig, Outcome,
    PathCondition, Rel, ResetRef, SatResult, SymExpr,
};

use common::{check_necessity, loop_program, prepare, structured_program};

// Pinned budgets and sizes.
const FIG1_BUDGET: Duration = Duration::from_secs(1);
const A17_BUDGET: Duration = Duration::from_millis(100);
const BENCH_BUDGET: Duration = Duration::from_secs(10);
const PATH_PROGRAMS: usize = 200;
const PATH_MAX_VERTICES: usize = 8;
const PATH_MAX_BACK_EDGES: usize = 2;
const PATH_BUDGET: usize = 12;
const PARAM_RANGE: std::ops::RangeInclusive<i64> = -3..=3;
const MAX_RUNS: u32 = 6;
const NECESSITY_PROGRAMS: usize = 100;
const COUNTER_SYSTEMS: usize = 500;
const COUNTER_BOUND: u64 = 20;
const PC_CASES: usize = 500;
const PC_MAX_SYMBOLS: usize = 4;
const PC_RANGE: i64 = 8;

type Verdict = Result<String, String>;

fn report(n: usize, title: &str, v: &Verdict) {
    let line = match v {
        Ok(d) => format!("criterion {n}: PASS  {title} ({d})\n"),
        Err(d) => format!("criterion {n}: FAIL  {title} ({d})\n"),
    };
    std::io::stderr().write_all(line.as_bytes()).unwrap();
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn running_example() -> Verdict {
    let t = Instant::now();
    let report = analyze_source(RUNNING_EXAMPLE, &NavConfig::default()).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    let Outcome::Feasible { pc, .. } = &report.outcome else {
        return Err(format!("outcome {}", report.outcome.name()));
    };
    let p = prepare(RUNNING_EXAMPLE);
    let got: Vec<String> = p.p2.systems[0].constraints.iter().map(|c| c.canonical()).collect();
    // Expected system, written independently as literals over k1..k4.
    let k = |i: usize| Poly::counter(Counter::new(i, ResetRef::Root));
    let c = |p: Poly| SymExpr::Poly(p);
    let n = SymExpr::int;
    let lit = |l: SymExpr, r: Rel, rhs: SymExpr| Literal::new(l, r, rhs);
    let s12 = &k(1) + &k(2);
    let s34 = &k(3) + &k(4);
    let one = Poly::constant(1);
    let expected = [
        (lit(c(s12.clone()), Rel::Ge, n(15)), None),
        (lit(c(&s12 - &one), Rel::Lt, n(15)), Some(lit(c(s12.clone()), Rel::Gt, n(0)))),
        (lit(c(s34.clone()), Rel::Ge, n(15)), None),
        (lit(c(&s34 - &one), Rel::Lt, n(15)), Some(lit(c(s34.clone()), Rel::Gt, n(0)))),
        (lit(c(k(1)), Rel::Gt, n(12)), None),
        (lit(c(&k(1) + &k(3)), Rel::Eq, n(23)), None),
    ];
    let want: Vec<String> =
        expected.into_iter().map(|(lit, guard)| Constraint { lit, guard, origin: (0, 0) }.canonical()).collect();
    ensure(got == want, || format!("system {got:?}"))?;
    ensure(pc.len() == 30, || format!("pc_len {}", pc.len()))?;
    ensure(elapsed < FIG1_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!("6 constraints, pc_len 30, witness validated, {:.1} ms", elapsed.as_secs_f64() * 1e3))
}

fn refuted_variant() -> Verdict {
    let t = Instant::now();
    let report = analyze_source(RUNNING_EXAMPLE_A17, &NavConfig::default()).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    ensure(report.outcome == Outcome::Infeasible { evidence: Evidence::EliminatedRoots }, || {
        format!("outcome {:?}", report.outcome)
    })?;
    ensure(report.stats.sstat == 0, || format!("sstat {}", report.stats.sstat))?;
    ensure(elapsed < A17_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!("eliminated before execution, 0 states, {:.2} ms", elapsed.as_secs_f64() * 1e3))
}

fn chain_form() -> Verdict {
    let p = prepare(RUNNING_EXAMPLE);
    let cpf = &p.cpf;
    let subs = cpf.chains.len() - cpf.roots.len();
    ensure(cpf.roots == [0] && subs == 4, || format!("{} roots, {subs} subchains", cpf.roots.len()))?;
    let loops: Vec<Vec<usize>> =
        cpf.chains[0].nodes.iter().filter(|n| n.is_loop()).map(|n| n.loop_subchains.clone()).collect();
    ensure(loops == [vec![1, 2], vec![3, 4]], || format!("loop nodes {loops:?}"))?;
    let text = cpf.to_string();
    let expected = "c0 (root): a = 0; b = 0; i = 0; i >= 15 : {c1,c2}; j = 0; j >= 15 : {c3,c4}; a > 12; a + b == 23; target
c1: i < 15; A[i] == 1; a = a + 1; i = i + 1
c2: i < 15; A[i] != 1; i = i + 1
c3: j < 15; B[j] == 2; b = b + 1; j = j + 1
c4: j < 15; B[j] != 2; j = j + 1
";
    ensure(text == expected, || format!("chain form\n{text}"))?;
    Ok("1 root + 4 subchains, loop nodes {c1,c2} and {c3,c4}".into())
}

fn benchmark_split() -> Verdict {
    let mut feasible = 0;
    let mut infeasible = 0;
    let mut slowest = Duration::ZERO;
    for case in &CASES {
        let t = Instant::now();
        let r = analyze_source(case.source, &case.config(&NavConfig::default())).map_err(|e| format!("{}: {e}", case.name))?;
        let elapsed = t.elapsed();
        slowest = slowest.max(elapsed);
        ensure(elapsed < BENCH_BUDGET, || format!("{} took {elapsed:?}", case.name))?;
        match (&r.outcome, case.expected) {
            (Outcome::Feasible { .. }, Expected::Feasible) => feasible += 1,
            (Outcome::Infeasible { .. }, Expected::Infeasible) => infeasible += 1,
            (o, _) => return Err(format!("{}: {}", case.name, o.name())),
        }
        if matches!(case.name, "OneLoop" | "TwoLoops") {
            ensure(r.stats.sstat == 0, || format!("{} sstat {}", case.name, r.stats.sstat))?;
        }
    }
    ensure((feasible, infeasible) == (6, 3), || format!("{feasible} feasible, {infeasible} infeasible"))?;
    Ok(format!("6 feasible + 3 infeasible, OneLoop/TwoLoops sstat 0, slowest {:.0} ms", slowest.as_secs_f64() * 1e3))
}

fn path_correspondence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0005);
    let mut programs = 0;
    let mut paths = 0;
    let mut draws = 0;
    while programs < PATH_PROGRAMS {
        draws += 1;
        ensure(draws < 100_000, || "generator starved".into())?;
        let Some((src, cfg)) = structured_program(&mut rng, PATH_MAX_VERTICES, PATH_MAX_BACK_EDGES) else { continue };
        let cpf = extract_chains(&cfg, ChainOptions { stop: StopAt::Terminal, ..Default::default() })
            .map_err(|e| format!("{e}\n{src}"))?;
        let mut a = enumerate_execution_paths(&cpf, PATH_BUDGET);
        let mut b = enumerate_cfg_paths(&cfg, PATH_BUDGET);
        a.sort();
        b.sort();
        ensure(a == b, || format!("mismatch ({} vs {} paths) for\n{src}", a.len(), b.len()))?;
        programs += 1;
        paths += a.len();
    }
    Ok(format!("{programs} programs, {paths} paths, 0 mismatches"))
}

/// `x := a * x + b`, iterated concretely.
fn step(a: i64, b: i64, x: i128) -> i128 {
    a as i128 * x + b as i128
}

fn closed_form(a: i64, b: i64, k: &Counter) -> SymExpr {
    let f = &Poly::init("x").scale(&BigInt::from(a)) + &Poly::constant(b);
    solve_recurrence("x", &SymExpr::Poly(f), k, &|_| true)
}

/// Shapes with a closed form: arithmetic steps (including the identity)
/// and nonzero multiplications other than 1.
fn supported(a: i64, b: i64) -> bool {
    a == 1 || (b == 0 && a != 0)
}

fn eval_at(e: &SymExpr, x0: i128, k1: u32, k2: u32) -> Option<i128> {
    let v = e.eval(&|at: &Atom| match at {
        Atom::Init(_) => Some(BigInt::from(x0)),
        Atom::Counter(c) if c.update == 1 => Some(BigInt::from(k1)),
        Atom::Counter(_) => Some(BigInt::from(k2)),
        Atom::Input(_) => None,
    })?;
    i128::try_from(v).ok()
}

fn recurrence_merge() -> Verdict {
    let k1 = Counter::new(1, ResetRef::Root);
    let k2 = Counter::new(2, ResetRef::Root);
    let shapes: Vec<(i64, i64)> = PARAM_RANGE.flat_map(|a| PARAM_RANGE.map(move |b| (a, b))).collect();
    let mut checked = 0u64;
    for &(a, b) in &shapes {
        let c = closed_form(a, b, &k1);
        ensure(c.is_star() != supported(a, b), || format!("shape {a}x+{b} gave {c}"))?;
        if c.is_star() {
            continue;
        }
        for x0 in [-2i128, 0, 3] {
            let mut x = x0;
            for n in 0..=MAX_RUNS {
                ensure(eval_at(&c, x0, n, 0) == Some(x), || format!("{a}x+{b} after {n} from {x0}"))?;
                x = step(a, b, x);
                checked += 1;
            }
        }
    }
    let arithmetic = |(a, _): (i64, i64)| a == 1;
    for &s1 in &shapes {
        for &s2 in &shapes {
            if !supported(s1.0, s1.1) || !supported(s2.0, s2.1) {
                continue;
            }
            let m = merge_values("x", &[closed_form(s1.0, s1.1, &k1), closed_form(s2.0, s2.1, &k2)]);
            let identity = |s: (i64, i64)| s == (1, 0);
            let mergeable = identity(s1) || identity(s2) || arithmetic(s1) == arithmetic(s2);
            ensure(m.is_star() != mergeable, || format!("merge of {s1:?} and {s2:?} gave {m}"))?;
            if m.is_star() {
                continue;
            }
            for n1 in 0..=MAX_RUNS {
                for n2 in 0..=MAX_RUNS {
                    let len = n1 + n2;
                    for mask in 0u32..(1 << len) {
                        if mask.count_ones() != n1 {
                            continue;
                        }
                        for x0 in [-2i128, 3] {
                            let mut x = x0;
                            for i in 0..len {
                                let (a, b) = if mask & (1 << i) != 0 { s1 } else { s2 };
                                x = step(a, b, x);
                            }
                            ensure(eval_at(&m, x0, n1, n2) == Some(x), || {
                                format!("merge {s1:?}/{s2:?} interleaving {mask:b} from {x0}")
                            })?;
                            checked += 1;
                        }
                    }
                }
            }
        }
    }
    Ok(format!("{} shapes, {checked} concrete comparisons, 0 mismatches", shapes.len()))
}

fn necessity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0007);
    let mut reaching = 0;
    for _ in 0..NECESSITY_PROGRAMS {
        let src = loop_program(&mut rng);
        let p = prepare(&src);
        reaching += check_necessity(&p).map_err(|e| format!("{e}\n{src}"))?;
    }
    Ok(format!("{NECESSITY_PROGRAMS} programs, {reaching} target-reaching inputs, 0 violations"))
}

fn random_counter_system<R: Rng>(rng: &mut R) -> ConstraintSystem {
    let n = rng.gen_range(1..=3);
    let ks: Vec<Counter> = (1..=n).map(|i| Counter::new(i, ResetRef::Root)).collect();
    let rels = [Rel::Lt, Rel::Le, Rel::Gt, Rel::Ge, Rel::Eq, Rel::Ne];
    let mut constraints = Vec::new();
    for _ in 0..rng.gen_range(1..=4) {
        let mut lhs = Poly::zero();
        for k in &ks {
            let a = rng.gen_range(-3i64..=3);
            lhs = &lhs + &Poly::counter(k.clone()).scale(&BigInt::from(a));
        }
        let rhs = SymExpr::int(rng.gen_range(-10..=30));
        let lit = Literal::new(SymExpr::Poly(lhs), rels[rng.gen_range(0..rels.len())], rhs);
        let guard = rng.gen_bool(0.2).then(|| {
            Literal::new(SymExpr::Poly(Poly::counter(ks[0].clone())), Rel::Gt, SymExpr::int(rng.gen_range(0..5)))
        });
        constraints.push(Constraint { lit, guard, origin: (0, 0) });
    }
    ConstraintSystem { owner: 0, constraints }
}

fn random_pc<R: Rng>(rng: &mut R) -> PathCondition {
    let syms: Vec<InputSym> = (0..rng.gen_range(1..=PC_MAX_SYMBOLS)).map(|i| InputSym::Elem("A".into(), i)).collect();
    let x = |i: usize| Poly::input(syms[i].clone());
    let rels = [Rel::Lt, Rel::Le, Rel::Gt, Rel::Ge, Rel::Eq, Rel::Ne];
    let mut lits = Vec::new();
    for _ in 0..rng.gen_range(1..=5) {
        let mut lhs = Poly::zero();
        for _ in 0..rng.gen_range(1..=2) {
            let i = rng.gen_range(0..syms.len());
            lhs = &lhs + &x(i).scale(&BigInt::from(rng.gen_range(-3i64..=3)));
        }
        if rng.gen_bool(0.1) {
            lhs = &lhs + &(&x(0) * &x(syms.len() - 1));
        }
        let rhs = SymExpr::int(rng.gen_range(-PC_RANGE..=PC_RANGE));
        lits.push(Literal::new(SymExpr::Poly(lhs), rels[rng.gen_range(0..rels.len())], rhs));
    }
    // Keep most conditions inside the brute-force box.
    for (i, _) in syms.iter().enumerate() {
        if rng.gen_bool(0.7) {
            lits.push(Literal::new(SymExpr::Poly(x(i)), Rel::Ge, SymExpr::int(-PC_RANGE)));
            lits.push(Literal::new(SymExpr::Poly(x(i)), Rel::Le, SymExpr::int(PC_RANGE)));
        }
    }
    PathCondition { lits }
}

fn solver_agreement() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0008);
    let mut refuted = 0;
    for _ in 0..COUNTER_SYSTEMS {
        let sys = random_counter_system(&mut rng);
        if solve_intervals(&sys).unsat {
            refuted += 1;
            if let Some(w) = solve_enumerate(&sys, COUNTER_BOUND) {
                return Err(format!("interval unsat but {w:?} solves\n{}", sys));
            }
        }
    }
    let (mut sat, mut unsat) = (0, 0);
    for _ in 0..PC_CASES {
        let pc = random_pc(&mut rng);
        let brute = brute_force(&pc, -PC_RANGE, PC_RANGE);
        match check_sat(&pc).map_err(|e| e.to_string())? {
            SatResult::Sat(w) => {
                ensure(pc.holds(&w), || format!("bad model for {pc}"))?;
                sat += 1;
            }
            SatResult::Unsat => {
                ensure(brute.is_none(), || format!("unsat but brute force finds a model for {pc}"))?;
                unsat += 1;
            }
            SatResult::Unknown => ensure(brute.is_none(), || format!("unknown on {pc}"))?,
        }
    }
    Ok(format!(
        "{COUNTER_SYSTEMS} counter systems ({refuted} refuted), {PC_CASES} path conditions ({sat} sat, {unsat} unsat), 0 disagreements"
    ))
}

fn soundness_gate() -> Verdict {
    let mut validated = 0;
    let mut check = |src: &str, config: &NavConfig| -> Result<Outcome, String> {
        match analyze_source(src, config) {
            Ok(r) => {
                if matches!(r.outcome, Outcome::Feasible { .. }) {
                    validated += 1;
                }
                Ok(r.outcome)
            }
            Err(Error::ValidationFailure(m)) => Err(format!("validation failure: {m}\n{src}")),
            Err(e) => Err(format!("{e}\n{src}")),
        }
    };
    let forward = NavConfig::default();
    let reverse = NavConfig { reverse: true, ..NavConfig::default() };
    for src in [RUNNING_EXAMPLE, RUNNING_EXAMPLE_A17] {
        check(src, &forward)?;
        check(src, &reverse)?;
    }
    for case in &CASES {
        check(case.source, &case.config(&forward))?;
    }
    // Random loop programs: a proof of infeasibility must agree with
    // exhaustive concrete runs.
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0009);
    let mut proofs = 0;
    for _ in 0..NECESSITY_PROGRAMS {
        let src = loop_program(&mut rng);
        let outcome = check(&src, &forward)?;
        if matches!(outcome, Outcome::Infeasible { .. }) {
            proofs += 1;
            let p = prepare(&src);
            let reached = check_necessity(&p).map_err(|e| format!("{e}\n{src}"))?;
            ensure(reached == 0, || format!("claimed infeasible but {reached} inputs reach the target\n{src}"))?;
        }
    }
    Ok(format!("{validated} feasible outcomes validated, {proofs} infeasibility claims confirmed, 0 failures"))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Verdict); 9] = [
        ("running example end to end", running_example),
        ("infeasible before execution", refuted_variant),
        ("chain form of the running example", chain_form),
        ("benchmark split", benchmark_split),
        ("chain paths equal graph paths", path_correspondence),
        ("closed forms and merges", recurrence_merge),
        ("constraint systems are necessary", necessity),
        ("solver agreement", solver_agreement),
        ("soundness gate", soundness_gate),
    ];
    let mut failed = BTreeSet::new();
    for (i, (title, f)) in criteria.iter().enumerate() {
        let v = f();
        report(i + 1, title, &v);
        if v.is_err() {
            failed.insert(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
