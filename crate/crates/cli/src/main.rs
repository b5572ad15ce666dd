use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use loopnav_core::corpus::{BenchCase, Expected, CASES};
use loopnav_core::pipeline::{prepare, RunReport};
use loopnav_core::{analyze_source, constraints, Error, NavConfig, Outcome};

const EXIT_OK: u8 = 0;
const EXIT_INCONCLUSIVE: u8 = 1;
const EXIT_ERROR: u8 = 2;
const EXIT_VALIDATION: u8 = 3;

#[derive(Parser)]
#[command(name = "loopnav", version, about = "Reachability of a target statement by loop-guided symbolic execution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Args)]
struct Opts {
    /// Maximum number of chain nodes executed.
    #[arg(long, global = true, default_value_t = 100_000)]
    max_states: u64,
    /// Maximum value of any loop counter.
    #[arg(long, global = true, default_value_t = 10_000)]
    max_counter: u64,
    #[arg(long, global = true, default_value_t = 60)]
    timeout_s: u64,
    /// SMT-LIB solver command consulted when the built-in check gives up.
    #[arg(long, global = true, env = "LOOPNAV_SMT")]
    external_smt: Option<String>,
    /// Machine-readable output.
    #[arg(long, global = true)]
    json: bool,
    /// Order in which roots and subchains are tried.
    #[arg(long, global = true, value_enum, default_value_t = SeedOrder::Dfs)]
    seed_order: SeedOrder,
}

#[derive(Clone, Copy, ValueEnum)]
enum SeedOrder {
    Dfs,
    Reverse,
}

#[derive(Subcommand)]
enum Command {
    /// Decide whether the target is reachable and report a witness.
    Analyze { file: PathBuf },
    /// Succeed only if the target is proven unreachable.
    Prove { file: PathBuf },
    /// Print the chain program form.
    DumpChains { file: PathBuf },
    /// Print the counter constraint systems.
    DumpConstraints { file: PathBuf },
    /// Run the bundled benchmark corpus.
    Bench {
        /// Only run cases whose name contains this (case-insensitive).
        #[arg(long)]
        filter: Option<String>,
    },
}

impl Opts {
    fn nav(&self) -> NavConfig {
        NavConfig {
            max_states: self.max_states,
            max_counter: self.max_counter,
            timeout: Duration::from_secs(self.timeout_s),
            external_smt: self.external_smt.clone(),
            reverse: matches!(self.seed_order, SeedOrder::Reverse),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::ValidationFailure(_) => EXIT_VALIDATION,
                _ => EXIT_ERROR,
            })
        }
    }
}

fn read(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn run(cli: &Cli) -> Result<u8, Error> {
    let opts = &cli.opts;
    match &cli.command {
        Command::Analyze { file } => {
            let report = analyze_source(&read(file)?, &opts.nav())?;
            print_report(&report, opts.json);
            Ok(match report.outcome {
                Outcome::Inconclusive { .. } => EXIT_INCONCLUSIVE,
                _ => EXIT_OK,
            })
        }
        Command::Prove { file } => {
            let report = analyze_source(&read(file)?, &opts.nav())?;
            print_report(&report, opts.json);
            Ok(match report.outcome {
                Outcome::Infeasible { .. } => EXIT_OK,
                _ => EXIT_INCONCLUSIVE,
            })
        }
        Command::DumpChains { file } => {
            let p = prepare(&read(file)?)?;
            if opts.json {
                println!("{}", pretty(&p.chains.to_json()));
            } else {
                print!("{}", p.chains);
            }
            Ok(EXIT_OK)
        }
        Command::DumpConstraints { file } => {
            let p = prepare(&read(file)?)?;
            if opts.json {
                println!("{}", pretty(&constraints::to_json(&p.phase2)));
            } else {
                print!("{}", constraints::render(&p.chains, &p.phase2));
            }
            Ok(EXIT_OK)
        }
        Command::Bench { filter } => bench(filter.as_deref(), opts),
    }
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("json values serialize")
}

fn print_report(r: &RunReport, as_json: bool) {
    if as_json {
        println!("{}", pretty(&r.to_json()));
        return;
    }
    match &r.outcome {
        Outcome::Feasible { root, witness, .. } => {
            println!("feasible (root c{root})");
            for (k, v) in witness {
                println!("  {k} = {v}");
            }
        }
        Outcome::Infeasible { evidence } => println!("infeasible ({})", serde_json::to_value(evidence).unwrap().as_str().unwrap()),
        Outcome::Inconclusive { reason } => println!("inconclusive: {reason}"),
    }
    let s = &r.stats;
    println!(
        "chains {}/{}, elim {}, constraints {}, states {}, interval solves {}+{}, smt {}, pc {}, {:.1} ms",
        s.chains_root,
        s.chains_all,
        s.elim,
        s.constraints,
        s.sstat,
        s.csol_initial,
        s.csol_rest,
        s.smt,
        s.pc_len,
        r.timings.total_ms()
    );
}

struct BenchRow {
    case: &'static BenchCase,
    result: Result<RunReport, Error>,
    wall: Duration,
}

impl BenchRow {
    fn matches(&self) -> bool {
        match (&self.result, self.case.expected) {
            (Ok(r), Expected::Feasible) => matches!(r.outcome, Outcome::Feasible { .. }),
            (Ok(r), Expected::Infeasible) => matches!(r.outcome, Outcome::Infeasible { .. }),
            _ => false,
        }
    }
}

fn bench(filter: Option<&str>, opts: &Opts) -> Result<u8, Error> {
    let needle = filter.map(str::to_lowercase);
    let cases: Vec<&'static BenchCase> = CASES
        .iter()
        .filter(|c| needle.as_ref().is_none_or(|n| c.name.to_lowercase().contains(n)))
        .collect();
    let base = opts.nav();
    // Cases are independent; run them side by side and report in name order.
    let mut rows: Vec<BenchRow> = std::thread::scope(|s| {
        let handles: Vec<_> = cases
            .iter()
            .map(|&case| {
                let config = case.config(&base);
                s.spawn(move || {
                    let t = Instant::now();
                    let result = analyze_source(case.source, &config);
                    BenchRow { case, result, wall: t.elapsed() }
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("bench worker")).collect()
    });
    rows.sort_by_key(|r| r.case.name);

    if opts.json {
        let out: Vec<Value> = rows
            .iter()
            .map(|r| {
                let mut v = match &r.result {
                    Ok(rep) => rep.to_json(),
                    Err(e) => json!({ "outcome": "error", "error": e.to_string() }),
                };
                v["name"] = json!(r.case.name);
                v["expected"] = json!(expected_name(r.case.expected));
                v["matches"] = json!(r.matches());
                v
            })
            .collect();
        println!("{}", pretty(&Value::Array(out)));
    } else {
        println!(
            "{:<9} {:<10} {:<12} {:>5} {:>5} {:>4} {:>5} {:>6} {:>6} {:>6} {:>5} {:>4} {:>9}",
            "case", "expected", "outcome", "root", "all", "elim", "cons", "sstat", "csol0", "csol", "smt", "pc", "ms"
        );
        for r in &rows {
            match &r.result {
                Ok(rep) => {
                    let s = &rep.stats;
                    println!(
                        "{:<9} {:<10} {:<12} {:>5} {:>5} {:>4} {:>5} {:>6} {:>6} {:>6} {:>5} {:>4} {:>9.1}{}",
                        r.case.name,
                        expected_name(r.case.expected),
                        rep.outcome.name(),
                        s.chains_root,
                        s.chains_all,
                        s.elim,
                        s.constraints,
                        s.sstat,
                        s.csol_initial,
                        s.csol_rest,
                        s.smt,
                        s.pc_len,
                        r.wall.as_secs_f64() * 1000.0,
                        if r.matches() { "" } else { "  MISMATCH" }
                    );
                }
                Err(e) => println!("{:<9} {:<10} error: {e}", r.case.name, expected_name(r.case.expected)),
            }
        }
    }

    if rows.iter().any(|r| matches!(r.result, Err(Error::ValidationFailure(_)))) {
        return Ok(EXIT_VALIDATION);
    }
    if rows.iter().any(|r| r.result.is_err()) {
        return Ok(EXIT_ERROR);
    }
    Ok(if rows.iter().all(BenchRow::matches) { EXIT_OK } else { EXIT_INCONCLUSIVE })
}

fn expected_name(e: Expected) -> &'static str {
    match e {
        Expected::Feasible => "feasible",
        Expected::Infeasible => "infeasible",
    }
}
