//! `medsynth`: decide constraint systems and synthesize mediators.
//!
//! Exit codes: 0 SAT/YES/valid, 1 UNSAT/NO/invalid, 2 usage or parse
//! error, 3 search exhausted.

use std::collections::BTreeSet;
use std::io::Read;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use medsynth::constraints::verify_solution;
use medsynth::deduction::{check_derivation, prove};
use medsynth::dsl::{parse_problem, parse_term, Problem};
use medsynth::orchestrator::{emit_mediator, orchestrate, OrchestrateOptions, OrchestrateOutcome, Orchestration};
use medsynth::report::{self, DerivationReport, SCHEMA};
use medsynth::solver::{solve, Mode, Outcome, SolverConfig};
use medsynth::{ConstraintSystem, Substitution, Term};

#[derive(Parser)]
#[command(name = "medsynth", version, about = "Deducibility constraints with non-disclosure, and mediator synthesis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Reduction,
    Reference,
}

#[derive(clap::Args)]
struct SearchArgs {
    #[arg(long, value_enum, default_value = "reduction")]
    mode: ModeArg,
    /// Shuffles equal-cost choices; MEDSYNTH_SEED overrides it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads for orchestration.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    json: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Is the goal deducible from the knowledge?
    Derivable {
        file: PathBuf,
        /// Comma-separated terms.
        #[arg(long, default_value = "")]
        knowledge: String,
        #[arg(long)]
        goal: String,
        /// Print a derivation of the goal.
        #[arg(long)]
        proof: bool,
        #[arg(long)]
        json: bool,
    },
    /// Decide the file's constraint system; several strands are
    /// orchestrated.
    Solve {
        file: PathBuf,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Search the interleavings of the file's strands.
    Orchestrate {
        file: PathBuf,
        #[command(flatten)]
        search: SearchArgs,
        #[arg(long)]
        max_interleavings: Option<usize>,
        /// Solve every interleaving in full, without prefix pruning.
        #[arg(long)]
        no_prune: bool,
    },
    /// Re-check a substitution against the file's constraint system.
    Verify {
        file: PathBuf,
        /// JSON document, file path, or `-` for standard input.
        #[arg(long)]
        solution: String,
        #[arg(long)]
        json: bool,
    },
    /// Replay a derivation against the file's Sends.
    CheckDerivation {
        file: PathBuf,
        /// JSON document, file path, or `-` for standard input.
        #[arg(long)]
        derivation: String,
        /// Substitution instantiating the Sends; defaults to the one in the
        /// derivation document, if any.
        #[arg(long)]
        solution: Option<String>,
        #[arg(long)]
        json: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load(path: &PathBuf) -> Result<Problem> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_problem(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Inline JSON, `-` for standard input, or a file path.
fn document(arg: &str) -> Result<String> {
    let trimmed = arg.trim_start();
    if trimmed.starts_with('{') || trimmed.starts_with('[') {
        return Ok(arg.to_string());
    }
    if arg == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s)?;
        return Ok(s);
    }
    std::fs::read_to_string(arg).with_context(|| format!("reading {arg}"))
}

/// The constraint system a document refers to: the interleaving it names,
/// if any, otherwise the strands in file order.
fn system_for(p: &Problem, text: &str) -> Result<ConstraintSystem> {
    let doc: serde_json::Value = serde_json::from_str(text).context("malformed JSON")?;
    let order: Vec<usize> = match doc.get("interleaving") {
        Some(labels) => {
            let labels: Vec<String> = serde_json::from_value(labels.clone()).context("interleaving")?;
            labels
                .iter()
                .map(|l| {
                    p.strands
                        .iter()
                        .position(|st| &st.name == l)
                        .with_context(|| format!("unknown strand {l}"))
                })
                .collect::<Result<_>>()?
        }
        None => file_order(p),
    };
    let counts: Vec<usize> = p.strands.iter().map(|st| st.constraints.len()).collect();
    for (k, n) in counts.iter().enumerate() {
        if order.iter().filter(|&&o| o == k).count() != *n {
            bail!("interleaving does not match strand {}", p.strands[k].name);
        }
    }
    Ok(Orchestration::new(&p.strands, order).merged)
}

fn file_order(p: &Problem) -> Vec<usize> {
    p.strands
        .iter()
        .enumerate()
        .flat_map(|(k, st)| std::iter::repeat(k).take(st.constraints.len()))
        .collect()
}

fn config(search: &SearchArgs) -> Result<SolverConfig> {
    let seed = match std::env::var("MEDSYNTH_SEED") {
        Ok(v) => v.trim().parse().context("MEDSYNTH_SEED must be an unsigned integer")?,
        Err(_) => search.seed,
    };
    if search.jobs == 0 {
        bail!("--jobs must be at least 1");
    }
    Ok(SolverConfig {
        mode: match search.mode {
            ModeArg::Reduction => Mode::Reduction,
            ModeArg::Reference => Mode::Reference,
        },
        seed,
        jobs: search.jobs,
        ..SolverConfig::default()
    })
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    use std::io::Write;
    let text = serde_json::to_string_pretty(value)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

/// Splits at commas outside parentheses.
fn split_terms(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let (mut depth, mut start) = (0i32, 0);
    for (i, c) in text.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(text[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(text[start..].trim());
    out.retain(|t| !t.is_empty());
    out
}

fn verdict_code(label: &str) -> u8 {
    match label {
        "SAT" => 0,
        "UNSAT" => 1,
        _ => 3,
    }
}

fn print_solution(sigma: &Substitution, program: &impl std::fmt::Display) {
    println!("substitution:");
    for (x, t) in sigma.iter() {
        println!("  {x} = {t}");
    }
    println!("mediator:");
    for line in program.to_string().lines() {
        println!("  {line}");
    }
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Derivable {
            file,
            knowledge,
            goal,
            proof,
            json,
        } => {
            let p = load(&file)?;
            let none = BTreeSet::new();
            let read = |t: &str| parse_term(t, &p.system, &none).with_context(|| format!("term {t:?}"));
            let k: Vec<Term> = split_terms(&knowledge).into_iter().map(read).collect::<Result<_>>()?;
            let goal = read(&goal)?;
            let d = prove(&p.system, &k, &goal);
            let yes = d.is_some();
            if json {
                print_json(&DerivationReport {
                    schema: SCHEMA,
                    verdict: if yes { "YES" } else { "NO" }.into(),
                    reason: None,
                    proof: d.filter(|_| proof).map(|d| report::derivation_ops(&p.system, &d)),
                })?;
            } else {
                println!("{}", if yes { "YES" } else { "NO" });
                if let (true, Some(d)) = (proof, d) {
                    for op in report::derivation_ops(&p.system, &d) {
                        println!("  {}", serde_json::to_string(&op)?);
                    }
                }
            }
            Ok(if yes { 0 } else { 1 })
        }
        Command::Solve { file, search } => {
            let p = load(&file)?;
            let cfg = config(&search)?;
            if p.strands.len() > 1 {
                return run_orchestrate(&p, &cfg, &OrchestrateOptions::default(), search.json);
            }
            let orch = Orchestration::new(&p.strands, file_order(&p));
            let out = solve(&p.system, &orch.merged, &cfg)?;
            let program = out.solution().map(|sol| emit_mediator(&p.system, &orch, sol));
            if search.json {
                print_json(&report::solve_report(&out, program.as_ref()))?;
            } else {
                println!("{}", out.label());
                match (&out, &program) {
                    (Outcome::Sat(sol), Some(program)) => print_solution(&sol.substitution, program),
                    (Outcome::Exhausted(why), _) => println!("{why}"),
                    _ => {}
                }
            }
            Ok(verdict_code(out.label()))
        }
        Command::Orchestrate {
            file,
            search,
            max_interleavings,
            no_prune,
        } => {
            let p = load(&file)?;
            let cfg = config(&search)?;
            let opts = OrchestrateOptions {
                max_interleavings,
                prune: !no_prune,
            };
            run_orchestrate(&p, &cfg, &opts, search.json)
        }
        Command::Verify { file, solution, json } => {
            let p = load(&file)?;
            let text = document(&solution)?;
            let s = system_for(&p, &text)?;
            let sigma = report::read_substitution(&p.system, &s, &text)?;
            let verdict = verify_solution(&p.system, &s, &sigma)?;
            if json {
                print_json(&report::verify_report(&verdict))?;
            } else {
                println!("{}", if verdict.holds() { "valid" } else { "invalid" });
                for d in &verdict.details {
                    let mark = if d.holds { "ok  " } else { "FAIL" };
                    println!("  {mark} {:>3} {} {}", d.index, d.kind.sigil(), d.instance);
                }
                if let Some(i) = verdict.first_violation() {
                    println!("first violated constraint: {i}");
                }
            }
            Ok(if verdict.holds() { 0 } else { 1 })
        }
        Command::CheckDerivation {
            file,
            derivation,
            solution,
            json,
        } => {
            let p = load(&file)?;
            let text = document(&derivation)?;
            let s = system_for(&p, &text)?;
            let d = report::read_derivation(&p.system, &s, &text)?;
            let sigma = match &solution {
                Some(arg) => report::read_substitution(&p.system, &s, &document(arg)?)?,
                None if text.contains("\"substitution\"") => report::read_substitution(&p.system, &s, &text)?,
                None => Substitution::new(),
            };
            let outputs: Vec<Term> = s.outputs().iter().map(|t| sigma.apply(t)).collect();
            if let Some(t) = outputs.iter().find(|t| !t.is_ground()) {
                bail!("send payload {t} is not ground; pass --solution");
            }
            let result = check_derivation(&p.system, &d, &outputs);
            let reason = result.as_ref().err().map(|e| e.to_string());
            if json {
                print_json(&DerivationReport {
                    schema: SCHEMA,
                    verdict: if result.is_ok() { "valid" } else { "invalid" }.into(),
                    reason,
                    proof: None,
                })?;
            } else {
                match &reason {
                    None => println!("valid"),
                    Some(r) => println!("invalid: {r}"),
                }
            }
            Ok(if result.is_ok() { 0 } else { 1 })
        }
    }
}

fn run_orchestrate(p: &Problem, cfg: &SolverConfig, opts: &OrchestrateOptions, json: bool) -> Result<u8> {
    let (out, stats) = orchestrate(&p.system, &p.strands, cfg, opts)?;
    if json {
        print_json(&report::orchestrate_report(&out))?;
    } else {
        println!("{}", out.label());
        match &out {
            OrchestrateOutcome::Sat {
                orchestration,
                solution,
                program,
                index,
            } => {
                println!("interleaving #{index}: {}", orchestration.labels().join(" "));
                print_solution(&solution.substitution, program);
            }
            OrchestrateOutcome::Exhausted(why) => println!("{why}"),
            OrchestrateOutcome::Unsat => {}
        }
        eprintln!(
            "prefixes checked {}, pruned {}, interleavings solved {}",
            stats.prefixes_checked, stats.prefixes_pruned, stats.interleavings_solved
        );
    }
    Ok(verdict_code(out.label()))
}
