//! Machine-readable reports (JSON, `"schema": 1`).
//!
//! Terms are written in the problem syntax as printed by the library, so
//! they read back with [`parse_output_term`].

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{ConstraintKind, ConstraintSystem, Verdict};
use crate::deduction::{DeductionSystem, Derivation, Step};
use crate::dsl::{parse_output_term, DslError};
use crate::orchestrator::{Instruction, MediatorProgram, Orchestration};
use crate::solver::{Outcome, SolverSolution};
use crate::terms::{Substitution, Symbol, Term, TermError};

pub const SCHEMA: u32 = 1;

/// One mediator instruction or derivation step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Op {
    Recv {
        term: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        from: Option<String>,
    },
    Fresh {
        term: String,
    },
    Apply {
        rule: String,
        premises: Vec<String>,
        term: String,
    },
    Send {
        term: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        to: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeJson {
    pub dag_size: usize,
    pub bound: usize,
    /// The solution uses more than half of the bound.
    pub binding: bool,
}

/// Result of `solve` and `orchestrate`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveReport {
    pub schema: u32,
    /// `SAT`, `UNSAT` or `EXHAUSTED`.
    pub verdict: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    /// Strand owning each position of the chosen interleaving.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interleaving: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub substitution: Option<BTreeMap<String, String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mediator: Option<Vec<Op>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<SizeJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub injective: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintJson {
    pub index: usize,
    pub kind: String,
    pub instance: String,
    pub holds: bool,
}

/// Result of `verify`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub schema: u32,
    /// `valid` or `invalid`.
    pub verdict: String,
    pub first_violation: Option<usize>,
    pub constraints: Vec<ConstraintJson>,
}

/// Result of `derivable` and `check-derivation`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivationReport {
    pub schema: u32,
    pub verdict: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proof: Option<Vec<Op>>,
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported schema {0}")]
    Schema(u32),
    #[error("term {text:?}: {source}")]
    Term { text: String, source: DslError },
    #[error("unknown variable {0}")]
    UnknownVariable(String),
    #[error(transparent)]
    Substitution(#[from] TermError),
    #[error("unknown rule {0}")]
    UnknownRule(String),
    #[error("no {0} in the document")]
    Missing(&'static str),
}

pub fn kind_name(kind: ConstraintKind) -> &'static str {
    match kind {
        ConstraintKind::Send => "send",
        ConstraintKind::Receive => "receive",
        ConstraintKind::Forbid => "forbid",
    }
}

fn strings(ts: &[Term]) -> Vec<String> {
    ts.iter().map(Term::to_string).collect()
}

pub fn substitution_json(sigma: &Substitution) -> BTreeMap<String, String> {
    sigma.iter().map(|(x, t)| (x.name(), t.to_string())).collect()
}

pub fn program_ops(program: &MediatorProgram) -> Vec<Op> {
    program
        .instructions
        .iter()
        .map(|ins| match ins {
            Instruction::Recv { term, from } => Op::Recv {
                term: term.to_string(),
                from: Some(from.clone()),
            },
            Instruction::Fresh { term } => Op::Fresh {
                term: term.to_string(),
            },
            Instruction::Apply {
                rule,
                premises,
                term,
            } => Op::Apply {
                rule: rule.clone(),
                premises: strings(premises),
                term: term.to_string(),
            },
            Instruction::Send { term, to } => Op::Send {
                term: term.to_string(),
                to: Some(to.clone()),
            },
        })
        .collect()
}

pub fn derivation_ops(sys: &DeductionSystem, d: &Derivation) -> Vec<Op> {
    d.steps
        .iter()
        .map(|st| match st {
            Step::Acquire(t) => Op::Recv {
                term: t.to_string(),
                from: None,
            },
            Step::Fresh(t) => Op::Fresh {
                term: t.to_string(),
            },
            Step::Apply {
                rule,
                premises,
                conclusion,
            } => Op::Apply {
                rule: sys.label(*rule),
                premises: strings(premises),
                term: conclusion.to_string(),
            },
        })
        .collect()
}

fn solution_report(
    verdict: &str,
    sol: &SolverSolution,
    program: &MediatorProgram,
    orchestration: Option<&Orchestration>,
) -> SolveReport {
    SolveReport {
        schema: SCHEMA,
        verdict: verdict.into(),
        reason: None,
        interleaving: orchestration.map(|o| o.labels().into_iter().map(String::from).collect()),
        substitution: Some(substitution_json(&sol.substitution)),
        mediator: Some(program_ops(program)),
        size: Some(SizeJson {
            dag_size: sol.size.dag_size,
            bound: sol.size.bound,
            binding: sol.size.binding(),
        }),
        injective: Some(sol.injective),
    }
}

fn bare(verdict: &str, reason: Option<String>) -> SolveReport {
    SolveReport {
        schema: SCHEMA,
        verdict: verdict.into(),
        reason,
        interleaving: None,
        substitution: None,
        mediator: None,
        size: None,
        injective: None,
    }
}

/// Report of a solver run; `program` is the routed mediator of a SAT result.
pub fn solve_report(outcome: &Outcome, program: Option<&MediatorProgram>) -> SolveReport {
    match outcome {
        Outcome::Sat(sol) => solution_report(
            "SAT",
            sol,
            program.expect("a SAT report needs its mediator program"),
            None,
        ),
        Outcome::Unsat => bare("UNSAT", None),
        Outcome::Exhausted(why) => bare("EXHAUSTED", Some(why.clone())),
    }
}

pub fn orchestrate_report(outcome: &crate::orchestrator::OrchestrateOutcome) -> SolveReport {
    use crate::orchestrator::OrchestrateOutcome as O;
    match outcome {
        O::Sat {
            orchestration,
            solution,
            program,
            ..
        } => solution_report("SAT", solution, program, Some(orchestration)),
        O::Unsat => bare("UNSAT", None),
        O::Exhausted(why) => bare("EXHAUSTED", Some(why.clone())),
    }
}

pub fn verify_report(verdict: &Verdict) -> VerifyReport {
    VerifyReport {
        schema: SCHEMA,
        verdict: if verdict.holds() { "valid" } else { "invalid" }.into(),
        first_violation: verdict.first_violation(),
        constraints: verdict
            .details
            .iter()
            .map(|d| ConstraintJson {
                index: d.index,
                kind: kind_name(d.kind).into(),
                instance: d.instance.to_string(),
                holds: d.holds,
            })
            .collect(),
    }
}

/// Reads `text` as a term of `sys`, with the variables of `s`.
pub fn read_term(sys: &DeductionSystem, s: &ConstraintSystem, text: &str) -> Result<Term, ReportError> {
    let vars: BTreeSet<String> = s.vars().into_iter().map(|v| v.name()).collect();
    parse_output_term(text, sys, &vars).map_err(|source| ReportError::Term {
        text: text.into(),
        source,
    })
}

fn check_schema(doc: &serde_json::Value) -> Result<(), ReportError> {
    match doc.get("schema").and_then(|v| v.as_u64()) {
        Some(n) if n == u64::from(SCHEMA) => Ok(()),
        Some(n) => Err(ReportError::Schema(n as u32)),
        None => Ok(()),
    }
}

/// The substitution of a solve report, or of a bare `{"X": "t"}` object.
pub fn read_substitution(
    sys: &DeductionSystem,
    s: &ConstraintSystem,
    json: &str,
) -> Result<Substitution, ReportError> {
    let doc: serde_json::Value = serde_json::from_str(json)?;
    check_schema(&doc)?;
    let map = if doc.get("schema").is_some() {
        doc.get("substitution").ok_or(ReportError::Missing("substitution"))?
    } else {
        &doc
    };
    let map: BTreeMap<String, String> = serde_json::from_value(map.clone())?;
    let vars = s.vars();
    let mut bindings = Vec::new();
    for (name, text) in map {
        let x = Symbol::variable(&name);
        if !vars.contains(&x) {
            return Err(ReportError::UnknownVariable(name));
        }
        bindings.push((x, read_term(sys, s, &text)?));
    }
    Ok(Substitution::from_bindings(bindings)?)
}

/// The derivation in a solve report's `mediator`, a derivation report's
/// `proof`, or a bare list of steps; `send` steps are routing only.
pub fn read_derivation(
    sys: &DeductionSystem,
    s: &ConstraintSystem,
    json: &str,
) -> Result<Derivation, ReportError> {
    let doc: serde_json::Value = serde_json::from_str(json)?;
    check_schema(&doc)?;
    let ops = if doc.is_array() {
        &doc
    } else {
        doc.get("mediator")
            .or_else(|| doc.get("proof"))
            .ok_or(ReportError::Missing("mediator"))?
    };
    let ops: Vec<Op> = serde_json::from_value(ops.clone())?;
    let mut steps = Vec::new();
    for op in ops {
        match op {
            Op::Recv { term, .. } => steps.push(Step::Acquire(read_term(sys, s, &term)?)),
            Op::Fresh { term } => steps.push(Step::Fresh(read_term(sys, s, &term)?)),
            Op::Apply {
                rule,
                premises,
                term,
            } => {
                let id = sys
                    .rule_by_label(&rule)
                    .ok_or_else(|| ReportError::UnknownRule(rule.clone()))?;
                let premises = premises
                    .iter()
                    .map(|p| read_term(sys, s, p))
                    .collect::<Result<_, _>>()?;
                steps.push(Step::Apply {
                    rule: id,
                    premises,
                    conclusion: read_term(sys, s, &term)?,
                });
            }
            Op::Send { .. } => {}
        }
    }
    Ok(Derivation::new(steps))
}
