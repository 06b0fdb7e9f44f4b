//! Interleaving per-service strands into one satisfiable constraint system,
//! and the mediator program read off a solution.

use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::constraints::{well_formed, Constraint, ConstraintKind, ConstraintSystem, ViolationKind};
use crate::deduction::{DeductionSystem, Derivation, Step};
use crate::solver::{solve, Outcome, SolveError, SolverConfig, SolverSolution};
use crate::terms::{vars_of, Term};

/// The constraints one service imposes, in its own order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Strand {
    pub name: String,
    pub constraints: ConstraintSystem,
}

impl Strand {
    pub fn new(name: impl Into<String>, constraints: Vec<Constraint>) -> Strand {
        Strand {
            name: name.into(),
            constraints: ConstraintSystem::new(constraints),
        }
    }
}

/// A merge of strands preserving each strand's order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Orchestration {
    pub strands: Vec<Strand>,
    /// `order[k]` is the strand contributing the `k+1`-th merged constraint.
    pub order: Vec<usize>,
    pub merged: ConstraintSystem,
}

impl Orchestration {
    pub fn new(strands: &[Strand], order: Vec<usize>) -> Orchestration {
        let mut next = vec![0; strands.len()];
        let mut merged = ConstraintSystem::default();
        for &s in &order {
            merged.push(strands[s].constraints.constraints()[next[s]].clone());
            next[s] += 1;
        }
        Orchestration {
            strands: strands.to_vec(),
            order,
            merged,
        }
    }

    /// A single strand taken as is.
    pub fn single(strand: Strand) -> Orchestration {
        let order = vec![0; strand.constraints.len()];
        Orchestration::new(&[strand], order)
    }

    /// Name of the strand owning merged position `i` (1-based).
    pub fn owner(&self, i: usize) -> &str {
        &self.strands[self.order[i - 1]].name
    }

    /// The strand names in merged order.
    pub fn labels(&self) -> Vec<&str> {
        (1..=self.order.len()).map(|i| self.owner(i)).collect()
    }
}

/// `(Σ nᵢ)! / Π nᵢ!`, saturating.
pub fn interleaving_count(lengths: &[usize]) -> u128 {
    let mut total: u128 = 1;
    let mut n: u128 = 0;
    for &len in lengths {
        for k in 1..=len as u128 {
            n += 1;
            // Binomial steps keep every intermediate value integral.
            total = match total.checked_mul(n) {
                Some(v) => v / k,
                None => return u128::MAX,
            };
        }
    }
    total
}

/// Lexicographic enumeration of the order-preserving merges, as sequences
/// of strand indices.
#[derive(Debug, Clone)]
pub struct Interleavings {
    next: Option<Vec<usize>>,
}

pub fn interleavings(lengths: &[usize]) -> Interleavings {
    let first = lengths
        .iter()
        .enumerate()
        .flat_map(|(s, &n)| std::iter::repeat(s).take(n))
        .collect();
    Interleavings { next: Some(first) }
}

impl Iterator for Interleavings {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        // Next multiset permutation.
        if let Some(i) = (1..succ.len()).rev().find(|&i| succ[i - 1] < succ[i]) {
            let pivot = i - 1;
            let j = (i..succ.len()).rev().find(|&j| succ[j] > succ[pivot]).unwrap();
            succ.swap(pivot, j);
            succ[i..].reverse();
            self.next = Some(succ);
        }
        Some(current)
    }
}

#[derive(Debug, Clone)]
pub struct OrchestrateOptions {
    /// Full interleavings handed to the solver before giving up.
    pub max_interleavings: Option<usize>,
    /// Skip every extension of an unsatisfiable prefix.
    pub prune: bool,
}

impl Default for OrchestrateOptions {
    fn default() -> Self {
        OrchestrateOptions {
            max_interleavings: None,
            prune: true,
        }
    }
}

#[derive(Debug, Clone)]
pub enum OrchestrateOutcome {
    Sat {
        orchestration: Orchestration,
        solution: Box<SolverSolution>,
        program: MediatorProgram,
        /// 0-based rank of the interleaving in lexicographic order among
        /// those solved.
        index: usize,
    },
    Unsat,
    Exhausted(String),
}

impl OrchestrateOutcome {
    pub fn label(&self) -> &'static str {
        match self {
            OrchestrateOutcome::Sat { .. } => "SAT",
            OrchestrateOutcome::Unsat => "UNSAT",
            OrchestrateOutcome::Exhausted(_) => "EXHAUSTED",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct OrchestrateStats {
    pub prefixes_checked: usize,
    pub prefixes_pruned: usize,
    pub interleavings_solved: usize,
}

struct Walk<'a> {
    sys: &'a DeductionSystem,
    strands: &'a [Strand],
    cfg: &'a SolverConfig,
    opts: &'a OrchestrateOptions,
    stats: OrchestrateStats,
    batch: Vec<Vec<usize>>,
    found: Option<(Vec<usize>, Box<SolverSolution>, usize)>,
    exhausted: Option<String>,
    stop: bool,
}

/// Searches the interleavings in lexicographic order and returns the first
/// satisfiable one with its mediator.
pub fn orchestrate(
    sys: &DeductionSystem,
    strands: &[Strand],
    cfg: &SolverConfig,
    opts: &OrchestrateOptions,
) -> Result<(OrchestrateOutcome, OrchestrateStats), SolveError> {
    // Determination does not depend on the order; check it once.
    let all: Vec<usize> = (0..strands.len())
        .flat_map(|s| std::iter::repeat(s).take(strands[s].constraints.len()))
        .collect();
    let violations: Vec<_> = well_formed(&Orchestration::new(strands, all).merged)
        .into_iter()
        .filter(|v| v.kind == ViolationKind::Determination)
        .collect();
    if !violations.is_empty() {
        return Err(SolveError::IllFormed(violations));
    }
    let mut walk = Walk {
        sys,
        strands,
        cfg,
        opts,
        stats: OrchestrateStats::default(),
        batch: Vec::new(),
        found: None,
        exhausted: None,
        stop: false,
    };
    let mut next = vec![0; strands.len()];
    let mut order = Vec::new();
    walk.dfs(&mut order, &mut next)?;
    walk.flush()?;
    let stats = walk.stats;
    let outcome = match walk.found {
        Some((order, solution, index)) => {
            let orchestration = Orchestration::new(strands, order);
            let program = emit_mediator(sys, &orchestration, &solution);
            OrchestrateOutcome::Sat {
                orchestration,
                solution,
                program,
                index,
            }
        }
        None => match walk.exhausted {
            Some(reason) => OrchestrateOutcome::Exhausted(reason),
            None => OrchestrateOutcome::Unsat,
        },
    };
    Ok((outcome, stats))
}

impl Walk<'_> {
    fn total(&self) -> usize {
        self.strands.iter().map(|s| s.constraints.len()).sum()
    }

    fn dfs(&mut self, order: &mut Vec<usize>, next: &mut [usize]) -> Result<(), SolveError> {
        if self.stop {
            return Ok(());
        }
        if order.len() == self.total() {
            self.batch.push(order.clone());
            if self.batch.len() >= self.cfg.jobs.max(1) {
                self.flush()?;
            }
            return Ok(());
        }
        for s in 0..self.strands.len() {
            if next[s] == self.strands[s].constraints.len() {
                continue;
            }
            order.push(s);
            next[s] += 1;
            if self.viable(order, next) {
                self.dfs(order, next)?;
            }
            next[s] -= 1;
            order.pop();
            if self.stop {
                break;
            }
        }
        Ok(())
    }

    /// False when no extension of the prefix can be satisfiable.
    fn viable(&mut self, order: &[usize], next: &[usize]) -> bool {
        let prefix = Orchestration::new(self.strands, order.to_vec()).merged;
        let last = prefix.len();
        if well_formed(&prefix)
            .iter()
            .any(|v| v.kind == ViolationKind::Origination && v.index == last)
        {
            return false;
        }
        if !self.opts.prune || order.len() == self.total() {
            return true;
        }
        // Forbids still to come whose variables the prefix already
        // determines must hold at the end of the prefix: knowledge only
        // grows, so a term derivable now is derivable later too.
        let received = vars_of(&prefix.inputs());
        let mut check = prefix.clone();
        for (s, strand) in self.strands.iter().enumerate() {
            for c in &strand.constraints.constraints()[next[s]..] {
                if c.kind == ConstraintKind::Forbid && c.payload.vars().is_subset(&received) {
                    check.push(c.clone());
                }
            }
        }
        if !well_formed(&check).is_empty() {
            return true;
        }
        self.stats.prefixes_checked += 1;
        match solve(self.sys, &check, self.cfg) {
            Ok(Outcome::Unsat) => {
                self.stats.prefixes_pruned += 1;
                false
            }
            _ => true,
        }
    }

    fn flush(&mut self) -> Result<(), SolveError> {
        if self.batch.is_empty() || self.stop {
            return Ok(());
        }
        let batch = std::mem::take(&mut self.batch);
        let budget = self
            .opts
            .max_interleavings
            .map_or(usize::MAX, |m| m.saturating_sub(self.stats.interleavings_solved));
        let batch: Vec<Vec<usize>> = batch.into_iter().take(budget).collect();
        let base = self.stats.interleavings_solved;
        let (sys, strands, cfg) = (self.sys, self.strands, self.cfg);
        let solve_one = |order: &Vec<usize>| {
            let merged = Orchestration::new(strands, order.clone()).merged;
            solve(sys, &merged, cfg)
        };
        let results: Vec<Result<Outcome, SolveError>> = if cfg.jobs > 1 {
            batch.par_iter().map(solve_one).collect()
        } else {
            let mut out = Vec::new();
            for order in &batch {
                let r = solve_one(order);
                let sat = matches!(r, Ok(Outcome::Sat(_)));
                out.push(r);
                if sat {
                    break;
                }
            }
            out
        };
        self.stats.interleavings_solved += results.len();
        for (k, result) in results.into_iter().enumerate() {
            match result? {
                Outcome::Sat(sol) => {
                    self.found = Some((batch[k].clone(), sol, base + k));
                    self.stop = true;
                    return Ok(());
                }
                Outcome::Unsat => {}
                Outcome::Exhausted(reason) => {
                    self.exhausted.get_or_insert(reason);
                }
            }
        }
        if self
            .opts
            .max_interleavings
            .is_some_and(|m| self.stats.interleavings_solved >= m)
        {
            self.exhausted
                .get_or_insert_with(|| format!("stopped after {} interleavings", self.stats.interleavings_solved));
            self.stop = true;
        }
        Ok(())
    }
}

/// One instruction of a mediator program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Instruction {
    /// Receive the message a service emits.
    Recv { term: Term, from: String },
    Fresh { term: Term },
    Apply {
        rule: String,
        premises: Vec<Term>,
        term: Term,
    },
    /// Deliver the message a service expects.
    Send { term: Term, to: String },
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Instruction::Recv { term, from } => write!(f, "recv {term} from {from}"),
            Instruction::Fresh { term } => write!(f, "fresh {term}"),
            Instruction::Apply { rule, premises, term } => {
                write!(f, "apply {rule} [")?;
                for (i, p) in premises.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{p}")?;
                }
                write!(f, "] -> {term}")
            }
            Instruction::Send { term, to } => write!(f, "send {term} to {to}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MediatorProgram {
    pub instructions: Vec<Instruction>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProgramError {
    #[error("instruction {index}: unknown rule {rule}")]
    UnknownRule { index: usize, rule: String },
}

impl MediatorProgram {
    /// The underlying derivation: deliveries dropped, receptions become
    /// acquisitions.
    pub fn strip_routing(&self, sys: &DeductionSystem) -> Result<Derivation, ProgramError> {
        let mut steps = Vec::new();
        for (index, ins) in self.instructions.iter().enumerate() {
            match ins {
                Instruction::Recv { term, .. } => steps.push(Step::Acquire(term.clone())),
                Instruction::Fresh { term } => steps.push(Step::Fresh(term.clone())),
                Instruction::Apply { rule, premises, term } => {
                    let id = sys.rule_by_label(rule).ok_or_else(|| ProgramError::UnknownRule {
                        index: index + 1,
                        rule: rule.clone(),
                    })?;
                    steps.push(Step::Apply {
                        rule: id,
                        premises: premises.clone(),
                        conclusion: term.clone(),
                    });
                }
                Instruction::Send { .. } => {}
            }
        }
        Ok(Derivation::new(steps))
    }
}

impl fmt::Display for MediatorProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for ins in &self.instructions {
            writeln!(f, "{ins}")?;
        }
        Ok(())
    }
}

/// Annotates the solution's derivation with the strand each message comes
/// from or goes to.
pub fn emit_mediator(
    sys: &DeductionSystem,
    orchestration: &Orchestration,
    solution: &SolverSolution,
) -> MediatorProgram {
    let m = &solution.mediator;
    let sends = orchestration.merged.send_positions();
    let mut acquired = 0;
    let mut deliveries = m.deliveries.iter().peekable();
    let mut instructions = Vec::new();
    let deliver = |upto: usize,
                   deliveries: &mut std::iter::Peekable<std::slice::Iter<'_, (usize, usize)>>,
                   out: &mut Vec<Instruction>| {
        while let Some(&&(pos, at)) = deliveries.peek() {
            if at > upto {
                break;
            }
            let payload = &orchestration.merged.get(pos).unwrap().payload;
            out.push(Instruction::Send {
                term: solution.substitution.apply(payload),
                to: orchestration.owner(pos).to_string(),
            });
            deliveries.next();
        }
    };
    deliver(0, &mut deliveries, &mut instructions);
    for (k, step) in m.derivation.steps.iter().enumerate() {
        instructions.push(match step {
            Step::Acquire(t) => {
                let pos = sends[acquired];
                acquired += 1;
                Instruction::Recv {
                    term: t.clone(),
                    from: orchestration.owner(pos).to_string(),
                }
            }
            Step::Fresh(t) => Instruction::Fresh { term: t.clone() },
            Step::Apply {
                rule,
                premises,
                conclusion,
            } => Instruction::Apply {
                rule: sys.label(*rule),
                premises: premises.clone(),
                term: conclusion.clone(),
            },
        });
        deliver(k + 1, &mut deliveries, &mut instructions);
    }
    MediatorProgram { instructions }
}
