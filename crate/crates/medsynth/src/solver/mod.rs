//! Satisfiability of constraint systems with Forbids.
//!
//! The positive part is solved symbolically: the solver enumerates equality
//! guesses `θ` (solved forms) and instantiates the variables left free by
//! blinding them, `x ↦ blind(anchor, n)`, which keeps their values as secret
//! as the constraints allow. Forbids are only ever checked on the resulting
//! ground candidates, by the verification kernel.
//!
//! Two modes share that pipeline. Reduction mode derives equality guesses
//! lazily from the Receive obligations. Reference mode enumerates every
//! equate/separate decision over a localization set and serves as a
//! completeness oracle on small systems.

mod blind;
mod mediator;
mod milestone;
mod reduce;
mod reference;

use std::collections::BTreeSet;

use thiserror::Error;

use crate::constraints::{verify_solution, well_formed, ConstraintSystem, Violation};
use crate::deduction::DeductionSystem;
use crate::terms::{Substitution, Symbol, Term};

pub use blind::{blind, BlindChoice, Blinded, BlindingAssignment};
pub use mediator::{extract_mediator, Mediator, MediatorError};
pub use milestone::{milestone_sequence, MilestoneEntry};
pub use reduce::{reduce_positive, ReduceStatus, SolvedForm};
use reduce::ForbidPruning;
pub use reference::{localization_set, LocalizationSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Reduction,
    Reference,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub mode: Mode,
    /// Solved forms (reduction) or leaves (reference) examined before giving up.
    pub max_equality_guesses: usize,
    /// Search nodes before giving up.
    pub max_nodes: usize,
    /// Goal-reduction depth; deeper branches count as not explored.
    pub max_depth: usize,
    /// Solutions must have DAG size at most `factor · |Sub(S)|²`.
    pub size_bound_factor: usize,
    /// Worker threads used by the orchestrator.
    pub jobs: usize,
    /// 0 keeps the canonical order; other values shuffle equal-cost choices.
    pub seed: u64,
    /// Reference mode refuses systems with more distinct subterms.
    pub reference_threshold: usize,
    /// Also try binding free variables to constants of the system.
    pub guess_atoms: bool,
    /// At most this many free variables of one solved form are bound to
    /// constants at once.
    pub max_atom_guesses: usize,
    /// Reduction also binds variable goals to knowledge subterms instead
    /// of only leaving them free.
    pub variable_guesses: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            mode: Mode::Reduction,
            max_equality_guesses: 10_000,
            max_nodes: 200_000,
            max_depth: 64,
            size_bound_factor: 4,
            jobs: 1,
            seed: 0,
            reference_threshold: 48,
            guess_atoms: false,
            max_atom_guesses: usize::MAX,
            variable_guesses: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolveError {
    #[error("constraint system is not well formed: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    IllFormed(Vec<Violation>),
    #[error("the blinding symbol and generated names may not occur in constraints")]
    ReservedSymbol,
    #[error("reference mode refuses {size} subterms (threshold {threshold})")]
    ThresholdExceeded { size: usize, threshold: usize },
}

/// Size accounting of a returned substitution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SizeReport {
    pub dag_size: usize,
    pub bound: usize,
}

impl SizeReport {
    pub fn within(&self) -> bool {
        self.dag_size <= self.bound
    }

    /// The bound is binding when the solution uses more than half of it.
    pub fn binding(&self) -> bool {
        self.dag_size * 2 > self.bound
    }
}

#[derive(Debug, Clone)]
pub struct SolverSolution {
    /// Ground, with domain `vars(S)`.
    pub substitution: Substitution,
    /// The equality guess the solution instantiates.
    pub theta: Substitution,
    pub assignment: BlindingAssignment,
    pub mediator: Mediator,
    pub injective: bool,
    pub size: SizeReport,
}

#[derive(Debug, Clone)]
pub enum Outcome {
    Sat(Box<SolverSolution>),
    Unsat,
    /// A search cap was hit before a verdict.
    Exhausted(String),
}

impl Outcome {
    pub fn is_sat(&self) -> bool {
        matches!(self, Outcome::Sat(_))
    }

    pub fn is_unsat(&self) -> bool {
        matches!(self, Outcome::Unsat)
    }

    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Sat(_) => "SAT",
            Outcome::Unsat => "UNSAT",
            Outcome::Exhausted(_) => "EXHAUSTED",
        }
    }

    pub fn solution(&self) -> Option<&SolverSolution> {
        match self {
            Outcome::Sat(s) => Some(s),
            _ => None,
        }
    }
}

fn check_input(s: &ConstraintSystem) -> Result<(), SolveError> {
    let violations = well_formed(s);
    if !violations.is_empty() {
        return Err(SolveError::IllFormed(violations));
    }
    let reserved = s.subterms().iter().any(|t| {
        let sym = t.symbol();
        sym.is_blinding() || sym.is_generated()
    });
    if reserved {
        return Err(SolveError::ReservedSymbol);
    }
    Ok(())
}

pub(crate) fn size_bound(s: &ConstraintSystem, factor: usize) -> usize {
    let n = s.subterms().len().max(1);
    factor.saturating_mul(n).saturating_mul(n)
}

/// Turns a blinded candidate into a solution if the kernel accepts it.
pub(crate) fn accept(
    sys: &DeductionSystem,
    s: &ConstraintSystem,
    theta: &Substitution,
    blinded: Blinded,
    factor: usize,
) -> Option<SolverSolution> {
    let verdict = verify_solution(sys, s, &blinded.sigma).ok()?;
    if !verdict.holds() {
        return None;
    }
    let mediator = extract_mediator(sys, s, &blinded.sigma)
        .unwrap_or_else(|e| panic!("verified solution without a mediator: {e}"));
    Some(SolverSolution {
        size: SizeReport {
            dag_size: blinded.sigma.dag_size(),
            bound: size_bound(s, factor),
        },
        substitution: blinded.sigma,
        theta: theta.clone(),
        assignment: blinded.assignment,
        mediator,
        injective: blinded.injective,
    })
}

/// Decides `S` and returns a kernel-verified solution with its mediator.
pub fn solve(
    sys: &DeductionSystem,
    s: &ConstraintSystem,
    cfg: &SolverConfig,
) -> Result<Outcome, SolveError> {
    check_input(s)?;
    match cfg.mode {
        Mode::Reduction => Ok(solve_reduction(sys, s, cfg)),
        Mode::Reference => reference::solve_reference(sys, s, cfg),
    }
}

pub fn solve_reference(
    sys: &DeductionSystem,
    s: &ConstraintSystem,
    cfg: &SolverConfig,
) -> Result<Outcome, SolveError> {
    check_input(s)?;
    reference::solve_reference(sys, s, cfg)
}

fn solve_reduction(sys: &DeductionSystem, s: &ConstraintSystem, cfg: &SolverConfig) -> Outcome {
    let atoms = if cfg.guess_atoms { atoms_of(s) } else { Vec::new() };
    let mut found = None;
    let pruning = if cfg.guess_atoms {
        ForbidPruning::Rigid
    } else {
        ForbidPruning::Blinded
    };
    let status = reduce::reduce(sys, s, cfg, pruning, |form| {
        for theta in with_atoms(&form, &atoms, cfg.max_atom_guesses) {
            let blinded = blind(&theta, s, &[]);
            if let Some(sol) = accept(sys, s, &theta, blinded, cfg.size_bound_factor) {
                found = Some(sol);
                return false;
            }
        }
        true
    });
    match found {
        Some(sol) => Outcome::Sat(Box::new(sol)),
        None if status.complete => Outcome::Unsat,
        None => Outcome::Exhausted(status.reason()),
    }
}

/// Every verified solution reachable from the solved forms, each free
/// variable either blinded or, with `guess_atoms`, bound to a constant.
pub fn enumerate_solutions(
    sys: &DeductionSystem,
    s: &ConstraintSystem,
    cfg: &SolverConfig,
) -> Result<(Vec<Substitution>, bool), SolveError> {
    check_input(s)?;
    let atoms = if cfg.guess_atoms { atoms_of(s) } else { Vec::new() };
    let mut out: Vec<Substitution> = Vec::new();
    let status = reduce::reduce(sys, s, cfg, ForbidPruning::Rigid, |form| {
        for theta in with_atoms(&form, &atoms, cfg.max_atom_guesses) {
            let blinded = blind(&theta, s, &[]);
            if crate::constraints::is_solution(sys, s, &blinded.sigma)
                && !out.contains(&blinded.sigma)
            {
                out.push(blinded.sigma);
            }
        }
        true
    });
    Ok((out, status.complete))
}

/// Non-nonce constants occurring in `S`.
fn atoms_of(s: &ConstraintSystem) -> Vec<Term> {
    let set: BTreeSet<Term> = s
        .subterms()
        .into_iter()
        .filter(|t| t.is_ground() && t.args().is_empty() && !t.is_nonce())
        .collect();
    set.into_iter().collect()
}

/// `θ` followed by every way of binding at most `limit` of its free
/// variables to atoms, leaving the others free.
fn with_atoms(form: &SolvedForm, atoms: &[Term], limit: usize) -> Vec<Substitution> {
    let mut out = vec![(form.theta.clone(), 0)];
    if atoms.is_empty() {
        return vec![form.theta.clone()];
    }
    for (x, _) in &form.free {
        let mut next = Vec::new();
        for (theta, bound) in &out {
            next.push((theta.clone(), *bound));
            if *bound == limit {
                continue;
            }
            for a in atoms {
                let bind = Substitution::from_bindings([(*x, a.clone())]).unwrap();
                let theta = theta.compose(&bind).expect("binding a free variable to a constant");
                next.push((theta, bound + 1));
            }
        }
        out = next;
    }
    out.into_iter().map(|(theta, _)| theta).collect()
}

/// Variables of `S` not bound by `θ`, in order of first reception.
pub(crate) fn free_vars(theta: &Substitution, s: &ConstraintSystem) -> Vec<(Symbol, usize)> {
    let stheta = s.apply(theta);
    let mut out: Vec<(Symbol, usize)> = stheta
        .vars()
        .into_iter()
        .map(|x| {
            let i = stheta.first_receive_of(x).unwrap_or(s.len());
            (x, i)
        })
        .collect();
    out.sort_by_key(|(x, i)| (*i, *x));
    out
}
