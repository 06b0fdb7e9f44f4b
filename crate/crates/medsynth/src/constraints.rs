//! Constraint systems and the verification kernel.
//!
//! Positions are 1-based throughout: `S[1]` is the first constraint and
//! `prev_send(S, i) = 0` means no Send precedes `i`.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use indexmap::IndexSet;
use thiserror::Error;

use crate::deduction::{check_derivation, prove, DeductionSystem, Derivation, Knowledge};
use crate::terms::{subterms_of, vars_of, Substitution, Symbol, Term};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstraintKind {
    /// `!t`: a service emits `t`, the mediator learns it.
    Send,
    /// `?t`: a service expects `t`, the mediator must deduce it.
    Receive,
    /// `#t`: the mediator must not be able to deduce `t`.
    Forbid,
}

impl ConstraintKind {
    pub fn sigil(self) -> char {
        match self {
            ConstraintKind::Send => '!',
            ConstraintKind::Receive => '?',
            ConstraintKind::Forbid => '#',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constraint {
    pub kind: ConstraintKind,
    pub payload: Term,
}

impl Constraint {
    pub fn send(t: Term) -> Constraint {
        Constraint {
            kind: ConstraintKind::Send,
            payload: t,
        }
    }

    pub fn receive(t: Term) -> Constraint {
        Constraint {
            kind: ConstraintKind::Receive,
            payload: t,
        }
    }

    pub fn forbid(t: Term) -> Constraint {
        Constraint {
            kind: ConstraintKind::Forbid,
            payload: t,
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.kind.sigil(), self.payload)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConstraintSystem {
    constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConstraintError {
    #[error("index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("substitution is not ground on {var}")]
    NonGround { var: String },
    #[error("substitution does not bind {var}")]
    Unbound { var: String },
    #[error("undeclared variable {var}")]
    UndeclaredVariable { var: String },
}

impl ConstraintSystem {
    pub fn new(constraints: Vec<Constraint>) -> ConstraintSystem {
        ConstraintSystem { constraints }
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    /// `S[i]`, 1-based.
    pub fn get(&self, i: usize) -> Option<&Constraint> {
        i.checked_sub(1).and_then(|i| self.constraints.get(i))
    }

    /// Positions and constraints, 1-based.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &Constraint)> {
        self.constraints.iter().enumerate().map(|(i, c)| (i + 1, c))
    }

    pub fn vars(&self) -> BTreeSet<Symbol> {
        vars_of(self.constraints.iter().map(|c| &c.payload))
    }

    pub fn subterms(&self) -> IndexSet<Term> {
        subterms_of(self.constraints.iter().map(|c| &c.payload))
    }

    fn of_kind(&self, kind: ConstraintKind) -> impl Iterator<Item = &Term> {
        self.constraints
            .iter()
            .filter(move |c| c.kind == kind)
            .map(|c| &c.payload)
    }

    /// `In(S)`: Receive payloads.
    pub fn inputs(&self) -> Vec<Term> {
        self.of_kind(ConstraintKind::Receive).cloned().collect()
    }

    /// `Out(S)`: Send payloads.
    pub fn outputs(&self) -> Vec<Term> {
        self.of_kind(ConstraintKind::Send).cloned().collect()
    }

    /// Positions of Send constraints, in order.
    pub fn send_positions(&self) -> Vec<usize> {
        self.iter()
            .filter(|(_, c)| c.kind == ConstraintKind::Send)
            .map(|(i, _)| i)
            .collect()
    }

    /// Largest Send position `≤ i`, or 0.
    pub fn prev_send(&self, i: usize) -> Result<usize, ConstraintError> {
        if i == 0 || i > self.len() {
            return Err(ConstraintError::IndexOutOfRange {
                index: i,
                len: self.len(),
            });
        }
        Ok(self.prev_send_unchecked(i))
    }

    pub(crate) fn prev_send_unchecked(&self, i: usize) -> usize {
        (1..=i.min(self.len()))
            .rev()
            .find(|&j| self.constraints[j - 1].kind == ConstraintKind::Send)
            .unwrap_or(0)
    }

    /// Send payloads at positions `< i`.
    pub fn knowledge_before(&self, i: usize) -> Vec<Term> {
        self.constraints[..i.saturating_sub(1).min(self.len())]
            .iter()
            .filter(|c| c.kind == ConstraintKind::Send)
            .map(|c| c.payload.clone())
            .collect()
    }

    /// First Receive position whose payload contains `x`.
    pub fn first_receive_of(&self, x: Symbol) -> Option<usize> {
        let v = Term::leaf(x);
        self.iter()
            .find(|(_, c)| c.kind == ConstraintKind::Receive && c.payload.contains(&v))
            .map(|(i, _)| i)
    }

    pub fn apply(&self, sigma: &Substitution) -> ConstraintSystem {
        ConstraintSystem {
            constraints: self
                .constraints
                .iter()
                .map(|c| Constraint {
                    kind: c.kind,
                    payload: sigma.apply(&c.payload),
                })
                .collect(),
        }
    }

    /// The subsequence without Forbids.
    pub fn positive(&self) -> ConstraintSystem {
        ConstraintSystem {
            constraints: self
                .constraints
                .iter()
                .filter(|c| c.kind != ConstraintKind::Forbid)
                .cloned()
                .collect(),
        }
    }

    pub fn push(&mut self, c: Constraint) {
        self.constraints.push(c);
    }
}

impl fmt::Display for ConstraintSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, c) in self.constraints.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{c}")?;
        }
        f.write_str("]")
    }
}

impl FromIterator<Constraint> for ConstraintSystem {
    fn from_iter<I: IntoIterator<Item = Constraint>>(iter: I) -> Self {
        ConstraintSystem::new(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    /// A Send mentions a variable not received earlier.
    Origination,
    /// A Forbid mentions a variable received nowhere.
    Determination,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub index: usize,
    pub var: Symbol,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.kind {
            ViolationKind::Origination => "is not received before it is sent",
            ViolationKind::Determination => "of a forbidden term is never received",
        };
        write!(f, "constraint {}: variable {} {what}", self.index, self.var)
    }
}

/// Origination and determination diagnostics; empty when well formed.
pub fn well_formed(s: &ConstraintSystem) -> Vec<Violation> {
    let received_anywhere = vars_of(&s.inputs());
    let mut received = BTreeSet::new();
    let mut out = Vec::new();
    for (i, c) in s.iter() {
        match c.kind {
            ConstraintKind::Receive => c.payload.collect_vars(&mut received),
            ConstraintKind::Send => {
                for var in c.payload.vars().difference(&received) {
                    out.push(Violation {
                        index: i,
                        var: *var,
                        kind: ViolationKind::Origination,
                    });
                }
            }
            ConstraintKind::Forbid => {
                for var in c.payload.vars().difference(&received_anywhere) {
                    out.push(Violation {
                        index: i,
                        var: *var,
                        kind: ViolationKind::Determination,
                    });
                }
            }
        }
    }
    out
}

/// Status of one constraint under a candidate solution.
#[derive(Debug, Clone)]
pub struct ConstraintStatus {
    pub index: usize,
    pub kind: ConstraintKind,
    pub instance: Term,
    pub holds: bool,
    /// For satisfied Receives: a derivation from the preceding Sends.
    pub proof: Option<Derivation>,
}

#[derive(Debug, Clone)]
pub struct Verdict {
    pub details: Vec<ConstraintStatus>,
}

impl Verdict {
    pub fn holds(&self) -> bool {
        self.details.iter().all(|d| d.holds)
    }

    pub fn first_violation(&self) -> Option<usize> {
        self.details.iter().find(|d| !d.holds).map(|d| d.index)
    }
}

fn check_substitution(s: &ConstraintSystem, sigma: &Substitution) -> Result<(), ConstraintError> {
    let vars = s.vars();
    for (v, t) in sigma.iter() {
        if !vars.contains(&v) {
            return Err(ConstraintError::UndeclaredVariable { var: v.to_string() });
        }
        if !t.is_ground() {
            return Err(ConstraintError::NonGround { var: v.to_string() });
        }
    }
    if let Some(v) = vars.iter().find(|v| sigma.get(**v).is_none()) {
        return Err(ConstraintError::Unbound { var: v.to_string() });
    }
    Ok(())
}

/// Checks `σ ⊨ S` constraint by constraint.
pub fn verify_solution(
    sys: &DeductionSystem,
    s: &ConstraintSystem,
    sigma: &Substitution,
) -> Result<Verdict, ConstraintError> {
    check_substitution(s, sigma)?;
    let mut knowledge = Knowledge::new(sys);
    let mut sent: Vec<Term> = Vec::new();
    let mut details = Vec::new();
    for (i, c) in s.iter() {
        let t = sigma.apply(&c.payload);
        match c.kind {
            ConstraintKind::Send => {
                knowledge.acquire(&t);
                sent.push(t.clone());
                details.push(ConstraintStatus {
                    index: i,
                    kind: c.kind,
                    instance: t,
                    holds: true,
                    proof: None,
                });
            }
            ConstraintKind::Receive | ConstraintKind::Forbid => {
                let derivable = knowledge.composable(&t);
                let holds = derivable == (c.kind == ConstraintKind::Receive);
                let proof = if holds && derivable {
                    prove(sys, &sent, &t)
                } else {
                    None
                };
                details.push(ConstraintStatus {
                    index: i,
                    kind: c.kind,
                    instance: t,
                    holds,
                    proof,
                });
            }
        }
    }
    Ok(Verdict { details })
}

/// Shorthand for `verify_solution(..)?.holds()`, false on malformed input.
pub fn is_solution(sys: &DeductionSystem, s: &ConstraintSystem, sigma: &Substitution) -> bool {
    verify_solution(sys, s, sigma).is_ok_and(|v| v.holds())
}

/// A ground solution, optionally with a compliant proof.
#[derive(Debug, Clone)]
pub struct Solution {
    pub substitution: Substitution,
    pub proof: Option<(Derivation, Vec<usize>)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProofError {
    #[error(transparent)]
    Input(#[from] ConstraintError),
    #[error("invalid derivation: {0}")]
    Derivation(#[from] crate::deduction::DerivationError),
    #[error("compliance map: {0}")]
    Compliance(String),
    #[error("constraint {index}: {reason}")]
    Constraint { index: usize, reason: String },
}

/// Checks that `(D, α)` proves `σ ⊨ S`. `alpha[k]` is the 1-based step
/// acquiring the `k`-th Send payload.
pub fn check_compliant_proof(
    sys: &DeductionSystem,
    s: &ConstraintSystem,
    sigma: &Substitution,
    d: &Derivation,
    alpha: &[usize],
) -> Result<(), ProofError> {
    check_substitution(s, sigma)?;
    let sends = s.send_positions();
    let out: Vec<Term> = s.outputs().iter().map(|t| sigma.apply(t)).collect();
    if alpha.len() != sends.len() {
        return Err(ProofError::Compliance(format!(
            "{} entries for {} sends",
            alpha.len(),
            sends.len()
        )));
    }
    if alpha.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ProofError::Compliance("not strictly increasing".into()));
    }
    let acquire_steps: Vec<usize> = d
        .steps
        .iter()
        .enumerate()
        .filter(|(_, st)| st.is_acquire())
        .map(|(j, _)| j + 1)
        .collect();
    if acquire_steps != alpha {
        return Err(ProofError::Compliance(
            "does not map the sends onto the acquisitions".into(),
        ));
    }
    check_derivation(sys, d, &out)?;
    let mut knowledge = Knowledge::new(sys);
    let mut sent = 0;
    for (i, c) in s.iter() {
        let t = sigma.apply(&c.payload);
        match c.kind {
            ConstraintKind::Send => {
                knowledge.acquire(&t);
                sent += 1;
            }
            ConstraintKind::Receive => {
                let anchor = if sent == 0 { 0 } else { alpha[sent - 1] };
                let deadline = d.next_reception(anchor);
                let before: HashSet<Term> = d.rhs_set(deadline - 1).unwrap().into_iter().collect();
                if !before.contains(&t) {
                    return Err(ProofError::Constraint {
                        index: i,
                        reason: format!("{t} is not deduced before step {deadline}"),
                    });
                }
            }
            ConstraintKind::Forbid => {
                if knowledge.composable(&t) {
                    return Err(ProofError::Constraint {
                        index: i,
                        reason: format!("{t} is derivable"),
                    });
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(n: &str) -> Term {
        Term::constant(n)
    }
    fn v(n: &str) -> Term {
        Term::var(n)
    }

    #[test]
    fn well_formedness_examples() {
        let x = v("X");
        let s = ConstraintSystem::new(vec![Constraint::receive(x.clone()), Constraint::send(x.clone())]);
        assert!(well_formed(&s).is_empty());
        let s = ConstraintSystem::new(vec![Constraint::send(x.clone())]);
        let w = well_formed(&s);
        assert_eq!(w.len(), 1);
        assert_eq!((w[0].index, w[0].kind), (1, ViolationKind::Origination));
        assert_eq!(w[0].var, Symbol::variable("X"));
        let s = ConstraintSystem::new(vec![Constraint::forbid(v("Y")), Constraint::receive(x)]);
        assert_eq!(well_formed(&s)[0].kind, ViolationKind::Determination);
    }

    #[test]
    fn prev_send_examples() {
        let s = ConstraintSystem::new(vec![Constraint::receive(c("a"))]);
        assert_eq!(s.prev_send(1), Ok(0));
        let s = ConstraintSystem::new(vec![Constraint::send(c("a")), Constraint::receive(c("b"))]);
        assert_eq!(s.prev_send(2), Ok(1));
        let s = ConstraintSystem::new(vec![
            Constraint::send(c("a")),
            Constraint::forbid(c("b")),
            Constraint::send(c("c")),
        ]);
        assert_eq!(s.prev_send(2), Ok(1));
        assert!(s.prev_send(0).is_err());
        assert!(s.prev_send(4).is_err());
    }
}
