use thiserror::Error;

use crate::constraints::{ConstraintKind, ConstraintSystem};
use crate::deduction::{DeductionSystem, Derivation, DerivationBuilder, Knowledge, Step};
use crate::terms::{Substitution, Term};

/// A compliant maximal derivation proving `σ ⊨ S`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mediator {
    pub derivation: Derivation,
    /// `alpha[k]`: 1-based step acquiring the `k`-th Send payload.
    pub alpha: Vec<usize>,
    /// For each Receive position of `S`, the number of steps after which its
    /// payload is available and can be delivered.
    pub deliveries: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MediatorError {
    #[error("constraint {index}: {term} is not derivable in time")]
    Undeliverable { index: usize, term: String },
    #[error("substitution is not ground")]
    NonGround,
}

/// Builds a maximal derivation: before and after each acquisition it deduces
/// every derivable instance `qσ`, `q ∈ Sub(S)`, never deducing a term twice.
pub fn extract_mediator(
    sys: &DeductionSystem,
    s: &ConstraintSystem,
    sigma: &Substitution,
) -> Result<Mediator, MediatorError> {
    let targets: Vec<Term> = {
        let mut seen = indexmap::IndexSet::new();
        for q in s.subterms() {
            seen.insert(sigma.apply(&q));
        }
        seen.into_iter().collect()
    };
    if targets.iter().any(|t| !t.is_ground()) {
        return Err(MediatorError::NonGround);
    }
    let mut knowledge = Knowledge::new(sys);
    for t in &targets {
        knowledge.add_universe(t);
    }
    let mut out = DerivationBuilder::new();
    let mut alpha = Vec::new();
    let mut deliveries = Vec::new();
    deduce_all(&mut knowledge, &targets, &mut out);
    for (i, c) in s.iter() {
        let t = sigma.apply(&c.payload);
        match c.kind {
            ConstraintKind::Send => {
                knowledge.acquire(&t);
                out.push(Step::Acquire(t));
                alpha.push(out.len());
                deduce_all(&mut knowledge, &targets, &mut out);
            }
            ConstraintKind::Receive => {
                if !out.has(&t) {
                    return Err(MediatorError::Undeliverable {
                        index: i,
                        term: t.to_string(),
                    });
                }
                deliveries.push((i, out.len()));
            }
            ConstraintKind::Forbid => {}
        }
    }
    Ok(Mediator {
        derivation: out.finish(),
        alpha,
        deliveries,
    })
}

fn deduce_all(knowledge: &mut Knowledge<'_>, targets: &[Term], out: &mut DerivationBuilder) {
    knowledge.saturate();
    for t in targets {
        if !out.has(t) && knowledge.composable_saturated(t) {
            let ok = knowledge.emit(t, out);
            debug_assert!(ok);
        }
    }
}
