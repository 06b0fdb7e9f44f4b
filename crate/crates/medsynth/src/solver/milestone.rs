use std::collections::{HashMap, HashSet};

use indexmap::IndexSet;

use crate::deduction::{Derivation, Step};
use crate::terms::{Substitution, Term};

/// One entry of a milestone sequence, named by its preimage in `T`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MilestoneEntry {
    /// First time an instance `qσ` is obtained by a standard or nonce step.
    Deduce(Term),
    /// An acquisition; carries the preimage of the acquired term when
    /// there is one.
    AcquireMark(Option<Term>),
}

/// The trace of which instances of `T` a derivation deduces or acquires, in
/// order. `σ` is assumed injective on `T` so preimages are unique.
pub fn milestone_sequence(
    d: &Derivation,
    sigma: &Substitution,
    t: &IndexSet<Term>,
) -> Vec<MilestoneEntry> {
    let mut preimage: HashMap<Term, Term> = HashMap::new();
    for q in t {
        preimage.entry(sigma.apply(q)).or_insert_with(|| q.clone());
    }
    let mut seen: HashSet<Term> = HashSet::new();
    let mut out = Vec::new();
    for step in &d.steps {
        let c = step.conclusion();
        let q = preimage.get(c).cloned();
        match step {
            Step::Acquire(_) => {
                out.push(MilestoneEntry::AcquireMark(q));
                seen.insert(c.clone());
            }
            _ => {
                if let Some(q) = q {
                    if seen.insert(c.clone()) {
                        out.push(MilestoneEntry::Deduce(q));
                    }
                }
            }
        }
    }
    out
}
