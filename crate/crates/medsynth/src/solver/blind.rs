use std::collections::BTreeMap;

use crate::constraints::ConstraintSystem;
use crate::terms::{subterms_of, Substitution, Symbol, Term};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BlindChoice {
    /// No Send precedes the first reception of the variable.
    FreshNonce(Term),
    /// `blind(payload of S[anchor], n)`.
    Blind { anchor: usize, value: Term },
    /// Localization variables outside `vars(S)`.
    FreshConstant(Term),
}

impl BlindChoice {
    pub fn value(&self) -> &Term {
        match self {
            BlindChoice::FreshNonce(t) | BlindChoice::FreshConstant(t) => t,
            BlindChoice::Blind { value, .. } => value,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BlindingAssignment {
    pub choices: Vec<(Symbol, BlindChoice)>,
}

#[derive(Debug, Clone)]
pub struct Blinded {
    /// `θ` followed by the blinding, restricted to `vars(S)`.
    pub sigma: Substitution,
    pub assignment: BlindingAssignment,
    /// Whether the blinding is injective on `Sub(Sθ)` and the extra terms.
    pub injective: bool,
}

/// Instantiates the variables left free by `θ`.
///
/// A free `x` first received at `i` becomes `blind(S[prev(i)]σ, n_x)`, or a
/// fresh nonce when no Send precedes `i`. Variables occurring only in
/// `extra` (localization terms) become fresh constants. Nonces and
/// constants are numbered from 1 for each call.
pub fn blind(theta: &Substitution, s: &ConstraintSystem, extra: &[Term]) -> Blinded {
    let stheta = s.apply(theta);
    let mut delta: BTreeMap<Symbol, Term> = BTreeMap::new();
    let mut choices = Vec::new();
    let mut nonces = 0u64;
    for (x, i) in super::free_vars(theta, s) {
        nonces += 1;
        let n = Term::leaf(Symbol::generated_nonce(nonces));
        let anchor = stheta.prev_send_unchecked(i);
        let choice = if anchor == 0 {
            BlindChoice::FreshNonce(n)
        } else {
            let payload = stheta.get(anchor).unwrap().payload.clone();
            let payload = Substitution::from_map_unchecked(delta.clone()).apply(&payload);
            debug_assert!(payload.is_ground(), "anchor payload {payload} not ground");
            BlindChoice::Blind {
                anchor,
                value: Term::blind(payload, n),
            }
        };
        delta.insert(x, choice.value().clone());
        choices.push((x, choice));
    }
    let extra_theta: Vec<Term> = extra.iter().map(|t| theta.apply(t)).collect();
    let mut constants = 0u64;
    for z in crate::terms::vars_of(&extra_theta) {
        if !delta.contains_key(&z) {
            constants += 1;
            let c = Term::leaf(Symbol::generated_constant(constants));
            delta.insert(z, c.clone());
            choices.push((z, BlindChoice::FreshConstant(c)));
        }
    }
    let delta = Substitution::from_map_unchecked(delta);
    let localized = subterms_of(
        stheta
            .constraints()
            .iter()
            .map(|c| &c.payload)
            .chain(extra_theta.iter()),
    );
    let injective = delta.is_injective_on(&localized);
    let vars = s.vars();
    let sigma = theta
        .compose(&delta)
        .expect("blinding a solved form stays idempotent")
        .restrict(|v| vars.contains(&v));
    Blinded {
        sigma,
        assignment: BlindingAssignment { choices },
        injective,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::Constraint;

    #[test]
    fn anchors() {
        let x = Term::var("X");
        let s = ConstraintSystem::new(vec![Constraint::receive(x.clone())]);
        let b = blind(&Substitution::new(), &s, &[]);
        assert!(b.sigma.apply(&x).is_nonce());

        let t1 = Term::app("senc", vec![Term::constant("a"), Term::constant("k")]);
        let s = ConstraintSystem::new(vec![Constraint::send(t1.clone()), Constraint::receive(x.clone())]);
        let b = blind(&Substitution::new(), &s, &[]);
        let v = b.sigma.apply(&x);
        assert!(v.symbol().is_blinding());
        assert_eq!(v.args()[0], t1);
        assert!(v.args()[1].is_nonce());
        assert!(b.injective);

        let theta = Substitution::from_bindings([(x.symbol(), Term::constant("a"))]).unwrap();
        let b = blind(&theta, &s, &[]);
        assert_eq!(b.sigma, theta);
        assert!(b.assignment.choices.is_empty());
    }
}
