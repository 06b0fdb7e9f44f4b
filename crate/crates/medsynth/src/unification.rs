//! Syntactic unification with occurs check.
//!
//! Results are idempotent and never introduce variables outside the input
//! system. When two variables are equated, the one that sorts last is bound
//! to the other, so outputs are canonical.

use std::collections::{BTreeMap, HashMap};

use indexmap::IndexMap;
use thiserror::Error;

use crate::terms::{subterms_of, Substitution, Symbol, Term};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UnifyError {
    #[error("symbol clash: {left} vs {right}")]
    Clash { left: Term, right: Term },
    #[error("occurs check: {var} in {term}")]
    Occurs { var: Symbol, term: Term },
}

#[derive(Debug, Clone, Default)]
pub struct UnificationSystem {
    pub equations: Vec<(Term, Term)>,
}

impl UnificationSystem {
    pub fn new(equations: Vec<(Term, Term)>) -> UnificationSystem {
        UnificationSystem { equations }
    }

    pub fn terms(&self) -> impl Iterator<Item = &Term> {
        self.equations.iter().flat_map(|(l, r)| [l, r])
    }
}

/// A most general unifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mgu {
    pub substitution: Substitution,
}

pub fn unify(system: &UnificationSystem) -> Result<Mgu, UnifyError> {
    unify_pairs(system.equations.iter().map(|(l, r)| (l.clone(), r.clone())))
        .map(|substitution| Mgu { substitution })
}

/// Most general unifier of a list of equations.
pub fn unify_pairs(
    equations: impl IntoIterator<Item = (Term, Term)>,
) -> Result<Substitution, UnifyError> {
    let mut solver = Solver::default();
    let mut work: Vec<(Term, Term)> = equations.into_iter().collect();
    work.reverse();
    while let Some((l, r)) = work.pop() {
        let l = solver.walk(&l);
        let r = solver.walk(&r);
        if l == r {
            continue;
        }
        match (l.as_var(), r.as_var()) {
            (Some(a), Some(b)) => {
                if a > b {
                    solver.bindings.insert(a, r);
                } else {
                    solver.bindings.insert(b, l);
                }
            }
            (Some(a), None) => solver.bind(a, r)?,
            (None, Some(b)) => solver.bind(b, l)?,
            (None, None) => {
                if l.symbol() != r.symbol() {
                    return Err(UnifyError::Clash {
                        left: l,
                        right: r,
                    });
                }
                for (a, b) in l.args().iter().zip(r.args()).rev() {
                    work.push((a.clone(), b.clone()));
                }
            }
        }
    }
    Ok(solver.finish())
}

/// Unifies `equations` after applying `theta`, returning `θ·mgu`.
pub fn unify_under(
    theta: &Substitution,
    equations: impl IntoIterator<Item = (Term, Term)>,
) -> Result<Substitution, UnifyError> {
    let mgu = unify_pairs(
        equations
            .into_iter()
            .map(|(l, r)| (theta.apply(&l), theta.apply(&r))),
    )?;
    if mgu.is_empty() {
        return Ok(theta.clone());
    }
    Ok(theta
        .compose(&mgu)
        .expect("θ·mgu of θ-instantiated equations is idempotent"))
}

#[derive(Default)]
struct Solver {
    bindings: HashMap<Symbol, Term>,
}

impl Solver {
    fn walk(&self, t: &Term) -> Term {
        let mut t = t.clone();
        while let Some(next) = t.as_var().and_then(|v| self.bindings.get(&v)) {
            t = next.clone();
        }
        t
    }

    fn occurs(&self, var: Symbol, t: &Term) -> bool {
        let t = self.walk(t);
        if t.as_var() == Some(var) {
            return true;
        }
        !t.is_ground() && t.args().iter().any(|a| self.occurs(var, a))
    }

    fn bind(&mut self, var: Symbol, t: Term) -> Result<(), UnifyError> {
        if self.occurs(var, &t) {
            return Err(UnifyError::Occurs {
                var,
                term: t,
            });
        }
        self.bindings.insert(var, t);
        Ok(())
    }

    fn resolve(&self, t: &Term, memo: &mut HashMap<Term, Term>) -> Term {
        if t.is_ground() {
            return t.clone();
        }
        if let Some(done) = memo.get(t) {
            return done.clone();
        }
        let out = match t.as_var() {
            Some(v) => match self.bindings.get(&v) {
                Some(next) => self.resolve(next, memo),
                None => t.clone(),
            },
            None => Term::new(
                t.symbol(),
                t.args().iter().map(|a| self.resolve(a, memo)).collect(),
            ),
        };
        memo.insert(t.clone(), out.clone());
        out
    }

    fn finish(self) -> Substitution {
        let mut memo = HashMap::new();
        let map: BTreeMap<Symbol, Term> = self
            .bindings
            .keys()
            .map(|v| (*v, self.resolve(&Term::leaf(*v), &mut memo)))
            .filter(|(v, t)| t.as_var() != Some(*v))
            .collect();
        Substitution::from_map_unchecked(map)
    }
}

/// One-way matching: extends `bindings` so that `pattern·bindings = subject`.
/// Variables of `subject` are treated as constants.
pub fn match_term(pattern: &Term, subject: &Term, bindings: &mut HashMap<Symbol, Term>) -> bool {
    if let Some(v) = pattern.as_var() {
        return match bindings.get(&v) {
            Some(bound) => bound == subject,
            None => {
                bindings.insert(v, subject.clone());
                true
            }
        };
    }
    if pattern.symbol() != subject.symbol() {
        return false;
    }
    if pattern.is_ground() {
        return pattern == subject;
    }
    pattern
        .args()
        .iter()
        .zip(subject.args())
        .all(|(p, s)| match_term(p, s, bindings))
}

/// Instantiates `pattern` with matching bindings; unbound variables are kept.
pub fn instantiate(pattern: &Term, bindings: &HashMap<Symbol, Term>) -> Term {
    if pattern.is_ground() {
        return pattern.clone();
    }
    if let Some(v) = pattern.as_var() {
        return bindings.get(&v).cloned().unwrap_or_else(|| pattern.clone());
    }
    Term::new(
        pattern.symbol(),
        pattern.args().iter().map(|a| instantiate(a, bindings)).collect(),
    )
}

/// For every `p ∈ Sub(img θ)`, one `q ∈ Sub(U)` with `qθ = p`.
///
/// Panics if some `p` has no preimage: for an mgu of `U` that cannot happen.
pub fn mgu_subterm_image(theta: &Mgu, system: &UnificationSystem) -> IndexMap<Term, Term> {
    let sigma = &theta.substitution;
    let mut preimage: IndexMap<Term, Term> = IndexMap::new();
    for q in subterms_of(system.terms()) {
        preimage.entry(sigma.apply(&q)).or_insert(q);
    }
    let mut out = IndexMap::new();
    for p in subterms_of(sigma.image()) {
        let q = preimage
            .get(&p)
            .unwrap_or_else(|| panic!("unifier image subterm {p} has no preimage in Sub(U)"));
        out.insert(p, q.clone());
    }
    out
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
    fn pair(l: Term, r: Term) -> Term {
        Term::app("pair", vec![l, r])
    }
    fn eqs(list: &[(Term, Term)]) -> UnificationSystem {
        UnificationSystem::new(list.to_vec())
    }

    #[test]
    fn unify_examples() {
        let m = unify(&eqs(&[(v("x"), c("a"))])).unwrap();
        assert_eq!(m.substitution.apply(&v("x")), c("a"));
        assert_eq!(m.substitution.len(), 1);

        let m = unify(&eqs(&[(pair(v("x"), c("b")), pair(c("a"), v("y")))])).unwrap();
        assert_eq!(m.substitution.apply(&v("x")), c("a"));
        assert_eq!(m.substitution.apply(&v("y")), c("b"));

        assert!(matches!(
            unify(&eqs(&[(v("x"), pair(v("x"), c("a")))])),
            Err(UnifyError::Occurs { .. })
        ));
        assert!(matches!(
            unify(&eqs(&[(pair(c("a"), v("x")), Term::app("senc", vec![c("a"), v("x")]))])),
            Err(UnifyError::Clash { .. })
        ));
    }

    #[test]
    fn variable_pairs_bind_the_larger_variable() {
        let (x, y) = (Symbol::variable("x"), Symbol::variable("y"));
        let m = unify(&eqs(&[(v("x"), v("y"))])).unwrap().substitution;
        let (big, small) = if x > y { (x, y) } else { (y, x) };
        assert_eq!(m.get(big), Some(&Term::leaf(small)));
        assert_eq!(m.get(small), None);
    }

    #[test]
    fn chained_bindings_are_resolved() {
        let m = unify_pairs([
            (v("x"), pair(v("y"), v("z"))),
            (v("y"), c("a")),
            (v("z"), v("y")),
        ])
        .unwrap();
        assert!(m.is_idempotent());
        assert_eq!(m.apply(&v("x")), pair(c("a"), c("a")));
    }

    #[test]
    fn subterm_image_examples() {
        let u = eqs(&[(v("x"), pair(c("a"), v("y")))]);
        let m = unify(&u).unwrap();
        let w = mgu_subterm_image(&m, &u);
        assert_eq!(w.len(), 3);
        for (p, q) in &w {
            assert_eq!(&m.substitution.apply(q), p);
        }
        let u = eqs(&[(v("x"), c("a"))]);
        let m = unify(&u).unwrap();
        let w = mgu_subterm_image(&m, &u);
        let q = w.get(&c("a")).unwrap();
        assert!(q == &c("a") || q == &v("x"));
    }

    #[test]
    fn matching_treats_subject_variables_as_rigid() {
        let mut b = HashMap::new();
        assert!(match_term(&pair(v("x"), v("x")), &pair(v("Y"), v("Y")), &mut b));
        assert_eq!(b.get(&Symbol::variable("x")), Some(&v("Y")));
        let mut b = HashMap::new();
        assert!(!match_term(&pair(v("x"), v("x")), &pair(c("a"), v("Y")), &mut b));
        let mut b = HashMap::new();
        assert!(!match_term(&pair(c("a"), v("x")), &pair(v("Y"), c("b")), &mut b));
    }
}
