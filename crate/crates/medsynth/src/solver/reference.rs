//! Exhaustive equate/separate enumeration over a localization set.

use std::collections::{HashMap, HashSet};

use indexmap::IndexSet;

use super::{accept, blind, Outcome, SolveError, SolverConfig};
use crate::constraints::ConstraintSystem;
use crate::deduction::DeductionSystem;
use crate::terms::{subterms_of, Substitution, Term};
use crate::unification::{instantiate, match_term, unify_pairs, unify_under};

/// `Sub(S)` plus decomposition-rule copies pre-matched against the Send
/// subterms.
#[derive(Debug, Clone)]
pub struct LocalizationSet {
    pub terms: IndexSet<Term>,
    /// Instantiated side premises of the rule copies.
    pub rule_terms: Vec<Term>,
}

pub fn localization_set(sys: &DeductionSystem, s: &ConstraintSystem) -> LocalizationSet {
    let mut terms = s.subterms();
    let mut rule_terms = Vec::new();
    let out_subterms = subterms_of(&s.outputs());
    for (_, rule) in sys.decompositions() {
        let Some(pi) = rule.principal() else { continue };
        for p in out_subterms.iter().filter(|p| !p.is_var()) {
            let mut b = HashMap::new();
            if !match_term(&rule.premises[pi], p, &mut b) {
                continue;
            }
            let copy = rule.rename();
            let mut b2 = HashMap::new();
            match_term(&copy.premises[pi], p, &mut b2);
            for (j, prem) in copy.premises.iter().enumerate() {
                if j != pi {
                    let t = instantiate(prem, &b2);
                    for q in t.subterms() {
                        terms.insert(q);
                    }
                    rule_terms.push(t);
                }
            }
        }
    }
    LocalizationSet { terms, rule_terms }
}

struct Enumeration<'a> {
    sys: &'a DeductionSystem,
    s: &'a ConstraintSystem,
    cfg: &'a SolverConfig,
    pairs: Vec<(Term, Term)>,
    extra: Vec<Term>,
    seen: HashSet<Substitution>,
    nodes: usize,
    leaves: usize,
    capped: bool,
    found: Option<super::SolverSolution>,
}

pub(super) fn solve_reference(
    sys: &DeductionSystem,
    s: &ConstraintSystem,
    cfg: &SolverConfig,
) -> Result<Outcome, SolveError> {
    let size = s.subterms().len();
    if size > cfg.reference_threshold {
        return Err(SolveError::ThresholdExceeded {
            size,
            threshold: cfg.reference_threshold,
        });
    }
    let loc = localization_set(sys, s);
    let terms: Vec<Term> = loc.terms.iter().cloned().collect();
    let mut pairs = Vec::new();
    for i in 0..terms.len() {
        for j in i + 1..terms.len() {
            let (p, q) = (&terms[i], &terms[j]);
            if unify_pairs([(p.clone(), q.clone())]).is_ok() {
                pairs.push((p.clone(), q.clone()));
            }
        }
    }
    let mut e = Enumeration {
        sys,
        s,
        cfg,
        pairs,
        extra: loc.rule_terms,
        seen: HashSet::new(),
        nodes: 0,
        leaves: 0,
        capped: false,
        found: None,
    };
    e.dfs(0, Substitution::new(), &mut Vec::new());
    Ok(match e.found {
        Some(sol) => Outcome::Sat(Box::new(sol)),
        None if !e.capped => Outcome::Unsat,
        None => Outcome::Exhausted(format!(
            "reference search cap reached after {} nodes and {} leaves",
            e.nodes, e.leaves
        )),
    })
}

impl Enumeration<'_> {
    fn done(&self) -> bool {
        self.found.is_some() || self.capped
    }

    fn dfs(&mut self, from: usize, theta: Substitution, separated: &mut Vec<(Term, Term)>) {
        if self.done() {
            return;
        }
        self.nodes += 1;
        if self.nodes > self.cfg.max_nodes {
            self.capped = true;
            return;
        }
        let next = (from..self.pairs.len()).find(|&k| {
            let (p, q) = &self.pairs[k];
            let (p, q) = (theta.apply(p), theta.apply(q));
            p != q && unify_pairs([(p, q)]).is_ok()
        });
        let Some(k) = next else {
            self.leaf(theta);
            return;
        };
        let (p, q) = self.pairs[k].clone();
        separated.push((p.clone(), q.clone()));
        self.dfs(k + 1, theta.clone(), separated);
        separated.pop();
        if self.done() {
            return;
        }
        let Ok(equated) = unify_under(&theta, [(p, q)]) else {
            return;
        };
        if separated
            .iter()
            .any(|(a, b)| equated.apply(a) == equated.apply(b))
        {
            return;
        }
        self.dfs(k + 1, equated, separated);
    }

    fn leaf(&mut self, theta: Substitution) {
        let vars = self.s.vars();
        let extra: Vec<Term> = self.extra.iter().map(|t| theta.apply(t)).collect();
        let theta_s = restrict_with_images(&theta, &vars);
        if !self.seen.insert(theta_s.clone()) {
            return;
        }
        self.leaves += 1;
        if self.leaves > self.cfg.max_equality_guesses {
            self.capped = true;
            return;
        }
        let blinded = blind(&theta_s, self.s, &extra);
        if let Some(sol) = accept(self.sys, self.s, &theta_s, blinded, self.cfg.size_bound_factor) {
            self.found = Some(sol);
        }
    }
}

/// `θ` restricted to `vars`; images may mention localization variables.
fn restrict_with_images(theta: &Substitution, vars: &std::collections::BTreeSet<crate::terms::Symbol>) -> Substitution {
    theta.restrict(|v| vars.contains(&v))
}
