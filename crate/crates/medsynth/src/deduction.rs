//! Subterm deduction systems, derivations and ground derivability.
//!
//! Besides the user rules every system carries the implicit nonce-creation
//! and reception rules, and the composition rule of the reserved blinding
//! symbol. Derivability is decided by saturating the local universe
//! `Sub(K ∪ {t})` under decomposition instances whose premises are
//! composable from what is already known.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use indexmap::{IndexMap, IndexSet};
use thiserror::Error;

use crate::terms::{Symbol, SymbolKind, Term};
use crate::unification::{instantiate, match_term};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RuleKind {
    Composition,
    Decomposition,
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RuleKind::Composition => "composition",
            RuleKind::Decomposition => "decomposition",
        })
    }
}

/// A standard rule `l1, …, ln → r`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeductionRule {
    pub premises: Vec<Term>,
    pub conclusion: Term,
    pub kind: RuleKind,
}

impl DeductionRule {
    /// For decompositions, the first premise having the conclusion as a
    /// proper subterm.
    pub fn principal(&self) -> Option<usize> {
        if self.kind != RuleKind::Decomposition {
            return None;
        }
        self.premises
            .iter()
            .position(|p| p != &self.conclusion && p.contains(&self.conclusion))
    }

    pub fn vars(&self) -> BTreeSet<Symbol> {
        let mut out = self.conclusion.vars();
        for p in &self.premises {
            p.collect_vars(&mut out);
        }
        out
    }

    /// A copy with every variable replaced by a fresh one.
    pub fn rename(&self) -> DeductionRule {
        let map: HashMap<Symbol, Term> = self
            .vars()
            .into_iter()
            .map(|v| (v, Term::leaf(Symbol::fresh_variable())))
            .collect();
        DeductionRule {
            premises: self.premises.iter().map(|p| instantiate(p, &map)).collect(),
            conclusion: instantiate(&self.conclusion, &map),
            kind: self.kind,
        }
    }

    /// DAG size of the rule, `|Sub(l ∪ {r})|`.
    pub fn size(&self) -> usize {
        crate::terms::dag_size(self.premises.iter().chain([&self.conclusion]))
    }
}

impl fmt::Display for DeductionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, p) in self.premises.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{p}")?;
        }
        write!(f, " -> {}", self.conclusion)
    }
}

/// Index of a rule in its system. Displayed as `r1`, `r2`, … or `blind`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RuleId(pub usize);

/// A rule as written by the user, before classification.
#[derive(Debug, Clone)]
pub struct RuleSpec {
    pub premises: Vec<Term>,
    pub conclusion: Term,
    pub declared: Option<RuleKind>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuleError {
    #[error("rule {rule}: variable {var} of the conclusion does not occur in a premise")]
    VariableEscape { rule: usize, var: String },
    #[error("rule {rule}: conclusion is neither a subterm of a premise nor a composition of them")]
    NonSubtermConclusion { rule: usize },
    #[error("rule {rule}: the blinding symbol is reserved")]
    BlindingMisuse { rule: usize },
    #[error("rule {rule}: declared as {declared} but has the shape of a {actual}")]
    AmbiguousKind {
        rule: usize,
        declared: RuleKind,
        actual: RuleKind,
    },
    #[error("rule {rule}: conclusion is one of the premises")]
    Trivial { rule: usize },
    #[error("rule {rule}: nonces may not occur in rules")]
    NonceInRule { rule: usize },
}

/// A validated subterm deduction system.
#[derive(Debug, Clone)]
pub struct DeductionSystem {
    rules: Vec<DeductionRule>,
    signature: BTreeSet<Symbol>,
    blinding: RuleId,
}

fn classify(premises: &[Term], conclusion: &Term) -> Option<RuleKind> {
    if premises.iter().any(|p| p != conclusion && p.contains(conclusion)) {
        return Some(RuleKind::Decomposition);
    }
    if conclusion.is_var() {
        return None;
    }
    let sub_r = conclusion.subterms();
    if !premises.iter().all(|p| sub_r.contains(p)) {
        return None;
    }
    let sub_l = crate::terms::subterms_of(premises);
    let extra: Vec<&Term> = sub_r.iter().filter(|s| !sub_l.contains(*s)).collect();
    (extra == [conclusion]).then_some(RuleKind::Composition)
}

/// Checks and classifies user rules. The blinding composition is appended.
pub fn validate_system(
    rules: Vec<RuleSpec>,
    signature: impl IntoIterator<Item = Symbol>,
) -> Result<DeductionSystem, Vec<RuleError>> {
    let mut errors = Vec::new();
    let mut out = Vec::new();
    for (i, spec) in rules.into_iter().enumerate() {
        let rule = i + 1;
        let all = crate::terms::subterms_of(spec.premises.iter().chain([&spec.conclusion]));
        let mut bad = false;
        if all.iter().any(|s| s.symbol().is_blinding()) {
            errors.push(RuleError::BlindingMisuse { rule });
            bad = true;
        }
        if all.iter().any(Term::is_nonce) {
            errors.push(RuleError::NonceInRule { rule });
            bad = true;
        }
        let premise_vars = crate::terms::vars_of(&spec.premises);
        if let Some(v) = spec.conclusion.vars().difference(&premise_vars).next() {
            errors.push(RuleError::VariableEscape {
                rule,
                var: v.to_string(),
            });
            bad = true;
        }
        if bad {
            continue;
        }
        if spec.premises.contains(&spec.conclusion) {
            errors.push(RuleError::Trivial { rule });
            continue;
        }
        match (classify(&spec.premises, &spec.conclusion), spec.declared) {
            (None, _) => errors.push(RuleError::NonSubtermConclusion { rule }),
            (Some(actual), Some(declared)) if actual != declared => {
                errors.push(RuleError::AmbiguousKind {
                    rule,
                    declared,
                    actual,
                })
            }
            (Some(kind), _) => out.push(DeductionRule {
                premises: spec.premises,
                conclusion: spec.conclusion,
                kind,
            }),
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }
    let mut signature: BTreeSet<Symbol> = signature.into_iter().collect();
    for r in &out {
        for t in r.premises.iter().chain([&r.conclusion]) {
            for s in t.subterms() {
                if s.symbol().kind() == SymbolKind::Function {
                    signature.insert(s.symbol());
                }
            }
        }
    }
    let (x1, x2) = (Term::var("x1"), Term::var("x2"));
    out.push(DeductionRule {
        premises: vec![x1.clone(), x2.clone()],
        conclusion: Term::blind(x1, x2),
        kind: RuleKind::Composition,
    });
    Ok(DeductionSystem {
        blinding: RuleId(out.len() - 1),
        rules: out,
        signature,
    })
}

impl DeductionSystem {
    /// All rules, the blinding composition last.
    pub fn rules(&self) -> &[DeductionRule] {
        &self.rules
    }

    pub fn rule(&self, id: RuleId) -> Option<&DeductionRule> {
        self.rules.get(id.0)
    }

    pub fn signature(&self) -> &BTreeSet<Symbol> {
        &self.signature
    }

    pub fn blinding_rule(&self) -> RuleId {
        self.blinding
    }

    pub fn label(&self, id: RuleId) -> String {
        if id == self.blinding {
            "blind".to_string()
        } else {
            format!("r{}", id.0 + 1)
        }
    }

    pub fn rule_by_label(&self, label: &str) -> Option<RuleId> {
        if label == "blind" {
            return Some(self.blinding);
        }
        let k: usize = label.strip_prefix('r')?.parse().ok()?;
        (k >= 1 && k <= self.rules.len() && RuleId(k - 1) != self.blinding).then(|| RuleId(k - 1))
    }

    pub fn compositions(&self) -> impl Iterator<Item = (RuleId, &DeductionRule)> {
        self.of_kind(RuleKind::Composition)
    }

    pub fn decompositions(&self) -> impl Iterator<Item = (RuleId, &DeductionRule)> {
        self.of_kind(RuleKind::Decomposition)
    }

    fn of_kind(&self, kind: RuleKind) -> impl Iterator<Item = (RuleId, &DeductionRule)> {
        self.rules
            .iter()
            .enumerate()
            .filter(move |(_, r)| r.kind == kind)
            .map(|(i, r)| (RuleId(i), r))
    }

    /// Maximal DAG size of a decomposition rule.
    pub fn max_decomposition_size(&self) -> usize {
        self.decompositions().map(|(_, r)| r.size()).max().unwrap_or(0)
    }
}

/// One step of a derivation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    /// Reception `?t`.
    Acquire(Term),
    /// Nonce creation.
    Fresh(Term),
    Apply {
        rule: RuleId,
        premises: Vec<Term>,
        conclusion: Term,
    },
}

impl Step {
    pub fn conclusion(&self) -> &Term {
        match self {
            Step::Acquire(t) | Step::Fresh(t) => t,
            Step::Apply { conclusion, .. } => conclusion,
        }
    }

    pub fn is_acquire(&self) -> bool {
        matches!(self, Step::Acquire(_))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Derivation {
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DeductionError {
    #[error("index {index} out of range for a derivation of length {len}")]
    IndexOutOfRange { index: usize, len: usize },
}

impl Derivation {
    pub fn new(steps: Vec<Step>) -> Derivation {
        Derivation { steps }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Conclusions of the first `i` steps.
    pub fn rhs_set(&self, i: usize) -> Result<IndexSet<Term>, DeductionError> {
        if i > self.steps.len() {
            return Err(DeductionError::IndexOutOfRange {
                index: i,
                len: self.steps.len(),
            });
        }
        Ok(self.steps[..i].iter().map(|s| s.conclusion().clone()).collect())
    }

    /// 1-based index of the first acquisition strictly after step `i`, or
    /// `len + 1`.
    pub fn next_reception(&self, i: usize) -> usize {
        self.steps
            .iter()
            .enumerate()
            .skip(i)
            .find(|(_, s)| s.is_acquire())
            .map_or(self.steps.len() + 1, |(j, _)| j + 1)
    }

    pub fn acquisitions(&self) -> Vec<Term> {
        self.steps
            .iter()
            .filter_map(|s| match s {
                Step::Acquire(t) => Some(t.clone()),
                _ => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("step {step}: {reason}")]
pub struct DerivationError {
    /// 1-based step index; `len + 1` for errors detected at the end.
    pub step: usize,
    pub reason: String,
}

/// Replays a derivation: premises available, rule instances correct, nonces
/// created once, and acquisitions exactly `allowed`, in order.
pub fn check_derivation(
    sys: &DeductionSystem,
    derivation: &Derivation,
    allowed: &[Term],
) -> Result<(), DerivationError> {
    let mut have: HashSet<Term> = HashSet::new();
    let mut next_acq = 0;
    for (i, step) in derivation.steps.iter().enumerate() {
        let fail = |reason: String| DerivationError { step: i + 1, reason };
        if !step.conclusion().is_ground() {
            return Err(fail(format!("{} is not ground", step.conclusion())));
        }
        match step {
            Step::Acquire(t) => {
                match allowed.get(next_acq) {
                    Some(a) if a == t => next_acq += 1,
                    Some(a) => return Err(fail(format!("acquires {t}, expected {a}"))),
                    None => return Err(fail(format!("acquires {t} beyond the allowed sequence"))),
                }
            }
            Step::Fresh(n) => {
                if !n.is_nonce() {
                    return Err(fail(format!("{n} is not a nonce")));
                }
                if have.contains(n) {
                    return Err(fail(format!("nonce {n} is not fresh")));
                }
            }
            Step::Apply {
                rule,
                premises,
                conclusion,
            } => {
                let r = sys
                    .rule(*rule)
                    .ok_or_else(|| fail(format!("unknown rule {}", rule.0 + 1)))?;
                if r.premises.len() != premises.len() {
                    return Err(fail(format!(
                        "rule {} takes {} premises",
                        sys.label(*rule),
                        r.premises.len()
                    )));
                }
                if let Some(p) = premises.iter().find(|p| !have.contains(*p)) {
                    return Err(fail(format!("premise {p} is not available")));
                }
                let mut b = HashMap::new();
                let ok = r
                    .premises
                    .iter()
                    .zip(premises)
                    .all(|(pat, p)| match_term(pat, p, &mut b))
                    && match_term(&r.conclusion, conclusion, &mut b);
                if !ok {
                    return Err(fail(format!(
                        "not an instance of {} ({r})",
                        sys.label(*rule)
                    )));
                }
            }
        }
        have.insert(step.conclusion().clone());
    }
    if next_acq != allowed.len() {
        return Err(DerivationError {
            step: derivation.steps.len() + 1,
            reason: format!("{} allowed acquisitions were not consumed", allowed.len() - next_acq),
        });
    }
    Ok(())
}

#[derive(Debug, Clone)]
enum Origin {
    Acquired,
    Decomposed { rule: RuleId, premises: Vec<Term> },
}

/// A knowledge set saturated under decompositions over a local universe.
///
/// Variables are treated as rigid constants: a variable is composable only
/// when it has been acquired.
#[derive(Debug, Clone)]
pub struct Knowledge<'s> {
    sys: &'s DeductionSystem,
    universe: IndexSet<Term>,
    by_head: HashMap<Symbol, Vec<Term>>,
    known: IndexMap<Term, Origin>,
    saturated: bool,
}

/// Placeholder nonce for side-premise variables that no premise determines.
fn placeholder_nonce() -> Term {
    Term::leaf(Symbol::generated_nonce(u64::MAX))
}

impl<'s> Knowledge<'s> {
    pub fn new(sys: &'s DeductionSystem) -> Knowledge<'s> {
        Knowledge {
            sys,
            universe: IndexSet::new(),
            by_head: HashMap::new(),
            known: IndexMap::new(),
            saturated: true,
        }
    }

    pub fn system(&self) -> &'s DeductionSystem {
        self.sys
    }

    /// Extends the local universe with `Sub(t)`.
    pub fn add_universe(&mut self, t: &Term) {
        if self.universe.contains(t) {
            return;
        }
        for s in t.subterms() {
            if self.universe.insert(s.clone()) {
                self.by_head.entry(s.symbol()).or_default().push(s);
                self.saturated = false;
            }
        }
    }

    pub fn acquire(&mut self, t: &Term) {
        self.add_universe(t);
        if !self.known.contains_key(t) {
            self.known.insert(t.clone(), Origin::Acquired);
            self.saturated = false;
        }
    }

    /// Whether `Sub(t)` is inside the local universe.
    pub fn covers(&self, t: &Term) -> bool {
        self.universe.contains(t)
    }

    pub fn knows(&self, t: &Term) -> bool {
        self.known.contains_key(t)
    }

    /// Saturated knowledge, in insertion order.
    pub fn known(&self) -> impl Iterator<Item = &Term> {
        self.known.keys()
    }

    pub fn saturate(&mut self) {
        if self.saturated {
            return;
        }
        let decomps: Vec<(RuleId, DeductionRule)> = self
            .sys
            .decompositions()
            .map(|(id, r)| (id, r.clone()))
            .collect();
        loop {
            let mut grew = false;
            for (id, rule) in &decomps {
                let Some(pi) = rule.principal() else { continue };
                let pattern = &rule.premises[pi];
                let candidates = self.by_head.get(&pattern.symbol()).cloned().unwrap_or_default();
                for u in candidates {
                    let mut b = HashMap::new();
                    if !match_term(pattern, &u, &mut b) {
                        continue;
                    }
                    let concl = instantiate(&rule.conclusion, &b);
                    if self.known.contains_key(&concl) {
                        continue;
                    }
                    if let Some(premises) = self.enabled_instance(rule, b) {
                        self.known.insert(
                            concl,
                            Origin::Decomposed {
                                rule: *id,
                                premises,
                            },
                        );
                        grew = true;
                    }
                }
            }
            if !grew {
                break;
            }
        }
        self.saturated = true;
    }

    /// Premise instances of `rule` under `b` if all are composable;
    /// variables left unbound are tried against known terms and a nonce.
    fn enabled_instance(&self, rule: &DeductionRule, b: HashMap<Symbol, Term>) -> Option<Vec<Term>> {
        let unbound: Vec<Symbol> = rule
            .vars()
            .into_iter()
            .filter(|v| !b.contains_key(v))
            .collect();
        let mut candidates: Vec<Term> = vec![placeholder_nonce()];
        if !unbound.is_empty() {
            candidates.extend(self.known.keys().cloned());
        }
        let limit = self.known.len();
        let mut choice = vec![0usize; unbound.len()];
        loop {
            let mut bb = b.clone();
            for (v, &c) in unbound.iter().zip(&choice) {
                bb.insert(*v, candidates[c].clone());
            }
            let premises: Vec<Term> = rule.premises.iter().map(|p| instantiate(p, &bb)).collect();
            if premises.iter().all(|p| self.composable_below(p, limit)) {
                return Some(premises);
            }
            // next assignment
            let mut k = 0;
            loop {
                if k == choice.len() {
                    return None;
                }
                choice[k] += 1;
                if choice[k] < candidates.len() {
                    break;
                }
                choice[k] = 0;
                k += 1;
            }
        }
    }

    /// Composable from the first `limit` known terms.
    fn composable_below(&self, t: &Term, limit: usize) -> bool {
        if let Some(i) = self.known.get_index_of(t) {
            if i < limit {
                return true;
            }
        }
        if t.is_nonce() {
            return true;
        }
        self.composition_for(t, limit).is_some()
    }

    /// A composition rule and premise instances building `t`.
    fn composition_for(&self, t: &Term, limit: usize) -> Option<(RuleId, Vec<Term>)> {
        if t.is_var() || t.args().is_empty() && t.symbol().kind() != SymbolKind::Constant {
            return None;
        }
        for (id, rule) in self.sys.compositions() {
            let mut b = HashMap::new();
            if !match_term(&rule.conclusion, t, &mut b) {
                continue;
            }
            let premises: Vec<Term> = rule.premises.iter().map(|p| instantiate(p, &b)).collect();
            if premises.iter().all(|p| self.composable_below(p, limit)) {
                return Some((id, premises));
            }
        }
        None
    }

    /// `t ∈ Der(K)`, after saturation.
    pub fn composable(&mut self, t: &Term) -> bool {
        // New universe terms only matter as principal premises, which must
        // be composable; if none is, the saturated set stays closed.
        let inert = self.saturated
            && t.subterms()
                .iter()
                .filter(|u| !self.universe.contains(*u))
                .all(|u| !self.composable_below(u, usize::MAX));
        self.add_universe(t);
        if inert {
            self.saturated = true;
        }
        self.saturate();
        self.composable_below(t, usize::MAX)
    }

    /// Like [`Knowledge::composable`] without extending the universe; the
    /// caller guarantees `Sub(t)` is already covered or irrelevant.
    pub fn composable_saturated(&self, t: &Term) -> bool {
        debug_assert!(self.saturated);
        self.composable_below(t, usize::MAX)
    }

    pub fn is_saturated(&self) -> bool {
        self.saturated
    }

    /// Appends to `out` a derivation of `t` from what `out` already holds,
    /// deducing nothing twice. Returns false if `t` is not derivable.
    /// Every acquired term used must already be in `out`.
    pub fn emit(&mut self, t: &Term, out: &mut DerivationBuilder) -> bool {
        if !self.composable(t) {
            return false;
        }
        self.emit_below(t, usize::MAX, out)
    }

    fn emit_below(&self, t: &Term, limit: usize, out: &mut DerivationBuilder) -> bool {
        if out.has(t) {
            return true;
        }
        if let Some((rank, _, origin)) = self.known.get_full(t) {
            if rank < limit {
                return match origin {
                    Origin::Acquired => false,
                    Origin::Decomposed { rule, premises } => {
                        for p in premises {
                            if !self.emit_below(p, rank, out) {
                                return false;
                            }
                        }
                        if out.has(t) {
                            return true;
                        }
                        out.push(Step::Apply {
                            rule: *rule,
                            premises: premises.clone(),
                            conclusion: t.clone(),
                        });
                        true
                    }
                };
            }
        }
        if t.is_nonce() {
            out.push(Step::Fresh(t.clone()));
            return true;
        }
        let Some((rule, premises)) = self.composition_for(t, limit) else {
            return false;
        };
        for p in &premises {
            if !self.emit_below(p, limit, out) {
                return false;
            }
        }
        if out.has(t) {
            return true;
        }
        out.push(Step::Apply {
            rule,
            premises,
            conclusion: t.clone(),
        });
        true
    }
}

/// A derivation under construction together with its conclusion set.
#[derive(Debug, Clone, Default)]
pub struct DerivationBuilder {
    steps: Vec<Step>,
    have: HashSet<Term>,
}

impl DerivationBuilder {
    pub fn new() -> DerivationBuilder {
        DerivationBuilder::default()
    }

    pub fn has(&self, t: &Term) -> bool {
        self.have.contains(t)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn push(&mut self, step: Step) {
        self.have.insert(step.conclusion().clone());
        self.steps.push(step);
    }

    pub fn finish(self) -> Derivation {
        Derivation { steps: self.steps }
    }
}

/// Decides `t ∈ Der(K)`.
pub fn derivable(sys: &DeductionSystem, knowledge: &[Term], t: &Term) -> bool {
    let mut k = Knowledge::new(sys);
    for m in knowledge {
        k.acquire(m);
    }
    k.composable(t)
}

/// A witness derivation of `t` from `K`: every member of `K` is acquired
/// first, in order, then `t` is deduced.
pub fn prove(sys: &DeductionSystem, knowledge: &[Term], t: &Term) -> Option<Derivation> {
    let mut k = Knowledge::new(sys);
    let mut out = DerivationBuilder::new();
    let mut seen = HashSet::new();
    for m in knowledge {
        if seen.insert(m.clone()) {
            k.acquire(m);
            out.push(Step::Acquire(m.clone()));
        }
    }
    k.emit(t, &mut out).then(|| out.finish())
}

/// Distinct members of `K`, in order; the acquisitions used by [`prove`].
pub fn dedup_knowledge(knowledge: &[Term]) -> Vec<Term> {
    let mut seen = HashSet::new();
    knowledge.iter().filter(|t| seen.insert((*t).clone())).cloned().collect()
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
    fn f(name: &str, args: &[Term]) -> Term {
        Term::app(name, args.to_vec())
    }
    fn compose(conclusion: Term, premises: &[Term]) -> RuleSpec {
        RuleSpec {
            premises: premises.to_vec(),
            conclusion,
            declared: Some(RuleKind::Composition),
        }
    }
    fn decompose(premises: &[Term], conclusion: Term) -> RuleSpec {
        RuleSpec {
            premises: premises.to_vec(),
            conclusion,
            declared: Some(RuleKind::Decomposition),
        }
    }

    fn dy() -> DeductionSystem {
        let (x, y) = (v("x"), v("y"));
        let privy = f("priv", &[y.clone()]);
        validate_system(
            vec![
                compose(f("pair", &[x.clone(), y.clone()]), &[x.clone(), y.clone()]),
                compose(f("senc", &[x.clone(), y.clone()]), &[x.clone(), y.clone()]),
                compose(f("aenc", &[x.clone(), y.clone()]), &[x.clone(), y.clone()]),
                compose(f("sig", &[x.clone(), privy.clone()]), &[x.clone(), privy.clone()]),
                decompose(&[f("pair", &[x.clone(), y.clone()])], x.clone()),
                decompose(&[f("pair", &[x.clone(), y.clone()])], y.clone()),
                decompose(&[f("senc", &[x.clone(), y.clone()]), y.clone()], x.clone()),
                decompose(&[f("aenc", &[x.clone(), y.clone()]), privy.clone()], x.clone()),
                decompose(&[f("sig", &[x.clone(), privy]), y.clone()], x.clone()),
                decompose(&[f("parent", &[x.clone(), y.clone()]), x.clone()], y.clone()),
                decompose(&[f("parent", &[x.clone(), y.clone()]), y.clone()], x.clone()),
            ],
            [],
        )
        .unwrap()
    }

    #[test]
    fn classifies_the_loan_system() {
        let sys = dy();
        assert_eq!(sys.compositions().count(), 5); // four plus blinding
        assert_eq!(sys.decompositions().count(), 7);
        assert_eq!(sys.label(RuleId(0)), "r1");
        assert_eq!(sys.label(sys.blinding_rule()), "blind");
        assert_eq!(sys.rule_by_label("r11"), Some(RuleId(10)));
        assert_eq!(sys.rule_by_label("r12"), None);
    }

    #[test]
    fn rejects_malformed_rules() {
        let (x, y, z) = (v("x"), v("y"), v("z"));
        let errs = validate_system(
            vec![RuleSpec {
                premises: vec![x.clone()],
                conclusion: f("senc", &[x.clone(), c("k")]),
                declared: None,
            }],
            [],
        )
        .unwrap_err();
        assert!(matches!(errs[0], RuleError::NonSubtermConclusion { rule: 1 }));
        let errs =
            validate_system(vec![decompose(&[f("senc", &[x.clone(), y.clone()])], z)], []).unwrap_err();
        assert!(matches!(errs[0], RuleError::VariableEscape { .. }));
        let errs = validate_system(
            vec![compose(Term::blind(x.clone(), y.clone()), &[x.clone(), y.clone()])],
            [],
        )
        .unwrap_err();
        assert!(matches!(errs[0], RuleError::BlindingMisuse { .. }));
        let errs = validate_system(vec![decompose(&[x.clone(), y.clone()], f("pair", &[x, y]))], [])
            .unwrap_err();
        assert!(matches!(errs[0], RuleError::AmbiguousKind { .. }));
    }

    #[test]
    fn derivability_examples() {
        let sys = dy();
        let (a, b) = (c("a"), c("b"));
        assert!(derivable(&sys, &[f("senc", &[a.clone(), b.clone()]), b.clone()], &a));
        assert!(!derivable(&sys, &[], &c("c")));
        assert!(derivable(&sys, &[], &Term::nonce("n")));
        assert!(!derivable(&sys, &[f("aenc", &[a.clone(), c("pk")])], &a));
        let ga = f("g", &[a.clone()]);
        let gc = f("g", &[c("c")]);
        assert!(derivable(&sys, &[ga.clone(), f("parent", &[ga, gc.clone()])], &gc));
    }

    #[test]
    fn witnesses_replay() {
        let sys = dy();
        let (a, b, k) = (c("a"), c("b"), c("k"));
        let kn = vec![f("senc", &[f("pair", &[a.clone(), b.clone()]), k.clone()]), k.clone()];
        let goal = f("pair", &[b.clone(), f("senc", &[a.clone(), Term::nonce("n")])]);
        let d = prove(&sys, &kn, &goal).unwrap();
        check_derivation(&sys, &d, &kn).unwrap();
        assert_eq!(d.steps.last().unwrap().conclusion(), &goal);
        let concl: Vec<&Term> = d.steps.iter().map(Step::conclusion).collect();
        let uniq: HashSet<&Term> = concl.iter().copied().collect();
        assert_eq!(concl.len(), uniq.len());
    }

    #[test]
    fn derivation_indices() {
        let a = c("a");
        let d = Derivation::new(vec![]);
        assert!(d.rhs_set(0).unwrap().is_empty());
        assert_eq!(d.next_reception(0), 1);
        let d = Derivation::new(vec![Step::Fresh(Term::nonce("n")), Step::Acquire(a.clone())]);
        assert_eq!(d.next_reception(0), 2);
        assert_eq!(d.next_reception(2), 3);
        let d = Derivation::new(vec![Step::Acquire(a.clone())]);
        assert_eq!(d.next_reception(1), 2);
        assert_eq!(d.rhs_set(1).unwrap().into_iter().collect::<Vec<_>>(), vec![a]);
        assert!(d.rhs_set(2).is_err());
    }

    #[test]
    fn checker_examples() {
        let sys = dy();
        let (a, b) = (c("a"), c("b"));
        let p = f("pair", &[a.clone(), b.clone()]);
        let bad = Derivation::new(vec![Step::Apply {
            rule: RuleId(4),
            premises: vec![p.clone()],
            conclusion: a.clone(),
        }]);
        assert_eq!(check_derivation(&sys, &bad, &[]).unwrap_err().step, 1);
        let good = Derivation::new(vec![
            Step::Acquire(a.clone()),
            Step::Acquire(b.clone()),
            Step::Apply {
                rule: RuleId(0),
                premises: vec![a.clone(), b.clone()],
                conclusion: p,
            },
        ]);
        check_derivation(&sys, &good, &[a.clone(), b.clone()]).unwrap();
        assert!(check_derivation(&sys, &good, &[b, a]).is_err());
    }
}
