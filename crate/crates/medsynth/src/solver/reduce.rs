//! Lazy goal reduction for the positive part of a constraint system.
//!
//! Each Receive `?t` at position `i` becomes a goal `Derive(t, i)`: `t` must
//! be deducible from the Sends before `i`. A goal is discharged when it is
//! deducible for every instance of the current guess (variables of the
//! knowledge treated as known), or reduced by
//!
//! * composing `t` with a renamed composition rule,
//! * unifying `t` with a non-variable subterm `s` of the knowledge, which
//!   leaves `Analyze(s, i)`: `s` must be obtainable by decomposition,
//! * for `Analyze(s, i)`: unifying `s` with a Send payload, or placing it as
//!   the conclusion of a decomposition whose principal premise is unified
//!   with a knowledge subterm `u` (then `Analyze(u, i)` and `Derive` goals
//!   for the side premises).
//!
//! Variable goals are left alone: those variables stay free in the solved
//! form and are instantiated later by blinding. With `variable_guesses`,
//! each is also tried against the non-variable knowledge subterms.

use std::collections::{BTreeSet, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::SolverConfig;
use crate::constraints::{ConstraintKind, ConstraintSystem};
use crate::deduction::{DeductionRule, DeductionSystem, Knowledge};
use crate::terms::{subterms_of, Substitution, Symbol, Term};
use crate::unification::unify_under;

/// A symbolic solution of the positive part: an equality guess and the
/// variables it leaves free, each with the Send position anchoring it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolvedForm {
    pub theta: Substitution,
    pub free: Vec<(Symbol, usize)>,
}

#[derive(Debug, Clone, Default)]
pub struct ReduceStatus {
    /// False when a cap cut the search; an empty result is then no proof.
    pub complete: bool,
    pub nodes: usize,
    pub solved_forms: usize,
    pub cap: Option<&'static str>,
}

impl ReduceStatus {
    pub fn reason(&self) -> String {
        format!(
            "search cap reached ({}) after {} nodes and {} solved forms",
            self.cap.unwrap_or("stopped"),
            self.nodes,
            self.solved_forms
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum GoalKind {
    Derive,
    Analyze,
}

#[derive(Debug, Clone)]
struct Goal {
    kind: GoalKind,
    term: Term,
    pos: usize,
    ancestors: Vec<(GoalKind, Term)>,
}

impl Goal {
    fn child(&self, kind: GoalKind, term: Term) -> Goal {
        let mut ancestors = self.ancestors.clone();
        ancestors.push((self.kind, self.term.clone()));
        Goal {
            kind,
            term,
            pos: self.pos,
            ancestors,
        }
    }

    fn apply(&self, theta: &Substitution) -> Goal {
        Goal {
            kind: self.kind,
            term: theta.apply(&self.term),
            pos: self.pos,
            ancestors: self
                .ancestors
                .iter()
                .map(|(k, t)| (*k, theta.apply(t)))
                .collect(),
        }
    }
}

struct Alternative {
    theta: Substitution,
    goals: Vec<Goal>,
    cost: usize,
}

struct KnowledgeEntry<'a> {
    saturated: Knowledge<'a>,
    subterms: Vec<Term>,
    ground: bool,
}

struct Search<'a, F> {
    sys: &'a DeductionSystem,
    sends: Vec<(usize, Term)>,
    /// Forbids used for pruning; empty when only the positive part counts.
    forbids: Vec<(usize, Term)>,
    pruning: ForbidPruning,
    /// Knowledge without its variables, for [`ForbidPruning::Rigid`].
    strict: HashMap<Vec<Term>, Knowledge<'a>>,
    s: &'a ConstraintSystem,
    svars: BTreeSet<Symbol>,
    cfg: &'a SolverConfig,
    on_form: F,
    status: ReduceStatus,
    stop: bool,
    seen: HashSet<Substitution>,
    cache: HashMap<Vec<Term>, KnowledgeEntry<'a>>,
    rng: Option<ChaCha8Rng>,
    compositions: Vec<DeductionRule>,
    decompositions: Vec<(usize, DeductionRule)>,
}

/// Enumerates the solved forms of the positive part of `S`, handing each
/// distinct one to `on_form` until it returns false.
pub fn reduce_positive<F: FnMut(SolvedForm) -> bool>(
    sys: &DeductionSystem,
    s: &ConstraintSystem,
    cfg: &SolverConfig,
    on_form: F,
) -> ReduceStatus {
    reduce(sys, s, cfg, ForbidPruning::Off, on_form)
}

/// How Forbids cut the search for solved forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ForbidPruning {
    /// Only the positive part counts.
    Off,
    /// Drop a branch once some Forbid `#t` at `j` has `tθ` deducible from
    /// the Sends before `j` together with their variables. Sound for blinded
    /// candidates: a free variable of a Send is received earlier, and its
    /// blinded value is deducible from that point on.
    Blinded,
    /// As `Blinded`, with variables as underivable constants; sound for
    /// every instance of `θ`.
    Rigid,
}

/// As [`reduce_positive`], with Forbids used for pruning as `pruning` says.
pub(crate) fn reduce<F: FnMut(SolvedForm) -> bool>(
    sys: &DeductionSystem,
    s: &ConstraintSystem,
    cfg: &SolverConfig,
    pruning: ForbidPruning,
    on_form: F,
) -> ReduceStatus {
    let forbids = if pruning != ForbidPruning::Off {
        s.iter()
            .filter(|(_, c)| c.kind == ConstraintKind::Forbid)
            .map(|(i, c)| (i, c.payload.clone()))
            .collect()
    } else {
        Vec::new()
    };
    let sends = s
        .iter()
        .filter(|(_, c)| c.kind == ConstraintKind::Send)
        .map(|(i, c)| (i, c.payload.clone()))
        .collect();
    let mut search = Search {
        sys,
        sends,
        forbids,
        pruning,
        strict: HashMap::new(),
        s,
        svars: s.vars(),
        cfg,
        on_form,
        status: ReduceStatus {
            complete: true,
            ..Default::default()
        },
        stop: false,
        seen: HashSet::new(),
        cache: HashMap::new(),
        rng: (cfg.seed != 0).then(|| ChaCha8Rng::seed_from_u64(cfg.seed)),
        compositions: sys.compositions().map(|(_, r)| r.clone()).collect(),
        decompositions: sys
            .decompositions()
            .filter_map(|(_, r)| r.principal().map(|p| (p, r.clone())))
            .collect(),
    };
    let goals = s
        .iter()
        .filter(|(_, c)| c.kind == ConstraintKind::Receive)
        .map(|(i, c)| Goal {
            kind: GoalKind::Derive,
            term: c.payload.clone(),
            pos: i,
            ancestors: Vec::new(),
        })
        .collect();
    search.run(Substitution::new(), goals);
    search.status
}

impl<'a, F: FnMut(SolvedForm) -> bool> Search<'a, F> {
    fn knowledge(&mut self, theta: &Substitution, pos: usize) -> Vec<Term> {
        self.sends
            .iter()
            .take_while(|(i, _)| *i < pos)
            .map(|(_, t)| theta.apply(t))
            .collect()
    }

    fn entry(&mut self, k: &[Term]) -> &mut KnowledgeEntry<'a> {
        if !self.cache.contains_key(k) {
            let mut saturated = Knowledge::new(self.sys);
            for t in k {
                saturated.acquire(t);
                for v in t.vars() {
                    saturated.acquire(&Term::leaf(v));
                }
            }
            saturated.saturate();
            let subterms = subterms_of(k).into_iter().filter(|t| !t.is_var()).collect();
            let ground = k.iter().all(Term::is_ground);
            self.cache.insert(
                k.to_vec(),
                KnowledgeEntry {
                    saturated,
                    subterms,
                    ground,
                },
            );
        }
        self.cache.get_mut(k).unwrap()
    }

    /// Deducible from `K ∪ vars(K)` with variables as constants.
    fn rigid_derivable(&mut self, k: &[Term], t: &Term) -> bool {
        // Growing the local universe keeps answers exact, so the cached
        // entry is extended in place.
        let entry = self.entry(k);
        if entry.saturated.covers(t) {
            entry.saturated.composable_saturated(t)
        } else {
            entry.saturated.composable(t)
        }
    }

    fn leaf(&mut self, theta: Substitution) {
        if !self.seen.insert(theta.clone()) {
            return;
        }
        self.status.solved_forms += 1;
        if self.status.solved_forms > self.cfg.max_equality_guesses {
            self.cut("solved forms");
            return;
        }
        let stheta = self.s.apply(&theta);
        let free = super::free_vars(&theta, self.s)
            .into_iter()
            .map(|(x, i)| (x, stheta.prev_send_unchecked(i)))
            .collect();
        if !(self.on_form)(SolvedForm { theta, free }) {
            self.stop = true;
        }
    }

    fn cut(&mut self, cap: &'static str) {
        self.status.complete = false;
        self.status.cap.get_or_insert(cap);
        self.stop = true;
    }

    fn violates_forbid(&mut self, theta: &Substitution) -> bool {
        for (j, t) in self.forbids.clone() {
            let k = self.knowledge(theta, j);
            let t = theta.apply(&t);
            let derivable = match self.pruning {
                ForbidPruning::Off => false,
                ForbidPruning::Blinded => self.rigid_derivable(&k, &t),
                ForbidPruning::Rigid => {
                    let sys = self.sys;
                    let known = self.strict.entry(k).or_insert_with_key(|k| {
                        let mut known = Knowledge::new(sys);
                        k.iter().for_each(|u| known.acquire(u));
                        known
                    });
                    known.composable(&t)
                }
            };
            if derivable {
                return true;
            }
        }
        false
    }

    fn run(&mut self, theta: Substitution, mut goals: Vec<Goal>) {
        if self.violates_forbid(&theta) {
            return;
        }
        if self.stop {
            return;
        }
        self.status.nodes += 1;
        if self.status.nodes > self.cfg.max_nodes {
            self.cut("nodes");
            return;
        }
        goals.retain(|g| g.term.as_var().map_or(true, |v| self.svars.contains(&v)));
        // Fail first: discharge what is already deducible, give up on a
        // goal without alternatives, and branch on the tightest goal.
        let mut best: Option<(usize, Vec<Alternative>)> = None;
        let mut gi = 0;
        while gi < goals.len() {
            let goal = &goals[gi];
            if goal.term.is_var() {
                gi += 1;
                continue;
            }
            if goal.ancestors.contains(&(goal.kind, goal.term.clone())) {
                return;
            }
            if goal.ancestors.len() > self.cfg.max_depth {
                self.status.complete = false;
                self.status.cap.get_or_insert("depth");
                return;
            }
            let k = self.knowledge(&theta, goal.pos);
            if self.rigid_derivable(&k, &goal.term) {
                goals.remove(gi);
                continue;
            }
            if goal.term.is_ground() && self.entry(&k).ground {
                return;
            }
            let goal = goal.clone();
            let alts = match goal.kind {
                GoalKind::Derive => self.derive_alternatives(&theta, &goal, &k),
                GoalKind::Analyze => self.analyze_alternatives(&theta, &goal, &k),
            };
            if alts.is_empty() {
                return;
            }
            if best.as_ref().map_or(true, |(_, b)| alts.len() < b.len()) {
                best = Some((gi, alts));
            }
            gi += 1;
        }
        let Some((gi, mut alts)) = best else {
            if self.cfg.variable_guesses && !goals.is_empty() {
                self.guess_variable(theta, goals);
            } else {
                self.leaf(theta);
            }
            return;
        };
        goals.remove(gi);
        alts.sort_by_key(|a| a.cost);
        if let Some(rng) = self.rng.as_mut() {
            let mut start = 0;
            while start < alts.len() {
                let end = start
                    + alts[start..]
                        .iter()
                        .take_while(|a| a.cost == alts[start].cost)
                        .count();
                alts[start..end].shuffle(rng);
                start = end;
            }
        }
        for alt in alts {
            let mut next = alt.goals;
            next.extend(goals.iter().map(|g| g.apply(&alt.theta)));
            let restricted = alt.theta.restrict(|v| self.svars.contains(&v));
            self.run(restricted, next);
            if self.stop {
                return;
            }
        }
    }

    /// Either leaves the first variable goal free or binds its variable to
    /// a non-variable knowledge subterm, which must then be analyzed.
    fn guess_variable(&mut self, theta: Substitution, mut goals: Vec<Goal>) {
        let goal = goals.remove(0);
        self.run(theta.clone(), goals.clone());
        if self.stop {
            return;
        }
        let k = self.knowledge(&theta, goal.pos);
        let subterms = self.entry(&k).subterms.clone();
        for s in subterms {
            let alt = self.alternative(&theta, vec![(goal.term.clone(), s.clone())], |th| {
                vec![goal.child(GoalKind::Analyze, th.apply(&s))]
            });
            let Some(alt) = alt else { continue };
            let mut next = alt.goals;
            next.extend(goals.iter().map(|g| g.apply(&alt.theta)));
            let restricted = alt.theta.restrict(|v| self.svars.contains(&v));
            self.run(restricted, next);
            if self.stop {
                return;
            }
        }
    }

    fn alternative(
        &self,
        theta: &Substitution,
        eqs: Vec<(Term, Term)>,
        new_goals: impl FnOnce(&Substitution) -> Vec<Goal>,
    ) -> Option<Alternative> {
        let next = unify_under(theta, eqs).ok()?;
        let before = theta.len();
        let after = next.iter().filter(|(v, _)| self.svars.contains(v)).count();
        Some(Alternative {
            goals: new_goals(&next),
            cost: after.saturating_sub(before),
            theta: next,
        })
    }

    fn derive_alternatives(&mut self, theta: &Substitution, goal: &Goal, k: &[Term]) -> Vec<Alternative> {
        let t = &goal.term;
        let mut alts = Vec::new();
        for rule in &self.compositions {
            if rule.conclusion.symbol() != t.symbol() {
                continue;
            }
            let rule = rule.rename();
            let alt = self.alternative(theta, vec![(rule.conclusion.clone(), t.clone())], |th| {
                rule.premises
                    .iter()
                    .map(|p| goal.child(GoalKind::Derive, th.apply(p)))
                    .collect()
            });
            alts.extend(alt);
        }
        let subterms = self.entry(k).subterms.clone();
        for s in subterms {
            if s.symbol() != t.symbol() {
                continue;
            }
            let alt = self.alternative(theta, vec![(s.clone(), t.clone())], |th| {
                vec![goal.child(GoalKind::Analyze, th.apply(&s))]
            });
            alts.extend(alt);
        }
        alts
    }

    fn analyze_alternatives(&mut self, theta: &Substitution, goal: &Goal, k: &[Term]) -> Vec<Alternative> {
        let s = &goal.term;
        let mut alts = Vec::new();
        for m in k {
            if m != s && m.symbol() == s.symbol() {
                alts.extend(self.alternative(theta, vec![(m.clone(), s.clone())], |_| Vec::new()));
            }
        }
        let subterms = self.entry(k).subterms.clone();
        for (pi, rule) in &self.decompositions {
            let head = rule.premises[*pi].symbol();
            let candidates: Vec<&Term> = subterms
                .iter()
                .filter(|u| u.symbol() == head && *u != s && may_contain(u, s))
                .collect();
            if candidates.is_empty() {
                continue;
            }
            let rule = rule.rename();
            for u in candidates {
                let eqs = vec![
                    (rule.premises[*pi].clone(), u.clone()),
                    (rule.conclusion.clone(), s.clone()),
                ];
                let alt = self.alternative(theta, eqs, |th| {
                    let mut out = vec![goal.child(GoalKind::Analyze, th.apply(u))];
                    for (j, p) in rule.premises.iter().enumerate() {
                        if j != *pi {
                            out.push(goal.child(GoalKind::Derive, th.apply(p)));
                        }
                    }
                    out
                });
                alts.extend(alt);
            }
        }
        alts
    }
}

/// Cheap filter: some proper subterm of `u` could unify with `s`.
fn may_contain(u: &Term, s: &Term) -> bool {
    u.args().iter().any(|a| {
        a.is_var() || a.symbol() == s.symbol() || s.is_var() || may_contain(a, s)
    })
}
