#![allow(dead_code)]

use std::collections::HashSet;

use medsynth::deduction::DeductionSystem;
use medsynth::dsl::{parse_problem, Problem};
use medsynth::terms::{subterms_of, Symbol, Term};
use medsynth::ConstraintSystem;

/// The loan example's deduction system.
pub const DY: &str = "system DY { vars x y X Y Z;
  compose pair(x,y); compose senc(x,y); compose aenc(x,y);
  compose sig(x, priv(y)) from x, priv(y);
  decompose pair(x,y) -> x; decompose pair(x,y) -> y;
  decompose senc(x,y), y -> x; decompose aenc(x,y), priv(y) -> x;
  decompose sig(x,priv(y)), y -> x;
  decompose parent(x,y), x -> y; decompose parent(x,y), y -> x; }";

pub fn problem(items: &str) -> Problem {
    parse_problem(&format!("{DY}\nconstraints {{ {items} }}"))
        .unwrap_or_else(|e| panic!("{items}: {e}"))
}

pub fn system_and(items: &str) -> (DeductionSystem, ConstraintSystem) {
    let p = problem(items);
    let s = p.constraint_system();
    (p.system, s)
}

pub fn dy() -> DeductionSystem {
    parse_problem(&format!("{DY}\nconstraints {{ ! a; }}")).unwrap().system
}

/// Brute-force derivability: closes `K` plus the nonces of the universe
/// under every rule instance whose variables range over the universe
/// `Sub(K ∪ {t})` and whose conclusion stays in it.
pub fn bfs_derivable(sys: &DeductionSystem, k: &[Term], t: &Term) -> bool {
    let universe: Vec<Term> = subterms_of(k.iter().chain([t])).into_iter().collect();
    let mut known: HashSet<Term> = k.iter().cloned().collect();
    known.extend(universe.iter().filter(|u| u.is_nonce()).cloned());
    loop {
        let mut grew = false;
        for rule in sys.rules() {
            let vars: Vec<Symbol> = rule.vars().into_iter().collect();
            let mut choice = vec![0usize; vars.len()];
            'assignments: loop {
                let bind = |u: &Term| -> Term {
                    u.replace_all(&|x: Symbol| {
                        vars.iter()
                            .position(|v| *v == x)
                            .map(|i| universe[choice[i]].clone())
                    })
                };
                let conclusion = bind(&rule.conclusion);
                if universe.contains(&conclusion)
                    && !known.contains(&conclusion)
                    && rule.premises.iter().all(|p| known.contains(&bind(p)))
                {
                    known.insert(conclusion);
                    grew = true;
                }
                // Odometer over assignments.
                let mut d = 0;
                loop {
                    if d == choice.len() {
                        break 'assignments;
                    }
                    choice[d] += 1;
                    if choice[d] < universe.len() {
                        break;
                    }
                    choice[d] = 0;
                    d += 1;
                }
            }
        }
        if !grew {
            return known.contains(t);
        }
    }
}

/// Extension used by the oracle: simultaneous replacement of variables.
pub trait ReplaceVars {
    fn replace_all(&self, f: &dyn Fn(Symbol) -> Option<Term>) -> Term;
}

impl ReplaceVars for Term {
    fn replace_all(&self, f: &dyn Fn(Symbol) -> Option<Term>) -> Term {
        if let Some(x) = self.as_var() {
            return f(x).unwrap_or_else(|| self.clone());
        }
        if self.args().is_empty() {
            return self.clone();
        }
        Term::new(self.symbol(), self.args().iter().map(|a| a.replace_all(f)).collect())
    }
}

/// The regression corpus: `(name, constraints)` pairs.
pub fn corpus() -> Vec<(String, String)> {
    include_str!("../corpus/systems.txt")
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with("--"))
        .map(|l| {
            let (name, items) = l.split_once('|').expect("name | constraints");
            (name.trim().to_string(), items.trim().to_string())
        })
        .collect()
}
