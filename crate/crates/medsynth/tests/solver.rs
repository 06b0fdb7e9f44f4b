mod common;

use common::system_and;
use medsynth::constraints::{check_compliant_proof, verify_solution};
use medsynth::solver::{
    enumerate_solutions, reduce_positive, solve, BlindChoice, Mode, Outcome, SolverConfig,
};
use medsynth::terms::{Substitution, Symbol, Term};

fn reference() -> SolverConfig {
    SolverConfig {
        mode: Mode::Reference,
        ..SolverConfig::default()
    }
}

fn both(items: &str) -> (Outcome, Outcome) {
    let (sys, s) = system_and(items);
    let red = solve(&sys, &s, &SolverConfig::default()).unwrap();
    let refm = solve(&sys, &s, &reference()).unwrap();
    for out in [&red, &refm] {
        if let Some(sol) = out.solution() {
            assert!(verify_solution(&sys, &s, &sol.substitution).unwrap().holds());
            let m = &sol.mediator;
            check_compliant_proof(&sys, &s, &sol.substitution, &m.derivation, &m.alpha).unwrap();
        }
    }
    (red, refm)
}

fn x() -> Symbol {
    Symbol::variable("X")
}

#[test]
fn forbid_before_send_then_receive() {
    let (sys, s) = system_and("# X; ! a; ? X;");
    let a = Substitution::from_bindings([(x(), Term::constant("a"))]).unwrap();
    let n = Substitution::from_bindings([(x(), Term::nonce("n"))]).unwrap();
    assert!(verify_solution(&sys, &s, &a).unwrap().holds());
    assert!(!verify_solution(&sys, &s, &n).unwrap().holds());
    let (red, refm) = both("# X; ! a; ? X;");
    assert!(red.is_sat() && refm.is_sat());
    // The blinded candidate blind(a, n) also meets the Forbid.
    let v = red.solution().unwrap().substitution.apply(&Term::leaf(x()));
    assert!(v.symbol().is_blinding() || v == Term::constant("a"), "{v}");
}

#[test]
fn guessed_atoms_include_the_constant() {
    let (sys, s) = system_and("# X; ! a; ? X;");
    let cfg = SolverConfig {
        guess_atoms: true,
        ..SolverConfig::default()
    };
    let (sols, complete) = enumerate_solutions(&sys, &s, &cfg).unwrap();
    assert!(complete);
    let a = Substitution::from_bindings([(x(), Term::constant("a"))]).unwrap();
    assert!(sols.contains(&a), "{sols:?}");
}

#[test]
fn receive_then_forbid_is_unsat() {
    let (red, refm) = both("? X; # X;");
    assert!(red.is_unsat(), "{}", red.label());
    assert!(refm.is_unsat(), "{}", refm.label());
}

#[test]
fn key_then_forbidden_plaintext_is_unsat() {
    let (red, refm) = both("? Y; ! senc(a,Y); # a;");
    assert!(red.is_unsat(), "{}", red.label());
    assert!(refm.is_unsat(), "{}", refm.label());
}

#[test]
fn key_then_received_plaintext_is_sat() {
    let (red, refm) = both("? Y; ! senc(a,Y); ? a;");
    for out in [red, refm] {
        let sol = out.solution().expect("SAT");
        let y = sol.substitution.apply(&Term::var("Y"));
        assert!(y.is_nonce(), "{y}");
        assert!(matches!(sol.assignment.choices[0].1, BlindChoice::FreshNonce(_)));
    }
}

#[test]
fn solved_forms_of_a_decryption() {
    let (sys, s) = system_and("! senc(a,k); ! k; ? X;");
    let cfg = SolverConfig {
        variable_guesses: true,
        ..SolverConfig::default()
    };
    let mut forms = Vec::new();
    let status = reduce_positive(&sys, &s, &cfg, |f| {
        forms.push(f);
        true
    });
    assert!(status.complete);
    assert!(forms.iter().any(|f| f.theta.is_empty() && f.free == vec![(x(), 2)]));
    let a = Substitution::from_bindings([(x(), Term::constant("a"))]).unwrap();
    assert!(forms.iter().any(|f| f.theta == a), "{forms:?}");
}

#[test]
fn solved_forms_of_a_single_receive() {
    let (sys, s) = system_and("? X;");
    let mut forms = Vec::new();
    reduce_positive(&sys, &s, &SolverConfig::default(), |f| {
        forms.push(f);
        true
    });
    assert_eq!(forms.len(), 1);
    assert_eq!(forms[0].free, vec![(x(), 0)]);
}

#[test]
fn solved_form_with_an_anchor() {
    let (sys, s) = system_and("! a; ? pair(a,Y);");
    let mut forms = Vec::new();
    reduce_positive(&sys, &s, &SolverConfig::default(), |f| {
        forms.push(f);
        true
    });
    assert!(forms
        .iter()
        .any(|f| f.free == vec![(Symbol::variable("Y"), 1)]), "{forms:?}");
}

#[test]
fn pairing_mediator() {
    let (sys, s) = system_and("! a; ! b; ? pair(a,b);");
    let out = solve(&sys, &s, &SolverConfig::default()).unwrap();
    let m = &out.solution().unwrap().mediator;
    let text: Vec<String> = m.derivation.steps.iter().map(|s| format!("{s:?}")).collect();
    assert_eq!(m.derivation.len(), 3, "{text:?}");
    assert_eq!(m.alpha, vec![1, 2]);
}

#[test]
fn fresh_nonce_mediator() {
    let (sys, s) = system_and("? nonce:n;");
    let out = solve(&sys, &s, &SolverConfig::default()).unwrap();
    let m = &out.solution().unwrap().mediator;
    assert_eq!(m.derivation.steps, vec![medsynth::Step::Fresh(Term::nonce("n"))]);
}
