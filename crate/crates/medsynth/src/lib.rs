//! Deducibility constraint solving with non-disclosure constraints, and
//! synthesis of mediator programs witnessing the solutions.

pub mod constraints;
pub mod deduction;
pub mod dsl;
pub mod orchestrator;
pub mod report;
pub mod terms;
pub mod solver;
pub mod unification;

pub use constraints::{Constraint, ConstraintKind, ConstraintSystem};
pub use deduction::{DeductionRule, DeductionSystem, Derivation, RuleKind, Step};
pub use terms::{Substitution, Symbol, Term};

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/terms.md")]
    mod terms {}
    #[doc = include_str!("../../../book/src/unification.md")]
    mod unification {}
    #[doc = include_str!("../../../book/src/deduction.md")]
    mod deduction {}
    #[doc = include_str!("../../../book/src/constraints.md")]
    mod constraints {}
    #[doc = include_str!("../../../book/src/solver.md")]
    mod solver {}
    #[doc = include_str!("../../../book/src/orchestration.md")]
    mod orchestration {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
