//! First-order terms over a user-declared signature.
//!
//! Terms are hash-consed: two structurally equal terms always share the same
//! allocation, so equality and hashing are O(1) and a set of subterms is a
//! set of pointers. The DAG size of a term collection is the number of its
//! distinct subterms.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::hash::{BuildHasher, Hash, Hasher};
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};
use std::sync::{Arc, LazyLock, Mutex, RwLock, Weak};

use indexmap::IndexSet;
use thiserror::Error;

/// Name of the reserved binary blinding symbol.
pub const BLINDING_NAME: &str = "blind";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TermError {
    #[error("substitution is not idempotent: {var} occurs in the image")]
    NotIdempotent { var: String },
    #[error("{0} is not a variable")]
    NotAVariable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SymbolKind {
    Function,
    Constant,
    Nonce,
    Variable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Name {
    Interned(u32),
    Generated(u64),
}

#[derive(Default)]
struct NameTable {
    names: Vec<Arc<str>>,
    ids: HashMap<Arc<str>, u32>,
}

static NAMES: LazyLock<RwLock<NameTable>> = LazyLock::new(Default::default);
static FRESH: AtomicU64 = AtomicU64::new(1);

fn intern_name(name: &str) -> u32 {
    if let Some(&id) = NAMES.read().unwrap().ids.get(name) {
        return id;
    }
    let mut table = NAMES.write().unwrap();
    if let Some(&id) = table.ids.get(name) {
        return id;
    }
    let id = table.names.len() as u32;
    let name: Arc<str> = Arc::from(name);
    table.names.push(name.clone());
    table.ids.insert(name, id);
    id
}

/// A function symbol, constant, nonce-constant or variable.
///
/// Generated symbols (fresh variables, the solver's nonces `n#k` and
/// constants `c#k`) live in a namespace that no parsed identifier can reach.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Symbol {
    kind: SymbolKind,
    name: Name,
    arity: u32,
}

impl Symbol {
    fn named(kind: SymbolKind, name: &str, arity: u32) -> Symbol {
        Symbol {
            kind,
            name: Name::Interned(intern_name(name)),
            arity,
        }
    }

    pub fn function(name: &str, arity: usize) -> Symbol {
        assert!(arity >= 1, "function symbols have positive arity");
        Symbol::named(SymbolKind::Function, name, arity as u32)
    }

    pub fn constant(name: &str) -> Symbol {
        Symbol::named(SymbolKind::Constant, name, 0)
    }

    pub fn nonce(name: &str) -> Symbol {
        Symbol::named(SymbolKind::Nonce, name, 0)
    }

    pub fn variable(name: &str) -> Symbol {
        Symbol::named(SymbolKind::Variable, name, 0)
    }

    /// A variable that cannot collide with any user variable.
    pub fn fresh_variable() -> Symbol {
        Symbol {
            kind: SymbolKind::Variable,
            name: Name::Generated(FRESH.fetch_add(1, AtomicOrdering::Relaxed)),
            arity: 0,
        }
    }

    /// The `k`-th generated nonce, printed `nonce:n#k`.
    pub fn generated_nonce(k: u64) -> Symbol {
        Symbol {
            kind: SymbolKind::Nonce,
            name: Name::Generated(k),
            arity: 0,
        }
    }

    /// The `k`-th generated non-nonce constant, printed `c#k`.
    pub fn generated_constant(k: u64) -> Symbol {
        Symbol {
            kind: SymbolKind::Constant,
            name: Name::Generated(k),
            arity: 0,
        }
    }

    pub fn blinding() -> Symbol {
        Symbol::function(BLINDING_NAME, 2)
    }

    pub fn kind(self) -> SymbolKind {
        self.kind
    }

    pub fn arity(self) -> usize {
        self.arity as usize
    }

    pub fn is_variable(self) -> bool {
        self.kind == SymbolKind::Variable
    }

    pub fn is_nonce(self) -> bool {
        self.kind == SymbolKind::Nonce
    }

    pub fn is_generated(self) -> bool {
        matches!(self.name, Name::Generated(_))
    }

    pub fn is_blinding(self) -> bool {
        self == Symbol::blinding()
    }

    /// Counter of a generated symbol.
    pub fn generation(self) -> Option<u64> {
        match self.name {
            Name::Generated(k) => Some(k),
            Name::Interned(_) => None,
        }
    }

    /// The bare name, without the `nonce:` prefix.
    pub fn name(self) -> String {
        match self.name {
            Name::Interned(id) => NAMES.read().unwrap().names[id as usize].to_string(),
            Name::Generated(k) => {
                let prefix = match self.kind {
                    SymbolKind::Variable => "x",
                    SymbolKind::Nonce => "n",
                    SymbolKind::Constant => "c",
                    SymbolKind::Function => "f",
                };
                format!("{prefix}#{k}")
            }
        }
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_nonce() {
            write!(f, "nonce:{}", self.name())
        } else {
            f.write_str(&self.name())
        }
    }
}

impl fmt::Debug for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}/{}", self.arity)
    }
}

struct Node {
    symbol: Symbol,
    args: Box<[Term]>,
    id: u64,
    hash: u64,
    ground: bool,
}

type InternKey = (Symbol, Box<[u64]>);

const SHARDS: usize = 32;

static INTERNER: LazyLock<Vec<Mutex<HashMap<InternKey, Weak<Node>>>>> =
    LazyLock::new(|| (0..SHARDS).map(|_| Mutex::new(HashMap::new())).collect());
static NODE_IDS: AtomicU64 = AtomicU64::new(1);
static HASH_STATE: LazyLock<std::hash::RandomState> = LazyLock::new(Default::default);

impl Drop for Node {
    fn drop(&mut self) {
        let key: InternKey = (self.symbol, self.args.iter().map(|a| a.0.id).collect());
        let mut shard = INTERNER[self.hash as usize % SHARDS].lock().unwrap();
        if shard.get(&key).is_some_and(|w| w.strong_count() == 0) {
            shard.remove(&key);
        }
    }
}

/// An immutable, hash-consed first-order term.
#[derive(Clone)]
pub struct Term(Arc<Node>);

impl Term {
    /// Builds `symbol(args)`. Panics when the argument count differs from the arity.
    pub fn new(symbol: Symbol, args: Vec<Term>) -> Term {
        assert_eq!(
            symbol.arity(),
            args.len(),
            "arity mismatch for {symbol}"
        );
        let mut hasher = HASH_STATE.build_hasher();
        symbol.hash(&mut hasher);
        for a in &args {
            hasher.write_u64(a.0.hash);
        }
        let hash = hasher.finish();
        let key: InternKey = (symbol, args.iter().map(|a| a.0.id).collect());
        let mut shard = INTERNER[hash as usize % SHARDS].lock().unwrap();
        if let Some(node) = shard.get(&key).and_then(Weak::upgrade) {
            return Term(node);
        }
        let ground = !symbol.is_variable() && args.iter().all(Term::is_ground);
        let node = Arc::new(Node {
            symbol,
            args: args.into_boxed_slice(),
            id: NODE_IDS.fetch_add(1, AtomicOrdering::Relaxed),
            hash,
            ground,
        });
        shard.insert(key, Arc::downgrade(&node));
        Term(node)
    }

    pub fn leaf(symbol: Symbol) -> Term {
        Term::new(symbol, Vec::new())
    }

    pub fn var(name: &str) -> Term {
        Term::leaf(Symbol::variable(name))
    }

    pub fn constant(name: &str) -> Term {
        Term::leaf(Symbol::constant(name))
    }

    pub fn nonce(name: &str) -> Term {
        Term::leaf(Symbol::nonce(name))
    }

    pub fn app(name: &str, args: Vec<Term>) -> Term {
        Term::new(Symbol::function(name, args.len()), args)
    }

    pub fn blind(anchor: Term, nonce: Term) -> Term {
        Term::new(Symbol::blinding(), vec![anchor, nonce])
    }

    pub fn symbol(&self) -> Symbol {
        self.0.symbol
    }

    pub fn args(&self) -> &[Term] {
        &self.0.args
    }

    pub fn is_var(&self) -> bool {
        self.0.symbol.is_variable()
    }

    pub fn as_var(&self) -> Option<Symbol> {
        self.is_var().then_some(self.0.symbol)
    }

    pub fn is_nonce(&self) -> bool {
        self.0.symbol.is_nonce()
    }

    pub fn is_ground(&self) -> bool {
        self.0.ground
    }

    /// Process-unique identifier of the shared node.
    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn vars(&self) -> BTreeSet<Symbol> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<Symbol>) {
        if self.is_ground() {
            return;
        }
        if self.is_var() {
            out.insert(self.symbol());
        }
        for a in self.args() {
            a.collect_vars(out);
        }
    }

    /// `Sub(t)`, in pre-order of first occurrence.
    pub fn subterms(&self) -> IndexSet<Term> {
        let mut out = IndexSet::new();
        self.collect_subterms(&mut out);
        out
    }

    pub fn collect_subterms(&self, out: &mut IndexSet<Term>) {
        if !out.insert(self.clone()) {
            return;
        }
        for a in self.args() {
            a.collect_subterms(out);
        }
    }

    /// Whether `q` occurs in `self` (including `self == q`).
    pub fn contains(&self, q: &Term) -> bool {
        if self == q {
            return true;
        }
        if q.0.symbol.is_variable() && self.is_ground() {
            return false;
        }
        self.args().iter().any(|a| a.contains(q))
    }

    /// Number of nodes of the tree unfolding, saturating.
    pub fn tree_size(&self) -> u64 {
        self.args()
            .iter()
            .fold(1u64, |acc, a| acc.saturating_add(a.tree_size()))
    }

    /// Simultaneously replaces every occurrence of `q` by `p`.
    pub fn replace(&self, q: &Term, p: &Term) -> Term {
        if self == q {
            return p.clone();
        }
        if self.args().is_empty() {
            return self.clone();
        }
        self.map_args(|a| a.replace(q, p))
    }

    fn map_args(&self, mut f: impl FnMut(&Term) -> Term) -> Term {
        let mut changed = false;
        let args: Vec<Term> = self
            .args()
            .iter()
            .map(|a| {
                let b = f(a);
                changed |= &b != a;
                b
            })
            .collect();
        if changed {
            Term::new(self.symbol(), args)
        } else {
            self.clone()
        }
    }
}

impl PartialEq for Term {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }
}

impl Eq for Term {}

impl Hash for Term {
    fn hash<H: Hasher>(&self, state: &mut H) {
        state.write_u64(self.0.hash);
    }
}

impl Ord for Term {
    fn cmp(&self, other: &Self) -> Ordering {
        if self == other {
            return Ordering::Equal;
        }
        self.symbol()
            .cmp(&other.symbol())
            .then_with(|| self.args().cmp(other.args()))
    }
}

impl PartialOrd for Term {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())?;
        if !self.args().is_empty() {
            f.write_str("(")?;
            for (i, a) in self.args().iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{a}")?;
            }
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// `Sub(T)` for a collection of terms.
pub fn subterms_of<'a>(terms: impl IntoIterator<Item = &'a Term>) -> IndexSet<Term> {
    let mut out = IndexSet::new();
    for t in terms {
        t.collect_subterms(&mut out);
    }
    out
}

pub fn vars_of<'a>(terms: impl IntoIterator<Item = &'a Term>) -> BTreeSet<Symbol> {
    let mut out = BTreeSet::new();
    for t in terms {
        t.collect_vars(&mut out);
    }
    out
}

/// DAG size: the number of distinct subterms.
pub fn dag_size<'a>(terms: impl IntoIterator<Item = &'a Term>) -> usize {
    subterms_of(terms).len()
}

/// An idempotent substitution, kept in canonical (sorted) order.
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct Substitution {
    map: BTreeMap<Symbol, Term>,
}

impl Substitution {
    pub fn new() -> Substitution {
        Substitution::default()
    }

    /// Builds a substitution from bindings, dropping identity bindings and
    /// rejecting non-idempotent inputs.
    pub fn from_bindings(
        bindings: impl IntoIterator<Item = (Symbol, Term)>,
    ) -> Result<Substitution, TermError> {
        let mut map = BTreeMap::new();
        for (v, t) in bindings {
            if !v.is_variable() {
                return Err(TermError::NotAVariable(v.to_string()));
            }
            if t.as_var() != Some(v) {
                map.insert(v, t);
            }
        }
        let s = Substitution { map };
        s.check_idempotent()?;
        Ok(s)
    }

    /// Caller guarantees idempotence and non-trivial bindings.
    pub(crate) fn from_map_unchecked(map: BTreeMap<Symbol, Term>) -> Substitution {
        let s = Substitution { map };
        debug_assert!(s.is_idempotent());
        s
    }

    fn check_idempotent(&self) -> Result<(), TermError> {
        for t in self.map.values() {
            if let Some(v) = t.vars().into_iter().find(|v| self.map.contains_key(v)) {
                return Err(TermError::NotIdempotent { var: v.to_string() });
            }
        }
        Ok(())
    }

    pub fn is_idempotent(&self) -> bool {
        self.check_idempotent().is_ok()
    }

    pub fn get(&self, var: Symbol) -> Option<&Term> {
        self.map.get(&var)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Symbol, &Term)> {
        self.map.iter().map(|(v, t)| (*v, t))
    }

    pub fn domain(&self) -> BTreeSet<Symbol> {
        self.map.keys().copied().collect()
    }

    pub fn image(&self) -> impl Iterator<Item = &Term> {
        self.map.values()
    }

    pub fn is_ground(&self) -> bool {
        self.map.values().all(Term::is_ground)
    }

    /// `tσ`.
    pub fn apply(&self, t: &Term) -> Term {
        if self.map.is_empty() || t.is_ground() {
            return t.clone();
        }
        if let Some(v) = t.as_var() {
            return self.map.get(&v).cloned().unwrap_or_else(|| t.clone());
        }
        t.map_args(|a| self.apply(a))
    }

    /// `σδ`: `x(σδ) = (xσ)δ`.
    pub fn compose(&self, other: &Substitution) -> Result<Substitution, TermError> {
        let mut map = BTreeMap::new();
        for (v, t) in &self.map {
            let t = other.apply(t);
            if t.as_var() != Some(*v) {
                map.insert(*v, t);
            }
        }
        for (v, t) in &other.map {
            if !self.map.contains_key(v) {
                map.insert(*v, t.clone());
            }
        }
        let s = Substitution { map };
        s.check_idempotent()?;
        Ok(s)
    }

    pub fn restrict(&self, keep: impl Fn(Symbol) -> bool) -> Substitution {
        Substitution {
            map: self
                .map
                .iter()
                .filter(|(v, _)| keep(**v))
                .map(|(v, t)| (*v, t.clone()))
                .collect(),
        }
    }

    /// True iff no two distinct terms of `terms` collapse under `self`.
    pub fn is_injective_on<'a>(&self, terms: impl IntoIterator<Item = &'a Term>) -> bool {
        let mut seen: HashMap<Term, Term> = HashMap::new();
        for t in terms {
            let image = self.apply(t);
            match seen.get(&image) {
                Some(prev) if prev != t => return false,
                _ => {
                    seen.insert(image, t.clone());
                }
            }
        }
        true
    }

    /// Pointwise replacement `σ[q ← p]`.
    pub fn replace(&self, q: &Term, p: &Term) -> Substitution {
        Substitution {
            map: self
                .map
                .iter()
                .map(|(v, t)| (*v, t.replace(q, p)))
                .collect(),
        }
    }

    /// DAG size of the image.
    pub fn dag_size(&self) -> usize {
        dag_size(self.map.values())
    }
}

impl fmt::Display for Substitution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (v, t)) in self.map.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{v} ↦ {t}")?;
        }
        f.write_str("}")
    }
}

impl fmt::Debug for Substitution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a() -> Term {
        Term::constant("a")
    }
    fn b() -> Term {
        Term::constant("b")
    }
    fn x() -> Term {
        Term::var("x")
    }
    fn y() -> Term {
        Term::var("y")
    }
    fn pair(l: Term, r: Term) -> Term {
        Term::app("pair", vec![l, r])
    }
    fn senc(m: Term, k: Term) -> Term {
        Term::app("senc", vec![m, k])
    }
    fn subst(pairs: &[(&str, Term)]) -> Substitution {
        Substitution::from_bindings(pairs.iter().map(|(v, t)| (Symbol::variable(v), t.clone())))
            .unwrap()
    }
    fn set(ts: &[Term]) -> BTreeSet<Term> {
        ts.iter().cloned().collect()
    }

    #[test]
    fn hash_consing_shares_nodes() {
        let t1 = pair(a(), senc(x(), b()));
        let t2 = pair(a(), senc(x(), b()));
        assert_eq!(t1, t2);
        assert_eq!(t1.id(), t2.id());
        assert_ne!(t1, pair(b(), senc(x(), b())));
    }

    #[test]
    fn subterm_examples() {
        assert_eq!(set(&a().subterms().into_iter().collect::<Vec<_>>()), set(&[a()]));
        let p = pair(a(), b());
        assert_eq!(
            p.subterms().into_iter().collect::<BTreeSet<_>>(),
            set(&[p.clone(), a(), b()])
        );
        let k = Term::constant("k");
        let t = senc(pair(x(), a()), k.clone());
        assert_eq!(
            t.subterms().into_iter().collect::<BTreeSet<_>>(),
            set(&[t.clone(), pair(x(), a()), x(), a(), k])
        );
    }

    #[test]
    fn apply_examples() {
        let s = subst(&[("x", a())]);
        assert_eq!(s.apply(&pair(x(), x())), pair(a(), a()));
        let t = senc(pair(x(), y()), b());
        assert_eq!(Substitution::new().apply(&t), t);
        assert_eq!(s.apply(&y()), y());
    }

    #[test]
    fn compose_examples() {
        let s = subst(&[("x", y())]);
        let d = subst(&[("y", a())]);
        assert_eq!(s.compose(&d).unwrap(), subst(&[("x", a()), ("y", a())]));
        assert_eq!(Substitution::new().compose(&d).unwrap(), d);
        let s = subst(&[("x", a())]);
        let d = subst(&[("y", b())]);
        assert_eq!(s.compose(&d).unwrap(), subst(&[("x", a()), ("y", b())]));
    }

    #[test]
    fn compose_reports_non_idempotent_result() {
        let s = subst(&[("x", y())]);
        let d = subst(&[("y", pair(x(), a()))]);
        assert!(matches!(
            s.compose(&d),
            Err(TermError::NotIdempotent { .. })
        ));
        assert!(Substitution::from_bindings([(Symbol::variable("x"), pair(x(), a()))]).is_err());
    }

    #[test]
    fn replace_examples() {
        assert_eq!(pair(a(), a()).replace(&a(), &b()), pair(b(), b()));
        assert_eq!(a().replace(&b(), &Term::constant("c")), a());
        let k = Term::constant("k");
        let n = Term::nonce("n");
        assert_eq!(
            pair(senc(a(), k.clone()), a()).replace(&a(), &n),
            pair(senc(n.clone(), k), n)
        );
    }

    #[test]
    fn injectivity_examples() {
        let s = subst(&[("x", a())]);
        assert!(!s.is_injective_on(&[x(), a()]));
        let s = subst(&[("x", Term::nonce("n1")), ("y", Term::nonce("n2"))]);
        assert!(s.is_injective_on(&[x(), y(), pair(x(), y())]));
        assert!(Substitution::new().is_injective_on(&[x(), a(), pair(x(), a())]));
    }

    #[test]
    fn generated_names_do_not_collide_with_parsed_ones() {
        let g = Symbol::generated_nonce(1);
        assert_eq!(g.to_string(), "nonce:n#1");
        assert_ne!(g, Symbol::nonce("n#1"));
        assert_eq!(Symbol::generated_constant(2).to_string(), "c#2");
        assert_ne!(Symbol::fresh_variable(), Symbol::fresh_variable());
    }

    #[test]
    fn display_uses_dsl_syntax() {
        let t = Term::blind(senc(a(), Term::constant("k")), Term::nonce("n1"));
        assert_eq!(t.to_string(), "blind(senc(a,k),nonce:n1)");
    }
}
