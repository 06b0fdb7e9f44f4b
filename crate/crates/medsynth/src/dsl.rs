//! The problem file language.
//!
//! ```text
//! file        := section+
//! section     := system | strand | constraints | shared
//! system      := "system" ID "{" ("vars" ID+ ";")? rule* "}"
//! rule        := ("compose" term ("from" termlist)? | "decompose" termlist "->" term) ";"
//! strand      := "strand" ID "{" item* "}"
//! item        := ("!" | "?" | "#") term ";"
//! constraints := "constraints" "{" item* "}"
//! shared      := "shared" "vars" ID+ ";"
//! term        := ID ("(" termlist ")")? | "nonce:" ID
//! termlist    := term ("," term)*
//! ```
//!
//! `--` starts a comment. Identifiers declared in the system's `vars`
//! clause or in `shared vars` are variables; every other identifier is a
//! constant or function symbol. Strand variables are private to their
//! strand (renamed `Strand.X`) unless declared shared.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

use crate::constraints::{Constraint, ConstraintKind, ConstraintSystem};
use crate::deduction::{validate_system, DeductionSystem, RuleError, RuleKind, RuleSpec};
use crate::orchestrator::Strand;
use crate::terms::{Symbol, Term, BLINDING_NAME};

/// A source position, 1-based. Positions never take part in comparisons,
/// so a reparsed pretty-print compares equal to the original.
#[derive(Debug, Clone, Copy, Default)]
pub struct Span {
    pub line: usize,
    pub col: usize,
}

impl PartialEq for Span {
    fn eq(&self, _: &Span) -> bool {
        true
    }
}

impl Eq for Span {}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DslError {
    #[error("{span}: syntax error: {message}")]
    Syntax { span: Span, message: String },
    #[error("{span}: {name} is used with arity {found} but elsewhere with arity {expected}")]
    ArityClash {
        span: Span,
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("{span}: {name} is reserved")]
    Reserved { span: Span, name: String },
    #[error("{span}: {message}")]
    Structure { span: Span, message: String },
    #[error("invalid deduction system: {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    Rules(Vec<RuleError>),
}

fn syntax(span: Span, message: impl Into<String>) -> DslError {
    DslError::Syntax {
        span,
        message: message.into(),
    }
}

// ---------------------------------------------------------------- lexer

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Nonce(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Comma,
    Semi,
    Arrow,
    Bang,
    Question,
    Hash,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Nonce(s) => write!(f, "`nonce:{s}`"),
            Tok::LBrace => f.write_str("`{`"),
            Tok::RBrace => f.write_str("`}`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Semi => f.write_str("`;`"),
            Tok::Arrow => f.write_str("`->`"),
            Tok::Bang => f.write_str("`!`"),
            Tok::Question => f.write_str("`?`"),
            Tok::Hash => f.write_str("`#`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

/// Which identifiers the lexer accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dialect {
    /// Problem files: plain identifiers only.
    Source,
    /// Solver output: also generated names (`c#1`, `nonce:n#2`) and
    /// strand-qualified variables (`Clerk.X`).
    Output,
}

fn lex(text: &str, dialect: Dialect) -> Result<Vec<(Tok, Span)>, DslError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    let ident_char = |c: char| {
        c.is_ascii_alphanumeric() || c == '_' || (dialect == Dialect::Output && (c == '#' || c == '.'))
    };
    while i < chars.len() {
        let c = chars[i];
        let span = Span { line, col };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '-' && chars.get(i + 1) == Some(&'-') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && ident_char(chars[i]) {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            col += i - start;
            if word == "nonce" && chars.get(i) == Some(&':') {
                i += 1;
                col += 1;
                let start = i;
                if i < chars.len() && (chars[i].is_ascii_alphabetic() || chars[i] == '_') {
                    while i < chars.len() && ident_char(chars[i]) {
                        i += 1;
                    }
                }
                if start == i {
                    return Err(syntax(Span { line, col }, "expected an identifier after `nonce:`"));
                }
                col += i - start;
                out.push((Tok::Nonce(chars[start..i].iter().collect()), span));
            } else {
                out.push((Tok::Ident(word), span));
            }
            continue;
        }
        let tok = match c {
            '{' => Tok::LBrace,
            '}' => Tok::RBrace,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ',' => Tok::Comma,
            ';' => Tok::Semi,
            '!' => Tok::Bang,
            '?' => Tok::Question,
            '#' => Tok::Hash,
            '-' if chars.get(i + 1) == Some(&'>') => {
                i += 1;
                col += 1;
                Tok::Arrow
            }
            _ => return Err(syntax(span, format!("unexpected character `{c}`"))),
        };
        i += 1;
        col += 1;
        out.push((tok, span));
    }
    out.push((Tok::Eof, Span { line, col }));
    Ok(out)
}

// ---------------------------------------------------------------- AST

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AstTerm {
    App {
        name: String,
        args: Vec<AstTerm>,
        span: Span,
    },
    Nonce {
        name: String,
        span: Span,
    },
}

impl AstTerm {
    pub fn span(&self) -> Span {
        match self {
            AstTerm::App { span, .. } | AstTerm::Nonce { span, .. } => *span,
        }
    }
}

impl fmt::Display for AstTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AstTerm::Nonce { name, .. } => write!(f, "nonce:{name}"),
            AstTerm::App { name, args, .. } => {
                f.write_str(name)?;
                if !args.is_empty() {
                    f.write_str("(")?;
                    write_list(f, args, ",")?;
                    f.write_str(")")?;
                }
                Ok(())
            }
        }
    }
}

fn write_list(f: &mut fmt::Formatter<'_>, items: &[AstTerm], sep: &str) -> fmt::Result {
    for (i, t) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(sep)?;
        }
        write!(f, "{t}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AstRule {
    Compose {
        conclusion: AstTerm,
        from: Option<Vec<AstTerm>>,
        span: Span,
    },
    Decompose {
        premises: Vec<AstTerm>,
        conclusion: AstTerm,
        span: Span,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AstItem {
    pub kind: ConstraintKind,
    pub term: AstTerm,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Section {
    System {
        name: String,
        vars: Vec<String>,
        rules: Vec<AstRule>,
        span: Span,
    },
    Strand {
        name: String,
        items: Vec<AstItem>,
        span: Span,
    },
    Constraints {
        items: Vec<AstItem>,
        span: Span,
    },
    Shared {
        vars: Vec<String>,
        span: Span,
    },
}

/// A parsed problem file. Its `Display` is a canonical pretty-print that
/// parses back to an equal value.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ProblemFile {
    pub sections: Vec<Section>,
}

fn write_items(f: &mut fmt::Formatter<'_>, items: &[AstItem]) -> fmt::Result {
    for item in items {
        writeln!(f, "  {} {};", item.kind.sigil(), item.term)?;
    }
    Ok(())
}

impl fmt::Display for ProblemFile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, section) in self.sections.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            match section {
                Section::System { name, vars, rules, .. } => {
                    writeln!(f, "system {name} {{")?;
                    if !vars.is_empty() {
                        writeln!(f, "  vars {};", vars.join(" "))?;
                    }
                    for rule in rules {
                        match rule {
                            AstRule::Compose { conclusion, from, .. } => {
                                write!(f, "  compose {conclusion}")?;
                                if let Some(from) = from {
                                    f.write_str(" from ")?;
                                    write_list(f, from, ", ")?;
                                }
                                writeln!(f, ";")?;
                            }
                            AstRule::Decompose {
                                premises, conclusion, ..
                            } => {
                                f.write_str("  decompose ")?;
                                write_list(f, premises, ", ")?;
                                writeln!(f, " -> {conclusion};")?;
                            }
                        }
                    }
                    writeln!(f, "}}")?;
                }
                Section::Strand { name, items, .. } => {
                    writeln!(f, "strand {name} {{")?;
                    write_items(f, items)?;
                    writeln!(f, "}}")?;
                }
                Section::Constraints { items, .. } => {
                    writeln!(f, "constraints {{")?;
                    write_items(f, items)?;
                    writeln!(f, "}}")?;
                }
                Section::Shared { vars, .. } => writeln!(f, "shared vars {};", vars.join(" "))?,
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------- parser

struct Parser {
    toks: Vec<(Tok, Span)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn span(&self) -> Span {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, Span) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, what: &str) -> DslError {
        syntax(self.span(), format!("expected {what}, found {}", self.peek()))
    }

    fn expect(&mut self, tok: Tok) -> Result<Span, DslError> {
        if *self.peek() == tok {
            Ok(self.bump().1)
        } else {
            Err(self.unexpected(&tok.to_string()))
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<Span, DslError> {
        match self.peek() {
            Tok::Ident(s) if s == kw => Ok(self.bump().1),
            _ => Err(self.unexpected(&format!("`{kw}`"))),
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn ident(&mut self) -> Result<(String, Span), DslError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                let span = self.bump().1;
                Ok((s, span))
            }
            _ => Err(self.unexpected("an identifier")),
        }
    }

    fn idents_until_semi(&mut self) -> Result<Vec<String>, DslError> {
        let mut out = vec![self.ident()?.0];
        while let Tok::Ident(_) = self.peek() {
            out.push(self.ident()?.0);
        }
        self.expect(Tok::Semi)?;
        Ok(out)
    }

    fn term(&mut self) -> Result<AstTerm, DslError> {
        match self.peek().clone() {
            Tok::Nonce(name) => {
                let span = self.bump().1;
                Ok(AstTerm::Nonce { name, span })
            }
            Tok::Ident(name) => {
                let span = self.bump().1;
                let mut args = Vec::new();
                if *self.peek() == Tok::LParen {
                    self.bump();
                    args = self.termlist()?;
                    self.expect(Tok::RParen)?;
                }
                Ok(AstTerm::App { name, args, span })
            }
            _ => Err(self.unexpected("a term")),
        }
    }

    fn termlist(&mut self) -> Result<Vec<AstTerm>, DslError> {
        let mut out = vec![self.term()?];
        while *self.peek() == Tok::Comma {
            self.bump();
            out.push(self.term()?);
        }
        Ok(out)
    }

    fn items(&mut self) -> Result<Vec<AstItem>, DslError> {
        self.expect(Tok::LBrace)?;
        let mut items = Vec::new();
        loop {
            let kind = match self.peek() {
                Tok::Bang => ConstraintKind::Send,
                Tok::Question => ConstraintKind::Receive,
                Tok::Hash => ConstraintKind::Forbid,
                Tok::RBrace => break,
                _ => return Err(self.unexpected("`!`, `?`, `#` or `}`")),
            };
            self.bump();
            let term = self.term()?;
            self.expect(Tok::Semi)?;
            items.push(AstItem { kind, term });
        }
        self.expect(Tok::RBrace)?;
        Ok(items)
    }

    fn system(&mut self, span: Span) -> Result<Section, DslError> {
        let (name, _) = self.ident()?;
        self.expect(Tok::LBrace)?;
        let mut vars = Vec::new();
        if self.at_keyword("vars") {
            self.bump();
            vars = self.idents_until_semi()?;
        }
        let mut rules = Vec::new();
        loop {
            if *self.peek() == Tok::RBrace {
                self.bump();
                break;
            }
            let span = self.span();
            if self.at_keyword("compose") {
                self.bump();
                let conclusion = self.term()?;
                let from = if self.at_keyword("from") {
                    self.bump();
                    Some(self.termlist()?)
                } else {
                    None
                };
                self.expect(Tok::Semi)?;
                rules.push(AstRule::Compose { conclusion, from, span });
            } else if self.at_keyword("decompose") {
                self.bump();
                let premises = self.termlist()?;
                self.expect(Tok::Arrow)?;
                let conclusion = self.term()?;
                self.expect(Tok::Semi)?;
                rules.push(AstRule::Decompose {
                    premises,
                    conclusion,
                    span,
                });
            } else {
                return Err(self.unexpected("`compose`, `decompose` or `}`"));
            }
        }
        Ok(Section::System {
            name,
            vars,
            rules,
            span,
        })
    }

    fn file(&mut self) -> Result<ProblemFile, DslError> {
        let mut sections = Vec::new();
        loop {
            let span = self.span();
            let section = match self.peek() {
                Tok::Eof if !sections.is_empty() => break,
                Tok::Ident(kw) => match kw.as_str() {
                    "system" => {
                        self.bump();
                        self.system(span)?
                    }
                    "strand" => {
                        self.bump();
                        let (name, _) = self.ident()?;
                        let items = self.items()?;
                        Section::Strand { name, items, span }
                    }
                    "constraints" => {
                        self.bump();
                        let items = self.items()?;
                        Section::Constraints { items, span }
                    }
                    "shared" => {
                        self.bump();
                        self.keyword("vars")?;
                        let vars = self.idents_until_semi()?;
                        Section::Shared { vars, span }
                    }
                    _ => return Err(self.unexpected("a section")),
                },
                _ => return Err(self.unexpected("a section")),
            };
            sections.push(section);
        }
        Ok(ProblemFile { sections })
    }
}

/// Parses a problem file without interpreting it.
pub fn parse(text: &str) -> Result<ProblemFile, DslError> {
    let mut p = Parser {
        toks: lex(text, Dialect::Source)?,
        pos: 0,
    };
    p.file()
}

// ---------------------------------------------------------------- elaboration

/// An elaborated problem: a validated deduction system and the strands.
#[derive(Debug, Clone)]
pub struct Problem {
    pub system_name: String,
    pub system: DeductionSystem,
    /// The strands, or a single strand named `S` for a `constraints` section.
    pub strands: Vec<Strand>,
    /// True when the file has a `constraints` section rather than strands.
    pub single: bool,
    /// Variables of the system's `vars` clause.
    pub rule_vars: Vec<String>,
    /// Variables declared shared across strands.
    pub shared: Vec<String>,
}

impl Problem {
    /// The strands merged in file order; for a single system, the system.
    pub fn constraint_system(&self) -> ConstraintSystem {
        let mut out = ConstraintSystem::default();
        for s in &self.strands {
            for c in s.constraints.constraints() {
                out.push(c.clone());
            }
        }
        out
    }

    /// Arities of every symbol named in the file.
    pub fn signature(&self) -> &std::collections::BTreeSet<Symbol> {
        self.system.signature()
    }
}

/// Checks symbol usage and maps names to symbols.
#[derive(Default)]
struct Scope {
    arities: HashMap<String, (usize, Span)>,
    signature: BTreeSet<Symbol>,
}

impl Scope {
    fn note(&mut self, name: &str, arity: usize, span: Span) -> Result<(), DslError> {
        if name == BLINDING_NAME || name == "nonce" {
            return Err(DslError::Reserved {
                span,
                name: name.to_string(),
            });
        }
        match self.arities.get(name) {
            Some(&(expected, _)) if expected != arity => Err(DslError::ArityClash {
                span,
                name: name.to_string(),
                expected,
                found: arity,
            }),
            Some(_) => Ok(()),
            None => {
                self.arities.insert(name.to_string(), (arity, span));
                Ok(())
            }
        }
    }

    /// `vars` maps a declared variable name to the variable it denotes.
    fn term(&mut self, t: &AstTerm, vars: &dyn Fn(&str) -> Option<String>) -> Result<Term, DslError> {
        match t {
            AstTerm::Nonce { name, .. } => Ok(Term::nonce(name)),
            AstTerm::App { name, args, span } => {
                if let Some(var) = vars(name) {
                    if !args.is_empty() {
                        return Err(DslError::ArityClash {
                            span: *span,
                            name: name.clone(),
                            expected: 0,
                            found: args.len(),
                        });
                    }
                    self.note(name, 0, *span)?;
                    return Ok(Term::var(&var));
                }
                self.note(name, args.len(), *span)?;
                if args.is_empty() {
                    let c = Symbol::constant(name);
                    self.signature.insert(c);
                    return Ok(Term::leaf(c));
                }
                let args = args
                    .iter()
                    .map(|a| self.term(a, vars))
                    .collect::<Result<Vec<_>, _>>()?;
                let f = Symbol::function(name, args.len());
                self.signature.insert(f);
                Ok(Term::new(f, args))
            }
        }
    }
}

fn structure(span: Span, message: impl Into<String>) -> DslError {
    DslError::Structure {
        span,
        message: message.into(),
    }
}

/// Interprets a parsed file.
pub fn elaborate(file: &ProblemFile) -> Result<Problem, DslError> {
    let mut scope = Scope::default();
    let mut system = None;
    let mut shared: Vec<String> = Vec::new();
    for section in &file.sections {
        match section {
            Section::System {
                name,
                vars,
                rules,
                span,
            } => {
                if system.is_some() {
                    return Err(structure(*span, "a second system section"));
                }
                system = Some((name, vars, rules));
            }
            Section::Shared { vars, .. } => shared.extend(vars.iter().cloned()),
            _ => {}
        }
    }
    let Some((system_name, rule_vars, rules)) = system else {
        return Err(structure(Span { line: 1, col: 1 }, "no system section"));
    };
    let rule_scope = |n: &str| rule_vars.iter().any(|v| v == n).then(|| n.to_string());
    let mut specs = Vec::new();
    for rule in rules {
        let spec = match rule {
            AstRule::Compose { conclusion, from, .. } => {
                let conclusion = scope.term(conclusion, &rule_scope)?;
                let premises = match from {
                    Some(from) => from
                        .iter()
                        .map(|t| scope.term(t, &rule_scope))
                        .collect::<Result<Vec<_>, _>>()?,
                    None => conclusion.args().to_vec(),
                };
                RuleSpec {
                    premises,
                    conclusion,
                    declared: Some(RuleKind::Composition),
                }
            }
            AstRule::Decompose {
                premises, conclusion, ..
            } => RuleSpec {
                premises: premises
                    .iter()
                    .map(|t| scope.term(t, &rule_scope))
                    .collect::<Result<Vec<_>, _>>()?,
                conclusion: scope.term(conclusion, &rule_scope)?,
                declared: Some(RuleKind::Decomposition),
            },
        };
        specs.push(spec);
    }
    let mut strands = Vec::new();
    let mut single = None;
    let mut names = BTreeSet::new();
    for section in &file.sections {
        match section {
            Section::Strand { name, items, span } => {
                if !names.insert(name.clone()) {
                    return Err(structure(*span, format!("strand {name} is defined twice")));
                }
                let scoped = |n: &str| {
                    if shared.iter().any(|v| v == n) {
                        Some(n.to_string())
                    } else if rule_vars.iter().any(|v| v == n) {
                        Some(format!("{name}.{n}"))
                    } else {
                        None
                    }
                };
                strands.push(Strand {
                    name: name.clone(),
                    constraints: items_to_system(&mut scope, items, &scoped)?,
                });
            }
            Section::Constraints { items, span } => {
                if single.is_some() {
                    return Err(structure(*span, "a second constraints section"));
                }
                let plain = |n: &str| {
                    (shared.iter().any(|v| v == n) || rule_vars.iter().any(|v| v == n)).then(|| n.to_string())
                };
                single = Some((items_to_system(&mut scope, items, &plain)?, *span));
            }
            _ => {}
        }
    }
    let is_single = match (&single, strands.is_empty()) {
        (Some((_, span)), false) => {
            return Err(structure(*span, "a file has either strands or one constraints section"))
        }
        (None, true) => {
            return Err(structure(
                Span { line: 1, col: 1 },
                "no strand or constraints section",
            ))
        }
        (Some(_), true) => true,
        (None, false) => false,
    };
    if let Some((s, _)) = single {
        strands.push(Strand {
            name: "S".to_string(),
            constraints: s,
        });
    }
    let system = validate_system(specs, scope.signature.iter().copied()).map_err(DslError::Rules)?;
    Ok(Problem {
        system_name: system_name.clone(),
        system,
        strands,
        single: is_single,
        rule_vars: rule_vars.clone(),
        shared,
    })
}

fn items_to_system(
    scope: &mut Scope,
    items: &[AstItem],
    vars: &dyn Fn(&str) -> Option<String>,
) -> Result<ConstraintSystem, DslError> {
    let mut out = ConstraintSystem::default();
    for item in items {
        let payload = scope.term(&item.term, vars)?;
        out.push(Constraint {
            kind: item.kind,
            payload,
        });
    }
    Ok(out)
}

/// Parses and elaborates a problem file.
pub fn parse_problem(text: &str) -> Result<Problem, DslError> {
    elaborate(&parse(text)?)
}

/// Parses a term in the problem's syntax; `vars` lists the names to read
/// as variables. Function arities are checked against the system.
pub fn parse_term(text: &str, sys: &DeductionSystem, vars: &BTreeSet<String>) -> Result<Term, DslError> {
    term_in(text, Dialect::Source, sys, vars)
}

/// Parses a term as printed by the solver: generated nonces `nonce:n#k`,
/// generated constants `c#k`, the blinding symbol and qualified variable
/// names are accepted.
pub fn parse_output_term(text: &str, sys: &DeductionSystem, vars: &BTreeSet<String>) -> Result<Term, DslError> {
    term_in(text, Dialect::Output, sys, vars)
}

fn term_in(text: &str, dialect: Dialect, sys: &DeductionSystem, vars: &BTreeSet<String>) -> Result<Term, DslError> {
    let mut p = Parser {
        toks: lex(text, dialect)?,
        pos: 0,
    };
    let ast = p.term()?;
    if *p.peek() != Tok::Eof {
        return Err(p.unexpected("end of input"));
    }
    let mut arities: HashMap<String, usize> = HashMap::new();
    for s in sys.signature() {
        arities.insert(s.name(), s.arity());
    }
    build(&ast, dialect, &arities, vars)
}

fn generated(name: &str, prefix: &str) -> Option<u64> {
    name.strip_prefix(prefix)?.strip_prefix('#')?.parse().ok()
}

fn build(
    t: &AstTerm,
    dialect: Dialect,
    arities: &HashMap<String, usize>,
    vars: &BTreeSet<String>,
) -> Result<Term, DslError> {
    let output = dialect == Dialect::Output;
    match t {
        AstTerm::Nonce { name, span } => {
            if name.contains('#') || name.contains('.') {
                match generated(name, "n") {
                    Some(k) if output => Ok(Term::leaf(Symbol::generated_nonce(k))),
                    _ => Err(syntax(*span, format!("malformed nonce name {name}"))),
                }
            } else {
                Ok(Term::nonce(name))
            }
        }
        AstTerm::App { name, args, span } => {
            if vars.contains(name) && args.is_empty() {
                return Ok(Term::var(name));
            }
            if name.contains('#') {
                return match generated(name, "c") {
                    Some(k) if output && args.is_empty() => Ok(Term::leaf(Symbol::generated_constant(k))),
                    _ => Err(syntax(*span, format!("malformed generated name {name}"))),
                };
            }
            if name.contains('.') {
                return Err(syntax(*span, format!("unknown variable {name}")));
            }
            if name == BLINDING_NAME && !(output && args.len() == 2) || name == "nonce" {
                return Err(DslError::Reserved {
                    span: *span,
                    name: name.clone(),
                });
            }
            if let Some(&expected) = arities.get(name) {
                if expected != args.len() && name != BLINDING_NAME {
                    return Err(DslError::ArityClash {
                        span: *span,
                        name: name.clone(),
                        expected,
                        found: args.len(),
                    });
                }
            }
            let args = args
                .iter()
                .map(|a| build(a, dialect, arities, vars))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(if args.is_empty() {
                Term::constant(name)
            } else {
                Term::app(name, args)
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DY: &str = "system DY { vars x y;
      compose pair(x,y); compose senc(x,y); compose aenc(x,y);
      compose sig(x, priv(y)) from x, priv(y);
      decompose pair(x,y) -> x; decompose pair(x,y) -> y;
      decompose senc(x,y), y -> x; decompose aenc(x,y), priv(y) -> x;
      decompose sig(x,priv(y)), y -> x;
      decompose parent(x,y), x -> y; decompose parent(x,y), y -> x; }";

    #[test]
    fn parses_the_loan_system() {
        let text = format!("{DY}\nconstraints {{ ? X; }}");
        let problem = parse_problem(&text.replace("vars x y;", "vars x y X;")).unwrap();
        assert_eq!(problem.system.compositions().count(), 5);
        assert_eq!(problem.system.decompositions().count(), 7);
        assert!(problem.single);
        assert_eq!(problem.strands[0].constraints.to_string(), "[? X]");
    }

    #[test]
    fn single_composition() {
        let p = parse_problem("system DY { vars x y; compose pair(x,y); } constraints { ! a; }").unwrap();
        assert_eq!(p.system.rules().len(), 2); // with blinding
    }

    #[test]
    fn syntax_error_at_eof() {
        let err = parse("constraints { ? pair(a").unwrap_err();
        let DslError::Syntax { span, message } = err else {
            panic!("{err}")
        };
        assert_eq!((span.line, span.col), (1, 23));
        assert!(message.contains("end of input"), "{message}");
    }

    #[test]
    fn positions_are_reported() {
        let err = parse("system D {\n  compose pair(x,y)\n}").unwrap_err();
        assert_eq!(err.to_string(), "3:1: syntax error: expected `;`, found `}`");
    }

    #[test]
    fn reserved_and_arity() {
        let err = parse_problem("system D { } constraints { ! blind(a,b); }").unwrap_err();
        assert!(matches!(err, DslError::Reserved { .. }));
        let err = parse_problem("system D { } constraints { ! nonce; }").unwrap_err();
        assert!(matches!(err, DslError::Reserved { .. }));
        let err = parse_problem("system D { } constraints { ! f(a); ! f(a,b); }").unwrap_err();
        assert!(matches!(err, DslError::ArityClash { expected: 1, found: 2, .. }));
        let err = parse_problem("system D { vars x; } constraints { ? x(a); }").unwrap_err();
        assert!(matches!(err, DslError::ArityClash { .. }));
    }

    #[test]
    fn strand_variables_are_private_unless_shared() {
        let p = parse_problem(
            "system D { vars X Y; } shared vars Y;
             strand A { ? pair(X,Y); } strand B { ? pair(X,Y); }",
        )
        .unwrap();
        assert_eq!(p.strands[0].constraints.to_string(), "[? pair(A.X,Y)]");
        assert_eq!(p.strands[1].constraints.to_string(), "[? pair(B.X,Y)]");
        assert!(!p.single);
    }

    #[test]
    fn round_trip() {
        let text = format!("{DY}\n-- a comment\nshared vars A;\nstrand C {{ ! nonce:k; ? A; # senc(A, nonce:k); }}");
        let file = parse(&text).unwrap();
        let printed = file.to_string();
        assert_eq!(parse(&printed).unwrap(), file);
        assert_eq!(parse(&printed).unwrap().to_string(), printed);
    }

    #[test]
    fn output_terms() {
        let p = parse_problem(&format!("{DY} constraints {{ ! a; }}")).unwrap();
        let vars = BTreeSet::new();
        let t = parse_output_term("blind(pair(a,c#2),nonce:n#1)", &p.system, &vars).unwrap();
        assert_eq!(t.to_string(), "blind(pair(a,c#2),nonce:n#1)");
        assert!(t.symbol().is_blinding());
        assert!(parse_term("blind(a,b)", &p.system, &vars).is_err());
        assert!(parse_term("c#2", &p.system, &vars).is_err());
        assert!(parse_output_term("pair(a)", &p.system, &vars).is_err());
    }
}
