//! Concrete syntax: tokenizer, recursive-descent parser, pretty-printer and
//! desugaring of derived notations.

mod desugar;
mod lexer;
mod macros;
mod pretty;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::ast::{bits_to_string, Angle, Bound, CTerm, CmpOp, Formula, Gate, QTerm, QuantKind, Qtc, Span};

pub use desugar::{desugar, is_desugared};
pub use macros::{alpha_rename, simplify_qterm, substitute};
pub use pretty::{pretty, pretty_cterm, pretty_qterm};

use lexer::{Tok, Token};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiagnosticKind {
    Lexical,
    Syntax,
    Arity,
    UnknownPredicate,
    Pragma,
}

#[derive(Clone, Debug, Error, PartialEq)]
#[error("{span}: {message}")]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub message: String,
    pub span: Span,
}

/// A named formula `NAME(first params : second params)`.
#[derive(Clone, Debug)]
pub struct Definition {
    pub name: String,
    pub first_params: Vec<String>,
    pub second_params: Vec<String>,
    pub has_colon: bool,
    pub body: Formula,
    pub source: String,
}

impl Definition {
    pub fn params(&self) -> impl Iterator<Item = &String> {
        self.first_params.iter().chain(&self.second_params)
    }
}

/// Named formulas available for expansion during parsing.
#[derive(Clone, Debug, Default)]
pub struct Library {
    defs: BTreeMap<String, Definition>,
    order: Vec<String>,
}

impl Library {
    pub fn new() -> Library {
        Library::default()
    }
    pub fn insert(&mut self, def: Definition) {
        if !self.defs.contains_key(&def.name) {
            self.order.push(def.name.clone());
        }
        self.defs.insert(def.name.clone(), def);
    }
    pub fn get(&self, name: &str) -> Option<&Definition> {
        self.defs.get(name)
    }
    pub fn names(&self) -> &[String] {
        &self.order
    }
}

/// A parsed source file: pragmas, definitions and at most one formula.
#[derive(Clone, Debug, Default)]
pub struct Document {
    pub n: Option<u64>,
    pub wire_cap: Option<usize>,
    pub defs: Vec<Definition>,
    pub formula: Option<Formula>,
}

/// Parses one formula, expanding names from the standard library.
pub fn parse_formula(src: &str) -> Result<Formula, Vec<Diagnostic>> {
    parse_formula_with(src, crate::stdlib::library())
}

pub fn parse_formula_with(src: &str, lib: &Library) -> Result<Formula, Vec<Diagnostic>> {
    let doc = parse_document_with(src, lib)?;
    if !doc.defs.is_empty() {
        return Err(vec![Diagnostic {
            kind: DiagnosticKind::Pragma,
            message: "definitions are not allowed in a formula".into(),
            span: Span::default(),
        }]);
    }
    doc.formula.ok_or_else(|| {
        vec![Diagnostic {
            kind: DiagnosticKind::Syntax,
            message: "empty input".into(),
            span: Span::default(),
        }]
    })
}

pub fn parse_document(src: &str) -> Result<Document, Vec<Diagnostic>> {
    parse_document_with(src, crate::stdlib::library())
}

/// Parses a document. Each `@def` is added to a local copy of `lib` so later
/// definitions and the main formula may use it.
pub fn parse_document_with(src: &str, lib: &Library) -> Result<Document, Vec<Diagnostic>> {
    let toks = lexer::lex(src).map_err(|d| vec![d])?;
    let mut lib = lib.clone();
    let mut p = Parser::new(src, toks);
    let mut doc = Document::default();
    loop {
        match p.peek().clone() {
            Tok::Eof => break,
            Tok::At => {
                p.bump();
                let (name, span) = p.ident().map_err(|d| vec![d])?;
                match name.as_str() {
                    "n" => {
                        p.expect(Tok::Eq).map_err(|d| vec![d])?;
                        doc.n = Some(p.number().map_err(|d| vec![d])?);
                    }
                    "wire_cap" => {
                        p.expect(Tok::Eq).map_err(|d| vec![d])?;
                        doc.wire_cap = Some(p.number().map_err(|d| vec![d])? as usize);
                    }
                    "def" => {
                        let def = p.definition(&lib).map_err(|d| vec![d])?;
                        lib.insert(def.clone());
                        doc.defs.push(def);
                    }
                    other => {
                        return Err(vec![Diagnostic {
                            kind: DiagnosticKind::Pragma,
                            message: format!("unknown pragma `@{other}`"),
                            span,
                        }])
                    }
                }
            }
            _ => {
                if doc.formula.is_some() {
                    return Err(vec![p.error("only one formula per document")]);
                }
                let f = p.formula(&lib).map_err(|d| vec![p.best_error(d)])?;
                if !matches!(p.peek(), Tok::Eof | Tok::At) {
                    let d = p.error(&format!("unexpected {}", describe(p.peek())));
                    return Err(vec![p.best_error(d)]);
                }
                doc.formula = Some(alpha_rename(&f));
            }
        }
    }
    Ok(doc)
}

/// Parses a quantum term on its own; free identifiers are quantum variables.
pub fn parse_qterm(src: &str) -> Result<QTerm, Vec<Diagnostic>> {
    let toks = lexer::lex(src).map_err(|d| vec![d])?;
    let mut p = Parser::new(src, toks);
    let t = p.qterm().map_err(|d| vec![d])?;
    if !matches!(p.peek(), Tok::Eof) {
        return Err(vec![p.error("trailing input after term")]);
    }
    Ok(t)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Classical,
    Quantum,
    Functional,
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("identifier `{s}`"),
        Tok::Digits(s) => format!("number `{s}`"),
        Tok::Decimal(d) => format!("number `{d}`"),
        Tok::Eof => "end of input".into(),
        other => format!("token {other:?}"),
    }
}

const KEYWORDS: &[&str] = &[
    "E", "A", "EQ", "AQ", "EQF", "X", "QTC", "n", "ilog", "suc", "pi", "Q", "P_I", "P_ROT",
];

struct Parser<'s> {
    src: &'s str,
    toks: Vec<Token>,
    pos: usize,
    scope: Vec<(String, Kind)>,
    used: BTreeSet<String>,
    furthest: Option<Diagnostic>,
}

type PResult<T> = Result<T, Diagnostic>;

impl<'s> Parser<'s> {
    fn new(src: &'s str, toks: Vec<Token>) -> Parser<'s> {
        let used = toks
            .iter()
            .filter_map(|t| match &t.tok {
                Tok::Ident(s) => Some(s.clone()),
                _ => None,
            })
            .collect();
        Parser {
            src,
            toks,
            pos: 0,
            scope: Vec::new(),
            used,
            furthest: None,
        }
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos.min(self.toks.len() - 1)].tok
    }
    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }
    fn span(&self) -> Span {
        self.toks[self.pos.min(self.toks.len() - 1)].span
    }
    fn prev_span(&self) -> Span {
        self.toks[self.pos.saturating_sub(1).min(self.toks.len() - 1)].span
    }
    fn bump(&mut self) -> Tok {
        let t = self.peek().clone();
        self.pos += 1;
        t
    }
    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.bump();
            true
        } else {
            false
        }
    }

    fn error(&self, msg: &str) -> Diagnostic {
        Diagnostic {
            kind: DiagnosticKind::Syntax,
            message: msg.to_string(),
            span: self.span(),
        }
    }

    fn record(&mut self, d: &Diagnostic) {
        let better = match &self.furthest {
            None => true,
            Some(f) => d.span.start > f.span.start,
        };
        if better {
            self.furthest = Some(d.clone());
        }
    }

    /// The diagnostic that got furthest into the input across all attempts.
    fn best_error(&mut self, d: Diagnostic) -> Diagnostic {
        self.record(&d);
        if d.kind != DiagnosticKind::Syntax {
            return d;
        }
        self.furthest.clone().unwrap_or(d)
    }

    fn expect(&mut self, t: Tok) -> PResult<()> {
        if self.eat(&t) {
            Ok(())
        } else {
            Err(self.error(&format!("expected {}, found {}", describe(&t), describe(self.peek()))))
        }
    }

    fn ident(&mut self) -> PResult<(String, Span)> {
        let span = self.span();
        match self.bump() {
            Tok::Ident(s) => Ok((s, span)),
            other => {
                self.pos -= 1;
                Err(self.error(&format!("expected identifier, found {}", describe(&other))))
            }
        }
    }

    fn binder(&mut self) -> PResult<String> {
        let (name, span) = self.ident()?;
        if KEYWORDS.contains(&name.as_str()) {
            return Err(Diagnostic {
                kind: DiagnosticKind::Syntax,
                message: format!("`{name}` is reserved"),
                span,
            });
        }
        Ok(name)
    }

    fn number(&mut self) -> PResult<u64> {
        match self.bump() {
            Tok::Digits(d) => d.parse().map_err(|_| self.error("number too large")),
            other => {
                self.pos -= 1;
                Err(self.error(&format!("expected number, found {}", describe(&other))))
            }
        }
    }

    fn kind_of(&self, name: &str) -> Option<Kind> {
        self.scope.iter().rev().find(|(n, _)| n == name).map(|(_, k)| *k)
    }

    fn with_scope<T>(&mut self, binds: &[(String, Kind)], f: impl FnOnce(&mut Self) -> PResult<T>) -> PResult<T> {
        let depth = self.scope.len();
        self.scope.extend(binds.iter().cloned());
        let r = f(self);
        self.scope.truncate(depth);
        r
    }

    fn definition(&mut self, lib: &Library) -> PResult<Definition> {
        let start = self.span().start;
        let (name, _) = self.ident()?;
        self.expect(Tok::LParen)?;
        let mut first = Vec::new();
        let mut second = Vec::new();
        let mut colon = false;
        if !self.eat(&Tok::RParen) {
            loop {
                let p = self.binder()?;
                if colon {
                    second.push(p);
                } else {
                    first.push(p);
                }
                if self.eat(&Tok::Comma) {
                    continue;
                }
                if !colon && self.eat(&Tok::Colon) {
                    colon = true;
                    continue;
                }
                self.expect(Tok::RParen)?;
                break;
            }
        }
        let binds: Vec<_> = first
            .iter()
            .chain(&second)
            .map(|p| (p.clone(), Kind::Quantum))
            .collect();
        let body = self
            .with_scope(&binds, |p| p.formula(lib))
            .map_err(|d| self.best_error(d))?;
        let end = self.prev_span().end;
        Ok(Definition {
            name,
            first_params: first,
            second_params: second,
            has_colon: colon,
            body: alpha_rename(&body),
            source: self.src[start..end].to_string(),
        })
    }

    fn formula(&mut self, lib: &Library) -> PResult<Formula> {
        let lhs = self.conj(lib)?;
        if self.eat(&Tok::Iff) {
            let rhs = self.conj(lib)?;
            return Ok(Formula::Iff(Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn conj(&mut self, lib: &Library) -> PResult<Formula> {
        let mut lhs = self.unary(lib)?;
        while self.eat(&Tok::And) {
            let rhs = self.unary(lib)?;
            lhs = Formula::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self, lib: &Library) -> PResult<Formula> {
        match self.peek().clone() {
            Tok::NotQ => {
                self.bump();
                Ok(Formula::not(self.unary(lib)?))
            }
            Tok::LBrack => {
                self.bump();
                let f = self.formula(lib)?;
                self.expect(Tok::RBrack)?;
                Ok(f)
            }
            Tok::LParen => self.paren(lib),
            Tok::Ident(s) if s == "QTC" && *self.peek_at(1) == Tok::LBrack => self.qtc(lib),
            _ => self.atom(lib),
        }
    }

    fn is_quantifier_head(&self) -> bool {
        match (self.peek_at(1), self.peek_at(2), self.peek_at(3)) {
            (Tok::Ident(k), Tok::Ident(_), next) if k == "E" || k == "A" => {
                matches!(next, Tok::Le | Tok::Lt | Tok::Comma)
            }
            (Tok::Ident(k), Tok::Ident(_), Tok::Comma) if k == "EQ" || k == "AQ" => true,
            (Tok::Ident(k), Tok::Ident(_), Tok::Colon) if k == "EQF" => true,
            _ => false,
        }
    }

    fn paren(&mut self, lib: &Library) -> PResult<Formula> {
        if self.is_quantifier_head() {
            return self.quantifier(lib);
        }
        let save = self.pos;
        let err1 = match self.guarded(lib) {
            Ok(f) => return Ok(f),
            Err(e) => e,
        };
        if matches!(err1.kind, DiagnosticKind::Arity | DiagnosticKind::UnknownPredicate) {
            return Err(err1);
        }
        self.record(&err1);
        self.pos = save;
        let err2 = match self.grouped(lib) {
            Ok(f) => return Ok(f),
            Err(e) => e,
        };
        if matches!(err2.kind, DiagnosticKind::Arity | DiagnosticKind::UnknownPredicate) {
            return Err(err2);
        }
        self.record(&err2);
        self.pos = save;
        self.atom(lib)
    }

    fn grouped(&mut self, lib: &Library) -> PResult<Formula> {
        self.expect(Tok::LParen)?;
        let f = self.formula(lib)?;
        self.expect(Tok::RParen)?;
        Ok(f)
    }

    fn guarded(&mut self, lib: &Library) -> PResult<Formula> {
        let span = self.span();
        self.expect(Tok::LParen)?;
        let mut guards = vec![self.qterm()?];
        while self.eat(&Tok::Comma) {
            guards.push(self.qterm()?);
        }
        self.expect(Tok::RParen)?;
        self.expect(Tok::LBrack)?;
        let mut branches = vec![self.formula(lib)?];
        while self.eat(&Tok::Bar2) {
            branches.push(self.formula(lib)?);
        }
        self.expect(Tok::RBrack)?;
        let span = span.join(self.prev_span());
        // a range guard is a tuple of its components unless it can be one qubit
        let is_range = guards.len() == 1
            && match &guards[0] {
                QTerm::Range {
                    lo: CTerm::Num(lo),
                    hi: CTerm::Num(hi),
                    ..
                } => hi > lo || branches.len() != 2,
                QTerm::Range { .. } => branches.len() != 2,
                _ => false,
            };
        if guards.len() == 1 && !is_range {
            if branches.len() != 2 {
                return Err(Diagnostic {
                    kind: DiagnosticKind::Arity,
                    message: format!("quantum OR needs 2 branches, found {}", branches.len()),
                    span,
                });
            }
            let one = branches.pop().unwrap();
            let zero = branches.pop().unwrap();
            return Ok(Formula::Or {
                guard: guards.pop().unwrap(),
                zero: Box::new(zero),
                one: Box::new(one),
                span,
            });
        }
        if !is_range && branches.len() != 1usize << guards.len().min(20) {
            return Err(Diagnostic {
                kind: DiagnosticKind::Arity,
                message: format!(
                    "{} antecedents need {} branches, found {}",
                    guards.len(),
                    1usize << guards.len().min(20),
                    branches.len()
                ),
                span,
            });
        }
        Ok(Formula::MultiOr {
            guards,
            branches,
            span,
        })
    }

    fn quantifier(&mut self, lib: &Library) -> PResult<Formula> {
        let span = self.span();
        self.expect(Tok::LParen)?;
        let (kw, _) = self.ident()?;
        match kw.as_str() {
            "E" | "A" => {
                let kind = if kw == "E" {
                    QuantKind::Exists
                } else {
                    QuantKind::Forall
                };
                let var = self.binder()?;
                let mut lo = None;
                if self.eat(&Tok::Comma) {
                    let lo_term = self.cterm()?;
                    let strict = self.cmp_strict()?;
                    lo = Some(Bound {
                        term: lo_term,
                        strict,
                    });
                    let (v2, s2) = self.ident()?;
                    if v2 != var {
                        return Err(Diagnostic {
                            kind: DiagnosticKind::Syntax,
                            message: format!("expected bound variable `{var}`, found `{v2}`"),
                            span: s2,
                        });
                    }
                }
                let strict = self.cmp_strict()?;
                let hi = Bound {
                    term: self.cterm()?,
                    strict,
                };
                self.expect(Tok::RParen)?;
                let body = self.with_scope(&[(var.clone(), Kind::Classical)], |p| p.unary(lib))?;
                Ok(Formula::CQuant {
                    kind,
                    var,
                    lo,
                    hi,
                    body: Box::new(body),
                })
            }
            "EQ" | "AQ" => {
                let kind = if kw == "EQ" {
                    QuantKind::Exists
                } else {
                    QuantKind::Forall
                };
                let var = self.binder()?;
                self.expect(Tok::Comma)?;
                self.expect(Tok::Bar)?;
                let (v2, s2) = self.ident()?;
                if v2 != var {
                    return Err(Diagnostic {
                        kind: DiagnosticKind::Syntax,
                        message: format!("size constraint must name `{var}`"),
                        span: s2,
                    });
                }
                self.expect(Tok::Bar)?;
                self.expect(Tok::Eq)?;
                let size = self.cterm()?;
                self.expect(Tok::RParen)?;
                let span = span.join(self.prev_span());
                let body = self.with_scope(&[(var.clone(), Kind::Quantum)], |p| p.unary(lib))?;
                Ok(Formula::QQuant {
                    kind,
                    var,
                    size,
                    body: Box::new(body),
                    span,
                })
            }
            "EQF" => {
                let var = self.binder()?;
                self.expect(Tok::Colon)?;
                self.expect(Tok::LBrack)?;
                let domain = self.cterm()?;
                self.expect(Tok::RBrack)?;
                self.expect(Tok::Arrow)?;
                let (q, qs) = self.ident()?;
                if q != "Q" {
                    return Err(Diagnostic {
                        kind: DiagnosticKind::Syntax,
                        message: "expected `Q(size)` codomain".into(),
                        span: qs,
                    });
                }
                self.expect(Tok::LParen)?;
                let size = self.cterm()?;
                self.expect(Tok::RParen)?;
                self.expect(Tok::RParen)?;
                let span = span.join(self.prev_span());
                let body =
                    self.with_scope(&[(var.clone(), Kind::Functional)], |p| p.unary(lib))?;
                Ok(Formula::FQuant {
                    var,
                    domain,
                    size,
                    body: Box::new(body),
                    span,
                })
            }
            _ => Err(self.error("expected quantifier")),
        }
    }

    fn cmp_strict(&mut self) -> PResult<bool> {
        match self.bump() {
            Tok::Le => Ok(false),
            Tok::Lt => Ok(true),
            other => {
                self.pos -= 1;
                Err(self.error(&format!("expected `<=` or `<`, found {}", describe(&other))))
            }
        }
    }

    fn qtc(&mut self, lib: &Library) -> PResult<Formula> {
        let span = self.span();
        self.bump();
        self.expect(Tok::LBrack)?;
        self.expect(Tok::LParen)?;
        let i = self.binder()?;
        let mut firsts = Vec::new();
        while self.eat(&Tok::Comma) {
            firsts.push(self.binder()?);
        }
        self.expect(Tok::Colon)?;
        let j = self.binder()?;
        let mut seconds = Vec::new();
        while self.eat(&Tok::Comma) {
            seconds.push(self.binder()?);
        }
        self.expect(Tok::RParen)?;
        self.expect(Tok::FatArrow)?;
        let mut binds = vec![(i.clone(), Kind::Classical), (j.clone(), Kind::Classical)];
        binds.extend(firsts.iter().chain(&seconds).map(|v| (v.clone(), Kind::Quantum)));
        let relation = self.with_scope(&binds, |p| p.formula(lib))?;
        self.expect(Tok::RBrack)?;
        self.expect(Tok::LParen)?;
        let start = self.cterm()?;
        let mut start_args = Vec::new();
        while self.eat(&Tok::Comma) {
            start_args.push(self.qterm()?);
        }
        self.expect(Tok::Colon)?;
        let end = self.cterm()?;
        let mut end_args = Vec::new();
        while self.eat(&Tok::Comma) {
            end_args.push(self.qterm()?);
        }
        self.expect(Tok::RParen)?;
        let span = span.join(self.prev_span());
        if start_args.len() != firsts.len() || end_args.len() != seconds.len() {
            return Err(Diagnostic {
                kind: DiagnosticKind::Arity,
                message: "QTC argument lists do not match the relation parameters".into(),
                span,
            });
        }
        Ok(Formula::Qtc(Box::new(Qtc {
            i,
            firsts,
            j,
            seconds,
            relation,
            start,
            start_args,
            end,
            end_args,
            span,
        })))
    }

    fn atom(&mut self, lib: &Library) -> PResult<Formula> {
        let span = self.span();
        if let (Tok::Ident(name), Tok::LParen) = (self.peek().clone(), self.peek_at(1).clone()) {
            let quantum_head = name == "X" || self.kind_of(&name) == Some(Kind::Functional);
            let classical_head = name == "ilog" || name == "suc";
            if !quantum_head && !classical_head {
                return self.predicate(&name, span, lib);
            }
        }
        let save = self.pos;
        let qerr = match self.qterm() {
            Ok(term) if *self.peek() == Tok::Approx => return self.measure_tail(term, span),
            Ok(_) => self.error("expected `~=` after quantum term"),
            Err(e) => e,
        };
        self.record(&qerr);
        self.pos = save;
        self.comparison()
    }

    fn measure_tail(&mut self, term: QTerm, span: Span) -> PResult<Formula> {
        self.expect(Tok::Approx)?;
        self.expect(Tok::LBrace)?;
        let eps = match self.bump() {
            Tok::Decimal(d) => d,
            Tok::Digits(d) => {
                let num: f64 = d.parse().unwrap_or(f64::NAN);
                if self.eat(&Tok::Slash) {
                    num / self.number()? as f64
                } else {
                    num
                }
            }
            other => {
                self.pos -= 1;
                return Err(self.error(&format!("expected error bound, found {}", describe(&other))));
            }
        };
        if !(0.0..=1.0).contains(&eps) {
            return Err(self.error("error bound must lie in [0, 1]"));
        }
        self.expect(Tok::RBrace)?;
        let bits = match self.bump() {
            Tok::Digits(d) if d.chars().all(|c| c == '0' || c == '1') => {
                d.chars().map(|c| c == '1').collect::<Vec<_>>()
            }
            other => {
                self.pos -= 1;
                return Err(self.error(&format!("expected bit string, found {}", describe(&other))));
            }
        };
        Ok(Formula::Measure {
            term,
            eps,
            bits,
            span: span.join(self.prev_span()),
        })
    }

    fn comparison(&mut self) -> PResult<Formula> {
        let mut lhs = self.cterm()?;
        let mut parts = Vec::new();
        loop {
            let op = match self.peek() {
                Tok::Eq => CmpOp::Eq,
                Tok::Le => CmpOp::Le,
                Tok::Lt => CmpOp::Lt,
                _ => break,
            };
            self.bump();
            let rhs = self.cterm()?;
            parts.push(Formula::cmp(op, lhs, rhs.clone()));
            lhs = rhs;
        }
        if parts.is_empty() {
            return Err(self.error(&format!("expected a formula, found {}", describe(self.peek()))));
        }
        Ok(Formula::and_all(parts))
    }

    fn predicate(&mut self, name: &str, span: Span, lib: &Library) -> PResult<Formula> {
        let gate = match name {
            "P_I" => Some(Gate::Identity),
            "P_ROT" => None,
            #[cfg(feature = "ext-gates")]
            "P_S" => Some(Gate::S),
            #[cfg(feature = "ext-gates")]
            "P_T" => Some(Gate::T),
            _ => {
                let Some(def) = lib.get(name).cloned() else {
                    return Err(Diagnostic {
                        kind: DiagnosticKind::UnknownPredicate,
                        message: format!("unknown predicate symbol `{name}`"),
                        span,
                    });
                };
                return self.call(&def, span);
            }
        };
        self.bump();
        self.expect(Tok::LParen)?;
        let gate = match gate {
            Some(g) => g,
            None => {
                let a = self.angle()?;
                self.expect(Tok::Semi)?;
                Gate::Rot(a)
            }
        };
        let first = self.qterm()?;
        if !self.eat(&Tok::Colon) {
            return Err(Diagnostic {
                kind: DiagnosticKind::Arity,
                message: format!("`{name}` takes two arguments separated by `:`"),
                span: span.join(self.span()),
            });
        }
        let second = self.qterm()?;
        if *self.peek() != Tok::RParen {
            return Err(Diagnostic {
                kind: DiagnosticKind::Arity,
                message: format!("`{name}` takes exactly two arguments"),
                span: span.join(self.span()),
            });
        }
        self.bump();
        Ok(Formula::Pred {
            gate,
            first,
            second,
            span: span.join(self.prev_span()),
        })
    }

    fn call(&mut self, def: &Definition, span: Span) -> PResult<Formula> {
        self.bump();
        self.expect(Tok::LParen)?;
        let mut args = Vec::new();
        let mut colon_at = None;
        if !self.eat(&Tok::RParen) {
            loop {
                args.push(self.qterm()?);
                if self.eat(&Tok::Comma) {
                    continue;
                }
                if colon_at.is_none() && self.eat(&Tok::Colon) {
                    colon_at = Some(args.len());
                    continue;
                }
                self.expect(Tok::RParen)?;
                break;
            }
        }
        let span = span.join(self.prev_span());
        let total = def.first_params.len() + def.second_params.len();
        let split_ok = match colon_at {
            None => true,
            Some(k) => def.has_colon && k == def.first_params.len(),
        };
        if args.len() != total || !split_ok {
            return Err(Diagnostic {
                kind: DiagnosticKind::Arity,
                message: format!(
                    "`{}` expects ({}{}{})",
                    def.name,
                    def.first_params.join(", "),
                    if def.has_colon { " : " } else { "" },
                    def.second_params.join(", ")
                ),
                span,
            });
        }
        Ok(macros::instantiate(def, &args, &mut self.used, span))
    }

    fn angle(&mut self) -> PResult<Angle> {
        let neg = self.eat(&Tok::Minus);
        let sign = if neg { -1 } else { 1 };
        match self.bump() {
            Tok::Decimal(d) => Ok(Angle::Radians(sign as f64 * d)),
            Tok::Ident(s) if s == "pi" => {
                if self.eat(&Tok::Slash) {
                    let den = self.number()? as i64;
                    Ok(Angle::pi_frac(sign, den))
                } else {
                    Ok(Angle::pi_frac(sign, 1))
                }
            }
            Tok::Digits(d) => {
                let k: i64 = d.parse().map_err(|_| self.error("angle numerator too large"))?;
                if self.eat(&Tok::Star) {
                    match self.bump() {
                        Tok::Ident(s) if s == "pi" => {}
                        _ => return Err(self.error("expected `pi`")),
                    }
                    let den = if self.eat(&Tok::Slash) {
                        self.number()? as i64
                    } else {
                        1
                    };
                    Ok(Angle::pi_frac(sign * k, den))
                } else {
                    Ok(Angle::Radians(sign as f64 * k as f64))
                }
            }
            other => {
                self.pos -= 1;
                Err(self.error(&format!("expected angle, found {}", describe(&other))))
            }
        }
    }

    fn cterm(&mut self) -> PResult<CTerm> {
        let mut lhs = self.cprim()?;
        loop {
            if self.eat(&Tok::Plus) {
                lhs = CTerm::add(lhs, self.cprim()?);
            } else if self.eat(&Tok::Minus) {
                lhs = CTerm::sub(lhs, self.cprim()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn cprim(&mut self) -> PResult<CTerm> {
        match self.bump() {
            Tok::Digits(d) => Ok(CTerm::Num(
                d.parse().map_err(|_| self.error("number too large"))?,
            )),
            Tok::Bar => {
                let q = self.qterm()?;
                self.expect(Tok::Bar)?;
                Ok(CTerm::size(q))
            }
            Tok::LParen => {
                let t = self.cterm()?;
                self.expect(Tok::RParen)?;
                Ok(t)
            }
            Tok::Ident(s) => match s.as_str() {
                "n" => Ok(CTerm::N),
                "ilog" => {
                    self.expect(Tok::LParen)?;
                    match self.bump() {
                        Tok::Ident(n) if n == "n" => {}
                        _ => return Err(self.error("ilog takes `n`")),
                    }
                    self.expect(Tok::RParen)?;
                    Ok(CTerm::Ilog)
                }
                "suc" => {
                    self.expect(Tok::LParen)?;
                    let t = self.cterm()?;
                    self.expect(Tok::RParen)?;
                    Ok(CTerm::Suc(Box::new(t)))
                }
                _ if KEYWORDS.contains(&s.as_str()) => {
                    self.pos -= 1;
                    Err(self.error(&format!("`{s}` is not a classical term")))
                }
                _ => match self.kind_of(&s) {
                    Some(Kind::Quantum) | Some(Kind::Functional) => {
                        self.pos -= 1;
                        Err(self.error(&format!("`{s}` is a quantum variable")))
                    }
                    _ => Ok(CTerm::Var(s)),
                },
            },
            other => {
                self.pos -= 1;
                Err(self.error(&format!("expected classical term, found {}", describe(&other))))
            }
        }
    }

    fn qterm(&mut self) -> PResult<QTerm> {
        let mut lhs = self.qpost()?;
        while self.eat(&Tok::Tensor) {
            lhs = lhs.tensor(self.qpost()?);
        }
        Ok(simplify_qterm(&lhs))
    }

    fn qpost(&mut self) -> PResult<QTerm> {
        let mut t = self.qprim()?;
        while *self.peek() == Tok::LBrack {
            let save = self.pos;
            self.bump();
            let quantum_index = match self.peek() {
                Tok::Ident(s) => {
                    s == "X" || matches!(self.kind_of(s), Some(Kind::Quantum | Kind::Functional))
                }
                _ => false,
            };
            if quantum_index {
                let q = self.qterm()?;
                self.expect(Tok::RBrack)?;
                t = t.at_q(q);
                continue;
            }
            let lo = match self.cterm() {
                Ok(lo) => lo,
                Err(e) => {
                    // `y[…]` followed by something that is not an index, e.g.
                    // the branch list of a quantum OR.
                    self.record(&e);
                    self.pos = save;
                    break;
                }
            };
            if self.eat(&Tok::Comma) {
                let hi = self.cterm()?;
                self.expect(Tok::RBrack)?;
                t = t.range(lo, hi);
            } else {
                self.expect(Tok::RBrack)?;
                t = t.at(lo);
            }
        }
        Ok(t)
    }

    fn qprim(&mut self) -> PResult<QTerm> {
        let span = self.span();
        match self.bump() {
            Tok::Digits(d) if d == "0" || d == "1" => Ok(QTerm::Bit(d == "1")),
            Tok::LParen => {
                let t = self.qterm()?;
                self.expect(Tok::RParen)?;
                Ok(t)
            }
            Tok::Ident(s) => {
                if s == "X" {
                    self.expect(Tok::LParen)?;
                    let t = self.qterm()?;
                    self.expect(Tok::RParen)?;
                    return Ok(t.query());
                }
                match self.kind_of(&s) {
                    Some(Kind::Functional) => {
                        self.expect(Tok::LParen)?;
                        let idx = self.cterm()?;
                        self.expect(Tok::RParen)?;
                        Ok(QTerm::inst(&s, idx))
                    }
                    Some(Kind::Classical) => Err(Diagnostic {
                        kind: DiagnosticKind::Syntax,
                        message: format!("`{s}` is a classical variable"),
                        span,
                    }),
                    _ if KEYWORDS.contains(&s.as_str()) => Err(Diagnostic {
                        kind: DiagnosticKind::Syntax,
                        message: format!("`{s}` is not a quantum term"),
                        span,
                    }),
                    _ => Ok(QTerm::Var(s)),
                }
            }
            other => {
                self.pos -= 1;
                Err(self.error(&format!("expected quantum term, found {}", describe(&other))))
            }
        }
    }
}

/// Renders a bit string for diagnostics.
pub fn render_bits(bits: &[bool]) -> String {
    bits_to_string(bits)
}
