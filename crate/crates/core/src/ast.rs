//! Abstract syntax of classical terms, quantum terms and quantum formulas,
//! plus the numeric helpers and the structure model shared by every module.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AstError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("undeclared variable `{0}`")]
    Undeclared(String),
    #[error("size error: {0}")]
    Size(String),
}

/// Byte offsets plus line and column of the first byte (both 1-based).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub line: usize,
    pub col: usize,
}

impl Span {
    pub fn join(self, other: Span) -> Span {
        if self == Span::default() {
            return other;
        }
        Span {
            start: self.start.min(other.start),
            end: self.end.max(other.end),
            line: self.line,
            col: self.col,
        }
    }
}

impl std::fmt::Display for Span {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

/// `⌈log₂ n⌉`.
pub fn ilog(n: u64) -> Result<u64, AstError> {
    if n == 0 {
        return Err(AstError::Domain("ilog(0) is undefined".into()));
    }
    Ok(64 - (n - 1).leading_zeros() as u64)
}

/// `2^ilog(n)`.
pub fn n_hat(n: u64) -> Result<u64, AstError> {
    Ok(1u64 << ilog(n)?)
}

/// The `rank`-th string of `{0,1}^length` in counting order; rank 1 is all zeros.
pub fn lex_string(length: u32, rank: u64) -> Result<Vec<bool>, AstError> {
    if length > 63 || rank == 0 || rank > (1u64 << length) {
        return Err(AstError::Domain(format!(
            "rank {rank} outside [1, 2^{length}]"
        )));
    }
    let v = rank - 1;
    Ok((0..length).rev().map(|b| (v >> b) & 1 == 1).collect())
}

pub fn bits_to_string(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

/// Rotation angle, kept exact when written as a rational multiple of π.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Angle {
    Pi { num: i64, den: i64 },
    Radians(f64),
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

impl Angle {
    pub fn pi_frac(num: i64, den: i64) -> Angle {
        let (mut num, mut den) = (num, den);
        if den < 0 {
            num = -num;
            den = -den;
        }
        let g = gcd(num, den).max(1);
        Angle::Pi {
            num: num / g,
            den: den / g,
        }
    }

    pub fn radians(&self) -> f64 {
        match *self {
            Angle::Pi { num, den } => PI * num as f64 / den as f64,
            Angle::Radians(r) => r,
        }
    }

    /// `num/den mod 2` as a reduced fraction, for exact angles.
    fn reduced(&self) -> Option<(i64, i64)> {
        match *self {
            Angle::Pi { num, den } => Some((num.rem_euclid(2 * den), den)),
            Angle::Radians(_) => None,
        }
    }

    /// Matrix of `ROT_θ`. Exact `π` is NOT and exact `π/4` is the Hadamard
    /// gate; every other angle uses `|a> ↦ cos θ|a> + (-1)^a sin θ|1-a>`.
    pub fn matrix(&self) -> [[Complex64; 2]; 2] {
        let c = |x: f64| Complex64::new(x, 0.0);
        match self.reduced() {
            Some((1, 1)) => return [[c(0.0), c(1.0)], [c(1.0), c(0.0)]],
            Some((1, 4)) => {
                let h = std::f64::consts::FRAC_1_SQRT_2;
                return [[c(h), c(h)], [c(h), c(-h)]];
            }
            _ => {}
        }
        let t = self.radians();
        let (s, co) = t.sin_cos();
        // column a is the image of |a>
        [[c(co), c(-s)], [c(s), c(co)]]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Gate {
    Identity,
    Rot(Angle),
    #[cfg(feature = "ext-gates")]
    S,
    #[cfg(feature = "ext-gates")]
    T,
}

impl Gate {
    pub fn matrix(&self) -> [[Complex64; 2]; 2] {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        match self {
            Gate::Identity => [[one, zero], [zero, one]],
            Gate::Rot(a) => a.matrix(),
            #[cfg(feature = "ext-gates")]
            Gate::S => [[one, zero], [zero, Complex64::new(0.0, 1.0)]],
            #[cfg(feature = "ext-gates")]
            Gate::T => [[one, zero], [zero, Complex64::from_polar(1.0, PI / 4.0)]],
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Gate::Identity)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CTerm {
    Var(String),
    Num(u64),
    N,
    Ilog,
    Suc(Box<CTerm>),
    Add(Box<CTerm>, Box<CTerm>),
    /// Truncated subtraction.
    Sub(Box<CTerm>, Box<CTerm>),
    Size(Box<QTerm>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Index {
    C(CTerm),
    Q(Box<QTerm>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum QTerm {
    Var(String),
    /// Instance `Y(t)` of a functional quantum variable.
    Inst { name: String, index: CTerm },
    Qbit { target: Box<QTerm>, index: Index },
    Range { target: Box<QTerm>, lo: CTerm, hi: CTerm },
    Tensor(Box<QTerm>, Box<QTerm>),
    Query(Box<QTerm>),
    Bit(bool),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Le,
    Lt,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum QuantKind {
    Exists,
    Forall,
}

impl QuantKind {
    pub fn dual(self) -> QuantKind {
        match self {
            QuantKind::Exists => QuantKind::Forall,
            QuantKind::Forall => QuantKind::Exists,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bound {
    pub term: CTerm,
    pub strict: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Qtc {
    pub i: String,
    pub firsts: Vec<String>,
    pub j: String,
    pub seconds: Vec<String>,
    pub relation: Formula,
    pub start: CTerm,
    pub start_args: Vec<QTerm>,
    pub end: CTerm,
    pub end_args: Vec<QTerm>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Formula {
    Cmp {
        op: CmpOp,
        lhs: CTerm,
        rhs: CTerm,
    },
    Pred {
        gate: Gate,
        first: QTerm,
        second: QTerm,
        span: Span,
    },
    Measure {
        term: QTerm,
        eps: f64,
        bits: Vec<bool>,
        span: Span,
    },
    And(Box<Formula>, Box<Formula>),
    Or {
        guard: QTerm,
        zero: Box<Formula>,
        one: Box<Formula>,
        span: Span,
    },
    /// Surface form: `(g1, …, gm)[P_0 || … || P_{2^m-1}]`; a single range
    /// guard stands for its components.
    MultiOr {
        guards: Vec<QTerm>,
        branches: Vec<Formula>,
        span: Span,
    },
    /// Surface form `φ <=> ψ`.
    Iff(Box<Formula>, Box<Formula>),
    Not(Box<Formula>),
    CQuant {
        kind: QuantKind,
        var: String,
        lo: Option<Bound>,
        hi: Bound,
        body: Box<Formula>,
    },
    QQuant {
        kind: QuantKind,
        var: String,
        size: CTerm,
        body: Box<Formula>,
        span: Span,
    },
    FQuant {
        var: String,
        domain: CTerm,
        size: CTerm,
        body: Box<Formula>,
        span: Span,
    },
    Qtc(Box<Qtc>),
}

impl CTerm {
    pub fn var(name: &str) -> CTerm {
        CTerm::Var(name.to_string())
    }
    pub fn num(v: u64) -> CTerm {
        CTerm::Num(v)
    }
    #[allow(clippy::should_implement_trait)]
    pub fn add(a: CTerm, b: CTerm) -> CTerm {
        CTerm::Add(Box::new(a), Box::new(b))
    }
    #[allow(clippy::should_implement_trait)]
    pub fn sub(a: CTerm, b: CTerm) -> CTerm {
        CTerm::Sub(Box::new(a), Box::new(b))
    }
    pub fn size(q: QTerm) -> CTerm {
        CTerm::Size(Box::new(q))
    }
}

impl QTerm {
    pub fn var(name: &str) -> QTerm {
        QTerm::Var(name.to_string())
    }
    pub fn inst(name: &str, index: CTerm) -> QTerm {
        QTerm::Inst {
            name: name.to_string(),
            index,
        }
    }
    pub fn at(self, i: CTerm) -> QTerm {
        QTerm::Qbit {
            target: Box::new(self),
            index: Index::C(i),
        }
    }
    pub fn at_num(self, i: u64) -> QTerm {
        self.at(CTerm::Num(i))
    }
    pub fn at_q(self, i: QTerm) -> QTerm {
        QTerm::Qbit {
            target: Box::new(self),
            index: Index::Q(Box::new(i)),
        }
    }
    pub fn range(self, lo: CTerm, hi: CTerm) -> QTerm {
        QTerm::Range {
            target: Box::new(self),
            lo,
            hi,
        }
    }
    pub fn tensor(self, other: QTerm) -> QTerm {
        QTerm::Tensor(Box::new(self), Box::new(other))
    }
    /// Left-nested tensor of a non-empty list.
    pub fn tensor_all(parts: Vec<QTerm>) -> QTerm {
        let mut it = parts.into_iter();
        let first = it.next().expect("tensor of an empty list");
        it.fold(first, |acc, t| acc.tensor(t))
    }
    pub fn query(self) -> QTerm {
        QTerm::Query(Box::new(self))
    }

    /// Name of the underlying variable for variable, instance, qbit and range
    /// terms.
    pub fn root(&self) -> Option<&str> {
        match self {
            QTerm::Var(n) => Some(n),
            QTerm::Inst { name, .. } => Some(name),
            QTerm::Qbit { target, .. } | QTerm::Range { target, .. } => target.root(),
            _ => None,
        }
    }

    pub fn has_constant_or_query(&self) -> bool {
        match self {
            QTerm::Bit(_) | QTerm::Query(_) => true,
            QTerm::Var(_) | QTerm::Inst { .. } => false,
            QTerm::Qbit { target, index } => {
                target.has_constant_or_query()
                    || matches!(index, Index::Q(q) if q.has_constant_or_query())
            }
            QTerm::Range { target, .. } => target.has_constant_or_query(),
            QTerm::Tensor(a, b) => a.has_constant_or_query() || b.has_constant_or_query(),
        }
    }
}

impl Formula {
    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(Box::new(a), Box::new(b))
    }
    /// Left-nested conjunction; the empty list is `0 = 0`.
    pub fn and_all(parts: Vec<Formula>) -> Formula {
        let mut it = parts.into_iter();
        match it.next() {
            None => Formula::truth(),
            Some(first) => it.fold(first, Formula::and),
        }
    }
    pub fn or(guard: QTerm, zero: Formula, one: Formula) -> Formula {
        Formula::Or {
            guard,
            zero: Box::new(zero),
            one: Box::new(one),
            span: Span::default(),
        }
    }
    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }
    pub fn pred(gate: Gate, first: QTerm, second: QTerm) -> Formula {
        Formula::Pred {
            gate,
            first,
            second,
            span: Span::default(),
        }
    }
    pub fn copy(first: QTerm, second: QTerm) -> Formula {
        Formula::pred(Gate::Identity, first, second)
    }
    pub fn measure(term: QTerm, eps: f64, bits: Vec<bool>) -> Formula {
        Formula::Measure {
            term,
            eps,
            bits,
            span: Span::default(),
        }
    }
    pub fn cmp(op: CmpOp, lhs: CTerm, rhs: CTerm) -> Formula {
        Formula::Cmp { op, lhs, rhs }
    }
    /// `0 = 1`.
    pub fn falsum() -> Formula {
        Formula::cmp(CmpOp::Eq, CTerm::Num(0), CTerm::Num(1))
    }
    /// `0 = 0`.
    pub fn truth() -> Formula {
        Formula::cmp(CmpOp::Eq, CTerm::Num(0), CTerm::Num(0))
    }
    pub fn forall_upto(var: &str, hi: CTerm, body: Formula) -> Formula {
        Formula::CQuant {
            kind: QuantKind::Forall,
            var: var.to_string(),
            lo: None,
            hi: Bound {
                term: hi,
                strict: false,
            },
            body: Box::new(body),
        }
    }
    pub fn exists_q(var: &str, size: CTerm, body: Formula) -> Formula {
        Formula::QQuant {
            kind: QuantKind::Exists,
            var: var.to_string(),
            size,
            body: Box::new(body),
            span: Span::default(),
        }
    }

    /// Source span of the node, when it carries one.
    pub fn span(&self) -> Span {
        match self {
            Formula::Pred { span, .. }
            | Formula::Measure { span, .. }
            | Formula::Or { span, .. }
            | Formula::MultiOr { span, .. }
            | Formula::QQuant { span, .. }
            | Formula::FQuant { span, .. } => *span,
            Formula::Qtc(q) => q.span,
            Formula::And(a, b) | Formula::Iff(a, b) => a.span().join(b.span()),
            Formula::Not(a) => a.span(),
            Formula::CQuant { body, .. } => body.span(),
            Formula::Cmp { .. } => Span::default(),
        }
    }

    pub fn children(&self) -> Vec<&Formula> {
        match self {
            Formula::Cmp { .. } | Formula::Pred { .. } | Formula::Measure { .. } => vec![],
            Formula::And(a, b) | Formula::Iff(a, b) => vec![a, b],
            Formula::Or { zero, one, .. } => vec![zero, one],
            Formula::MultiOr { branches, .. } => branches.iter().collect(),
            Formula::Not(a) => vec![a],
            Formula::CQuant { body, .. }
            | Formula::QQuant { body, .. }
            | Formula::FQuant { body, .. } => vec![body],
            Formula::Qtc(q) => vec![&q.relation],
        }
    }

    /// Number of formula nodes.
    pub fn node_count(&self) -> usize {
        1 + self.children().iter().map(|c| c.node_count()).sum::<usize>()
    }

    pub fn any(&self, pred: &dyn Fn(&Formula) -> bool) -> bool {
        pred(self) || self.children().iter().any(|c| c.any(pred))
    }
}

/// Variables of each kind occurring free in a formula.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FreeVars {
    pub classical: BTreeSet<String>,
    pub quantum: BTreeSet<String>,
}

pub fn free_vars(f: &Formula) -> FreeVars {
    let mut out = FreeVars::default();
    let mut bound_c = Vec::new();
    let mut bound_q = Vec::new();
    fv_formula(f, &mut bound_c, &mut bound_q, &mut out);
    out
}

fn fv_c(t: &CTerm, bc: &[String], bq: &[String], out: &mut FreeVars) {
    match t {
        CTerm::Var(v) => {
            if !bc.contains(v) {
                out.classical.insert(v.clone());
            }
        }
        CTerm::Suc(a) => fv_c(a, bc, bq, out),
        CTerm::Add(a, b) | CTerm::Sub(a, b) => {
            fv_c(a, bc, bq, out);
            fv_c(b, bc, bq, out);
        }
        CTerm::Size(q) => fv_q(q, bc, bq, out),
        CTerm::Num(_) | CTerm::N | CTerm::Ilog => {}
    }
}

fn fv_q(t: &QTerm, bc: &[String], bq: &[String], out: &mut FreeVars) {
    match t {
        QTerm::Var(v) => {
            if !bq.contains(v) {
                out.quantum.insert(v.clone());
            }
        }
        QTerm::Inst { name, index } => {
            if !bq.contains(name) {
                out.quantum.insert(name.clone());
            }
            fv_c(index, bc, bq, out);
        }
        QTerm::Qbit { target, index } => {
            fv_q(target, bc, bq, out);
            match index {
                Index::C(c) => fv_c(c, bc, bq, out),
                Index::Q(q) => fv_q(q, bc, bq, out),
            }
        }
        QTerm::Range { target, lo, hi } => {
            fv_q(target, bc, bq, out);
            fv_c(lo, bc, bq, out);
            fv_c(hi, bc, bq, out);
        }
        QTerm::Tensor(a, b) => {
            fv_q(a, bc, bq, out);
            fv_q(b, bc, bq, out);
        }
        QTerm::Query(a) => fv_q(a, bc, bq, out),
        QTerm::Bit(_) => {}
    }
}

fn fv_formula(f: &Formula, bc: &mut Vec<String>, bq: &mut Vec<String>, out: &mut FreeVars) {
    match f {
        Formula::Cmp { lhs, rhs, .. } => {
            fv_c(lhs, bc, bq, out);
            fv_c(rhs, bc, bq, out);
        }
        Formula::Pred { first, second, .. } => {
            fv_q(first, bc, bq, out);
            fv_q(second, bc, bq, out);
        }
        Formula::Measure { term, .. } => fv_q(term, bc, bq, out),
        Formula::And(a, b) | Formula::Iff(a, b) => {
            fv_formula(a, bc, bq, out);
            fv_formula(b, bc, bq, out);
        }
        Formula::Or {
            guard, zero, one, ..
        } => {
            fv_q(guard, bc, bq, out);
            fv_formula(zero, bc, bq, out);
            fv_formula(one, bc, bq, out);
        }
        Formula::MultiOr {
            guards, branches, ..
        } => {
            for g in guards {
                fv_q(g, bc, bq, out);
            }
            for b in branches {
                fv_formula(b, bc, bq, out);
            }
        }
        Formula::Not(a) => fv_formula(a, bc, bq, out),
        Formula::CQuant {
            var, lo, hi, body, ..
        } => {
            if let Some(lo) = lo {
                fv_c(&lo.term, bc, bq, out);
            }
            fv_c(&hi.term, bc, bq, out);
            bc.push(var.clone());
            fv_formula(body, bc, bq, out);
            bc.pop();
        }
        Formula::QQuant {
            var, size, body, ..
        } => {
            fv_c(size, bc, bq, out);
            bq.push(var.clone());
            fv_formula(body, bc, bq, out);
            bq.pop();
        }
        Formula::FQuant {
            var,
            domain,
            size,
            body,
            ..
        } => {
            fv_c(domain, bc, bq, out);
            fv_c(size, bc, bq, out);
            bq.push(var.clone());
            fv_formula(body, bc, bq, out);
            bq.pop();
        }
        Formula::Qtc(q) => {
            fv_c(&q.start, bc, bq, out);
            fv_c(&q.end, bc, bq, out);
            for a in q.start_args.iter().chain(&q.end_args) {
                fv_q(a, bc, bq, out);
            }
            bc.push(q.i.clone());
            bc.push(q.j.clone());
            let nq = q.firsts.len() + q.seconds.len();
            bq.extend(q.firsts.iter().chain(&q.seconds).cloned());
            fv_formula(&q.relation, bc, bq, out);
            bq.truncate(bq.len() - nq);
            bc.truncate(bc.len() - 2);
        }
    }
}

/// Alpha-equivalence: equal up to a consistent renaming of bound variables.
/// Source spans are ignored.
pub fn alpha_eq(a: &Formula, b: &Formula) -> bool {
    let mut ren = Vec::new();
    ae_f(a, b, &mut ren)
}

type Renaming = Vec<(String, String)>;

fn ae_name(x: &str, y: &str, ren: &Renaming) -> bool {
    for (l, r) in ren.iter().rev() {
        if l == x || r == y {
            return l == x && r == y;
        }
    }
    x == y
}

fn ae_c(a: &CTerm, b: &CTerm, ren: &Renaming) -> bool {
    match (a, b) {
        (CTerm::Var(x), CTerm::Var(y)) => ae_name(x, y, ren),
        (CTerm::Num(x), CTerm::Num(y)) => x == y,
        (CTerm::N, CTerm::N) | (CTerm::Ilog, CTerm::Ilog) => true,
        (CTerm::Suc(x), CTerm::Suc(y)) => ae_c(x, y, ren),
        (CTerm::Add(a1, a2), CTerm::Add(b1, b2)) | (CTerm::Sub(a1, a2), CTerm::Sub(b1, b2)) => {
            ae_c(a1, b1, ren) && ae_c(a2, b2, ren)
        }
        (CTerm::Size(x), CTerm::Size(y)) => ae_q(x, y, ren),
        _ => false,
    }
}

fn ae_q(a: &QTerm, b: &QTerm, ren: &Renaming) -> bool {
    match (a, b) {
        (QTerm::Var(x), QTerm::Var(y)) => ae_name(x, y, ren),
        (
            QTerm::Inst { name: x, index: i },
            QTerm::Inst { name: y, index: j },
        ) => ae_name(x, y, ren) && ae_c(i, j, ren),
        (
            QTerm::Qbit {
                target: t1,
                index: i1,
            },
            QTerm::Qbit {
                target: t2,
                index: i2,
            },
        ) => {
            ae_q(t1, t2, ren)
                && match (i1, i2) {
                    (Index::C(x), Index::C(y)) => ae_c(x, y, ren),
                    (Index::Q(x), Index::Q(y)) => ae_q(x, y, ren),
                    _ => false,
                }
        }
        (
            QTerm::Range {
                target: t1,
                lo: l1,
                hi: h1,
            },
            QTerm::Range {
                target: t2,
                lo: l2,
                hi: h2,
            },
        ) => ae_q(t1, t2, ren) && ae_c(l1, l2, ren) && ae_c(h1, h2, ren),
        (QTerm::Tensor(a1, a2), QTerm::Tensor(b1, b2)) => ae_q(a1, b1, ren) && ae_q(a2, b2, ren),
        (QTerm::Query(x), QTerm::Query(y)) => ae_q(x, y, ren),
        (QTerm::Bit(x), QTerm::Bit(y)) => x == y,
        _ => false,
    }
}

fn ae_bound(a: &Option<Bound>, b: &Option<Bound>, ren: &Renaming) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => x.strict == y.strict && ae_c(&x.term, &y.term, ren),
        _ => false,
    }
}

fn ae_f(a: &Formula, b: &Formula, ren: &mut Renaming) -> bool {
    use Formula::*;
    match (a, b) {
        (
            Cmp {
                op: o1,
                lhs: l1,
                rhs: r1,
            },
            Cmp {
                op: o2,
                lhs: l2,
                rhs: r2,
            },
        ) => o1 == o2 && ae_c(l1, l2, ren) && ae_c(r1, r2, ren),
        (
            Pred {
                gate: g1,
                first: f1,
                second: s1,
                ..
            },
            Pred {
                gate: g2,
                first: f2,
                second: s2,
                ..
            },
        ) => g1 == g2 && ae_q(f1, f2, ren) && ae_q(s1, s2, ren),
        (
            Measure {
                term: t1,
                eps: e1,
                bits: b1,
                ..
            },
            Measure {
                term: t2,
                eps: e2,
                bits: b2,
                ..
            },
        ) => e1 == e2 && b1 == b2 && ae_q(t1, t2, ren),
        (And(a1, a2), And(b1, b2)) | (Iff(a1, a2), Iff(b1, b2)) => {
            ae_f(a1, b1, ren) && ae_f(a2, b2, ren)
        }
        (
            Or {
                guard: g1,
                zero: z1,
                one: o1,
                ..
            },
            Or {
                guard: g2,
                zero: z2,
                one: o2,
                ..
            },
        ) => ae_q(g1, g2, ren) && ae_f(z1, z2, ren) && ae_f(o1, o2, ren),
        (
            MultiOr {
                guards: g1,
                branches: b1,
                ..
            },
            MultiOr {
                guards: g2,
                branches: b2,
                ..
            },
        ) => {
            g1.len() == g2.len()
                && b1.len() == b2.len()
                && g1.iter().zip(g2).all(|(x, y)| ae_q(x, y, ren))
                && b1.iter().zip(b2).all(|(x, y)| ae_f(x, y, ren))
        }
        (Not(x), Not(y)) => ae_f(x, y, ren),
        (
            CQuant {
                kind: k1,
                var: v1,
                lo: lo1,
                hi: hi1,
                body: b1,
            },
            CQuant {
                kind: k2,
                var: v2,
                lo: lo2,
                hi: hi2,
                body: b2,
            },
        ) => {
            if k1 != k2
                || hi1.strict != hi2.strict
                || !ae_bound(lo1, lo2, ren)
                || !ae_c(&hi1.term, &hi2.term, ren)
            {
                return false;
            }
            ren.push((v1.clone(), v2.clone()));
            let r = ae_f(b1, b2, ren);
            ren.pop();
            r
        }
        (
            QQuant {
                kind: k1,
                var: v1,
                size: s1,
                body: b1,
                ..
            },
            QQuant {
                kind: k2,
                var: v2,
                size: s2,
                body: b2,
                ..
            },
        ) => {
            if k1 != k2 || !ae_c(s1, s2, ren) {
                return false;
            }
            ren.push((v1.clone(), v2.clone()));
            let r = ae_f(b1, b2, ren);
            ren.pop();
            r
        }
        (
            FQuant {
                var: v1,
                domain: d1,
                size: s1,
                body: b1,
                ..
            },
            FQuant {
                var: v2,
                domain: d2,
                size: s2,
                body: b2,
                ..
            },
        ) => {
            if !ae_c(d1, d2, ren) || !ae_c(s1, s2, ren) {
                return false;
            }
            ren.push((v1.clone(), v2.clone()));
            let r = ae_f(b1, b2, ren);
            ren.pop();
            r
        }
        (Qtc(x), Qtc(y)) => {
            if x.firsts.len() != y.firsts.len()
                || x.seconds.len() != y.seconds.len()
                || x.start_args.len() != y.start_args.len()
                || x.end_args.len() != y.end_args.len()
                || !ae_c(&x.start, &y.start, ren)
                || !ae_c(&x.end, &y.end, ren)
                || !x.start_args.iter().zip(&y.start_args).all(|(a, b)| ae_q(a, b, ren))
                || !x.end_args.iter().zip(&y.end_args).all(|(a, b)| ae_q(a, b, ren))
            {
                return false;
            }
            let before = ren.len();
            ren.push((x.i.clone(), y.i.clone()));
            ren.push((x.j.clone(), y.j.clone()));
            for (a, b) in x.firsts.iter().zip(&y.firsts) {
                ren.push((a.clone(), b.clone()));
            }
            for (a, b) in x.seconds.iter().zip(&y.seconds) {
                ren.push((a.clone(), b.clone()));
            }
            let r = ae_f(&x.relation, &y.relation, ren);
            ren.truncate(before);
            r
        }
        _ => false,
    }
}

/// Model against which formulas are evaluated.
#[derive(Clone, Debug, Default)]
pub struct Structure {
    pub n: u64,
    /// Classical input assigned to the instance symbol `X`.
    pub input: Vec<bool>,
    pub free_classical: BTreeMap<String, u64>,
    /// Amplitude vectors of free quantum variables, qubit 1 most significant.
    pub free_quantum: BTreeMap<String, Vec<Complex64>>,
    /// Free quantum variables that the formula itself defines, with sizes.
    pub outputs: BTreeMap<String, usize>,
}

impl Structure {
    pub fn new(input: Vec<bool>) -> Structure {
        Structure {
            n: input.len().max(1) as u64,
            input,
            ..Default::default()
        }
    }

    pub fn from_bits(s: &str) -> Structure {
        Structure::new(s.chars().map(|c| c == '1').collect())
    }

    pub fn with_basis(mut self, name: &str, bits: &[bool]) -> Structure {
        let dim = 1usize << bits.len();
        let mut v = vec![Complex64::new(0.0, 0.0); dim];
        let idx = bits.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
        v[idx] = Complex64::new(1.0, 0.0);
        self.free_quantum.insert(name.to_string(), v);
        self
    }

    pub fn with_state(mut self, name: &str, amps: Vec<Complex64>) -> Structure {
        self.free_quantum.insert(name.to_string(), amps);
        self
    }

    pub fn with_output(mut self, name: &str, size: usize) -> Structure {
        self.outputs.insert(name.to_string(), size);
        self
    }

    pub fn with_classical(mut self, name: &str, v: u64) -> Structure {
        self.free_classical.insert(name.to_string(), v);
        self
    }

    /// Query answer for index value `v`: the `(v+1)`-th input bit, or 0 past
    /// the end.
    pub fn x(&self, v: u64) -> bool {
        self.input.get(v as usize).copied().unwrap_or(false)
    }

    pub fn validate(&self, tol: f64) -> Result<(), AstError> {
        if self.n == 0 {
            return Err(AstError::Domain("structure size n must be at least 1".into()));
        }
        if !self.input.is_empty() && self.input.len() as u64 != self.n {
            return Err(AstError::Domain(format!(
                "input length {} differs from n = {}",
                self.input.len(),
                self.n
            )));
        }
        for (name, v) in &self.free_quantum {
            if !v.len().is_power_of_two() || v.len() < 2 {
                return Err(AstError::Size(format!(
                    "state of `{name}` has dimension {}, not a power of two",
                    v.len()
                )));
            }
            let norm: f64 = v.iter().map(|a| a.norm_sqr()).sum();
            if (norm - 1.0).abs() > tol.max(1e-12) * 10.0 {
                return Err(AstError::Domain(format!(
                    "state of `{name}` has squared norm {norm}"
                )));
            }
        }
        Ok(())
    }
}

/// Sizes of quantum variables and values of classical variables, as used by
/// [`qubit_size`].
#[derive(Clone, Debug, Default)]
pub struct SizeEnv {
    pub n: u64,
    pub quantum: BTreeMap<String, u64>,
    pub classical: BTreeMap<String, u64>,
}

pub fn eval_cterm(t: &CTerm, env: &SizeEnv) -> Result<u64, AstError> {
    Ok(match t {
        CTerm::Var(v) => *env
            .classical
            .get(v)
            .ok_or_else(|| AstError::Undeclared(v.clone()))?,
        CTerm::Num(k) => *k,
        CTerm::N => env.n,
        CTerm::Ilog => ilog(env.n)?,
        CTerm::Suc(a) => eval_cterm(a, env)? + 1,
        CTerm::Add(a, b) => eval_cterm(a, env)? + eval_cterm(b, env)?,
        CTerm::Sub(a, b) => eval_cterm(a, env)?.saturating_sub(eval_cterm(b, env)?),
        CTerm::Size(q) => qubit_size(q, env)?,
    })
}

/// Structural qubit size of a quantum term.
pub fn qubit_size(t: &QTerm, env: &SizeEnv) -> Result<u64, AstError> {
    Ok(match t {
        QTerm::Var(v) => *env
            .quantum
            .get(v)
            .ok_or_else(|| AstError::Undeclared(v.clone()))?,
        QTerm::Inst { name, .. } => *env
            .quantum
            .get(name)
            .ok_or_else(|| AstError::Undeclared(name.clone()))?,
        QTerm::Qbit { .. } | QTerm::Query(_) | QTerm::Bit(_) => 1,
        QTerm::Tensor(a, b) => qubit_size(a, env)? + qubit_size(b, env)?,
        QTerm::Range { lo, hi, .. } => {
            let (lo, hi) = (eval_cterm(lo, env)?, eval_cterm(hi, env)?);
            if hi < lo {
                return Err(AstError::Size(format!("empty range [{lo}, {hi}]")));
            }
            hi - lo + 1
        }
    })
}
