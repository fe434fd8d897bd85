//! Static analysis: the variable connection graph, the well-formedness
//! rules, classification flags and negation normalization.

use std::collections::{BTreeMap, BTreeSet};

use crate::ast::{free_vars, Bound, CTerm, Formula, Index, QTerm, QuantKind, Qtc, Span};
use crate::parser::{pretty_cterm, pretty_qterm};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rule {
    OrderConsistency,
    ConstInSecondArg,
    DuplicateFirstOrSecondUse,
    QuantifiedComponentReuse,
    QorAntecedentInSecondArg,
}

impl Rule {
    pub fn name(&self) -> &'static str {
        match self {
            Rule::OrderConsistency => "order_consistency",
            Rule::ConstInSecondArg => "const_in_second_arg",
            Rule::DuplicateFirstOrSecondUse => "duplicate_first_or_second_use",
            Rule::QuantifiedComponentReuse => "quantified_component_reuse",
            Rule::QorAntecedentInSecondArg => "qor_antecedent_in_second_arg",
        }
    }
}

impl std::fmt::Display for Rule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub rule: Rule,
    pub span: Span,
    pub message: String,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Classification {
    pub iqq_free: bool,
    pub measurement_free: bool,
    pub negation_free: bool,
    pub query_free: bool,
    pub sentence: bool,
    /// Every quantum-quantified variable is defined inside its scope.
    pub predecessor_dependent: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WfReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
    pub classification: Classification,
    pub mes: f64,
}

impl WfReport {
    pub fn rules(&self) -> BTreeSet<Rule> {
        self.violations.iter().map(|v| v.rule).collect()
    }

    pub fn render_text(&self) -> String {
        let mut s = String::new();
        if self.ok {
            s.push_str("well-formed\n");
        }
        for v in &self.violations {
            s.push_str(&format!("{}: {}: {}\n", v.span, v.rule, v.message));
        }
        let c = &self.classification;
        s.push_str(&format!(
            "iqq_free={} measurement_free={} negation_free={} query_free={} sentence={} predecessor_dependent={} mes={}\n",
            c.iqq_free,
            c.measurement_free,
            c.negation_free,
            c.query_free,
            c.sentence,
            c.predecessor_dependent,
            crate::qstate::fmt_sig(self.mes)
        ));
        s
    }

    /// One `key=value` record per line; violations as `violation=rule span message`.
    pub fn render_kv(&self) -> String {
        let c = &self.classification;
        let mut s = format!("ok={}\n", self.ok);
        for v in &self.violations {
            s.push_str(&format!("violation={} {} {}\n", v.rule, v.span, v.message));
        }
        s.push_str(&format!("iqq_free={}\n", c.iqq_free));
        s.push_str(&format!("measurement_free={}\n", c.measurement_free));
        s.push_str(&format!("negation_free={}\n", c.negation_free));
        s.push_str(&format!("query_free={}\n", c.query_free));
        s.push_str(&format!("sentence={}\n", c.sentence));
        s.push_str(&format!("predecessor_dependent={}\n", c.predecessor_dependent));
        s.push_str(&format!("mes={}\n", crate::qstate::fmt_sig(self.mes)));
        s
    }
}

/// Vertices are quantum variables, with functional instances `Y(t)` as
/// separate vertices keyed by their printed index; an edge runs from each
/// variable in a first argument to each variable in the second argument.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct VarGraph {
    pub vertices: BTreeSet<String>,
    pub edges: BTreeSet<(String, String)>,
}

/// Whether `var` occurs in a defining position: a predicate's second
/// argument or an end argument of a QTC.
pub fn occurs_second(var: &str, f: &Formula) -> bool {
    f.any(&|g| match g {
        Formula::Pred { second, .. } => mentions(second, var),
        Formula::Qtc(q) => q.end_args.iter().any(|a| mentions(a, var)),
        _ => false,
    })
}

fn mentions(t: &QTerm, var: &str) -> bool {
    match t {
        QTerm::Var(v) => v == var,
        QTerm::Inst { name, .. } => name == var,
        QTerm::Qbit { target, .. } | QTerm::Range { target, .. } => mentions(target, var),
        QTerm::Tensor(a, b) => mentions(a, var) || mentions(b, var),
        QTerm::Query(_) | QTerm::Bit(_) => false,
    }
}

/// Existential quantum quantifiers whose variable is never defined in
/// their body.
pub fn has_introductory(f: &Formula) -> bool {
    f.any(&|g| matches!(g, Formula::QQuant { var, body, .. } if !occurs_second(var, body)))
}

fn vertex_names(t: &QTerm, out: &mut Vec<String>) {
    match t {
        QTerm::Var(v) => out.push(v.clone()),
        QTerm::Inst { name, index } => out.push(format!("{name}({})", pretty_cterm(index))),
        QTerm::Qbit { target, .. } | QTerm::Range { target, .. } => vertex_names(target, out),
        QTerm::Tensor(a, b) => {
            vertex_names(a, out);
            vertex_names(b, out);
        }
        QTerm::Query(_) | QTerm::Bit(_) => {}
    }
}

fn dedup_keep_order(v: Vec<String>) -> Vec<String> {
    let mut seen = BTreeSet::new();
    v.into_iter().filter(|x| seen.insert(x.clone())).collect()
}

/// Predicate occurrences as (first-argument vertices, second-argument vertices), in text order.
fn flows(f: &Formula, out: &mut Vec<(Vec<String>, Vec<String>, Span)>) {
    match f {
        Formula::Pred {
            first,
            second,
            span,
            ..
        } => {
            let (mut a, mut b) = (Vec::new(), Vec::new());
            vertex_names(first, &mut a);
            vertex_names(second, &mut b);
            out.push((dedup_keep_order(a), dedup_keep_order(b), *span));
        }
        Formula::Qtc(q) => {
            let (mut a, mut b) = (Vec::new(), Vec::new());
            for t in &q.start_args {
                vertex_names(t, &mut a);
            }
            flows(&q.relation, out);
            for t in &q.end_args {
                vertex_names(t, &mut b);
            }
            out.push((dedup_keep_order(a), dedup_keep_order(b), q.span));
        }
        _ => {
            for c in f.children() {
                flows(c, out);
            }
        }
    }
}

pub fn build_var_graph(f: &Formula) -> VarGraph {
    let mut fl = Vec::new();
    flows(f, &mut fl);
    let mut g = VarGraph::default();
    for (a, b, _) in &fl {
        g.vertices.extend(a.iter().cloned());
        g.vertices.extend(b.iter().cloned());
        for x in a {
            for y in b {
                g.edges.insert((x.clone(), y.clone()));
            }
        }
    }
    g
}

/// Runs every rule and classifies the formula.
pub fn check_wellformed(f: &Formula) -> WfReport {
    let mut violations = Vec::new();
    order_consistency(f, &mut violations);
    consts_in_second(f, &mut violations);
    antecedents(f, &mut violations);
    let mut uc = UseCheck {
        binders: BTreeMap::new(),
        scopes: Vec::new(),
        out: Vec::new(),
    };
    let fv = free_vars(f);
    for v in &fv.quantum {
        uc.scopes.push(Scope::Quantum(v.clone()));
    }
    uc.collect(f);
    violations.extend(uc.out);
    violations.sort_by_key(|v| (v.span.start, v.rule));
    violations.dedup();
    let (classification, mes) = classify(f);
    WfReport {
        ok: violations.is_empty(),
        violations,
        classification,
        mes,
    }
}

fn order_consistency(f: &Formula, out: &mut Vec<Violation>) {
    let mut fl = Vec::new();
    flows(f, &mut fl);
    let mut adj: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let mut edge_span: BTreeMap<(&str, &str), Span> = BTreeMap::new();
    let mut reported = BTreeSet::new();
    for (a, b, span) in &fl {
        for x in a {
            for y in b {
                adj.entry(x).or_default().insert(y);
                edge_span.entry((x, y)).or_insert(*span);
                if x == y && reported.insert((x.clone(), y.clone())) {
                    out.push(Violation {
                        rule: Rule::OrderConsistency,
                        span: *span,
                        message: format!("`{x}` feeds itself"),
                    });
                }
            }
        }
    }
    // cycles through distinct vertices
    let mut state: BTreeMap<&str, u8> = BTreeMap::new();
    fn dfs<'a>(
        v: &'a str,
        adj: &BTreeMap<&'a str, BTreeSet<&'a str>>,
        state: &mut BTreeMap<&'a str, u8>,
    ) -> Option<(&'a str, &'a str)> {
        state.insert(v, 1);
        if let Some(next) = adj.get(v) {
            for &w in next {
                if w == v {
                    continue;
                }
                match state.get(w).copied().unwrap_or(0) {
                    1 => return Some((v, w)),
                    0 => {
                        if let Some(m) = dfs(w, adj, state) {
                            return Some(m);
                        }
                    }
                    _ => {}
                }
            }
        }
        state.insert(v, 2);
        None
    }
    let keys: Vec<&str> = adj.keys().copied().collect();
    for v in keys {
        if state.get(v).copied().unwrap_or(0) == 0 {
            if let Some((a, b)) = dfs(v, &adj, &mut state) {
                out.push(Violation {
                    rule: Rule::OrderConsistency,
                    span: edge_span.get(&(a, b)).copied().unwrap_or_default(),
                    message: format!("`{a}` and `{b}` lie on a cycle of the variable graph"),
                });
                break;
            }
        }
    }
}

fn consts_in_second(f: &Formula, out: &mut Vec<Violation>) {
    let mut check = |t: &QTerm, span: Span, out: &mut Vec<Violation>| {
        if t.has_constant_or_query() {
            out.push(Violation {
                rule: Rule::ConstInSecondArg,
                span,
                message: format!("second argument {} contains a constant or query", pretty_qterm(t)),
            });
        }
    };
    fn walk(f: &Formula, out: &mut Vec<Violation>, check: &mut dyn FnMut(&QTerm, Span, &mut Vec<Violation>)) {
        match f {
            Formula::Pred { second, span, .. } => check(second, *span, out),
            Formula::Qtc(q) => {
                for a in &q.end_args {
                    check(a, q.span, out);
                }
                walk(&q.relation, out, check);
            }
            _ => {
                for c in f.children() {
                    walk(c, out, check);
                }
            }
        }
    }
    walk(f, out, &mut check);
}

fn antecedents(f: &Formula, out: &mut Vec<Violation>) {
    let mut guards: Vec<(&QTerm, Vec<&Formula>, Span)> = Vec::new();
    fn collect<'a>(f: &'a Formula, acc: &mut Vec<(&'a QTerm, Vec<&'a Formula>, Span)>) {
        match f {
            Formula::Or {
                guard,
                zero,
                one,
                span,
            } => acc.push((guard, vec![&**zero, &**one], *span)),
            Formula::MultiOr {
                guards,
                branches,
                span,
            } => {
                for g in guards {
                    acc.push((g, branches.iter().collect(), *span));
                }
            }
            _ => {}
        }
        for c in f.children() {
            collect(c, acc);
        }
    }
    collect(f, &mut guards);
    let uc = UseCheck {
        binders: BTreeMap::new(),
        scopes: Vec::new(),
        out: Vec::new(),
    };
    for (g, branches, span) in guards {
        let mut gc = Vec::new();
        comps(g, &mut gc);
        let mut defined = Vec::new();
        for b in &branches {
            second_comps(b, &mut defined);
        }
        for c in &gc {
            if let Some(d) = defined.iter().find(|d| uc.conflict(c, d).is_some()) {
                out.push(Violation {
                    rule: Rule::QorAntecedentInSecondArg,
                    span,
                    message: format!("antecedent {} is defined inside a branch as {}", c.text, d.text),
                });
                break;
            }
        }
    }
}

fn second_comps(f: &Formula, out: &mut Vec<Comp>) {
    match f {
        Formula::Pred { second, .. } => comps(second, out),
        Formula::Qtc(q) => {
            for a in &q.end_args {
                comps(a, out);
            }
        }
        _ => {
            for c in f.children() {
                second_comps(c, out);
            }
        }
    }
}

// ---- component uses (rules 3 and 4) ----

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Base {
    Zero,
    Var(String),
    Sym(String),
}

/// `base + off`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Lin {
    base: Base,
    off: i64,
}

impl Lin {
    fn shift(&self, d: i64) -> Lin {
        Lin {
            base: self.base.clone(),
            off: self.off + d,
        }
    }
}

fn lin(t: &CTerm) -> Lin {
    match t {
        CTerm::Num(k) => Lin {
            base: Base::Zero,
            off: *k as i64,
        },
        CTerm::Var(v) => Lin {
            base: Base::Var(v.clone()),
            off: 0,
        },
        CTerm::Suc(a) => lin(a).shift(1),
        CTerm::Add(a, b) => {
            let (la, lb) = (lin(a), lin(b));
            if lb.base == Base::Zero {
                la.shift(lb.off)
            } else if la.base == Base::Zero {
                lb.shift(la.off)
            } else {
                Lin {
                    base: Base::Sym(pretty_cterm(t)),
                    off: 0,
                }
            }
        }
        CTerm::Sub(a, b) => {
            let (la, lb) = (lin(a), lin(b));
            if lb.base == Base::Zero && la.base != Base::Zero {
                la.shift(-lb.off)
            } else if lb.base == Base::Zero {
                Lin {
                    base: Base::Zero,
                    off: (la.off - lb.off).max(0),
                }
            } else {
                Lin {
                    base: Base::Sym(pretty_cterm(t)),
                    off: 0,
                }
            }
        }
        CTerm::N | CTerm::Ilog | CTerm::Size(_) => Lin {
            base: Base::Sym(pretty_cterm(t)),
            off: 0,
        },
    }
}

fn cterm_vars(t: &CTerm, out: &mut BTreeSet<String>) {
    match t {
        CTerm::Var(v) => {
            out.insert(v.clone());
        }
        CTerm::Suc(a) => cterm_vars(a, out),
        CTerm::Add(a, b) | CTerm::Sub(a, b) => {
            cterm_vars(a, out);
            cterm_vars(b, out);
        }
        _ => {}
    }
}

#[derive(Clone, Debug)]
enum Sel {
    All,
    Index(Lin),
    Range(Lin, Lin),
    Opaque,
}

#[derive(Clone, Debug)]
struct Comp {
    root: String,
    inst: Option<Lin>,
    sel: Sel,
    mentions: BTreeSet<String>,
    text: String,
}

fn comps(t: &QTerm, out: &mut Vec<Comp>) {
    match t {
        QTerm::Var(v) => out.push(Comp {
            root: v.clone(),
            inst: None,
            sel: Sel::All,
            mentions: BTreeSet::new(),
            text: v.clone(),
        }),
        QTerm::Inst { name, index } => {
            let mut mentions = BTreeSet::new();
            cterm_vars(index, &mut mentions);
            out.push(Comp {
                root: name.clone(),
                inst: Some(lin(index)),
                sel: Sel::All,
                mentions,
                text: pretty_qterm(t),
            })
        }
        QTerm::Qbit { target, index } => {
            let mut inner = Vec::new();
            comps(target, &mut inner);
            let direct = matches!(**target, QTerm::Var(_) | QTerm::Inst { .. });
            for mut c in inner {
                match index {
                    Index::C(e) => {
                        cterm_vars(e, &mut c.mentions);
                        c.sel = if direct { Sel::Index(lin(e)) } else { Sel::Opaque };
                    }
                    Index::Q(_) => c.sel = Sel::All,
                }
                c.text = pretty_qterm(t);
                out.push(c);
            }
        }
        QTerm::Range { target, lo, hi } => {
            let mut inner = Vec::new();
            comps(target, &mut inner);
            let direct = matches!(**target, QTerm::Var(_) | QTerm::Inst { .. });
            for mut c in inner {
                cterm_vars(lo, &mut c.mentions);
                cterm_vars(hi, &mut c.mentions);
                c.sel = if direct {
                    Sel::Range(lin(lo), lin(hi))
                } else {
                    Sel::Opaque
                };
                c.text = pretty_qterm(t);
                out.push(c);
            }
        }
        QTerm::Tensor(a, b) => {
            comps(a, out);
            comps(b, out);
        }
        QTerm::Query(_) | QTerm::Bit(_) => {}
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Place {
    First,
    Second,
}

#[derive(Clone, Debug)]
struct Use {
    comp: Comp,
    place: Place,
    span: Span,
}

#[derive(Clone, Debug)]
struct Binder {
    lo: Option<Lin>,
    hi: Option<Lin>,
}

enum Scope {
    Forall(String),
    Quantum(String),
}

struct UseCheck {
    binders: BTreeMap<String, Binder>,
    scopes: Vec<Scope>,
    out: Vec<Violation>,
}

fn mk_lo(b: &Option<Bound>) -> Option<Lin> {
    match b {
        None => Some(Lin {
            base: Base::Zero,
            off: 0,
        }),
        Some(b) => Some(lin(&b.term).shift(b.strict as i64)),
    }
}

fn mk_hi(b: &Bound) -> Option<Lin> {
    Some(lin(&b.term).shift(-(b.strict as i64)))
}

impl UseCheck {
    /// `a < b` provably, chasing variable bounds a few levels.
    fn lt(&self, a: &Lin, b: &Lin, depth: u8) -> bool {
        if a.base == b.base {
            return a.off < b.off;
        }
        if depth == 0 {
            return false;
        }
        if let Base::Var(v) = &a.base {
            if let Some(Binder { hi: Some(h), .. }) = self.binders.get(v) {
                if self.lt(&h.shift(a.off), b, depth - 1) {
                    return true;
                }
            }
        }
        if let Base::Var(v) = &b.base {
            if let Some(Binder { lo: Some(l), .. }) = self.binders.get(v) {
                if self.lt(a, &l.shift(b.off), depth - 1) {
                    return true;
                }
            }
        }
        false
    }

    fn interval(&self, l: &Lin) -> (Option<Lin>, Option<Lin>) {
        if let Base::Var(v) = &l.base {
            if let Some(b) = self.binders.get(v) {
                return (
                    b.lo.as_ref().map(|x| x.shift(l.off)),
                    b.hi.as_ref().map(|x| x.shift(l.off)),
                );
            }
        }
        (Some(l.clone()), Some(l.clone()))
    }

    fn disjoint(&self, a: (Option<Lin>, Option<Lin>), b: (Option<Lin>, Option<Lin>)) -> bool {
        let left = matches!((&a.1, &b.0), (Some(h), Some(l)) if self.lt(h, l, 3));
        let right = matches!((&b.1, &a.0), (Some(h), Some(l)) if self.lt(h, l, 3));
        left || right
    }

    fn quantified(&self, l: &Lin) -> bool {
        matches!(&l.base, Base::Var(v) if self.binders.contains_key(v))
    }

    fn conflict(&self, a: &Comp, b: &Comp) -> Option<Rule> {
        if a.root != b.root {
            return None;
        }
        if let (Some(x), Some(y)) = (&a.inst, &b.inst) {
            if x != y {
                if self.disjoint(self.interval(x), self.interval(y)) {
                    return None;
                }
                return if self.quantified(x) || self.quantified(y) {
                    Some(Rule::QuantifiedComponentReuse)
                } else {
                    None
                };
            }
        }
        match (&a.sel, &b.sel) {
            (Sel::Opaque, _) | (_, Sel::Opaque) => None,
            (Sel::All, _) | (_, Sel::All) => Some(Rule::DuplicateFirstOrSecondUse),
            (Sel::Index(x), Sel::Index(y)) if x == y => Some(Rule::DuplicateFirstOrSecondUse),
            (sa, sb) => {
                let qa = matches!(sa, Sel::Index(l) if self.quantified(l))
                    || matches!(sa, Sel::Range(l, h) if self.quantified(l) || self.quantified(h));
                let qb = matches!(sb, Sel::Index(l) if self.quantified(l))
                    || matches!(sb, Sel::Range(l, h) if self.quantified(l) || self.quantified(h));
                let ia = match sa {
                    Sel::Index(l) => self.interval(l),
                    Sel::Range(l, h) => (Some(l.clone()), Some(h.clone())),
                    _ => unreachable!(),
                };
                let ib = match sb {
                    Sel::Index(l) => self.interval(l),
                    Sel::Range(l, h) => (Some(l.clone()), Some(h.clone())),
                    _ => unreachable!(),
                };
                if self.disjoint(ia.clone(), ib.clone()) {
                    return None;
                }
                if qa || qb {
                    return Some(Rule::QuantifiedComponentReuse);
                }
                let concrete = |i: &(Option<Lin>, Option<Lin>)| {
                    matches!(i, (Some(l), Some(h)) if l.base == Base::Zero && h.base == Base::Zero)
                };
                if concrete(&ia) && concrete(&ib) {
                    Some(Rule::DuplicateFirstOrSecondUse)
                } else {
                    None
                }
            }
        }
    }

    fn cross(&mut self, a: &[Use], b: &[Use]) {
        let mut by_root: BTreeMap<(&str, bool), Vec<&Use>> = BTreeMap::new();
        for u in a {
            by_root
                .entry((u.comp.root.as_str(), u.place == Place::First))
                .or_default()
                .push(u);
        }
        for v in b {
            let Some(list) = by_root.get(&(v.comp.root.as_str(), v.place == Place::First)) else {
                continue;
            };
            for u in list {
                if let Some(rule) = self.conflict(&u.comp, &v.comp) {
                    let place = if v.place == Place::First { "first" } else { "second" };
                    self.out.push(Violation {
                        rule,
                        span: v.span,
                        message: format!(
                            "{} and {} both occupy {place}-argument places",
                            u.comp.text, v.comp.text
                        ),
                    });
                    break;
                }
            }
        }
    }

    /// Inside a classical `A` body, a component of a variable declared
    /// outside it must depend on the quantified index.
    fn check_mentions(&mut self, us: &[Use]) {
        for u in us {
            let decl = self
                .scopes
                .iter()
                .rposition(|s| matches!(s, Scope::Quantum(v) if *v == u.comp.root));
            let start = decl.map(|d| d + 1).unwrap_or(0);
            for s in &self.scopes[start..] {
                if let Scope::Forall(i) = s {
                    if !u.comp.mentions.contains(i) {
                        self.out.push(Violation {
                            rule: Rule::QuantifiedComponentReuse,
                            span: u.span,
                            message: format!(
                                "{} is used in every instance of the quantifier over `{i}`",
                                u.comp.text
                            ),
                        });
                        break;
                    }
                }
            }
        }
    }

    fn pred_uses(&mut self, first: &[&QTerm], second: &[&QTerm], span: Span) -> Vec<Use> {
        let mut us = Vec::new();
        for (terms, place) in [(first, Place::First), (second, Place::Second)] {
            let mut cs = Vec::new();
            for t in terms {
                comps(t, &mut cs);
            }
            let group: Vec<Use> = cs
                .into_iter()
                .map(|comp| Use { comp, place, span })
                .collect();
            for k in 1..group.len() {
                let (before, rest) = group.split_at(k);
                self.cross(before, &rest[..1]);
            }
            us.extend(group);
        }
        self.check_mentions(&us);
        us
    }

    fn collect(&mut self, f: &Formula) -> Vec<Use> {
        match f {
            Formula::Cmp { .. } | Formula::Measure { .. } => Vec::new(),
            Formula::Pred {
                first,
                second,
                span,
                ..
            } => self.pred_uses(&[first], &[second], *span),
            Formula::And(a, b) | Formula::Iff(a, b) => {
                let ua = self.collect(a);
                let ub = self.collect(b);
                self.cross(&ua, &ub);
                let mut out = ua;
                out.extend(ub);
                out
            }
            Formula::Or { zero, one, .. } => {
                let mut out = self.collect(zero);
                out.extend(self.collect(one));
                out
            }
            Formula::MultiOr { branches, .. } => {
                branches.iter().flat_map(|b| self.collect(b)).collect()
            }
            Formula::Not(a) => self.collect(a),
            Formula::CQuant {
                kind,
                var,
                lo,
                hi,
                body,
            } => {
                let forall = *kind == QuantKind::Forall;
                self.binders.insert(
                    var.clone(),
                    Binder {
                        lo: mk_lo(lo),
                        hi: mk_hi(hi),
                    },
                );
                if forall {
                    self.scopes.push(Scope::Forall(var.clone()));
                }
                let us = self.collect(body);
                if forall {
                    self.scopes.pop();
                }
                us
            }
            Formula::QQuant { var, body, .. } | Formula::FQuant { var, body, .. } => {
                self.scopes.push(Scope::Quantum(var.clone()));
                let us = self.collect(body);
                self.scopes.pop();
                us.into_iter().filter(|u| u.comp.root != *var).collect()
            }
            Formula::Qtc(q) => {
                self.qtc(q);
                let starts: Vec<&QTerm> = q.start_args.iter().collect();
                let ends: Vec<&QTerm> = q.end_args.iter().collect();
                self.pred_uses(&starts, &ends, q.span)
            }
        }
    }

    fn qtc(&mut self, q: &Qtc) {
        let saved = std::mem::take(&mut self.scopes);
        for v in q.firsts.iter().chain(&q.seconds) {
            self.scopes.push(Scope::Quantum(v.clone()));
        }
        self.collect(&q.relation);
        self.scopes = saved;
    }
}

/// Structural flags and `Mes(φ)`, the sum of all measurement errors.
pub fn classify(f: &Formula) -> (Classification, f64) {
    let fv = free_vars(f);
    let mut mes = 0.0;
    fn sum(f: &Formula, acc: &mut f64) {
        if let Formula::Measure { eps, .. } = f {
            *acc += eps;
        }
        for c in f.children() {
            sum(c, acc);
        }
    }
    sum(f, &mut mes);
    let query_free = !f.any(&|g| match g {
        Formula::Pred { first, second, .. } => has_query(first) || has_query(second),
        Formula::Measure { term, .. } => has_query(term),
        Formula::Or { guard, .. } => has_query(guard),
        Formula::MultiOr { guards, .. } => guards.iter().any(has_query),
        Formula::Qtc(q) => q.start_args.iter().chain(&q.end_args).any(has_query),
        _ => false,
    });
    let c = Classification {
        iqq_free: !f.any(&|g| match g {
            Formula::QQuant {
                kind, var, body, ..
            } => *kind == QuantKind::Forall || !occurs_second(var, body),
            _ => false,
        }),
        measurement_free: !f.any(&|g| matches!(g, Formula::Measure { .. })),
        negation_free: !f.any(&|g| matches!(g, Formula::Not(_))),
        query_free,
        sentence: fv.classical.is_empty() && fv.quantum.is_empty(),
        predecessor_dependent: !f.any(&|g| match g {
            Formula::QQuant { var, body, .. } | Formula::FQuant { var, body, .. } => {
                !occurs_second(var, body)
            }
            _ => false,
        }),
    };
    (c, mes)
}

fn has_query(t: &QTerm) -> bool {
    match t {
        QTerm::Query(_) => true,
        QTerm::Var(_) | QTerm::Inst { .. } | QTerm::Bit(_) => false,
        QTerm::Qbit { target, index } => {
            has_query(target) || matches!(index, Index::Q(q) if has_query(q))
        }
        QTerm::Range { target, .. } => has_query(target),
        QTerm::Tensor(a, b) => has_query(a) || has_query(b),
    }
}

/// Pushes quantum negation to the atoms: measurement bits are flipped,
/// predicates and comparisons are unchanged, quantum quantifiers over
/// undefined (introductory) variables are dualized, and every other
/// connective keeps its shape.
pub fn negation_normalize(f: &Formula) -> Formula {
    nn(f, false)
}

fn nn(f: &Formula, neg: bool) -> Formula {
    match f {
        Formula::Cmp { .. } | Formula::Pred { .. } => f.clone(),
        Formula::Measure {
            term,
            eps,
            bits,
            span,
        } => Formula::Measure {
            term: term.clone(),
            eps: *eps,
            bits: bits.iter().map(|&b| b != neg).collect(),
            span: *span,
        },
        Formula::And(a, b) => Formula::and(nn(a, neg), nn(b, neg)),
        Formula::Iff(a, b) => {
            if neg {
                let inner = crate::parser::desugar(f).unwrap_or_else(|_| f.clone());
                nn(&inner, neg)
            } else {
                Formula::Iff(Box::new(nn(a, false)), Box::new(nn(b, false)))
            }
        }
        Formula::Or {
            guard,
            zero,
            one,
            span,
        } => Formula::Or {
            guard: guard.clone(),
            zero: Box::new(nn(zero, neg)),
            one: Box::new(nn(one, neg)),
            span: *span,
        },
        Formula::MultiOr {
            guards,
            branches,
            span,
        } => Formula::MultiOr {
            guards: guards.clone(),
            branches: branches.iter().map(|b| nn(b, neg)).collect(),
            span: *span,
        },
        Formula::Not(a) => nn(a, !neg),
        Formula::CQuant {
            kind,
            var,
            lo,
            hi,
            body,
        } => Formula::CQuant {
            kind: *kind,
            var: var.clone(),
            lo: lo.clone(),
            hi: hi.clone(),
            body: Box::new(nn(body, neg)),
        },
        Formula::QQuant {
            kind,
            var,
            size,
            body,
            span,
        } => {
            let kind = if neg && !occurs_second(var, body) {
                kind.dual()
            } else {
                *kind
            };
            Formula::QQuant {
                kind,
                var: var.clone(),
                size: size.clone(),
                body: Box::new(nn(body, neg)),
                span: *span,
            }
        }
        Formula::FQuant {
            var,
            domain,
            size,
            body,
            span,
        } => Formula::FQuant {
            var: var.clone(),
            domain: domain.clone(),
            size: size.clone(),
            body: Box::new(nn(body, neg)),
            span: *span,
        },
        Formula::Qtc(q) => Formula::Qtc(Box::new(Qtc {
            relation: nn(&q.relation, neg),
            ..(**q).clone()
        })),
    }
}
