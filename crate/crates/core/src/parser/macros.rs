use std::collections::{BTreeMap, BTreeSet};

use crate::ast::{free_vars, Bound, CTerm, Formula, Index, QTerm, Qtc, Span};

use super::Definition;

fn fresh(base: &str, used: &mut BTreeSet<String>) -> String {
    let trimmed = base.trim_end_matches(|c: char| c.is_ascii_digit());
    let stem = match trimmed.strip_suffix('_') {
        Some(s) if !s.is_empty() && trimmed.len() < base.len() => s,
        _ => base,
    };
    for k in 1.. {
        let c = format!("{stem}_{k}");
        if !used.contains(&c) {
            used.insert(c.clone());
            return c;
        }
    }
    unreachable!()
}

struct Rewriter<'a> {
    renames: Vec<(String, String)>,
    subst: BTreeMap<String, QTerm>,
    policy: &'a mut dyn FnMut(&str) -> String,
    span: Option<Span>,
}

impl Rewriter<'_> {
    fn lookup(&self, name: &str) -> Option<&str> {
        self.renames
            .iter()
            .rev()
            .find(|(a, _)| a == name)
            .map(|(_, b)| b.as_str())
    }

    fn name(&self, name: &str) -> String {
        self.lookup(name).unwrap_or(name).to_string()
    }

    fn bind(&mut self, name: &str) -> String {
        let new = (self.policy)(name);
        self.renames.push((name.to_string(), new.clone()));
        new
    }

    fn span(&self, s: Span) -> Span {
        self.span.unwrap_or(s)
    }

    fn c(&self, t: &CTerm) -> CTerm {
        match t {
            CTerm::Var(v) => CTerm::Var(self.name(v)),
            CTerm::Num(_) | CTerm::N | CTerm::Ilog => t.clone(),
            CTerm::Suc(a) => CTerm::Suc(Box::new(self.c(a))),
            CTerm::Add(a, b) => CTerm::add(self.c(a), self.c(b)),
            CTerm::Sub(a, b) => CTerm::sub(self.c(a), self.c(b)),
            CTerm::Size(q) => CTerm::size(self.q(q)),
        }
    }

    fn q(&self, t: &QTerm) -> QTerm {
        let out = match t {
            QTerm::Var(v) => {
                if let Some(n) = self.lookup(v) {
                    QTerm::Var(n.to_string())
                } else if let Some(arg) = self.subst.get(v) {
                    arg.clone()
                } else {
                    t.clone()
                }
            }
            QTerm::Inst { name, index } => QTerm::Inst {
                name: self.name(name),
                index: self.c(index),
            },
            QTerm::Qbit { target, index } => QTerm::Qbit {
                target: Box::new(self.q(target)),
                index: match index {
                    Index::C(c) => Index::C(self.c(c)),
                    Index::Q(q) => Index::Q(Box::new(self.q(q))),
                },
            },
            QTerm::Range { target, lo, hi } => self.q(target).range(self.c(lo), self.c(hi)),
            QTerm::Tensor(a, b) => self.q(a).tensor(self.q(b)),
            QTerm::Query(a) => self.q(a).query(),
            QTerm::Bit(_) => t.clone(),
        };
        simplify_qterm(&out)
    }

    fn bound(&self, b: &Bound) -> Bound {
        Bound {
            term: self.c(&b.term),
            strict: b.strict,
        }
    }

    fn f(&mut self, f: &Formula) -> Formula {
        match f {
            Formula::Cmp { op, lhs, rhs } => Formula::Cmp {
                op: *op,
                lhs: self.c(lhs),
                rhs: self.c(rhs),
            },
            Formula::Pred {
                gate,
                first,
                second,
                span,
            } => Formula::Pred {
                gate: *gate,
                first: self.q(first),
                second: self.q(second),
                span: self.span(*span),
            },
            Formula::Measure {
                term,
                eps,
                bits,
                span,
            } => Formula::Measure {
                term: self.q(term),
                eps: *eps,
                bits: bits.clone(),
                span: self.span(*span),
            },
            Formula::And(a, b) => Formula::and(self.f(a), self.f(b)),
            Formula::Iff(a, b) => Formula::Iff(Box::new(self.f(a)), Box::new(self.f(b))),
            Formula::Or {
                guard,
                zero,
                one,
                span,
            } => Formula::Or {
                guard: self.q(guard),
                zero: Box::new(self.f(zero)),
                one: Box::new(self.f(one)),
                span: self.span(*span),
            },
            Formula::MultiOr {
                guards,
                branches,
                span,
            } => Formula::MultiOr {
                guards: guards.iter().map(|g| self.q(g)).collect(),
                branches: branches.iter().map(|b| self.f(b)).collect(),
                span: self.span(*span),
            },
            Formula::Not(a) => Formula::not(self.f(a)),
            Formula::CQuant {
                kind,
                var,
                lo,
                hi,
                body,
            } => {
                let lo = lo.as_ref().map(|b| self.bound(b));
                let hi = self.bound(hi);
                let v = self.bind(var);
                let body = self.f(body);
                self.renames.pop();
                Formula::CQuant {
                    kind: *kind,
                    var: v,
                    lo,
                    hi,
                    body: Box::new(body),
                }
            }
            Formula::QQuant {
                kind,
                var,
                size,
                body,
                span,
            } => {
                let size = self.c(size);
                let v = self.bind(var);
                let body = self.f(body);
                self.renames.pop();
                Formula::QQuant {
                    kind: *kind,
                    var: v,
                    size,
                    body: Box::new(body),
                    span: self.span(*span),
                }
            }
            Formula::FQuant {
                var,
                domain,
                size,
                body,
                span,
            } => {
                let domain = self.c(domain);
                let size = self.c(size);
                let v = self.bind(var);
                let body = self.f(body);
                self.renames.pop();
                Formula::FQuant {
                    var: v,
                    domain,
                    size,
                    body: Box::new(body),
                    span: self.span(*span),
                }
            }
            Formula::Qtc(q) => {
                let start = self.c(&q.start);
                let end = self.c(&q.end);
                let start_args = q.start_args.iter().map(|a| self.q(a)).collect();
                let end_args = q.end_args.iter().map(|a| self.q(a)).collect();
                let depth = self.renames.len();
                let i = self.bind(&q.i);
                let j = self.bind(&q.j);
                let firsts = q.firsts.iter().map(|v| self.bind(v)).collect();
                let seconds = q.seconds.iter().map(|v| self.bind(v)).collect();
                let relation = self.f(&q.relation);
                self.renames.truncate(depth);
                Formula::Qtc(Box::new(Qtc {
                    i,
                    firsts,
                    j,
                    seconds,
                    relation,
                    start,
                    start_args,
                    end,
                    end_args,
                    span: self.span(q.span),
                }))
            }
        }
    }
}

/// Expands a named formula at a call site: parameters are replaced by the
/// argument terms and every binder of the body gets a name unused so far.
pub(super) fn instantiate(
    def: &Definition,
    args: &[QTerm],
    used: &mut BTreeSet<String>,
    span: Span,
) -> Formula {
    let subst = def.params().cloned().zip(args.iter().cloned()).collect();
    let mut policy = |name: &str| {
        if used.contains(name) {
            fresh(name, used)
        } else {
            used.insert(name.to_string());
            name.to_string()
        }
    };
    let mut rw = Rewriter {
        renames: Vec::new(),
        subst,
        policy: &mut policy,
        span: Some(span),
    };
    rw.f(&def.body)
}

fn collect_names(f: &Formula, out: &mut BTreeSet<String>) {
    let fv = free_vars(f);
    out.extend(fv.classical);
    out.extend(fv.quantum);
    match f {
        Formula::CQuant { var, .. } | Formula::QQuant { var, .. } | Formula::FQuant { var, .. } => {
            out.insert(var.clone());
        }
        Formula::Qtc(q) => {
            out.insert(q.i.clone());
            out.insert(q.j.clone());
            out.extend(q.firsts.iter().cloned());
            out.extend(q.seconds.iter().cloned());
        }
        _ => {}
    }
    for c in f.children() {
        collect_names(c, out);
    }
}

/// Renames binders so that no two binders share a name and no binder
/// shares a name with a free variable.
pub fn alpha_rename(f: &Formula) -> Formula {
    let fv = free_vars(f);
    let mut seen: BTreeSet<String> = fv.classical.into_iter().chain(fv.quantum).collect();
    let mut used = BTreeSet::new();
    collect_names(f, &mut used);
    let mut policy = |name: &str| {
        if seen.contains(name) {
            let n = fresh(name, &mut used);
            seen.insert(n.clone());
            n
        } else {
            seen.insert(name.to_string());
            name.to_string()
        }
    };
    let mut rw = Rewriter {
        renames: Vec::new(),
        subst: BTreeMap::new(),
        policy: &mut policy,
        span: None,
    };
    rw.f(f)
}

/// Renames free quantum variables and substitutes terms for them.
pub fn substitute(f: &Formula, subst: &BTreeMap<String, QTerm>) -> Formula {
    let mut policy = |name: &str| name.to_string();
    let mut rw = Rewriter {
        renames: Vec::new(),
        subst: subst.clone(),
        policy: &mut policy,
        span: None,
    };
    rw.f(f)
}

fn static_size(t: &QTerm) -> Option<u64> {
    match t {
        QTerm::Qbit { .. } | QTerm::Bit(_) | QTerm::Query(_) => Some(1),
        QTerm::Range {
            lo: CTerm::Num(lo),
            hi: CTerm::Num(hi),
            ..
        } if hi >= lo => Some(hi - lo + 1),
        QTerm::Tensor(a, b) => Some(static_size(a)? + static_size(b)?),
        _ => None,
    }
}

/// Resolves component selection on tensors, ranges and single qubits when
/// the index is a literal and the sizes are known.
pub fn simplify_qterm(t: &QTerm) -> QTerm {
    match t {
        QTerm::Qbit {
            target,
            index: Index::C(CTerm::Num(k)),
        } => {
            let k = *k;
            let target = simplify_qterm(target);
            match &target {
                QTerm::Tensor(a, b) => {
                    if let Some(sa) = static_size(a) {
                        if k >= 1 && k <= sa {
                            return simplify_qterm(&(**a).clone().at_num(k));
                        }
                        if k > sa {
                            return simplify_qterm(&(**b).clone().at_num(k - sa));
                        }
                    }
                }
                QTerm::Range {
                    target: inner,
                    lo: CTerm::Num(lo),
                    hi: CTerm::Num(hi),
                } if k >= 1 && lo + k - 1 <= *hi => {
                    return simplify_qterm(&(**inner).clone().at_num(lo + k - 1));
                }
                QTerm::Qbit { .. } | QTerm::Bit(_) | QTerm::Query(_) if k == 1 => {
                    return target;
                }
                _ => {}
            }
            target.at_num(k)
        }
        _ => t.clone(),
    }
}
