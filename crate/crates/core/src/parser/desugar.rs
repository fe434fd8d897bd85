use std::collections::BTreeSet;

use crate::ast::{free_vars, CTerm, Formula, QTerm, Qtc, Span};

use super::{Diagnostic, DiagnosticKind};

pub fn is_desugared(f: &Formula) -> bool {
    !f.any(&|g| matches!(g, Formula::MultiOr { .. } | Formula::Iff(..)))
}

/// Rewrites multi-antecedent quantum ORs into nested binary ones (first
/// antecedent outermost) and `φ <=> ψ` into
/// `(w)[φ /\ ψ || !q φ /\ !q ψ]` for a fresh single-qubit `w`.
pub fn desugar(f: &Formula) -> Result<Formula, Diagnostic> {
    let mut used = BTreeSet::new();
    names(f, &mut used);
    go(f, &mut used)
}

fn names(f: &Formula, out: &mut BTreeSet<String>) {
    let fv = free_vars(f);
    out.extend(fv.classical);
    out.extend(fv.quantum);
    match f {
        Formula::CQuant { var, .. } | Formula::QQuant { var, .. } | Formula::FQuant { var, .. } => {
            out.insert(var.clone());
        }
        Formula::Qtc(q) => {
            out.extend([q.i.clone(), q.j.clone()]);
            out.extend(q.firsts.iter().chain(&q.seconds).cloned());
        }
        _ => {}
    }
    for c in f.children() {
        names(c, out);
    }
}

fn components(guards: &[QTerm], span: Span) -> Result<Vec<QTerm>, Diagnostic> {
    let mut out = Vec::new();
    for g in guards {
        match g {
            QTerm::Range {
                target,
                lo: CTerm::Num(lo),
                hi: CTerm::Num(hi),
            } if hi >= lo => {
                for k in *lo..=*hi {
                    out.push(super::simplify_qterm(&(**target).clone().at_num(k)));
                }
            }
            QTerm::Range { .. } => {
                return Err(Diagnostic {
                    kind: DiagnosticKind::Arity,
                    message: "range antecedent needs literal bounds".into(),
                    span,
                })
            }
            other => out.push(other.clone()),
        }
    }
    Ok(out)
}

fn nest(guards: &[QTerm], branches: Vec<Formula>, span: Span) -> Formula {
    if guards.is_empty() {
        return branches.into_iter().next().expect("one branch per leaf");
    }
    let mut zero = branches;
    let one = zero.split_off(zero.len() / 2);
    Formula::Or {
        guard: guards[0].clone(),
        zero: Box::new(nest(&guards[1..], zero, span)),
        one: Box::new(nest(&guards[1..], one, span)),
        span,
    }
}

fn go(f: &Formula, used: &mut BTreeSet<String>) -> Result<Formula, Diagnostic> {
    Ok(match f {
        Formula::Cmp { .. } | Formula::Pred { .. } | Formula::Measure { .. } => f.clone(),
        Formula::And(a, b) => Formula::and(go(a, used)?, go(b, used)?),
        Formula::Or {
            guard,
            zero,
            one,
            span,
        } => Formula::Or {
            guard: guard.clone(),
            zero: Box::new(go(zero, used)?),
            one: Box::new(go(one, used)?),
            span: *span,
        },
        Formula::MultiOr {
            guards,
            branches,
            span,
        } => {
            let comps = components(guards, *span)?;
            if comps.len() >= 20 || branches.len() != 1usize << comps.len() {
                return Err(Diagnostic {
                    kind: DiagnosticKind::Arity,
                    message: format!(
                        "{} antecedent qubits need {} branches, found {}",
                        comps.len(),
                        1u64 << comps.len().min(63),
                        branches.len()
                    ),
                    span: *span,
                });
            }
            let bs = branches
                .iter()
                .map(|b| go(b, used))
                .collect::<Result<Vec<_>, _>>()?;
            nest(&comps, bs, *span)
        }
        Formula::Iff(a, b) => {
            let (a, b) = (go(a, used)?, go(b, used)?);
            let mut w = "w".to_string();
            let mut k = 0;
            while used.contains(&w) {
                k += 1;
                w = format!("w_{k}");
            }
            used.insert(w.clone());
            Formula::or(
                QTerm::Var(w),
                Formula::and(a.clone(), b.clone()),
                Formula::and(Formula::not(a), Formula::not(b)),
            )
        }
        Formula::Not(a) => Formula::not(go(a, used)?),
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
            body: Box::new(go(body, used)?),
        },
        Formula::QQuant {
            kind,
            var,
            size,
            body,
            span,
        } => Formula::QQuant {
            kind: *kind,
            var: var.clone(),
            size: size.clone(),
            body: Box::new(go(body, used)?),
            span: *span,
        },
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
            body: Box::new(go(body, used)?),
            span: *span,
        },
        Formula::Qtc(q) => Formula::Qtc(Box::new(Qtc {
            relation: go(&q.relation, used)?,
            ..(**q).clone()
        })),
    })
}
