use crate::ast::{bits_to_string, Angle, CTerm, CmpOp, Formula, Gate, Index, QTerm, QuantKind};

/// Renders a formula in the concrete syntax accepted by the parser.
pub fn pretty(f: &Formula) -> String {
    let mut s = String::new();
    pf(f, 0, &mut s);
    s
}

pub fn pretty_cterm(t: &CTerm) -> String {
    let mut s = String::new();
    pc(t, &mut s);
    s
}

pub fn pretty_qterm(t: &QTerm) -> String {
    let mut s = String::new();
    pq(t, &mut s);
    s
}

fn pc(t: &CTerm, out: &mut String) {
    match t {
        CTerm::Var(v) => out.push_str(v),
        CTerm::Num(k) => out.push_str(&k.to_string()),
        CTerm::N => out.push('n'),
        CTerm::Ilog => out.push_str("ilog(n)"),
        CTerm::Suc(a) => {
            out.push_str("suc(");
            pc(a, out);
            out.push(')');
        }
        CTerm::Add(a, b) | CTerm::Sub(a, b) => {
            pc(a, out);
            out.push_str(if matches!(t, CTerm::Add(..)) { "+" } else { "-" });
            if matches!(**b, CTerm::Add(..) | CTerm::Sub(..)) {
                out.push('(');
                pc(b, out);
                out.push(')');
            } else {
                pc(b, out);
            }
        }
        CTerm::Size(q) => {
            out.push('|');
            pq(q, out);
            out.push('|');
        }
    }
}

fn pq_postfix_target(t: &QTerm, out: &mut String) {
    if matches!(t, QTerm::Tensor(..)) {
        out.push('(');
        pq(t, out);
        out.push(')');
    } else {
        pq(t, out);
    }
}

fn pq(t: &QTerm, out: &mut String) {
    match t {
        QTerm::Var(v) => out.push_str(v),
        QTerm::Inst { name, index } => {
            out.push_str(name);
            out.push('(');
            pc(index, out);
            out.push(')');
        }
        QTerm::Qbit { target, index } => {
            pq_postfix_target(target, out);
            out.push('[');
            match index {
                Index::C(c) => pc(c, out),
                Index::Q(q) => pq(q, out),
            }
            out.push(']');
        }
        QTerm::Range { target, lo, hi } => {
            pq_postfix_target(target, out);
            out.push('[');
            pc(lo, out);
            out.push(',');
            pc(hi, out);
            out.push(']');
        }
        QTerm::Tensor(a, b) => {
            pq(a, out);
            out.push_str(" (*) ");
            if matches!(**b, QTerm::Tensor(..)) {
                out.push('(');
                pq(b, out);
                out.push(')');
            } else {
                pq(b, out);
            }
        }
        QTerm::Query(a) => {
            out.push_str("X(");
            pq(a, out);
            out.push(')');
        }
        QTerm::Bit(b) => out.push(if *b { '1' } else { '0' }),
    }
}

pub(crate) fn pretty_angle(a: &Angle) -> String {
    match *a {
        Angle::Radians(r) => format!("{r:?}"),
        Angle::Pi { num, den } => {
            let sign = if num < 0 { "-" } else { "" };
            let k = num.unsigned_abs();
            let head = if k == 1 {
                "pi".to_string()
            } else {
                format!("{k}*pi")
            };
            if den == 1 {
                format!("{sign}{head}")
            } else {
                format!("{sign}{head}/{den}")
            }
        }
    }
}

fn gate_head(g: &Gate) -> String {
    match g {
        Gate::Identity => "P_I(".into(),
        Gate::Rot(a) => format!("P_ROT({}; ", pretty_angle(a)),
        #[cfg(feature = "ext-gates")]
        Gate::S => "P_S(".into(),
        #[cfg(feature = "ext-gates")]
        Gate::T => "P_T(".into(),
    }
}

fn kind_letter(k: QuantKind) -> &'static str {
    match k {
        QuantKind::Exists => "E",
        QuantKind::Forall => "A",
    }
}

/// Levels: 0 accepts anything, 1 a conjunction, 2 a unary formula.
fn pf(f: &Formula, level: u8, out: &mut String) {
    match f {
        Formula::Iff(a, b) => {
            if level > 0 {
                out.push('[');
            }
            pf(a, 1, out);
            out.push_str(" <=> ");
            pf(b, 1, out);
            if level > 0 {
                out.push(']');
            }
        }
        Formula::And(a, b) => {
            if level > 1 {
                out.push('[');
            }
            pf(a, 1, out);
            out.push_str(" /\\ ");
            pf(b, 2, out);
            if level > 1 {
                out.push(']');
            }
        }
        Formula::Not(a) => {
            out.push_str("!q (");
            pf(a, 0, out);
            out.push(')');
        }
        Formula::Cmp { op, lhs, rhs } => {
            pc(lhs, out);
            out.push_str(match op {
                CmpOp::Eq => " = ",
                CmpOp::Le => " <= ",
                CmpOp::Lt => " < ",
            });
            pc(rhs, out);
        }
        Formula::Pred {
            gate,
            first,
            second,
            ..
        } => {
            out.push_str(&gate_head(gate));
            pq(first, out);
            out.push_str(" : ");
            pq(second, out);
            out.push(')');
        }
        Formula::Measure {
            term, eps, bits, ..
        } => {
            pq(term, out);
            out.push_str(&format!(" ~={{{eps:?}}} "));
            out.push_str(&bits_to_string(bits));
        }
        Formula::Or {
            guard, zero, one, ..
        } => {
            out.push('(');
            pq(guard, out);
            out.push_str(")[");
            pf(zero, 0, out);
            out.push_str(" || ");
            pf(one, 0, out);
            out.push(']');
        }
        Formula::MultiOr {
            guards, branches, ..
        } => {
            out.push('(');
            for (k, g) in guards.iter().enumerate() {
                if k > 0 {
                    out.push_str(", ");
                }
                pq(g, out);
            }
            out.push_str(")[");
            for (k, b) in branches.iter().enumerate() {
                if k > 0 {
                    out.push_str(" || ");
                }
                pf(b, 0, out);
            }
            out.push(']');
        }
        Formula::CQuant {
            kind,
            var,
            lo,
            hi,
            body,
        } => {
            out.push('(');
            out.push_str(kind_letter(*kind));
            out.push(' ');
            out.push_str(var);
            if let Some(lo) = lo {
                out.push_str(", ");
                pc(&lo.term, out);
                out.push_str(if lo.strict { " < " } else { " <= " });
                out.push_str(var);
            }
            out.push_str(if hi.strict { " < " } else { " <= " });
            pc(&hi.term, out);
            out.push_str(") ");
            pf(body, 2, out);
        }
        Formula::QQuant {
            kind,
            var,
            size,
            body,
            ..
        } => {
            out.push_str(&format!("({}Q {var}, |{var}|=", kind_letter(*kind)));
            pc(size, out);
            out.push_str(") ");
            pf(body, 2, out);
        }
        Formula::FQuant {
            var,
            domain,
            size,
            body,
            ..
        } => {
            out.push_str(&format!("(EQF {var} : ["));
            pc(domain, out);
            out.push_str("] -> Q(");
            pc(size, out);
            out.push_str(")) ");
            pf(body, 2, out);
        }
        Formula::Qtc(q) => {
            out.push_str("QTC[(");
            out.push_str(&q.i);
            for v in &q.firsts {
                out.push_str(", ");
                out.push_str(v);
            }
            out.push_str(" : ");
            out.push_str(&q.j);
            for v in &q.seconds {
                out.push_str(", ");
                out.push_str(v);
            }
            out.push_str(") => ");
            pf(&q.relation, 0, out);
            out.push_str("](");
            pc(&q.start, out);
            for a in &q.start_args {
                out.push_str(", ");
                pq(a, out);
            }
            out.push_str(" : ");
            pc(&q.end, out);
            for a in &q.end_args {
                out.push_str(", ");
                pq(a, out);
            }
            out.push(')');
        }
    }
}
