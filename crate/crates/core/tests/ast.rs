mod common;

use std::collections::BTreeSet;

use num_complex::Complex64;
use proptest::prelude::*;

use common::formula;
use qfo::ast::*;

#[test]
fn ilog_examples() {
    assert_eq!(ilog(1).unwrap(), 0);
    assert_eq!(ilog(2).unwrap(), 1);
    assert_eq!(ilog(4).unwrap(), 2);
    assert_eq!(ilog(5).unwrap(), 3);
    assert_eq!(ilog(8).unwrap(), 3);
    assert_eq!(ilog(9).unwrap(), 4);
    assert!(matches!(ilog(0), Err(AstError::Domain(_))));
}

#[test]
fn n_hat_examples() {
    assert_eq!(n_hat(1).unwrap(), 1);
    assert_eq!(n_hat(4).unwrap(), 4);
    assert_eq!(n_hat(5).unwrap(), 8);
    assert_eq!(n_hat(7).unwrap(), 8);
    assert!(n_hat(0).is_err());
}

#[test]
fn n_hat_bracket_up_to_2_16() {
    for n in 1..=1u64 << 16 {
        let h = n_hat(n).unwrap();
        assert!(n <= h && h < 2 * n, "n = {n}");
        assert_eq!(h, 1 << ilog(n).unwrap());
        // smallest power of two not below n
        assert!(h == 1 || h / 2 < n);
    }
}

#[test]
fn lex_string_examples() {
    assert_eq!(bits_to_string(&lex_string(3, 1).unwrap()), "000");
    assert_eq!(bits_to_string(&lex_string(3, 2).unwrap()), "001");
    assert_eq!(bits_to_string(&lex_string(3, 3).unwrap()), "010");
    assert_eq!(bits_to_string(&lex_string(3, 8).unwrap()), "111");
    assert!(lex_string(3, 0).is_err());
    assert!(lex_string(3, 9).is_err());
}

#[test]
fn lex_string_is_a_bijection() {
    for k in 0..=10u32 {
        let all: BTreeSet<String> = (1..=1u64 << k)
            .map(|r| bits_to_string(&lex_string(k, r).unwrap()))
            .collect();
        assert_eq!(all.len(), 1 << k);
        assert!(all.iter().all(|s| s.len() == k as usize));
        // counting order
        let ordered: Vec<String> = (1..=1u64 << k).map(|r| bits_to_string(&lex_string(k, r).unwrap())).collect();
        let mut sorted = ordered.clone();
        sorted.sort();
        assert_eq!(ordered, sorted);
    }
}

fn env(sizes: &[(&str, u64)]) -> SizeEnv {
    SizeEnv {
        n: 8,
        quantum: sizes.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        classical: [("i".to_string(), 2)].into_iter().collect(),
    }
}

#[test]
fn qubit_size_examples() {
    let e = env(&[("y", 3), ("s", 2), ("t", 2)]);
    assert_eq!(qubit_size(&QTerm::var("y").at(CTerm::var("i")), &e).unwrap(), 1);
    assert_eq!(qubit_size(&QTerm::var("s").tensor(QTerm::var("t")), &e).unwrap(), 4);
    assert_eq!(qubit_size(&QTerm::var("y"), &e).unwrap(), 3);
    assert_eq!(qubit_size(&QTerm::Bit(true), &e).unwrap(), 1);
    assert_eq!(qubit_size(&QTerm::var("y").query(), &e).unwrap(), 1);
    assert_eq!(
        qubit_size(&QTerm::var("y").range(CTerm::num(2), CTerm::Ilog), &e).unwrap(),
        2
    );
    assert!(matches!(qubit_size(&QTerm::var("q"), &e), Err(AstError::Undeclared(_))));
    assert!(qubit_size(&QTerm::var("y").range(CTerm::num(3), CTerm::num(1)), &e).is_err());
}

#[test]
fn classical_terms() {
    let e = env(&[("y", 5)]);
    assert_eq!(eval_cterm(&CTerm::N, &e).unwrap(), 8);
    assert_eq!(eval_cterm(&CTerm::Ilog, &e).unwrap(), 3);
    assert_eq!(eval_cterm(&CTerm::Suc(Box::new(CTerm::var("i"))), &e).unwrap(), 3);
    assert_eq!(eval_cterm(&CTerm::size(QTerm::var("y")), &e).unwrap(), 5);
    assert_eq!(eval_cterm(&CTerm::sub(CTerm::num(1), CTerm::num(4)), &e).unwrap(), 0);
    assert!(eval_cterm(&CTerm::var("j"), &e).is_err());
}

fn collect_terms<'a>(f: &'a Formula, out: &mut Vec<&'a QTerm>) {
    match f {
        Formula::Pred { first, second, .. } => {
            out.push(first);
            out.push(second);
        }
        Formula::Measure { term, .. } => out.push(term),
        Formula::Or { guard, .. } => out.push(guard),
        Formula::MultiOr { guards, .. } => out.extend(guards),
        Formula::Qtc(q) => out.extend(q.start_args.iter().chain(&q.end_args)),
        _ => {}
    }
    for c in f.children() {
        collect_terms(c, out);
    }
}

#[test]
fn qubit_size_is_total_on_parsed_terms() {
    let mut corpus: Vec<Formula> = qfo::stdlib::stdlib_all().unwrap().into_iter().map(|n| n.body).collect();
    for src in [
        "(y[1], y[2])[P_I(0 : z) || P_I(1 : z) || P_ROT(pi; t : z) || P_I(t : z)]",
        "P_I(y[1,2] (*) z[3] : w)",
        "X(y[2,3]) ~={0.1} 1",
        "(y[z])[P_I(a : b) || P_I(a : b)]",
    ] {
        corpus.push(formula(src));
    }
    for f in &corpus {
        let mut terms = Vec::new();
        collect_terms(f, &mut terms);
        let mut e = SizeEnv {
            n: 8,
            ..SizeEnv::default()
        };
        for t in &terms {
            let mut roots = Vec::new();
            roots_of(t, &mut roots);
            for r in roots {
                e.quantum.insert(r, 4);
            }
        }
        for v in free_vars(f).classical {
            e.classical.insert(v, 1);
        }
        for t in terms {
            let r = qubit_size(t, &e);
            assert!(r.is_ok() || matches!(r, Err(AstError::Undeclared(_))), "{t:?}: {r:?}");
        }
    }
}

fn roots_of(t: &QTerm, out: &mut Vec<String>) {
    match t {
        QTerm::Var(v) => out.push(v.clone()),
        QTerm::Inst { name, .. } => out.push(name.clone()),
        QTerm::Qbit { target, index } => {
            roots_of(target, out);
            if let Index::Q(q) = index {
                roots_of(q, out);
            }
        }
        QTerm::Range { target, .. } | QTerm::Query(target) => roots_of(target, out),
        QTerm::Tensor(a, b) => {
            roots_of(a, out);
            roots_of(b, out);
        }
        QTerm::Bit(_) => {}
    }
}

#[test]
fn exact_angles() {
    let not = Angle::pi_frac(1, 1).matrix();
    assert_eq!(not[0][0].re, 0.0);
    assert_eq!(not[1][0].re, 1.0);
    assert_eq!(not[0][1].re, 1.0);
    let h = Angle::pi_frac(1, 4).matrix();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    assert_eq!([h[0][0].re, h[0][1].re, h[1][0].re, h[1][1].re], [s, s, s, -s]);
    // reduced modulo 2 pi
    assert_eq!(Angle::pi_frac(3, 1).matrix(), not);
    assert_eq!(Angle::pi_frac(2, 8), Angle::Pi { num: 1, den: 4 });
    assert_eq!(Angle::pi_frac(1, -2), Angle::Pi { num: -1, den: 2 });
    let r = Angle::Radians(0.3).matrix();
    assert!((r[0][0].re - 0.3f64.cos()).abs() < 1e-15);
    assert!((r[0][1].re + 0.3f64.sin()).abs() < 1e-15);
    assert!((r[1][0].re - 0.3f64.sin()).abs() < 1e-15);
    assert_eq!(Gate::Identity.matrix()[1][1].re, 1.0);
}

#[test]
fn structure_validation() {
    let st = Structure::from_bits("101");
    assert_eq!(st.n, 3);
    assert!(st.x(0) && !st.x(1) && st.x(2));
    assert!(!st.x(3) && !st.x(100));
    assert!(st.validate(1e-9).is_ok());
    let bad = st.clone().with_state("y", vec![Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)]);
    assert!(bad.validate(1e-9).is_err());
    let odd = st.clone().with_state("y", vec![Complex64::new(1.0, 0.0); 3]);
    assert!(odd.validate(1e-9).is_err());
    let mut wrong_len = Structure::from_bits("10");
    wrong_len.n = 4;
    assert!(wrong_len.validate(1e-9).is_err());
    let basis = st.with_basis("z", &[true, false]);
    assert_eq!(basis.free_quantum["z"][2].re, 1.0);
}

#[test]
fn builders_and_traversal() {
    let f = Formula::and_all(vec![
        Formula::copy(QTerm::var("y"), QTerm::var("z")),
        Formula::measure(QTerm::var("z").at_num(1), 0.1, vec![true]),
        Formula::falsum(),
    ]);
    assert_eq!(f.node_count(), 5);
    assert!(f.any(&|g| matches!(g, Formula::Measure { .. })));
    assert!(matches!(f, Formula::And(ref a, _) if matches!(**a, Formula::And(..))));
    let fv = free_vars(&f);
    assert_eq!(fv.quantum, ["y", "z"].iter().map(|s| s.to_string()).collect());
    assert!(fv.classical.is_empty());
    let q = Formula::exists_q("z", CTerm::num(1), f.clone());
    assert_eq!(free_vars(&q).quantum.len(), 1);
    assert_eq!(QuantKind::Exists.dual(), QuantKind::Forall);
    assert_eq!(QTerm::var("y").at_num(2).root(), Some("y"));
    assert!(QTerm::var("y").tensor(QTerm::Bit(false)).has_constant_or_query());
}

#[test]
fn alpha_equivalence() {
    let a = formula("(EQ u, |u|=1) [P_ROT(pi/4; y : u) /\\ u[1] ~={0.1} 1]");
    let b = formula("(EQ v, |v|=1) [P_ROT(pi/4; y : v) /\\ v[1] ~={0.1} 1]");
    let c = formula("(EQ v, |v|=1) [P_ROT(pi/4; y : v) /\\ v[1] ~={0.1} 0]");
    assert!(alpha_eq(&a, &b));
    assert!(!alpha_eq(&a, &c));
}

proptest! {
    #[test]
    fn ilog_is_least_covering_power(n in 1u64..1 << 40) {
        let got = ilog(n).unwrap();
        prop_assert!((1u64 << got) >= n);
        prop_assert!(got == 0 || (1u64 << (got - 1)) < n);
    }

    #[test]
    fn lex_string_inverts_counting(k in 1u32..20, seed in any::<u64>()) {
        let rank = seed % (1u64 << k) + 1;
        let s = lex_string(k, rank).unwrap();
        let v = s.iter().fold(0u64, |acc, &b| acc * 2 + b as u64);
        prop_assert_eq!(v + 1, rank);
    }
}
