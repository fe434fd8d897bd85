mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;

use common::{fixture_path, formula};
use qfo::ast::*;
use qfo::parser::{desugar, parse_document};
use qfo::wellformed::*;

fn edges(list: &[(&str, &str)]) -> BTreeSet<(String, String)> {
    list.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
}

fn rules(src: &str) -> BTreeSet<&'static str> {
    let f = desugar(&formula(src)).unwrap();
    check_wellformed(&f).rules().iter().map(|r| r.name()).collect()
}

#[test]
fn graph_examples() {
    let g = build_var_graph(&formula("P_I(y : z)"));
    assert_eq!(g.vertices, ["y", "z"].iter().map(|s| s.to_string()).collect());
    assert_eq!(g.edges, edges(&[("y", "z")]));
    let cnot = qfo::stdlib::stdlib_get("P_CNOT").unwrap();
    let g = build_var_graph(&cnot.body);
    assert_eq!(g.edges, edges(&[("y", "z")]));
    let g = build_var_graph(&formula("i = j"));
    assert!(g.vertices.is_empty() && g.edges.is_empty());
    let g = build_var_graph(&formula("P_I(a (*) b : c) /\\ P_ROT(pi; c : d)"));
    assert_eq!(g.edges, edges(&[("a", "c"), ("b", "c"), ("c", "d")]));
}

#[test]
fn violation_fixtures() {
    let dir = fixture_path("violations");
    let mut seen = BTreeSet::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let src = std::fs::read_to_string(&path).unwrap();
        let want = src
            .lines()
            .find_map(|l| l.strip_prefix("# expect: "))
            .unwrap_or_else(|| panic!("{}: no expect line", path.display()))
            .trim()
            .to_string();
        let f = desugar(&parse_document(&src).unwrap().formula.unwrap()).unwrap();
        let r = check_wellformed(&f);
        assert!(!r.ok, "{}", path.display());
        assert!(r.rules().iter().any(|x| x.name() == want), "{}: {:?}", path.display(), r.rules());
        seen.insert(want);
    }
    assert_eq!(seen.len(), 5, "every rule has a fixture");
}

#[test]
fn rule_examples() {
    assert!(rules("(A i <= 2) [P_I(x[i] : y[i]) /\\ P_ROT(pi; x[i] : z[i])]").contains("duplicate_first_or_second_use"));
    assert!(rules("P_I(y : 0)").contains("const_in_second_arg"));
    assert!(rules("P_I(y : z (*) 1)").contains("const_in_second_arg"));
    assert!(rules("P_I(y : z)").is_empty());
    // one producer and one consumer per component family
    assert!(rules("(A i <= 2) [P_I(x[i] : y[i]) /\\ P_ROT(pi; y[i] : z[i])]").is_empty());
    // P_I(y : z) /\ P_I(z : w) /\ P_I(w : y)
    assert!(rules("P_I(y : z) /\\ P_I(z : w) /\\ P_I(w : y)").contains("order_consistency"));
}

#[test]
fn stdlib_is_well_formed() {
    for nf in qfo::stdlib::stdlib_all().unwrap() {
        let r = check_wellformed(&desugar(&nf.body).unwrap());
        assert!(r.ok, "{}: {:?}", nf.name, r.violations);
        assert!(r.violations.is_empty());
    }
}

#[test]
fn report_rendering() {
    let r = check_wellformed(&formula("P_I(y : y)"));
    assert!(!r.ok);
    let text = r.render_text();
    assert!(text.contains("order_consistency"), "{text}");
    assert!(text.starts_with("1:1: "), "{text}");
    let kv = r.render_kv();
    assert!(kv.starts_with("ok=false\nviolation=order_consistency 1:1 "), "{kv}");
    let ok = check_wellformed(&formula("P_I(y : z)"));
    assert!(ok.render_text().starts_with("well-formed\n"));
    assert!(ok.render_kv().contains("\nmes=0\n"));
}

#[test]
fn classification_examples() {
    let maj = qfo::stdlib::stdlib_get("MAJ_1").unwrap();
    let (c, _) = classify(&maj.body);
    assert!(c.iqq_free);
    assert!(c.sentence);
    let (c, _) = classify(&formula("(AQ y, |y|=1) P_I(y : z)"));
    assert!(!c.iqq_free);
    let (c, mes) = classify(&formula("t[1] ~={0.1} 1 /\\ u[1] ~={0.2} 0"));
    assert!((mes - 0.3).abs() < 1e-12);
    assert!(!c.measurement_free && c.negation_free && c.query_free && !c.sentence);
    let (c, _) = classify(&formula("!q (X(y) ~={0} 1)"));
    assert!(!c.negation_free && !c.query_free);
    let (c, _) = classify(&formula("(EQ y, |y|=1) y[1] ~={0} 1"));
    assert!(!c.iqq_free && !c.predecessor_dependent);
    let (c, _) = classify(&formula("(EQ y, |y|=1) P_ROT(pi/4; a : y)"));
    assert!(c.iqq_free && c.predecessor_dependent && c.measurement_free);
}

#[test]
fn wellformed_report_carries_mes() {
    let r = check_wellformed(&formula("t[1] ~={0.1} 1 /\\ u[1] ~={0.2} 0 /\\ v[1] ~={0.05} 1"));
    assert!(r.ok);
    assert!((r.mes - 0.35).abs() < 1e-12);
}

#[test]
fn negation_examples() {
    let nn = |src: &str| negation_normalize(&formula(src));
    assert!(alpha_eq(&nn("!q (t[1] ~={0.1} 1)"), &formula("t[1] ~={0.1} 0")));
    assert!(alpha_eq(&nn("!q !q P_I(y : z)"), &formula("P_I(y : z)")));
    assert!(alpha_eq(&nn("!q P_ROT(pi; y : z)"), &formula("P_ROT(pi; y : z)")));
    assert!(alpha_eq(&nn("!q (1 <= 2)"), &formula("1 <= 2")));
    assert!(alpha_eq(
        &nn("!q ((AQ y, |y|=1) y[1] ~={0} 1)"),
        &formula("(EQ y, |y|=1) y[1] ~={0} 0")
    ));
    // a defined variable keeps its quantifier
    assert!(alpha_eq(
        &nn("!q ((EQ y, |y|=1) [P_ROT(pi/4; a : y) /\\ y[1] ~={0.1} 1])"),
        &formula("(EQ y, |y|=1) [P_ROT(pi/4; a : y) /\\ y[1] ~={0.1} 0]")
    ));
    assert!(alpha_eq(
        &nn("!q ((a[1])[b ~={0} 1 || b ~={0} 0] /\\ c ~={0} 11)"),
        &formula("(a[1])[b ~={0} 0 || b ~={0} 1] /\\ c ~={0} 00")
    ));
    assert!(alpha_eq(&nn("!q ((A i <= 2) b[i] ~={0} 1)"), &formula("(A i <= 2) b[i] ~={0} 0")));
}

#[test]
fn helper_predicates() {
    let f = formula("(EQ y, |y|=1) [P_ROT(pi/4; a : y) /\\ y[1] ~={0.1} 1]");
    assert!(occurs_second("y", &f));
    assert!(!occurs_second("a", &f));
    assert!(!has_introductory(&f));
    assert!(has_introductory(&formula("(AQ y, |y|=1) P_ROT(pi/4; y : z)")));
}

/// Formulas built from a fixed set of quantum-quantified pieces.
fn quantified() -> impl Strategy<Value = Formula> {
    let piece = prop::sample::select(vec![
        "P_ROT(pi/4; a : u)",
        "u[1] ~={0.1} 1",
        "P_I(u : v)",
        "v[1] ~={0} 0",
        "P_I(a : b)",
    ])
    .prop_map(formula);
    piece.prop_recursive(4, 16, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::and(a, b)),
            (prop::sample::select(vec!["u", "v"]), any::<bool>(), inner.clone()).prop_map(|(v, all, b)| {
                Formula::QQuant {
                    kind: if all { QuantKind::Forall } else { QuantKind::Exists },
                    var: v.to_string(),
                    size: CTerm::num(1),
                    body: Box::new(b),
                    span: Span::default(),
                }
            }),
            inner.prop_map(Formula::not),
        ]
    })
}

/// Every formula obtained by dropping one introductory quantifier.
fn drop_one_introductory(f: &Formula) -> Vec<Formula> {
    let mut out = Vec::new();
    match f {
        Formula::QQuant { kind, var, body, .. } => {
            if *kind == QuantKind::Forall || !occurs_second(var, body) {
                out.push((**body).clone());
            }
            for b in drop_one_introductory(body) {
                let mut g = f.clone();
                if let Formula::QQuant { body, .. } = &mut g {
                    **body = b;
                }
                out.push(g);
            }
        }
        Formula::And(a, b) => {
            for x in drop_one_introductory(a) {
                out.push(Formula::and(x, (**b).clone()));
            }
            for y in drop_one_introductory(b) {
                out.push(Formula::and((**a).clone(), y));
            }
        }
        Formula::Not(a) => out.extend(drop_one_introductory(a).into_iter().map(Formula::not)),
        _ => {}
    }
    out
}

proptest! {
    #[test]
    fn iqq_free_is_monotone(f in quantified()) {
        let before = classify(&f).0.iqq_free;
        for g in drop_one_introductory(&f) {
            if before {
                prop_assert!(classify(&g).0.iqq_free);
            }
        }
    }

    #[test]
    fn ok_iff_no_violations(f in quantified()) {
        let r = check_wellformed(&f);
        prop_assert_eq!(r.ok, r.violations.is_empty());
        let (_, mes) = classify(&f);
        prop_assert!((r.mes - mes).abs() < 1e-12);
    }

    #[test]
    fn negation_normal_form_has_no_negation(f in quantified()) {
        let g = negation_normalize(&f);
        prop_assert!(!g.any(&|h| matches!(h, Formula::Not(_))));
        prop_assert!(classify(&g).0.negation_free);
        // normalizing twice changes nothing
        prop_assert!(alpha_eq(&negation_normalize(&g), &g));
    }
}
