mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;
use qfo::ast::{Gate, Structure};
use qfo::eval::{self, EvalError, Op, RunConfig, Truth, Verdict};
use qfo::stdlib;

fn cfg() -> RunConfig {
    RunConfig::default()
}

fn report(src: &str, st: &Structure) -> eval::EvalReport {
    eval::evaluate(&formula(src), st, &cfg()).unwrap_or_else(|e| panic!("{src}: {e}"))
}

/// `|<a|b>|` for unit vectors.
fn overlap(a: &[C], b: &[C]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<C>().norm()
}

#[test]
fn majority_examples() {
    let f = stdlib::stdlib_get("MAJ_1").unwrap().body;
    let r = eval::evaluate(&f, &Structure::from_bits("1111"), &cfg()).unwrap();
    assert_eq!(r.verdict, Verdict::Accept);
    assert!((r.probability.unwrap() - 1.0).abs() <= 1e-9);
    let r = eval::evaluate(&f, &Structure::from_bits("1010"), &cfg()).unwrap();
    assert!((r.probability.unwrap() - 0.5).abs() <= 1e-9);
    assert_eq!(r.verdict, Verdict::Undetermined);
    let r = eval::evaluate(&f, &Structure::from_bits("0000"), &cfg()).unwrap();
    assert_eq!(r.verdict, Verdict::Reject);
    assert!(r.probability.unwrap().abs() <= 1e-9);
}

#[test]
fn copy_transports_state() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let psi = random_state(&mut rng, 2);
    let st = Structure::new(vec![false; 2]).with_state("y", psi.clone()).with_output("z", 2);
    let ex = exec(&formula("P_copy(y : z)"), &st);
    assert_eq!(ex.truth, Truth::True);
    assert!(vec_dist(&output_state(&ex, &["z"]), &psi) <= 1e-9);
    // with both sides given it is an equality check
    let same = Structure::new(vec![false; 2]).with_state("y", psi.clone()).with_state("z", psi.clone());
    assert_eq!(report("P_copy(y : z)", &same).verdict, Verdict::Accept);
    let other = Structure::new(vec![false; 2]).with_state("y", psi).with_basis("z", &[true, true]);
    assert_ne!(report("P_copy(y : z)", &other).positive, Truth::True);
}

#[test]
fn existential_basis_witness() {
    let st = Structure::from_bits("00");
    let r = report("(EQ y, |y|=1) y[1] ~={0} 1", &st);
    assert_eq!(r.verdict, Verdict::Accept);
    let w = &r.witnesses[0];
    assert_eq!(w.var, "y");
    assert!(overlap(&w.amplitudes, &basis_vec(2, 1)) >= 1.0 - 1e-9);
}

#[test]
fn existential_spectral_witness() {
    let st = Structure::from_bits("00").with_output("z", 1);
    let r = report("(EQ y, |y|=1) [P_ROT(pi/4; y : z) /\\ z[1] ~={0} 1]", &st);
    assert_eq!(r.verdict, Verdict::Accept);
    let w = &r.witnesses[0];
    assert!(w.spectral);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    assert!(overlap(&w.amplitudes, &[c(s), c(-s)]) >= 1.0 - 1e-9, "{:?}", w.amplitudes);
}

#[test]
fn universal_counterexample() {
    let r = report("(AQ y, |y|=1) y[1] ~={0} 1", &Structure::from_bits("00"));
    assert_eq!(r.verdict, Verdict::Reject);
    let w = &r.witnesses[0];
    assert!(overlap(&w.amplitudes, &basis_vec(2, 1)) <= 1e-6);
}

#[test]
fn qtc_reflexive_base_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let psi = random_state(&mut rng, 2);
    let st = Structure::new(vec![false; 4]).with_state("y", psi.clone()).with_output("z", 2);
    let f = formula("QTC[(i, y : j, z) => P_ROT(pi/4; y[i] : z[i]) /\\ i = suc(j) /\\ i <= ilog(n)](0, y : 0, z)");
    let ex = exec(&f, &st);
    assert_eq!(ex.truth, Truth::True);
    assert!(vec_dist(&output_state(&ex, &["z"]), &psi) <= 1e-9);
}

#[test]
fn qtc_matches_walsh_hadamard() {
    let f = formula("QTC[(i, y : j, z) => P_ROT(pi/4; y[i] : z[i]) /\\ i = suc(j) /\\ i <= ilog(n)](ilog(n), y : 0, z)");
    let wh = formula("P_WH(y : z)");
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for n in [2u64, 4, 8] {
        let k = qfo::ast::ilog(n).unwrap() as usize;
        let psi = random_state(&mut rng, k);
        let st = Structure::new(vec![false; n as usize]).with_state("y", psi).with_output("z", k);
        let a = output_state(&exec(&f, &st), &["z"]);
        let b = output_state(&exec(&wh, &st), &["z"]);
        assert!(vec_dist(&a, &b) <= 1e-9, "n = {n}");
    }
}

#[test]
fn identity_chains() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    // i ranges over 0, 1, 2; the instance y[0] does not exist
    let psi = random_state(&mut rng, 2);
    let st = Structure::new(vec![false; 4]).with_state("y", psi.clone()).with_output("z", 2);
    let ex = exec(&formula("(A i <= ilog(n)) P_I(y[i] : z[i])"), &st);
    assert!(vec_dist(&output_state(&ex, &["z"]), &psi) <= 1e-9);
    let ir = eval::lower(&formula("(A i <= ilog(n)) P_I(y[i] : z[i])"), &st).unwrap();
    assert_eq!(ir.gate_count(), 0);
    let psi = random_state(&mut rng, 3);
    let st = Structure::new(vec![false; 8]).with_state("y", psi.clone()).with_output("z", 3);
    let f = formula("QTC[(i, y : j, z) => P_I(y : z) /\\ i = suc(j)](ilog(n), y : 0, z)");
    let ex = exec(&f, &st);
    assert!(vec_dist(&output_state(&ex, &["z"]), &psi) <= 1e-9);
}

#[test]
fn lowering_shape() {
    let st = Structure::new(vec![false; 2]).with_basis("y", &[false, false]).with_output("z", 2);
    let ir = eval::lower(&formula("P_WH(y : z)"), &st).unwrap();
    let rots = ir
        .ops
        .iter()
        .filter(|op| matches!(op, Op::Gate { gate: Gate::Rot(a), .. } if a.radians() == std::f64::consts::FRAC_PI_4))
        .count();
    assert_eq!(rots, 2);
    assert_eq!(ir.gate_count(), 2);
    assert_eq!(ir.outputs["z"].len(), 2);
    let ir = eval::lower(&formula("P_CNOT(y : z)"), &st).unwrap();
    assert!(ir.ops.iter().any(|op| matches!(op, Op::Controlled { .. })));
}

#[test]
fn functional_chain() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let psi = random_state(&mut rng, 1);
    let st = Structure::new(vec![false; 4]).with_state("y", psi.clone()).with_output("z", 1);
    let f = formula(
        "(EQF Y : [ilog(n)] -> Q(1)) [P_I(y : Y(0)) /\\ (A t < ilog(n)) P_I(Y(t) : Y(suc(t))) /\\ P_I(Y(ilog(n)) : z)]",
    );
    let ex = exec(&f, &st);
    assert_eq!(ex.truth, Truth::True);
    assert!(vec_dist(&output_state(&ex, &["z"]), &psi) <= 1e-9);
}

#[test]
fn functional_instance_must_be_defined() {
    let st = Structure::new(vec![false; 4]).with_output("z", 1);
    let f = formula("(EQF Y : [ilog(n)] -> Q(1)) P_I(Y(0) : z)");
    let err = eval::evaluate(&f, &st, &cfg()).unwrap_err();
    assert!(matches!(err, EvalError::Static(_)), "{err}");
}

#[test]
fn queries_read_input() {
    for (x, v, want) in [("0100", [false, true], true), ("0100", [false, false], false), ("0001", [true, true], true)] {
        let st = Structure::from_bits(x).with_basis("s", &v);
        let r = report("X(s) ~={0} 1", &st);
        assert_eq!(r.verdict == Verdict::Accept, want, "{x} {v:?}");
    }
}

#[test]
fn classical_structure_variables() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let psi = random_state(&mut rng, 2);
    let src = "(A i <= k) P_ROT(pi; y[i] : z[i])";
    let st = Structure::new(vec![false; 2]).with_state("y", psi.clone()).with_output("z", 2);
    assert!(eval::evaluate(&formula(src), &st, &cfg()).is_err());
    let ex = exec(&formula(src), &st.clone().with_classical("k", 2));
    let not2 = permutation(2, |j| j ^ 3);
    let want: Vec<C> = (0..4).map(|r| (0..4).map(|j| not2[(r, j)] * psi[j]).sum()).collect();
    assert!(vec_dist(&output_state(&ex, &["z"]), &want) <= 1e-9);
}

#[test]
fn capacity_errors() {
    let f = stdlib::stdlib_get("MAJ_1").unwrap().body;
    let small = RunConfig {
        wire_cap: 1,
        ..cfg()
    };
    let err = eval::evaluate(&f, &Structure::from_bits("10101010"), &small).unwrap_err();
    assert!(err.is_capacity(), "{err}");
    let big = "(EQ y, |y|=4) y[1] ~={0} 1";
    let err = eval::evaluate(&formula(big), &Structure::from_bits("00"), &cfg()).unwrap_err();
    assert!(err.is_capacity(), "{err}");
}

#[test]
fn margins_and_probability() {
    let st = Structure::from_bits("00").with_state("a", vec![c(0.9f64.sqrt()), c(0.1f64.sqrt())]);
    let r = report("a[1] ~={0.1} 0", &st);
    assert_eq!(r.verdict, Verdict::Accept);
    assert_eq!(r.margins.len(), 1);
    assert!((r.margins[0].failure - 0.1).abs() <= 1e-9);
    assert!((r.probability.unwrap() - 0.9).abs() <= 1e-9);
    let r = report("a[1] ~={0.1} 1", &st);
    assert_eq!(r.verdict, Verdict::Reject);
    let r = report("a[1] ~={0.5} 1", &st);
    assert_eq!(r.verdict, Verdict::Reject);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let even = Structure::from_bits("00").with_state("a", vec![c(s), c(s)]);
    let r = report("a[1] ~={0.1} 1", &even);
    assert_eq!(r.verdict, Verdict::Undetermined);
    assert_eq!(r.negative, Some(Truth::False));
}

#[test]
fn distribution_borderline_case() {
    // P fails on the whole state but passes on each half-weight branch
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let st = Structure::from_bits("00")
        .with_state("a", vec![c(0.6f64.sqrt()), c(0.4f64.sqrt())])
        .with_state("x", vec![c(s), c(s)]);
    let outer = report("a[1] ~={0.3} 0 /\\ (x[1])[0 = 0 || 0 = 0]", &st);
    let inner = report("(x[1])[a[1] ~={0.3} 0 /\\ 0 = 0 || a[1] ~={0.3} 0 /\\ 0 = 0]", &st);
    assert_eq!(outer.positive, Truth::False);
    assert_eq!(inner.positive, Truth::True);
    // away from the border the two forms agree
    let st = st.with_state("a", vec![c(0.9f64.sqrt()), c(0.1f64.sqrt())]);
    let outer = report("a[1] ~={0.3} 0 /\\ (x[1])[0 = 0 || 0 = 0]", &st);
    let inner = report("(x[1])[a[1] ~={0.3} 0 /\\ 0 = 0 || a[1] ~={0.3} 0 /\\ 0 = 0]", &st);
    assert_eq!(outer.verdict, inner.verdict);
}

#[test]
fn associativity_example() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let st = Structure::from_bits("01")
        .with_state("a", random_state(&mut rng, 1))
        .with_state("b", random_state(&mut rng, 1))
        .with_output("z", 1);
    let l = report("[P_ROT(pi/4; a : z) /\\ b[1] ~={0.4} 1] /\\ z[1] ~={0.4} 0", &st);
    let r = report("P_ROT(pi/4; a : z) /\\ [b[1] ~={0.4} 1 /\\ z[1] ~={0.4} 0]", &st);
    assert_eq!(l.verdict, r.verdict);
    assert_eq!(l.positive, r.positive);
}

fn gate_formula() -> impl Strategy<Value = &'static str> {
    prop::sample::select(vec![
        "P_CNOT(y : z)",
        "P_WH(y : z)",
        "(y[1])[P_ROT(pi/3; y[2] : z[2]) || P_ROT(0.4; y[2] : z[2])] /\\ P_I(y[1] : z[1])",
        "(A i <= 2) P_ROT(pi/8; y[i] : z[i])",
        "P_CSWAP(y (*) w : z)",
    ])
}

fn small_formula() -> impl Strategy<Value = String> {
    let atom = prop::sample::select(vec![
        "a[1] ~={0.1} 1".to_string(),
        "a[1] ~={0.3} 0".to_string(),
        "b[2] ~={0.2} 1".to_string(),
        "b ~={0.25} 10".to_string(),
        "(EQ u, |u|=1) [P_ROT(pi/4; a : u) /\\ u[1] ~={0.1} 1]".to_string(),
        "(AQ u, |u|=1) u[1] ~={0.5} 0".to_string(),
        "1 <= 2".to_string(),
    ]);
    atom.prop_recursive(3, 12, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(p, q)| format!("[{p} /\\ {q}]")),
            inner.clone().prop_map(|p| format!("!q [{p}]")),
            (inner.clone(), inner).prop_map(|(p, q)| format!("(b[1])[{p} || {q}]")),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn measurement_free_preserves_norm(src in gate_formula(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let st = Structure::new(vec![false; 4])
            .with_state("y", random_state(&mut rng, if src.contains("w") { 2 } else { 3 }))
            .with_state("w", random_state(&mut rng, 1))
            .with_output("z", 3);
        let st = if src.starts_with("P_CNOT") || src.starts_with("P_WH") || src.starts_with("(A") {
            st.with_state("y", random_state(&mut rng, 3))
        } else {
            st
        };
        let ex = exec(&formula(src), &st);
        prop_assert!((ex.state.norm_sq() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn verdict_trichotomy(src in small_formula(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let st = Structure::from_bits("0110")
            .with_state("a", random_state(&mut rng, 1))
            .with_state("b", random_state(&mut rng, 2));
        let f = formula(&src);
        let (Ok(pos), Ok(neg)) = (eval::execute(&f, &st, &cfg()), eval::execute_negated(&f, &st, &cfg())) else {
            return Ok(());
        };
        let r = eval::evaluate(&f, &st, &cfg()).unwrap();
        match r.verdict {
            Verdict::Accept => prop_assert_eq!(pos.truth, Truth::True),
            Verdict::Reject => prop_assert_eq!(neg.truth, Truth::True),
            Verdict::Undetermined => {
                prop_assert!(pos.truth != Truth::True && neg.truth != Truth::True)
            }
        }
    }

    #[test]
    fn evaluation_is_deterministic(src in small_formula(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let st = Structure::from_bits("0110")
            .with_state("a", random_state(&mut rng, 1))
            .with_state("b", random_state(&mut rng, 2));
        let f = formula(&src);
        let a = eval::evaluate(&f, &st, &cfg());
        let b = eval::evaluate(&f, &st, &cfg());
        match (a, b) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(a.verdict, b.verdict);
                prop_assert_eq!(a.probability, b.probability);
                prop_assert_eq!(a.witnesses, b.witnesses);
            }
            (Err(a), Err(b)) => prop_assert_eq!(a, b),
            _ => prop_assert!(false, "nondeterministic outcome for {}", src),
        }
    }
}
