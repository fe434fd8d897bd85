mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{basis_vec, c, random_state, vec_dist, C};
use qfo::ast::{Angle, Gate};
use qfo::qstate::*;

const TOL: f64 = 1e-12;

fn start(amps: &[C]) -> (JointState, Vec<Wire>) {
    JointState::new(20).adjoin_amplitudes(amps).unwrap()
}

fn basis(bits: &str) -> (JointState, Vec<Wire>) {
    let b: Vec<bool> = bits.chars().map(|ch| ch == '1').collect();
    JointState::new(20).adjoin(&b).unwrap()
}

fn dense_eq(a: &[C], b: &[C]) -> bool {
    vec_dist(a, b) <= TOL
}

#[test]
fn rotations() {
    let (s, w) = basis("0");
    let not = s.apply_1q(&Gate::Rot(Angle::pi_frac(1, 1)), w[0], &[]).unwrap();
    assert!(dense_eq(&not.to_dense(), &basis_vec(2, 1)));
    let h = s.apply_1q(&Gate::Rot(Angle::pi_frac(1, 4)), w[0], &[]).unwrap();
    let r = std::f64::consts::FRAC_1_SQRT_2;
    assert!(dense_eq(&h.to_dense(), &[c(r), c(r)]));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (s, w) = start(&random_state(&mut rng, 3));
    let id = s.apply_1q(&Gate::Identity, w[1], &[]).unwrap();
    assert!(s.max_diff(&id) == 0.0);
    let th = 0.3f64;
    let (s, w) = basis("1");
    let r = s.apply_1q(&Gate::Rot(Angle::Radians(th)), w[0], &[]).unwrap();
    assert!(dense_eq(&r.to_dense(), &[c(-th.sin()), c(th.cos())]));
}

#[test]
fn controlled_gate_acts_on_component() {
    let (s, w) = basis("10");
    let flipped = s.apply_1q(&Gate::Rot(Angle::pi_frac(1, 1)), w[1], &[(w[0], true)]).unwrap();
    assert!(dense_eq(&flipped.to_dense(), &basis_vec(4, 3)));
    let kept = s.apply_1q(&Gate::Rot(Angle::pi_frac(1, 1)), w[1], &[(w[0], false)]).unwrap();
    assert!(dense_eq(&kept.to_dense(), &basis_vec(4, 2)));
}

#[test]
fn unknown_wire() {
    let (s, _) = basis("0");
    assert!(matches!(s.apply_1q(&Gate::Identity, 7, &[]), Err(QStateError::UnknownWire(7))));
    assert!(s.project_bit(9, true).is_err());
}

#[test]
fn swap_examples() {
    let (s, w) = basis("01");
    assert!(dense_eq(&s.swap_to_front(1, &w).unwrap().to_dense(), &s.to_dense()));
    let t = s.swap_to_front(2, &w).unwrap();
    assert!(dense_eq(&t.to_dense(), &basis_vec(4, 0b10)));
    // order 2 on two wires
    assert!(dense_eq(&t.swap_to_front(2, &w).unwrap().to_dense(), &s.to_dense()));
    // u1 u2 u3 = 0 0 1 with i = 3 gives 1 0 0
    let (s, w) = basis("001");
    assert!(dense_eq(&s.swap_to_front(3, &w).unwrap().to_dense(), &basis_vec(8, 0b100)));
    // u1 u2 u3 = 1 0 0 with i = 3 gives 0 1 0
    let (s, w) = basis("100");
    assert!(dense_eq(&s.swap_to_front(3, &w).unwrap().to_dense(), &basis_vec(8, 0b010)));
    assert!(s.swap_to_front(0, &w).is_err());
    assert!(s.swap_to_front(4, &w).is_err());
}

#[test]
fn controlled_swap_example() {
    // index (|0> + |1>)/sqrt 2 selects qubit 1 or qubit 2 of |10>
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let (s, idx) = start(&[c(r), c(r)]);
    let (s, tgt) = s.adjoin(&[true, false]).unwrap();
    let out = s.controlled_swap_to_front(&idx, &tgt, &[]).unwrap();
    let mut want = vec![c(0.0); 8];
    want[0b010] = c(r);
    want[0b101] = c(r);
    assert!(dense_eq(&out.to_dense(), &want));
    let back = out.controlled_swap_from_front(&idx, &tgt, &[]).unwrap();
    assert!(back.max_diff(&s) <= TOL);
    assert!(s.controlled_swap_to_front(&idx, &idx, &[]).is_err());
}

#[test]
fn controlled_swap_basis_index_matches_swap() {
    for i in 1..=3usize {
        let bits: Vec<bool> = (0..2).map(|k| ((i - 1) >> (1 - k)) & 1 == 1).collect();
        let (s, idx) = JointState::new(20).adjoin(&bits).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
        let (s, tgt) = s.adjoin_amplitudes(&random_state(&mut rng, 3)).unwrap();
        let a = s.controlled_swap_to_front(&idx, &tgt, &[]).unwrap();
        let b = s.swap_to_front(i, &tgt).unwrap();
        assert!(a.max_diff(&b) <= TOL);
    }
}

/// `SWAP_i` on basis value `v` of a `k`-qubit bundle, computed on bit lists.
fn swap_oracle(k: usize, i: usize, v: usize) -> usize {
    let bits: Vec<usize> = (0..k).map(|p| (v >> (k - 1 - p)) & 1).collect();
    let mut out = vec![bits[i - 1]];
    out.extend(&bits[..i - 1]);
    out.extend(&bits[i..]);
    out.iter().fold(0, |acc, b| acc * 2 + b)
}

#[test]
fn controlled_swap_is_block_diagonal() {
    for k in 1..=4usize {
        let m = 2usize;
        let dim = 1 << (m + k);
        for col in 0..dim {
            let (j, v) = (col >> k, col & ((1 << k) - 1));
            let (s, idx) = JointState::new(20).adjoin_amplitudes(&basis_vec(1 << m, j)).unwrap();
            let (s, tgt) = s.adjoin_amplitudes(&basis_vec(1 << k, v)).unwrap();
            let out = s.controlled_swap_to_front(&idx, &tgt, &[]).unwrap().to_dense();
            let w = if j < k { swap_oracle(k, j + 1, v) } else { v };
            let want = basis_vec(dim, (j << k) | w);
            let diff = out.iter().zip(&want).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(diff <= 1e-12, "k={k} column {col}");
        }
    }
}

#[test]
fn projection_examples() {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let (s, w) = start(&[c(r), c(r)]);
    let p = s.project_bit(w[0], false).unwrap();
    assert!(dense_eq(&p.to_dense(), &[c(r), c(0.0)]));
    assert!((p.norm_sq() - 0.5).abs() <= TOL);
    let (s, w) = basis("1");
    assert!(s.project_bit(w[0], true).unwrap().max_diff(&s) == 0.0);
    assert_eq!(s.project_bit(w[0], false).unwrap().norm_sq(), 0.0);
}

#[test]
fn measure_check_examples() {
    let (s, w) = basis("1");
    assert!(s.measure_check(&w, &[true], 0.0, 0.0).unwrap());
    let (s, w) = start(&[c(0.9f64.sqrt()), c(0.1f64.sqrt())]);
    assert!(s.measure_check(&w, &[false], 0.1, 1e-9).unwrap());
    assert!(!s.measure_check(&w, &[true], 0.1, 1e-9).unwrap());
    let before = s.clone();
    let _ = s.measure_check(&w, &[true], 0.1, 1e-9);
    assert_eq!(s.max_diff(&before), 0.0);
    assert!(s.measure_check(&w, &[true, false], 0.1, 1e-9).is_err());
    // one projection over two qubits, not two independent checks
    let h = 0.5f64;
    let (s, w) = start(&[c(h), c(h), c(h), c(h)]);
    assert!((s.failure_mass(&w, &[false, false], &[]) - 0.75).abs() <= TOL);
}

#[test]
fn adjoin_examples() {
    let (s, _) = basis("1");
    let (t, fresh) = s.adjoin(&[false]).unwrap();
    assert!(dense_eq(&t.to_dense(), &basis_vec(4, 0b10)));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (s, _) = start(&random_state(&mut rng, 3));
    let (t, fresh2) = s.adjoin(&[true, false]).unwrap();
    assert!((t.norm_sq() - s.norm_sq()).abs() <= TOL);
    let p = t.project(&[(fresh2[0], true), (fresh2[1], false)]);
    assert!((p.norm_sq() - s.norm_sq()).abs() <= TOL);
    assert_ne!(fresh, fresh2);
}

#[test]
fn capacity_is_enforced() {
    let s = JointState::new(2);
    let (s, _) = s.adjoin(&[false, true]).unwrap();
    assert!(matches!(s.adjoin(&[false]), Err(QStateError::Capacity { cap: 2, .. })));
    assert_eq!(s.peak_wires(), 2);
}

#[test]
fn extract_detects_entanglement() {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let (s, w) = start(&[c(r), c(0.0), c(0.0), c(r)]);
    assert!(s.extract(&w[..1]).is_none());
    assert!(dense_eq(&s.extract(&w).unwrap(), &[c(r), c(0.0), c(0.0), c(r)]));
    let (s, w) = basis("10");
    assert!(dense_eq(&s.extract(&w[1..]).unwrap(), &basis_vec(2, 0)));
}

#[test]
fn debug_dump_format() {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let (s, _) = start(&[c(0.0), c(r), c(0.0), C::new(0.0, -0.5)]);
    assert_eq!(s.debug_dump(), "|01> 0.707106781187 0\n|11> 0 -0.5\n");
    assert_eq!(fmt_sig(1.0), "1");
    assert_eq!(fmt_sig(0.1 + 0.2), "0.3");
    assert_eq!(fmt_sig(1.5e-20), "1.5e-20");
}

fn any_gate() -> impl Strategy<Value = Gate> {
    prop_oneof![
        Just(Gate::Identity),
        (-8i64..9, 1i64..9).prop_map(|(n, d)| Gate::Rot(Angle::pi_frac(n, d))),
        (-3.0f64..3.0).prop_map(|t| Gate::Rot(Angle::Radians(t))),
    ]
}

proptest! {
    #[test]
    fn gates_preserve_norm(seed in any::<u64>(), k in 1usize..6, gates in prop::collection::vec((any_gate(), 0usize..6), 1..12)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut s, w) = start(&random_state(&mut rng, k));
        for (g, at) in gates {
            s = s.apply_1q(&g, w[at % k], &[]).unwrap();
        }
        prop_assert!((s.norm_sq() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn projections_sum_to_state(seed in any::<u64>(), k in 1usize..6, at in 0usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (s, w) = start(&random_state(&mut rng, k));
        let a = s.project_bit(w[at % k], false).unwrap().to_dense();
        let b = s.project_bit(w[at % k], true).unwrap().to_dense();
        let d = s.to_dense();
        for j in 0..d.len() {
            prop_assert!((a[j] + b[j] - d[j]).norm() <= 1e-12);
        }
        prop_assert!(s.project_bit(w[at % k], true).unwrap().norm_sq() <= s.norm_sq() + 1e-12);
    }

    #[test]
    fn swap_inverse_restores(seed in any::<u64>(), k in 1usize..6, i in 1usize..6) {
        let i = (i - 1) % k + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (s, w) = start(&random_state(&mut rng, k));
        let t = s.swap_to_front(i, &w).unwrap();
        prop_assert!(t.swap_inverse(i, &w).unwrap().max_diff(&s) <= 1e-12);
        let u = s.swap_inverse(i, &w).unwrap();
        prop_assert!(u.swap_to_front(i, &w).unwrap().max_diff(&s) <= 1e-12);
    }

    #[test]
    fn controlled_swap_round_trip(seed in any::<u64>(), k in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (s, idx) = start(&random_state(&mut rng, 2));
        let (s, tgt) = s.adjoin_amplitudes(&random_state(&mut rng, k)).unwrap();
        let t = s.controlled_swap_to_front(&idx, &tgt, &[]).unwrap();
        prop_assert!((t.norm_sq() - s.norm_sq()).abs() <= 1e-12);
        prop_assert!(t.controlled_swap_from_front(&idx, &tgt, &[]).unwrap().max_diff(&s) <= 1e-12);
    }
}
