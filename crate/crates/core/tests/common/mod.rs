#![allow(dead_code)]

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;
use std::path::PathBuf;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use qfo::ast::{Formula, Structure};
use qfo::eval::{self, Execution, RunConfig};
use qfo::parser::parse_formula;
use qfo::qstate::MAX_WIRES;
use qfo::qtm::{parse_qtm, QtmSpec};

pub type C = Complex64;
pub type M = DMatrix<C>;

pub fn c(re: f64) -> C {
    C::new(re, 0.0)
}

pub fn manifest() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn fixture_path(rel: &str) -> PathBuf {
    manifest().join("fixtures").join(rel)
}

pub fn machine(name: &str) -> QtmSpec {
    let p = fixture_path(&format!("qtm/{name}.qtm"));
    parse_qtm(&std::fs::read_to_string(&p).unwrap()).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

/// Machines that run at every n in {2, 4, 8}, with the number of states.
pub const MACHINES: &[&str] = &[
    "halt_immediately",
    "write_one",
    "single_rot",
    "rot_rot",
    "rot_undo",
    "rot_pi_8",
    "query_copy",
    "query_negate",
    "query_controlled_rot",
    "move_rotate",
    "reflection",
    "negate_twice",
    "superposed_head",
];

/// Machines that need at least three steps, so n >= 4.
pub const LONG_MACHINES: &[&str] = &["query_second", "index_walk"];

pub fn formula(src: &str) -> Formula {
    parse_formula(src).unwrap_or_else(|d| panic!("{src}: {d:?}"))
}

pub fn bits(s: &str) -> Vec<bool> {
    s.chars().map(|ch| ch == '1').collect()
}

/// Every string of length n, in counting order.
pub fn all_inputs(n: u64) -> Vec<Vec<bool>> {
    (0..1u64 << n)
        .map(|v| (0..n).map(|k| (v >> (n - 1 - k)) & 1 == 1).collect())
        .collect()
}

pub fn basis_vec(dim: usize, j: usize) -> Vec<C> {
    let mut v = vec![c(0.0); dim];
    v[j] = c(1.0);
    v
}

pub fn random_state<R: Rng>(rng: &mut R, k: usize) -> Vec<C> {
    let mut v: Vec<C> = (0..1usize << k)
        .map(|_| C::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let norm = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    for a in &mut v {
        *a /= norm;
    }
    v
}

pub fn kron(a: &M, b: &M) -> M {
    a.kronecker(b)
}

pub fn hadamard() -> M {
    M::from_row_slice(2, 2, &[c(FRAC_1_SQRT_2), c(FRAC_1_SQRT_2), c(FRAC_1_SQRT_2), c(-FRAC_1_SQRT_2)])
}

pub fn identity(k: usize) -> M {
    M::identity(1 << k, 1 << k)
}

/// Permutation matrix sending basis `j` to `f(j)`.
pub fn permutation(k: usize, f: impl Fn(usize) -> usize) -> M {
    let d = 1 << k;
    let mut m = M::zeros(d, d);
    for j in 0..d {
        m[(f(j), j)] = c(1.0);
    }
    m
}

pub fn max_abs_diff(a: &M, b: &M) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn vec_dist(a: &[C], b: &[C]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

/// The matrix realized by a formula that defines `outputs` from `inputs`,
/// reconstructed by lowering once and running every basis input.
pub fn gate_matrix(src: &str, inputs: &[(&str, usize)], outputs: &[(&str, usize)]) -> M {
    let f = formula(src);
    let mut st = Structure::new(vec![false; 2]);
    for (name, k) in inputs {
        st = st.with_basis(name, &vec![false; *k]);
    }
    for (name, k) in outputs {
        st = st.with_output(name, *k);
    }
    let ir = eval::lower(&f, &st).unwrap_or_else(|e| panic!("{src}: {e}"));
    let kin: usize = inputs.iter().map(|(_, k)| k).sum();
    let kout: usize = outputs.iter().map(|(_, k)| k).sum();
    let mut m = M::zeros(1 << kout, 1 << kin);
    for j in 0..1usize << kin {
        let mut map = BTreeMap::new();
        let mut shift = kin;
        for (name, k) in inputs {
            shift -= k;
            let part = (j >> shift) & ((1 << k) - 1);
            map.insert(name.to_string(), basis_vec(1 << k, part));
        }
        let run = ir.run(&map, &[false, false], MAX_WIRES, 1e-9).unwrap();
        assert!(run.checks.iter().all(|&b| b), "{src}: a check failed on basis {j}");
        let wires: Vec<_> = outputs.iter().flat_map(|(name, _)| run.outputs[*name].clone()).collect();
        let col = run
            .state
            .extract(&wires)
            .unwrap_or_else(|| panic!("{src}: output entangled with scratch wires"));
        for (r, a) in col.into_iter().enumerate() {
            m[(r, j)] = a;
        }
    }
    m
}

pub fn exec(f: &Formula, st: &Structure) -> Execution {
    eval::execute(f, st, &RunConfig::default()).unwrap_or_else(|e| panic!("{e}"))
}

/// Amplitudes of the named output variables of an execution, concatenated.
pub fn output_state(ex: &Execution, names: &[&str]) -> Vec<C> {
    let wires: Vec<_> = names.iter().flat_map(|n| ex.outputs[*n].clone()).collect();
    ex.state.extract(&wires).expect("outputs are entangled with other wires")
}

/// The single basis value of `wire` in a basis state.
pub fn basis_bit(ex: &Execution, wire: usize) -> bool {
    let mut it = ex.state.entries().filter(|(_, a)| a.norm() > 1e-12);
    let (k, a) = it.next().expect("zero state");
    assert!(it.next().is_none(), "state is not a basis state");
    assert!((a.norm() - 1.0).abs() < 1e-9);
    k.get(wire)
}
