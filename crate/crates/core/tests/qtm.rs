mod common;

use std::f64::consts::PI;

use proptest::prelude::*;

use common::*;
use qfo::qtm::*;

const TOL: f64 = 1e-9;

fn x_at(x: &[bool], v: usize) -> f64 {
    x[v] as u8 as f64
}

/// Closed-form acceptance probability of each fixture.
fn expected(name: &str, x: &[bool]) -> f64 {
    let l = qfo::ast::ilog(x.len() as u64).unwrap();
    match name {
        "halt_immediately" | "rot_undo" | "negate_twice" => 0.0,
        "write_one" | "rot_rot" => 1.0,
        "single_rot" | "superposed_head" => 0.5,
        "rot_pi_8" => (PI / 8.0).sin().powi(2),
        "move_rotate" | "reflection" => 0.75,
        "query_copy" => x_at(x, 0),
        "query_negate" => 1.0 - x_at(x, 0),
        "query_controlled_rot" => 0.5 * x_at(x, 0),
        "query_second" | "index_walk" => x_at(x, 1 << (l - 1)),
        _ => panic!("no expectation for {name}"),
    }
}

#[test]
fn tape_encoding() {
    assert_eq!(encode_tape("01B").unwrap(), "000111");
    assert_eq!(encode_tape("").unwrap(), "");
    assert_eq!(encode_tape("B").unwrap(), "11");
    assert!(matches!(encode_tape("012"), Err(QtmError::Parse { .. })));
    for s in Sym::ALL {
        assert_eq!(Sym::from_char(s.as_char()), Some(s));
    }
    assert!(!Sym::Zero.address_bit() && Sym::One.address_bit() && Sym::Blank.address_bit());
}

#[test]
fn amplitudes() {
    let near = |t: &str, v: f64| (parse_amplitude(t).unwrap() - v).abs() < 1e-15;
    assert!(near("1", 1.0));
    assert!(near("0.5", 0.5));
    assert!(near("cos(pi/4)", (PI / 4.0).cos()));
    assert!(near("-sin(2*pi/3)", -(2.0 * PI / 3.0).sin()));
    assert!(near("sin(pi)", PI.sin()));
    assert_eq!(parse_amplitude("cos(pi/0)"), None);
    assert_eq!(parse_amplitude("tan(pi/4)"), None);
    assert_eq!(parse_amplitude("inf"), None);
}

#[test]
fn parse_errors() {
    let line_of = |src: &str| match parse_qtm(src) {
        Err(QtmError::Parse { line, .. }) => Some(line),
        _ => None,
    };
    assert_eq!(line_of("states: q0 qf\nbogus line\n"), Some(2));
    assert_eq!(
        line_of("states: q0 qf\ninitial: q0\nhalting: qf\nc: 1\ndelta: q0 * 0 * -> 1 qf 1 * 0 2\n"),
        Some(5)
    );
    assert_eq!(
        line_of("states: q0 qf\ninitial: q0\nhalting: qf\nc: 1\ndelta: q0 * 2 * -> 1 qf 1 * 0 0\n"),
        Some(5)
    );
    assert!(parse_qtm("states: q0 qf\ninitial: q9\nhalting: qf\nc: 1\n").is_err());
    assert!(parse_qtm("initial: q0\n").is_err());
    assert!(parse_qtm("states: q0 qf\ninitial: q0\nhalting: qf\nc: 1\ndelta: q0 * 0 * -> huge qf 1 * 0 0\n").is_err());
}

#[test]
fn parsed_fields() {
    let m = machine("query_copy");
    assert_eq!(m.states, ["qq", "qn", "qf"]);
    assert_eq!(m.query, Some((0, 1)));
    assert_eq!(m.c, 2);
    assert!(m.is_halting(2) && !m.is_halting(0));
    assert_eq!(m.rows.len(), 2);
    assert_eq!(m.state_index("qn"), Some(1));
    let r = machine("single_rot");
    assert_eq!(r.rows[0].moves.len(), 2);
    assert_eq!(r.rows[0].moves[1].amp_text, "sin(pi/4)");
}

#[test]
fn geometry_examples() {
    let m = machine("query_copy");
    let g = m.geometry(8).unwrap();
    assert_eq!((g.index_cells, g.work_cells, g.steps), (3, 6, 6));
    let g = m.geometry(5).unwrap();
    assert_eq!((g.index_cells, g.work_cells, g.steps), (3, 6, 6));
    assert_eq!(m.geometry(2).unwrap().index_cells, 1);
    assert!(matches!(m.geometry(1), Err(QtmError::Spec(_))));
    let cfg = Config::initial(&m.geometry(4).unwrap());
    assert_eq!((cfg.state, cfg.l2, cfg.l3, cfg.l1, cfg.ans), (0, 1, 1, 0, false));
    assert_eq!(cfg.index, vec![Sym::Zero; 2]);
    assert_eq!(cfg.work, vec![Sym::Zero; 4]);
}

#[test]
fn fixture_probabilities() {
    for name in MACHINES {
        let m = machine(name);
        for n in [2u64, 4, 8] {
            for x in all_inputs(n) {
                let r = run(&m, &x).unwrap();
                let want = expected(name, &x);
                assert!((r.probability - want).abs() <= TOL, "{name} x={x:?}: {} vs {want}", r.probability);
                assert!((r.total_mass - 1.0).abs() <= TOL);
                assert!(!r.timed_out, "{name}");
            }
        }
    }
    for name in LONG_MACHINES {
        let m = machine(name);
        for n in [4u64, 8] {
            for x in all_inputs(n) {
                let r = run(&m, &x).unwrap();
                assert!((r.probability - expected(name, &x)).abs() <= TOL, "{name} x={x:?}");
                assert!(!r.timed_out);
            }
        }
    }
    // two steps are not enough
    assert!(run(&machine("query_second"), &[false, true]).unwrap().timed_out);
    // the index head walks off a one-cell tape
    assert!(matches!(run(&machine("index_walk"), &[false, true]), Err(QtmError::Machine(_))));
}

#[test]
fn fixtures_are_well_formed() {
    for name in MACHINES {
        let m = machine(name);
        for n in [2u64, 4] {
            for x in all_inputs(n) {
                let r = check_wellformed_qtm(&m, n, &x, CONFIG_CAP).unwrap();
                assert!(r.well_formed, "{name} x={x:?}\n{}", r.render_text());
                assert!(r.max_deviation <= TOL);
                assert!(r.issues.is_empty());
            }
        }
    }
}

#[test]
fn bad_fixtures() {
    let bad = |name: &str| {
        let p = fixture_path(&format!("qtm/bad/{name}.qtm"));
        parse_qtm(&std::fs::read_to_string(p).unwrap()).unwrap()
    };
    let x = [false, true];
    let r = check_wellformed_qtm(&bad("amplitudes"), 2, &x, CONFIG_CAP).unwrap();
    assert!(!r.well_formed);
    assert!(r.issues.iter().any(|i| i.contains("squared norm 2")), "{:?}", r.issues);
    assert!(r.render_text().starts_with("not well-formed\n"));

    let r = check_wellformed_qtm(&bad("collision"), 2, &x, CONFIG_CAP).unwrap();
    assert!(!r.well_formed);
    assert!(r.max_deviation > 0.1, "{}", r.max_deviation);

    let off = bad("off_tape");
    assert!(matches!(run(&off, &x), Err(QtmError::Machine(_))));
    let r = check_wellformed_qtm(&off, 2, &x, CONFIG_CAP).unwrap();
    assert!(!r.well_formed && !r.issues.is_empty());

    assert!(check_wellformed_qtm(&off, 3, &x, CONFIG_CAP).is_err());
}

#[test]
fn head_directions() {
    let d = directions(&machine("superposed_head")).unwrap();
    assert_eq!(d[&1], (0, 1));
    assert_eq!(d[&2], (0, 0));
    assert_eq!(directions(&machine("query_copy")).unwrap()[&1], (0, 0));
    let split = parse_qtm(
        "states: q0 qf\ninitial: q0\nhalting: qf\nc: 2\n\
         delta: q0 * 0 * -> cos(pi/4) qf 0 * 0 1 | sin(pi/4) qf 1 * 0 0\n",
    )
    .unwrap();
    assert!(directions(&split).is_err());
}

#[test]
fn reachable_sources() {
    let m = machine("query_copy");
    let seen = reachable_local(&m, 2).unwrap();
    // both answer values meet qn on a zero work cell
    assert!(seen.contains(&(false, 1, Sym::Zero, Sym::Zero)));
    assert!(seen.contains(&(true, 1, Sym::Zero, Sym::Zero)));
    assert!(matches!(reachable_local(&m, 32), Err(QtmError::Capacity(_))));
}

#[test]
fn halting_times_and_timeout() {
    let r = run(&machine("halt_immediately"), &[false, false]).unwrap();
    assert_eq!(r.halting_times.get(&0), Some(&1.0));
    let r = run(&machine("write_one"), &[false, false]).unwrap();
    assert!((r.halting_times[&1] - 1.0).abs() <= TOL);
    assert!((r.halted_mass - 1.0).abs() <= TOL);
    let r = simulate(&machine("rot_rot"), &[false, false], 1).unwrap();
    assert!(r.timed_out);
    assert!(r.halted_mass.abs() <= TOL);
    assert!((r.total_mass - 1.0).abs() <= TOL);
    assert!((r.probability - 0.5).abs() <= TOL);
}

/// Queries twice before copying the answer register into the output cell.
const DOUBLE_QUERY: &str = "\
states: qq qn qf
initial: qq
halting: qf
query: qq -> qn
c: 4
delta: qn * 0 * -> 1 qq 1 * 0 0
delta: qn 0 1 * -> 1 qf 0 * 0 0
delta: qn 1 1 * -> 1 qf 1 * 0 0
";

#[test]
fn query_is_an_involution() {
    let m = parse_qtm(DOUBLE_QUERY).unwrap();
    for x in all_inputs(4) {
        let r = run(&m, &x).unwrap();
        assert!(r.probability.abs() <= TOL, "x={x:?}");
        assert!((r.halted_mass - 1.0).abs() <= TOL);
    }
    let single = machine("query_copy");
    let geo = single.geometry(2).unwrap();
    let c0 = Config::initial(&geo);
    let once = step(&single, &c0, &[true, false]).unwrap();
    assert_eq!(once.len(), 1);
    assert!(once[0].1.ans);
    let mut back = once[0].1.clone();
    back.state = 0;
    let twice = step(&single, &back, &[true, false]).unwrap();
    assert!(!twice[0].1.ans);
    assert_eq!(twice[0].1.l1, 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mass_is_conserved(k in 0..MACHINES.len(), e in 1u32..4, v in any::<u64>()) {
        let m = machine(MACHINES[k]);
        let n = 1u64 << e;
        let x: Vec<bool> = (0..n).map(|j| (v >> j) & 1 == 1).collect();
        let r = run(&m, &x).unwrap();
        prop_assert!((r.total_mass - 1.0).abs() <= TOL);
        prop_assert!(r.probability >= -TOL && r.probability <= 1.0 + TOL);
        let entered: f64 = r.halting_times.values().sum();
        prop_assert!((entered - r.halted_mass).abs() <= TOL);
    }

    #[test]
    fn simulation_is_deterministic(k in 0..MACHINES.len(), v in any::<u8>()) {
        let m = machine(MACHINES[k]);
        let x: Vec<bool> = (0..4).map(|j| (v >> j) & 1 == 1).collect();
        let a = run(&m, &x).unwrap();
        let b = run(&m, &x).unwrap();
        prop_assert_eq!(a.probability.to_bits(), b.probability.to_bits());
        prop_assert_eq!(a, b);
    }
}
