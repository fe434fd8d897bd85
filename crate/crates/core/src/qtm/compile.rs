//! Translation of a logtime QTM into an equivalent sentence.
//!
//! A configuration is held in one bundle `Z` (see [`Layout`]). One machine
//! step is a formula `STEP(Z : Z')` built from quantum ORs and single-qubit
//! predicates:
//!
//! 1. at the query state, `ans ⊕= X(addr)` and `r1 ⊕= addr`;
//! 2. the scanned index and work cells are swapped into scratch registers,
//!    selected by the unary head registers;
//! 3. the local transition, a unitary on state, answer and the two scratch
//!    cells, is applied as a product of two-level rotations;
//! 4. the scratch cells are swapped back;
//! 5. the heads move according to the new state;
//! 6. the halted flag is raised when the new state is halting.
//!
//! The whole step is wrapped in an OR on the halted flag so halted
//! configurations are copied unchanged. Intermediate qubits are instances of
//! a functional variable `a` of size one. The machine must be
//! unidirectional: every state is entered with a fixed pair of head moves.

use std::collections::BTreeMap;

use crate::ast::{Angle, Bound, CTerm, CmpOp, Formula, Gate, QTerm, QuantKind, Qtc, Span, Structure};
use crate::eval::{self, EvalError, RunConfig};
use crate::parser::pretty;

use super::{directions, reachable_local, QtmError, QtmSpec, Sym};

type R<T> = Result<T, QtmError>;

const TOL: f64 = 1e-9;
const ZERO: f64 = 1e-13;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CompileMode {
    /// `QTC[...]` over one configuration bundle per step.
    Qtc,
    /// Functional variables `Y_1..Y_c`, one instance per step.
    Functional,
}

impl std::fmt::Display for CompileMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CompileMode::Qtc => "qtc",
            CompileMode::Functional => "functional",
        })
    }
}

/// Slicing of the configuration bundle; ranges are 1-based and inclusive.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub e: usize,
    pub l: usize,
    pub c: usize,
    pub s: (usize, usize),
    pub ans: usize,
    pub r1: (usize, usize),
    pub r2: (usize, usize),
    pub y1: (usize, usize),
    pub r3: (usize, usize),
    pub y2: (usize, usize),
    /// Halted flag.
    pub h: usize,
    pub width: usize,
}

impl Layout {
    pub fn new(states: usize, l: usize, c: usize) -> Layout {
        let mut e = 1;
        while (1usize << e) < states {
            e += 1;
        }
        let cl = c * l;
        Layout {
            e,
            l,
            c,
            s: (1, e),
            ans: e + 1,
            r1: (e + 2, e + l + 1),
            r2: (e + l + 2, e + 2 * l + 1),
            y1: (e + 2 * l + 2, e + 4 * l + 1),
            r3: (e + 4 * l + 2, e + 4 * l + cl + 1),
            y2: (e + 4 * l + cl + 2, e + 4 * l + 3 * cl + 1),
            h: e + 4 * l + 3 * cl + 2,
            width: e + (4 + 3 * c) * l + 2,
        }
    }

    /// Second code bit of work cell 1.
    pub fn output(&self) -> usize {
        self.y2.0 + 1
    }

    pub fn index_cell(&self, i: usize) -> (usize, usize) {
        let p = self.y1.0 + 2 * (i - 1);
        (p, p + 1)
    }

    pub fn work_cell(&self, i: usize) -> (usize, usize) {
        let p = self.y2.0 + 2 * (i - 1);
        (p, p + 1)
    }

    /// Bundle contents of the start configuration.
    pub fn initial_bits(&self, q0_halting: bool) -> Vec<bool> {
        let mut z = vec![false; self.width];
        z[self.r2.0 - 1] = true;
        z[self.r3.0 - 1] = true;
        z[self.h - 1] = q0_halting;
        z
    }

    pub fn render(&self) -> String {
        let r = |(a, b): (usize, usize)| format!("[{a}, {b}]");
        format!(
            "|Z| = {}\ns = {}\nans = {}\nr1 = {}\nr2 = {}\ny1 = {}\nr3 = {}\ny2 = {}\nhalted = {}\noutput = {}\n",
            self.width,
            r(self.s),
            self.ans,
            r(self.r1),
            r(self.r2),
            r(self.y1),
            r(self.r3),
            r(self.y2),
            self.h,
            self.output()
        )
    }
}

#[derive(Clone, Debug)]
pub struct CompiledSentence {
    pub sentence: Formula,
    pub layout: Layout,
    pub mode: CompileMode,
    pub n: u64,
    pub steps: u64,
    pub eps: f64,
    /// Two-level rotations in the local transition.
    pub rotations: usize,
}

impl CompiledSentence {
    /// Source text with the layout as a comment header.
    pub fn to_qfo(&self) -> String {
        let mut s = format!(
            "# compiled QTM, {} form, n = {}, {} steps\n",
            self.mode, self.n, self.steps
        );
        for line in self.layout.render().lines() {
            s.push_str(&format!("# {line}\n"));
        }
        s.push_str(&format!("@n = {}\n@wire_cap = {}\n", self.n, self.run_config().wire_cap));
        s.push_str(&pretty(&self.sentence));
        s.push('\n');
        s
    }

    pub fn structure(&self, x: &[bool]) -> Structure {
        Structure::new(x.to_vec())
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            wire_cap: 128,
            ..RunConfig::default()
        }
    }

    /// Probability that the output cell reads 1 on input `x`.
    pub fn probability(&self, x: &[bool]) -> Result<f64, EvalError> {
        if x.len() as u64 != self.n {
            return Err(EvalError::Structure(format!(
                "sentence compiled for n = {}, input has {} bits",
                self.n,
                x.len()
            )));
        }
        let ex = eval::execute(&self.sentence, &self.structure(x), &self.run_config())?;
        ex.probability
            .ok_or_else(|| EvalError::Runtime("no final measurement".into()))
    }
}

pub fn compile_qtc(m: &QtmSpec, n: u64) -> R<CompiledSentence> {
    compile(m, n, CompileMode::Qtc, 1.0 / 3.0)
}

pub fn compile_functional(m: &QtmSpec, n: u64) -> R<CompiledSentence> {
    compile(m, n, CompileMode::Functional, 1.0 / 3.0)
}

/// Compiles for inputs of length `n`; `eps` is the error bound of the final
/// measurement.
pub fn compile(m: &QtmSpec, n: u64, mode: CompileMode, eps: f64) -> R<CompiledSentence> {
    let geo = m.geometry(n)?;
    let layout = Layout::new(m.states.len(), geo.index_cells, m.c as usize);
    let local = LocalMap::build(m, n, &layout)?;
    let ops = local.decompose();
    let rotations = ops.len();
    let plan = StepPlan {
        layout: &layout,
        local: &local,
        ops: &ops,
    };
    let init = layout.initial_bits(m.is_halting(0));
    let const_bits = QTerm::tensor_all(init.iter().map(|&b| QTerm::Bit(b)).collect());
    let steps_term = (1..m.c).fold(CTerm::Ilog, |acc, _| CTerm::add(acc, CTerm::Ilog));
    let out_bit = |t: QTerm| Formula::measure(t.at_num(layout.output() as u64), eps, vec![true]);
    let width = CTerm::num(layout.width as u64);
    let sentence = match mode {
        CompileMode::Qtc => {
            let (step, domain) = plan.build(QTerm::var("Z"), QTerm::var("Zn"));
            let relation = fquant(
                "a",
                domain,
                Formula::and(
                    step,
                    Formula::and(
                        Formula::cmp(CmpOp::Eq, CTerm::var("t"), CTerm::Suc(Box::new(CTerm::var("u")))),
                        Formula::cmp(CmpOp::Le, CTerm::var("t"), steps_term.clone()),
                    ),
                ),
            );
            let qtc = Formula::Qtc(Box::new(Qtc {
                i: "t".into(),
                firsts: vec!["Z".into()],
                j: "u".into(),
                seconds: vec!["Zn".into()],
                relation,
                start: steps_term,
                start_args: vec![QTerm::var("Z0")],
                end: CTerm::num(0),
                end_args: vec![QTerm::var("Zf")],
                span: Span::default(),
            }));
            let body = and_balanced(vec![
                Formula::copy(const_bits, QTerm::var("Z0")),
                qtc,
                out_bit(QTerm::var("Zf")),
            ]);
            Formula::exists_q("Z0", width.clone(), Formula::exists_q("Zf", width, body))
        }
        CompileMode::Functional => {
            let y = |k: usize| format!("Y{k}");
            let t = CTerm::var("t");
            let mut parts = vec![Formula::copy(const_bits, QTerm::inst(&y(1), CTerm::num(0)))];
            for k in 1..=layout.c {
                let (step, domain) = plan.build(
                    QTerm::inst(&y(k), t.clone()),
                    QTerm::inst(&y(k), CTerm::Suc(Box::new(t.clone()))),
                );
                parts.push(Formula::CQuant {
                    kind: QuantKind::Forall,
                    var: "t".into(),
                    lo: None,
                    hi: Bound {
                        term: CTerm::Ilog,
                        strict: true,
                    },
                    body: Box::new(fquant("a", domain, step)),
                });
                if k < layout.c {
                    parts.push(Formula::copy(
                        QTerm::inst(&y(k), CTerm::Ilog),
                        QTerm::inst(&y(k + 1), CTerm::num(0)),
                    ));
                }
            }
            parts.push(out_bit(QTerm::inst(&y(layout.c), CTerm::Ilog)));
            let mut f = and_balanced(parts);
            for k in (1..=layout.c).rev() {
                f = Formula::FQuant {
                    var: y(k),
                    domain: CTerm::Ilog,
                    size: width.clone(),
                    body: Box::new(f),
                    span: Span::default(),
                };
            }
            f
        }
    };
    Ok(CompiledSentence {
        sentence,
        layout,
        mode,
        n,
        steps: geo.steps,
        eps,
        rotations,
    })
}

fn fquant(var: &str, domain: u64, body: Formula) -> Formula {
    Formula::FQuant {
        var: var.into(),
        domain: CTerm::num(domain),
        size: CTerm::num(1),
        body: Box::new(body),
        span: Span::default(),
    }
}

/// Conjunction nested as a balanced tree.
pub fn and_balanced(mut parts: Vec<Formula>) -> Formula {
    match parts.len() {
        0 => Formula::truth(),
        1 => parts.pop().unwrap(),
        n => {
            let right = parts.split_off(n / 2);
            Formula::and(and_balanced(parts), and_balanced(right))
        }
    }
}

fn not_gate() -> Gate {
    Gate::Rot(Angle::pi_frac(1, 1))
}

fn hadamard() -> Gate {
    Gate::Rot(Angle::pi_frac(1, 4))
}

// ---- the local transition ----

/// Which registers take part in the local unitary.
#[derive(Clone, Copy, Debug)]
struct Active {
    ans: bool,
    index: bool,
    work: bool,
}

/// Local transition on `[s, ans?, index cell?, work cell?]`, first bit most
/// significant.
struct LocalMap {
    e: usize,
    active: Active,
    nb: usize,
    /// Column `j` is the image of basis state `j`.
    u: Vec<Vec<f64>>,
    halting: Vec<bool>,
    dirs: Vec<(i8, i8)>,
    query: Option<(usize, usize)>,
}

fn code_bits(s: Sym) -> [bool; 2] {
    s.code()
}

impl LocalMap {
    fn build(m: &QtmSpec, n: u64, layout: &Layout) -> R<LocalMap> {
        let dirs_map = directions(m).map_err(|e| QtmError::Compile(format!("machine is not unidirectional: {e}")))?;
        let active = Active {
            ans: m.query.is_some(),
            index: m
                .rows
                .iter()
                .any(|r| r.index.is_some() || r.moves.iter().any(|mv| mv.index != super::Write::Keep)),
            work: m
                .rows
                .iter()
                .any(|r| r.work.is_some() || r.moves.iter().any(|mv| mv.work != super::Write::Keep)),
        };
        let e = layout.e;
        let nb = e + active.ans as usize + 2 * active.index as usize + 2 * active.work as usize;
        let dim = 1usize << nb;
        let encode = |q: usize, ans: bool, ix: Sym, wk: Sym| -> usize {
            let mut bits: Vec<bool> = (0..e).rev().map(|b| (q >> b) & 1 == 1).collect();
            if active.ans {
                bits.push(ans);
            }
            if active.index {
                bits.extend(code_bits(ix));
            }
            if active.work {
                bits.extend(code_bits(wk));
            }
            bits.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize)
        };
        let sources = reachable_local(m, n).map_err(|e| QtmError::Compile(e.to_string()))?;
        let mut defined: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        let mut add = |j: usize, col: Vec<f64>| -> R<()> {
            if let Some(old) = defined.get(&j) {
                if old.iter().zip(&col).any(|(a, b)| (a - b).abs() > TOL) {
                    return Err(QtmError::Compile(
                        "local transition depends on a register it never reads".into(),
                    ));
                }
            }
            defined.insert(j, col);
            Ok(())
        };
        for &(ans, q, ix, wk) in &sources {
            if let Some((qq, qn)) = m.query {
                if q == qq {
                    for a in [false, true] {
                        let mut col = vec![0.0; dim];
                        col[encode(qn, a, ix, wk)] = 1.0;
                        add(encode(qq, a, ix, wk), col)?;
                    }
                    continue;
                }
            }
            let row = m.row_for(q, ans, wk, ix).ok_or_else(|| {
                QtmError::Compile(format!("state `{}` has no transition for a reachable configuration", m.states[q]))
            })?;
            let mut col = vec![0.0; dim];
            for mv in &row.moves {
                col[encode(mv.state, ans, mv.index.apply(ix), mv.work.apply(wk))] += mv.amp;
            }
            add(encode(q, ans, ix, wk), col)?;
        }
        let cols: Vec<(usize, Vec<f64>)> = defined.into_iter().collect();
        for (a, (ja, ca)) in cols.iter().enumerate() {
            for (jb, cb) in cols.iter().skip(a) {
                let d: f64 = ca.iter().zip(cb).map(|(x, y)| x * y).sum();
                let want = if ja == jb { 1.0 } else { 0.0 };
                if (d - want).abs() > TOL {
                    return Err(QtmError::Compile(format!(
                        "local transitions are not orthonormal (inner product {d:.3e} between columns {ja} and {jb})"
                    )));
                }
            }
        }
        let u = complete(dim, cols);
        let mut dirs = vec![(0i8, 0i8); 1 << e];
        for (p, d) in dirs_map {
            dirs[p] = d;
        }
        let mut halting = vec![false; 1 << e];
        for &p in &m.halting {
            halting[p] = true;
        }
        Ok(LocalMap {
            e,
            active,
            nb,
            u,
            halting,
            dirs,
            query: m.query,
        })
    }

    /// Two-level operations `(u, v, M)` in time order whose product is the
    /// local unitary.
    fn decompose(&self) -> Vec<(usize, usize, [[f64; 2]; 2])> {
        let dim = self.u.len();
        // rows of the working matrix; w[i][j] = column j, entry i
        let mut w: Vec<Vec<f64>> = (0..dim).map(|i| (0..dim).map(|j| self.u[j][i]).collect()).collect();
        let mut elim: Vec<(usize, usize, [[f64; 2]; 2])> = Vec::new();
        #[allow(clippy::needless_range_loop)]
        let apply = |w: &mut Vec<Vec<f64>>, a: usize, b: usize, g: [[f64; 2]; 2]| {
            for k in 0..dim {
                let (x, y) = (w[a][k], w[b][k]);
                w[a][k] = g[0][0] * x + g[0][1] * y;
                w[b][k] = g[1][0] * x + g[1][1] * y;
            }
        };
        for j in 0..dim {
            for i in j + 1..dim {
                if w[i][j].abs() <= ZERO {
                    continue;
                }
                let (a, b) = (w[j][j], w[i][j]);
                let r = a.hypot(b);
                let (c, s) = (a / r, b / r);
                let g = [[c, s], [-s, c]];
                apply(&mut w, j, i, g);
                elim.push((j, i, g));
            }
            if w[j][j] < 0.0 {
                let (a, b, g) = if j + 1 < dim {
                    (j, j + 1, [[-1.0, 0.0], [0.0, -1.0]])
                } else {
                    (j - 1, j, [[1.0, 0.0], [0.0, -1.0]])
                };
                apply(&mut w, a, b, g);
                elim.push((a, b, g));
            }
        }
        elim.into_iter()
            .rev()
            .map(|(a, b, g)| (a, b, [[g[0][0], g[1][0]], [g[0][1], g[1][1]]]))
            .collect()
    }
}

/// Extends orthonormal columns to an orthogonal matrix, preferring basis
/// vectors where they fit.
fn complete(dim: usize, cols: Vec<(usize, Vec<f64>)>) -> Vec<Vec<f64>> {
    let mut u: Vec<Option<Vec<f64>>> = vec![None; dim];
    for (j, c) in cols {
        u[j] = Some(c);
    }
    let orth = |u: &[Option<Vec<f64>>], v: &[f64]| -> Vec<f64> {
        let mut r = v.to_vec();
        for c in u.iter().flatten() {
            let d: f64 = c.iter().zip(&r).map(|(a, b)| a * b).sum();
            for (x, y) in r.iter_mut().zip(c) {
                *x -= d * y;
            }
        }
        r
    };
    for j in 0..dim {
        if u[j].is_none() && u.iter().flatten().all(|c| c[j].abs() <= ZERO) {
            let mut v = vec![0.0; dim];
            v[j] = 1.0;
            u[j] = Some(v);
        }
    }
    for j in 0..dim {
        if u[j].is_some() {
            continue;
        }
        let mut best: Option<Vec<f64>> = None;
        for k in 0..dim {
            let mut v = vec![0.0; dim];
            v[k] = 1.0;
            let r = orth(&u, &orth(&u, &v));
            let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.5 {
                best = Some(r.into_iter().map(|x| x / norm).collect());
                break;
            }
            if best.is_none() && norm > 1e-6 {
                best = Some(r.into_iter().map(|x| x / norm).collect());
            }
        }
        u[j] = best;
    }
    u.into_iter().map(|c| c.expect("completion exhausts the space")).collect()
}

/// Gates, in time order, realising a real orthogonal 2×2 matrix whose
/// column `a` is the image of `|a>`.
fn gates_for(m: [[f64; 2]; 2]) -> Vec<Gate> {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    if close(m[0][0], 0.0) && close(m[1][1], 0.0) && close(m[0][1], 1.0) && close(m[1][0], 1.0) {
        return vec![not_gate()];
    }
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let phi = m[1][0].atan2(m[0][0]);
    let mut out = Vec::new();
    if det < 0.0 {
        // Rot(φ)·Z with Z = H·NOT·H
        out.extend([hadamard(), not_gate(), hadamard()]);
    }
    if phi.abs() > 1e-15 {
        out.push(Gate::Rot(Angle::Radians(phi)));
    }
    out
}

// ---- the step formula ----

/// Multi-controlled gate on the local register.
struct McGate {
    target: usize,
    controls: Vec<(usize, bool)>,
    gates: Vec<Gate>,
}

fn two_level(nb: usize, u: usize, v: usize, m: [[f64; 2]; 2]) -> Vec<McGate> {
    let bit = |x: usize, b: usize| (x >> (nb - 1 - b)) & 1 == 1;
    let diff: Vec<usize> = (0..nb).filter(|&b| bit(u, b) != bit(v, b)).collect();
    let mut path = vec![u];
    for &b in &diff {
        let last = *path.last().unwrap();
        path.push(last ^ (1 << (nb - 1 - b)));
    }
    let controls = |x: usize, target: usize| -> Vec<(usize, bool)> {
        (0..nb).filter(|&b| b != target).map(|b| (b, bit(x, b))).collect()
    };
    let k = diff.len();
    let mut swaps = Vec::new();
    for i in 0..k - 1 {
        swaps.push(McGate {
            target: diff[i],
            controls: controls(path[i], diff[i]),
            gates: vec![not_gate()],
        });
    }
    let last = diff[k - 1];
    let src = path[k - 1];
    let mm = if bit(src, last) {
        [[m[1][1], m[1][0]], [m[0][1], m[0][0]]]
    } else {
        m
    };
    let gates = gates_for(mm);
    let mut out = Vec::new();
    if gates.is_empty() {
        return out;
    }
    let undo: Vec<McGate> = swaps
        .iter()
        .rev()
        .map(|g| McGate {
            target: g.target,
            controls: g.controls.clone(),
            gates: g.gates.clone(),
        })
        .collect();
    out.extend(swaps);
    out.push(McGate {
        target: last,
        controls: controls(src, last),
        gates,
    });
    out.extend(undo);
    out
}

struct StepPlan<'a> {
    layout: &'a Layout,
    local: &'a LocalMap,
    ops: &'a [(usize, usize, [[f64; 2]; 2])],
}

/// Current version of every position while a step is built.
struct Builder {
    next: u64,
    cur: Vec<QTerm>,
}

impl Builder {
    fn fresh(&mut self) -> QTerm {
        let t = QTerm::inst("a", CTerm::num(self.next));
        self.next += 1;
        t
    }

    /// `P_gate` chain on one position.
    fn gates(&mut self, p: usize, gates: &[Gate]) -> Vec<Formula> {
        gates
            .iter()
            .map(|g| {
                let nt = self.fresh();
                let f = Formula::pred(*g, self.cur[p].clone(), nt.clone());
                self.cur[p] = nt;
                f
            })
            .collect()
    }

    /// Runs `body` controlled on the listed positions; the other branches
    /// copy the touched positions to their new versions.
    fn controlled(
        &mut self,
        ctrls: &[(usize, bool)],
        body: impl FnOnce(&mut Builder) -> Vec<Formula>,
    ) -> Formula {
        let old = self.cur.clone();
        let mut f = and_balanced(body(self));
        let touched: Vec<usize> = (0..old.len()).filter(|&p| old[p] != self.cur[p]).collect();
        if touched.is_empty() {
            return Formula::truth();
        }
        debug_assert!(ctrls.iter().all(|(c, _)| !touched.contains(c)));
        let copy = Formula::copy(
            QTerm::tensor_all(touched.iter().map(|&p| old[p].clone()).collect()),
            QTerm::tensor_all(touched.iter().map(|&p| self.cur[p].clone()).collect()),
        );
        for &(c, v) in ctrls.iter().rev() {
            let g = old[c].clone();
            f = if v {
                Formula::or(g, copy.clone(), f)
            } else {
                Formula::or(g, f, copy.clone())
            };
        }
        f
    }

    /// Controlled swap of two equal-length position lists.
    fn cswap(&mut self, g: usize, a: &[usize], b: &[usize]) -> Formula {
        let old: Vec<QTerm> = a.iter().chain(b).map(|&p| self.cur[p].clone()).collect();
        let swapped: Vec<QTerm> = b.iter().chain(a).map(|&p| self.cur[p].clone()).collect();
        let new: Vec<QTerm> = a.iter().chain(b).map(|_| self.fresh()).collect();
        for (&p, t) in a.iter().chain(b).zip(&new) {
            self.cur[p] = t.clone();
        }
        let dst = QTerm::tensor_all(new);
        Formula::or(
            self.cur_guard(g),
            Formula::copy(QTerm::tensor_all(old), dst.clone()),
            Formula::copy(QTerm::tensor_all(swapped), dst),
        )
    }

    fn cur_guard(&self, p: usize) -> QTerm {
        self.cur[p].clone()
    }

    /// Multi quantum OR on `guards`; branch `k` copies `firsts(k)` onto
    /// fresh versions of `targets`.
    fn select(
        &mut self,
        guards: &[usize],
        targets: &[usize],
        firsts: impl Fn(usize, &[QTerm]) -> (Gate, Vec<QTerm>),
    ) -> Formula {
        let old: Vec<QTerm> = targets.iter().map(|&p| self.cur[p].clone()).collect();
        let new: Vec<QTerm> = targets.iter().map(|_| self.fresh()).collect();
        let dst = QTerm::tensor_all(new.clone());
        let branches = (0..1usize << guards.len())
            .map(|k| {
                let (g, src) = firsts(k, &old);
                Formula::pred(g, QTerm::tensor_all(src), dst.clone())
            })
            .collect();
        let f = Formula::MultiOr {
            guards: guards.iter().map(|&p| self.cur[p].clone()).collect(),
            branches,
            span: Span::default(),
        };
        for (&p, t) in targets.iter().zip(new) {
            self.cur[p] = t;
        }
        f
    }
}

impl StepPlan<'_> {
    /// `STEP(src : dst)` and the largest instance index of `a` it uses.
    fn build(&self, src: QTerm, dst: QTerm) -> (Formula, u64) {
        let lay = self.layout;
        let w = lay.width;
        // positions 0..w are the bundle (0-based), then scratch cells and the new flag
        let (hx, hw, hn) = (w, w + 2, w + 4);
        let mut b = Builder {
            next: 0,
            cur: (1..=w).map(|p| src.clone().at_num(p as u64)).collect(),
        };
        let scratch: Vec<QTerm> = (0..5).map(|_| b.fresh()).collect();
        b.cur.extend(scratch.iter().cloned());
        let mut parts = vec![Formula::copy(
            QTerm::tensor_all(vec![QTerm::Bit(false); 5]),
            QTerm::tensor_all(scratch),
        )];
        let p = |k: usize| k - 1;
        let hpos = p(lay.h);
        let old = b.cur.clone();
        let mut live = self.live(&mut b, hx, hw, hn);
        if b.cur[hn] == old[hn] {
            let t = b.fresh();
            live.push(Formula::copy(old[hn].clone(), t.clone()));
            b.cur[hn] = t;
        }
        let touched: Vec<usize> = (0..w + 4).filter(|&k| old[k] != b.cur[k]).collect();
        let mut frozen = Vec::new();
        if !touched.is_empty() {
            frozen.push(Formula::copy(
                QTerm::tensor_all(touched.iter().map(|&k| old[k].clone()).collect()),
                QTerm::tensor_all(touched.iter().map(|&k| b.cur[k].clone()).collect()),
            ));
        }
        // a halted configuration keeps the flag raised
        frozen.push(Formula::pred(not_gate(), old[hn].clone(), b.cur[hn].clone()));
        parts.push(Formula::or(old[hpos].clone(), and_balanced(live), and_balanced(frozen)));
        let mut out: Vec<QTerm> = (0..w).map(|k| b.cur[k].clone()).collect();
        out[hpos] = b.cur[hn].clone();
        parts.push(Formula::copy(QTerm::tensor_all(out), dst));
        (and_balanced(parts), b.next.saturating_sub(1))
    }

    fn live(&self, b: &mut Builder, hx: usize, hw: usize, hn: usize) -> Vec<Formula> {
        let lay = self.layout;
        let loc = self.local;
        let p = |k: usize| k - 1;
        let s: Vec<usize> = (lay.s.0..=lay.s.1).map(p).collect();
        let l = lay.l;
        let cl = lay.c * l;
        let mut parts = Vec::new();
        let state_ctrls = |q: usize| -> Vec<(usize, bool)> {
            s.iter()
                .enumerate()
                .map(|(k, &pos)| (pos, (q >> (loc.e - 1 - k)) & 1 == 1))
                .collect()
        };
        if let Some((qq, _)) = loc.query {
            let addr: Vec<usize> = (1..=l).map(|i| p(lay.index_cell(i).1)).collect();
            let ans = p(lay.ans);
            let r1: Vec<usize> = (lay.r1.0..=lay.r1.1).map(p).collect();
            parts.push(b.controlled(&state_ctrls(qq), |b| {
                let mut fs = Vec::new();
                let q = QTerm::tensor_all(addr.iter().map(|&k| b.cur[k].clone()).collect()).query();
                let old = b.cur[ans].clone();
                let nt = b.fresh();
                fs.push(Formula::or(
                    q,
                    Formula::copy(old.clone(), nt.clone()),
                    Formula::pred(not_gate(), old, nt.clone()),
                ));
                b.cur[ans] = nt;
                for (&a, &r) in addr.iter().zip(&r1) {
                    let g = b.cur[a].clone();
                    let old = b.cur[r].clone();
                    let nt = b.fresh();
                    fs.push(Formula::or(
                        g,
                        Formula::copy(old.clone(), nt.clone()),
                        Formula::pred(not_gate(), old, nt.clone()),
                    ));
                    b.cur[r] = nt;
                }
                fs
            }));
        }
        let swaps = |b: &mut Builder, parts: &mut Vec<Formula>| {
            if loc.active.index {
                for i in 1..=l {
                    let (c1, c2) = lay.index_cell(i);
                    parts.push(b.cswap(p(lay.r2.0 + i - 1), &[p(c1), p(c2)], &[hx, hx + 1]));
                }
            }
            if loc.active.work {
                for i in 1..=cl {
                    let (c1, c2) = lay.work_cell(i);
                    parts.push(b.cswap(p(lay.r3.0 + i - 1), &[p(c1), p(c2)], &[hw, hw + 1]));
                }
            }
        };
        swaps(b, &mut parts);
        let mut reg: Vec<usize> = s.clone();
        if loc.active.ans {
            reg.push(p(lay.ans));
        }
        if loc.active.index {
            reg.extend([hx, hx + 1]);
        }
        if loc.active.work {
            reg.extend([hw, hw + 1]);
        }
        debug_assert_eq!(reg.len(), loc.nb);
        for &(u, v, m) in self.ops {
            for g in two_level(loc.nb, u, v, m) {
                let target = reg[g.target];
                let ctrls: Vec<(usize, bool)> = g.controls.iter().map(|&(c, val)| (reg[c], val)).collect();
                parts.push(b.controlled(&ctrls, |b| b.gates(target, &g.gates)));
            }
        }
        swaps(b, &mut parts);
        let move1 = loc.dirs.iter().any(|d| d.0 != 0);
        let move2 = loc.dirs.iter().any(|d| d.1 != 0);
        if move1 || move2 {
            let r2: Vec<usize> = (lay.r2.0..=lay.r2.1).map(p).collect();
            let r3: Vec<usize> = (lay.r3.0..=lay.r3.1).map(p).collect();
            let mut targets = Vec::new();
            if move1 {
                targets.extend(&r2);
            }
            if move2 {
                targets.extend(&r3);
            }
            let dirs = loc.dirs.clone();
            parts.push(b.select(&s, &targets, |k, old| {
                let (d1, d2) = dirs[k];
                let shift = |seg: &[QTerm], d: i8| -> Vec<QTerm> {
                    let len = seg.len() as i64;
                    (0..len)
                        .map(|i| seg[(i - d as i64).rem_euclid(len) as usize].clone())
                        .collect()
                };
                let mut src = Vec::new();
                let mut rest = old;
                if move1 {
                    src.extend(shift(&rest[..l], d1));
                    rest = &rest[l..];
                }
                if move2 {
                    src.extend(shift(&rest[..cl], d2));
                }
                (Gate::Identity, src)
            }));
        }
        if loc.halting.iter().any(|&h| h) {
            let halting = loc.halting.clone();
            parts.push(b.select(&s, &[hn], |k, old| {
                let g = if halting[k] { not_gate() } else { Gate::Identity };
                (g, old.to_vec())
            }));
        }
        parts
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn mat_of(gates: &[Gate]) -> [[f64; 2]; 2] {
        let mut m = [[1.0, 0.0], [0.0, 1.0]];
        for g in gates {
            let a = g.matrix();
            let mut r = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    r[i][j] = (0..2).map(|k| a[i][k].re * m[k][j]).sum();
                }
            }
            m = r;
        }
        m
    }

    #[test]
    fn two_by_two_gates() {
        let cases = [
            [[0.6, -0.8], [0.8, 0.6]],
            [[0.6, 0.8], [0.8, -0.6]],
            [[0.0, 1.0], [1.0, 0.0]],
            [[1.0, 0.0], [0.0, -1.0]],
            [[-1.0, 0.0], [0.0, -1.0]],
            [[-0.6, 0.8], [0.8, 0.6]],
        ];
        for m in cases {
            let got = mat_of(&gates_for(m));
            for i in 0..2 {
                for j in 0..2 {
                    assert!((got[i][j] - m[i][j]).abs() < 1e-12, "{m:?} -> {got:?}");
                }
            }
        }
    }

    #[test]
    fn layout_slices() {
        let l = Layout::new(3, 2, 1);
        assert_eq!(l.e, 2);
        assert_eq!(l.y1, (l.e + 2 * 2 + 2, l.e + 4 * 2 + 1));
        assert_eq!(l.width, l.e + 7 * 2 + 2);
        assert_eq!(l.h, l.width);
        assert_eq!(l.output(), l.y2.0 + 1);
    }

    #[test]
    fn decomposition_reproduces_matrix() {
        let (c, s) = ((PI / 5.0).cos(), (PI / 5.0).sin());
        let dim = 4;
        let cols = vec![
            (0, vec![0.0, c, s, 0.0]),
            (1, vec![0.0, 0.0, 0.0, -1.0]),
            (2, vec![0.0, -s, c, 0.0]),
            (3, vec![1.0, 0.0, 0.0, 0.0]),
        ];
        let u = complete(dim, cols);
        let lm = LocalMap {
            e: 1,
            active: Active {
                ans: false,
                index: false,
                work: false,
            },
            nb: 2,
            u: u.clone(),
            halting: vec![false; 2],
            dirs: vec![(0, 0); 2],
            query: None,
        };
        let ops = lm.decompose();
        for j in 0..dim {
            let mut v = vec![0.0; dim];
            v[j] = 1.0;
            for &(a, b, m) in &ops {
                let (x, y) = (v[a], v[b]);
                v[a] = m[0][0] * x + m[0][1] * y;
                v[b] = m[1][0] * x + m[1][1] * y;
            }
            for i in 0..dim {
                assert!((v[i] - u[j][i]).abs() < 1e-12);
            }
        }
    }
}
