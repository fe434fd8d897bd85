//! Evaluation of desugared formulas over a structure.
//!
//! The interpreter threads one joint state through the formula. Defining
//! predicates bind second-argument slots to wires, measurements check
//! failure mass on the component selected by the enclosing antecedents, and
//! quantum ORs evaluate both branches from the same bindings before merging
//! them with a controlled permutation.

pub mod ir;
mod search;

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ast::{
    free_vars, ilog, Bound, CTerm, CmpOp, Formula, Gate, Index, QTerm, QuantKind, Qtc, Span, Structure,
};
use crate::parser;
use crate::qstate::{Basis, Control, JointState, QStateError, Wire, C64};
use crate::wellformed::{has_introductory, occurs_second};

pub use ir::{CircuitIR, IrRun, Op};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("structure error: {0}")]
    Structure(String),
    #[error(transparent)]
    State(#[from] QStateError),
    #[error("static error: {0}")]
    Static(String),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("index out of range: {0}")]
    OutOfDomain(String),
    #[error("capacity: {0}")]
    Capacity(String),
    #[error("cannot lower: {0}")]
    Lower(String),
}

impl EvalError {
    pub fn is_capacity(&self) -> bool {
        matches!(
            self,
            EvalError::Capacity(_) | EvalError::State(QStateError::Capacity { .. })
        )
    }
}

type R<T> = Result<T, EvalError>;

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub tolerance: f64,
    /// Maximum number of live wires.
    pub wire_cap: usize,
    /// Largest introductory quantum quantifier that is searched.
    pub qcap: usize,
    pub seed: u64,
    /// Random witnesses tried when the spectral path does not apply.
    pub samples: usize,
    /// When set, a QTC start value above `c·ilog(n)` is rejected.
    pub qtc_bound: Option<u64>,
    pub gc: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            tolerance: 1e-9,
            wire_cap: 20,
            qcap: 3,
            seed: 0,
            samples: 32,
            qtc_bound: None,
            gc: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Truth {
    True,
    False,
    Unknown,
}

impl Truth {
    pub fn from_bool(b: bool) -> Truth {
        if b {
            Truth::True
        } else {
            Truth::False
        }
    }
    pub fn and(self, o: Truth) -> Truth {
        match (self, o) {
            (Truth::False, _) | (_, Truth::False) => Truth::False,
            (Truth::True, Truth::True) => Truth::True,
            _ => Truth::Unknown,
        }
    }
    pub fn or(self, o: Truth) -> Truth {
        match (self, o) {
            (Truth::True, _) | (_, Truth::True) => Truth::True,
            (Truth::False, Truth::False) => Truth::False,
            _ => Truth::Unknown,
        }
    }
    pub fn is_true(self) -> bool {
        self == Truth::True
    }
}

impl std::fmt::Display for Truth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Truth::True => "true",
            Truth::False => "false",
            Truth::Unknown => "unknown",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Reject,
    Undetermined,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Accept => "accept",
            Verdict::Reject => "reject",
            Verdict::Undetermined => "undetermined",
        })
    }
}

/// Outcome of one measurement check.
#[derive(Clone, Debug, PartialEq)]
pub struct Margin {
    pub span: Span,
    pub eps: f64,
    pub failure: f64,
    pub passed: bool,
}

/// A witness (for `EQ`) or counterexample (for `AQ`) found by the search.
#[derive(Clone, Debug, PartialEq)]
pub struct Witness {
    pub var: String,
    pub kind: QuantKind,
    pub amplitudes: Vec<C64>,
    /// Found from the failure-matrix spectra rather than by sampling.
    pub spectral: bool,
    pub span: Span,
}

#[derive(Clone, Debug)]
pub struct Execution {
    pub truth: Truth,
    pub state: JointState,
    /// Final wires of every defined free quantum variable.
    pub outputs: BTreeMap<String, Vec<Wire>>,
    /// Pass ratio of the last measurement outside every antecedent.
    pub probability: Option<f64>,
    pub gates: usize,
    pub peak_wires: usize,
    pub margins: Vec<Margin>,
    pub witnesses: Vec<Witness>,
}

#[derive(Clone, Debug)]
pub struct EvalReport {
    pub verdict: Verdict,
    pub positive: Truth,
    /// Truth of the negation; only computed when the formula is not true.
    pub negative: Option<Truth>,
    pub probability: Option<f64>,
    pub peak_wires: usize,
    pub gates: usize,
    pub margins: Vec<Margin>,
    pub witnesses: Vec<Witness>,
}

/// Accept if the formula is true, reject if its negation is true.
pub fn evaluate(f: &Formula, st: &Structure, cfg: &RunConfig) -> R<EvalReport> {
    let f = prepare(f)?;
    let pos = run(&f, st, cfg, false, Mode::Eval)?;
    let mut report = EvalReport {
        verdict: Verdict::Accept,
        positive: pos.truth,
        negative: None,
        probability: pos.probability,
        peak_wires: pos.peak_wires,
        gates: pos.gates,
        margins: pos.margins,
        witnesses: pos.witnesses,
    };
    if pos.truth != Truth::True {
        let neg = run(&f, st, cfg, true, Mode::Eval)?;
        report.negative = Some(neg.truth);
        report.verdict = if neg.truth == Truth::True {
            Verdict::Reject
        } else {
            Verdict::Undetermined
        };
        report.peak_wires = report.peak_wires.max(neg.peak_wires);
    }
    Ok(report)
}

/// Evaluates the formula once and returns the final state.
pub fn execute(f: &Formula, st: &Structure, cfg: &RunConfig) -> R<Execution> {
    run(&prepare(f)?, st, cfg, false, Mode::Eval)
}

/// Evaluates `!q f`, with negation pushed to the atoms.
pub fn execute_negated(f: &Formula, st: &Structure, cfg: &RunConfig) -> R<Execution> {
    run(&prepare(f)?, st, cfg, true, Mode::Eval)
}

/// Records the operations performed while evaluating the formula. The
/// formula must not contain introductory quantum quantifiers.
pub fn lower(f: &Formula, st: &Structure) -> R<CircuitIR> {
    let cfg = RunConfig {
        wire_cap: crate::qstate::MAX_WIRES,
        gc: false,
        ..RunConfig::default()
    };
    let f = prepare(f)?;
    let mut ev = Ev::new(st, &cfg, Mode::Lower);
    ev.init(&f)?;
    ev.eval(&f, false)?;
    let mut outputs = BTreeMap::new();
    for name in st.outputs.keys() {
        if let Some(ws) = ev.defined_wires(name) {
            outputs.insert(name.clone(), ws);
        }
    }
    let ops = ev.rec.take().and_then(|mut r| r.pop()).unwrap_or_default();
    Ok(CircuitIR { ops, outputs })
}

fn prepare(f: &Formula) -> R<Formula> {
    parser::desugar(f).map_err(|d| EvalError::Syntax(d.to_string()))
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    Eval,
    Lower,
}

fn run(f: &Formula, st: &Structure, cfg: &RunConfig, neg: bool, mode: Mode) -> R<Execution> {
    st.validate(cfg.tolerance)
        .map_err(|e| EvalError::Structure(e.to_string()))?;
    let mut ev = Ev::new(st, cfg, mode);
    ev.init(f)?;
    let truth = ev.eval(f, neg)?;
    let mut outputs = BTreeMap::new();
    for scope in &ev.qenv {
        if let QVal::Slots(s) = &scope.val {
            if s.iter().all(Option::is_some) {
                outputs.insert(scope.name.clone(), s.iter().map(|w| w.unwrap()).collect());
            }
        }
    }
    Ok(Execution {
        truth,
        peak_wires: ev.state.peak_wires(),
        state: ev.state,
        outputs,
        probability: ev.last_prob,
        gates: ev.gates,
        margins: ev.margins,
        witnesses: ev.witnesses,
    })
}

/// `C_s ψ` is invariant under exchanging `s` and `t`, on the `ctrl`
/// component.
pub(crate) fn state_eq(
    state: &JointState,
    gate: &Gate,
    first: &[Wire],
    second: &[Wire],
    ctrl: &[Control],
    tol: f64,
) -> Result<bool, QStateError> {
    let p = state.project(ctrl);
    let mut a = p.clone();
    for &w in first {
        a = a.apply_1q(gate, w, &[])?;
    }
    let scale = a.norm_sq().max(1.0);
    if first == second {
        return Ok(a.dist_sq(&p) <= tol * scale);
    }
    if first.iter().any(|w| second.contains(w)) {
        return Err(QStateError::Shape("compared bundles overlap".into()));
    }
    let b = a.swap_bundles(first, second, &[])?;
    Ok(b.dist_sq(&a) <= tol * scale)
}

#[derive(Clone, Debug)]
enum QVal {
    Slots(Vec<Option<Wire>>),
    Func {
        domain: u64,
        size: usize,
        inst: BTreeMap<u64, Vec<Option<Wire>>>,
    },
}

#[derive(Clone, Debug)]
struct QScope {
    name: String,
    val: QVal,
}

#[derive(Clone, Copy, Debug)]
struct SlotRef {
    scope: usize,
    inst: Option<u64>,
    pos: usize,
}

enum Cleanup {
    Unswap {
        index: Vec<Wire>,
        target: Vec<Wire>,
        mark: usize,
    },
    Unquery {
        index: Vec<Wire>,
        answer: Wire,
        mark: usize,
    },
}

impl Cleanup {
    fn wires(&self) -> Vec<Wire> {
        match self {
            Cleanup::Unswap { index, target, .. } => index.iter().chain(target).copied().collect(),
            Cleanup::Unquery { index, answer, .. } => {
                index.iter().copied().chain(std::iter::once(*answer)).collect()
            }
        }
    }
}

#[derive(Clone, Debug)]
enum Site {
    Measure { eps: f64, failure: BTreeMap<Basis, C64> },
    Atom(Truth),
    Nonlinear,
}

#[derive(Clone)]
struct Snap {
    state: JointState,
    qenv: Vec<QScope>,
    cenv: Vec<(String, u64)>,
    ctx: Vec<Control>,
    rec: Option<Vec<Vec<Op>>>,
    margins: Vec<Margin>,
    witnesses: Vec<Witness>,
    last_prob: Option<f64>,
    gates: usize,
    protected: usize,
}

struct Ev<'a> {
    st: &'a Structure,
    cfg: &'a RunConfig,
    state: JointState,
    cenv: Vec<(String, u64)>,
    qenv: Vec<QScope>,
    ctx: Vec<Control>,
    protected: Vec<Wire>,
    pinned: Vec<Wire>,
    skip_vacuous: bool,
    gc_on: bool,
    rec: Option<Vec<Vec<Op>>>,
    linear: Option<Vec<Site>>,
    touched: Vec<Wire>,
    gates: usize,
    margins: Vec<Margin>,
    last_prob: Option<f64>,
    witnesses: Vec<Witness>,
    rng: ChaCha8Rng,
}

impl<'a> Ev<'a> {
    fn new(st: &'a Structure, cfg: &'a RunConfig, mode: Mode) -> Ev<'a> {
        let lowering = mode == Mode::Lower;
        Ev {
            st,
            cfg,
            state: JointState::new(cfg.wire_cap),
            cenv: Vec::new(),
            qenv: Vec::new(),
            ctx: Vec::new(),
            protected: Vec::new(),
            pinned: Vec::new(),
            skip_vacuous: !lowering,
            gc_on: cfg.gc && !lowering,
            rec: lowering.then(|| vec![Vec::new()]),
            linear: None,
            touched: Vec::new(),
            gates: 0,
            margins: Vec::new(),
            last_prob: None,
            witnesses: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        }
    }

    fn init(&mut self, f: &Formula) -> R<()> {
        let fv = free_vars(f);
        for name in &fv.classical {
            if !self.st.free_classical.contains_key(name) {
                return Err(EvalError::Structure(format!(
                    "free classical variable `{name}` has no value"
                )));
            }
        }
        for name in &fv.quantum {
            if let Some(amps) = self.st.free_quantum.get(name) {
                let (s, ws) = self.state.adjoin_amplitudes(amps)?;
                self.state = s;
                self.pinned.extend(&ws);
                self.record(Op::Input {
                    name: name.clone(),
                    wires: ws.clone(),
                });
                self.qenv.push(QScope {
                    name: name.clone(),
                    val: QVal::Slots(ws.into_iter().map(Some).collect()),
                });
            } else if let Some(&size) = self.st.outputs.get(name) {
                self.qenv.push(QScope {
                    name: name.clone(),
                    val: QVal::Slots(vec![None; size]),
                });
            } else {
                return Err(EvalError::Structure(format!(
                    "free quantum variable `{name}` has no assignment"
                )));
            }
        }
        Ok(())
    }

    fn defined_wires(&self, name: &str) -> Option<Vec<Wire>> {
        let scope = self.qenv.iter().rev().find(|s| s.name == name)?;
        match &scope.val {
            QVal::Slots(s) => s.iter().copied().collect(),
            QVal::Func { .. } => None,
        }
    }

    fn snap(&self) -> Snap {
        Snap {
            state: self.state.clone(),
            qenv: self.qenv.clone(),
            cenv: self.cenv.clone(),
            ctx: self.ctx.clone(),
            rec: self.rec.clone(),
            margins: self.margins.clone(),
            witnesses: self.witnesses.clone(),
            last_prob: self.last_prob,
            gates: self.gates,
            protected: self.protected.len(),
        }
    }

    fn restore(&mut self, s: Snap) {
        self.state = s.state;
        self.qenv = s.qenv;
        self.cenv = s.cenv;
        self.ctx = s.ctx;
        self.rec = s.rec;
        self.margins = s.margins;
        self.witnesses = s.witnesses;
        self.last_prob = s.last_prob;
        self.gates = s.gates;
        self.protected.truncate(s.protected);
    }

    // ---- primitive operations under the current antecedent context ----

    fn record(&mut self, op: Op) {
        if let Some(frames) = &mut self.rec {
            frames.last_mut().expect("recording frame").push(op);
        }
    }

    fn rec_open(&mut self) {
        if let Some(frames) = &mut self.rec {
            frames.push(Vec::new());
        }
    }

    fn rec_close(&mut self, control: Wire, value: bool) {
        if let Some(frames) = &mut self.rec {
            let body = frames.pop().expect("recording frame");
            if !body.is_empty() {
                frames.last_mut().expect("recording frame").push(Op::Controlled {
                    control,
                    value,
                    body,
                });
            }
        }
    }

    fn prepare(&mut self, bit: bool) -> R<Wire> {
        let (s, ws) = self.state.adjoin(&[false])?;
        self.state = s;
        let w = ws[0];
        self.record(Op::Prepare { wire: w });
        if bit {
            self.flip(w)?;
        }
        Ok(w)
    }

    fn gate(&mut self, g: &Gate, w: Wire) -> R<()> {
        if self.ctx.iter().any(|c| c.0 == w) {
            return Err(EvalError::Runtime(format!(
                "wire {w} is acted on inside its own antecedent"
            )));
        }
        if g.is_identity() {
            return Ok(());
        }
        self.state = self.state.apply_1q(g, w, &self.ctx)?;
        self.gates += 1;
        self.touched.push(w);
        self.record(Op::Gate { gate: *g, wire: w });
        Ok(())
    }

    fn flip(&mut self, w: Wire) -> R<()> {
        self.state = self.state.flip(w, &self.ctx)?;
        self.gates += 1;
        self.touched.push(w);
        self.record(Op::Flip { wire: w });
        Ok(())
    }

    fn query(&mut self, index: &[Wire], answer: Wire) -> R<()> {
        let st = self.st;
        self.state = self.state.query(
            index,
            answer,
            &|v| u64::try_from(v).map(|v| st.x(v)).unwrap_or(false),
            &self.ctx,
        )?;
        self.gates += 1;
        self.touched.push(answer);
        self.record(Op::Query {
            index: index.to_vec(),
            answer,
        });
        Ok(())
    }

    fn permute(&mut self, pairs: Vec<(Wire, Wire)>) -> R<()> {
        self.state = self.state.permute(&pairs, &self.ctx)?;
        self.gates += 1;
        self.touched.extend(pairs.iter().map(|p| p.0));
        self.record(Op::Permute { pairs });
        Ok(())
    }

    fn index_swap(&mut self, index: &[Wire], target: &[Wire], inverse: bool) -> R<()> {
        self.state = if inverse {
            self.state.controlled_swap_from_front(index, target, &self.ctx)?
        } else {
            self.state.controlled_swap_to_front(index, target, &self.ctx)?
        };
        self.gates += 1;
        self.touched.extend(target);
        self.record(Op::IndexSwap {
            index: index.to_vec(),
            target: target.to_vec(),
            inverse,
        });
        Ok(())
    }

    fn cleanup(&mut self, cl: Vec<Cleanup>) -> R<()> {
        for c in cl.into_iter().rev() {
            match c {
                Cleanup::Unquery {
                    index,
                    answer,
                    mark,
                } => {
                    if !self.touched[mark..].iter().any(|w| index.contains(w)) {
                        self.query(&index, answer)?;
                    }
                }
                Cleanup::Unswap {
                    index,
                    target,
                    mark,
                } => {
                    let since = &self.touched[mark..];
                    if !since.iter().any(|w| index.contains(w) || target.contains(w)) {
                        self.index_swap(&index, &target, true)?;
                    }
                }
            }
        }
        Ok(())
    }

    fn gc(&mut self) {
        if !self.gc_on || self.rec.is_some() || self.linear.is_some() {
            return;
        }
        let mut roots: BTreeSet<Wire> = BTreeSet::new();
        for scope in &self.qenv {
            match &scope.val {
                QVal::Slots(s) => roots.extend(s.iter().flatten()),
                QVal::Func { inst, .. } => {
                    for s in inst.values() {
                        roots.extend(s.iter().flatten());
                    }
                }
            }
        }
        roots.extend(self.ctx.iter().map(|c| c.0));
        roots.extend(&self.protected);
        roots.extend(&self.pinned);
        let live: Vec<Wire> = self.state.wires().to_vec();
        for w in live {
            if !roots.contains(&w) {
                self.state.remove_wire(w);
            }
        }
        if self.touched.len() > 1 << 16 && self.protected.is_empty() && self.ctx.is_empty() {
            self.touched.clear();
        }
    }

    // ---- classical terms ----

    fn cval(&self, t: &CTerm) -> R<u64> {
        Ok(match t {
            CTerm::Var(v) => {
                if let Some((_, x)) = self.cenv.iter().rev().find(|(n, _)| n == v) {
                    *x
                } else if let Some(x) = self.st.free_classical.get(v) {
                    *x
                } else {
                    return Err(EvalError::Static(format!("unbound classical variable `{v}`")));
                }
            }
            CTerm::Num(k) => *k,
            CTerm::N => self.st.n,
            CTerm::Ilog => ilog(self.st.n).map_err(|e| EvalError::Structure(e.to_string()))?,
            CTerm::Suc(a) => self.cval(a)? + 1,
            CTerm::Add(a, b) => self.cval(a)? + self.cval(b)?,
            CTerm::Sub(a, b) => self.cval(a)?.saturating_sub(self.cval(b)?),
            CTerm::Size(q) => self.size_of(q)? as u64,
        })
    }

    // ---- quantum terms ----

    fn lookup(&self, name: &str) -> R<usize> {
        self.qenv
            .iter()
            .rposition(|s| s.name == name)
            .ok_or_else(|| EvalError::Static(format!("unbound quantum variable `{name}`")))
    }

    fn size_of(&self, t: &QTerm) -> R<usize> {
        Ok(match t {
            QTerm::Var(v) => match &self.qenv[self.lookup(v)?].val {
                QVal::Slots(s) => s.len(),
                QVal::Func { .. } => {
                    return Err(EvalError::Static(format!(
                        "functional variable `{v}` used without an index"
                    )))
                }
            },
            QTerm::Inst { name, .. } => match &self.qenv[self.lookup(name)?].val {
                QVal::Func { size, .. } => *size,
                QVal::Slots(_) => {
                    return Err(EvalError::Static(format!("`{name}` is not a functional variable")))
                }
            },
            QTerm::Qbit { .. } | QTerm::Query(_) | QTerm::Bit(_) => 1,
            QTerm::Range { lo, hi, .. } => {
                let (lo, hi) = (self.cval(lo)?, self.cval(hi)?);
                if hi < lo || lo == 0 {
                    return Err(EvalError::OutOfDomain(format!("range [{lo}, {hi}]")));
                }
                (hi - lo + 1) as usize
            }
            QTerm::Tensor(a, b) => self.size_of(a)? + self.size_of(b)?,
        })
    }

    fn instance_key(&self, scope: usize, index: &CTerm) -> R<(u64, usize)> {
        let k = self.cval(index)?;
        match &self.qenv[scope].val {
            QVal::Func { domain, size, .. } => {
                if k > *domain {
                    return Err(EvalError::OutOfDomain(format!(
                        "instance {k} of `{}` outside [0, {domain}]",
                        self.qenv[scope].name
                    )));
                }
                Ok((k, *size))
            }
            QVal::Slots(_) => Err(EvalError::Static(format!(
                "`{}` is not a functional variable",
                self.qenv[scope].name
            ))),
        }
    }

    fn slot_value(&self, r: SlotRef) -> Option<Wire> {
        match (&self.qenv[r.scope].val, r.inst) {
            (QVal::Slots(s), None) => s[r.pos],
            (QVal::Func { inst, .. }, Some(k)) => inst.get(&k).and_then(|s| s[r.pos]),
            _ => None,
        }
    }

    fn set_slot(&mut self, r: SlotRef, w: Wire) {
        match (&mut self.qenv[r.scope].val, r.inst) {
            (QVal::Slots(s), None) => s[r.pos] = Some(w),
            (QVal::Func { inst, size, .. }, Some(k)) => {
                let size = *size;
                inst.entry(k).or_insert_with(|| vec![None; size])[r.pos] = Some(w);
            }
            _ => unreachable!("slot kind mismatch"),
        }
    }

    fn var_slots(&self, t: &QTerm) -> R<Vec<SlotRef>> {
        match t {
            QTerm::Var(v) => {
                let scope = self.lookup(v)?;
                let n = self.size_of(t)?;
                Ok((0..n)
                    .map(|pos| SlotRef {
                        scope,
                        inst: None,
                        pos,
                    })
                    .collect())
            }
            QTerm::Inst { name, index } => {
                let scope = self.lookup(name)?;
                let (k, size) = self.instance_key(scope, index)?;
                Ok((0..size)
                    .map(|pos| SlotRef {
                        scope,
                        inst: Some(k),
                        pos,
                    })
                    .collect())
            }
            _ => unreachable!(),
        }
    }

    /// Slot of the `k`-th qubit (1-based) of a second-argument term.
    fn slot_at(&self, t: &QTerm, k: usize) -> R<SlotRef> {
        match t {
            QTerm::Var(_) | QTerm::Inst { .. } => {
                let slots = self.var_slots(t)?;
                if k == 0 || k > slots.len() {
                    return Err(EvalError::OutOfDomain(format!(
                        "qubit {k} of {}",
                        parser::pretty_qterm(t)
                    )));
                }
                Ok(slots[k - 1])
            }
            QTerm::Qbit { target, index } => {
                if k != 1 {
                    return Err(EvalError::OutOfDomain(format!("qubit {k} of a single qubit")));
                }
                match index {
                    Index::C(c) => self.slot_at(target, self.cval(c)? as usize),
                    Index::Q(_) => Err(EvalError::Static(
                        "quantum index in a second argument".into(),
                    )),
                }
            }
            QTerm::Range { target, lo, hi } => {
                let (lo, hi) = (self.cval(lo)? as usize, self.cval(hi)? as usize);
                if k == 0 || lo + k - 1 > hi {
                    return Err(EvalError::OutOfDomain(format!("qubit {k} of range [{lo}, {hi}]")));
                }
                self.slot_at(target, lo + k - 1)
            }
            QTerm::Tensor(a, b) => {
                let sa = self.size_of(a)?;
                if k <= sa {
                    self.slot_at(a, k)
                } else {
                    self.slot_at(b, k - sa)
                }
            }
            QTerm::Query(_) | QTerm::Bit(_) => Err(EvalError::Static(format!(
                "{} cannot be a second argument",
                parser::pretty_qterm(t)
            ))),
        }
    }

    fn slots(&self, t: &QTerm) -> R<Vec<SlotRef>> {
        match t {
            QTerm::Var(_) | QTerm::Inst { .. } => self.var_slots(t),
            QTerm::Tensor(a, b) => {
                let mut out = self.slots(a)?;
                out.extend(self.slots(b)?);
                Ok(out)
            }
            _ => {
                let n = self.size_of(t)?;
                (1..=n).map(|k| self.slot_at(t, k)).collect()
            }
        }
    }

    /// Wires of a read term. Transient reads (`cl` present) register the
    /// cleanups that undo index swaps and queries.
    fn read(&mut self, t: &QTerm, cl: &mut Option<&mut Vec<Cleanup>>) -> R<Vec<Wire>> {
        match t {
            QTerm::Var(_) | QTerm::Inst { .. } => {
                let slots = self.var_slots(t)?;
                slots
                    .into_iter()
                    .map(|r| {
                        self.slot_value(r).ok_or_else(|| {
                            EvalError::Runtime(format!(
                                "{} is read before it is defined",
                                parser::pretty_qterm(t)
                            ))
                        })
                    })
                    .collect()
            }
            QTerm::Tensor(a, b) => {
                let mut out = self.read(a, cl)?;
                out.extend(self.read(b, cl)?);
                Ok(out)
            }
            QTerm::Bit(b) => Ok(vec![self.prepare(*b)?]),
            QTerm::Query(s) => {
                let index = self.read(s, cl)?;
                let answer = self.prepare(false)?;
                let mark = self.touched.len();
                self.query(&index, answer)?;
                if let Some(cl) = cl {
                    cl.push(Cleanup::Unquery {
                        index,
                        answer,
                        mark: mark + 1,
                    });
                }
                Ok(vec![answer])
            }
            QTerm::Qbit {
                target,
                index: Index::Q(s),
            } => {
                let index = self.read(s, cl)?;
                let tw = self.read(target, cl)?;
                let mark = self.touched.len();
                self.index_swap(&index, &tw, false)?;
                let w = tw[0];
                if let Some(cl) = cl {
                    cl.push(Cleanup::Unswap {
                        index,
                        target: tw,
                        mark: self.touched.len().max(mark),
                    });
                }
                Ok(vec![w])
            }
            _ => {
                let n = self.size_of(t)?;
                (1..=n).map(|k| self.read_at(t, k, cl)).collect()
            }
        }
    }

    fn read_at(&mut self, t: &QTerm, k: usize, cl: &mut Option<&mut Vec<Cleanup>>) -> R<Wire> {
        match t {
            QTerm::Qbit {
                target,
                index: Index::C(c),
            } => {
                if k != 1 {
                    return Err(EvalError::OutOfDomain(format!("qubit {k} of a single qubit")));
                }
                let i = self.cval(c)? as usize;
                self.read_at(target, i, cl)
            }
            QTerm::Range { target, lo, hi } => {
                let (lo, hi) = (self.cval(lo)? as usize, self.cval(hi)? as usize);
                if k == 0 || lo + k - 1 > hi {
                    return Err(EvalError::OutOfDomain(format!("qubit {k} of range [{lo}, {hi}]")));
                }
                self.read_at(target, lo + k - 1, cl)
            }
            QTerm::Tensor(a, b) => {
                let sa = self.size_of(a)?;
                if k <= sa {
                    self.read_at(a, k, cl)
                } else {
                    self.read_at(b, k - sa, cl)
                }
            }
            QTerm::Var(_) | QTerm::Inst { .. } => {
                let r = self.slot_at(t, k)?;
                self.slot_value(r).ok_or_else(|| {
                    EvalError::Runtime(format!(
                        "qubit {k} of {} is read before it is defined",
                        parser::pretty_qterm(t)
                    ))
                })
            }
            _ => {
                if k != 1 {
                    return Err(EvalError::OutOfDomain(format!("qubit {k} of a single qubit")));
                }
                Ok(self.read(t, cl)?[0])
            }
        }
    }

    // ---- formulas ----

    fn eval(&mut self, f: &Formula, neg: bool) -> R<Truth> {
        match f {
            Formula::Cmp { op, lhs, rhs } => {
                let (a, b) = (self.cval(lhs)?, self.cval(rhs)?);
                let t = Truth::from_bool(match op {
                    CmpOp::Eq => a == b,
                    CmpOp::Le => a <= b,
                    CmpOp::Lt => a < b,
                });
                if let Some(sites) = &mut self.linear {
                    sites.push(Site::Atom(t));
                }
                Ok(t)
            }
            Formula::Pred {
                gate,
                first,
                second,
                ..
            } => self.pred(gate, first, second),
            Formula::Measure {
                term,
                eps,
                bits,
                span,
            } => self.measure(term, *eps, bits, neg, *span),
            Formula::And(a, b) => {
                let ra = self.eval(a, neg)?;
                if ra == Truth::False {
                    return Ok(Truth::False);
                }
                let rb = self.eval(b, neg)?;
                self.gc();
                Ok(ra.and(rb))
            }
            Formula::Or {
                guard, zero, one, ..
            } => self.or(guard, zero, one, neg),
            Formula::Not(a) => self.eval(a, !neg),
            Formula::CQuant {
                kind,
                var,
                lo,
                hi,
                body,
            } => self.cquant(*kind, var, lo.as_ref(), hi, body, neg),
            Formula::QQuant {
                kind,
                var,
                size,
                body,
                span,
            } => {
                let k = self.cval(size)? as usize;
                if occurs_second(var, body) {
                    self.declare(var, k, body, neg)
                } else {
                    let kind = if neg { kind.dual() } else { *kind };
                    self.introductory(kind, var, k, body, neg, *span)
                }
            }
            Formula::FQuant {
                var,
                domain,
                size,
                body,
                ..
            } => {
                if !occurs_second(var, body) {
                    return Err(EvalError::Static(format!(
                        "functional variable `{var}` is never defined"
                    )));
                }
                let domain = self.cval(domain)?;
                let size = self.cval(size)? as usize;
                self.qenv.push(QScope {
                    name: var.clone(),
                    val: QVal::Func {
                        domain,
                        size,
                        inst: BTreeMap::new(),
                    },
                });
                let r = self.eval(body, neg);
                self.qenv.pop();
                r
            }
            Formula::Qtc(q) => self.qtc(q, neg),
            Formula::MultiOr { .. } | Formula::Iff(..) => {
                Err(EvalError::Static("formula is not desugared".into()))
            }
        }
    }

    fn pred(&mut self, gate: &Gate, first: &QTerm, second: &QTerm) -> R<Truth> {
        let slots = self.slots(second)?;
        let current: Vec<Option<Wire>> = slots.iter().map(|r| self.slot_value(*r)).collect();
        if current.iter().all(Option::is_none) {
            let ws = self.read(first, &mut None)?;
            if ws.len() != slots.len() {
                return Ok(Truth::False);
            }
            let distinct: BTreeSet<&Wire> = ws.iter().collect();
            if distinct.len() != ws.len() {
                return Err(EvalError::Runtime(format!(
                    "{} names a qubit twice",
                    parser::pretty_qterm(first)
                )));
            }
            for &w in &ws {
                self.gate(gate, w)?;
            }
            for (r, w) in slots.into_iter().zip(ws) {
                self.set_slot(r, w);
            }
            Ok(Truth::True)
        } else if current.iter().all(Option::is_some) {
            let mut cl = Vec::new();
            let ws = self.read(first, &mut Some(&mut cl))?;
            let second: Vec<Wire> = current.into_iter().flatten().collect();
            let ok = ws.len() == second.len()
                && state_eq(&self.state, gate, &ws, &second, &self.ctx, self.cfg.tolerance)?;
            self.record(Op::StateEq {
                gate: *gate,
                first: ws,
                second,
            });
            if let Some(sites) = &mut self.linear {
                sites.push(Site::Nonlinear);
            }
            self.cleanup(cl)?;
            Ok(Truth::from_bool(ok))
        } else {
            Err(EvalError::Runtime(format!(
                "{} is partially defined",
                parser::pretty_qterm(second)
            )))
        }
    }

    fn measure(&mut self, term: &QTerm, eps: f64, bits: &[bool], neg: bool, span: Span) -> R<Truth> {
        let mut cl = Vec::new();
        let ws = self.read(term, &mut Some(&mut cl))?;
        if ws.len() != bits.len() {
            return Err(EvalError::Runtime(format!(
                "{} has {} qubits, compared with {} bits",
                parser::pretty_qterm(term),
                ws.len(),
                bits.len()
            )));
        }
        let bits: Vec<bool> = bits.iter().map(|&b| b != neg).collect();
        self.record(Op::Measure {
            wires: ws.clone(),
            bits: bits.clone(),
            eps,
        });
        let t = if let Some(sites) = &mut self.linear {
            sites.push(Site::Measure {
                eps,
                failure: self.state.failure_vector(&ws, &bits, &self.ctx),
            });
            Truth::True
        } else {
            let total = self.state.mass(&self.ctx);
            let failure = self.state.failure_mass(&ws, &bits, &self.ctx);
            let passed = failure <= eps + self.cfg.tolerance;
            self.margins.push(Margin {
                span,
                eps,
                failure,
                passed,
            });
            if self.ctx.is_empty() && total > 0.0 {
                self.last_prob = Some(((total - failure) / total).clamp(0.0, 1.0));
            }
            Truth::from_bool(passed)
        };
        self.cleanup(cl)?;
        Ok(t)
    }

    fn or(&mut self, guard: &QTerm, zero: &Formula, one: &Formula, neg: bool) -> R<Truth> {
        let mut cl = Vec::new();
        let gw = self.read(guard, &mut Some(&mut cl))?;
        if gw.len() != 1 {
            return Err(EvalError::Runtime(format!(
                "antecedent {} is not a single qubit",
                parser::pretty_qterm(guard)
            )));
        }
        let g = gw[0];
        if self.ctx.iter().any(|c| c.0 == g) {
            return Err(EvalError::Runtime(format!(
                "antecedent {} already controls this region",
                parser::pretty_qterm(guard)
            )));
        }
        let mark = self.protected.len();
        for c in &cl {
            self.protected.extend(c.wires());
        }
        let before = self.qenv.clone();
        let r0 = self.branch(g, false, zero, neg)?;
        let env0 = std::mem::replace(&mut self.qenv, before.clone());
        for scope in &env0 {
            if let QVal::Slots(s) = &scope.val {
                self.protected.extend(s.iter().flatten());
            }
            if let QVal::Func { inst, .. } = &scope.val {
                for s in inst.values() {
                    self.protected.extend(s.iter().flatten());
                }
            }
        }
        let r1 = self.branch(g, true, one, neg)?;
        let env1 = std::mem::take(&mut self.qenv);
        self.qenv = self.merge(&before, env0, env1, g)?;
        self.protected.truncate(mark);
        self.cleanup(cl)?;
        Ok(r0.and(r1))
    }

    fn branch(&mut self, g: Wire, value: bool, body: &Formula, neg: bool) -> R<Truth> {
        self.ctx.push((g, value));
        let vacuous = self.skip_vacuous
            && self.state.mass(&self.ctx) < self.cfg.tolerance * self.cfg.tolerance;
        let r = if vacuous {
            Ok(Truth::True)
        } else {
            self.rec_open();
            let r = self.eval(body, neg);
            if r.is_ok() {
                self.rec_close(g, value);
            }
            r
        };
        if r.is_ok() {
            self.ctx.pop();
        }
        r
    }

    /// Reconciles the bindings of the two branches: where they chose
    /// different wires for a slot, the `1` branch's wires are permuted onto
    /// the `0` branch's within the `g = 1` subspace.
    /// Slots bound before the OR are consumed and take no part in the check
    /// that a wire kept by both branches is not also permuted.
    fn merge(&mut self, before: &[QScope], env0: Vec<QScope>, env1: Vec<QScope>, g: Wire) -> R<Vec<QScope>> {
        let mut pairs: Vec<(Wire, Wire)> = Vec::new();
        let mut fixed: Vec<Wire> = Vec::new();
        let mut join = |old: &[Option<Wire>], a: &[Option<Wire>], b: &[Option<Wire>]| -> Vec<Option<Wire>> {
            a.iter()
                .zip(b)
                .enumerate()
                .map(|(k, (x, y))| match (x, y) {
                    (Some(x), Some(y)) if x == y => {
                        if old.get(k).is_none_or(Option::is_none) {
                            fixed.push(*x);
                        }
                        Some(*x)
                    }
                    (Some(x), Some(y)) => {
                        pairs.push((*y, *x));
                        Some(*x)
                    }
                    (Some(x), None) => Some(*x),
                    (None, y) => *y,
                })
                .collect()
        };
        if env0.len() != env1.len() {
            return Err(EvalError::Runtime("branches left different scopes".into()));
        }
        let mut out = Vec::with_capacity(env0.len());
        let empty: Vec<Option<Wire>> = Vec::new();
        for (idx, (s0, s1)) in env0.into_iter().zip(env1).enumerate() {
            let prev = before.get(idx).map(|s| &s.val);
            let val = match (s0.val, s1.val) {
                (QVal::Slots(a), QVal::Slots(b)) => {
                    let old = match prev {
                        Some(QVal::Slots(o)) => o.as_slice(),
                        _ => empty.as_slice(),
                    };
                    QVal::Slots(join(old, &a, &b))
                }
                (
                    QVal::Func {
                        domain,
                        size,
                        inst: i0,
                    },
                    QVal::Func { inst: i1, .. },
                ) => {
                    let keys: BTreeSet<u64> = i0.keys().chain(i1.keys()).copied().collect();
                    let none = vec![None; size];
                    let inst = keys
                        .into_iter()
                        .map(|k| {
                            let a = i0.get(&k).unwrap_or(&none);
                            let b = i1.get(&k).unwrap_or(&none);
                            let old = match prev {
                                Some(QVal::Func { inst, .. }) => inst.get(&k).map_or(empty.as_slice(), |v| v.as_slice()),
                                _ => empty.as_slice(),
                            };
                            (k, join(old, a, b))
                        })
                        .collect();
                    QVal::Func { domain, size, inst }
                }
                _ => return Err(EvalError::Runtime("branches left different scopes".into())),
            };
            out.push(QScope { name: s0.name, val });
        }
        if pairs.is_empty() {
            return Ok(out);
        }
        pairs.sort_unstable();
        pairs.dedup();
        let dom: BTreeSet<Wire> = pairs.iter().map(|p| p.0).collect();
        let ran: BTreeSet<Wire> = pairs.iter().map(|p| p.1).collect();
        if dom.len() != pairs.len() || ran.len() != pairs.len() {
            return Err(EvalError::Runtime(
                "branch bindings do not match one to one".into(),
            ));
        }
        if fixed.iter().any(|w| dom.contains(w) || ran.contains(w)) {
            return Err(EvalError::Runtime(
                "branch bindings cannot be reconciled".into(),
            ));
        }
        let free_src: Vec<Wire> = ran.difference(&dom).copied().collect();
        let free_dst: Vec<Wire> = dom.difference(&ran).copied().collect();
        pairs.extend(free_src.into_iter().zip(free_dst));
        self.ctx.push((g, true));
        self.rec_open();
        let r = self.permute(pairs);
        self.rec_close(g, true);
        self.ctx.pop();
        r?;
        Ok(out)
    }

    fn cquant(
        &mut self,
        kind: QuantKind,
        var: &str,
        lo: Option<&Bound>,
        hi: &Bound,
        body: &Formula,
        neg: bool,
    ) -> R<Truth> {
        let lo = match lo {
            Some(b) => self.cval(&b.term)? + b.strict as u64,
            None => 0,
        };
        let hi_v = self.cval(&hi.term)?;
        let hi = if hi.strict { hi_v.checked_sub(1) } else { Some(hi_v) };
        let values: Vec<u64> = match hi {
            Some(h) if h >= lo => (lo..=h).collect(),
            _ => Vec::new(),
        };
        match kind {
            QuantKind::Forall => {
                let mut acc = Truth::True;
                for v in values {
                    let snap = self.snap();
                    self.cenv.push((var.to_string(), v));
                    let r = self.eval(body, neg);
                    match r {
                        Ok(t) => {
                            self.cenv.pop();
                            acc = acc.and(t);
                            if acc == Truth::False {
                                break;
                            }
                        }
                        Err(EvalError::OutOfDomain(_)) => self.restore(snap),
                        Err(e) => return Err(e),
                    }
                    self.gc();
                }
                Ok(acc)
            }
            QuantKind::Exists => {
                let base = self.snap();
                let mut unknown: Option<Snap> = None;
                for v in values {
                    self.restore(base.clone());
                    self.cenv.push((var.to_string(), v));
                    match self.eval(body, neg) {
                        Ok(t) => {
                            self.cenv.pop();
                            match t {
                                Truth::True => return Ok(Truth::True),
                                Truth::Unknown if unknown.is_none() => unknown = Some(self.snap()),
                                _ => {}
                            }
                        }
                        Err(EvalError::OutOfDomain(_)) => {}
                        Err(e) => return Err(e),
                    }
                }
                match unknown {
                    Some(s) => {
                        self.restore(s);
                        Ok(Truth::Unknown)
                    }
                    None => {
                        self.restore(base);
                        Ok(Truth::False)
                    }
                }
            }
        }
    }

    fn declare(&mut self, var: &str, k: usize, body: &Formula, neg: bool) -> R<Truth> {
        self.qenv.push(QScope {
            name: var.to_string(),
            val: QVal::Slots(vec![None; k]),
        });
        let r = self.eval(body, neg);
        if r.is_ok() {
            self.qenv.pop();
        }
        r
    }

    fn qtc(&mut self, q: &Qtc, neg: bool) -> R<Truth> {
        if q.relation.any(&|g| matches!(g, Formula::Measure { .. })) || has_introductory(&q.relation) {
            return Err(EvalError::Static(
                "QTC relation must be measurement-free and introduce no quantum variables".into(),
            ));
        }
        let m = q.firsts.len();
        if q.seconds.len() != m || q.start_args.len() != m || q.end_args.len() != m {
            return Err(EvalError::Static("QTC argument counts differ".into()));
        }
        let start = self.cval(&q.start)?;
        let end = self.cval(&q.end)?;
        if start < end {
            return Err(EvalError::Runtime(format!(
                "QTC start {start} is below its end {end}"
            )));
        }
        if let Some(c) = self.cfg.qtc_bound {
            let limit = c * ilog(self.st.n).map_err(|e| EvalError::Structure(e.to_string()))?;
            if start > limit {
                return Err(EvalError::Runtime(format!(
                    "QTC start {start} exceeds c*ilog(n) = {limit}"
                )));
            }
        }
        let mut cur: Vec<Vec<Wire>> = Vec::with_capacity(m);
        for a in &q.start_args {
            cur.push(self.read(a, &mut None)?);
        }
        let mut acc = Truth::True;
        for k in (end + 1..=start).rev() {
            self.cenv.push((q.i.clone(), k));
            self.cenv.push((q.j.clone(), k - 1));
            let base = self.qenv.len();
            for (name, ws) in q.firsts.iter().zip(&cur) {
                self.qenv.push(QScope {
                    name: name.clone(),
                    val: QVal::Slots(ws.iter().copied().map(Some).collect()),
                });
            }
            for (name, ws) in q.seconds.iter().zip(&cur) {
                self.qenv.push(QScope {
                    name: name.clone(),
                    val: QVal::Slots(vec![None; ws.len()]),
                });
            }
            let r = self.eval(&q.relation, neg)?;
            let mut next = Vec::with_capacity(m);
            for (idx, prev) in cur.iter().enumerate() {
                let QVal::Slots(s) = &self.qenv[base + m + idx].val else {
                    unreachable!()
                };
                next.push(
                    s.iter()
                        .zip(prev)
                        .map(|(slot, p)| slot.unwrap_or(*p))
                        .collect::<Vec<_>>(),
                );
            }
            self.qenv.truncate(base);
            self.cenv.truncate(self.cenv.len() - 2);
            cur = next;
            acc = acc.and(r);
            if acc == Truth::False {
                return Ok(Truth::False);
            }
            let mark = self.protected.len();
            self.protected.extend(cur.iter().flatten());
            self.gc();
            self.protected.truncate(mark);
        }
        for (arg, ws) in q.end_args.iter().zip(cur) {
            let slots = self.slots(arg)?;
            if slots.len() != ws.len() {
                return Ok(Truth::False);
            }
            for (r, w) in slots.into_iter().zip(ws) {
                if self.slot_value(r).is_some() {
                    return Err(EvalError::Runtime(format!(
                        "QTC end argument {} is already defined",
                        parser::pretty_qterm(arg)
                    )));
                }
                self.set_slot(r, w);
            }
        }
        Ok(acc)
    }
}
