//! Lowered circuits: the operations the interpreter performed, in order,
//! with quantum-OR regions kept as nested controlled blocks.

use std::collections::BTreeMap;

use crate::ast::Gate;
use crate::qstate::{Control, JointState, QStateError, Wire, C64};

#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    /// Allocates a wire in `|0>`; allocation is never conditional.
    Prepare { wire: Wire },
    /// Allocates the wires of a free quantum variable and loads its state.
    Input { name: String, wires: Vec<Wire> },
    Gate { gate: Gate, wire: Wire },
    Flip { wire: Wire },
    /// `answer ⊕= x(value(index))`.
    Query { index: Vec<Wire>, answer: Wire },
    /// Moves the content of each source wire to its destination wire.
    Permute { pairs: Vec<(Wire, Wire)> },
    /// Index-controlled front swap, or its inverse.
    IndexSwap { index: Vec<Wire>, target: Vec<Wire>, inverse: bool },
    Controlled { control: Wire, value: bool, body: Vec<Op> },
    Measure { wires: Vec<Wire>, bits: Vec<bool>, eps: f64 },
    StateEq { gate: Gate, first: Vec<Wire>, second: Vec<Wire> },
}

#[derive(Clone, Debug, Default)]
pub struct CircuitIR {
    pub ops: Vec<Op>,
    /// Free variables that the circuit defines, with their final wires.
    pub outputs: BTreeMap<String, Vec<Wire>>,
}

/// Result of running a lowered circuit.
#[derive(Clone, Debug)]
pub struct IrRun {
    pub state: JointState,
    pub outputs: BTreeMap<String, Vec<Wire>>,
    /// Outcome of each measurement and state-equality check, in order.
    pub checks: Vec<bool>,
}

impl CircuitIR {
    pub fn gate_count(&self) -> usize {
        fn count(ops: &[Op]) -> usize {
            ops.iter()
                .map(|op| match op {
                    Op::Gate { .. } | Op::Flip { .. } | Op::Query { .. } => 1,
                    Op::Permute { .. } | Op::IndexSwap { .. } => 1,
                    Op::Controlled { body, .. } => count(body),
                    _ => 0,
                })
                .sum()
        }
        count(&self.ops)
    }

    /// Executes the circuit from the empty register.
    pub fn run(
        &self,
        inputs: &BTreeMap<String, Vec<C64>>,
        x: &[bool],
        cap: usize,
        tol: f64,
    ) -> Result<IrRun, QStateError> {
        let mut ex = Exec {
            state: JointState::new(cap),
            map: BTreeMap::new(),
            checks: Vec::new(),
            inputs,
            x,
            tol,
        };
        let mut ctrl = Vec::new();
        ex.block(&self.ops, &mut ctrl)?;
        let outputs = self
            .outputs
            .iter()
            .map(|(k, ws)| Ok((k.clone(), ex.wires(ws)?)))
            .collect::<Result<BTreeMap<_, _>, _>>()?;
        Ok(IrRun {
            state: ex.state,
            outputs,
            checks: ex.checks,
        })
    }
}

struct Exec<'a> {
    state: JointState,
    map: BTreeMap<Wire, Wire>,
    checks: Vec<bool>,
    inputs: &'a BTreeMap<String, Vec<C64>>,
    x: &'a [bool],
    tol: f64,
}

impl Exec<'_> {
    fn wire(&self, w: Wire) -> Result<Wire, QStateError> {
        self.map.get(&w).copied().ok_or(QStateError::UnknownWire(w))
    }

    fn wires(&self, ws: &[Wire]) -> Result<Vec<Wire>, QStateError> {
        ws.iter().map(|w| self.wire(*w)).collect()
    }

    fn block(&mut self, ops: &[Op], ctrl: &mut Vec<Control>) -> Result<(), QStateError> {
        for op in ops {
            match op {
                Op::Prepare { wire } => {
                    let (s, ws) = self.state.adjoin(&[false])?;
                    self.state = s;
                    self.map.insert(*wire, ws[0]);
                }
                Op::Input { name, wires } => {
                    let amps = self
                        .inputs
                        .get(name)
                        .ok_or_else(|| QStateError::Shape(format!("no input for `{name}`")))?;
                    let (s, ws) = self.state.adjoin_amplitudes(amps)?;
                    if ws.len() != wires.len() {
                        return Err(QStateError::Shape(format!("input `{name}` has the wrong size")));
                    }
                    self.state = s;
                    for (a, b) in wires.iter().zip(ws) {
                        self.map.insert(*a, b);
                    }
                }
                Op::Gate { gate, wire } => {
                    let w = self.wire(*wire)?;
                    self.state = self.state.apply_1q(gate, w, ctrl)?;
                }
                Op::Flip { wire } => {
                    let w = self.wire(*wire)?;
                    self.state = self.state.flip(w, ctrl)?;
                }
                Op::Query { index, answer } => {
                    let idx = self.wires(index)?;
                    let a = self.wire(*answer)?;
                    let x = self.x;
                    self.state = self.state.query(
                        &idx,
                        a,
                        &|v| usize::try_from(v).ok().and_then(|v| x.get(v).copied()).unwrap_or(false),
                        ctrl,
                    )?;
                }
                Op::Permute { pairs } => {
                    let p = pairs
                        .iter()
                        .map(|(a, b)| Ok((self.wire(*a)?, self.wire(*b)?)))
                        .collect::<Result<Vec<_>, QStateError>>()?;
                    self.state = self.state.permute(&p, ctrl)?;
                }
                Op::IndexSwap {
                    index,
                    target,
                    inverse,
                } => {
                    let i = self.wires(index)?;
                    let t = self.wires(target)?;
                    self.state = if *inverse {
                        self.state.controlled_swap_from_front(&i, &t, ctrl)?
                    } else {
                        self.state.controlled_swap_to_front(&i, &t, ctrl)?
                    };
                }
                Op::Controlled {
                    control,
                    value,
                    body,
                } => {
                    let c = self.wire(*control)?;
                    ctrl.push((c, *value));
                    let r = self.block(body, ctrl);
                    ctrl.pop();
                    r?;
                }
                Op::Measure { wires, bits, eps } => {
                    let ws = self.wires(wires)?;
                    let fail = self.state.failure_mass(&ws, bits, ctrl);
                    self.checks.push(fail <= eps + self.tol);
                }
                Op::StateEq {
                    gate,
                    first,
                    second,
                } => {
                    let f = self.wires(first)?;
                    let s = self.wires(second)?;
                    let ok = super::state_eq(&self.state, gate, &f, &s, ctrl, self.tol)?;
                    self.checks.push(ok);
                }
            }
        }
        Ok(())
    }
}
