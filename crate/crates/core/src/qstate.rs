//! Unnormalized amplitude vectors over a registry of single-qubit wires.
//!
//! Amplitudes are stored sparsely, keyed by the basis string over all
//! allocated wire positions. A wire id is its bit position; ids of removed
//! wires are recycled.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_complex::Complex64;
use thiserror::Error;

use crate::ast::Gate;

pub type C64 = Complex64;
pub type Wire = usize;
/// A control condition: the wire must carry the given bit.
pub type Control = (Wire, bool);

/// Hard limit on simultaneously allocated wire positions.
pub const MAX_WIRES: usize = 256;
const PRUNE: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QStateError {
    #[error("wire capacity exceeded: {needed} live wires requested, cap is {cap}")]
    Capacity { needed: usize, cap: usize },
    #[error("wire {0} is not live")]
    UnknownWire(Wire),
    #[error("{0}")]
    Shape(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Basis([u64; 4]);

impl Basis {
    #[inline]
    pub fn get(&self, w: Wire) -> bool {
        (self.0[w >> 6] >> (w & 63)) & 1 == 1
    }
    #[inline]
    pub fn set(&mut self, w: Wire, b: bool) {
        if b {
            self.0[w >> 6] |= 1 << (w & 63);
        } else {
            self.0[w >> 6] &= !(1 << (w & 63));
        }
    }
    #[inline]
    pub fn with(mut self, w: Wire, b: bool) -> Basis {
        self.set(w, b);
        self
    }
    #[inline]
    pub fn matches(&self, ctrl: &[Control]) -> bool {
        ctrl.iter().all(|&(w, b)| self.get(w) == b)
    }
    /// Value of a bundle read most significant first.
    pub fn value(&self, bundle: &[Wire]) -> u128 {
        bundle
            .iter()
            .fold(0u128, |acc, &w| (acc << 1) | self.get(w) as u128)
    }
}

/// Live wires in allocation order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct WireRegistry {
    order: Vec<Wire>,
}

impl WireRegistry {
    pub fn wires(&self) -> &[Wire] {
        &self.order
    }
    pub fn len(&self) -> usize {
        self.order.len()
    }
    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
    pub fn contains(&self, w: Wire) -> bool {
        self.order.contains(&w)
    }
    pub fn position(&self, w: Wire) -> Option<usize> {
        self.order.iter().position(|&x| x == w)
    }
}

#[derive(Clone, Debug)]
pub struct JointState {
    amps: BTreeMap<Basis, C64>,
    registry: WireRegistry,
    cap: usize,
    peak: usize,
}

impl JointState {
    /// The empty register: a single unit amplitude over zero wires.
    pub fn new(cap: usize) -> JointState {
        let mut amps = BTreeMap::new();
        amps.insert(Basis::default(), C64::new(1.0, 0.0));
        JointState {
            amps,
            registry: WireRegistry::default(),
            cap: cap.min(MAX_WIRES),
            peak: 0,
        }
    }

    pub fn registry(&self) -> &WireRegistry {
        &self.registry
    }
    pub fn wires(&self) -> &[Wire] {
        self.registry.wires()
    }
    pub fn live_count(&self) -> usize {
        self.registry.len()
    }
    pub fn peak_wires(&self) -> usize {
        self.peak
    }
    pub fn cap(&self) -> usize {
        self.cap
    }
    pub fn set_cap(&mut self, cap: usize) {
        self.cap = cap.min(MAX_WIRES);
    }
    pub fn support_len(&self) -> usize {
        self.amps.len()
    }
    pub fn entries(&self) -> impl Iterator<Item = (&Basis, &C64)> {
        self.amps.iter()
    }

    fn check_live(&self, ws: &[Wire]) -> Result<(), QStateError> {
        for &w in ws {
            if !self.registry.contains(w) {
                return Err(QStateError::UnknownWire(w));
            }
        }
        Ok(())
    }

    fn with_amps(&self, amps: BTreeMap<Basis, C64>) -> JointState {
        JointState {
            amps,
            registry: self.registry.clone(),
            cap: self.cap,
            peak: self.peak,
        }
    }

    fn alloc(&mut self, k: usize) -> Result<Vec<Wire>, QStateError> {
        let needed = self.registry.len() + k;
        if needed > self.cap {
            return Err(QStateError::Capacity {
                needed,
                cap: self.cap,
            });
        }
        let mut used = [false; MAX_WIRES];
        for &w in &self.registry.order {
            used[w] = true;
        }
        let fresh: Vec<Wire> = (0..MAX_WIRES).filter(|&w| !used[w]).take(k).collect();
        self.registry.order.extend(&fresh);
        self.peak = self.peak.max(self.registry.len());
        Ok(fresh)
    }

    /// Tensors in fresh wires prepared in the basis state `init`.
    pub fn adjoin(&self, init: &[bool]) -> Result<(JointState, Vec<Wire>), QStateError> {
        let mut out = self.clone();
        let ws = out.alloc(init.len())?;
        if init.iter().any(|&b| b) {
            out.amps = self
                .amps
                .iter()
                .map(|(k, a)| {
                    let mut k = *k;
                    for (&w, &b) in ws.iter().zip(init) {
                        k.set(w, b);
                    }
                    (k, *a)
                })
                .collect();
        }
        Ok((out, ws))
    }

    /// Tensors in fresh wires carrying `amps` (qubit 1 most significant).
    pub fn adjoin_amplitudes(&self, amps: &[C64]) -> Result<(JointState, Vec<Wire>), QStateError> {
        if !amps.len().is_power_of_two() {
            return Err(QStateError::Shape(format!(
                "amplitude vector of length {} is not a power of two",
                amps.len()
            )));
        }
        let k = amps.len().trailing_zeros() as usize;
        let mut out = self.clone();
        let ws = out.alloc(k)?;
        let mut map = BTreeMap::new();
        for (key, a) in &self.amps {
            for (v, b) in amps.iter().enumerate() {
                if b.norm_sqr() == 0.0 {
                    continue;
                }
                let mut key = *key;
                for (pos, &w) in ws.iter().enumerate() {
                    key.set(w, (v >> (k - 1 - pos)) & 1 == 1);
                }
                map.insert(key, a * b);
            }
        }
        out.amps = map;
        Ok((out, ws))
    }

    pub fn norm_sq(&self) -> f64 {
        self.amps.values().map(|a| a.norm_sqr()).sum()
    }

    /// Squared norm of the component selected by the controls.
    pub fn mass(&self, ctrl: &[Control]) -> f64 {
        self.amps
            .iter()
            .filter(|(k, _)| k.matches(ctrl))
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    fn insert(map: &mut BTreeMap<Basis, C64>, k: Basis, a: C64) {
        let e = map.entry(k).or_insert(C64::new(0.0, 0.0));
        *e += a;
    }

    fn pruned(map: BTreeMap<Basis, C64>) -> BTreeMap<Basis, C64> {
        map.into_iter().filter(|(_, a)| a.norm() > PRUNE).collect()
    }

    /// Applies a 2×2 matrix (column `a` is the image of `|a>`) on `wire`
    /// within the subspace selected by `ctrl`.
    pub fn apply_matrix(
        &self,
        m: &[[C64; 2]; 2],
        wire: Wire,
        ctrl: &[Control],
    ) -> Result<JointState, QStateError> {
        self.check_live(&[wire])?;
        self.check_live(&ctrl.iter().map(|c| c.0).collect::<Vec<_>>())?;
        if ctrl.iter().any(|c| c.0 == wire) {
            return Err(QStateError::Shape(format!("wire {wire} controls itself")));
        }
        let mut map = BTreeMap::new();
        for (k, a) in &self.amps {
            if !k.matches(ctrl) {
                Self::insert(&mut map, *k, *a);
                continue;
            }
            let b = k.get(wire) as usize;
            for (row, r) in m.iter().enumerate() {
                let c = r[b];
                if c.norm_sqr() != 0.0 {
                    Self::insert(&mut map, k.with(wire, row == 1), c * a);
                }
            }
        }
        Ok(self.with_amps(Self::pruned(map)))
    }

    pub fn apply_1q(&self, gate: &Gate, wire: Wire, ctrl: &[Control]) -> Result<JointState, QStateError> {
        if gate.is_identity() {
            self.check_live(&[wire])?;
            return Ok(self.clone());
        }
        self.apply_matrix(&gate.matrix(), wire, ctrl)
    }

    /// Bit flip on `wire` under `ctrl`.
    pub fn flip(&self, wire: Wire, ctrl: &[Control]) -> Result<JointState, QStateError> {
        self.check_live(&[wire])?;
        let map = self
            .amps
            .iter()
            .map(|(k, a)| {
                if k.matches(ctrl) {
                    (k.with(wire, !k.get(wire)), *a)
                } else {
                    (*k, *a)
                }
            })
            .collect();
        Ok(self.with_amps(map))
    }

    /// Moves the content of each `src` wire to its `dst` wire under `ctrl`.
    /// The pairs must form a bijection on the wires they mention.
    pub fn permute(&self, pairs: &[(Wire, Wire)], ctrl: &[Control]) -> Result<JointState, QStateError> {
        let mut srcs: Vec<Wire> = pairs.iter().map(|p| p.0).collect();
        let mut dsts: Vec<Wire> = pairs.iter().map(|p| p.1).collect();
        self.check_live(&srcs)?;
        srcs.sort_unstable();
        dsts.sort_unstable();
        srcs.dedup();
        dsts.dedup();
        if srcs != dsts || srcs.len() != pairs.len() {
            return Err(QStateError::Shape("permutation is not a bijection".into()));
        }
        if ctrl.iter().any(|c| srcs.contains(&c.0)) {
            return Err(QStateError::Shape("permutation touches a control wire".into()));
        }
        let map = self
            .amps
            .iter()
            .map(|(k, a)| {
                if !k.matches(ctrl) {
                    return (*k, *a);
                }
                let mut out = *k;
                for &(s, d) in pairs {
                    out.set(d, k.get(s));
                }
                (out, *a)
            })
            .collect();
        Ok(self.with_amps(map))
    }

    /// `SWAP_i` on a bundle `u1…uk`: the data becomes `u_i u_1 … u_{i-1} u_{i+1} … u_k`.
    pub fn swap_to_front(&self, i: usize, bundle: &[Wire]) -> Result<JointState, QStateError> {
        if i == 0 || i > bundle.len() {
            return Err(QStateError::Shape(format!(
                "swap index {i} outside bundle of size {}",
                bundle.len()
            )));
        }
        self.permute(&front_pairs(i, bundle), &[])
    }

    /// Inverse of [`swap_to_front`](Self::swap_to_front).
    pub fn swap_inverse(&self, i: usize, bundle: &[Wire]) -> Result<JointState, QStateError> {
        if i == 0 || i > bundle.len() {
            return Err(QStateError::Shape(format!(
                "swap index {i} outside bundle of size {}",
                bundle.len()
            )));
        }
        let inv: Vec<(Wire, Wire)> = front_pairs(i, bundle).into_iter().map(|(s, d)| (d, s)).collect();
        self.permute(&inv, &[])
    }

    /// Applies `SWAP_{v+1}` to `target` in each basis branch, where `v` is
    /// the value of `index` (most significant first). Values past the end of
    /// the bundle leave the branch unchanged.
    pub fn controlled_swap_to_front(
        &self,
        index: &[Wire],
        target: &[Wire],
        ctrl: &[Control],
    ) -> Result<JointState, QStateError> {
        self.check_live(index)?;
        self.check_live(target)?;
        if index.iter().any(|w| target.contains(w)) {
            return Err(QStateError::Shape("index and target bundles overlap".into()));
        }
        let map = self
            .amps
            .iter()
            .map(|(k, a)| {
                if !k.matches(ctrl) {
                    return (*k, *a);
                }
                let v = k.value(index);
                if v >= target.len() as u128 {
                    return (*k, *a);
                }
                let mut out = *k;
                for (s, d) in front_pairs(v as usize + 1, target) {
                    out.set(d, k.get(s));
                }
                (out, *a)
            })
            .collect();
        Ok(self.with_amps(map))
    }

    /// Inverse of [`controlled_swap_to_front`](Self::controlled_swap_to_front).
    pub fn controlled_swap_from_front(
        &self,
        index: &[Wire],
        target: &[Wire],
        ctrl: &[Control],
    ) -> Result<JointState, QStateError> {
        self.check_live(index)?;
        self.check_live(target)?;
        if index.iter().any(|w| target.contains(w)) {
            return Err(QStateError::Shape("index and target bundles overlap".into()));
        }
        let map = self
            .amps
            .iter()
            .map(|(k, a)| {
                if !k.matches(ctrl) {
                    return (*k, *a);
                }
                let v = k.value(index);
                if v >= target.len() as u128 {
                    return (*k, *a);
                }
                let mut out = *k;
                for (s, d) in front_pairs(v as usize + 1, target) {
                    out.set(s, k.get(d));
                }
                (out, *a)
            })
            .collect();
        Ok(self.with_amps(map))
    }

    /// `‖self − other‖²` over basis keys.
    pub fn dist_sq(&self, other: &JointState) -> f64 {
        let mut d = 0.0;
        for (k, a) in &self.amps {
            let b = other.amps.get(k).copied().unwrap_or_default();
            d += (a - b).norm_sqr();
        }
        for (k, b) in &other.amps {
            if !self.amps.contains_key(k) {
                d += b.norm_sqr();
            }
        }
        d
    }

    /// Sparse copy of the amplitudes inside the failure region of a
    /// measurement: the `ctrl` component with `bundle ≠ bits`.
    pub fn failure_vector(&self, bundle: &[Wire], bits: &[bool], ctrl: &[Control]) -> BTreeMap<Basis, C64> {
        self.amps
            .iter()
            .filter(|(k, _)| k.matches(ctrl))
            .filter(|(k, _)| bundle.iter().zip(bits).any(|(&w, &b)| k.get(w) != b))
            .map(|(k, a)| (*k, *a))
            .collect()
    }

    pub fn project_bit(&self, wire: Wire, b: bool) -> Result<JointState, QStateError> {
        self.check_live(&[wire])?;
        Ok(self.project(&[(wire, b)]))
    }

    /// Zeroes every amplitude outside the subspace selected by `ctrl`.
    pub fn project(&self, ctrl: &[Control]) -> JointState {
        self.with_amps(
            self.amps
                .iter()
                .filter(|(k, _)| k.matches(ctrl))
                .map(|(k, a)| (*k, *a))
                .collect(),
        )
    }

    /// Squared norm lost by projecting the `ctrl` component onto `bundle = bits`.
    pub fn failure_mass(&self, bundle: &[Wire], bits: &[bool], ctrl: &[Control]) -> f64 {
        self.amps
            .iter()
            .filter(|(k, _)| k.matches(ctrl))
            .filter(|(k, _)| bundle.iter().zip(bits).any(|(&w, &b)| k.get(w) != b))
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    /// `‖ρ‖² − ‖Π ρ‖² ≤ ε`, with `Π` projecting `bundle` onto `bits`.
    pub fn measure_check(
        &self,
        bundle: &[Wire],
        bits: &[bool],
        eps: f64,
        tol: f64,
    ) -> Result<bool, QStateError> {
        self.check_live(bundle)?;
        if bundle.len() != bits.len() {
            return Err(QStateError::Shape(format!(
                "bundle of {} wires against {} bits",
                bundle.len(),
                bits.len()
            )));
        }
        Ok(self.failure_mass(bundle, bits, &[]) <= eps + tol)
    }

    /// `answer ⊕= x(v)` where `v` is the value of `index`.
    pub fn query(
        &self,
        index: &[Wire],
        answer: Wire,
        x: &dyn Fn(u128) -> bool,
        ctrl: &[Control],
    ) -> Result<JointState, QStateError> {
        self.check_live(index)?;
        self.check_live(&[answer])?;
        if index.contains(&answer) {
            return Err(QStateError::Shape("query answer wire is also an index wire".into()));
        }
        let map = self
            .amps
            .iter()
            .map(|(k, a)| {
                if k.matches(ctrl) && x(k.value(index)) {
                    (k.with(answer, !k.get(answer)), *a)
                } else {
                    (*k, *a)
                }
            })
            .collect();
        Ok(self.with_amps(map))
    }

    /// The bit carried by `wire` in every supported basis state, if constant.
    pub fn constant_value(&self, wire: Wire) -> Option<bool> {
        let mut it = self.amps.keys();
        let first = it.next()?.get(wire);
        if it.all(|k| k.get(wire) == first) {
            Some(first)
        } else {
            None
        }
    }

    /// Drops a wire whose value is constant across the support.
    pub fn remove_wire(&mut self, wire: Wire) -> bool {
        let Some(pos) = self.registry.position(wire) else {
            return false;
        };
        match self.constant_value(wire) {
            Some(true) => {
                self.amps = self.amps.iter().map(|(k, a)| (k.with(wire, false), *a)).collect();
            }
            Some(false) => {}
            None if self.amps.is_empty() => {}
            None => return false,
        }
        self.registry.order.remove(pos);
        true
    }

    /// Amplitudes of `bundle` when the rest of the register is a single
    /// basis state; `None` if the bundle is entangled with the rest.
    pub fn extract(&self, bundle: &[Wire]) -> Option<Vec<C64>> {
        let mut rest: Option<Basis> = None;
        let mut out = vec![C64::new(0.0, 0.0); 1usize << bundle.len()];
        for (k, a) in &self.amps {
            let mut r = *k;
            for &w in bundle {
                r.set(w, false);
            }
            match rest {
                None => rest = Some(r),
                Some(prev) if prev != r => return None,
                _ => {}
            }
            out[k.value(bundle) as usize] = *a;
        }
        Some(out)
    }

    /// Dense vector over `order` (first wire most significant); the register
    /// must not hold other wires in a non-zero state.
    pub fn dense(&self, order: &[Wire]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); 1usize << order.len()];
        for (k, a) in &self.amps {
            out[k.value(order) as usize] += *a;
        }
        out
    }

    /// Dense vector over the live wires in registry order.
    pub fn to_dense(&self) -> Vec<C64> {
        self.dense(&self.registry.order.clone())
    }

    /// `<self|other>` over basis keys.
    pub fn inner(&self, other: &JointState) -> C64 {
        let mut s = C64::new(0.0, 0.0);
        for (k, a) in &self.amps {
            if let Some(b) = other.amps.get(k) {
                s += a.conj() * b;
            }
        }
        s
    }

    /// Largest absolute amplitude difference over the union of supports.
    pub fn max_diff(&self, other: &JointState) -> f64 {
        let mut m: f64 = 0.0;
        for (k, a) in &self.amps {
            let b = other.amps.get(k).copied().unwrap_or_default();
            m = m.max((a - b).norm());
        }
        for (k, b) in &other.amps {
            if !self.amps.contains_key(k) {
                m = m.max(b.norm());
            }
        }
        m
    }

    /// Exchanges the contents of two equal-length bundles under `ctrl`.
    pub fn swap_bundles(&self, a: &[Wire], b: &[Wire], ctrl: &[Control]) -> Result<JointState, QStateError> {
        if a.len() != b.len() {
            return Err(QStateError::Shape("bundles differ in length".into()));
        }
        let mut pairs = Vec::new();
        for (&x, &y) in a.iter().zip(b) {
            if x != y {
                pairs.push((x, y));
                pairs.push((y, x));
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        if pairs.is_empty() {
            return Ok(self.clone());
        }
        self.permute(&pairs, ctrl)
    }

    /// Nonzero amplitudes, one per line: `|bits> re imag`, 12 significant digits.
    pub fn debug_dump(&self) -> String {
        let mut s = String::new();
        for (k, a) in &self.amps {
            let bits: String = self
                .registry
                .order
                .iter()
                .map(|&w| if k.get(w) { '1' } else { '0' })
                .collect();
            let _ = writeln!(s, "|{bits}> {} {}", fmt_sig(a.re), fmt_sig(a.im));
        }
        s
    }
}

fn front_pairs(i: usize, bundle: &[Wire]) -> Vec<(Wire, Wire)> {
    let mut pairs = vec![(bundle[i - 1], bundle[0])];
    for k in 0..i - 1 {
        pairs.push((bundle[k], bundle[k + 1]));
    }
    pairs
}

/// Formats with 12 significant digits, trimming trailing zeros.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let s = format!("{:.*e}", 11, x);
    let (mant, exp) = s.split_once('e').unwrap_or((&s, "0"));
    let exp: i32 = exp.parse().unwrap_or(0);
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        let t = format!("{:.*}", decimals, x);
        let t = if t.contains('.') {
            t.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            t
        };
        if t == "-0" {
            "0".into()
        } else {
            t
        }
    } else {
        let m = if mant.contains('.') {
            mant.trim_end_matches('0').trim_end_matches('.')
        } else {
            mant
        };
        format!("{m}e{exp}")
    }
}
