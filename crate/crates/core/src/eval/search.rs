//! Search over witnesses of introductory quantum quantifiers.
//!
//! When the body is linear in the witness (no nested search, no state
//! comparisons), each measurement `j` contributes a Gram matrix `F_j` of
//! failure vectors over the basis witnesses, and the failure mass for a
//! witness `α` is `α† F_j α`. Otherwise witnesses are sampled.

use nalgebra::DMatrix;
use rand::Rng;

use super::{EvalError, Ev, QScope, QVal, Site, Snap, Truth, Witness, R};
use crate::ast::{Formula, QuantKind, Span};
use crate::qstate::C64;

struct Trace {
    truth: Truth,
    sites: Vec<Site>,
}

enum Spectral {
    Decided(Truth),
    Fallback,
}

fn needs_sampling(body: &Formula) -> bool {
    body.any(&|g| match g {
        Formula::CQuant { kind, .. } => *kind == QuantKind::Exists,
        Formula::QQuant { var, body, .. } => !crate::wellformed::occurs_second(var, body),
        _ => false,
    })
}

fn basis(dim: usize, a: usize) -> Vec<C64> {
    let mut v = vec![C64::new(0.0, 0.0); dim];
    v[a] = C64::new(1.0, 0.0);
    v
}

fn bits_of(a: usize, k: usize) -> Vec<bool> {
    (0..k).rev().map(|b| (a >> b) & 1 == 1).collect()
}

fn quad(m: &DMatrix<C64>, v: &[C64]) -> f64 {
    let mut s = C64::new(0.0, 0.0);
    for r in 0..v.len() {
        for c in 0..v.len() {
            s += v[r].conj() * m[(r, c)] * v[c];
        }
    }
    s.re
}

fn normalize(v: &mut [C64]) {
    let n: f64 = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    if n > 0.0 {
        for a in v.iter_mut() {
            *a /= n;
        }
    }
}

impl Ev<'_> {
    pub(super) fn introductory(
        &mut self,
        kind: QuantKind,
        var: &str,
        k: usize,
        body: &Formula,
        neg: bool,
        span: Span,
    ) -> R<Truth> {
        if self.rec.is_some() {
            return Err(EvalError::Lower(format!(
                "quantifier over `{var}` needs a witness search"
            )));
        }
        if k > self.cfg.qcap {
            return Err(EvalError::Capacity(format!(
                "quantifier over `{var}` has {k} qubits, search limit is {}",
                self.cfg.qcap
            )));
        }
        let base = self.snap();
        if !needs_sampling(body) {
            match self.spectral(kind, var, k, body, neg, span, &base)? {
                Spectral::Decided(t) => return Ok(t),
                Spectral::Fallback => {}
            }
        }
        self.sample(kind, var, k, body, neg, span, base)
    }

    fn bind_witness(&mut self, var: &str, amps: &[C64]) -> R<()> {
        let (s, ws) = self.state.adjoin_amplitudes(amps)?;
        self.state = s;
        self.qenv.push(QScope {
            name: var.to_string(),
            val: QVal::Slots(ws.into_iter().map(Some).collect()),
        });
        Ok(())
    }

    /// Runs the body with witness `amps`; on success the witness scope is
    /// popped and the state is kept.
    fn try_witness(&mut self, var: &str, amps: &[C64], body: &Formula, neg: bool) -> R<Truth> {
        self.bind_witness(var, amps)?;
        let t = self.eval(body, neg)?;
        self.qenv.pop();
        Ok(t)
    }

    #[allow(clippy::too_many_arguments)]
    fn spectral(
        &mut self,
        kind: QuantKind,
        var: &str,
        k: usize,
        body: &Formula,
        neg: bool,
        span: Span,
        base: &Snap,
    ) -> R<Spectral> {
        let dim = 1usize << k;
        let (skip, gc) = (self.skip_vacuous, self.gc_on);
        self.skip_vacuous = false;
        self.gc_on = false;
        let mut traces = Vec::with_capacity(dim);
        let mut outcome = Ok(());
        for a in 0..dim {
            self.restore(base.clone());
            let r = self.state.adjoin(&bits_of(a, k)).map_err(EvalError::from).and_then(|(s, ws)| {
                self.state = s;
                self.qenv.push(QScope {
                    name: var.to_string(),
                    val: QVal::Slots(ws.into_iter().map(Some).collect()),
                });
                self.linear = Some(Vec::new());
                self.eval(body, neg)
            });
            let sites = self.linear.take().unwrap_or_default();
            match r {
                Ok(truth) => traces.push(Trace { truth, sites }),
                Err(e) => {
                    outcome = Err(e);
                    break;
                }
            }
        }
        self.skip_vacuous = skip;
        self.gc_on = gc;
        self.restore(base.clone());
        outcome?;

        let first = &traces[0];
        let consistent = traces.iter().all(|t| {
            t.truth == first.truth
                && t.sites.len() == first.sites.len()
                && t.sites.iter().zip(&first.sites).all(|(x, y)| match (x, y) {
                    (Site::Measure { eps: a, .. }, Site::Measure { eps: b, .. }) => a == b,
                    (Site::Atom(a), Site::Atom(b)) => a == b,
                    _ => false,
                })
        });
        if !consistent || first.truth == Truth::Unknown {
            return Ok(Spectral::Fallback);
        }
        if first.truth == Truth::False {
            return Ok(Spectral::Decided(Truth::False));
        }

        let mut mats: Vec<(f64, DMatrix<C64>)> = Vec::new();
        for (j, site) in first.sites.iter().enumerate() {
            let Site::Measure { eps, .. } = site else { continue };
            let vecs: Vec<_> = traces
                .iter()
                .map(|t| match &t.sites[j] {
                    Site::Measure { failure, .. } => failure,
                    _ => unreachable!(),
                })
                .collect();
            let m = DMatrix::from_fn(dim, dim, |r, c| {
                let mut s = C64::new(0.0, 0.0);
                for (key, a) in vecs[r] {
                    if let Some(b) = vecs[c].get(key) {
                        s += a.conj() * b;
                    }
                }
                s
            });
            mats.push((*eps, m));
        }
        let tol = self.cfg.tolerance;
        let spectra: Vec<_> = mats.iter().map(|(_, m)| m.clone().symmetric_eigen()).collect();

        match kind {
            QuantKind::Forall => {
                for ((eps, _), eig) in mats.iter().zip(&spectra) {
                    let (idx, lmax) = eig
                        .eigenvalues
                        .iter()
                        .enumerate()
                        .fold((0, f64::MIN), |acc, (i, &l)| if l > acc.1 { (i, l) } else { acc });
                    if lmax > eps + tol {
                        let v: Vec<C64> = eig.eigenvectors.column(idx).iter().copied().collect();
                        self.witnesses.push(Witness {
                            var: var.to_string(),
                            kind,
                            amplitudes: v,
                            spectral: true,
                            span,
                        });
                        return Ok(Spectral::Decided(Truth::False));
                    }
                }
                Ok(Spectral::Decided(Truth::True))
            }
            QuantKind::Exists => {
                for ((eps, _), eig) in mats.iter().zip(&spectra) {
                    let lmin = eig.eigenvalues.iter().copied().fold(f64::MAX, f64::min);
                    if lmin > eps + tol {
                        return Ok(Spectral::Decided(Truth::False));
                    }
                }
                let violation = |v: &[C64]| {
                    mats.iter()
                        .map(|(eps, m)| quad(m, v) - eps)
                        .fold(f64::MIN, f64::max)
                };
                let mut candidates: Vec<Vec<C64>> = Vec::new();
                for eig in &spectra {
                    let (idx, _) = eig
                        .eigenvalues
                        .iter()
                        .enumerate()
                        .fold((0, f64::MAX), |acc, (i, &l)| if l < acc.1 { (i, l) } else { acc });
                    candidates.push(eig.eigenvectors.column(idx).iter().copied().collect());
                }
                candidates.extend((0..dim).map(|a| basis(dim, a)));
                let mut found = candidates.into_iter().find(|v| violation(v) <= tol);
                if found.is_none() && !mats.is_empty() {
                    found = self.descend(&mats, dim, tol);
                }
                let Some(v) = found else {
                    return Ok(Spectral::Decided(Truth::Unknown));
                };
                match self.try_witness(var, &v, body, neg)? {
                    Truth::True => {
                        self.witnesses.push(Witness {
                            var: var.to_string(),
                            kind,
                            amplitudes: v,
                            spectral: true,
                            span,
                        });
                        Ok(Spectral::Decided(Truth::True))
                    }
                    _ => {
                        self.restore(base.clone());
                        Ok(Spectral::Decided(Truth::Unknown))
                    }
                }
            }
        }
    }

    /// Gradient descent on `Σ_j max(0, α†F_jα − ε_j)²` over unit vectors,
    /// with random restarts.
    fn descend(&mut self, mats: &[(f64, DMatrix<C64>)], dim: usize, tol: f64) -> Option<Vec<C64>> {
        let scale = mats
            .iter()
            .map(|(_, m)| m.iter().map(|z| z.norm()).sum::<f64>())
            .fold(1e-12, f64::max);
        for _ in 0..24 {
            let mut v = self.random_state(dim);
            for _ in 0..400 {
                let mut grad = vec![C64::new(0.0, 0.0); dim];
                let mut worst = f64::MIN;
                for (eps, m) in mats {
                    let q = quad(m, &v);
                    worst = worst.max(q - eps);
                    let excess = q - eps;
                    if excess <= 0.0 {
                        continue;
                    }
                    for r in 0..dim {
                        let mut fv = C64::new(0.0, 0.0);
                        for c in 0..dim {
                            fv += m[(r, c)] * v[c];
                        }
                        grad[r] += (fv - v[r] * q) * (2.0 * excess);
                    }
                }
                if worst <= tol {
                    return Some(v);
                }
                let step = 0.5 / scale;
                for (a, g) in v.iter_mut().zip(&grad) {
                    *a -= g * step;
                }
                normalize(&mut v);
            }
        }
        None
    }

    fn random_state(&mut self, dim: usize) -> Vec<C64> {
        let mut v: Vec<C64> = (0..dim)
            .map(|_| {
                let u1: f64 = self.rng.random::<f64>().max(1e-300);
                let u2: f64 = self.rng.random();
                let r = (-2.0 * u1.ln()).sqrt();
                let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
                C64::new(r * c, r * s)
            })
            .collect();
        normalize(&mut v);
        v
    }

    #[allow(clippy::too_many_arguments)]
    fn sample(
        &mut self,
        kind: QuantKind,
        var: &str,
        k: usize,
        body: &Formula,
        neg: bool,
        span: Span,
        base: Snap,
    ) -> R<Truth> {
        let dim = 1usize << k;
        let mut candidates: Vec<Vec<C64>> = (0..dim).map(|a| basis(dim, a)).collect();
        for _ in 0..self.cfg.samples {
            let v = self.random_state(dim);
            candidates.push(v);
        }
        for v in candidates {
            self.restore(base.clone());
            let t = self.try_witness(var, &v, body, neg)?;
            match (kind, t) {
                (QuantKind::Exists, Truth::True) => {
                    self.witnesses.push(Witness {
                        var: var.to_string(),
                        kind,
                        amplitudes: v,
                        spectral: false,
                        span,
                    });
                    return Ok(Truth::True);
                }
                (QuantKind::Forall, Truth::False) => {
                    self.restore(base);
                    self.witnesses.push(Witness {
                        var: var.to_string(),
                        kind,
                        amplitudes: v,
                        spectral: false,
                        span,
                    });
                    return Ok(Truth::False);
                }
                _ => {}
            }
        }
        self.restore(base);
        Ok(Truth::Unknown)
    }
}
