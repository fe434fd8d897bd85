//! C interface to the qfo workbench.
//!
//! Objects are opaque handles created by `*_parse` or `qfo_qtm_compile` and
//! released with the matching `*_free`. Every call returns a [`QfoStatus`];
//! on failure `qfo_last_error` describes the cause. Strings returned to the
//! caller are freed with `qfo_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use qfo::ast::{Formula, Structure};
use qfo::eval::{self, EvalError, RunConfig, Verdict};
use qfo::parser::{self, pretty};
use qfo::qtm::{self, CompileMode, QtmError, QtmSpec};
use qfo::wellformed::check_wellformed;

/// Result of every call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QfoStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    InvalidInput = 4,
    Capacity = 5,
    Runtime = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QfoVerdict {
    Accept = 0,
    Reject = 1,
    Undetermined = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QfoCompileMode {
    Qtc = 0,
    Functional = 1,
}

/// A parsed formula document.
pub struct QfoFormula {
    formula: Formula,
    n: Option<u64>,
    wire_cap: Option<usize>,
}

/// A parsed quantum Turing machine.
pub struct QfoQtm {
    spec: QtmSpec,
}

/// Outcome of evaluating a sentence.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct QfoEvalResult {
    pub verdict: QfoVerdict,
    /// Probability of the final measurement, NaN when there is none.
    pub probability: f64,
    pub peak_wires: usize,
    pub gates: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

type Res<T> = Result<T, (QfoStatus, String)>;

fn guard(f: impl FnOnce() -> Res<()>) -> QfoStatus {
    set_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QfoStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(&msg);
            s
        }
        Err(_) => {
            set_error("internal panic");
            QfoStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Res<&'a str> {
    if p.is_null() {
        return Err((QfoStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (QfoStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Res<&'a T> {
    p.as_ref()
        .ok_or_else(|| (QfoStatus::NullArgument, format!("{what} is null")))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Res<&'a mut T> {
    p.as_mut()
        .ok_or_else(|| (QfoStatus::NullArgument, format!("{what} is null")))
}

fn bits(s: &str) -> Res<Vec<bool>> {
    s.chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            _ => Err((QfoStatus::InvalidInput, format!("input `{s}` is not a binary string"))),
        })
        .collect()
}

fn eval_err(e: EvalError) -> (QfoStatus, String) {
    let s = match e {
        _ if e.is_capacity() => QfoStatus::Capacity,
        EvalError::Syntax(_) => QfoStatus::Parse,
        EvalError::Structure(_) | EvalError::OutOfDomain(_) => QfoStatus::InvalidInput,
        _ => QfoStatus::Runtime,
    };
    (s, e.to_string())
}

fn qtm_err(e: QtmError) -> (QfoStatus, String) {
    let s = match e {
        QtmError::Parse { .. } => QfoStatus::Parse,
        QtmError::Spec(_) => QfoStatus::InvalidInput,
        QtmError::Capacity(_) => QfoStatus::Capacity,
        QtmError::Machine(_) | QtmError::Compile(_) => QfoStatus::Runtime,
    };
    (s, e.to_string())
}

fn new_string(s: &str) -> *mut c_char {
    CString::new(s.replace('\0', " ")).unwrap_or_default().into_raw()
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn qfo_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn qfo_status_str(status: QfoStatus) -> *const c_char {
    let s: &'static CStr = match status {
        QfoStatus::Ok => c"ok",
        QfoStatus::NullArgument => c"null argument",
        QfoStatus::InvalidUtf8 => c"invalid UTF-8",
        QfoStatus::Parse => c"parse error",
        QfoStatus::InvalidInput => c"invalid input",
        QfoStatus::Capacity => c"capacity exceeded",
        QfoStatus::Runtime => c"runtime error",
        QfoStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn qfo_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a formula document (pragmas, definitions and one formula).
///
/// # Safety
/// `src` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qfo_formula_parse(src: *const c_char, out_formula: *mut *mut QfoFormula) -> QfoStatus {
    guard(|| {
        let src = text(src, "source")?;
        let slot = out(out_formula, "output handle")?;
        let doc = parser::parse_document(src).map_err(|ds| {
            let msg = ds.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n");
            (QfoStatus::Parse, msg)
        })?;
        let formula = doc
            .formula
            .ok_or_else(|| (QfoStatus::Parse, "document has no formula".to_string()))?;
        *slot = Box::into_raw(Box::new(QfoFormula {
            formula,
            n: doc.n,
            wire_cap: doc.wire_cap,
        }));
        Ok(())
    })
}

/// # Safety
/// `f` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn qfo_formula_free(f: *mut QfoFormula) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Input length given by an `@n` pragma, or 0.
///
/// # Safety
/// `f` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qfo_formula_n(f: *const QfoFormula) -> u64 {
    f.as_ref().and_then(|f| f.n).unwrap_or(0)
}

/// Canonical text of the formula.
///
/// # Safety
/// `f` must be a live handle and `out_text` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qfo_formula_pretty(f: *const QfoFormula, out_text: *mut *mut c_char) -> QfoStatus {
    guard(|| {
        let f = handle(f, "formula")?;
        *out(out_text, "output string")? = new_string(&pretty(&f.formula));
        Ok(())
    })
}

/// Runs the well-formedness checker; the report text is optional.
///
/// # Safety
/// `f` must be a live handle, `well_formed` a valid pointer and `report`
/// null or a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qfo_formula_check(
    f: *const QfoFormula,
    well_formed: *mut bool,
    report: *mut *mut c_char,
) -> QfoStatus {
    guard(|| {
        let f = handle(f, "formula")?;
        let r = check_wellformed(&f.formula);
        *out(well_formed, "result")? = r.ok;
        if let Some(slot) = report.as_mut() {
            *slot = new_string(&r.render_text());
        }
        Ok(())
    })
}

/// Evaluates the sentence on a classical input over `{0,1}`. An empty input
/// uses `n` zeros from the `@n` pragma. A zero `tolerance` keeps the default.
///
/// # Safety
/// `f` must be a live handle, `input` a NUL-terminated string and `result`
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qfo_formula_eval(
    f: *const QfoFormula,
    input: *const c_char,
    tolerance: f64,
    result: *mut QfoEvalResult,
) -> QfoStatus {
    guard(|| {
        let f = handle(f, "formula")?;
        let mut x = bits(text(input, "input")?)?;
        let slot = out(result, "result")?;
        if x.is_empty() {
            x = vec![false; f.n.unwrap_or(0) as usize];
        }
        if x.is_empty() {
            return Err((QfoStatus::InvalidInput, "empty input and no @n pragma".into()));
        }
        if let Some(n) = f.n.filter(|&n| n != x.len() as u64) {
            return Err((QfoStatus::InvalidInput, format!("input has {} bits, n = {n}", x.len())));
        }
        let base = RunConfig::default();
        if tolerance != 0.0 && !(tolerance > 0.0 && tolerance <= 1e-3) {
            return Err((QfoStatus::InvalidInput, "tolerance must lie in (0, 1e-3]".into()));
        }
        let cfg = RunConfig {
            tolerance: if tolerance == 0.0 { base.tolerance } else { tolerance },
            wire_cap: f.wire_cap.unwrap_or(base.wire_cap),
            ..base
        };
        let wf = check_wellformed(&f.formula);
        if !wf.ok {
            return Err((QfoStatus::InvalidInput, wf.render_text()));
        }
        let r = eval::evaluate(&f.formula, &Structure::new(x), &cfg).map_err(eval_err)?;
        *slot = QfoEvalResult {
            verdict: match r.verdict {
                Verdict::Accept => QfoVerdict::Accept,
                Verdict::Reject => QfoVerdict::Reject,
                Verdict::Undetermined => QfoVerdict::Undetermined,
            },
            probability: r.probability.unwrap_or(f64::NAN),
            peak_wires: r.peak_wires,
            gates: r.gates,
        };
        Ok(())
    })
}

/// Parses a `.qtm` machine description.
///
/// # Safety
/// `src` must be a NUL-terminated string and `out_qtm` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qfo_qtm_parse(src: *const c_char, out_qtm: *mut *mut QfoQtm) -> QfoStatus {
    guard(|| {
        let src = text(src, "source")?;
        let slot = out(out_qtm, "output handle")?;
        let spec = qtm::parse_qtm(src).map_err(qtm_err)?;
        *slot = Box::into_raw(Box::new(QfoQtm { spec }));
        Ok(())
    })
}

/// # Safety
/// `m` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn qfo_qtm_free(m: *mut QfoQtm) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Simulates for `c·ilog(n)` steps and returns the acceptance probability.
///
/// # Safety
/// `m` must be a live handle, `input` a NUL-terminated string and
/// `probability` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qfo_qtm_run(m: *const QfoQtm, input: *const c_char, probability: *mut f64) -> QfoStatus {
    guard(|| {
        let m = handle(m, "machine")?;
        let x = bits(text(input, "input")?)?;
        let slot = out(probability, "result")?;
        *slot = qtm::run(&m.spec, &x).map_err(qtm_err)?.probability;
        Ok(())
    })
}

/// Checks unitarity on the configurations reachable for this input.
///
/// # Safety
/// `m` must be a live handle, `input` a NUL-terminated string and
/// `well_formed` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qfo_qtm_check(m: *const QfoQtm, input: *const c_char, well_formed: *mut bool) -> QfoStatus {
    guard(|| {
        let m = handle(m, "machine")?;
        let x = bits(text(input, "input")?)?;
        let slot = out(well_formed, "result")?;
        let r = qtm::check_wellformed_qtm(&m.spec, x.len() as u64, &x, qtm::CONFIG_CAP).map_err(qtm_err)?;
        *slot = r.well_formed;
        Ok(())
    })
}

/// Compiles the machine for inputs of length `n` into a sentence whose
/// final measurement has error bound `eps`.
///
/// # Safety
/// `m` must be a live handle and `out_formula` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qfo_qtm_compile(
    m: *const QfoQtm,
    n: u64,
    mode: QfoCompileMode,
    eps: f64,
    out_formula: *mut *mut QfoFormula,
) -> QfoStatus {
    guard(|| {
        let m = handle(m, "machine")?;
        let slot = out(out_formula, "output handle")?;
        let mode = match mode {
            QfoCompileMode::Qtc => CompileMode::Qtc,
            QfoCompileMode::Functional => CompileMode::Functional,
        };
        let cs = qtm::compile(&m.spec, n, mode, eps).map_err(qtm_err)?;
        *slot = Box::into_raw(Box::new(QfoFormula {
            wire_cap: Some(cs.run_config().wire_cap),
            n: Some(n),
            formula: cs.sentence,
        }));
        Ok(())
    })
}
