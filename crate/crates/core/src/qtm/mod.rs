//! Logtime quantum Turing machines: the `.qtm` description format, a direct
//! simulator over surface configurations, and a unitarity check of the
//! time-evolution operator on the reachable configuration space.
//!
//! The machine has a random-access input, an index tape of `ilog(n)` cells
//! and a work tape of `c·ilog(n)` cells. Both heads start on cell 1 and both
//! tapes start filled with `0`. A transition reads the state, the query
//! answer bit, the scanned work symbol and the scanned index symbol. The
//! query state `qq -> qn` flips the answer bit by `x(addr)`, where `addr` is
//! the index tape read as a binary number (the symbols `1` and `B` count as
//! one), and records the jump in `l1`. Halting configurations are frozen.
//! After `c·ilog(n)` steps the first work cell is observed; the machine
//! accepts when the second bit of its code is 1.

pub mod compile;

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use thiserror::Error;

use crate::ast::ilog;

pub use compile::{compile, compile_functional, compile_qtc, CompileMode, CompiledSentence, Layout};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QtmError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid machine: {0}")]
    Spec(String),
    #[error("machine error: {0}")]
    Machine(String),
    #[error("capacity: {0}")]
    Capacity(String),
    #[error("cannot compile: {0}")]
    Compile(String),
}

type R<T> = Result<T, QtmError>;

/// Tape symbol.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sym {
    Zero,
    One,
    Blank,
}

impl Sym {
    pub const ALL: [Sym; 3] = [Sym::Zero, Sym::One, Sym::Blank];

    /// Two-bit code: `0 ↦ 00`, `1 ↦ 01`, `B ↦ 11`.
    pub fn code(self) -> [bool; 2] {
        match self {
            Sym::Zero => [false, false],
            Sym::One => [false, true],
            Sym::Blank => [true, true],
        }
    }

    pub fn from_char(c: char) -> Option<Sym> {
        match c {
            '0' => Some(Sym::Zero),
            '1' => Some(Sym::One),
            'B' => Some(Sym::Blank),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Sym::Zero => '0',
            Sym::One => '1',
            Sym::Blank => 'B',
        }
    }

    /// Bit contributed to a query address.
    pub fn address_bit(self) -> bool {
        self.code()[1]
    }
}

/// Concatenated two-bit codes of a tape content over `{0,1,B}`.
pub fn encode_tape(content: &str) -> R<String> {
    let mut out = String::with_capacity(2 * content.len());
    for (k, c) in content.chars().enumerate() {
        let s = Sym::from_char(c).ok_or_else(|| QtmError::Parse {
            line: 1,
            message: format!("symbol `{c}` at position {} is not 0, 1 or B", k + 1),
        })?;
        for b in s.code() {
            out.push(if b { '1' } else { '0' });
        }
    }
    Ok(out)
}

/// Symbol written by a move.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Write {
    Keep,
    Put(Sym),
}

impl Write {
    fn apply(self, read: Sym) -> Sym {
        match self {
            Write::Keep => read,
            Write::Put(s) => s,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Move {
    pub amp: f64,
    pub amp_text: String,
    pub state: usize,
    pub work: Write,
    pub index: Write,
    /// Index head move.
    pub d1: i8,
    /// Work head move.
    pub d2: i8,
}

/// One `delta:` line; `None` patterns match any symbol.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub state: usize,
    pub input: Option<bool>,
    pub work: Option<Sym>,
    pub index: Option<Sym>,
    pub moves: Vec<Move>,
    pub line: usize,
}

impl Row {
    fn matches(&self, ans: bool, work: Sym, index: Sym) -> bool {
        self.input.is_none_or(|a| a == ans)
            && self.work.is_none_or(|s| s == work)
            && self.index.is_none_or(|s| s == index)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QtmSpec {
    /// State names; the initial state is always number 0.
    pub states: Vec<String>,
    pub halting: BTreeSet<usize>,
    pub query: Option<(usize, usize)>,
    pub c: u64,
    pub rows: Vec<Row>,
}

/// Tape sizes for one input length.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Geometry {
    pub n: u64,
    pub index_cells: usize,
    pub work_cells: usize,
    pub steps: u64,
}

impl QtmSpec {
    pub fn geometry(&self, n: u64) -> R<Geometry> {
        if n < 2 {
            return Err(QtmError::Spec(format!("input length {n} leaves no index tape")));
        }
        let l = ilog(n).map_err(|e| QtmError::Spec(e.to_string()))?;
        Ok(Geometry {
            n,
            index_cells: l as usize,
            work_cells: (self.c * l) as usize,
            steps: self.c * l,
        })
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s == name)
    }

    pub fn is_halting(&self, q: usize) -> bool {
        self.halting.contains(&q)
    }

    fn row_for(&self, q: usize, ans: bool, work: Sym, index: Sym) -> Option<&Row> {
        self.rows
            .iter()
            .find(|r| r.state == q && r.matches(ans, work, index))
    }
}

// ---- parsing ----

fn perr(line: usize, message: impl Into<String>) -> QtmError {
    QtmError::Parse {
        line,
        message: message.into(),
    }
}

/// Parses `1`, decimals, `cos(pi/k)`, `sin(j*pi/k)`, each optionally negated.
pub fn parse_amplitude(text: &str) -> Option<f64> {
    let t = text.trim();
    let (sign, body) = match t.strip_prefix('-') {
        Some(rest) => (-1.0, rest.trim()),
        None => (1.0, t.strip_prefix('+').unwrap_or(t).trim()),
    };
    let trig = |name: &str| -> Option<f64> {
        let inner = body.strip_prefix(name)?.trim().strip_prefix('(')?.strip_suffix(')')?;
        let (num, den) = match inner.split_once('/') {
            Some((a, b)) => (a.trim(), b.trim().parse::<f64>().ok()?),
            None => (inner.trim(), 1.0),
        };
        let k = match num.strip_suffix("pi") {
            Some("") => 1.0,
            Some(pre) => pre.trim().strip_suffix('*')?.trim().parse::<f64>().ok()?,
            None => return None,
        };
        if den == 0.0 {
            return None;
        }
        Some(k * PI / den)
    };
    let v = if let Some(a) = trig("cos") {
        a.cos()
    } else if let Some(a) = trig("sin") {
        a.sin()
    } else {
        body.parse::<f64>().ok().filter(|v| v.is_finite())?
    };
    Some(sign * v)
}

fn parse_dir(tok: &str, line: usize) -> R<i8> {
    match tok {
        "-1" | "L" => Ok(-1),
        "0" | "S" => Ok(0),
        "1" | "+1" | "R" => Ok(1),
        _ => Err(perr(line, format!("head move `{tok}` is not -1, 0 or +1"))),
    }
}

fn parse_pat(tok: &str, line: usize) -> R<Option<Sym>> {
    if tok == "*" {
        return Ok(None);
    }
    let mut cs = tok.chars();
    match (cs.next().and_then(Sym::from_char), cs.next()) {
        (Some(s), None) => Ok(Some(s)),
        _ => Err(perr(line, format!("symbol `{tok}` is not 0, 1, B or *"))),
    }
}

fn parse_write(tok: &str, line: usize) -> R<Write> {
    Ok(match parse_pat(tok, line)? {
        None => Write::Keep,
        Some(s) => Write::Put(s),
    })
}

impl std::str::FromStr for QtmSpec {
    type Err = QtmError;
    fn from_str(src: &str) -> R<QtmSpec> {
        parse_qtm(src)
    }
}

/// Parses a `.qtm` description.
pub fn parse_qtm(src: &str) -> R<QtmSpec> {
    let mut names: Option<Vec<String>> = None;
    let mut initial: Option<(String, usize)> = None;
    let mut halting: Vec<(String, usize)> = Vec::new();
    let mut query: Option<(String, String, usize)> = None;
    let mut c: Option<u64> = None;
    let mut deltas: Vec<(usize, String)> = Vec::new();
    for (k, raw) in src.lines().enumerate() {
        let line = k + 1;
        let text = raw.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        let (key, rest) = text
            .split_once(':')
            .ok_or_else(|| perr(line, "expected `key: value`"))?;
        let rest = rest.trim();
        match key.trim() {
            "states" => {
                let v: Vec<String> = rest.split_whitespace().map(str::to_string).collect();
                if v.is_empty() {
                    return Err(perr(line, "no states listed"));
                }
                names = Some(v);
            }
            "initial" => initial = Some((rest.to_string(), line)),
            "halting" => halting.extend(rest.split_whitespace().map(|s| (s.to_string(), line))),
            "query" => {
                let (a, b) = rest
                    .split_once("->")
                    .ok_or_else(|| perr(line, "expected `query: qq -> qn`"))?;
                query = Some((a.trim().to_string(), b.trim().to_string(), line));
            }
            "c" => {
                let v: u64 = rest
                    .parse()
                    .map_err(|_| perr(line, format!("`{rest}` is not a positive integer")))?;
                if v == 0 {
                    return Err(perr(line, "c must be positive"));
                }
                c = Some(v);
            }
            "delta" => deltas.push((line, rest.to_string())),
            other => return Err(perr(line, format!("unknown key `{other}`"))),
        }
    }
    let mut names = names.ok_or_else(|| perr(1, "missing `states:` line"))?;
    let (init, init_line) = initial.ok_or_else(|| perr(1, "missing `initial:` line"))?;
    let pos = names
        .iter()
        .position(|s| *s == init)
        .ok_or_else(|| perr(init_line, format!("initial state `{init}` is not listed")))?;
    let first = names.remove(pos);
    names.insert(0, first);
    let dup: BTreeSet<&String> = names.iter().collect();
    if dup.len() != names.len() {
        return Err(perr(1, "a state is listed twice"));
    }
    let lookup = |s: &str, line: usize| -> R<usize> {
        names
            .iter()
            .position(|x| x == s)
            .ok_or_else(|| perr(line, format!("unknown state `{s}`")))
    };
    let mut halt = BTreeSet::new();
    for (h, line) in &halting {
        halt.insert(lookup(h, *line)?);
    }
    let query = match query {
        Some((a, b, line)) => {
            let (qa, qb) = (lookup(&a, line)?, lookup(&b, line)?);
            if halt.contains(&qa) {
                return Err(perr(line, "the query state cannot be halting"));
            }
            Some((qa, qb))
        }
        None => None,
    };
    let mut rows = Vec::new();
    for (line, text) in deltas {
        let (lhs, rhs) = text
            .split_once("->")
            .ok_or_else(|| perr(line, "expected `q in wk ix -> moves`"))?;
        let l: Vec<&str> = lhs.split_whitespace().collect();
        if l.len() != 4 {
            return Err(perr(line, "source needs a state, input, work and index symbol"));
        }
        let state = lookup(l[0], line)?;
        if halt.contains(&state) {
            return Err(perr(line, format!("halting state `{}` has a transition", l[0])));
        }
        if query.is_some_and(|(qq, _)| qq == state) {
            return Err(perr(line, format!("query state `{}` has a transition", l[0])));
        }
        let input = match l[1] {
            "*" => None,
            "0" => Some(false),
            "1" => Some(true),
            t => return Err(perr(line, format!("input symbol `{t}` is not 0, 1 or *"))),
        };
        let work = parse_pat(l[2], line)?;
        let index = parse_pat(l[3], line)?;
        let mut moves = Vec::new();
        for part in rhs.split('|') {
            let toks: Vec<&str> = part.split_whitespace().collect();
            if toks.len() < 6 {
                return Err(perr(line, "a move needs `amp q' wk' ix' d1 d2`"));
            }
            // the amplitude may contain spaces, so the last five tokens are fixed
            let k = toks.len() - 5;
            let amp_text = toks[..k].join(" ");
            let amp = parse_amplitude(&amp_text)
                .ok_or_else(|| perr(line, format!("cannot read amplitude `{amp_text}`")))?;
            moves.push(Move {
                amp,
                amp_text,
                state: lookup(toks[k], line)?,
                work: parse_write(toks[k + 1], line)?,
                index: parse_write(toks[k + 2], line)?,
                d1: parse_dir(toks[k + 3], line)?,
                d2: parse_dir(toks[k + 4], line)?,
            });
        }
        if moves.len() > 2 {
            return Err(perr(line, "a row has at most two moves"));
        }
        rows.push(Row {
            state,
            input,
            work,
            index,
            moves,
            line,
        });
    }
    Ok(QtmSpec {
        states: names,
        halting: halt,
        query,
        c: c.ok_or_else(|| perr(1, "missing `c:` line"))?,
        rows,
    })
}

// ---- configurations and the step map ----

/// Surface configuration; head positions are 1-based.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Config {
    pub state: usize,
    pub ans: bool,
    pub l1: u64,
    pub l2: usize,
    pub index: Vec<Sym>,
    pub l3: usize,
    pub work: Vec<Sym>,
}

impl Config {
    pub fn initial(geo: &Geometry) -> Config {
        Config {
            state: 0,
            ans: false,
            l1: 0,
            l2: 1,
            index: vec![Sym::Zero; geo.index_cells],
            l3: 1,
            work: vec![Sym::Zero; geo.work_cells],
        }
    }

    pub fn address(&self) -> u64 {
        self.index
            .iter()
            .fold(0u64, |acc, s| (acc << 1) | s.address_bit() as u64)
    }

    /// Local part seen by a transition: answer, state, scanned index and work symbols.
    pub fn local(&self) -> (bool, usize, Sym, Sym) {
        (self.ans, self.state, self.index[self.l2 - 1], self.work[self.l3 - 1])
    }

    pub fn accepts(&self) -> bool {
        self.work.first().is_some_and(|s| s.code()[1])
    }
}

fn input_bit(x: &[bool], v: u64) -> bool {
    x.get(v as usize).copied().unwrap_or(false)
}

fn moved(pos: usize, d: i8, len: usize, tape: &str) -> R<usize> {
    let p = pos as i64 + d as i64;
    if p < 1 || p > len as i64 {
        return Err(QtmError::Machine(format!(
            "{tape} head leaves the tape at cell {p}"
        )));
    }
    Ok(p as usize)
}

/// One application of the time-evolution operator to a basis configuration.
pub fn step(m: &QtmSpec, cfg: &Config, x: &[bool]) -> R<Vec<(f64, Config)>> {
    if m.is_halting(cfg.state) {
        return Ok(vec![(1.0, cfg.clone())]);
    }
    if let Some((qq, qn)) = m.query {
        if cfg.state == qq {
            let addr = cfg.address();
            let mut next = cfg.clone();
            next.ans ^= input_bit(x, addr);
            next.l1 ^= addr;
            next.state = qn;
            return Ok(vec![(1.0, next)]);
        }
    }
    let (ans, q, ix, wk) = cfg.local();
    let row = m.row_for(q, ans, wk, ix).ok_or_else(|| {
        QtmError::Machine(format!(
            "no transition for state `{}` reading input {}, work {}, index {}",
            m.states[q],
            ans as u8,
            wk.as_char(),
            ix.as_char()
        ))
    })?;
    let mut out = Vec::with_capacity(row.moves.len());
    for mv in &row.moves {
        let mut next = cfg.clone();
        next.state = mv.state;
        next.index[cfg.l2 - 1] = mv.index.apply(ix);
        next.work[cfg.l3 - 1] = mv.work.apply(wk);
        next.l2 = moved(cfg.l2, mv.d1, next.index.len(), "index")?;
        next.l3 = moved(cfg.l3, mv.d2, next.work.len(), "work")?;
        out.push((mv.amp, next));
    }
    Ok(out)
}

const PRUNE: f64 = 1e-14;

/// Result of a direct simulation.
#[derive(Clone, Debug, PartialEq)]
pub struct SimReport {
    /// Probability that the output cell reads 1 after the last step.
    pub probability: f64,
    pub steps: u64,
    pub total_mass: f64,
    pub halted_mass: f64,
    /// Some path was still running after the last step.
    pub timed_out: bool,
    /// Mass that entered a halting state at each step (step 0 is the start).
    pub halting_times: BTreeMap<u64, f64>,
}

/// Evolves the configuration superposition for `max_steps` steps and
/// observes the output cell.
pub fn simulate(m: &QtmSpec, x: &[bool], max_steps: u64) -> R<SimReport> {
    let geo = m.geometry(x.len() as u64)?;
    let (cur, halting_times) = evolve(m, &geo, x, max_steps, |_| {})?;
    let mut report = SimReport {
        probability: 0.0,
        steps: max_steps,
        total_mass: 0.0,
        halted_mass: 0.0,
        timed_out: false,
        halting_times,
    };
    for (c, a) in &cur {
        let p = a * a;
        report.total_mass += p;
        if c.accepts() {
            report.probability += p;
        }
        if m.is_halting(c.state) {
            report.halted_mass += p;
        } else if p > PRUNE {
            report.timed_out = true;
        }
    }
    Ok(report)
}

/// Simulates for `c·ilog(n)` steps.
pub fn run(m: &QtmSpec, x: &[bool]) -> R<SimReport> {
    let geo = m.geometry(x.len() as u64)?;
    simulate(m, x, geo.steps)
}

type Superposition = BTreeMap<Config, f64>;

fn evolve(
    m: &QtmSpec,
    geo: &Geometry,
    x: &[bool],
    steps: u64,
    mut visit: impl FnMut(&Config),
) -> R<(Superposition, BTreeMap<u64, f64>)> {
    let mut cur: Superposition = BTreeMap::new();
    cur.insert(Config::initial(geo), 1.0);
    let mut halting_times = BTreeMap::new();
    if m.is_halting(0) {
        halting_times.insert(0, 1.0);
    }
    for t in 1..=steps {
        if cur.keys().all(|c| m.is_halting(c.state)) {
            break;
        }
        let mut next: Superposition = BTreeMap::new();
        let mut entered = 0.0;
        for (c, a) in &cur {
            if !m.is_halting(c.state) {
                visit(c);
            }
            for (amp, d) in step(m, c, x)? {
                if !m.is_halting(c.state) && m.is_halting(d.state) {
                    entered += (a * amp) * (a * amp);
                }
                *next.entry(d).or_insert(0.0) += a * amp;
            }
        }
        next.retain(|_, a| a.abs() > PRUNE);
        if entered > PRUNE {
            halting_times.insert(t, entered);
        }
        cur = next;
    }
    Ok((cur, halting_times))
}

/// Local transition sources `(ans, state, index symbol, work symbol)` met by
/// non-halting configurations over every input of length `n`.
pub fn reachable_local(m: &QtmSpec, n: u64) -> R<BTreeSet<(bool, usize, Sym, Sym)>> {
    let geo = m.geometry(n)?;
    if n > 16 {
        return Err(QtmError::Capacity(format!("{n} inputs bits are too many to enumerate")));
    }
    let mut out = BTreeSet::new();
    for v in 0..(1u64 << n) {
        let x: Vec<bool> = (0..n).map(|k| (v >> (n - 1 - k)) & 1 == 1).collect();
        evolve(m, &geo, &x, geo.steps, |c| {
            out.insert(c.local());
        })?;
    }
    Ok(out)
}

/// Head directions entered with each state, or the first conflicting move.
pub fn directions(m: &QtmSpec) -> Result<BTreeMap<usize, (i8, i8)>, String> {
    let mut dirs: BTreeMap<usize, (i8, i8)> = BTreeMap::new();
    let mut note = |p: usize, d: (i8, i8), what: String| -> Result<(), String> {
        match dirs.insert(p, d) {
            Some(old) if old != d => Err(format!(
                "state `{}` is entered with moves {:?} and {:?} ({what})",
                m.states[p], old, d
            )),
            _ => Ok(()),
        }
    };
    if let Some((_, qn)) = m.query {
        note(qn, (0, 0), "query".into())?;
    }
    for r in &m.rows {
        for mv in &r.moves {
            note(mv.state, (mv.d1, mv.d2), format!("line {}", r.line))?;
        }
    }
    Ok(dirs)
}

// ---- well-formedness ----

#[derive(Clone, Debug, PartialEq)]
pub struct QtmWfReport {
    pub well_formed: bool,
    /// Reachable surface configurations, i.e. columns checked.
    pub configurations: usize,
    /// Largest entry of `U†U − I` on the reachable space.
    pub max_deviation: f64,
    /// Every state is entered with a single pair of head moves.
    pub unidirectional: bool,
    pub issues: Vec<String>,
    pub warnings: Vec<String>,
}

impl QtmWfReport {
    pub fn render_text(&self) -> String {
        let mut s = format!(
            "{}\nconfigurations: {}\nmax deviation: {}\nunidirectional: {}\n",
            if self.well_formed { "well-formed" } else { "not well-formed" },
            self.configurations,
            crate::qstate::fmt_sig(self.max_deviation),
            self.unidirectional
        );
        for i in &self.issues {
            s.push_str(&format!("issue: {i}\n"));
        }
        for w in &self.warnings {
            s.push_str(&format!("warning: {w}\n"));
        }
        s
    }
}

/// Default bound on the reachable configuration space.
pub const CONFIG_CAP: usize = 1 << 16;

/// Builds `U_δ` on the configurations reachable from the start for this
/// input and checks that the columns of the non-halting ones are
/// orthonormal within `1e-9`.
pub fn check_wellformed_qtm(m: &QtmSpec, n: u64, x: &[bool], cap: usize) -> R<QtmWfReport> {
    if n < 1 {
        return Err(QtmError::Spec("n must be at least 1".into()));
    }
    if x.len() as u64 != n {
        return Err(QtmError::Spec(format!("input has {} bits, n = {n}", x.len())));
    }
    let geo = m.geometry(n)?;
    let mut issues = Vec::new();
    let mut warnings = Vec::new();
    for r in &m.rows {
        let norm: f64 = r.moves.iter().map(|mv| mv.amp * mv.amp).sum();
        if (norm - 1.0).abs() > 1e-9 {
            issues.push(format!("row on line {} has squared norm {}", r.line, crate::qstate::fmt_sig(norm)));
        }
    }
    let mut index: BTreeMap<Config, usize> = BTreeMap::new();
    let mut order: Vec<Config> = Vec::new();
    let start = Config::initial(&geo);
    index.insert(start.clone(), 0);
    order.push(start);
    let mut columns: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut k = 0;
    while k < order.len() {
        let c = order[k].clone();
        // halting configurations are frozen, not moved by the transition table
        if m.is_halting(c.state) {
            columns.push(Vec::new());
            k += 1;
            continue;
        }
        let col = match step(m, &c, x) {
            Ok(col) => col,
            Err(e) => {
                issues.push(e.to_string());
                columns.push(Vec::new());
                k += 1;
                continue;
            }
        };
        let mut entries: BTreeMap<usize, f64> = BTreeMap::new();
        for (a, d) in col {
            let id = match index.get(&d) {
                Some(&id) => id,
                None => {
                    if order.len() >= cap {
                        return Err(QtmError::Capacity(format!(
                            "more than {cap} reachable configurations"
                        )));
                    }
                    index.insert(d.clone(), order.len());
                    order.push(d);
                    order.len() - 1
                }
            };
            *entries.entry(id).or_insert(0.0) += a;
        }
        columns.push(entries.into_iter().collect());
        k += 1;
    }
    // Gram matrix through the rows each column touches.
    let mut by_row: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
    for (j, col) in columns.iter().enumerate() {
        for &(i, a) in col {
            by_row.entry(i).or_default().push((j, a));
        }
    }
    let mut gram: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for entries in by_row.values() {
        for &(j1, a1) in entries {
            for &(j2, a2) in entries {
                if j1 <= j2 {
                    *gram.entry((j1, j2)).or_insert(0.0) += a1 * a2;
                }
            }
        }
    }
    let mut max_dev: f64 = 0.0;
    for j in (0..columns.len()).filter(|&j| !m.is_halting(order[j].state)) {
        let d = gram.get(&(j, j)).copied().unwrap_or(0.0);
        max_dev = max_dev.max((d - 1.0).abs());
    }
    for (&(a, b), &v) in &gram {
        if a != b {
            max_dev = max_dev.max(v.abs());
        }
    }
    if max_dev > 1e-9 {
        issues.push(format!(
            "time-evolution operator is not unitary on the reachable space (deviation {})",
            crate::qstate::fmt_sig(max_dev)
        ));
    }
    let unidirectional = match directions(m) {
        Ok(_) => true,
        Err(e) => {
            warnings.push(e);
            false
        }
    };
    if issues.is_empty() {
        let (_, times) = evolve(m, &geo, x, geo.steps, |_| {})?;
        if times.len() > 1 {
            let ts: Vec<String> = times.keys().map(|t| t.to_string()).collect();
            warnings.push(format!("paths halt at different steps: {}", ts.join(", ")));
        }
    }
    Ok(QtmWfReport {
        well_formed: issues.is_empty(),
        configurations: order.len(),
        max_deviation: max_dev,
        unidirectional,
        issues,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tape_codes() {
        assert_eq!(encode_tape("01B").unwrap(), "000111");
        assert_eq!(encode_tape("").unwrap(), "");
        assert_eq!(encode_tape("B").unwrap(), "11");
        assert!(encode_tape("2").is_err());
    }

    #[test]
    fn amplitudes() {
        let close = |a: Option<f64>, b: f64| (a.unwrap() - b).abs() < 1e-15;
        assert!(close(parse_amplitude("1"), 1.0));
        assert!(close(parse_amplitude("-0.6"), -0.6));
        assert!(close(parse_amplitude("cos(pi/4)"), (PI / 4.0).cos()));
        assert!(close(parse_amplitude("-sin(pi/12)"), -(PI / 12.0).sin()));
        assert!(close(parse_amplitude("cos(3*pi/8)"), (3.0 * PI / 8.0).cos()));
        assert!(parse_amplitude("tan(pi/4)").is_none());
    }

    const ROT: &str = "states: q0 q1\ninitial: q0\nhalting: q1\nc: 1\n\
        delta: q0 * 0 * -> cos(pi/4) q1 0 * 0 0 | sin(pi/4) q1 1 * 0 0\n";

    #[test]
    fn rotation_machine() {
        let m = parse_qtm(ROT).unwrap();
        let r = simulate(&m, &[true, false], 1).unwrap();
        assert!((r.probability - 0.5).abs() < 1e-12);
        assert!(!r.timed_out);
        let wf = check_wellformed_qtm(&m, 2, &[true, false], CONFIG_CAP).unwrap();
        assert!(wf.well_formed, "{wf:?}");
    }

    #[test]
    fn unnormalized_row_is_rejected() {
        let src = ROT.replace("cos(pi/4)", "1").replace("sin(pi/4)", "1");
        let m = parse_qtm(&src).unwrap();
        let wf = check_wellformed_qtm(&m, 2, &[false, false], CONFIG_CAP).unwrap();
        assert!(!wf.well_formed);
    }

    #[test]
    fn parse_errors_carry_lines() {
        let e = parse_qtm("states: a\ninitial: a\nc: 1\ndelta: a * 0 * -> 1 b 0 * 0 0\n").unwrap_err();
        assert_eq!(
            e,
            QtmError::Parse {
                line: 4,
                message: "unknown state `b`".into()
            }
        );
    }
}
