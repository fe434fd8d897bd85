//! Command-line front end.
//!
//! Exit codes: 0 success or accept, 1 violation or reject, 2 input error,
//! 3 capacity exceeded.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::ast::Structure;
use crate::eval::{self, EvalError, RunConfig, Verdict};
use crate::parser::{self, Diagnostic};
use crate::qstate::fmt_sig;
use crate::qtm::{self, CompileMode, QtmError, QtmSpec};
use crate::stdlib;
use crate::wellformed::check_wellformed;

pub const EXIT_OK: i32 = 0;
pub const EXIT_REJECT: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_CAPACITY: i32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Kv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Qtc,
    Functional,
}

#[derive(Debug, Parser)]
#[command(name = "qfo", version, about = "Quantum first-order logic workbench")]
pub struct Cli {
    /// Numerical tolerance for measurements and state comparisons.
    #[arg(long, global = true, default_value_t = 1e-9)]
    pub tolerance: f64,
    /// Maximum number of live qubits.
    #[arg(long, global = true)]
    pub wire_cap: Option<usize>,
    /// Largest quantum quantifier that is searched.
    #[arg(long, global = true, default_value_t = 3)]
    pub qcap: usize,
    /// Seed for sampled witness search.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check well-formedness of a formula file.
    Check { file: PathBuf },
    /// Evaluate a sentence on a classical input.
    Eval {
        file: PathBuf,
        /// Input string over {0,1}.
        #[arg(long)]
        input: Option<String>,
        /// Input length; defaults to the `@n` pragma or the input length.
        #[arg(long)]
        n: Option<u64>,
        /// Basis state of a free quantum variable, `NAME=BITS`.
        #[arg(long = "state", value_name = "NAME=BITS")]
        states: Vec<String>,
        /// Free quantum variable the formula defines, `NAME=SIZE`.
        #[arg(long = "output", value_name = "NAME=SIZE")]
        outputs: Vec<String>,
    },
    /// Library formulas.
    Stdlib {
        /// Print the source of this definition.
        name: Option<String>,
    },
    /// Quantum Turing machines.
    Qtm {
        #[command(subcommand)]
        command: QtmCommand,
    },
}

#[derive(Debug, Subcommand)]
pub enum QtmCommand {
    /// Simulate the machine for c·ilog(n) steps.
    Run {
        spec: PathBuf,
        #[arg(long)]
        input: String,
        /// Number of steps; defaults to c·ilog(n).
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Check unitarity on the reachable configurations.
    Check {
        spec: PathBuf,
        /// Check this input only.
        #[arg(long)]
        input: Option<String>,
        /// Check every input of this length.
        #[arg(long)]
        n: Option<u64>,
    },
    /// Translate the machine into a sentence.
    Compile {
        spec: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Qtc)]
        mode: Mode,
        #[arg(long)]
        n: u64,
        /// Error bound of the final measurement.
        #[arg(long, default_value_t = 1.0 / 3.0)]
        eps: f64,
        /// Write the sentence here instead of standard output.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Failure {
        Failure {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Failure {
        Failure {
            code: if e.is_capacity() { EXIT_CAPACITY } else { EXIT_INPUT },
            message: e.to_string(),
        }
    }
}

impl From<QtmError> for Failure {
    fn from(e: QtmError) -> Failure {
        Failure {
            code: if matches!(e, QtmError::Capacity(_)) {
                EXIT_CAPACITY
            } else {
                EXIT_INPUT
            },
            message: e.to_string(),
        }
    }
}

fn diagnostics(path: &Path, ds: &[Diagnostic]) -> Failure {
    let msg = ds
        .iter()
        .map(|d| format!("{}:{d}", path.display()))
        .collect::<Vec<_>>()
        .join("\n");
    Failure::input(msg)
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn bits(s: &str) -> Result<Vec<bool>, Failure> {
    s.chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            _ => Err(Failure::input(format!("input `{s}` is not a binary string"))),
        })
        .collect()
}

fn read_spec(path: &Path) -> Result<QtmSpec, Failure> {
    qtm::parse_qtm(&read(path)?).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

/// Key/value or text output.
struct Out<'a> {
    w: &'a mut dyn Write,
    format: Format,
}

impl Out<'_> {
    fn field(&mut self, key: &str, value: impl std::fmt::Display) {
        let _ = match self.format {
            Format::Text => writeln!(self.w, "{}: {value}", key.replace('_', " ")),
            Format::Kv => writeln!(self.w, "{key}={value}"),
        };
    }

    fn raw(&mut self, s: &str) {
        let _ = self.w.write_all(s.as_bytes());
    }
}

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{e}")
            } else {
                write!(out, "{e}")
            };
            return code;
        }
    };
    if !(cli.tolerance > 0.0 && cli.tolerance <= 1e-3) {
        let _ = writeln!(err, "error: --tolerance must lie in (0, 1e-3]");
        return EXIT_INPUT;
    }
    if cli.wire_cap == Some(0) || cli.qcap == 0 {
        let _ = writeln!(err, "error: caps must be positive");
        return EXIT_INPUT;
    }
    let mut o = Out {
        w: out,
        format: cli.format,
    };
    match dispatch(&cli, &mut o) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn run_config(cli: &Cli, doc_cap: Option<usize>) -> RunConfig {
    let base = RunConfig::default();
    RunConfig {
        tolerance: cli.tolerance,
        wire_cap: cli.wire_cap.or(doc_cap).unwrap_or(base.wire_cap),
        qcap: cli.qcap,
        seed: cli.seed,
        ..base
    }
}

fn dispatch(cli: &Cli, o: &mut Out) -> Result<i32, Failure> {
    if !matches!(cli.command, Command::Qtm { .. }) {
        // a broken QFO_STDLIB would otherwise surface as unknown predicates
        stdlib::stdlib_all().map_err(|e| Failure::input(e.to_string()))?;
    }
    match &cli.command {
        Command::Check { file } => {
            let src = read(file)?;
            let doc = parser::parse_document(&src).map_err(|d| diagnostics(file, &d))?;
            let mut ok = true;
            for def in &doc.defs {
                let r = check_wellformed(&def.body);
                ok &= r.ok;
                if o.format == Format::Kv {
                    o.raw(&format!("definition={}\n", def.name));
                    o.raw(&r.render_kv());
                } else {
                    o.raw(&format!("{}: {}", def.name, r.render_text()));
                }
            }
            if let Some(f) = &doc.formula {
                let r = check_wellformed(f);
                ok &= r.ok;
                o.raw(&match o.format {
                    Format::Kv => r.render_kv(),
                    Format::Text => r.render_text(),
                });
            }
            if doc.defs.is_empty() && doc.formula.is_none() {
                return Err(Failure::input(format!("{}: no formula", file.display())));
            }
            Ok(if ok { EXIT_OK } else { EXIT_REJECT })
        }
        Command::Eval {
            file,
            input,
            n,
            states,
            outputs,
        } => {
            let src = read(file)?;
            let doc = parser::parse_document(&src).map_err(|d| diagnostics(file, &d))?;
            let f = doc
                .formula
                .clone()
                .ok_or_else(|| Failure::input(format!("{}: no formula to evaluate", file.display())))?;
            let x = match input {
                Some(s) => bits(s)?,
                None => Vec::new(),
            };
            let n = n.or(doc.n).unwrap_or(x.len() as u64);
            if n == 0 {
                return Err(Failure::input("give --input or --n"));
            }
            let x = if input.is_none() { vec![false; n as usize] } else { x };
            if x.len() as u64 != n {
                return Err(Failure::input(format!("input has {} bits, n = {n}", x.len())));
            }
            let mut st = Structure::new(x);
            for s in states {
                let (name, b) = s
                    .split_once('=')
                    .ok_or_else(|| Failure::input(format!("--state `{s}` is not NAME=BITS")))?;
                st = st.with_basis(name, &bits(b)?);
            }
            for s in outputs {
                let (name, k) = s
                    .split_once('=')
                    .ok_or_else(|| Failure::input(format!("--output `{s}` is not NAME=SIZE")))?;
                let k: usize = k
                    .parse()
                    .map_err(|_| Failure::input(format!("--output `{s}` has no size")))?;
                st = st.with_output(name, k);
            }
            let wf = check_wellformed(&f);
            if !wf.ok {
                o.field("verdict", "ill-formed");
                o.raw(&match o.format {
                    Format::Kv => wf.render_kv(),
                    Format::Text => wf.render_text(),
                });
                return Ok(EXIT_REJECT);
            }
            let cfg = run_config(cli, doc.wire_cap);
            let r = eval::evaluate(&f, &st, &cfg)?;
            o.field("verdict", r.verdict);
            o.field(
                "probability",
                r.probability.map_or_else(|| "none".to_string(), fmt_sig),
            );
            o.field("peak_wires", r.peak_wires);
            o.field("gates", r.gates);
            for m in &r.margins {
                o.field(
                    "measurement",
                    format!(
                        "{} eps={} failure={} {}",
                        m.span,
                        fmt_sig(m.eps),
                        fmt_sig(m.failure),
                        if m.passed { "pass" } else { "fail" }
                    ),
                );
            }
            Ok(if r.verdict == Verdict::Accept {
                EXIT_OK
            } else {
                EXIT_REJECT
            })
        }
        Command::Stdlib { name } => {
            match name {
                None => {
                    for n in stdlib::catalog_names() {
                        o.raw(&format!("{n}\n"));
                    }
                }
                Some(n) => {
                    let nf = stdlib::stdlib_get(n).map_err(|e| Failure::input(e.to_string()))?;
                    o.raw(&nf.source);
                    if !nf.source.ends_with('\n') {
                        o.raw("\n");
                    }
                }
            }
            Ok(EXIT_OK)
        }
        Command::Qtm { command } => qtm_cmd(command, o),
    }
}

fn qtm_cmd(cmd: &QtmCommand, o: &mut Out) -> Result<i32, Failure> {
    match cmd {
        QtmCommand::Run { spec, input, steps } => {
            let m = read_spec(spec)?;
            let x = bits(input)?;
            let geo = m.geometry(x.len() as u64)?;
            let r = qtm::simulate(&m, &x, steps.unwrap_or(geo.steps))?;
            o.field("probability", fmt_sig(r.probability));
            o.field("steps", r.steps);
            o.field("halted_mass", fmt_sig(r.halted_mass));
            o.field("total_mass", fmt_sig(r.total_mass));
            o.field("timed_out", r.timed_out);
            Ok(EXIT_OK)
        }
        QtmCommand::Check { spec, input, n } => {
            let m = read_spec(spec)?;
            let xs: Vec<Vec<bool>> = match (input, n) {
                (Some(s), _) => vec![bits(s)?],
                (None, Some(n)) => {
                    if *n > 12 {
                        return Err(Failure {
                            code: EXIT_CAPACITY,
                            message: format!("checking all inputs of length {n} is too many"),
                        });
                    }
                    (0..1u64 << n)
                        .map(|v| (0..*n).map(|k| (v >> (n - 1 - k)) & 1 == 1).collect())
                        .collect()
                }
                (None, None) => return Err(Failure::input("give --input or --n")),
            };
            let mut ok = true;
            for x in &xs {
                let r = qtm::check_wellformed_qtm(&m, x.len() as u64, x, qtm::CONFIG_CAP)?;
                if !r.well_formed || xs.len() == 1 {
                    o.field("input", crate::ast::bits_to_string(x));
                    o.field("well_formed", r.well_formed);
                    o.field("configurations", r.configurations);
                    o.field("max_deviation", fmt_sig(r.max_deviation));
                    o.field("unidirectional", r.unidirectional);
                    for i in &r.issues {
                        o.field("issue", i);
                    }
                    for w in &r.warnings {
                        o.field("warning", w);
                    }
                }
                ok &= r.well_formed;
            }
            if xs.len() > 1 {
                o.field("inputs", xs.len());
                o.field("well_formed", ok);
            }
            Ok(if ok { EXIT_OK } else { EXIT_REJECT })
        }
        QtmCommand::Compile {
            spec,
            mode,
            n,
            eps,
            output,
        } => {
            let m = read_spec(spec)?;
            let mode = match mode {
                Mode::Qtc => CompileMode::Qtc,
                Mode::Functional => CompileMode::Functional,
            };
            let cs = qtm::compile(&m, *n, mode, *eps)?;
            let text = cs.to_qfo();
            match output {
                Some(p) => std::fs::write(p, text)
                    .map_err(|e| Failure::input(format!("{}: {e}", p.display())))?,
                None => o.raw(&text),
            }
            Ok(EXIT_OK)
        }
    }
}
