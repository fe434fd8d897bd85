//! The formula library: named definitions shipped as `.qfo` files.
//!
//! The files are embedded at build time. Setting `QFO_STDLIB` to a directory
//! loads `<NAME>.qfo` from there instead.

use std::path::PathBuf;
use std::sync::OnceLock;

use thiserror::Error;

use crate::ast::Formula;
use crate::parser::{self, Diagnostic, Library};

#[derive(Debug, Error)]
pub enum StdlibError {
    #[error("unknown library formula `{0}`")]
    Unknown(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("library formula `{name}` does not parse: {diag}")]
    Parse { name: String, diag: Diagnostic },
}

/// Reference behaviour a definition is tested against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reference {
    Identity,
    Not,
    Cnot,
    Fredkin,
    Hadamard,
    XorBank,
    NotEqual,
    FirstZero,
    Majority,
    ReversibleAnd,
    ReversibleOr,
}

#[derive(Clone, Debug)]
pub struct NamedFormula {
    pub name: String,
    pub first_params: Vec<String>,
    pub second_params: Vec<String>,
    pub source: String,
    pub body: Formula,
    pub reference: Reference,
}

const CATALOG: &[(&str, &str, Reference)] = &[
    ("P_copy", include_str!("../stdlib/P_copy.qfo"), Reference::Identity),
    ("P_NOT", include_str!("../stdlib/P_NOT.qfo"), Reference::Not),
    ("P_CNOT", include_str!("../stdlib/P_CNOT.qfo"), Reference::Cnot),
    ("P_CSWAP", include_str!("../stdlib/P_CSWAP.qfo"), Reference::Fredkin),
    ("P_WH", include_str!("../stdlib/P_WH.qfo"), Reference::Hadamard),
    ("P_XOR", include_str!("../stdlib/P_XOR.qfo"), Reference::XorBank),
    ("NEQ", include_str!("../stdlib/NEQ.qfo"), Reference::NotEqual),
    ("ONE", include_str!("../stdlib/ONE.qfo"), Reference::FirstZero),
    ("MAJ_1", include_str!("../stdlib/MAJ_1.qfo"), Reference::Majority),
    ("R_AND", include_str!("../stdlib/R_AND.qfo"), Reference::ReversibleAnd),
    ("R_OR", include_str!("../stdlib/R_OR.qfo"), Reference::ReversibleOr),
];

pub fn catalog_names() -> Vec<&'static str> {
    CATALOG.iter().map(|(n, _, _)| *n).collect()
}

fn canonical(name: &str) -> &str {
    match name {
        "P_⊕" | "P_xor" => "P_XOR",
        "MAJ1" => "MAJ_1",
        "P_COPY" => "P_copy",
        other => other,
    }
}

fn load() -> Result<(Library, Vec<NamedFormula>), StdlibError> {
    let dir = std::env::var_os("QFO_STDLIB").map(PathBuf::from);
    let mut lib = Library::new();
    let mut named = Vec::new();
    for (name, embedded, reference) in CATALOG {
        let source = match &dir {
            Some(d) => {
                let path = d.join(format!("{name}.qfo"));
                std::fs::read_to_string(&path).map_err(|source| StdlibError::Io { path, source })?
            }
            None => embedded.to_string(),
        };
        let doc = parser::parse_document_with(&source, &lib).map_err(|mut d| StdlibError::Parse {
            name: name.to_string(),
            diag: d.remove(0),
        })?;
        for def in doc.defs {
            if def.name == *name {
                named.push(NamedFormula {
                    name: def.name.clone(),
                    first_params: def.first_params.clone(),
                    second_params: def.second_params.clone(),
                    source: source.clone(),
                    body: def.body.clone(),
                    reference: *reference,
                });
            }
            lib.insert(def);
        }
    }
    Ok((lib, named))
}

fn loaded() -> &'static Result<(Library, Vec<NamedFormula>), StdlibError> {
    static CELL: OnceLock<Result<(Library, Vec<NamedFormula>), StdlibError>> = OnceLock::new();
    CELL.get_or_init(load)
}

/// The library used by [`parser::parse_formula`]. Empty if loading failed;
/// [`stdlib_get`] reports the failure.
pub fn library() -> &'static Library {
    static EMPTY: OnceLock<Library> = OnceLock::new();
    match loaded() {
        Ok((lib, _)) => lib,
        Err(_) => EMPTY.get_or_init(Library::new),
    }
}

pub fn stdlib_get(name: &str) -> Result<NamedFormula, StdlibError> {
    let (_, named) = loaded().as_ref().map_err(|e| match e {
        StdlibError::Unknown(n) => StdlibError::Unknown(n.clone()),
        StdlibError::Io { path, source } => StdlibError::Io {
            path: path.clone(),
            source: std::io::Error::new(source.kind(), source.to_string()),
        },
        StdlibError::Parse { name, diag } => StdlibError::Parse {
            name: name.clone(),
            diag: diag.clone(),
        },
    })?;
    let key = canonical(name);
    named
        .iter()
        .find(|f| f.name == key)
        .cloned()
        .ok_or_else(|| StdlibError::Unknown(name.to_string()))
}

pub fn stdlib_all() -> Result<Vec<NamedFormula>, StdlibError> {
    catalog_names().into_iter().map(stdlib_get).collect()
}
