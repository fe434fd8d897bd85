//! Quantum first-order logic workbench.

pub mod ast;
pub mod cli;
pub mod eval;
pub mod parser;
pub mod qstate;
pub mod qtm;
pub mod stdlib;
pub mod wellformed;
