//! Boolean rule logic: expression AST, conjunctive-normal-form
//! compilation, register-table encoding and evaluation, memory footprint
//! arithmetic, and the textual rule grammar.

mod expr;
mod footprint;
mod parse;
mod tables;

pub use expr::{eval_expr, to_cnf, BoolExpr, Cnf, Comparison, Operator, ValueSource};
pub use footprint::{
    bits_to_bytes, ceil_log2, footprint_conjunctive, footprint_disjunctive, footprint_misc,
    footprint_timeseries, FootprintParams, FootprintReport,
};
pub use parse::{parse_expr, ParseError};
pub use tables::{LogicTables, TableDims};

use crate::model::SensorId;

/// Errors raised by CNF encoding and table installation.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LogicError {
    /// The rule does not fit the configured table geometry.
    #[error("capacity exceeded: {what} needs {needed}, only {available} available")]
    CapacityExceeded {
        /// Which resource ran out (conjunct slots, disjunct columns, rows).
        what: &'static str,
        /// Slots required by the rule.
        needed: usize,
        /// Slots available.
        available: usize,
    },
    /// The trigger sensor already has logic installed; clear it first.
    #[error("logic already configured for trigger {0}")]
    AlreadyConfigured(SensorId),
    /// A sensor id is 0 or beyond the table's sensor capacity.
    #[error("unknown sensor {0}")]
    UnknownSensor(SensorId),
    /// Invalid table geometry.
    #[error("bad table dimensions: {0}")]
    BadDims(String),
}
