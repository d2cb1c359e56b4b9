//! Rule expressions and their conjunctive-normal-form compilation.

use std::fmt;

use crate::model::{OpCode, SensorId, SensorValue};

/// Which stored quantity a comparison reads (latest sample or moving
/// average). Shares the representation of the get-request opcode.
pub type ValueSource = OpCode;

/// Comparison operator. The numeric codes are the 3-bit values stored in
/// the disjunctive operator table; 0 marks an unused table slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum Operator {
    /// Empty table slot.
    #[default]
    Unused = 0,
    /// Strictly less than.
    Lt = 1,
    /// Strictly greater than.
    Gt = 2,
    /// Equal.
    Eq = 3,
    /// Less than or equal.
    Le = 4,
    /// Greater than or equal.
    Ge = 5,
    /// Not equal.
    Ne = 6,
}

impl Operator {
    /// 3-bit table code.
    #[must_use]
    pub const fn code(self) -> u8 {
        self as u8
    }

    /// Inverse of [`Operator::code`]. Returns `None` for codes > 6.
    #[must_use]
    pub const fn from_code(code: u8) -> Option<Operator> {
        match code {
            0 => Some(Operator::Unused),
            1 => Some(Operator::Lt),
            2 => Some(Operator::Gt),
            3 => Some(Operator::Eq),
            4 => Some(Operator::Le),
            5 => Some(Operator::Ge),
            6 => Some(Operator::Ne),
            _ => None,
        }
    }

    /// The operator computing the negated comparison:
    /// `complement(op)(v, k) == !op(v, k)` for every `v`, `k`.
    #[must_use]
    pub const fn complement(self) -> Operator {
        match self {
            Operator::Unused => Operator::Unused,
            Operator::Lt => Operator::Ge,
            Operator::Gt => Operator::Le,
            Operator::Eq => Operator::Ne,
            Operator::Le => Operator::Gt,
            Operator::Ge => Operator::Lt,
            Operator::Ne => Operator::Eq,
        }
    }

    /// Apply the comparison to a stored value `v` and rule constant `k`.
    /// An unused slot never matches.
    #[must_use]
    pub const fn compare(self, v: SensorValue, k: SensorValue) -> bool {
        match self {
            Operator::Unused => false,
            Operator::Lt => v < k,
            Operator::Gt => v > k,
            Operator::Eq => v == k,
            Operator::Le => v <= k,
            Operator::Ge => v >= k,
            Operator::Ne => v != k,
        }
    }

    const fn as_str(self) -> &'static str {
        match self {
            Operator::Unused => "?",
            Operator::Lt => "<",
            Operator::Gt => ">",
            Operator::Eq => "==",
            Operator::Le => "<=",
            Operator::Ge => ">=",
            Operator::Ne => "!=",
        }
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An atomic rule condition: compare a sensor's stored value (latest or
/// moving average) against a constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Comparison {
    /// Sensor whose stored value is read.
    pub sensor: SensorId,
    /// Comparison operator (never `Unused` in a rule).
    pub op: Operator,
    /// Rule constant.
    pub constant: SensorValue,
    /// Latest sample or moving average.
    pub source: ValueSource,
}

impl Comparison {
    /// Comparison against the latest sample.
    #[must_use]
    pub const fn latest(sensor: SensorId, op: Operator, constant: SensorValue) -> Self {
        Comparison {
            sensor,
            op,
            constant,
            source: OpCode::Latest,
        }
    }

    /// Comparison against the moving average.
    #[must_use]
    pub const fn moving_average(sensor: SensorId, op: Operator, constant: SensorValue) -> Self {
        Comparison {
            sensor,
            op,
            constant,
            source: OpCode::MovingAverage,
        }
    }

    /// The comparison computing the logical negation of `self`.
    #[must_use]
    pub const fn complement(self) -> Self {
        Comparison {
            sensor: self.sensor,
            op: self.op.complement(),
            constant: self.constant,
            source: self.source,
        }
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let avg = match self.source {
            OpCode::Latest => "",
            OpCode::MovingAverage => "~",
        };
        write!(f, "s{}{}{}{}", self.sensor.raw(), avg, self.op, self.constant)
    }
}

/// A boolean rule over sensor comparisons.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BoolExpr {
    /// Atomic comparison.
    Leaf(Comparison),
    /// Logical negation.
    Not(Box<BoolExpr>),
    /// Logical conjunction.
    And(Box<BoolExpr>, Box<BoolExpr>),
    /// Logical disjunction.
    Or(Box<BoolExpr>, Box<BoolExpr>),
}

impl BoolExpr {
    /// Leaf comparison node.
    #[must_use]
    pub const fn leaf(c: Comparison) -> Self {
        BoolExpr::Leaf(c)
    }

    /// Negation node.
    #[must_use]
    pub fn negate(e: BoolExpr) -> Self {
        BoolExpr::Not(Box::new(e))
    }

    /// Conjunction node.
    #[must_use]
    pub fn and(a: BoolExpr, b: BoolExpr) -> Self {
        BoolExpr::And(Box::new(a), Box::new(b))
    }

    /// Disjunction node.
    #[must_use]
    pub fn or(a: BoolExpr, b: BoolExpr) -> Self {
        BoolExpr::Or(Box::new(a), Box::new(b))
    }
}

impl fmt::Display for BoolExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoolExpr::Leaf(c) => write!(f, "{c}"),
            BoolExpr::Not(e) => write!(f, "!({e})"),
            BoolExpr::And(a, b) => write!(f, "({a} && {b})"),
            BoolExpr::Or(a, b) => write!(f, "({a} || {b})"),
        }
    }
}

/// Evaluate an expression directly (recursively) against a value lookup.
///
/// A comparison whose lookup returns `None` is false (fail-safe: missing
/// data never satisfies a condition). Note that under negation this
/// differs from the table route, which folds `!` into leaf operators; the
/// two routes agree on every complete assignment.
pub fn eval_expr<L>(expr: &BoolExpr, lookup: &L) -> bool
where
    L: Fn(SensorId, ValueSource) -> Option<SensorValue>,
{
    match expr {
        BoolExpr::Leaf(c) => lookup(c.sensor, c.source)
            .map(|v| c.op.compare(v, c.constant))
            .unwrap_or(false),
        BoolExpr::Not(e) => !eval_expr(e, lookup),
        BoolExpr::And(a, b) => eval_expr(a, lookup) && eval_expr(b, lookup),
        BoolExpr::Or(a, b) => eval_expr(a, lookup) || eval_expr(b, lookup),
    }
}

/// A rule in conjunctive normal form: an AND over clauses, each clause an
/// OR over comparisons. The empty conjunction is true ("no logic means
/// forward").
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Cnf {
    /// Conjoined clauses; each inner vector is a disjunction.
    pub clauses: Vec<Vec<Comparison>>,
}

impl Cnf {
    /// The always-true empty conjunction.
    #[must_use]
    pub const fn always_true() -> Self {
        Cnf {
            clauses: Vec::new(),
        }
    }

    /// Evaluate against a value lookup (missing values compare false).
    pub fn evaluate<L>(&self, lookup: &L) -> bool
    where
        L: Fn(SensorId, ValueSource) -> Option<SensorValue>,
    {
        self.clauses.iter().all(|clause| {
            clause.iter().any(|c| {
                lookup(c.sensor, c.source)
                    .map(|v| c.op.compare(v, c.constant))
                    .unwrap_or(false)
            })
        })
    }
}

/// Compile an expression to conjunctive normal form.
///
/// Negations are folded into leaf operators (there is no negation in the
/// table encoding), then disjunctions are distributed over conjunctions.
/// The distribution is naive by design — rules are short — so pathological
/// expressions grow exponentially; capacity is enforced when the result is
/// encoded into tables.
#[must_use]
pub fn to_cnf(expr: &BoolExpr) -> Cnf {
    Cnf {
        clauses: cnf_clauses(expr, false),
    }
}

/// CNF clauses of `expr` (negated when `negate` is set), with negation
/// pushed to the leaves via De Morgan and operator complements.
fn cnf_clauses(expr: &BoolExpr, negate: bool) -> Vec<Vec<Comparison>> {
    match (expr, negate) {
        (BoolExpr::Leaf(c), false) => vec![vec![*c]],
        (BoolExpr::Leaf(c), true) => vec![vec![c.complement()]],
        (BoolExpr::Not(e), n) => cnf_clauses(e, !n),
        (BoolExpr::And(a, b), false) | (BoolExpr::Or(a, b), true) => {
            let mut clauses = cnf_clauses(a, negate);
            clauses.extend(cnf_clauses(b, negate));
            clauses
        }
        (BoolExpr::Or(a, b), false) | (BoolExpr::And(a, b), true) => {
            let left = cnf_clauses(a, negate);
            let right = cnf_clauses(b, negate);
            let mut clauses = Vec::with_capacity(left.len() * right.len());
            for lc in &left {
                for rc in &right {
                    let mut clause = lc.clone();
                    clause.extend(rc.iter().copied());
                    clauses.push(clause);
                }
            }
            clauses
        }
    }
}
