//! Conjunctive/disjunctive register tables.
//!
//! A rule for a trigger sensor is stored as one conjunctive row of up to
//! `c_cols` disjunctive-row indices (0 marks an unused slot), plus one
//! disjunctive row per clause. Disjunctive rows are four parallel
//! register arrays (sensor, operator, constant, value source) of
//! `d_rows * d_cols` slots; row 0 is reserved so that index 0 can mean
//! "unused". Rows are bump-allocated and never reclaimed; re-encoding a
//! trigger requires clearing it first, and the orphaned rows stay lost
//! until the table itself is rebuilt.

use crate::model::{OpCode, SensorId, SensorValue};

use super::expr::{Cnf, Comparison, Operator, ValueSource};
use super::LogicError;

/// Geometry of a switch's logic tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TableDims {
    /// Number of addressable sensors (ids 1..=s_count).
    pub s_count: usize,
    /// Conjunct slots per trigger sensor.
    pub c_cols: usize,
    /// Disjunctive rows, including the reserved row 0.
    pub d_rows: usize,
    /// Comparison slots per disjunctive row.
    pub d_cols: usize,
}

impl TableDims {
    /// Validate the geometry: everything >= 1, and at least two
    /// disjunctive rows (row 0 is reserved).
    pub fn validate(&self) -> Result<(), LogicError> {
        if self.s_count < 1 || self.c_cols < 1 || self.d_cols < 1 {
            return Err(LogicError::BadDims(format!(
                "s_count, c_cols, d_cols must be >= 1 (got {self:?})"
            )));
        }
        if self.d_rows < 2 {
            return Err(LogicError::BadDims(format!(
                "d_rows must be >= 2, row 0 is reserved (got {})",
                self.d_rows
            )));
        }
        Ok(())
    }
}

/// One disjunctive table slot (parallel-array element).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Slot {
    sensor: SensorId,
    op: Operator,
    constant: SensorValue,
    source: ValueSource,
}

impl Slot {
    const EMPTY: Slot = Slot {
        sensor: SensorId::NONE,
        op: Operator::Unused,
        constant: 0,
        source: OpCode::Latest,
    };
}

/// The compiled-rule register tables of one switch.
#[derive(Debug, Clone)]
pub struct LogicTables {
    dims: TableDims,
    /// `(s_count + 1) * c_cols` row indices; row of sensor id `s` starts
    /// at `s * c_cols`. Index 0 within the disjunctive table = unused.
    conjunctive: Vec<u32>,
    /// `d_rows * d_cols` comparison slots, row-major.
    disjunctive: Vec<Slot>,
    /// Bump row allocator; starts at 1 (row 0 reserved) and only grows.
    next_free_row: usize,
}

impl LogicTables {
    /// Empty tables with the given geometry.
    pub fn new(dims: TableDims) -> Result<Self, LogicError> {
        dims.validate()?;
        Ok(LogicTables {
            dims,
            conjunctive: vec![0; (dims.s_count + 1) * dims.c_cols],
            disjunctive: vec![Slot::EMPTY; dims.d_rows * dims.d_cols],
            next_free_row: 1,
        })
    }

    /// Table geometry.
    #[must_use]
    pub fn dims(&self) -> TableDims {
        self.dims
    }

    /// Next row the bump allocator would hand out (monotonic).
    #[must_use]
    pub fn next_free_row(&self) -> usize {
        self.next_free_row
    }

    fn check_sensor(&self, sensor: SensorId) -> Result<(), LogicError> {
        if sensor.is_none() || sensor.raw() as usize > self.dims.s_count {
            return Err(LogicError::UnknownSensor(sensor));
        }
        Ok(())
    }

    fn conjunctive_row(&self, trigger: SensorId) -> &[u32] {
        let start = trigger.raw() as usize * self.dims.c_cols;
        &self.conjunctive[start..start + self.dims.c_cols]
    }

    /// True if the trigger has at least one conjunct installed.
    #[must_use]
    pub fn is_configured(&self, trigger: SensorId) -> bool {
        self.conjunctive_row(trigger).iter().any(|&idx| idx != 0)
    }

    /// Encode a CNF rule for `trigger`. Fails without modifying anything
    /// if the trigger is already configured, a sensor id is out of range,
    /// or the rule exceeds the table geometry.
    pub fn encode(&mut self, trigger: SensorId, cnf: &Cnf) -> Result<(), LogicError> {
        self.check_sensor(trigger)?;
        if self.is_configured(trigger) {
            return Err(LogicError::AlreadyConfigured(trigger));
        }
        if cnf.clauses.len() > self.dims.c_cols {
            return Err(LogicError::CapacityExceeded {
                what: "conjunct slots",
                needed: cnf.clauses.len(),
                available: self.dims.c_cols,
            });
        }
        for clause in &cnf.clauses {
            if clause.len() > self.dims.d_cols {
                return Err(LogicError::CapacityExceeded {
                    what: "disjunct slots",
                    needed: clause.len(),
                    available: self.dims.d_cols,
                });
            }
            for c in clause {
                self.check_sensor(c.sensor)?;
                debug_assert!(c.op != Operator::Unused, "rules never hold Unused");
            }
        }
        let rows_left = self.dims.d_rows - self.next_free_row;
        if cnf.clauses.len() > rows_left {
            return Err(LogicError::CapacityExceeded {
                what: "disjunctive rows",
                needed: cnf.clauses.len(),
                available: rows_left,
            });
        }
        let base = trigger.raw() as usize * self.dims.c_cols;
        for (slot, clause) in cnf.clauses.iter().enumerate() {
            let row = self.next_free_row;
            self.next_free_row += 1;
            for (col, c) in clause.iter().enumerate() {
                self.disjunctive[row * self.dims.d_cols + col] = Slot {
                    sensor: c.sensor,
                    op: c.op,
                    constant: c.constant,
                    source: c.source,
                };
            }
            self.conjunctive[base + slot] = row as u32;
        }
        Ok(())
    }

    /// Clear the trigger's conjunctive row. The disjunctive rows it
    /// pointed at are orphaned, not reclaimed.
    pub fn clear(&mut self, trigger: SensorId) -> Result<(), LogicError> {
        self.check_sensor(trigger)?;
        let base = trigger.raw() as usize * self.dims.c_cols;
        for slot in &mut self.conjunctive[base..base + self.dims.c_cols] {
            *slot = 0;
        }
        Ok(())
    }

    /// Evaluate the trigger's rule against a value lookup.
    ///
    /// An unconfigured trigger (all conjunct slots zero) is true: no
    /// logic means forward. Within a clause, slots with an `Unused`
    /// operator and comparisons whose lookup returns `None` contribute
    /// false.
    pub fn evaluate<L>(&self, trigger: SensorId, lookup: &L) -> bool
    where
        L: Fn(SensorId, ValueSource) -> Option<SensorValue>,
    {
        let row_of = |idx: u32| {
            let start = idx as usize * self.dims.d_cols;
            &self.disjunctive[start..start + self.dims.d_cols]
        };
        self.conjunctive_row(trigger)
            .iter()
            .filter(|&&idx| idx != 0)
            .all(|&idx| {
                row_of(idx).iter().any(|slot| {
                    slot.op != Operator::Unused
                        && lookup(slot.sensor, slot.source)
                            .map(|v| slot.op.compare(v, slot.constant))
                            .unwrap_or(false)
                })
            })
    }

    /// Reconstruct the trigger's installed rule from the registers
    /// (clauses in conjunct-slot order, comparisons in column order).
    #[must_use]
    pub fn decode(&self, trigger: SensorId) -> Vec<Vec<Comparison>> {
        self.conjunctive_row(trigger)
            .iter()
            .filter(|&&idx| idx != 0)
            .map(|&idx| {
                let start = idx as usize * self.dims.d_cols;
                self.disjunctive[start..start + self.dims.d_cols]
                    .iter()
                    .filter(|slot| slot.op != Operator::Unused)
                    .map(|slot| Comparison {
                        sensor: slot.sensor,
                        op: slot.op,
                        constant: slot.constant,
                        source: slot.source,
                    })
                    .collect()
            })
            .collect()
    }
}
