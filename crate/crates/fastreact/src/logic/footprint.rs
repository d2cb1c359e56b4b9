//! Static memory footprint of the switch register layout, in bits.
//!
//! The four quantities cover the rule tables (conjunctive row indices and
//! disjunctive comparison slots), the per-sensor time series (ring of
//! value/timestamp pairs plus current average and ring cursor), and the
//! miscellaneous per-port/per-sensor registers (port last-seen timestamps;
//! a 16-bit filter counter and rate per sensor).

use super::LogicError;

/// Parameters of the register layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FootprintParams {
    /// Number of addressable sensors.
    pub s_count: u64,
    /// Time-series ring length per sensor.
    pub h_count: u64,
    /// Conjunct slots per trigger sensor.
    pub c_cols: u64,
    /// Disjunctive rows (row 0 reserved).
    pub d_rows: u64,
    /// Comparison slots per disjunctive row.
    pub d_cols: u64,
    /// Sensor value width, bits.
    pub sz_sen: u64,
    /// Timestamp width, bits.
    pub sz_ts: u64,
    /// Switch port count.
    pub p_ports: u64,
}

impl FootprintParams {
    /// Validate: every parameter >= 1, and `d_rows >= 2` (row 0 is the
    /// reserved "unused" sentinel).
    pub fn validate(&self) -> Result<(), LogicError> {
        let fields = [
            ("s_count", self.s_count),
            ("h_count", self.h_count),
            ("c_cols", self.c_cols),
            ("d_cols", self.d_cols),
            ("sz_sen", self.sz_sen),
            ("sz_ts", self.sz_ts),
            ("p_ports", self.p_ports),
        ];
        for (name, v) in fields {
            if v < 1 {
                return Err(LogicError::BadDims(format!("{name} must be >= 1")));
            }
        }
        if self.d_rows < 2 {
            return Err(LogicError::BadDims("d_rows must be >= 2".to_owned()));
        }
        Ok(())
    }
}

/// Ceiling of log2(n) for n >= 1 (0 for n = 1): the bit width needed to
/// address or count n distinct things.
#[must_use]
pub fn ceil_log2(n: u64) -> u64 {
    assert!(n >= 1, "ceil_log2 undefined for 0");
    if n == 1 {
        0
    } else {
        u64::from(64 - (n - 1).leading_zeros())
    }
}

fn to_bits(value: u128) -> u64 {
    u64::try_from(value).expect("footprint exceeds u64 bits")
}

/// Bits of the conjunctive table: one row-index of
/// `ceil_log2(d_rows)` bits per conjunct slot per sensor.
#[must_use]
pub fn footprint_conjunctive(p: &FootprintParams) -> u64 {
    to_bits(u128::from(p.s_count) * u128::from(p.c_cols) * u128::from(ceil_log2(p.d_rows)))
}

/// Bits of the disjunctive table: per comparison slot, a 3-bit operator,
/// a constant of `sz_sen` bits and a sensor index of
/// `ceil_log2(s_count)` bits.
#[must_use]
pub fn footprint_disjunctive(p: &FootprintParams) -> u64 {
    let per_slot = 3 + u128::from(p.sz_sen) + u128::from(ceil_log2(p.s_count));
    to_bits(u128::from(p.d_rows) * u128::from(p.d_cols) * per_slot)
}

/// Bits of the per-sensor time series: `h_count` ring slots plus the
/// current-average slot, each a timestamp/value pair, plus a ring cursor
/// of `ceil_log2(h_count)` bits per sensor.
#[must_use]
pub fn footprint_timeseries(p: &FootprintParams) -> u64 {
    let rings = (u128::from(p.h_count) + 1)
        * (u128::from(p.sz_ts) + u128::from(p.sz_sen))
        * u128::from(p.s_count);
    let cursors = u128::from(ceil_log2(p.h_count)) * u128::from(p.s_count);
    to_bits(rings + cursors)
}

/// Bits of the miscellaneous registers: a last-seen timestamp per port,
/// plus a 16-bit filter counter/rate pair per sensor.
#[must_use]
pub fn footprint_misc(p: &FootprintParams) -> u64 {
    to_bits(
        u128::from(p.p_ports) * u128::from(p.sz_ts) + u128::from(p.s_count) * 16u128,
    )
}

/// All four quantities plus their total.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FootprintReport {
    /// Conjunctive table bits.
    pub conjunctive_bits: u64,
    /// Disjunctive table bits.
    pub disjunctive_bits: u64,
    /// Time-series bits.
    pub timeseries_bits: u64,
    /// Miscellaneous register bits.
    pub misc_bits: u64,
    /// Sum of the four.
    pub total_bits: u64,
}

impl FootprintReport {
    /// Compute all quantities for validated parameters.
    pub fn compute(p: &FootprintParams) -> Result<Self, LogicError> {
        p.validate()?;
        let conjunctive_bits = footprint_conjunctive(p);
        let disjunctive_bits = footprint_disjunctive(p);
        let timeseries_bits = footprint_timeseries(p);
        let misc_bits = footprint_misc(p);
        let total_bits = conjunctive_bits
            .checked_add(disjunctive_bits)
            .and_then(|t| t.checked_add(timeseries_bits))
            .and_then(|t| t.checked_add(misc_bits))
            .expect("footprint exceeds u64 bits");
        Ok(FootprintReport {
            conjunctive_bits,
            disjunctive_bits,
            timeseries_bits,
            misc_bits,
            total_bits,
        })
    }
}

/// Bits rounded up to whole bytes.
#[must_use]
pub fn bits_to_bytes(bits: u64) -> u64 {
    bits.div_ceil(8)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The register layout sized for 5000 sensors, 100-deep history,
    /// 5x5 rule tables with 25000 disjunctive rows, 16-bit values,
    /// 48-bit timestamps and 24 ports.
    fn reference_params() -> FootprintParams {
        FootprintParams {
            s_count: 5000,
            h_count: 100,
            c_cols: 5,
            d_rows: 25_000,
            d_cols: 5,
            sz_sen: 16,
            sz_ts: 48,
            p_ports: 24,
        }
    }

    #[test]
    fn ceil_log2_values() {
        assert_eq!(ceil_log2(1), 0);
        assert_eq!(ceil_log2(2), 1);
        assert_eq!(ceil_log2(3), 2);
        assert_eq!(ceil_log2(4), 2);
        assert_eq!(ceil_log2(5), 3);
        assert_eq!(ceil_log2(100), 7);
        assert_eq!(ceil_log2(5000), 13);
        assert_eq!(ceil_log2(25_000), 15);
        assert_eq!(ceil_log2(1 << 40), 40);
    }

    #[test]
    fn reference_conjunctive_bits() {
        // 5000 * 5 * ceil(log2 25000 = 15) = 375_000
        assert_eq!(footprint_conjunctive(&reference_params()), 375_000);
    }

    #[test]
    fn reference_disjunctive_bits() {
        // 25000 * 5 * (3 + 16 + 13) = 4_000_000
        assert_eq!(footprint_disjunctive(&reference_params()), 4_000_000);
    }

    #[test]
    fn reference_timeseries_bits() {
        // 101 * 64 * 5000 + 7 * 5000 = 32_355_000
        assert_eq!(footprint_timeseries(&reference_params()), 32_355_000);
    }

    #[test]
    fn reference_misc_bits() {
        // 24 * 48 + 5000 * 16 = 81_152
        assert_eq!(footprint_misc(&reference_params()), 81_152);
    }

    #[test]
    fn small_cases() {
        let unit = FootprintParams {
            s_count: 1,
            h_count: 1,
            c_cols: 1,
            d_rows: 2,
            d_cols: 1,
            sz_sen: 1,
            sz_ts: 1,
            p_ports: 1,
        };
        assert_eq!(footprint_conjunctive(&unit), 1);
        // 2 rows * 1 col * (3 + 1 + 0) = 8
        assert_eq!(footprint_disjunctive(&unit), 8);
        // (1+1) * (1+1) * 1 + 0 * 1 = 4
        assert_eq!(footprint_timeseries(&unit), 4);
        // 1 * 1 + 1 * 16 = 17
        assert_eq!(footprint_misc(&unit), 17);

        let two = FootprintParams {
            s_count: 10,
            h_count: 2,
            c_cols: 3,
            d_rows: 2,
            d_cols: 1,
            sz_sen: 16,
            sz_ts: 48,
            p_ports: 4,
        };
        // 10 * 3 * 1 = 30
        assert_eq!(footprint_conjunctive(&two), 30);
        // 2 * 1 * (3 + 16 + 4) = 46
        assert_eq!(footprint_disjunctive(&two), 46);
        // 3 * 64 * 10 + 1 * 10 = 1930
        assert_eq!(footprint_timeseries(&two), 1930);
        // 4 * 48 + 10 * 16 = 352
        assert_eq!(footprint_misc(&two), 352);
    }

    #[test]
    fn report_totals_and_bytes() {
        let report = FootprintReport::compute(&reference_params()).unwrap();
        assert_eq!(
            report.total_bits,
            375_000 + 4_000_000 + 32_355_000 + 81_152
        );
        assert_eq!(bits_to_bytes(8), 1);
        assert_eq!(bits_to_bytes(9), 2);
        assert_eq!(bits_to_bytes(report.conjunctive_bits), 46_875);
    }

    #[test]
    fn rejects_degenerate_params() {
        let mut p = reference_params();
        p.s_count = 0;
        assert!(FootprintReport::compute(&p).is_err());
        let mut p = reference_params();
        p.d_rows = 1;
        assert!(FootprintReport::compute(&p).is_err());
    }
}
