//! Deterministic signal sources sampled by simulated sensors.

use crate::model::{Micros, SensorValue};

/// A pure function of simulated time, sampled whenever a sensor emits a
/// report or answers a poll.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Waveform {
    /// Always the same value.
    Constant(SensorValue),
    /// Square wave: `v0` until `phase_us`, then each half-period after
    /// the phase alternates starting with `v0`.
    Alternate {
        v0: SensorValue,
        v1: SensorValue,
        period_us: Micros,
        phase_us: Micros,
    },
    /// Linear drift from `start` at a fixed slope, in thousandths of a
    /// unit per second, clamped to the 16-bit value range.
    Ramp {
        start: SensorValue,
        slope_milli_per_s: i64,
    },
    /// `base`, except for a burst of `value` lasting `duration_us` at
    /// each whole multiple of `interval_us` (the burst at time zero is
    /// skipped so every run starts quiet).
    Spikes {
        base: SensorValue,
        value: SensorValue,
        duration_us: Micros,
        interval_us: Micros,
    },
}

impl Waveform {
    /// Sample the signal at simulated time `t`.
    #[must_use]
    pub fn sample(&self, t: Micros) -> SensorValue {
        match *self {
            Waveform::Constant(v) => v,
            Waveform::Alternate {
                v0,
                v1,
                period_us,
                phase_us,
            } => {
                if t < phase_us || ((t - phase_us) / period_us).is_multiple_of(2) {
                    v0
                } else {
                    v1
                }
            }
            Waveform::Ramp {
                start,
                slope_milli_per_s,
            } => {
                let drift = (t as i128 * slope_milli_per_s as i128) / 1_000_000_000;
                let value = start as i128 + drift;
                value.clamp(0, SensorValue::MAX as i128) as SensorValue
            }
            Waveform::Spikes {
                base,
                value,
                duration_us,
                interval_us,
            } => {
                if t >= interval_us && t % interval_us < duration_us {
                    value
                } else {
                    base
                }
            }
        }
    }
}
