//! Per-sensor time series: a fixed-depth ring of timestamped samples plus
//! an exponentially weighted moving average maintained with shift
//! arithmetic only.

use crate::model::{Micros, OpCode, SensorId, SensorValue};

/// Sizing and arithmetic parameters of a switch's value store.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoreConfig {
    /// Number of addressable sensors (ids 1..=s_count).
    pub s_count: usize,
    /// Ring depth per sensor.
    pub h_count: usize,
    /// Stored value width in bits (1..=16); values are masked to it.
    pub sz_sen_bits: u32,
    /// EWMA decay: new average = avg - (avg >> shift) + (value >> shift).
    pub ewma_shift: u32,
}

impl Default for StoreConfig {
    fn default() -> Self {
        StoreConfig {
            s_count: 16,
            h_count: 100,
            sz_sen_bits: 16,
            ewma_shift: 3,
        }
    }
}

/// One EWMA step using shift arithmetic, masked to `sz_sen_bits`.
/// The first sample seeds the average directly.
#[must_use]
pub fn update_avg(
    avg: SensorValue,
    value: SensorValue,
    first: bool,
    ewma_shift: u32,
    sz_sen_bits: u32,
) -> SensorValue {
    let mask = value_mask(sz_sen_bits);
    if first {
        return value & mask;
    }
    let avg = u32::from(avg);
    let value = u32::from(value & mask);
    let next = avg - (avg >> ewma_shift) + (value >> ewma_shift);
    (next as u16) & mask
}

fn value_mask(sz_sen_bits: u32) -> u16 {
    debug_assert!((1..=16).contains(&sz_sen_bits));
    if sz_sen_bits >= 16 {
        u16::MAX
    } else {
        (1u16 << sz_sen_bits) - 1
    }
}

#[derive(Debug, Clone)]
struct SensorSlot {
    /// `h_count` (value, timestamp) pairs.
    ring: Vec<(SensorValue, Micros)>,
    /// Index of the slot the next sample overwrites.
    rr_index: usize,
    /// Number of valid samples, saturating at the ring depth.
    count: usize,
    mov_avg: SensorValue,
}

/// Value store of one switch.
#[derive(Debug, Clone)]
pub struct SensorStore {
    cfg: StoreConfig,
    slots: Vec<SensorSlot>,
}

impl SensorStore {
    /// Empty store. Panics on a degenerate configuration (zero sizes or
    /// a value width outside 1..=16): configurations are validated when
    /// scenarios load.
    #[must_use]
    pub fn new(cfg: StoreConfig) -> Self {
        assert!(cfg.s_count >= 1, "need at least one sensor");
        assert!(cfg.h_count >= 1, "need at least one ring slot");
        assert!(
            (1..=16).contains(&cfg.sz_sen_bits),
            "value width must be 1..=16 bits"
        );
        assert!(cfg.ewma_shift < 16, "ewma shift must leave value bits");
        let slot = SensorSlot {
            ring: vec![(0, 0); cfg.h_count],
            rr_index: 0,
            count: 0,
            mov_avg: 0,
        };
        SensorStore {
            cfg,
            slots: vec![slot; cfg.s_count + 1],
        }
    }

    /// Store configuration.
    #[must_use]
    pub fn config(&self) -> StoreConfig {
        self.cfg
    }

    fn slot(&self, sensor: SensorId) -> Option<&SensorSlot> {
        let idx = sensor.raw() as usize;
        if sensor.is_none() || idx > self.cfg.s_count {
            None
        } else {
            Some(&self.slots[idx])
        }
    }

    /// True if the id is within the store's sensor range.
    #[must_use]
    pub fn knows(&self, sensor: SensorId) -> bool {
        !sensor.is_none() && sensor.raw() as usize <= self.cfg.s_count
    }

    /// Record a sample: overwrite the oldest ring slot, advance the
    /// cursor, saturate the count and fold the value into the average.
    /// The value is masked to the configured width first.
    ///
    /// # Panics
    /// On an out-of-range sensor id; callers validate with [`Self::knows`].
    pub fn record(&mut self, sensor: SensorId, value: SensorValue, now: Micros) {
        assert!(self.knows(sensor), "record for unknown sensor {sensor}");
        let cfg = self.cfg;
        let value = value & value_mask(cfg.sz_sen_bits);
        let slot = &mut self.slots[sensor.raw() as usize];
        slot.ring[slot.rr_index] = (value, now);
        slot.rr_index = (slot.rr_index + 1) % cfg.h_count;
        let first = slot.count == 0;
        slot.count = (slot.count + 1).min(cfg.h_count);
        slot.mov_avg = update_avg(slot.mov_avg, value, first, cfg.ewma_shift, cfg.sz_sen_bits);
    }

    /// Most recent sample and its record time, if any.
    #[must_use]
    pub fn latest(&self, sensor: SensorId) -> Option<(SensorValue, Micros)> {
        let slot = self.slot(sensor)?;
        if slot.count == 0 {
            return None;
        }
        let h = self.cfg.h_count;
        Some(slot.ring[(slot.rr_index + h - 1) % h])
    }

    /// Current moving average, if at least one sample was recorded.
    #[must_use]
    pub fn moving_average(&self, sensor: SensorId) -> Option<SensorValue> {
        let slot = self.slot(sensor)?;
        (slot.count > 0).then_some(slot.mov_avg)
    }

    /// Read the stored quantity a rule comparison or get request asks for.
    #[must_use]
    pub fn lookup(&self, sensor: SensorId, source: OpCode) -> Option<SensorValue> {
        match source {
            OpCode::Latest => self.latest(sensor).map(|(v, _)| v),
            OpCode::MovingAverage => self.moving_average(sensor),
        }
    }

    /// Stored samples, newest first (at most `h_count`, fewer before the
    /// ring fills).
    #[must_use]
    pub fn history(&self, sensor: SensorId) -> Vec<(SensorValue, Micros)> {
        let Some(slot) = self.slot(sensor) else {
            return Vec::new();
        };
        let h = self.cfg.h_count;
        (1..=slot.count)
            .map(|back| slot.ring[(slot.rr_index + h - back) % h])
            .collect()
    }
}
