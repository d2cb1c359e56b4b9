//! The switch data plane: per-packet processing over match tables and
//! register state, with no allocation patterns a programmable forwarding
//! target could not mirror.
//!
//! A [`SwitchState`] holds the value store, compiled rule tables, routing
//! and failover tables, per-port liveness clocks, per-sensor report
//! filters and the get-request cache bookkeeping. [`SwitchState::handle`]
//! runs one packet through the fixed pipeline and returns what the switch
//! emits, in order, plus locally observed events (drops, cache hits and
//! misses, failovers) for tracing.

mod store;

pub use store::{update_avg, SensorStore, StoreConfig};

use std::collections::BTreeMap;

use crate::logic::{to_cnf, BoolExpr, LogicError, LogicTables, TableDims, ValueSource};
use crate::model::{Micros, NodeId, OpCode, Packet, PacketKind, PortId, RouteTag, SensorId};

/// Forwarding behaviour for one matched route.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RouteAction {
    /// Emit the packet unchanged on the port.
    Forward(PortId),
    /// Rewrite the report into a command for the given actuator and emit
    /// it on the port.
    ForwardMod(PortId, NodeId),
}

/// One backup action, tried in list order when a primary egress port is
/// considered down.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailoverAction {
    /// Reach the actuator over an alternative port, if that port is live.
    ForwardMod(PortId, NodeId),
    /// Hand the report upstream, re-tagged as a backup, regardless of the
    /// port's liveness.
    SendUp(PortId),
}

/// Why the pipeline dropped a packet instead of emitting it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    /// The rule for the reporting sensor evaluated to false.
    LogicFalse,
    /// The report was suppressed by its sensor's sampling filter.
    Filtered,
    /// No route matched (or an addressed packet had no next hop).
    NoRoute,
    /// Every failover alternative was exhausted.
    AllBackupsDown,
    /// The sensor id is outside the switch's configured range.
    UnknownSensor,
    /// The chosen egress port is considered down and no failover applies.
    DeadPort,
}

impl std::fmt::Display for DropReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            DropReason::LogicFalse => "logic_false",
            DropReason::Filtered => "filtered",
            DropReason::NoRoute => "no_route",
            DropReason::AllBackupsDown => "all_backups_down",
            DropReason::UnknownSensor => "unknown_sensor",
            DropReason::DeadPort => "dead_port",
        };
        f.write_str(s)
    }
}

/// Locally observable pipeline event, reported alongside emissions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoteKind {
    Drop(DropReason),
    CacheHit,
    CacheMiss,
    Failover,
}

/// One ordered pipeline output: an emission or a traced local event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepItem {
    /// Emit the packet on the port.
    Emit { port: PortId, packet: Packet },
    /// Record a local event about the packet.
    Note { kind: NoteKind, packet: Packet },
}

/// Everything one `handle` call produced, in pipeline order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StepOutput {
    pub items: Vec<StepItem>,
}

impl StepOutput {
    fn emit(&mut self, port: PortId, packet: Packet) {
        self.items.push(StepItem::Emit { port, packet });
    }

    fn note(&mut self, kind: NoteKind, packet: Packet) {
        self.items.push(StepItem::Note { kind, packet });
    }

    /// Emissions only, in order.
    #[must_use]
    pub fn emits(&self) -> Vec<(PortId, &Packet)> {
        self.items
            .iter()
            .filter_map(|it| match it {
                StepItem::Emit { port, packet } => Some((*port, packet)),
                StepItem::Note { .. } => None,
            })
            .collect()
    }

    /// Notes only, in order.
    #[must_use]
    pub fn notes(&self) -> Vec<(NoteKind, &Packet)> {
        self.items
            .iter()
            .filter_map(|it| match it {
                StepItem::Note { kind, packet } => Some((*kind, packet)),
                StepItem::Emit { .. } => None,
            })
            .collect()
    }
}

/// Routing table: keyed by reporting sensor, optionally pinned to an
/// ingress port, and by route tag. A lookup prefers the entry for the
/// exact ingress port and falls back to the any-port entry.
#[derive(Debug, Clone, Default)]
pub struct RouteTable {
    entries: BTreeMap<(SensorId, Option<PortId>, RouteTag), Vec<RouteAction>>,
}

impl RouteTable {
    pub fn set(
        &mut self,
        sensor: SensorId,
        ingress: Option<PortId>,
        tag: RouteTag,
        actions: Vec<RouteAction>,
    ) {
        self.entries.insert((sensor, ingress, tag), actions);
    }

    #[must_use]
    pub fn lookup(&self, sensor: SensorId, ingress: PortId, tag: RouteTag) -> Option<&[RouteAction]> {
        self.entries
            .get(&(sensor, Some(ingress), tag))
            .or_else(|| self.entries.get(&(sensor, None, tag)))
            .map(Vec::as_slice)
    }
}

/// Per-sensor ordered backup actions.
#[derive(Debug, Clone, Default)]
pub struct FailoverTable {
    entries: BTreeMap<SensorId, Vec<FailoverAction>>,
}

impl FailoverTable {
    pub fn set(&mut self, sensor: SensorId, actions: Vec<FailoverAction>) {
        self.entries.insert(sensor, actions);
    }

    #[must_use]
    pub fn get(&self, sensor: SensorId) -> &[FailoverAction] {
        self.entries.get(&sensor).map_or(&[], Vec::as_slice)
    }
}

/// Timeout value that never expires a port.
pub const TIMEOUT_DISABLED: u64 = u64::MAX;

/// Per-port last-receive clocks and timeouts. Any received packet counts
/// as proof of life for its ingress port. Ports start live (last receive
/// at time zero) with monitoring disabled until a timeout is installed.
#[derive(Debug, Clone)]
pub struct LivenessState {
    last_rx: Vec<Micros>,
    timeout_us: Vec<u64>,
}

impl LivenessState {
    #[must_use]
    pub fn new(ports: usize) -> Self {
        LivenessState {
            last_rx: vec![0; ports],
            timeout_us: vec![TIMEOUT_DISABLED; ports],
        }
    }

    pub fn refresh(&mut self, port: PortId, now: Micros) {
        let idx = port.index();
        if idx < self.last_rx.len() {
            self.last_rx[idx] = self.last_rx[idx].max(now);
        }
    }

    pub fn set_timeout(&mut self, port: PortId, timeout_us: u64) {
        let idx = port.index();
        if idx < self.timeout_us.len() {
            self.timeout_us[idx] = timeout_us;
        }
    }

    /// A port is down when strictly more than its timeout has elapsed
    /// since the last receive on it.
    #[must_use]
    pub fn is_down(&self, port: PortId, now: Micros) -> bool {
        let idx = port.index();
        if idx >= self.last_rx.len() {
            return true;
        }
        let timeout = self.timeout_us[idx];
        if timeout == TIMEOUT_DISABLED {
            return false;
        }
        now.saturating_sub(self.last_rx[idx]) > timeout
    }

    #[must_use]
    pub fn last_rx(&self, port: PortId) -> Micros {
        self.last_rx.get(port.index()).copied().unwrap_or(0)
    }
}

/// Per-sensor report subsampling: a 16-bit wrapping counter per sensor;
/// a report passes when its incremented counter is divisible by the
/// sensor's rate. Rate 1 (the default) passes everything.
#[derive(Debug, Clone)]
pub struct FilterState {
    rates: Vec<u16>,
    counters: Vec<u16>,
}

impl FilterState {
    #[must_use]
    pub fn new(s_count: usize) -> Self {
        FilterState {
            rates: vec![1; s_count + 1],
            counters: vec![0; s_count + 1],
        }
    }

    /// Install a rate (must be non-zero; validated by the control layer).
    pub fn set_rate(&mut self, sensor: SensorId, rate: u16) {
        let idx = sensor.raw() as usize;
        if idx < self.rates.len() {
            self.rates[idx] = rate.max(1);
        }
    }

    /// Count the report and decide whether it passes.
    pub fn admit(&mut self, sensor: SensorId) -> bool {
        let idx = sensor.raw() as usize;
        if idx >= self.rates.len() {
            return true;
        }
        self.counters[idx] = self.counters[idx].wrapping_add(1);
        self.counters[idx].is_multiple_of(self.rates[idx])
    }
}

/// Default freshness bound for answering get requests from the store.
pub const DEFAULT_CACHE_TOLERANCE_US: Micros = 5_000_000;

/// An unanswered get request parked at this switch, waiting for the next
/// report from its sensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PendingGet {
    pub requester: NodeId,
    pub opcode: OpCode,
    /// Port the request arrived on; the response leaves the same way.
    pub ingress: PortId,
    pub seq: u64,
    pub sent_at: Micros,
}

/// Sizing of one switch.
#[derive(Debug, Clone, Copy)]
pub struct SwitchConfig {
    pub ports: usize,
    pub store: StoreConfig,
    pub dims: TableDims,
    pub cache_tolerance_us: Micros,
}

impl Default for SwitchConfig {
    fn default() -> Self {
        let store = StoreConfig::default();
        SwitchConfig {
            ports: 8,
            store,
            dims: TableDims {
                s_count: store.s_count,
                c_cols: 5,
                d_rows: 64,
                d_cols: 5,
            },
            cache_tolerance_us: DEFAULT_CACHE_TOLERANCE_US,
        }
    }
}

/// Complete state of one switch.
#[derive(Debug, Clone)]
pub struct SwitchState {
    cfg: SwitchConfig,
    store: SensorStore,
    logic: LogicTables,
    routes: RouteTable,
    failover: FailoverTable,
    liveness: LivenessState,
    filter: FilterState,
    cache_tolerance_us: Micros,
    pending_gets: BTreeMap<SensorId, Vec<PendingGet>>,
    /// Static next hops toward other nodes, for addressed packets.
    node_routes: BTreeMap<NodeId, PortId>,
    /// Where each sensor is attached, for forwarding get requests.
    sensor_locations: BTreeMap<SensorId, NodeId>,
}

impl SwitchState {
    /// Build an empty switch.
    ///
    /// # Panics
    /// On degenerate sizing (store and table constructors validate).
    #[must_use]
    pub fn new(cfg: SwitchConfig) -> Self {
        assert!(cfg.ports >= 1, "a switch needs at least one port");
        assert_eq!(
            cfg.store.s_count, cfg.dims.s_count,
            "store and rule tables must agree on the sensor range"
        );
        SwitchState {
            cfg,
            store: SensorStore::new(cfg.store),
            logic: LogicTables::new(cfg.dims).expect("dims validated by caller"),
            routes: RouteTable::default(),
            failover: FailoverTable::default(),
            liveness: LivenessState::new(cfg.ports),
            filter: FilterState::new(cfg.store.s_count),
            cache_tolerance_us: cfg.cache_tolerance_us,
            pending_gets: BTreeMap::new(),
            node_routes: BTreeMap::new(),
            sensor_locations: BTreeMap::new(),
        }
    }

    #[must_use]
    pub fn config(&self) -> SwitchConfig {
        self.cfg
    }

    #[must_use]
    pub fn store(&self) -> &SensorStore {
        &self.store
    }

    #[must_use]
    pub fn logic(&self) -> &LogicTables {
        &self.logic
    }

    #[must_use]
    pub fn liveness(&self) -> &LivenessState {
        &self.liveness
    }

    #[must_use]
    pub fn pending_gets(&self, sensor: SensorId) -> &[PendingGet] {
        self.pending_gets.get(&sensor).map_or(&[], Vec::as_slice)
    }

    fn port_in_range(&self, port: PortId) -> bool {
        port.index() < self.cfg.ports
    }

    // --- configuration surface (driven by the control layer) ---

    /// Compile and install the rule guarding reports from `trigger`.
    pub fn install_logic(&mut self, trigger: SensorId, expr: &BoolExpr) -> Result<(), LogicError> {
        self.logic.encode(trigger, &to_cnf(expr))
    }

    /// Remove the rule for `trigger`; its table rows are not reclaimed.
    pub fn clear_logic(&mut self, trigger: SensorId) -> Result<(), LogicError> {
        self.logic.clear(trigger)
    }

    pub fn set_route(
        &mut self,
        sensor: SensorId,
        ingress: Option<PortId>,
        tag: RouteTag,
        actions: Vec<RouteAction>,
    ) {
        self.routes.set(sensor, ingress, tag, actions);
    }

    pub fn set_failover(&mut self, sensor: SensorId, actions: Vec<FailoverAction>) {
        self.failover.set(sensor, actions);
    }

    pub fn set_timeout(&mut self, port: PortId, timeout_us: u64) {
        self.liveness.set_timeout(port, timeout_us);
    }

    pub fn set_filter_rate(&mut self, sensor: SensorId, rate: u16) {
        self.filter.set_rate(sensor, rate);
    }

    pub fn set_cache_tolerance(&mut self, tolerance_us: Micros) {
        self.cache_tolerance_us = tolerance_us;
    }

    pub fn set_node_route(&mut self, node: NodeId, port: PortId) {
        self.node_routes.insert(node, port);
    }

    pub fn set_sensor_location(&mut self, sensor: SensorId, node: NodeId) {
        self.sensor_locations.insert(sensor, node);
    }

    // --- the pipeline ---

    /// Process one received packet. Every arrival first refreshes the
    /// liveness clock of its ingress port; the rest depends on the kind:
    /// reports run the store/logic/filter/route pipeline, get requests
    /// are answered from the store when fresh enough and otherwise parked
    /// and forwarded toward the sensor, responses unwind along the parked
    /// request's arrival port, commands follow static next hops, and
    /// keepalives are consumed.
    pub fn handle(&mut self, packet: &Packet, ingress: PortId, now: Micros) -> StepOutput {
        let mut out = StepOutput::default();
        self.liveness.refresh(ingress, now);
        match packet.kind {
            PacketKind::SensorReport => self.on_report(packet, ingress, now, &mut out),
            PacketKind::GetRequest => self.on_get(packet, ingress, now, &mut out),
            PacketKind::GetResponse => self.on_get_response(packet, now, &mut out),
            PacketKind::ActuatorCommand => self.on_addressed(packet, now, &mut out),
            PacketKind::Liveness => {}
        }
        out
    }

    fn on_report(&mut self, packet: &Packet, ingress: PortId, now: Micros, out: &mut StepOutput) {
        let sensor = packet.sensor;
        if !self.store.knows(sensor) {
            out.note(NoteKind::Drop(DropReason::UnknownSensor), packet.clone());
            return;
        }
        self.store.record(sensor, packet.value, now);

        // Serve get requests that were waiting for this sensor.
        if let Some(pendings) = self.pending_gets.remove(&sensor) {
            for pending in pendings {
                let value = self
                    .store
                    .lookup(sensor, pending.opcode)
                    .expect("value recorded above");
                let response = Packet {
                    kind: PacketKind::GetResponse,
                    tag: RouteTag::Normal,
                    sensor,
                    value,
                    opcode: pending.opcode,
                    requester: pending.requester,
                    dst: pending.requester,
                    seq: pending.seq,
                    sent_at: pending.sent_at,
                };
                self.emit_checked(pending.ingress, response, now, out);
            }
        }

        // Rule gate: a false rule swallows the report.
        let store = &self.store;
        let passes = self
            .logic
            .evaluate(sensor, &|s: SensorId, src: ValueSource| store.lookup(s, src));
        if !passes {
            out.note(NoteKind::Drop(DropReason::LogicFalse), packet.clone());
            return;
        }

        // Sampling filter, applied only to reports the rule admitted.
        if !self.filter.admit(sensor) {
            out.note(NoteKind::Drop(DropReason::Filtered), packet.clone());
            return;
        }

        let Some(actions) = self.routes.lookup(sensor, ingress, packet.tag) else {
            out.note(NoteKind::Drop(DropReason::NoRoute), packet.clone());
            return;
        };
        let routed: Vec<(PortId, Packet)> = actions
            .iter()
            .map(|action| match *action {
                RouteAction::Forward(port) => (port, packet.clone()),
                RouteAction::ForwardMod(port, actuator) => {
                    (port, command_from(packet, actuator))
                }
            })
            .collect();
        for (port, egress_packet) in routed {
            if self.liveness.is_down(port, now) {
                self.apply_failover(packet, now, out);
            } else {
                out.emit(port, egress_packet);
            }
        }
    }

    /// Try the sensor's backup actions in order: the first alternative
    /// path whose port is live wins; otherwise the first hand-upstream
    /// action is taken unconditionally; otherwise the report dies here.
    fn apply_failover(&mut self, packet: &Packet, now: Micros, out: &mut StepOutput) {
        let actions = self.failover.get(packet.sensor);
        for action in actions {
            if let FailoverAction::ForwardMod(port, actuator) = *action {
                if !self.liveness.is_down(port, now) {
                    let egress = command_from(packet, actuator);
                    out.note(NoteKind::Failover, egress.clone());
                    out.emit(port, egress);
                    return;
                }
            }
        }
        for action in actions {
            if let FailoverAction::SendUp(port) = *action {
                let mut egress = packet.clone();
                egress.tag = RouteTag::Backup;
                out.note(NoteKind::Failover, egress.clone());
                out.emit(port, egress);
                return;
            }
        }
        out.note(NoteKind::Drop(DropReason::AllBackupsDown), packet.clone());
    }

    fn on_get(&mut self, packet: &Packet, ingress: PortId, now: Micros, out: &mut StepOutput) {
        let sensor = packet.sensor;
        if !self.store.knows(sensor) {
            out.note(NoteKind::Drop(DropReason::UnknownSensor), packet.clone());
            return;
        }
        if let Some((_, recorded_at)) = self.store.latest(sensor) {
            if now.saturating_sub(recorded_at) <= self.cache_tolerance_us {
                // Fresh enough: answer from the store.
                let value = self
                    .store
                    .lookup(sensor, packet.opcode)
                    .expect("latest sample exists");
                let response = Packet {
                    kind: PacketKind::GetResponse,
                    tag: RouteTag::Normal,
                    sensor,
                    value,
                    opcode: packet.opcode,
                    requester: packet.requester,
                    dst: packet.requester,
                    seq: packet.seq,
                    sent_at: packet.sent_at,
                };
                out.note(NoteKind::CacheHit, response.clone());
                self.emit_checked(ingress, response, now, out);
                return;
            }
        }
        // Stale or empty: park the request and chase the sensor, if we
        // know where it lives.
        let Some(port) = self
            .sensor_locations
            .get(&sensor)
            .and_then(|node| self.node_routes.get(node))
            .copied()
        else {
            out.note(NoteKind::Drop(DropReason::NoRoute), packet.clone());
            return;
        };
        let pending = PendingGet {
            requester: packet.requester,
            opcode: packet.opcode,
            ingress,
            seq: packet.seq,
            sent_at: packet.sent_at,
        };
        let waiting = self.pending_gets.entry(sensor).or_default();
        if let Some(existing) = waiting.iter_mut().find(|p| p.requester == pending.requester) {
            // Coalesce repeat requests from the same requester: newest wins.
            *existing = pending;
        } else {
            waiting.push(pending);
        }
        out.note(NoteKind::CacheMiss, packet.clone());
        self.emit_checked(port, packet.clone(), now, out);
    }

    /// A response travelling back to its requester retraces the request's
    /// path: each switch that parked the request remembers the arrival
    /// port. A switch with no matching parked request falls back to its
    /// static next hop toward the requester.
    fn on_get_response(&mut self, packet: &Packet, now: Micros, out: &mut StepOutput) {
        let mut port = None;
        if let Some(waiting) = self.pending_gets.get_mut(&packet.sensor) {
            if let Some(pos) = waiting.iter().position(|p| p.requester == packet.requester) {
                port = Some(waiting.remove(pos).ingress);
            }
            if waiting.is_empty() {
                self.pending_gets.remove(&packet.sensor);
            }
        }
        let port = port.or_else(|| self.node_routes.get(&packet.requester).copied());
        match port {
            Some(port) => self.emit_checked(port, packet.clone(), now, out),
            None => out.note(NoteKind::Drop(DropReason::NoRoute), packet.clone()),
        }
    }

    /// Commands and other destination-addressed packets follow the static
    /// next-hop table.
    fn on_addressed(&mut self, packet: &Packet, now: Micros, out: &mut StepOutput) {
        let Some(port) = self.node_routes.get(&packet.dst).copied() else {
            out.note(NoteKind::Drop(DropReason::NoRoute), packet.clone());
            return;
        };
        self.emit_checked(port, packet.clone(), now, out);
    }

    /// Emit unless the port is both monitored and expired; a dead port
    /// turns the emission into a drop (failover, where configured, is
    /// handled in the report path).
    fn emit_checked(&mut self, port: PortId, packet: Packet, now: Micros, out: &mut StepOutput) {
        if !self.port_in_range(port) || self.liveness.is_down(port, now) {
            out.note(NoteKind::Drop(DropReason::DeadPort), packet);
        } else {
            out.emit(port, packet);
        }
    }
}

/// Rewrite a report into the actuator command it triggers. The command
/// inherits the report's measurement, sequence number, send time and tag,
/// so end-to-end latency can be measured against the original send.
#[must_use]
pub fn command_from(report: &Packet, actuator: NodeId) -> Packet {
    Packet {
        kind: PacketKind::ActuatorCommand,
        tag: report.tag,
        sensor: report.sensor,
        value: report.value,
        opcode: OpCode::Latest,
        requester: NodeId::NONE,
        dst: actuator,
        seq: report.seq,
        sent_at: report.sent_at,
    }
}
