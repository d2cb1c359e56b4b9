//! Core identifiers, packet representation and the trace record schema.
//!
//! All times are integer microseconds. Sensor values are unsigned
//! integers of at most 16 bits; switches mask stored values to their
//! configured value width so register arithmetic never overflows.

use std::fmt;
use std::str::FromStr;

/// Simulation time and durations, in integer microseconds.
pub type Micros = u64;

/// A sensor reading. Stores mask values to the configured bit width.
pub type SensorValue = u16;

/// Identifier of a sensor. `SensorId::NONE` (0) is the reserved
/// "no sensor" sentinel used in register tables and non-sensor packets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SensorId(pub u32);

impl SensorId {
    /// Sentinel meaning "no sensor".
    pub const NONE: SensorId = SensorId(0);

    /// Raw table/register value of the identifier.
    #[must_use]
    pub const fn raw(self) -> u32 {
        self.0
    }

    /// True for the reserved sentinel.
    #[must_use]
    pub const fn is_none(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for SensorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

/// Identifier of a simulated node. `NodeId::NONE` (0) means
/// "no destination" on packets that are routed by switch tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    /// Sentinel meaning "no node".
    pub const NONE: NodeId = NodeId(0);

    /// Raw numeric identifier.
    #[must_use]
    pub const fn raw(self) -> u32 {
        self.0
    }

    /// True for the reserved sentinel.
    #[must_use]
    pub const fn is_none(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// A switch-local port index (assigned in link declaration order).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PortId(pub u16);

impl PortId {
    /// Port index as a usize, for register-array indexing.
    #[must_use]
    pub const fn index(self) -> usize {
        self.0 as usize
    }
}

/// Which stored quantity a rule comparison or get request reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum OpCode {
    /// The most recently recorded value.
    #[default]
    Latest = 0,
    /// The exponentially weighted moving average.
    MovingAverage = 1,
}

/// Route table key bit distinguishing primary traffic from traffic that
/// was escalated upstream by a failover `SendUp` action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum RouteTag {
    /// Primary traffic.
    #[default]
    Normal,
    /// Traffic re-tagged by a failover escalation.
    Backup,
}

impl RouteTag {
    const fn as_str(self) -> &'static str {
        match self {
            RouteTag::Normal => "normal",
            RouteTag::Backup => "backup",
        }
    }
}

impl fmt::Display for RouteTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Kind of a simulated packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PacketKind {
    /// Periodic (or solicited) sensor value report.
    SensorReport,
    /// Command toward an actuator, produced by a switch rule or the
    /// controller.
    ActuatorCommand,
    /// Query for a sensor value.
    GetRequest,
    /// Answer to a [`PacketKind::GetRequest`].
    GetResponse,
    /// Keepalive emitted by endpoints that have no data to send.
    Liveness,
}

impl PacketKind {
    const fn as_str(self) -> &'static str {
        match self {
            PacketKind::SensorReport => "report",
            PacketKind::ActuatorCommand => "command",
            PacketKind::GetRequest => "get_request",
            PacketKind::GetResponse => "get_response",
            PacketKind::Liveness => "liveness",
        }
    }
}

impl fmt::Display for PacketKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A simulated packet.
///
/// `seq` and `sent_at` are stamped by the originating endpoint and are
/// preserved across switch rewrites (report -> command, request ->
/// response) so that end-to-end latency can be measured from the trace
/// alone. `dst` is only consulted by destination-addressed forwarding
/// (plain switches, controller commands, get traffic); table-routed
/// packets leave it as [`NodeId::NONE`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    /// Packet kind.
    pub kind: PacketKind,
    /// Normal or backup route key.
    pub tag: RouteTag,
    /// Subject sensor (`SensorId::NONE` if not applicable).
    pub sensor: SensorId,
    /// Carried value (0 if not applicable).
    pub value: SensorValue,
    /// Which stored quantity a get request asks for.
    pub opcode: OpCode,
    /// Node that issued the get request (`NodeId::NONE` otherwise).
    pub requester: NodeId,
    /// Destination for address-routed forwarding (`NodeId::NONE` when
    /// switch tables decide).
    pub dst: NodeId,
    /// Originator-assigned sequence number.
    pub seq: u64,
    /// Originator send time, microseconds.
    pub sent_at: Micros,
}

impl Packet {
    /// A sensor report carrying `value` for `sensor`.
    #[must_use]
    pub fn report(sensor: SensorId, value: SensorValue, seq: u64, sent_at: Micros) -> Self {
        Packet {
            kind: PacketKind::SensorReport,
            tag: RouteTag::Normal,
            sensor,
            value,
            opcode: OpCode::Latest,
            requester: NodeId::NONE,
            dst: NodeId::NONE,
            seq,
            sent_at,
        }
    }

    /// A keepalive packet.
    #[must_use]
    pub fn liveness(seq: u64, sent_at: Micros) -> Self {
        Packet {
            kind: PacketKind::Liveness,
            tag: RouteTag::Normal,
            sensor: SensorId::NONE,
            value: 0,
            opcode: OpCode::Latest,
            requester: NodeId::NONE,
            dst: NodeId::NONE,
            seq,
            sent_at,
        }
    }

    /// A get request from `requester` for `sensor`, addressed toward the
    /// node owning the sensor.
    #[must_use]
    pub fn get_request(
        sensor: SensorId,
        opcode: OpCode,
        requester: NodeId,
        dst: NodeId,
        seq: u64,
        sent_at: Micros,
    ) -> Self {
        Packet {
            kind: PacketKind::GetRequest,
            tag: RouteTag::Normal,
            sensor,
            value: 0,
            opcode,
            requester,
            dst,
            seq,
            sent_at,
        }
    }

    /// Every packet kind refreshes ingress liveness: receiving anything
    /// on a port proves the far endpoint is alive.
    #[must_use]
    pub fn is_liveness_bearing(&self) -> bool {
        true
    }
}

/// Kind of a trace event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TraceEvent {
    /// Packet put on a link by a node.
    Tx,
    /// Packet delivered to a node.
    Rx,
    /// Packet dropped (link loss, queue overflow or switch decision).
    Drop,
    /// Get request answered from the local value store.
    CacheHit,
    /// Get request forwarded toward the sensor for lack of a fresh value.
    CacheMiss,
    /// Egress redirected by the failover table.
    Failover,
}

impl TraceEvent {
    const fn as_str(self) -> &'static str {
        match self {
            TraceEvent::Tx => "tx",
            TraceEvent::Rx => "rx",
            TraceEvent::Drop => "drop",
            TraceEvent::CacheHit => "cache_hit",
            TraceEvent::CacheMiss => "cache_miss",
            TraceEvent::Failover => "failover",
        }
    }
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Header line of `trace.csv`.
pub const TRACE_HEADER: &str = "event_time_us,node,event,kind,tag,sensor,value,seq,sent_at_us";

/// One line of the simulation trace: an event observed at a node,
/// with the packet fields the schema carries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    /// Event time, microseconds.
    pub time_us: Micros,
    /// Name of the node the event was observed at.
    pub node: String,
    /// Event kind.
    pub event: TraceEvent,
    /// Packet kind.
    pub kind: PacketKind,
    /// Packet route tag.
    pub tag: RouteTag,
    /// Packet subject sensor (0 if none).
    pub sensor: SensorId,
    /// Packet value.
    pub value: SensorValue,
    /// Packet sequence number.
    pub seq: u64,
    /// Packet origination time, microseconds.
    pub sent_at_us: Micros,
}

impl TraceRecord {
    /// Build a record for `event` observed at `node` for `packet`.
    #[must_use]
    pub fn of_packet(time_us: Micros, node: &str, event: TraceEvent, packet: &Packet) -> Self {
        TraceRecord {
            time_us,
            node: node.to_owned(),
            event,
            kind: packet.kind,
            tag: packet.tag,
            sensor: packet.sensor,
            value: packet.value,
            seq: packet.seq,
            sent_at_us: packet.sent_at,
        }
    }

    /// Serialize to one CSV line (no trailing newline).
    #[must_use]
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.time_us,
            self.node,
            self.event,
            self.kind,
            self.tag,
            self.sensor.raw(),
            self.value,
            self.seq,
            self.sent_at_us
        )
    }
}

/// Error parsing a trace CSV line.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("bad trace line: {0}")]
pub struct TraceParseError(String);

impl FromStr for TraceRecord {
    type Err = TraceParseError;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(TraceParseError(format!(
                "expected 9 fields, got {}",
                fields.len()
            )));
        }
        let int = |s: &str, what: &str| -> Result<u64, TraceParseError> {
            s.parse::<u64>()
                .map_err(|_| TraceParseError(format!("bad {what}: {s:?}")))
        };
        let event = match fields[2] {
            "tx" => TraceEvent::Tx,
            "rx" => TraceEvent::Rx,
            "drop" => TraceEvent::Drop,
            "cache_hit" => TraceEvent::CacheHit,
            "cache_miss" => TraceEvent::CacheMiss,
            "failover" => TraceEvent::Failover,
            other => return Err(TraceParseError(format!("bad event: {other:?}"))),
        };
        let kind = match fields[3] {
            "report" => PacketKind::SensorReport,
            "command" => PacketKind::ActuatorCommand,
            "get_request" => PacketKind::GetRequest,
            "get_response" => PacketKind::GetResponse,
            "liveness" => PacketKind::Liveness,
            other => return Err(TraceParseError(format!("bad kind: {other:?}"))),
        };
        let tag = match fields[4] {
            "normal" => RouteTag::Normal,
            "backup" => RouteTag::Backup,
            other => return Err(TraceParseError(format!("bad tag: {other:?}"))),
        };
        if fields[1].is_empty() {
            return Err(TraceParseError("empty node name".to_owned()));
        }
        Ok(TraceRecord {
            time_us: int(fields[0], "time")?,
            node: fields[1].to_owned(),
            event,
            kind,
            tag,
            sensor: SensorId(u32::try_from(int(fields[5], "sensor")?).map_err(|_| {
                TraceParseError(format!("sensor id out of range: {}", fields[5]))
            })?),
            value: u16::try_from(int(fields[6], "value")?)
                .map_err(|_| TraceParseError(format!("value out of range: {}", fields[6])))?,
            seq: int(fields[7], "seq")?,
            sent_at_us: int(fields[8], "sent_at")?,
        })
    }
}
