//! Aggregation of a run's trace into per-sensor delivery metrics and
//! get-request cache statistics.

use std::collections::{BTreeMap, BTreeSet};

use crate::model::{Micros, PacketKind, SensorId, TraceEvent, TraceRecord};
use crate::simnet::NodeKind;

use super::Scenario;

/// Running min/max/mean over a set of observed delays.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DelayStats {
    pub count: u64,
    pub min_us: u64,
    pub max_us: u64,
    sum_us: u128,
}

impl DelayStats {
    fn add(&mut self, delay_us: u64) {
        if self.count == 0 {
            self.min_us = delay_us;
            self.max_us = delay_us;
        } else {
            self.min_us = self.min_us.min(delay_us);
            self.max_us = self.max_us.max(delay_us);
        }
        self.count += 1;
        self.sum_us += u128::from(delay_us);
    }

    /// Mean delay, or zero when nothing was observed.
    #[must_use]
    pub fn mean_us(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum_us as f64 / self.count as f64
        }
    }
}

/// Everything measured about one sensor's report flow.
#[derive(Debug, Clone, Default)]
pub struct SensorFlow {
    /// Reports emitted by the sensor's own node.
    pub sent: u64,
    /// Distinct report sequence numbers that reached any actuator.
    pub delivered: u64,
    /// Sent but never delivered to an actuator.
    pub lost: u64,
    /// Sensor-to-actuator latency over every actuator delivery.
    pub delays: DelayStats,
    /// Latency broken down by receiving actuator.
    pub per_actuator: BTreeMap<String, DelayStats>,
    /// Earliest actuator delivery.
    pub first_delivery_us: Option<Micros>,
    /// Send time stamped on that earliest delivery.
    pub first_delivery_sent_at_us: Option<Micros>,
    /// True when some delivery reached an actuator other than the first
    /// one used (i.e. a backup path carried traffic).
    pub recovered: bool,
    /// First backup delivery minus the last primary delivery before it.
    pub recovery_gap_us: Option<u64>,
    /// Reports received by controller nodes.
    pub controller_rx: u64,
    /// Smallest and largest spacing between consecutive controller
    /// arrivals.
    pub controller_gap_min_us: Option<u64>,
    pub controller_gap_max_us: Option<u64>,
}

/// Cache behaviour of all get requests in a run.
#[derive(Debug, Clone, Default)]
pub struct GetStats {
    pub requests: u64,
    /// Requests answered from some switch's store.
    pub hits: u64,
    /// Requests answered only after chasing the sensor.
    pub misses: u64,
    /// Requests that never saw a response.
    pub unanswered: u64,
    pub hit_rtts: DelayStats,
    pub miss_rtts: DelayStats,
}

/// Metrics of one run.
#[derive(Debug, Clone, Default)]
pub struct Summary {
    pub sensors: BTreeMap<SensorId, SensorFlow>,
    pub gets: GetStats,
    pub trace_rows: u64,
}

/// Fold a trace into per-sensor and get-request metrics, using the
/// scenario for node roles (which nodes are actuators, controllers,
/// sensors and requesters).
#[must_use]
pub fn summarize(trace: &[TraceRecord], scenario: &Scenario) -> Summary {
    let kind_of: BTreeMap<&str, NodeKind> = scenario
        .nodes
        .iter()
        .map(|n| (n.name.as_str(), n.kind))
        .collect();
    let actuators: BTreeSet<&str> = scenario
        .nodes
        .iter()
        .filter(|n| n.kind == NodeKind::Actuator)
        .map(|n| n.name.as_str())
        .collect();
    let controllers: BTreeSet<&str> = scenario
        .nodes
        .iter()
        .filter(|n| n.kind == NodeKind::Controller)
        .map(|n| n.name.as_str())
        .collect();
    let generator_node: BTreeMap<SensorId, &str> = scenario
        .generators
        .iter()
        .map(|g| (g.sensor, g.node.as_str()))
        .collect();

    let mut summary = Summary {
        trace_rows: trace.len() as u64,
        ..Summary::default()
    };
    for &sensor in generator_node.keys() {
        summary.sensors.insert(sensor, SensorFlow::default());
    }

    // --- report flows ---
    for (&sensor, flow) in &mut summary.sensors {
        let home = generator_node[&sensor];
        let mut delivered_seqs: BTreeSet<u64> = BTreeSet::new();
        // (time, node) per actuator delivery, in trace order.
        let mut deliveries: Vec<(Micros, &str)> = Vec::new();
        let mut controller_times: Vec<Micros> = Vec::new();
        for row in trace.iter().filter(|r| r.sensor == sensor) {
            match row.event {
                TraceEvent::Tx
                    if row.kind == PacketKind::SensorReport && row.node == home =>
                {
                    flow.sent += 1;
                }
                TraceEvent::Rx
                    if matches!(
                        row.kind,
                        PacketKind::ActuatorCommand | PacketKind::SensorReport
                    ) && actuators.contains(row.node.as_str()) =>
                {
                    delivered_seqs.insert(row.seq);
                    let delay = row.time_us.saturating_sub(row.sent_at_us);
                    flow.delays.add(delay);
                    flow.per_actuator
                        .entry(row.node.clone())
                        .or_default()
                        .add(delay);
                    deliveries.push((row.time_us, row.node.as_str()));
                    if flow.first_delivery_us.is_none() {
                        flow.first_delivery_us = Some(row.time_us);
                        flow.first_delivery_sent_at_us = Some(row.sent_at_us);
                    }
                }
                TraceEvent::Rx
                    if row.kind == PacketKind::SensorReport
                        && controllers.contains(row.node.as_str()) =>
                {
                    controller_times.push(row.time_us);
                }
                _ => {}
            }
        }
        flow.delivered = delivered_seqs.len() as u64;
        flow.lost = flow.sent.saturating_sub(flow.delivered);
        if let Some((_, primary)) = deliveries.first().copied() {
            if let Some(&(backup_time, _)) =
                deliveries.iter().find(|(_, node)| *node != primary)
            {
                flow.recovered = true;
                flow.recovery_gap_us = deliveries
                    .iter()
                    .filter(|(t, node)| *node == primary && *t < backup_time)
                    .map(|(t, _)| backup_time - t)
                    .min();
            }
        }
        flow.controller_rx = controller_times.len() as u64;
        let gaps: Vec<u64> = controller_times.windows(2).map(|w| w[1] - w[0]).collect();
        flow.controller_gap_min_us = gaps.iter().copied().min();
        flow.controller_gap_max_us = gaps.iter().copied().max();
    }

    // --- get requests ---
    // A request is identified by (requesting node, sensor, seq): the
    // sequence number rides along on the response and on switch-local
    // cache events.
    let mut requests: BTreeMap<(&str, SensorId, u64), Micros> = BTreeMap::new();
    for row in trace {
        if row.event == TraceEvent::Tx
            && row.kind == PacketKind::GetRequest
            && kind_of.get(row.node.as_str()) == Some(&NodeKind::Host)
        {
            requests.insert((row.node.as_str(), row.sensor, row.seq), row.sent_at_us);
        }
    }
    for (&(node, sensor, seq), &sent_at) in &requests {
        summary.gets.requests += 1;
        let response = trace.iter().find(|r| {
            r.event == TraceEvent::Rx
                && r.kind == PacketKind::GetResponse
                && r.node == node
                && r.sensor == sensor
                && r.seq == seq
        });
        let Some(response) = response else {
            summary.gets.unanswered += 1;
            continue;
        };
        let rtt = response.time_us.saturating_sub(sent_at);
        let hit = trace.iter().any(|r| {
            r.event == TraceEvent::CacheHit && r.sensor == sensor && r.seq == seq
        });
        if hit {
            summary.gets.hits += 1;
            summary.gets.hit_rtts.add(rtt);
        } else {
            summary.gets.misses += 1;
            summary.gets.miss_rtts.add(rtt);
        }
    }

    summary
}

/// Header of `summary.csv`.
pub const SUMMARY_HEADER: &str = "metric,scope,value";

/// Render the summary as long-format CSV (`metric,scope,value`).
#[must_use]
pub fn summary_to_csv(summary: &Summary) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    let mut push = |metric: &str, scope: &str, value: String| {
        out.push_str(&format!("{metric},{scope},{value}\n"));
    };
    for (sensor, flow) in &summary.sensors {
        let scope = sensor.to_string();
        push("reports_sent", &scope, flow.sent.to_string());
        push("reports_delivered", &scope, flow.delivered.to_string());
        push("reports_lost", &scope, flow.lost.to_string());
        push("deliveries", &scope, flow.delays.count.to_string());
        if flow.delays.count > 0 {
            push("delay_min_us", &scope, flow.delays.min_us.to_string());
            push("delay_max_us", &scope, flow.delays.max_us.to_string());
            push("delay_mean_us", &scope, format!("{:.3}", flow.delays.mean_us()));
        }
        for (actuator, stats) in &flow.per_actuator {
            let scoped = format!("{scope}@{actuator}");
            push("delay_min_us", &scoped, stats.min_us.to_string());
            push("delay_max_us", &scoped, stats.max_us.to_string());
            push("delay_mean_us", &scoped, format!("{:.3}", stats.mean_us()));
            push("deliveries", &scoped, stats.count.to_string());
        }
        if let Some(t) = flow.first_delivery_us {
            push("first_delivery_us", &scope, t.to_string());
        }
        if let Some(t) = flow.first_delivery_sent_at_us {
            push("first_delivery_sent_at_us", &scope, t.to_string());
        }
        push("recovered", &scope, flow.recovered.to_string());
        if let Some(gap) = flow.recovery_gap_us {
            push("recovery_gap_us", &scope, gap.to_string());
        }
        push("controller_rx", &scope, flow.controller_rx.to_string());
        if let Some(gap) = flow.controller_gap_min_us {
            push("controller_gap_min_us", &scope, gap.to_string());
        }
        if let Some(gap) = flow.controller_gap_max_us {
            push("controller_gap_max_us", &scope, gap.to_string());
        }
    }
    let gets = &summary.gets;
    push("get_requests", "all", gets.requests.to_string());
    push("get_hits", "all", gets.hits.to_string());
    push("get_misses", "all", gets.misses.to_string());
    push("get_unanswered", "all", gets.unanswered.to_string());
    if gets.hit_rtts.count > 0 {
        push("get_hit_rtt_min_us", "all", gets.hit_rtts.min_us.to_string());
        push("get_hit_rtt_max_us", "all", gets.hit_rtts.max_us.to_string());
        push(
            "get_hit_rtt_mean_us",
            "all",
            format!("{:.3}", gets.hit_rtts.mean_us()),
        );
    }
    if gets.miss_rtts.count > 0 {
        push("get_miss_rtt_min_us", "all", gets.miss_rtts.min_us.to_string());
        push("get_miss_rtt_max_us", "all", gets.miss_rtts.max_us.to_string());
        push(
            "get_miss_rtt_mean_us",
            "all",
            format!("{:.3}", gets.miss_rtts.mean_us()),
        );
    }
    push("trace_rows", "all", summary.trace_rows.to_string());
    out
}
