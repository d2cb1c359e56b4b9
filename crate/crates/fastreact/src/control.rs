//! The control plane: validated installation of switch configuration
//! (intents) and a reference controller that reacts to reports it
//! receives, for comparison against in-switch reaction.

use std::collections::BTreeMap;

use crate::dataplane::{command_from, FailoverAction, RouteAction, SwitchState};
use crate::logic::{eval_expr, BoolExpr, LogicError, ValueSource};
use crate::model::{Micros, NodeId, Packet, PacketKind, PortId, RouteTag, SensorId, SensorValue};

/// One piece of switch configuration the controller pushes down.
#[derive(Debug, Clone)]
pub enum Intent {
    /// Compile `expr` and guard reports from `trigger` with it.
    SetLogic {
        switch: NodeId,
        trigger: SensorId,
        expr: BoolExpr,
    },
    /// Remove the rule guarding reports from `trigger`.
    ClearLogic { switch: NodeId, trigger: SensorId },
    /// Install the forwarding actions for a sensor's reports.
    SetRoute {
        switch: NodeId,
        sensor: SensorId,
        ingress: Option<PortId>,
        tag: RouteTag,
        actions: Vec<RouteAction>,
    },
    /// Install the ordered backup actions for a sensor's reports.
    SetFailover {
        switch: NodeId,
        sensor: SensorId,
        actions: Vec<FailoverAction>,
    },
    /// Forward only every `rate`-th admitted report of a sensor.
    SetFilter {
        switch: NodeId,
        sensor: SensorId,
        rate: u16,
    },
    /// Monitor a port: consider it down after this long without traffic.
    SetTimeout {
        switch: NodeId,
        port: PortId,
        timeout_us: u64,
    },
    /// Bound how old a stored value may be to answer a get request.
    SetCacheTolerance { switch: NodeId, tolerance_us: Micros },
}

impl Intent {
    /// The switch this intent configures.
    #[must_use]
    pub fn switch(&self) -> NodeId {
        match self {
            Intent::SetLogic { switch, .. }
            | Intent::ClearLogic { switch, .. }
            | Intent::SetRoute { switch, .. }
            | Intent::SetFailover { switch, .. }
            | Intent::SetFilter { switch, .. }
            | Intent::SetTimeout { switch, .. }
            | Intent::SetCacheTolerance { switch, .. } => *switch,
        }
    }
}

/// Why an intent was rejected. Rejected intents change nothing.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InstallError {
    #[error("no switch with id {0}")]
    UnknownSwitch(NodeId),
    #[error("sensor {0} is outside the switch's configured range")]
    UnknownSensor(SensorId),
    #[error("port {0:?} is outside the switch's port range")]
    UnknownPort(PortId),
    #[error("filter rate must be at least 1")]
    InvalidRate,
    #[error(transparent)]
    Logic(#[from] LogicError),
}

/// Look up the intent's target switch in a fleet and apply it.
pub fn install(
    switches: &mut BTreeMap<NodeId, SwitchState>,
    intent: &Intent,
) -> Result<(), InstallError> {
    let switch = switches
        .get_mut(&intent.switch())
        .ok_or(InstallError::UnknownSwitch(intent.switch()))?;
    install_on(switch, intent)
}

/// Validate an intent against a switch and apply it. Returns an error
/// (leaving the switch untouched) if a sensor id or a port is unknown,
/// the rate is zero, or rule compilation fails.
pub fn install_on(switch: &mut SwitchState, intent: &Intent) -> Result<(), InstallError> {
    let ports = switch.config().ports;
    let check_port = |port: PortId| {
        if port.index() < ports {
            Ok(())
        } else {
            Err(InstallError::UnknownPort(port))
        }
    };
    let check_sensor = |sensor: SensorId| {
        if switch.store().knows(sensor) {
            Ok(())
        } else {
            Err(InstallError::UnknownSensor(sensor))
        }
    };
    match intent {
        Intent::SetLogic { trigger, expr, .. } => {
            switch.install_logic(*trigger, expr)?;
        }
        Intent::ClearLogic { trigger, .. } => {
            switch.clear_logic(*trigger)?;
        }
        Intent::SetRoute {
            sensor,
            ingress,
            tag,
            actions,
            ..
        } => {
            check_sensor(*sensor)?;
            if let Some(port) = ingress {
                check_port(*port)?;
            }
            for action in actions {
                match action {
                    RouteAction::Forward(port) | RouteAction::ForwardMod(port, _) => {
                        check_port(*port)?;
                    }
                }
            }
            switch.set_route(*sensor, *ingress, *tag, actions.clone());
        }
        Intent::SetFailover {
            sensor, actions, ..
        } => {
            check_sensor(*sensor)?;
            for action in actions {
                match action {
                    FailoverAction::ForwardMod(port, _) | FailoverAction::SendUp(port) => {
                        check_port(*port)?;
                    }
                }
            }
            switch.set_failover(*sensor, actions.clone());
        }
        Intent::SetFilter { sensor, rate, .. } => {
            check_sensor(*sensor)?;
            if *rate == 0 {
                return Err(InstallError::InvalidRate);
            }
            switch.set_filter_rate(*sensor, *rate);
        }
        Intent::SetTimeout {
            port, timeout_us, ..
        } => {
            check_port(*port)?;
            switch.set_timeout(*port, *timeout_us);
        }
        Intent::SetCacheTolerance { tolerance_us, .. } => {
            switch.set_cache_tolerance(*tolerance_us);
        }
    }
    Ok(())
}

/// One controller-side reaction rule: when a report from `trigger`
/// arrives and `expr` (if any) holds over the controller's view of the
/// latest values, command the actuator.
#[derive(Debug, Clone)]
pub struct ControlRule {
    pub trigger: SensorId,
    /// `None` reacts to every report from the trigger.
    pub expr: Option<BoolExpr>,
    pub actuator: NodeId,
}

/// A centralized controller that mirrors the reactive behaviour: it keeps
/// the latest value it has seen from each sensor and, on each incoming
/// report, evaluates its rules and emits actuator commands. Rules are
/// evaluated over latest values only (the controller keeps no averages).
#[derive(Debug, Clone, Default)]
pub struct ControllerLogic {
    rules: Vec<ControlRule>,
    values: BTreeMap<SensorId, SensorValue>,
}

impl ControllerLogic {
    #[must_use]
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_rule(&mut self, rule: ControlRule) {
        self.rules.push(rule);
    }

    /// Latest value the controller has seen from a sensor.
    #[must_use]
    pub fn value(&self, sensor: SensorId) -> Option<SensorValue> {
        self.values.get(&sensor).copied()
    }

    /// Absorb a received packet and return the commands it provokes, in
    /// rule order. Non-report packets provoke nothing.
    pub fn react(&mut self, packet: &Packet) -> Vec<Packet> {
        if packet.kind != PacketKind::SensorReport {
            return Vec::new();
        }
        self.values.insert(packet.sensor, packet.value);
        let values = &self.values;
        let lookup = |sensor: SensorId, source: ValueSource| match source {
            ValueSource::Latest => values.get(&sensor).copied(),
            ValueSource::MovingAverage => None,
        };
        self.rules
            .iter()
            .filter(|rule| rule.trigger == packet.sensor)
            .filter(|rule| rule.expr.as_ref().is_none_or(|e| eval_expr(e, &lookup)))
            .map(|rule| command_from(packet, rule.actuator))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataplane::SwitchConfig;
    use crate::logic::parse_expr;
    use crate::model::{OpCode, TraceEvent};

    fn s(id: u32) -> SensorId {
        SensorId(id)
    }

    fn n(id: u32) -> NodeId {
        NodeId(id)
    }

    fn p(id: u16) -> PortId {
        PortId(id)
    }

    fn fleet() -> BTreeMap<NodeId, SwitchState> {
        let mut map = BTreeMap::new();
        map.insert(n(1), SwitchState::new(SwitchConfig::default()));
        map.insert(n(2), SwitchState::new(SwitchConfig::default()));
        map
    }

    #[test]
    fn set_logic_configures_only_the_target_switch() {
        let mut switches = fleet();
        let intent = Intent::SetLogic {
            switch: n(1),
            trigger: s(1),
            expr: parse_expr("s1 >= 50").unwrap(),
        };
        install(&mut switches, &intent).unwrap();
        assert!(switches[&n(1)].logic().is_configured(s(1)));
        assert!(!switches[&n(2)].logic().is_configured(s(1)));
    }

    #[test]
    fn unknown_switch_is_rejected() {
        let mut switches = fleet();
        let intent = Intent::SetFilter {
            switch: n(9),
            sensor: s(1),
            rate: 2,
        };
        assert_eq!(
            install(&mut switches, &intent),
            Err(InstallError::UnknownSwitch(n(9)))
        );
    }

    #[test]
    fn out_of_range_ids_are_rejected() {
        let mut switches = fleet();
        let bad_sensor = Intent::SetFilter {
            switch: n(1),
            sensor: s(999),
            rate: 2,
        };
        assert_eq!(
            install(&mut switches, &bad_sensor),
            Err(InstallError::UnknownSensor(s(999)))
        );
        let bad_port = Intent::SetTimeout {
            switch: n(1),
            port: p(100),
            timeout_us: 1,
        };
        assert_eq!(
            install(&mut switches, &bad_port),
            Err(InstallError::UnknownPort(p(100)))
        );
        let bad_route_port = Intent::SetRoute {
            switch: n(1),
            sensor: s(1),
            ingress: None,
            tag: RouteTag::Normal,
            actions: vec![RouteAction::Forward(p(100))],
        };
        assert_eq!(
            install(&mut switches, &bad_route_port),
            Err(InstallError::UnknownPort(p(100)))
        );
        let bad_failover_port = Intent::SetFailover {
            switch: n(1),
            sensor: s(1),
            actions: vec![FailoverAction::SendUp(p(100))],
        };
        assert_eq!(
            install(&mut switches, &bad_failover_port),
            Err(InstallError::UnknownPort(p(100)))
        );
    }

    #[test]
    fn zero_rate_is_rejected() {
        let mut switches = fleet();
        let intent = Intent::SetFilter {
            switch: n(1),
            sensor: s(1),
            rate: 0,
        };
        assert_eq!(install(&mut switches, &intent), Err(InstallError::InvalidRate));
    }

    #[test]
    fn reinstalling_logic_requires_a_clear_first() {
        let mut switches = fleet();
        let set = |expr: &str| Intent::SetLogic {
            switch: n(1),
            trigger: s(1),
            expr: parse_expr(expr).unwrap(),
        };
        install(&mut switches, &set("s1 >= 50")).unwrap();
        assert!(matches!(
            install(&mut switches, &set("s1 >= 60")),
            Err(InstallError::Logic(LogicError::AlreadyConfigured(_)))
        ));
        install(
            &mut switches,
            &Intent::ClearLogic {
                switch: n(1),
                trigger: s(1),
            },
        )
        .unwrap();
        install(&mut switches, &set("s1 >= 60")).unwrap();
        assert!(switches[&n(1)].logic().is_configured(s(1)));
    }

    #[test]
    fn rejected_logic_leaves_switch_unchanged() {
        let mut switches = fleet();
        let bad = Intent::SetLogic {
            switch: n(1),
            trigger: s(1),
            expr: parse_expr("s99 > 1").unwrap(),
        };
        assert!(matches!(
            install(&mut switches, &bad),
            Err(InstallError::Logic(LogicError::UnknownSensor(_)))
        ));
        assert!(!switches[&n(1)].logic().is_configured(s(1)));
    }

    #[test]
    fn controller_reacts_only_to_matching_trigger() {
        let mut ctrl = ControllerLogic::new();
        ctrl.add_rule(ControlRule {
            trigger: s(1),
            expr: None,
            actuator: n(10),
        });
        let cmds = ctrl.react(&Packet::report(s(1), 40, 1, 100));
        assert_eq!(cmds.len(), 1);
        assert_eq!(cmds[0].kind, PacketKind::ActuatorCommand);
        assert_eq!(cmds[0].dst, n(10));
        assert_eq!(cmds[0].seq, 1);
        assert_eq!(cmds[0].sent_at, 100);
        assert!(ctrl.react(&Packet::report(s(2), 40, 1, 100)).is_empty());
    }

    #[test]
    fn controller_rules_gate_on_latest_values() {
        let mut ctrl = ControllerLogic::new();
        ctrl.add_rule(ControlRule {
            trigger: s(1),
            expr: Some(parse_expr("s1 >= 50 && s2 == 1").unwrap()),
            actuator: n(10),
        });
        // s2 unknown: comparison fails safe.
        assert!(ctrl.react(&Packet::report(s(1), 60, 1, 0)).is_empty());
        assert!(ctrl.react(&Packet::report(s(2), 1, 1, 0)).is_empty()); // wrong trigger
        assert_eq!(ctrl.react(&Packet::report(s(1), 60, 2, 0)).len(), 1);
        assert_eq!(ctrl.value(s(1)), Some(60));
    }

    #[test]
    fn controller_ignores_non_reports() {
        let mut ctrl = ControllerLogic::new();
        ctrl.add_rule(ControlRule {
            trigger: s(1),
            expr: None,
            actuator: n(10),
        });
        assert!(ctrl.react(&Packet::liveness(1, 0)).is_empty());
        let get = Packet::get_request(s(1), OpCode::Latest, n(2), n(3), 1, 0);
        assert!(ctrl.react(&get).is_empty());
    }

    /// The in-switch rule gate and the controller must make identical
    /// decisions when fed the same report streams (over latest values).
    #[test]
    fn switch_and_controller_decide_identically() {
        let exprs = [
            "s1 >= 50",
            "s1 >= 50 && s2 >= 50",
            "(s1 < 30 || s2 > 60) && !(s3 == 0)",
            "s1 != 25 || (s2 <= 10 && s3 >= 90)",
        ];
        let mut state = 0xfeed_5eed_u64;
        let mut next = move |bound: u64| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 33) % bound
        };
        for expr_src in exprs {
            let expr = parse_expr(expr_src).unwrap();
            let mut switches = fleet();
            install(
                &mut switches,
                &Intent::SetLogic {
                    switch: n(1),
                    trigger: s(1),
                    expr: expr.clone(),
                },
            )
            .unwrap();
            install(
                &mut switches,
                &Intent::SetRoute {
                    switch: n(1),
                    sensor: s(1),
                    ingress: None,
                    tag: RouteTag::Normal,
                    actions: vec![RouteAction::ForwardMod(p(1), n(10))],
                },
            )
            .unwrap();
            let mut ctrl = ControllerLogic::new();
            ctrl.add_rule(ControlRule {
                trigger: s(1),
                expr: Some(expr),
                actuator: n(10),
            });

            // Seed every referenced sensor once: compiled rules fold
            // negations into complemented comparisons, so a never-seen
            // sensor reads differently under `!` than the plain recursion
            // does. Decisions are only comparable once all values exist.
            for sensor in [s(2), s(3)] {
                let seed = Packet::report(sensor, next(100) as u16, 0, 0);
                switches.get_mut(&n(1)).unwrap().handle(&seed, p(0), 0);
                ctrl.react(&seed);
            }

            for seq in 0..200u64 {
                let sensor = s(1 + (next(3)) as u32);
                let report = Packet::report(sensor, next(100) as u16, seq, seq * 10);
                let sw = switches.get_mut(&n(1)).unwrap();
                let out = sw.handle(&report, p(0), seq * 10);
                let switch_fired = !out.emits().is_empty();
                let ctrl_fired = !ctrl.react(&report).is_empty();
                if sensor == s(1) {
                    assert_eq!(
                        switch_fired, ctrl_fired,
                        "divergence on {expr_src} at seq {seq}"
                    );
                } else {
                    assert!(!switch_fired && !ctrl_fired);
                }
            }
        }
    }

    #[test]
    fn trace_event_kinds_cover_cache_and_failover() {
        // Guard: the trace vocabulary the simulator relies on exists.
        assert_eq!(TraceEvent::CacheHit.to_string(), "cache_hit");
        assert_eq!(TraceEvent::Failover.to_string(), "failover");
    }
}
