//! Text format describing a complete experiment: topology, traffic,
//! switch configuration and run length.
//!
//! ```text
//! # comment                         (anywhere; rest of line ignored)
//! [params]                          # named values, overridable per run
//! interval = 10ms
//!
//! [topology]                        # name kind [keepalive=DUR] [phase=DUR]
//! s1n sensor
//! a1  switch
//! act1 actuator keepalive=$interval phase=2001us
//!
//! [links]                           # a b latency bandwidth [queue]
//! s1n a1 1ms 1gbps
//!
//! [generators]                      # sensor node period|- waveform [target=node]
//! 1 s1n 10ms constant(40)
//!
//! [intents]                         # switch configuration, one per line
//! logic a1 1 s1 >= 50 && s2 < 10
//! clear_logic a1 1
//! route a1 1 normal forward_mod(act1)
//! route_from a1 1 s1n normal forward(b1)
//! failover a1 1 forward_mod(b1,act2),send_up(b1)
//! filter a1 1 $rate
//! timeout a1 act1 30ms
//! cache_tolerance a1 5s
//!
//! [gets]                            # node sensor opcode start period count
//! host 1 latest 100ms 1s 5
//!
//! [controller]                      # node trigger actuator [expr]
//! ctrl 2 act2
//!
//! [flaps]                           # a b down_at [up_at]
//! a1 act1 2000300us 4000300us
//!
//! [run]
//! duration = 40s
//! proc_delay = 60us
//! ```
//!
//! Durations take `us`, `ms` or `s` suffixes; bandwidths take `bps`,
//! `kbps`, `mbps` or `gbps`. `$name` anywhere in a line substitutes the
//! parameter's value. Waveforms: `constant(v)`,
//! `alternate(v0,v1,period[,phase])`, `ramp(start,slope_milli_per_s)`,
//! `spikes(base,value,duration,interval)`. Action lists are
//! comma-separated without spaces; `forward_mod(nbr)` both forwards via
//! `nbr` and addresses it, `forward_mod(via,actuator)` splits the two.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::logic::{parse_expr, BoolExpr};
use crate::model::{Micros, OpCode, RouteTag, SensorId, SensorValue};
use crate::simnet::{NodeKind, Waveform, DEFAULT_QUEUE_CAP};

/// Parse failure, pointing at the offending line (0 = whole file).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "{}", self.message)
        } else {
            write!(f, "line {}: {}", self.line, self.message)
        }
    }
}

impl std::error::Error for ScenarioError {}

/// One node of the topology.
#[derive(Debug, Clone)]
pub struct NodeDecl {
    pub name: String,
    pub kind: NodeKind,
    /// `(period_us, phase_us)` of the node's liveness beacon, if any.
    pub keepalive: Option<(Micros, Micros)>,
}

/// One bidirectional link.
#[derive(Debug, Clone)]
pub struct LinkDecl {
    pub a: String,
    pub b: String,
    pub latency_us: Micros,
    pub bandwidth_bps: u64,
    pub queue_cap: usize,
}

/// A signal bound to a sensor id at a node.
#[derive(Debug, Clone)]
pub struct GeneratorDecl {
    pub sensor: SensorId,
    pub node: String,
    /// `None` = passive: the node only answers polls.
    pub period_us: Option<Micros>,
    pub waveform: Waveform,
    pub target: Option<String>,
}

/// A periodic reader of cached sensor values.
#[derive(Debug, Clone)]
pub struct GetDecl {
    pub node: String,
    pub sensor: SensorId,
    pub opcode: OpCode,
    pub start_us: Micros,
    pub period_us: Micros,
    pub count: u64,
}

/// A rule evaluated on a controller node.
#[derive(Debug, Clone)]
pub struct ControllerRuleDecl {
    pub node: String,
    pub trigger: SensorId,
    pub actuator: String,
    pub expr: Option<BoolExpr>,
}

/// A scheduled link outage.
#[derive(Debug, Clone)]
pub struct FlapDecl {
    pub a: String,
    pub b: String,
    pub down_at_us: Micros,
    pub up_at_us: Option<Micros>,
}

/// Routing action with egress ports still expressed as neighbor names.
#[derive(Debug, Clone)]
pub enum ActionDecl {
    Forward(String),
    ForwardMod { via: String, actuator: String },
}

/// Failover action with names instead of ports.
#[derive(Debug, Clone)]
pub enum FailoverActionDecl {
    ForwardMod { via: String, actuator: String },
    SendUp(String),
}

/// Switch configuration step with node/port references by name.
#[derive(Debug, Clone)]
pub enum IntentDecl {
    Logic {
        switch: String,
        trigger: SensorId,
        expr: BoolExpr,
    },
    ClearLogic {
        switch: String,
        trigger: SensorId,
    },
    Route {
        switch: String,
        sensor: SensorId,
        ingress: Option<String>,
        tag: RouteTag,
        actions: Vec<ActionDecl>,
    },
    Failover {
        switch: String,
        sensor: SensorId,
        actions: Vec<FailoverActionDecl>,
    },
    Filter {
        switch: String,
        sensor: SensorId,
        rate: u16,
    },
    Timeout {
        switch: String,
        neighbor: String,
        timeout_us: Micros,
    },
    CacheTolerance {
        switch: String,
        tolerance_us: Micros,
    },
}

/// A fully parsed and cross-checked experiment description.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    /// Parameter values after applying overrides.
    pub params: BTreeMap<String, String>,
    pub nodes: Vec<NodeDecl>,
    pub links: Vec<LinkDecl>,
    pub generators: Vec<GeneratorDecl>,
    pub intents: Vec<IntentDecl>,
    pub gets: Vec<GetDecl>,
    pub controller_rules: Vec<ControllerRuleDecl>,
    pub flaps: Vec<FlapDecl>,
    pub duration_us: Micros,
    pub proc_delay_us: Micros,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    None,
    Params,
    Topology,
    Links,
    Generators,
    Intents,
    Gets,
    Controller,
    Flaps,
    Run,
}

fn err<T>(line: usize, message: impl Into<String>) -> Result<T, ScenarioError> {
    Err(ScenarioError {
        line,
        message: message.into(),
    })
}

/// Strip the comment and surrounding whitespace; `None` for blanks.
fn effective(line: &str) -> Option<&str> {
    let line = match line.find('#') {
        Some(pos) => &line[..pos],
        None => line,
    };
    let line = line.trim();
    (!line.is_empty()).then_some(line)
}

fn section_of(line: &str, no: usize) -> Result<Option<Section>, ScenarioError> {
    if !line.starts_with('[') {
        return Ok(None);
    }
    let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) else {
        return err(no, "malformed section header");
    };
    let section = match name {
        "params" => Section::Params,
        "topology" => Section::Topology,
        "links" => Section::Links,
        "generators" => Section::Generators,
        "intents" => Section::Intents,
        "gets" => Section::Gets,
        "controller" => Section::Controller,
        "flaps" => Section::Flaps,
        "run" => Section::Run,
        other => return err(no, format!("unknown section [{other}]")),
    };
    Ok(Some(section))
}

/// Replace every `$name` in `line` with the parameter's value.
fn substitute(
    line: &str,
    params: &BTreeMap<String, String>,
    no: usize,
) -> Result<String, ScenarioError> {
    if !line.contains('$') {
        return Ok(line.to_owned());
    }
    let mut out = String::with_capacity(line.len());
    let bytes = line.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'$' {
            out.push(bytes[i] as char);
            i += 1;
            continue;
        }
        let start = i + 1;
        let mut end = start;
        while end < bytes.len()
            && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_')
        {
            end += 1;
        }
        if end == start {
            return err(no, "'$' must be followed by a parameter name");
        }
        let name = &line[start..end];
        match params.get(name) {
            Some(value) => out.push_str(value),
            None => return err(no, format!("unknown parameter ${name}")),
        }
        i = end;
    }
    Ok(out)
}

fn parse_duration_us(token: &str, no: usize) -> Result<Micros, ScenarioError> {
    let split = token
        .find(|c: char| !c.is_ascii_digit())
        .unwrap_or(token.len());
    let (digits, unit) = token.split_at(split);
    let value: u64 = match digits.parse() {
        Ok(v) => v,
        Err(_) => return err(no, format!("bad duration {token:?}")),
    };
    let scale = match unit {
        "us" => 1,
        "ms" => 1_000,
        "s" => 1_000_000,
        _ => {
            return err(
                no,
                format!("duration {token:?} needs a us/ms/s suffix"),
            )
        }
    };
    value
        .checked_mul(scale)
        .ok_or(())
        .or_else(|()| err(no, format!("duration {token:?} overflows")))
}

fn parse_bandwidth_bps(token: &str, no: usize) -> Result<u64, ScenarioError> {
    let split = token
        .find(|c: char| !c.is_ascii_digit())
        .unwrap_or(token.len());
    let (digits, unit) = token.split_at(split);
    let value: u64 = match digits.parse() {
        Ok(v) => v,
        Err(_) => return err(no, format!("bad bandwidth {token:?}")),
    };
    let scale = match unit {
        "bps" => 1,
        "kbps" => 1_000,
        "mbps" => 1_000_000,
        "gbps" => 1_000_000_000,
        _ => {
            return err(
                no,
                format!("bandwidth {token:?} needs a bps/kbps/mbps/gbps suffix"),
            )
        }
    };
    value
        .checked_mul(scale)
        .ok_or(())
        .or_else(|()| err(no, format!("bandwidth {token:?} overflows")))
}

fn parse_u64(token: &str, what: &str, no: usize) -> Result<u64, ScenarioError> {
    token
        .parse()
        .or_else(|_| err(no, format!("bad {what} {token:?}")))
}

fn parse_sensor(token: &str, no: usize) -> Result<SensorId, ScenarioError> {
    let raw: u32 = match token.parse() {
        Ok(v) if v >= 1 => v,
        _ => return err(no, format!("bad sensor id {token:?} (must be >= 1)")),
    };
    Ok(SensorId(raw))
}

fn parse_value(token: &str, no: usize) -> Result<SensorValue, ScenarioError> {
    token
        .parse::<SensorValue>()
        .or_else(|_| err(no, format!("bad sensor value {token:?}")))
}

fn parse_node_kind(token: &str, no: usize) -> Result<NodeKind, ScenarioError> {
    Ok(match token {
        "sensor" => NodeKind::Sensor,
        "switch" => NodeKind::FastReact,
        "plainswitch" => NodeKind::Plain,
        "actuator" => NodeKind::Actuator,
        "host" => NodeKind::Host,
        "controller" => NodeKind::Controller,
        other => return err(no, format!("unknown node kind {other:?}")),
    })
}

fn parse_opcode(token: &str, no: usize) -> Result<OpCode, ScenarioError> {
    Ok(match token {
        "latest" => OpCode::Latest,
        "moving_average" => OpCode::MovingAverage,
        other => return err(no, format!("unknown opcode {other:?}")),
    })
}

/// Split `name(arg,arg,...)` into the name and its raw arguments.
fn parse_call(token: &str, no: usize) -> Result<(&str, Vec<&str>), ScenarioError> {
    let Some(open) = token.find('(') else {
        return err(no, format!("expected name(args) but found {token:?}"));
    };
    let Some(body) = token[open + 1..].strip_suffix(')') else {
        return err(no, format!("missing ')' in {token:?}"));
    };
    let args = if body.is_empty() {
        Vec::new()
    } else {
        body.split(',').map(str::trim).collect()
    };
    Ok((&token[..open], args))
}

fn parse_waveform(token: &str, no: usize) -> Result<Waveform, ScenarioError> {
    let (name, args) = parse_call(token, no)?;
    let arity = |want: &[usize]| {
        if want.contains(&args.len()) {
            Ok(())
        } else {
            err::<()>(no, format!("{name} takes {want:?} arguments"))
        }
    };
    Ok(match name {
        "constant" => {
            arity(&[1])?;
            Waveform::Constant(parse_value(args[0], no)?)
        }
        "alternate" => {
            arity(&[3, 4])?;
            Waveform::Alternate {
                v0: parse_value(args[0], no)?,
                v1: parse_value(args[1], no)?,
                period_us: parse_duration_us(args[2], no)?,
                phase_us: match args.get(3) {
                    Some(tok) => parse_duration_us(tok, no)?,
                    None => 0,
                },
            }
        }
        "ramp" => {
            arity(&[2])?;
            Waveform::Ramp {
                start: parse_value(args[0], no)?,
                slope_milli_per_s: args[1].parse().or_else(|_| {
                    err(no, format!("bad slope {:?}", args[1]))
                })?,
            }
        }
        "spikes" => {
            arity(&[4])?;
            Waveform::Spikes {
                base: parse_value(args[0], no)?,
                value: parse_value(args[1], no)?,
                duration_us: parse_duration_us(args[2], no)?,
                interval_us: parse_duration_us(args[3], no)?,
            }
        }
        other => return err(no, format!("unknown waveform {other:?}")),
    })
}

/// Split an action list on commas that sit outside parentheses.
fn split_actions(list: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut start = 0;
    for (i, c) in list.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth = depth.saturating_sub(1),
            ',' if depth == 0 => {
                out.push(&list[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&list[start..]);
    out
}

/// `key = value` lines in [params] and [run].
fn parse_kv(line: &str, no: usize) -> Result<(&str, &str), ScenarioError> {
    let Some((key, value)) = line.split_once('=') else {
        return err(no, "expected key = value");
    };
    let (key, value) = (key.trim(), value.trim());
    if key.is_empty() || value.is_empty() {
        return err(no, "expected key = value");
    }
    if !key
        .chars()
        .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
    {
        return err(no, format!("bad key {key:?} (use [a-z0-9_])"));
    }
    Ok((key, value))
}

fn valid_node_name(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase())
        && chars.clone().all(|c| {
            c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == '-'
        })
        && name.len() <= 24
}

/// Parse scenario text. `overrides` replaces values of parameters that
/// the file declares in `[params]`; overriding an undeclared parameter
/// is an error (it would silently do nothing otherwise).
pub fn parse_scenario(
    name: &str,
    source: &str,
    overrides: &BTreeMap<String, String>,
) -> Result<Scenario, ScenarioError> {
    // Pass 1: collect parameters so `$name` works in every section,
    // regardless of where [params] sits.
    let mut params: BTreeMap<String, String> = BTreeMap::new();
    let mut section = Section::None;
    for (idx, raw) in source.lines().enumerate() {
        let no = idx + 1;
        let Some(line) = effective(raw) else { continue };
        if let Some(next) = section_of(line, no)? {
            section = next;
            continue;
        }
        if section == Section::Params {
            let (key, value) = parse_kv(line, no)?;
            if value.contains('$') {
                return err(no, "parameter values cannot reference parameters");
            }
            if params.insert(key.to_owned(), value.to_owned()).is_some() {
                return err(no, format!("parameter {key:?} declared twice"));
            }
        }
    }
    for (key, value) in overrides {
        match params.get_mut(key) {
            Some(slot) => *slot = value.clone(),
            None => {
                return err(
                    0,
                    format!("override for undeclared parameter {key:?}"),
                )
            }
        }
    }

    // Pass 2: everything else, with substitution active.
    let mut sc = Scenario {
        name: name.to_owned(),
        params,
        nodes: Vec::new(),
        links: Vec::new(),
        generators: Vec::new(),
        intents: Vec::new(),
        gets: Vec::new(),
        controller_rules: Vec::new(),
        flaps: Vec::new(),
        duration_us: 0,
        proc_delay_us: 0,
    };
    let mut names: BTreeSet<String> = BTreeSet::new();
    let mut duration: Option<Micros> = None;
    section = Section::None;

    for (idx, raw) in source.lines().enumerate() {
        let no = idx + 1;
        let Some(line) = effective(raw) else { continue };
        if let Some(next) = section_of(line, no)? {
            section = next;
            continue;
        }
        if section == Section::Params {
            continue; // handled in pass 1
        }
        let line = substitute(line, &sc.params, no)?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match section {
            Section::None => return err(no, "content before the first section"),
            Section::Params => unreachable!(),
            Section::Topology => parse_topology(&tokens, no, &mut sc, &mut names)?,
            Section::Links => parse_link(&tokens, no, &mut sc, &names)?,
            Section::Generators => parse_generator(&tokens, no, &mut sc, &names)?,
            Section::Intents => parse_intent(&tokens, no, &mut sc)?,
            Section::Gets => parse_get(&tokens, no, &mut sc, &names)?,
            Section::Controller => parse_controller(&tokens, no, &mut sc)?,
            Section::Flaps => parse_flap(&tokens, no, &mut sc)?,
            Section::Run => {
                let (key, value) = parse_kv(&line, no)?;
                match key {
                    "duration" => duration = Some(parse_duration_us(value, no)?),
                    "proc_delay" => sc.proc_delay_us = parse_duration_us(value, no)?,
                    other => return err(no, format!("unknown [run] key {other:?}")),
                }
            }
        }
    }

    let Some(duration_us) = duration else {
        return err(0, "[run] must set duration");
    };
    if duration_us == 0 {
        return err(0, "duration must be positive");
    }
    sc.duration_us = duration_us;
    Ok(sc)
}

fn parse_topology(
    tokens: &[&str],
    no: usize,
    sc: &mut Scenario,
    names: &mut BTreeSet<String>,
) -> Result<(), ScenarioError> {
    if tokens.len() < 2 {
        return err(no, "expected: name kind [keepalive=DUR] [phase=DUR]");
    }
    let name = tokens[0];
    if !valid_node_name(name) {
        return err(
            no,
            format!("bad node name {name:?} (want [a-z][a-z0-9_-]*, max 24 chars)"),
        );
    }
    if !names.insert(name.to_owned()) {
        return err(no, format!("duplicate node {name:?}"));
    }
    let kind = parse_node_kind(tokens[1], no)?;
    let mut keepalive_period: Option<Micros> = None;
    let mut keepalive_phase: Option<Micros> = None;
    for extra in &tokens[2..] {
        let Some((key, value)) = extra.split_once('=') else {
            return err(no, format!("unexpected token {extra:?}"));
        };
        match key {
            "keepalive" => keepalive_period = Some(parse_duration_us(value, no)?),
            "phase" => keepalive_phase = Some(parse_duration_us(value, no)?),
            other => return err(no, format!("unknown node option {other:?}")),
        }
    }
    let keepalive = match (keepalive_period, keepalive_phase) {
        (Some(period), phase) => Some((period, phase.unwrap_or(period))),
        (None, Some(_)) => return err(no, "phase= needs keepalive="),
        (None, None) => None,
    };
    sc.nodes.push(NodeDecl {
        name: name.to_owned(),
        kind,
        keepalive,
    });
    Ok(())
}

fn check_node(
    name: &str,
    names: &BTreeSet<String>,
    no: usize,
) -> Result<(), ScenarioError> {
    if names.contains(name) {
        Ok(())
    } else {
        err(no, format!("unknown node {name:?}"))
    }
}

fn parse_link(
    tokens: &[&str],
    no: usize,
    sc: &mut Scenario,
    names: &BTreeSet<String>,
) -> Result<(), ScenarioError> {
    if !(4..=5).contains(&tokens.len()) {
        return err(no, "expected: a b latency bandwidth [queue]");
    }
    check_node(tokens[0], names, no)?;
    check_node(tokens[1], names, no)?;
    if tokens[0] == tokens[1] {
        return err(no, "a link needs two distinct nodes");
    }
    let queue_cap = match tokens.get(4) {
        Some(tok) => {
            let cap = parse_u64(tok, "queue capacity", no)?;
            if cap == 0 {
                return err(no, "queue capacity must be positive");
            }
            cap as usize
        }
        None => DEFAULT_QUEUE_CAP,
    };
    sc.links.push(LinkDecl {
        a: tokens[0].to_owned(),
        b: tokens[1].to_owned(),
        latency_us: parse_duration_us(tokens[2], no)?,
        bandwidth_bps: parse_bandwidth_bps(tokens[3], no)?,
        queue_cap,
    });
    Ok(())
}

fn parse_generator(
    tokens: &[&str],
    no: usize,
    sc: &mut Scenario,
    names: &BTreeSet<String>,
) -> Result<(), ScenarioError> {
    if !(4..=5).contains(&tokens.len()) {
        return err(no, "expected: sensor node period|- waveform [target=node]");
    }
    let sensor = parse_sensor(tokens[0], no)?;
    if sc.generators.iter().any(|g| g.sensor == sensor) {
        return err(no, format!("sensor {} already has a generator", tokens[0]));
    }
    check_node(tokens[1], names, no)?;
    let period_us = if tokens[2] == "-" {
        None
    } else {
        let period = parse_duration_us(tokens[2], no)?;
        if period == 0 {
            return err(no, "report period must be positive");
        }
        Some(period)
    };
    let target = match tokens.get(4) {
        Some(tok) => {
            let Some(target) = tok.strip_prefix("target=") else {
                return err(no, format!("unexpected token {tok:?}"));
            };
            check_node(target, names, no)?;
            Some(target.to_owned())
        }
        None => None,
    };
    sc.generators.push(GeneratorDecl {
        sensor,
        node: tokens[1].to_owned(),
        period_us,
        waveform: parse_waveform(tokens[3], no)?,
        target,
    });
    Ok(())
}

/// Nodes a switch intent may reference: the switch itself must be
/// programmable; egress neighbors must share a link with it.
struct IntentContext<'a> {
    sc: &'a Scenario,
}

impl IntentContext<'_> {
    fn check_switch(&self, name: &str, no: usize) -> Result<(), ScenarioError> {
        match self.sc.nodes.iter().find(|n| n.name == name) {
            Some(node) if node.kind == NodeKind::FastReact => Ok(()),
            Some(_) => err(no, format!("{name:?} is not a programmable switch")),
            None => err(no, format!("unknown node {name:?}")),
        }
    }

    fn check_neighbor(
        &self,
        switch: &str,
        neighbor: &str,
        no: usize,
    ) -> Result<(), ScenarioError> {
        let linked = self.sc.links.iter().any(|l| {
            (l.a == switch && l.b == neighbor) || (l.a == neighbor && l.b == switch)
        });
        if linked {
            Ok(())
        } else {
            err(no, format!("{neighbor:?} is not linked to {switch:?}"))
        }
    }

    fn check_actuatable(&self, name: &str, no: usize) -> Result<(), ScenarioError> {
        if self.sc.nodes.iter().any(|n| n.name == name) {
            Ok(())
        } else {
            err(no, format!("unknown node {name:?}"))
        }
    }
}

fn parse_route_actions(
    ctx: &IntentContext<'_>,
    switch: &str,
    list: &str,
    no: usize,
) -> Result<Vec<ActionDecl>, ScenarioError> {
    let mut actions = Vec::new();
    for item in split_actions(list) {
        let (name, args) = parse_call(item, no)?;
        let action = match (name, args.as_slice()) {
            ("forward", [nbr]) => {
                ctx.check_neighbor(switch, nbr, no)?;
                ActionDecl::Forward((*nbr).to_owned())
            }
            ("forward_mod", [nbr]) => {
                ctx.check_neighbor(switch, nbr, no)?;
                ActionDecl::ForwardMod {
                    via: (*nbr).to_owned(),
                    actuator: (*nbr).to_owned(),
                }
            }
            ("forward_mod", [via, actuator]) => {
                ctx.check_neighbor(switch, via, no)?;
                ctx.check_actuatable(actuator, no)?;
                ActionDecl::ForwardMod {
                    via: (*via).to_owned(),
                    actuator: (*actuator).to_owned(),
                }
            }
            _ => {
                return err(
                    no,
                    format!("bad action {item:?} (want forward(n) or forward_mod(n[,act]))"),
                )
            }
        };
        actions.push(action);
    }
    Ok(actions)
}

fn parse_failover_actions(
    ctx: &IntentContext<'_>,
    switch: &str,
    list: &str,
    no: usize,
) -> Result<Vec<FailoverActionDecl>, ScenarioError> {
    let mut actions = Vec::new();
    for item in split_actions(list) {
        let (name, args) = parse_call(item, no)?;
        let action = match (name, args.as_slice()) {
            ("forward_mod", [nbr]) => {
                ctx.check_neighbor(switch, nbr, no)?;
                FailoverActionDecl::ForwardMod {
                    via: (*nbr).to_owned(),
                    actuator: (*nbr).to_owned(),
                }
            }
            ("forward_mod", [via, actuator]) => {
                ctx.check_neighbor(switch, via, no)?;
                ctx.check_actuatable(actuator, no)?;
                FailoverActionDecl::ForwardMod {
                    via: (*via).to_owned(),
                    actuator: (*actuator).to_owned(),
                }
            }
            ("send_up", [nbr]) => {
                ctx.check_neighbor(switch, nbr, no)?;
                FailoverActionDecl::SendUp((*nbr).to_owned())
            }
            _ => {
                return err(
                    no,
                    format!(
                        "bad action {item:?} (want forward_mod(n[,act]) or send_up(n))"
                    ),
                )
            }
        };
        actions.push(action);
    }
    Ok(actions)
}

fn parse_tag(token: &str, no: usize) -> Result<RouteTag, ScenarioError> {
    Ok(match token {
        "normal" => RouteTag::Normal,
        "backup" => RouteTag::Backup,
        other => return err(no, format!("unknown tag {other:?}")),
    })
}

fn parse_intent(
    tokens: &[&str],
    no: usize,
    sc: &mut Scenario,
) -> Result<(), ScenarioError> {
    let ctx = IntentContext { sc };
    let intent = match tokens {
        ["logic", switch, trigger, expr @ ..] if !expr.is_empty() => {
            ctx.check_switch(switch, no)?;
            let text = expr.join(" ");
            IntentDecl::Logic {
                switch: (*switch).to_owned(),
                trigger: parse_sensor(trigger, no)?,
                expr: parse_expr(&text)
                    .map_err(|e| ScenarioError {
                        line: no,
                        message: format!("in rule {text:?}: {e}"),
                    })?,
            }
        }
        ["clear_logic", switch, trigger] => {
            ctx.check_switch(switch, no)?;
            IntentDecl::ClearLogic {
                switch: (*switch).to_owned(),
                trigger: parse_sensor(trigger, no)?,
            }
        }
        ["route", switch, sensor, tag, actions] => {
            ctx.check_switch(switch, no)?;
            IntentDecl::Route {
                switch: (*switch).to_owned(),
                sensor: parse_sensor(sensor, no)?,
                ingress: None,
                tag: parse_tag(tag, no)?,
                actions: parse_route_actions(&ctx, switch, actions, no)?,
            }
        }
        ["route_from", switch, sensor, ingress, tag, actions] => {
            ctx.check_switch(switch, no)?;
            ctx.check_neighbor(switch, ingress, no)?;
            IntentDecl::Route {
                switch: (*switch).to_owned(),
                sensor: parse_sensor(sensor, no)?,
                ingress: Some((*ingress).to_owned()),
                tag: parse_tag(tag, no)?,
                actions: parse_route_actions(&ctx, switch, actions, no)?,
            }
        }
        ["failover", switch, sensor, actions] => {
            ctx.check_switch(switch, no)?;
            IntentDecl::Failover {
                switch: (*switch).to_owned(),
                sensor: parse_sensor(sensor, no)?,
                actions: parse_failover_actions(&ctx, switch, actions, no)?,
            }
        }
        ["filter", switch, sensor, rate] => {
            ctx.check_switch(switch, no)?;
            let rate: u16 = match rate.parse() {
                Ok(r) if r >= 1 => r,
                _ => return err(no, format!("bad filter rate {rate:?}")),
            };
            IntentDecl::Filter {
                switch: (*switch).to_owned(),
                sensor: parse_sensor(sensor, no)?,
                rate,
            }
        }
        ["timeout", switch, neighbor, timeout] => {
            ctx.check_switch(switch, no)?;
            ctx.check_neighbor(switch, neighbor, no)?;
            IntentDecl::Timeout {
                switch: (*switch).to_owned(),
                neighbor: (*neighbor).to_owned(),
                timeout_us: parse_duration_us(timeout, no)?,
            }
        }
        ["cache_tolerance", switch, tolerance] => {
            ctx.check_switch(switch, no)?;
            IntentDecl::CacheTolerance {
                switch: (*switch).to_owned(),
                tolerance_us: parse_duration_us(tolerance, no)?,
            }
        }
        _ => return err(no, "unrecognized intent"),
    };
    sc.intents.push(intent);
    Ok(())
}

fn parse_get(
    tokens: &[&str],
    no: usize,
    sc: &mut Scenario,
    names: &BTreeSet<String>,
) -> Result<(), ScenarioError> {
    let [node, sensor, opcode, start, period, count] = tokens else {
        return err(no, "expected: node sensor opcode start period count");
    };
    check_node(node, names, no)?;
    let count = parse_u64(count, "request count", no)?;
    if count == 0 {
        return err(no, "request count must be positive");
    }
    let period_us = parse_duration_us(period, no)?;
    if period_us == 0 {
        return err(no, "get period must be positive");
    }
    sc.gets.push(GetDecl {
        node: (*node).to_owned(),
        sensor: parse_sensor(sensor, no)?,
        opcode: parse_opcode(opcode, no)?,
        start_us: parse_duration_us(start, no)?,
        period_us,
        count,
    });
    Ok(())
}

fn parse_controller(
    tokens: &[&str],
    no: usize,
    sc: &mut Scenario,
) -> Result<(), ScenarioError> {
    let [node, trigger, actuator, expr @ ..] = tokens else {
        return err(no, "expected: node trigger actuator [expr]");
    };
    let is_controller = sc
        .nodes
        .iter()
        .any(|n| n.name == *node && n.kind == NodeKind::Controller);
    if !is_controller {
        return err(no, format!("{node:?} is not a controller"));
    }
    if !sc.nodes.iter().any(|n| n.name == *actuator) {
        return err(no, format!("unknown node {actuator:?}"));
    }
    let expr = if expr.is_empty() {
        None
    } else {
        let text = expr.join(" ");
        Some(parse_expr(&text).map_err(|e| ScenarioError {
            line: no,
            message: format!("in rule {text:?}: {e}"),
        })?)
    };
    sc.controller_rules.push(ControllerRuleDecl {
        node: (*node).to_owned(),
        trigger: parse_sensor(trigger, no)?,
        actuator: (*actuator).to_owned(),
        expr,
    });
    Ok(())
}

fn parse_flap(
    tokens: &[&str],
    no: usize,
    sc: &mut Scenario,
) -> Result<(), ScenarioError> {
    let (ends, times) = match tokens.len() {
        3 | 4 => (&tokens[..2], &tokens[2..]),
        _ => return err(no, "expected: a b down_at [up_at]"),
    };
    let linked = sc
        .links
        .iter()
        .any(|l| (l.a == ends[0] && l.b == ends[1]) || (l.a == ends[1] && l.b == ends[0]));
    if !linked {
        return err(no, format!("no link between {:?} and {:?}", ends[0], ends[1]));
    }
    let down_at_us = parse_duration_us(times[0], no)?;
    let up_at_us = match times.get(1) {
        Some(tok) => {
            let t = parse_duration_us(tok, no)?;
            if t < down_at_us {
                return err(no, "a link cannot come up before it goes down");
            }
            Some(t)
        }
        None => None,
    };
    sc.flaps.push(FlapDecl {
        a: ends[0].to_owned(),
        b: ends[1].to_owned(),
        down_at_us,
        up_at_us,
    });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
[topology]
s1n sensor
a1 switch
act1 actuator keepalive=10ms phase=2001us

[links]
s1n a1 1ms 1gbps
a1 act1 1ms 1gbps 500

[generators]
1 s1n 10ms constant(40)

[intents]
route a1 1 normal forward_mod(act1)

[run]
duration = 1s
";

    #[test]
    fn parses_a_minimal_scenario() {
        let sc = parse_scenario("mini", MINIMAL, &BTreeMap::new()).unwrap();
        assert_eq!(sc.name, "mini");
        assert_eq!(sc.nodes.len(), 3);
        assert_eq!(sc.nodes[2].keepalive, Some((10_000, 2_001)));
        assert_eq!(sc.links.len(), 2);
        assert_eq!(sc.links[0].queue_cap, DEFAULT_QUEUE_CAP);
        assert_eq!(sc.links[1].queue_cap, 500);
        assert_eq!(sc.generators.len(), 1);
        assert_eq!(sc.generators[0].period_us, Some(10_000));
        assert_eq!(sc.intents.len(), 1);
        assert_eq!(sc.duration_us, 1_000_000);
        assert_eq!(sc.proc_delay_us, 0);
        match &sc.intents[0] {
            IntentDecl::Route { actions, .. } => match &actions[0] {
                ActionDecl::ForwardMod { via, actuator } => {
                    assert_eq!(via, "act1");
                    assert_eq!(actuator, "act1");
                }
                other => panic!("unexpected action {other:?}"),
            },
            other => panic!("unexpected intent {other:?}"),
        }
    }

    #[test]
    fn substitutes_parameters_and_applies_overrides() {
        let src = "\
[params]
interval = 10ms
rate = 5

[topology]
s1n sensor
a1 switch

[links]
s1n a1 1ms 1gbps

[generators]
1 s1n $interval constant(40)

[intents]
filter a1 1 $rate

[run]
duration = $interval
";
        let sc = parse_scenario("p", src, &BTreeMap::new()).unwrap();
        assert_eq!(sc.generators[0].period_us, Some(10_000));
        assert!(matches!(
            sc.intents[0],
            IntentDecl::Filter { rate: 5, .. }
        ));

        let overrides =
            BTreeMap::from([("interval".to_owned(), "20ms".to_owned())]);
        let sc = parse_scenario("p", src, &overrides).unwrap();
        assert_eq!(sc.generators[0].period_us, Some(20_000));
        assert_eq!(sc.duration_us, 20_000);

        let bogus = BTreeMap::from([("nope".to_owned(), "1".to_owned())]);
        let e = parse_scenario("p", src, &bogus).unwrap_err();
        assert!(e.message.contains("undeclared"));
    }

    #[test]
    fn reports_line_numbers() {
        let src = "\
[topology]
a1 switch
a1 switch
";
        let e = parse_scenario("dup", src, &BTreeMap::new()).unwrap_err();
        assert_eq!(e.line, 3);
        assert!(e.message.contains("duplicate"));
        assert_eq!(e.to_string(), "line 3: duplicate node \"a1\"");
    }

    #[test]
    fn rejects_unknown_references() {
        let base = "\
[topology]
a1 switch
b1 plainswitch
act1 actuator

[links]
a1 b1 1ms 1gbps
a1 act1 1ms 1gbps
";
        for (body, needle) in [
            ("[links]\na1 ghost 1ms 1gbps\n", "unknown node"),
            ("[generators]\n1 ghost 10ms constant(1)\n", "unknown node"),
            ("[intents]\nlogic b1 1 s1 > 0\n", "not a programmable switch"),
            ("[intents]\nroute a1 1 normal forward(act2)\n", "is not linked"),
            ("[intents]\ntimeout a1 ghost 1ms\n", "is not linked"),
            ("[flaps]\na1 ghost 1s\n", "no link between"),
            ("[controller]\na1 1 act1\n", "is not a controller"),
        ] {
            let src = format!("{base}\n{body}\n[run]\nduration = 1s\n");
            let e = parse_scenario("bad", &src, &BTreeMap::new()).unwrap_err();
            assert!(
                e.message.contains(needle),
                "body {body:?} gave {e}, wanted {needle:?}"
            );
        }
    }

    #[test]
    fn parses_durations_and_bandwidths() {
        assert_eq!(parse_duration_us("250us", 1).unwrap(), 250);
        assert_eq!(parse_duration_us("10ms", 1).unwrap(), 10_000);
        assert_eq!(parse_duration_us("2s", 1).unwrap(), 2_000_000);
        assert!(parse_duration_us("10", 1).is_err());
        assert!(parse_duration_us("10m", 1).is_err());
        assert!(parse_duration_us("ms", 1).is_err());
        assert_eq!(parse_bandwidth_bps("512bps", 1).unwrap(), 512);
        assert_eq!(parse_bandwidth_bps("1gbps", 1).unwrap(), 1_000_000_000);
        assert!(parse_bandwidth_bps("1x", 1).is_err());
    }

    #[test]
    fn parses_waveforms() {
        assert_eq!(
            parse_waveform("constant(42)", 1).unwrap(),
            Waveform::Constant(42)
        );
        assert_eq!(
            parse_waveform("alternate(0,1,500ms,130ms)", 1).unwrap(),
            Waveform::Alternate {
                v0: 0,
                v1: 1,
                period_us: 500_000,
                phase_us: 130_000,
            }
        );
        assert_eq!(
            parse_waveform("alternate(0,1,500ms)", 1).unwrap(),
            Waveform::Alternate {
                v0: 0,
                v1: 1,
                period_us: 500_000,
                phase_us: 0,
            }
        );
        assert_eq!(
            parse_waveform("ramp(20,1000)", 1).unwrap(),
            Waveform::Ramp {
                start: 20,
                slope_milli_per_s: 1000,
            }
        );
        assert_eq!(
            parse_waveform("ramp(100,-500)", 1).unwrap(),
            Waveform::Ramp {
                start: 100,
                slope_milli_per_s: -500,
            }
        );
        assert_eq!(
            parse_waveform("spikes(40,55,50ms,7s)", 1).unwrap(),
            Waveform::Spikes {
                base: 40,
                value: 55,
                duration_us: 50_000,
                interval_us: 7_000_000,
            }
        );
        assert!(parse_waveform("sine(1)", 1).is_err());
        assert!(parse_waveform("constant(1,2)", 1).is_err());
    }

    #[test]
    fn splits_action_lists_respecting_parens() {
        assert_eq!(
            split_actions("forward_mod(b1,act2),send_up(c1)"),
            vec!["forward_mod(b1,act2)", "send_up(c1)"]
        );
        assert_eq!(split_actions("forward(x)"), vec!["forward(x)"]);
    }

    #[test]
    fn parses_multi_action_failover() {
        let src = "\
[topology]
a1 switch
b1 plainswitch
c1 plainswitch
act2 actuator

[links]
a1 b1 1ms 1gbps
a1 c1 1ms 1gbps

[intents]
failover a1 1 forward_mod(b1,act2),send_up(c1)

[run]
duration = 1s
";
        let sc = parse_scenario("f", src, &BTreeMap::new()).unwrap();
        let IntentDecl::Failover { actions, .. } = &sc.intents[0] else {
            panic!("wrong intent");
        };
        assert_eq!(actions.len(), 2);
        assert!(matches!(
            &actions[0],
            FailoverActionDecl::ForwardMod { via, actuator }
                if via == "b1" && actuator == "act2"
        ));
        assert!(matches!(&actions[1], FailoverActionDecl::SendUp(n) if n == "c1"));
    }

    #[test]
    fn requires_duration() {
        let src = "[topology]\na1 switch\n";
        let e = parse_scenario("x", src, &BTreeMap::new()).unwrap_err();
        assert!(e.message.contains("duration"));
    }
}
