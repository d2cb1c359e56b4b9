//! Scenario files: parse an experiment description, build the simulated
//! network it describes, run it and fold the trace into a [`Summary`].

mod file;
mod summary;

use std::collections::BTreeMap;
use std::path::Path;

use crate::control::{ControlRule, Intent};
use crate::dataplane::{FailoverAction, RouteAction};
use crate::model::{Micros, NodeId, TraceRecord};
use crate::simnet::{Sim, SimConfig, SwitchTemplate};

pub use file::{
    parse_scenario, ActionDecl, ControllerRuleDecl, FailoverActionDecl, FlapDecl,
    GeneratorDecl, GetDecl, IntentDecl, LinkDecl, NodeDecl, Scenario, ScenarioError,
};
pub use summary::{summarize, summary_to_csv, DelayStats, GetStats, SensorFlow,
    Summary, SUMMARY_HEADER};

/// Per-run adjustments applied on top of a scenario file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    /// Replacement values for `[params]` entries.
    pub params: BTreeMap<String, String>,
    /// Replaces the file's `proc_delay` when set.
    pub proc_delay_us: Option<Micros>,
}

/// Failure to load a scenario from disk.
#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: ScenarioError,
    },
}

/// Everything a finished run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub scenario: Scenario,
    pub trace: Vec<TraceRecord>,
    pub summary: Summary,
}

/// Load a scenario file, applying overrides. The scenario's name is the
/// file stem.
pub fn load_scenario(path: &Path, overrides: &Overrides) -> Result<Scenario, LoadError> {
    let display = path.display().to_string();
    let source = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: display.clone(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".to_owned());
    let mut scenario = parse_scenario(&name, &source, &overrides.params)
        .map_err(|source| LoadError::Parse {
            path: display,
            source,
        })?;
    if let Some(proc_delay) = overrides.proc_delay_us {
        scenario.proc_delay_us = proc_delay;
    }
    Ok(scenario)
}

/// Build the simulation a scenario describes. The scenario has already
/// been cross-checked by the parser, so name resolution cannot fail.
#[must_use]
pub fn build_sim(sc: &Scenario) -> Sim {
    let mut sim = Sim::new(SimConfig {
        duration_us: sc.duration_us,
        proc_delay_us: sc.proc_delay_us,
        switch: SwitchTemplate::default(),
    });
    let mut ids: BTreeMap<&str, NodeId> = BTreeMap::new();
    for node in &sc.nodes {
        let id = sim.add_node(&node.name, node.kind);
        if let Some((period, phase)) = node.keepalive {
            sim.set_keepalive(id, period, phase);
        }
        ids.insert(node.name.as_str(), id);
    }
    for link in &sc.links {
        sim.add_link(
            ids[link.a.as_str()],
            ids[link.b.as_str()],
            link.latency_us,
            link.bandwidth_bps,
            link.queue_cap,
        );
    }
    for gen in &sc.generators {
        sim.add_generator(
            gen.sensor,
            ids[gen.node.as_str()],
            gen.period_us,
            gen.waveform.clone(),
            gen.target.as_deref().map(|t| ids[t]),
        );
    }
    for get in &sc.gets {
        sim.add_getter(
            ids[get.node.as_str()],
            get.sensor,
            get.opcode,
            get.start_us,
            get.period_us,
            get.count,
        );
    }
    for rule in &sc.controller_rules {
        sim.add_controller_rule(
            ids[rule.node.as_str()],
            ControlRule {
                trigger: rule.trigger,
                expr: rule.expr.clone(),
                actuator: ids[rule.actuator.as_str()],
            },
        );
    }
    for flap in &sc.flaps {
        let link = sim
            .link_between(ids[flap.a.as_str()], ids[flap.b.as_str()])
            .expect("parser checked the link exists");
        sim.add_flap(link, flap.down_at_us, flap.up_at_us);
    }
    sim.finalize();
    for decl in &sc.intents {
        let intent = resolve_intent(&sim, &ids, decl);
        sim.install(&intent).expect("parser validated the intent");
    }
    sim
}

/// Turn a name-based intent into a port/id-based one for `sim`.
fn resolve_intent(sim: &Sim, ids: &BTreeMap<&str, NodeId>, decl: &IntentDecl) -> Intent {
    let port = |switch: &str, neighbor: &str| {
        sim.port_to(ids[switch], ids[neighbor])
            .expect("parser checked adjacency")
    };
    match decl {
        IntentDecl::Logic {
            switch,
            trigger,
            expr,
        } => Intent::SetLogic {
            switch: ids[switch.as_str()],
            trigger: *trigger,
            expr: expr.clone(),
        },
        IntentDecl::ClearLogic { switch, trigger } => Intent::ClearLogic {
            switch: ids[switch.as_str()],
            trigger: *trigger,
        },
        IntentDecl::Route {
            switch,
            sensor,
            ingress,
            tag,
            actions,
        } => Intent::SetRoute {
            switch: ids[switch.as_str()],
            sensor: *sensor,
            ingress: ingress.as_deref().map(|n| port(switch, n)),
            tag: *tag,
            actions: actions
                .iter()
                .map(|a| match a {
                    ActionDecl::Forward(nbr) => RouteAction::Forward(port(switch, nbr)),
                    ActionDecl::ForwardMod { via, actuator } => RouteAction::ForwardMod(
                        port(switch, via),
                        ids[actuator.as_str()],
                    ),
                })
                .collect(),
        },
        IntentDecl::Failover {
            switch,
            sensor,
            actions,
        } => Intent::SetFailover {
            switch: ids[switch.as_str()],
            sensor: *sensor,
            actions: actions
                .iter()
                .map(|a| match a {
                    FailoverActionDecl::ForwardMod { via, actuator } => {
                        FailoverAction::ForwardMod(
                            port(switch, via),
                            ids[actuator.as_str()],
                        )
                    }
                    FailoverActionDecl::SendUp(nbr) => {
                        FailoverAction::SendUp(port(switch, nbr))
                    }
                })
                .collect(),
        },
        IntentDecl::Filter {
            switch,
            sensor,
            rate,
        } => Intent::SetFilter {
            switch: ids[switch.as_str()],
            sensor: *sensor,
            rate: *rate,
        },
        IntentDecl::Timeout {
            switch,
            neighbor,
            timeout_us,
        } => Intent::SetTimeout {
            switch: ids[switch.as_str()],
            port: port(switch, neighbor),
            timeout_us: *timeout_us,
        },
        IntentDecl::CacheTolerance {
            switch,
            tolerance_us,
        } => Intent::SetCacheTolerance {
            switch: ids[switch.as_str()],
            tolerance_us: *tolerance_us,
        },
    }
}

/// Run an already-parsed scenario to completion.
#[must_use]
pub fn run_parsed(scenario: Scenario) -> RunOutput {
    let mut sim = build_sim(&scenario);
    let trace = sim.run();
    let summary = summarize(&trace, &scenario);
    RunOutput {
        scenario,
        trace,
        summary,
    }
}

/// Parse scenario text and run it (test and tooling convenience).
pub fn run_source(
    name: &str,
    source: &str,
    overrides: &Overrides,
) -> Result<RunOutput, ScenarioError> {
    let mut scenario = parse_scenario(name, source, &overrides.params)?;
    if let Some(proc_delay) = overrides.proc_delay_us {
        scenario.proc_delay_us = proc_delay;
    }
    Ok(run_parsed(scenario))
}

/// Load a scenario file and run it.
pub fn run_scenario(path: &Path, overrides: &Overrides) -> Result<RunOutput, LoadError> {
    Ok(run_parsed(load_scenario(path, overrides)?))
}
