//! FastReact: an in-network monitoring, control and caching data plane.
//!
//! The crate models a programmable switch pipeline that keeps a short
//! time series per sensor, evaluates operator-configured boolean rules
//! compiled to conjunctive-normal-form register tables, reacts locally to
//! sensor readings (including failover to backup actuators when a port
//! stops receiving keepalives), filters periodic traffic, and answers
//! value queries from a freshness-bounded cache.
//!
//! Modules:
//! - [`model`]: identifiers, packet and trace record types.
//! - [`logic`]: boolean rule AST, CNF compilation, register-table
//!   encoding/evaluation, memory footprint calculator, rule text parser.
//! - [`dataplane`]: per-switch state and the packet processing pipeline.
//! - [`control`]: controller intents, table installation, and the
//!   centralized reaction baseline.
//! - [`simnet`]: deterministic discrete-event network simulator.
//! - [`scenarios`]: scenario file format, waveform generators, experiment
//!   harness and summary statistics.

pub mod control;
pub mod dataplane;
pub mod logic;
pub mod model;
pub mod scenarios;
pub mod simnet;
