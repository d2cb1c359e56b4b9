//! Command-line front end: run scenario files, sweep their parameters,
//! and size switch memory footprints.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use fastreact::logic::{bits_to_bytes, FootprintParams, FootprintReport};
use fastreact::model::TRACE_HEADER;
use fastreact::scenarios::{
    run_scenario, summary_to_csv, Overrides, RunOutput, Summary,
};

#[derive(Parser)]
#[command(
    name = "fastreact",
    about = "Deterministic in-network monitoring and control simulator",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write trace.csv + summary.csv.
    Run(RunArgs),
    /// Run a scenario once per combination of swept parameter values.
    Sweep(SweepArgs),
    /// Print the register/table footprint of a switch configuration.
    Footprint(FootprintArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file to run.
    scenario: PathBuf,
    /// Output directory (default: out/<scenario-name>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the scenario's per-report processing delay.
    #[arg(long)]
    proc_delay_us: Option<u64>,
    /// Accepted for interface stability; runs are fully deterministic,
    /// so the seed has no effect.
    #[arg(long)]
    seed: Option<u64>,
    /// Override a [params] value, e.g. --param interval=20ms.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
}

#[derive(Args)]
struct SweepArgs {
    /// Scenario file to sweep.
    scenario: PathBuf,
    /// Parameter and its values, e.g. --sweep interval=5ms,10ms,20ms.
    /// Repeat for a cartesian product over several parameters.
    #[arg(long = "sweep", value_name = "KEY=V1,V2,...", required = true)]
    sweeps: Vec<String>,
    /// Output directory (default: out/<scenario-name>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the scenario's per-report processing delay.
    #[arg(long)]
    proc_delay_us: Option<u64>,
}

#[derive(Args)]
struct FootprintArgs {
    /// Number of addressable sensors.
    #[arg(long, default_value_t = 5000)]
    sensors: u64,
    /// Time-series ring length per sensor.
    #[arg(long, default_value_t = 100)]
    history: u64,
    /// Conjunct slots per trigger sensor.
    #[arg(long, default_value_t = 5)]
    ccols: u64,
    /// Disjunctive rows (row 0 reserved).
    #[arg(long, default_value_t = 25000)]
    drows: u64,
    /// Comparison slots per disjunctive row.
    #[arg(long, default_value_t = 5)]
    dcols: u64,
    /// Sensor value width in bits.
    #[arg(long, default_value_t = 16)]
    sz_sen: u64,
    /// Timestamp width in bits.
    #[arg(long, default_value_t = 48)]
    sz_ts: u64,
    /// Switch port count.
    #[arg(long, default_value_t = 24)]
    ports: u64,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Sweep(args) => sweep(args),
        Command::Footprint(args) => footprint(args),
    }
}

fn parse_param(spec: &str) -> Result<(String, String)> {
    let Some((key, value)) = spec.split_once('=') else {
        bail!("--param needs KEY=VALUE, got {spec:?}");
    };
    Ok((key.trim().to_owned(), value.trim().to_owned()))
}

fn out_dir(requested: Option<PathBuf>, scenario: &Path) -> PathBuf {
    requested.unwrap_or_else(|| {
        let stem = scenario
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "scenario".to_owned());
        PathBuf::from("out").join(stem)
    })
}

fn write_outputs(dir: &Path, output: &RunOutput) -> Result<()> {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))?;
    let mut trace = String::from(TRACE_HEADER);
    trace.push('\n');
    for row in &output.trace {
        trace.push_str(&row.to_csv_line());
        trace.push('\n');
    }
    let trace_path = dir.join("trace.csv");
    fs::write(&trace_path, trace)
        .with_context(|| format!("writing {}", trace_path.display()))?;
    let summary_path = dir.join("summary.csv");
    fs::write(&summary_path, summary_to_csv(&output.summary))
        .with_context(|| format!("writing {}", summary_path.display()))?;
    println!(
        "wrote {} ({} rows) and {}",
        trace_path.display(),
        output.trace.len(),
        summary_path.display()
    );
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let mut overrides = Overrides {
        proc_delay_us: args.proc_delay_us,
        ..Overrides::default()
    };
    for spec in &args.params {
        let (key, value) = parse_param(spec)?;
        overrides.params.insert(key, value);
    }
    if args.seed.is_some() {
        eprintln!("note: --seed has no effect; runs are deterministic");
    }
    let output = run_scenario(&args.scenario, &overrides)?;
    let dir = out_dir(args.out, &args.scenario);
    write_outputs(&dir, &output)?;
    print!("{}", summary_to_csv(&output.summary));
    Ok(())
}

/// A swept parameter and the values it takes.
struct Sweep {
    key: String,
    values: Vec<String>,
}

fn parse_sweep(spec: &str) -> Result<Sweep> {
    let Some((key, values)) = spec.split_once('=') else {
        bail!("--sweep needs KEY=V1,V2,..., got {spec:?}");
    };
    let values: Vec<String> = values
        .split(',')
        .map(|v| v.trim().to_owned())
        .filter(|v| !v.is_empty())
        .collect();
    if values.is_empty() {
        bail!("--sweep {key} lists no values");
    }
    Ok(Sweep {
        key: key.trim().to_owned(),
        values,
    })
}

/// One sweep.csv row per sensor per parameter combination.
fn sweep_rows(params: &[(String, String)], summary: &Summary) -> Vec<String> {
    let prefix: Vec<String> = params.iter().map(|(_, v)| v.clone()).collect();
    summary
        .sensors
        .iter()
        .map(|(sensor, flow)| {
            let gap = flow
                .recovery_gap_us
                .map(|g| g.to_string())
                .unwrap_or_default();
            format!(
                "{},{sensor},{},{},{},{},{gap},{:.3},{}",
                prefix.join(","),
                flow.sent,
                flow.delivered,
                flow.lost,
                flow.recovered,
                flow.delays.mean_us(),
                flow.controller_rx,
            )
        })
        .collect()
}

fn sweep(args: SweepArgs) -> Result<()> {
    let sweeps: Vec<Sweep> = args
        .sweeps
        .iter()
        .map(|s| parse_sweep(s))
        .collect::<Result<_>>()?;
    let dir = out_dir(args.out, &args.scenario);
    fs::create_dir_all(&dir)
        .with_context(|| format!("creating {}", dir.display()))?;

    let mut header: Vec<String> = sweeps.iter().map(|s| s.key.clone()).collect();
    header.extend(
        [
            "sensor",
            "sent",
            "delivered",
            "lost",
            "recovered",
            "recovery_gap_us",
            "delay_mean_us",
            "controller_rx",
        ]
        .map(str::to_owned),
    );
    let mut csv = header.join(",");
    csv.push('\n');

    // Cartesian product over the swept values, first key slowest.
    let mut combo = vec![0usize; sweeps.len()];
    loop {
        let params: Vec<(String, String)> = sweeps
            .iter()
            .zip(&combo)
            .map(|(s, &i)| (s.key.clone(), s.values[i].clone()))
            .collect();
        let overrides = Overrides {
            params: params.iter().cloned().collect::<BTreeMap<_, _>>(),
            proc_delay_us: args.proc_delay_us,
        };
        let output = run_scenario(&args.scenario, &overrides)?;
        let label: Vec<String> =
            params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!("ran {}", label.join(" "));
        for row in sweep_rows(&params, &output.summary) {
            csv.push_str(&row);
            csv.push('\n');
        }

        // Advance the odometer.
        let mut pos = sweeps.len();
        loop {
            if pos == 0 {
                let path = dir.join("sweep.csv");
                fs::write(&path, csv)
                    .with_context(|| format!("writing {}", path.display()))?;
                println!("wrote {}", path.display());
                return Ok(());
            }
            pos -= 1;
            combo[pos] += 1;
            if combo[pos] < sweeps[pos].values.len() {
                break;
            }
            combo[pos] = 0;
        }
    }
}

fn footprint(args: FootprintArgs) -> Result<()> {
    let params = FootprintParams {
        s_count: args.sensors,
        h_count: args.history,
        c_cols: args.ccols,
        d_rows: args.drows,
        d_cols: args.dcols,
        sz_sen: args.sz_sen,
        sz_ts: args.sz_ts,
        p_ports: args.ports,
    };
    let report = FootprintReport::compute(&params)
        .map_err(|e| anyhow::anyhow!("invalid parameters: {e}"))?;
    let rows = [
        ("conjunctive", report.conjunctive_bits),
        ("disjunctive", report.disjunctive_bits),
        ("timeseries", report.timeseries_bits),
        ("misc", report.misc_bits),
        ("total", report.total_bits),
    ];
    println!("region,bits,bytes");
    for (region, bits) in rows {
        println!("{region},{bits},{}", bits_to_bytes(bits));
    }
    Ok(())
}
