//! Command-line front end.
//!
//! Exit codes: 0 success, 1 invalid input (arguments, scenario files),
//! 2 runtime or numerical failure.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rislab::geometry::{trace_paths, Node, PathRecord};
use rislab::harness::{
    emit_report, load_scenario, run_montecarlo, Mode, MonteCarloResult, ReportDocument, ReportFormat, Scenario,
    TOOL_VERSION,
};
use rislab::protocol::Environment;
use rislab::ris::build_codebook;
use rislab::Error;

#[derive(Parser)]
#[command(name = "rislab", version, about = "RIS-aided indoor positioning and mapping simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Angle-error table: every run mode over the scenario's UE grid and seeds.
    SweepTable(RunArgs),
    /// Scatterer mapping run over the UE grid.
    Map(RunArgs),
    /// Dump the traced paths of the scenario's nominal scene.
    Trace(CommonArgs),
    /// Export the codebook for the scenario's nominal scene.
    Codebook(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario file, or the name of a bundled scenario.
    #[arg(long)]
    scenario: PathBuf,
    /// Run mode; `sweep-table` runs all three when omitted.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace the scenario's seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Worker threads; 0 uses one per core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// csv or json.
    #[arg(long, default_value = "csv", value_parser = parse_format)]
    format: ReportFormat,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Failure with its exit code.
struct Failure(u8, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(if e.is_validation() { 1 } else { 2 }, e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

fn load(args: &CommonArgs) -> Result<Scenario, Failure> {
    // Anything wrong with the input file is the caller's problem.
    let mut scenario = load_scenario(&args.scenario).map_err(|e| Failure(1, e.to_string()))?;
    if let Some(seed) = args.seed {
        scenario.seeds = vec![seed];
    }
    Ok(scenario)
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::SweepTable(args) => {
            let mut scenario = load(&args.common)?;
            scenario.mapping = None;
            let modes = args.common.mode.map_or(Mode::ALL.to_vec(), |m| vec![m]);
            run_modes(&scenario, &modes, &args)
        }
        Command::Map(args) => {
            let mut scenario = load(&args.common)?;
            scenario.mapping.get_or_insert_with(Default::default);
            let mode = args.common.mode.unwrap_or(Mode::ContinuousSweep);
            run_modes(&scenario, &[mode], &args)
        }
        Command::Trace(args) => {
            let scenario = load(&args)?;
            write_out(args.out.as_deref(), trace_table(&scenario)?.as_bytes())
        }
        Command::Codebook(args) => {
            let scenario = load(&args)?;
            let bit_depth = args.mode.map_or(scenario.codebook.bit_depth, Mode::bit_depth);
            let mut params = scenario.protocol_params();
            params.signal.snr_db = f64::INFINITY;
            let env = Environment::new(&scenario.scene, &params.specs, &params.signal, 0)?;
            let codebook =
                build_codebook(env.incidence(), params.codebook_range, params.codebook_step, &env.specs().ris, bit_depth)?;
            write_out(args.out.as_deref(), codebook.to_json().as_bytes())
        }
    }
}

fn run_modes(scenario: &Scenario, modes: &[Mode], args: &RunArgs) -> Result<(), Failure> {
    let results = modes
        .iter()
        .map(|&m| run_montecarlo(scenario, m, args.jobs))
        .collect::<Result<Vec<_>, _>>()?;
    print_summary(&results);
    let doc = ReportDocument {
        tool_version: TOOL_VERSION.into(),
        scenario: scenario.name.clone(),
        scenario_hash: scenario.hash(),
        results,
    };
    match &args.common.out {
        Some(path) => emit_report(&doc, args.format, path)?,
        None => {
            let text = serde_json::to_string_pretty(&doc).map_err(|e| Failure(2, e.to_string()))?;
            write_out(None, format!("{text}\n").as_bytes())?;
        }
    }
    Ok(())
}

fn print_summary(results: &[MonteCarloResult]) {
    eprintln!("{:<20} {:>7} {:>8} {:>10} {:>10} {:>12}", "mode", "trials", "failed", "peak°", "mean°", "variance°²");
    for r in results {
        match r.stats {
            Some(s) => eprintln!(
                "{:<20} {:>7} {:>8} {:>10.3} {:>10.3} {:>12.3}",
                r.mode.name(),
                s.n_trials,
                r.failures,
                s.peak,
                s.mean,
                s.variance
            ),
            None => eprintln!("{:<20} {:>7} {:>8}", r.mode.name(), 0, r.failures),
        }
        if let Some(m) = r.mapping {
            let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
            eprintln!(
                "  mapping: detected {}/{} trials, mean error {} m, std {} m",
                m.detected_trials,
                m.eligible_trials,
                fmt(m.mean_error_m),
                fmt(m.std_error_m)
            );
        }
    }
}

fn trace_table(scenario: &Scenario) -> Result<String, Failure> {
    let scene = &scenario.scene;
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_fail = |e: csv::Error| Failure(2, e.to_string());
    w.write_record([
        "link",
        "order",
        "reflectors",
        "length_m",
        "delay_ns",
        "gain_db",
        "aod_azimuth_deg",
        "aod_elevation_deg",
        "aoa_azimuth_deg",
        "aoa_elevation_deg",
        "reflection_points",
    ])
    .map_err(csv_fail)?;
    for (link, tx, rx) in [("ap-ris", Node::Ap, Node::Ris), ("ris-ue", Node::Ris, Node::Ue), ("ap-ue", Node::Ap, Node::Ue)] {
        let paths: Vec<PathRecord> = trace_paths(scene, tx, rx, scenario.max_order)?;
        for p in paths {
            let labels: Vec<&str> = p.reflectors.iter().map(|&i| scene.surfaces()[i].label.as_str()).collect();
            let points: Vec<String> = p
                .reflection_points
                .iter()
                .map(|v| format!("({:.4} {:.4} {:.4})", v.x, v.y, v.z))
                .collect();
            w.write_record([
                link.to_string(),
                p.order.to_string(),
                labels.join("|"),
                p.length().to_string(),
                (p.delay * 1e9).to_string(),
                (20.0 * p.gain.log10()).to_string(),
                p.aod_azimuth.to_degrees().to_string(),
                p.aod_elevation.to_degrees().to_string(),
                p.aoa_azimuth.to_degrees().to_string(),
                p.aoa_elevation.to_degrees().to_string(),
                points.join(" "),
            ])
            .map_err(csv_fail)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Failure(2, e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn write_out(path: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| Failure(2, Error::io(p, e).to_string())),
        None => {
            let mut stdout = std::io::stdout().lock();
            match stdout.write_all(bytes).and_then(|_| stdout.flush()) {
                // A closed pipe (e.g. `| head`) is not a failure.
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Failure(2, format!("stdout: {e}"))),
                _ => Ok(()),
            }
        }
    }
}
