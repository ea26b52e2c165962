use std::path::PathBuf;
use std::process::ExitCode;

use clap::builder::{PossibleValuesParser, TypedValueParser};
use clap::Parser;
use flowlab::experiment::{self, ConfigFile, ExperimentKind, ExperimentReport, Relation, SweepReport};
use flowlab::Error;

const NAMES: [&str; 8] = [
    "convexify",
    "contraction",
    "ratio-bound",
    "heat-vs-jko",
    "slope-identity",
    "entropy-convexity",
    "curvature-constants",
    "potential-audit",
];

/// Runs one flowlab experiment and writes report.json plus CSV artifacts.
///
/// Exit status: 0 when every check passes, 1 when a check fails, 2 on errors.
#[derive(Debug, Parser)]
#[command(name = "flowlab", version)]
struct Cli {
    #[arg(value_parser = PossibleValuesParser::new(NAMES).map(|s| s.parse::<ExperimentKind>().expect("listed name")))]
    experiment: ExperimentKind,

    /// TOML or JSON config; values in the file take precedence over flags.
    #[arg(long)]
    config: PathBuf,

    /// Output directory for report.json and CSV artifacts.
    #[arg(long)]
    out: Option<PathBuf>,

    #[arg(long)]
    seed: Option<u64>,

    /// Sweep a numeric knob instead of a single run, e.g. `dt=4e-3,2e-3,1e-3`.
    #[arg(long, value_name = "KNOB=V1,V2,...")]
    sweep: Option<String>,
}

fn parse_sweep(spec: &str) -> Result<(String, Vec<f64>), String> {
    let (knob, values) = spec.split_once('=').ok_or("expected KNOB=V1,V2,...")?;
    let values = values
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("bad value `{v}`: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((knob.trim().to_string(), values))
}

fn print_report(r: &ExperimentReport) {
    for c in &r.checks {
        let rel = match c.relation {
            Relation::AtMost => "<=",
            Relation::AtLeast => ">=",
        };
        let tag = if c.pass { "PASS" } else { "FAIL" };
        println!("{tag} {} = {:.6e} {rel} {:.6e} ({})", c.name, c.value, c.threshold, c.tolerance);
    }
    for n in &r.notes {
        println!("note: {n}");
    }
    println!("{} {}", r.experiment, if r.pass { "passed" } else { "failed" });
}

fn print_sweep(s: &SweepReport) {
    println!("{:>14} {:>14} pass", s.knob, "primary");
    for row in &s.rows {
        println!("{:>14.6e} {:>14.6e} {}", row.value, row.primary, row.pass);
    }
    println!("nonincreasing: {}, nondecreasing: {}", s.nonincreasing, s.nondecreasing);
}

fn run(cli: Cli) -> Result<bool, Error> {
    let cfg = ConfigFile::load(&cli.config)?.resolve(cli.experiment, cli.seed, cli.out)?;
    match &cli.sweep {
        Some(spec) => {
            let (knob, values) =
                parse_sweep(spec).map_err(|message| Error::ConfigInvalid { field: "--sweep".into(), message })?;
            let report = experiment::sweep(&cfg, &knob, &values)?;
            print_sweep(&report);
            Ok(report.rows.iter().all(|r| r.pass))
        }
        None => {
            let report = experiment::run(&cfg)?;
            print_report(&report);
            Ok(report.pass)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
