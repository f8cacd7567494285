use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use nehari_core::scenario::{env_name, Document};
use nehari_core::{emit, run_scenario, Command, Format, LabError, Scenario, Status};

const EXIT_ASSERTION: u8 = 1;
const EXIT_INPUT: u8 = 2;

/// Runs a scenario of the coupled Hardy-critical lab and writes its records.
///
/// Settings are layered: scenario file, then `NEHARI_*` environment variables
/// (`grid.points` is `NEHARI_GRID_POINTS`), then command-line flags.
#[derive(Parser, Debug)]
#[command(name = "nehari-lab", version, about, long_about = None)]
struct Args {
    /// constants | terracini | nubar | ground | mp | classify | regime | verify | sweep
    command: String,

    /// Scenario file (TOML with dotted keys)
    #[arg(long)]
    scenario: PathBuf,

    /// Output directory
    #[arg(long)]
    out: PathBuf,

    /// jsonlines | csv | plotdata
    #[arg(long, default_value = "jsonlines")]
    format: String,

    /// Grid points, overriding `grid.points`
    #[arg(long = "grid.points", value_name = "M")]
    grid_points: Option<usize>,

    /// Seed for randomized sampling
    #[arg(long)]
    seed: Option<u64>,
}

fn load(args: &Args) -> Result<Scenario, LabError> {
    let text = std::fs::read_to_string(&args.scenario)
        .map_err(|source| LabError::Io { path: args.scenario.clone(), source })?;
    let mut doc = Document::parse(&text)?;
    doc.apply_env(|key| std::env::var(key).ok())?;
    let command: Command = args.command.parse()?;
    doc.set_text("command", command.name())?;
    if let Some(m) = args.grid_points {
        doc.set_text("grid.points", &m.to_string())?;
    }
    if let Some(k) = args.seed {
        doc.set_text("seed", &k.to_string())?;
    }
    Scenario::from_document(&doc)
}

fn execute(args: &Args) -> Result<bool, LabError> {
    let format: Format = args.format.parse()?;
    let scenario = load(args)?;
    let (records, timings) = run_scenario(&scenario)?;
    let summary = emit(&records, &timings, format, &args.out)?;
    for r in &records {
        let status = match r.status {
            Status::Pass => "pass",
            Status::Fail => "FAIL",
            Status::Error => "ERROR",
        };
        println!("{} {} {status}", r.id, r.command);
        if let Some(e) = &r.error {
            println!("  error: {e}");
        }
        for a in r.assertions.iter().filter(|a| !a.passed) {
            let tag = if a.resolution_limited { " (resolution-limited)" } else { "" };
            println!("  failed {}: observed {:e}, {:?}{tag}", a.name, a.observed, a.check);
        }
    }
    if let Some(notice) = &summary.notice {
        println!("{notice}");
    }
    for f in &summary.files {
        println!("wrote {}", f.display());
    }
    Ok(records.iter().all(|r| r.passed()))
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_ASSERTION),
        Err(e) => {
            eprintln!("error: {e}");
            if let LabError::Parse { key, .. } = &e {
                if key != "<document>" && key != "format" {
                    eprintln!("hint: `{key}` can also be set with {}", env_name(key));
                }
            }
            ExitCode::from(EXIT_INPUT)
        }
    }
}
