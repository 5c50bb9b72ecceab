//! `setrap`: run shape studies from a JSON configuration.
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 infeasible scenario,
//! 4 I/O failure.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use setrap_core::config::{RunConfig, Scenario};
use setrap_core::geometry::ShapeKind;
use setrap_core::io::{self, Manifest};
use setrap_core::scenarios::{
    characterize_on, run_report, run_shims_on, run_transport_on, Characterization, ScenarioConfig, ShimResult,
    TransportResult,
};
use setrap_core::solver::ShimDirection;
use setrap_core::units::MICRON;
use setrap_core::Error;

#[derive(Parser)]
#[command(name = "setrap", version, about = "Surface-electrode trap shape studies")]
struct Cli {
    /// JSON configuration (or a manifest from an earlier run); defaults apply when absent
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Restrict to these shapes (repeatable)
    #[arg(long = "shape", global = true, value_parser = parse_shape)]
    shapes: Vec<ShapeKind>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for independent runs (default: all cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Shim directions (repeatable)
    #[arg(long = "direction", global = true, value_parser = parse_direction)]
    directions: Vec<ShimDirection>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Check the configuration and every layout it describes
    Validate,
    /// Unit-voltage potential and derivatives along the trap axis
    Characterize,
    /// Transport waveforms, per-step verification and trap depth
    Transport,
    /// Shim voltages over one electrode width
    Shims,
    /// Transport and shims for every shape, plus the summary table
    Report,
}

impl Command {
    fn scenario(self) -> Option<Scenario> {
        match self {
            Command::Validate => None,
            Command::Characterize => Some(Scenario::Characterize),
            Command::Transport => Some(Scenario::Transport),
            Command::Shims => Some(Scenario::Shims),
            Command::Report => Some(Scenario::Report),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Characterize => "characterize",
            Command::Transport => "transport",
            Command::Shims => "shims",
            Command::Report => "report",
        }
    }
}

fn parse_shape(s: &str) -> Result<ShapeKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_direction(s: &str) -> Result<ShimDirection, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn io(path: &Path, e: std::io::Error) -> Self {
        Self {
            code: 4,
            message: format!("{}: {e}", path.display()),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InfeasibleStep { .. } => 3,
            Error::Domain(_) | Error::Numeric(_) => 1,
            _ => 2,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
            RunConfig::from_json(&text).map_err(|e| Failure {
                code: 2,
                message: format!("{}: {e}", path.display()),
            })?
        }
        None => RunConfig::default(),
    };
    if !cli.shapes.is_empty() {
        config.shapes = cli.shapes.clone();
    }
    if !cli.directions.is_empty() {
        config.shims.directions = cli.directions.clone();
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.to_string_lossy().into_owned();
    }
    if let Some(s) = cli.command.scenario() {
        config.scenario = s;
    }
    Ok(config)
}

/// Collects output files and writes them with the manifest.
struct Outputs {
    dir: PathBuf,
    manifest: Manifest,
    files: Vec<(String, String)>,
}

impl Outputs {
    fn new(command: Command, config: &RunConfig, warnings: Vec<String>) -> Self {
        let mut manifest = Manifest::new(command.name(), config.clone());
        manifest.warnings = warnings;
        Self {
            dir: PathBuf::from(&config.output_dir),
            manifest,
            files: Vec::new(),
        }
    }

    fn add(&mut self, name: String, description: impl Into<String>, contents: String) {
        self.manifest.outputs.insert(name.clone(), description.into());
        self.files.push((name, contents));
    }

    fn write(self) -> Result<(), Failure> {
        fs::create_dir_all(&self.dir).map_err(|e| Failure::io(&self.dir, e))?;
        for (name, contents) in &self.files {
            let path = self.dir.join(name);
            fs::write(&path, contents).map_err(|e| Failure::io(&path, e))?;
        }
        let path = self.dir.join("manifest.json");
        fs::write(&path, self.manifest.to_json() + "\n").map_err(|e| Failure::io(&path, e))
    }
}

fn validate(config: &RunConfig) -> Result<(), Failure> {
    for kind in &config.shapes {
        let layout = config.layout(*kind)?;
        let problems = layout.check_invariants();
        if !problems.is_empty() {
            return Err(Failure {
                code: 2,
                message: format!("{kind} layout: {}", problems.join("; ")),
            });
        }
        let shape = layout.shape.expect("catalog layout");
        println!(
            "{kind}: {} electrodes, w_ax {:.3} um, area {:.2} um^2",
            layout.dc_electrodes.len(),
            shape.axial_width / MICRON,
            layout.dc_electrodes[0].area() / (MICRON * MICRON),
        );
    }
    Ok(())
}

fn characterize(config: &RunConfig, sc: &ScenarioConfig, out: &mut Outputs) -> Result<(), Failure> {
    let mut shapes = config.shapes.clone();
    if !shapes.contains(&ShapeKind::Rect) {
        // reference curves
        shapes.push(ShapeKind::Rect);
    }
    let results: Vec<Characterization> = shapes
        .par_iter()
        .map(|&k| characterize_on(&config.layout(k)?, sc))
        .collect::<Result<_, Error>>()?;
    for c in &results {
        out.add(
            format!("characterize_{}.csv", c.shape),
            format!("unit-voltage sweep of {} at z = h_ion", c.electrode_id),
            io::characterization_csv(c),
        );
        println!("{}: {} held at -1 V, {} samples", c.shape, c.electrode_id, c.curves[0].values.len());
    }
    Ok(())
}

fn transports(config: &RunConfig, sc: &ScenarioConfig, out: &mut Outputs) -> Result<Vec<TransportResult>, Failure> {
    let results: Vec<TransportResult> = config
        .shapes
        .par_iter()
        .map(|&k| config.layout(k).and_then(|l| run_transport_on(&l, sc)).map_err(|e| (k, e)))
        .collect::<Result<_, _>>()
        .map_err(|(k, e)| {
            let mut f = Failure::from(e);
            f.message = format!("{k} transport: {}", f.message);
            f
        })?;
    for t in &results {
        let k = t.shape;
        out.add(format!("transport_{k}.csv"), "voltage waveform (V)", io::transport_csv(t));
        out.add(
            format!("transport_{k}_steps.csv"),
            "per-step verification and trap depth",
            io::transport_diagnostics_csv(t),
        );
        out.add(
            format!("layout_{k}.json"),
            "electrode layout",
            io::layout_to_json(&config.layout(k)?),
        );
        println!(
            "{k}: max|V| {:.4} V, depth at x0 = 0 {:.3} meV, minimum {:.3} meV",
            t.max_abs_voltage,
            1e3 * t.center_depth.depth,
            1e3 * t.min_depth
        );
    }
    Ok(results)
}

fn shims(config: &RunConfig, sc: &ScenarioConfig, out: &mut Outputs) -> Result<Vec<ShimResult>, Failure> {
    let jobs: Vec<(ShapeKind, ShimDirection)> = config
        .shapes
        .iter()
        .flat_map(|&k| config.shims.directions.iter().map(move |&d| (k, d)))
        .collect();
    let results: Vec<ShimResult> = jobs
        .par_iter()
        .map(|&(k, d)| run_shims_on(&config.layout(k)?, d, sc))
        .collect::<Result<_, Error>>()?;
    for r in &results {
        out.add(
            format!("shims_{}_{}.csv", r.shape, r.direction),
            format!("{}-shim voltages, status {}", r.direction, r.status),
            io::shim_csv(r),
        );
        let v = r
            .max_abs_voltage
            .map_or_else(|| "-".to_string(), |v| format!("{v:.4} V"));
        println!("{} {}-shim: {} max|V| {v}", r.shape, r.direction, r.status);
    }
    out.add("shims_summary.csv".into(), "status of every shim run", io::shim_summary_csv(&results));
    Ok(results)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let config = load_config(cli)?;
    let warnings = config.validate()?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let sc = config.scenario_config()?;
    sc.validate()?;
    if let Command::Validate = cli.command {
        validate(&config)?;
        println!("configuration is valid");
        return Ok(());
    }
    let mut out = Outputs::new(cli.command, &config, warnings);
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(Failure {
                code: 2,
                message: "--jobs must be at least 1".into(),
            });
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| Failure {
        code: 1,
        message: e.to_string(),
    })?;
    pool.install(|| -> Result<(), Failure> {
        match cli.command {
            Command::Validate => unreachable!("handled above"),
            Command::Characterize => characterize(&config, &sc, &mut out),
            Command::Transport => transports(&config, &sc, &mut out).map(drop),
            Command::Shims => shims(&config, &sc, &mut out).map(drop),
            Command::Report => {
                let t = transports(&config, &sc, &mut out)?;
                let s = shims(&config, &sc, &mut out)?;
                let report = run_report(&t, &s);
                let text = report.to_text();
                println!("\n{text}");
                out.add("report.txt".into(), "summary table", text);
                out.add("report.csv".into(), "summary table", io::report_csv(&report));
                out.add("report.json".into(), "summary table", io::to_json(&report) + "\n");
                Ok(())
            }
        }
    })?;
    out.write()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
