use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dlperf::reference::{bundled, load_reference, merge_records};
use dlperf::render::{self, Format};
use dlperf::scenario::{run_estimate, run_sweep, run_validate, ScenarioConfig, SweepDimension};
use dlperf::sim::events_to_csv;
use dlperf::Error;

/// Performance estimates for data-parallel synchronous SGD training.
#[derive(Parser)]
#[command(name = "dlperf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Table,
    Csv,
}

impl From<OutputFormat> for Format {
    fn from(f: OutputFormat) -> Self {
        match f {
            OutputFormat::Table => Format::Table,
            OutputFormat::Csv => Format::Csv,
        }
    }
}

#[derive(Args)]
struct Common {
    #[arg(long, value_enum, default_value = "table")]
    format: OutputFormat,
    /// Unused. Every computation is deterministic; accepted so scripted
    /// runs can pass one uniformly.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form iteration time, speedup and bottleneck ranking per scale.
    Estimate {
        #[arg(long)]
        config: PathBuf,
        /// GPU counts, comma separated; defaults to the config's scale list.
        #[arg(long, value_delimiter = ',')]
        scale: Option<Vec<u32>>,
        #[command(flatten)]
        common: Common,
    },
    /// Event-driven schedule of one iteration plus a steady-state run.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// GPU count; defaults to the last entry of the config's scale list.
        #[arg(long)]
        scale: Option<u32>,
        /// Write the single-iteration event log as CSV.
        #[arg(long)]
        trace_out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Vary one input over a list of values.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// gpus, b_net (GiB/s), batch (per-GPU samples) or efficiency.
        #[arg(long)]
        dimension: SweepDimension,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// GPU count held fixed for non-gpus dimensions.
        #[arg(long)]
        scale: Option<u32>,
        #[command(flatten)]
        common: Common,
    },
    /// Compare predictions with reference measurements.
    Validate {
        /// Scenario config or directory of *.toml configs; repeatable.
        #[arg(long)]
        config: Vec<PathBuf>,
        /// Reference CSV; repeatable. Defaults to the bundled data.
        #[arg(long)]
        reference: Vec<PathBuf>,
        /// Exit with status 2 when any relative error exceeds this ratio.
        #[arg(long)]
        max_rel_error: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
}

enum Failure {
    Error(Error),
    Usage(String),
    Threshold { max: f64, limit: f64 },
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

impl Failure {
    fn code(&self) -> &'static str {
        match self {
            Failure::Usage(_) => "usage",
            Failure::Threshold { .. } => "threshold",
            Failure::Error(e) => match e {
                Error::Config { .. } => "config",
                Error::Io { .. } => "io",
                Error::Reference { .. } => "reference",
                Error::UnresolvedScenario(_) => "unresolved-scenario",
                Error::IrregularOverlap => "irregular-overlap",
                Error::MissingLayers(_) | Error::MissingGradientSize { .. } => "missing-layers",
                Error::SimulationInvariant(_) | Error::MalformedTrace(_) => "invariant",
                _ => "invalid-input",
            },
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            Failure::Threshold { .. } => 2,
            Failure::Error(Error::SimulationInvariant(_) | Error::MalformedTrace(_)) => 3,
            _ => 1,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Usage(m) => m.clone(),
            Failure::Threshold { max, limit } => {
                format!("max relative error {max} exceeds threshold {limit}")
            }
            Failure::Error(e) => e.to_string().replace('\n', " "),
        }
    }

    fn help(&self) -> &'static str {
        match self {
            Failure::Usage(_) => "check the arguments; run `dlperf --help` for the full syntax",
            Failure::Threshold { .. } => "at least one prediction is further from its reference than allowed",
            Failure::Error(e) => match e {
                Error::Config { .. } => "fix the scenario file; the configs/ directory has working examples",
                Error::Io { .. } => "the file could not be read or written",
                Error::Reference { .. } => "the reference CSV does not follow its schema",
                Error::UnresolvedScenario(_) => "the reference data has no record for this framework, network and scale",
                Error::IrregularOverlap => "use `dlperf simulate`, which handles any overlap pattern",
                Error::MissingLayers(_) | Error::MissingGradientSize { .. } => {
                    "add [[layers]] entries (with grad_mib for modeled comm) to the config"
                }
                Error::SimulationInvariant(_) | Error::MalformedTrace(_) => {
                    "an internal consistency check failed; this is a bug"
                }
                _ => "an input value is outside its valid range",
            },
        }
    }
}

fn config_paths(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, Failure> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| Error::Io {
                    path: p.clone(),
                    source: e,
                })?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "toml"))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| {
        Failure::Error(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Estimate { config, scale, common } => {
            let cfg = ScenarioConfig::load(&config)?;
            let estimates = run_estimate(&cfg, scale.as_deref())?;
            print!("{}", render::estimate(&cfg.name, &estimates, common.format.into()));
        }
        Command::Simulate {
            config,
            scale,
            trace_out,
            common,
        } => {
            let cfg = ScenarioConfig::load(&config)?;
            let g = scale.unwrap_or_else(|| *cfg.scale_list().last().expect("non-empty scale list"));
            let sim = cfg.simulate_at(g)?;
            if let Some(path) = trace_out {
                write_file(&path, &events_to_csv(&sim.trace.events))?;
            }
            print!("{}", render::simulation(&cfg.name, &sim, common.format.into()));
        }
        Command::Sweep {
            config,
            dimension,
            values,
            scale,
            common,
        } => {
            let cfg = ScenarioConfig::load(&config)?;
            let rows = run_sweep(&cfg, dimension, &values, scale)?;
            print!("{}", render::sweep(dimension, &rows, common.format.into()));
        }
        Command::Validate {
            config,
            reference,
            max_rel_error,
            common,
        } => {
            if let Some(t) = max_rel_error {
                if !(t.is_finite() && t >= 0.0) {
                    return Err(Failure::Usage(format!("--max-rel-error must be a non-negative ratio, got {t}")));
                }
            }
            let records = if reference.is_empty() {
                bundled()
            } else {
                merge_records(reference.iter().map(load_reference).collect::<Result<Vec<_>, _>>()?)
            };
            let configs = config_paths(&config)?
                .iter()
                .map(ScenarioConfig::load)
                .collect::<Result<Vec<_>, _>>()?;
            let report = run_validate(&records, &configs)?;
            print!("{}", render::validation(&report, max_rel_error, common.format.into()));
            if let (Some(limit), Some(max)) = (max_rel_error, report.max_rel_error()) {
                if max > limit {
                    return Err(Failure::Threshold { max, limit });
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            let first = first.strip_prefix("error: ").unwrap_or(first);
            eprintln!("error[usage]: {first}");
            eprintln!("help: check the arguments; run `dlperf --help` for the full syntax");
            return ExitCode::from(1);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error[{}]: {}", f.code(), f.message());
            eprintln!("help: {}", f.help());
            ExitCode::from(f.exit_code())
        }
    }
}
