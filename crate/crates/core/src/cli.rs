//! Command-line front end: `run`, `compare`, `params`, `selftest`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::thread;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::config::{parse_scenario, ConfigError, Mode, ScenarioConfig};
use crate::params::static_params;
use crate::report::{render, Format};
use crate::selftest::{run_suite, SuiteOutcome, SUITES};
use crate::workloads::{compare, run_experiment, single, ExperimentKind, ExperimentResult, KpiError, KpiReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_SELFTEST_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_SIMULATION: i32 = 4;
pub const EXIT_IO: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Config {
        path: PathBuf,
        #[source]
        source: ConfigError,
    },
    #[error("{scenario}: {source}")]
    Simulation {
        scenario: String,
        #[source]
        source: KpiError,
    },
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Config { .. } => EXIT_CONFIG,
            CliError::Simulation { .. } => EXIT_SIMULATION,
            CliError::Io { .. } => EXIT_IO,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Text,
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Text => Format::Text,
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    CapacityTrue,
    PaperCalibration,
}

#[derive(Debug, Parser)]
#[command(name = "geosim", version, about = "5G-NTN vs DVB-S2/RCS2 over a GEO link, in virtual time")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the scenario mode.
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    /// Directory for report files (text, CSV and JSON per experiment).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Format printed to stdout.
    #[arg(long, global = true, value_enum, default_value = "text")]
    format: FormatArg,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment (or `all`) on one scenario.
    Run {
        scenario: PathBuf,
        /// jitter | video | webpage | download | all
        experiment: String,
        out_dir: Option<PathBuf>,
    },
    /// Run experiments on two scenarios and add ratio columns.
    Compare {
        scenario_a: PathBuf,
        scenario_b: PathBuf,
        out_dir: Option<PathBuf>,
        /// jitter | video | webpage | download | all
        #[arg(long, default_value = "all")]
        experiment: String,
    },
    /// Print derived static parameters of a scenario.
    Params { scenario: PathBuf },
    /// Run the property suites.
    Selftest {
        /// Single suite letter (a-g); all when omitted.
        #[arg(long)]
        suite: Option<char>,
    },
}

struct Overrides {
    seed: Option<u64>,
    mode: Option<ModeArg>,
}

fn load(path: &Path, o: &Overrides) -> Result<ScenarioConfig, CliError> {
    let wrap = |source| CliError::Config {
        path: path.to_path_buf(),
        source,
    };
    let mut cfg = parse_scenario(path).map_err(wrap)?;
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(m) = o.mode {
        cfg.mode = match m {
            ModeArg::CapacityTrue => Mode::CapacityTrue,
            ModeArg::PaperCalibration => Mode::PaperCalibration,
        };
    }
    cfg.validate().map_err(wrap)?;
    Ok(cfg)
}

fn experiments(name: &str) -> Result<Vec<ExperimentKind>, CliError> {
    if name == "all" {
        return Ok(ExperimentKind::ALL.to_vec());
    }
    ExperimentKind::parse(name).map(|k| vec![k]).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown experiment `{name}` (expected jitter, video, webpage, download or all)"
        ))
    })
}

fn scenario_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".into())
}

fn run_all(name: &str, cfg: &ScenarioConfig, kinds: &[ExperimentKind]) -> Result<Vec<ExperimentResult>, CliError> {
    kinds
        .iter()
        .map(|&k| {
            run_experiment(name, cfg, k).map_err(|source| CliError::Simulation {
                scenario: name.to_string(),
                source,
            })
        })
        .collect()
}

fn write_file(path: &Path, body: &str) -> Result<(), CliError> {
    fs::write(path, body).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `<prefix>-<experiment>.{txt,csv,json}` for every report.
pub fn write_reports(dir: &Path, prefix: &str, reports: &[KpiReport]) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    for r in reports {
        for f in [Format::Text, Format::Csv, Format::Json] {
            let path = dir.join(format!("{prefix}-{}.{}", r.kind.name(), f.extension()));
            write_file(&path, &render(std::slice::from_ref(r), f))?;
            written.push(path);
        }
    }
    Ok(written)
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes()).map_err(|source| CliError::Io {
        path: PathBuf::from("<stdout>"),
        source,
    })
}

fn cmd_run(
    scenario: &Path,
    experiment: &str,
    out_dir: Option<&Path>,
    format: Format,
    o: &Overrides,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let kinds = experiments(experiment)?;
    let cfg = load(scenario, o)?;
    let name = scenario_name(scenario);
    let reports: Vec<KpiReport> = run_all(&name, &cfg, &kinds)?.iter().map(single).collect();
    emit(out, &render(&reports, format))?;
    if let Some(dir) = out_dir {
        write_reports(dir, &name, &reports)?;
    }
    Ok(EXIT_OK)
}

fn cmd_compare(
    a: &Path,
    b: &Path,
    experiment: &str,
    out_dir: Option<&Path>,
    format: Format,
    o: &Overrides,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let kinds = experiments(experiment)?;
    let ca = load(a, o)?;
    let cb = load(b, o)?;
    let (mut na, mut nb) = (scenario_name(a), scenario_name(b));
    if na == nb {
        na.push_str("-a");
        nb.push_str("-b");
    }
    // One independent simulation per scenario; reduction after both join.
    let (ra, rb) = thread::scope(|s| {
        let ha = s.spawn(|| run_all(&na, &ca, &kinds));
        let hb = s.spawn(|| run_all(&nb, &cb, &kinds));
        (
            ha.join().expect("scenario thread panicked"),
            hb.join().expect("scenario thread panicked"),
        )
    });
    let (ra, rb) = (ra?, rb?);
    let reports = ra
        .iter()
        .zip(&rb)
        .map(|(x, y)| {
            compare(x, y).map_err(|source| CliError::Simulation {
                scenario: format!("{na} vs {nb}"),
                source,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    emit(out, &render(&reports, format))?;
    if let Some(dir) = out_dir {
        write_reports(dir, "compare", &reports)?;
    }
    Ok(EXIT_OK)
}

fn cmd_params(scenario: &Path, o: &Overrides, out: &mut dyn Write) -> Result<i32, CliError> {
    let cfg = load(scenario, o)?;
    emit(out, &static_params(&cfg).render())?;
    Ok(EXIT_OK)
}

fn cmd_selftest(suite: Option<char>, out: &mut dyn Write) -> Result<i32, CliError> {
    let ids: Vec<char> = match suite {
        Some(c) => {
            let c = c.to_ascii_lowercase();
            if !SUITES.iter().any(|(s, _)| *s == c) {
                return Err(CliError::Usage(format!("unknown suite `{c}` (expected a-g)")));
            }
            vec![c]
        }
        None => SUITES.iter().map(|(c, _)| *c).collect(),
    };
    let mut failed = 0;
    for id in ids {
        let r: SuiteOutcome = run_suite(id).expect("listed suite");
        failed += usize::from(!r.passed);
        emit(out, &format!("{}\n", r.line()))?;
    }
    Ok(if failed == 0 { EXIT_OK } else { EXIT_SELFTEST_FAILED })
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code. Diagnostics go to `err`.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            if code == EXIT_OK {
                let _ = out.write_all(rendered.as_bytes());
            } else {
                let _ = err.write_all(rendered.as_bytes());
            }
            return code;
        }
    };
    let o = Overrides {
        seed: cli.seed,
        mode: cli.mode,
    };
    let format = Format::from(cli.format);
    let result = match &cli.command {
        Command::Run {
            scenario,
            experiment,
            out_dir,
        } => {
            let dir = out_dir.as_deref().or(cli.out.as_deref());
            cmd_run(scenario, experiment, dir, format, &o, out)
        }
        Command::Compare {
            scenario_a,
            scenario_b,
            out_dir,
            experiment,
        } => {
            let dir = out_dir.as_deref().or(cli.out.as_deref());
            cmd_compare(scenario_a, scenario_b, experiment, dir, format, &o, out)
        }
        Command::Params { scenario } => cmd_params(scenario, &o, out),
        Command::Selftest { suite } => cmd_selftest(*suite, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let mut msg = format!("error: {e}");
            if let CliError::Config { source, .. } = &e {
                if let Some(k) = source.key() {
                    msg.push_str(&format!(" [key {k}]"));
                }
            }
            let _ = writeln!(err, "{msg}");
            e.exit_code()
        }
    }
}
