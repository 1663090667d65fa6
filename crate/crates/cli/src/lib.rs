pub mod commands;
pub mod report;
pub mod suite;
#[cfg(test)]
mod tests;

use std::path::PathBuf;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::Parser;
use thiserror::Error;

pub use report::ExperimentReport;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    /// An invariant or acceptance check failed.
    #[error("assertion failed: {0}")]
    Assertion(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Assertion(_) => 2,
            CliError::Usage(_) | CliError::Runtime(_) => 1,
        }
    }
}

impl From<spherical_ld::Error> for CliError {
    fn from(e: spherical_ld::Error) -> Self {
        let msg = e.to_string();
        // Experiments report per-sample theorem violations as range errors.
        if msg.contains("violated") || msg.contains("identity failed") {
            CliError::Assertion(msg)
        } else {
            CliError::Runtime(msg)
        }
    }
}

/// A finished command: its report and any failed checks.
pub struct Outcome {
    pub report: ExperimentReport,
    pub failures: Vec<String>,
}

/// Appends `--key value` for each `key=value` line of the `--config` file
/// whose key is absent from the command line.
pub fn merge_config(args: Vec<String>) -> Result<Vec<String>, CliError> {
    let mut path = None;
    for (i, a) in args.iter().enumerate() {
        if a == "--config" {
            path = Some(
                args.get(i + 1)
                    .ok_or_else(|| CliError::Usage("--config needs a file".into()))?
                    .clone(),
            );
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else { return Ok(args) };
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Usage(format!("--config {path}: {e}")))?;
    let mut out = args.clone();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--config {path}: line {} is not key=value", ln + 1)))?;
        let flag = format!("--{}", k.trim());
        let present = args.iter().any(|a| *a == flag || a.starts_with(&format!("{flag}=")));
        if !present {
            out.push(flag);
            out.push(v.trim().to_string());
        }
    }
    Ok(out)
}

/// Parses and runs a command line; the first element is the program name.
/// Reports are written under the output directory.
pub fn run(args: Vec<String>) -> Result<Outcome, CliError> {
    let args = merge_config(args)?;
    let cli = commands::Cli::try_parse_from(&args).map_err(|e| CliError::Usage(e.to_string()))?;
    run_parsed(cli)
}

pub fn run_parsed(cli: commands::Cli) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let threads = cli.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let out_dir = PathBuf::from(&cli.out_dir);
    std::fs::create_dir_all(&out_dir).map_err(|e| CliError::Runtime(format!("{}: {e}", out_dir.display())))?;
    let mut outcome = pool.install(|| commands::dispatch(&cli, &out_dir))?;
    outcome.report.wall_time_s = start.elapsed().as_secs_f64();
    if let Some(t) = cli.threads {
        outcome.report.param("threads", t);
    }
    let file = out_dir.join(format!("{}.json", outcome.report.command.replace(' ', "_")));
    std::fs::write(&file, outcome.report.to_json()).map_err(|e| CliError::Runtime(format!("{}: {e}", file.display())))?;
    Ok(outcome)
}

/// Process-level result of a command line.
pub struct Exit {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Runs a command line the way the binary does: help and version exit 0,
/// usage errors 1, failed checks 2. The report goes to stdout.
pub fn execute(args: Vec<String>) -> Exit {
    let fail = |e: CliError| Exit {
        code: e.exit_code(),
        stdout: String::new(),
        stderr: format!("error: {e}\n"),
    };
    let args = match merge_config(args) {
        Ok(a) => a,
        Err(e) => return fail(e),
    };
    let cli = match commands::Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => Exit {
                    code: 0,
                    stdout: text,
                    stderr: String::new(),
                },
                _ => Exit {
                    code: 1,
                    stdout: String::new(),
                    stderr: text,
                },
            };
        }
    };
    match run_parsed(cli) {
        Ok(o) => {
            let stdout = format!("{}\n", o.report.to_json());
            if o.failures.is_empty() {
                Exit {
                    code: 0,
                    stdout,
                    stderr: String::new(),
                }
            } else {
                let e = CliError::Assertion(o.failures.join(", "));
                Exit {
                    code: e.exit_code(),
                    stdout,
                    stderr: format!("error: {e}\n"),
                }
            }
        }
        Err(e) => fail(e),
    }
}
