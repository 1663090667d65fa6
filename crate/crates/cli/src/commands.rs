use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use rug::{Float, Rational};

use spherical_ld::bridge::{action, estimate_field, euler_residual, f_bound_check};
use spherical_ld::free_prob::{
    cauchy_transform, free_convolution_proxy, free_semicircle_density, log_energy, r_transform_series,
    semicircle_subordination,
};
use spherical_ld::hciz::{
    hciz_exact, hciz_mc, hciz_perm_sum, limit_i_estimate, log_schur_exp, log_spherical_integral,
    rank_one_asymptotic_check, spectrum, HcizResult, LimitMethod,
};
use spherical_ld::measure::wasserstein;
use spherical_ld::partition::{kostka, lr_coefficient, schur_combinatorial};
use spherical_ld::rate::{rate_sup, Evaluator, RateConfig, References};
use spherical_ld::rmt::{
    bridge_simulate, diag_conjugation_experiment, horn_sum_experiment, majorization_gap, tilted_diagonal_profile,
    ChainConfig, SpectralExperimentBatch,
};
use spherical_ld::stats::median;
use spherical_ld::{Partition, QuantileMeasure};

use crate::report::ExperimentReport;
use crate::suite::{run_suite, Scale};
use crate::{CliError, Outcome};

#[derive(Debug, Parser)]
#[command(name = "sphld", version, about = "Spherical integrals, symmetric functions and spectral large deviations")]
pub struct Cli {
    /// Directory for reports and CSV outputs.
    #[arg(long, global = true, env = "SPHLD_OUT_DIR", default_value = "out")]
    pub out_dir: String,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// File of `key=value` lines used for flags not given on the command line.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Spherical integral evaluation.
    Hciz(HcizArgs),
    /// Schur polynomial at a point.
    Schur(SchurArgs),
    /// Kostka number.
    Kostka(PairArgs),
    /// Littlewood-Richardson coefficient.
    Lr(LrArgs),
    /// Random-matrix experiments.
    Experiment(ExperimentArgs),
    /// Free probability transforms.
    Freeprob(FreeprobArgs),
    /// Rate functions as suprema over test measures.
    Rate(RateArgs),
    /// Bridge simulation and hydrodynamic diagnostics.
    Bridge(BridgeArgs),
    /// Acceptance suite.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum HcizMode {
    Exact,
    Perm,
    Mc,
    Limit,
    Rankone,
}

#[derive(Debug, Args)]
pub struct HcizArgs {
    #[arg(value_enum)]
    pub mode: HcizMode,
    /// Comma list or measure CSV.
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub b: Option<String>,
    /// Matrix size; a single value is repeated, a measure is expanded.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 2)]
    pub beta: u8,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 128)]
    pub bits: u32,
    #[arg(long, default_value = "8,16,32")]
    pub n_schedule: String,
    #[arg(long, default_value_t = 0.3)]
    pub theta: f64,
    #[arg(long, default_value_t = 0.1)]
    pub tau: f64,
}

#[derive(Debug, Args)]
pub struct SchurArgs {
    #[arg(long)]
    pub lambda: String,
    /// Rational point, e.g. `1/2,3,2/3`.
    #[arg(long, allow_hyphen_values = true)]
    pub x: Option<String>,
    /// Evaluate at `x = e^y` through the spherical integral.
    #[arg(long, allow_hyphen_values = true)]
    pub y: Option<String>,
    #[arg(long, default_value_t = 256)]
    pub bits: u32,
}

#[derive(Debug, Args)]
pub struct PairArgs {
    #[arg(long)]
    pub lambda: String,
    #[arg(long)]
    pub eta: String,
}

#[derive(Debug, Args)]
pub struct LrArgs {
    #[arg(long)]
    pub lambda: String,
    #[arg(long)]
    pub eta: String,
    #[arg(long)]
    pub kappa: String,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ExperimentKind {
    Diag,
    Horn,
    Bridge,
    TiltedProfile,
}

#[derive(Debug, Args)]
pub struct ChainArgs {
    #[arg(long, default_value_t = 100_000)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 200_000)]
    pub steps: usize,
    #[arg(long, default_value_t = 10)]
    pub thin: usize,
}

impl ChainArgs {
    fn config(&self) -> ChainConfig {
        ChainConfig {
            burn_in: self.burn_in,
            steps: self.steps,
            thin: self.thin.max(1),
            ..ChainConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(value_enum)]
    pub kind: ExperimentKind,
    #[arg(long, allow_hyphen_values = true)]
    pub spectrum_a: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub spectrum_b: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub spectrum_y: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 2)]
    pub beta: u8,
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long, default_value = "0,0.25,0.5,0.75,1")]
    pub t_grid: String,
    #[command(flatten)]
    pub chain: ChainArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FreeprobOp {
    Cauchy,
    Subordinate,
    Rtransform,
    Convolve,
    Energy,
}

#[derive(Debug, Args)]
pub struct FreeprobArgs {
    #[arg(value_enum)]
    pub op: FreeprobOp,
    #[arg(long, allow_hyphen_values = true)]
    pub mu: String,
    /// Second measure for `convolve`; the semicircle of variance `--s` otherwise.
    #[arg(long, allow_hyphen_values = true)]
    pub mu_b: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    pub s: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub z_re: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub z_im: f64,
    #[arg(long, default_value_t = 8)]
    pub order: usize,
    #[arg(long, default_value_t = -4.0, allow_hyphen_values = true)]
    pub x_min: f64,
    #[arg(long, default_value_t = 4.0, allow_hyphen_values = true)]
    pub x_max: f64,
    #[arg(long, default_value_t = 201)]
    pub points: usize,
    #[arg(long, default_value_t = 256)]
    pub n: usize,
    #[arg(long, default_value_t = 4)]
    pub samples: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum RateKind {
    D,
    Ab,
    K,
    Lr,
}

#[derive(Debug, Args)]
pub struct RateArgs {
    #[arg(value_enum)]
    pub kind: RateKind,
    #[arg(long, allow_hyphen_values = true)]
    pub mu: String,
    #[arg(long, allow_hyphen_values = true)]
    pub ref_a: String,
    #[arg(long, allow_hyphen_values = true)]
    pub ref_b: Option<String>,
    #[arg(long, default_value_t = 32)]
    pub nu_grid: usize,
    #[arg(long, default_value = "8,16,32")]
    pub n_schedule: String,
    #[arg(long, default_value_t = 40)]
    pub max_iter: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum BridgeOp {
    Simulate,
    Field,
    Residual,
    Action,
}

#[derive(Debug, Args)]
pub struct BridgeArgs {
    #[arg(value_enum)]
    pub op: BridgeOp,
    /// Batch CSV written by `bridge simulate` or `experiment bridge`.
    #[arg(long)]
    pub batch: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    pub spectrum_a: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub spectrum_b: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 2)]
    pub beta: u8,
    #[arg(long, default_value_t = 8)]
    pub samples: usize,
    #[arg(long, default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1")]
    pub t_grid: String,
    #[arg(long, default_value_t = -1.5, allow_hyphen_values = true)]
    pub x_min: f64,
    #[arg(long, default_value_t = 1.5, allow_hyphen_values = true)]
    pub x_max: f64,
    #[arg(long, default_value_t = 121)]
    pub x_points: usize,
    /// Kernel bandwidth factor.
    #[arg(long, default_value_t = 1.0)]
    pub bandwidth: f64,
    /// Support radius `K` of the endpoints for the `|f|` bound.
    #[arg(long, default_value_t = 0.0)]
    pub support: f64,
    #[command(flatten)]
    pub chain: ChainArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SuiteKind {
    Quick,
    Full,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value = "quick")]
    pub suite: SuiteKind,
    /// Subset of criteria, e.g. `1,4,9`.
    #[arg(long)]
    pub criteria: Option<String>,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn parse_list<T: std::str::FromStr>(flag: &str, s: &str) -> Result<Vec<T>, CliError> {
    s.split(',')
        .map(|p| p.trim().parse::<T>().map_err(|_| usage(format!("{flag}: cannot parse `{p}`"))))
        .collect()
}

fn parse_partition(flag: &str, s: &str) -> Result<Partition, CliError> {
    s.parse().map_err(|e| usage(format!("{flag}: {e}")))
}

/// A comma list of values or the path of a measure CSV.
pub fn parse_measure(flag: &str, s: &str) -> Result<QuantileMeasure, CliError> {
    let p = Path::new(s);
    if p.is_file() {
        return QuantileMeasure::read_csv(p).map_err(|e| usage(format!("{flag}: {e}")));
    }
    QuantileMeasure::from_unsorted(parse_list(flag, s)?).map_err(|e| usage(format!("{flag}: {e}")))
}

/// Spectrum of size `n`: a single value is repeated, a list of length `n` is
/// used as is, anything else is expanded by cell averages of its quantiles.
pub fn parse_spectrum(flag: &str, s: &str, n: Option<usize>) -> Result<Vec<f64>, CliError> {
    let mu = parse_measure(flag, s)?;
    let n = n.unwrap_or(mu.len());
    if n == 0 {
        return Err(usage("--n must be positive"));
    }
    if mu.len() == n {
        Ok(mu.into_values())
    } else if mu.len() == 1 {
        Ok(vec![mu.values()[0]; n])
    } else {
        Ok(spectrum(&mu, n))
    }
}

fn required<'a>(flag: &str, v: &'a Option<String>) -> Result<&'a str, CliError> {
    v.as_deref().ok_or_else(|| usage(format!("{flag} is required")))
}

fn parse_rational(flag: &str, s: &str) -> Result<Rational, CliError> {
    let t = s.trim();
    if let Ok(r) = t.parse::<Rational>() {
        return Ok(r);
    }
    let f: f64 = t.parse().map_err(|_| usage(format!("{flag}: cannot parse `{t}`")))?;
    Rational::from_f64(f).ok_or_else(|| usage(format!("{flag}: `{t}` is not finite")))
}

fn grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>, CliError> {
    if n < 2 || hi <= lo {
        return Err(usage("grid needs at least two points on a nonempty interval"));
    }
    Ok((0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect())
}

fn write_measure(report: &mut ExperimentReport, out: &Path, name: &str, mu: &QuantileMeasure) -> Result<(), CliError> {
    let path = out.join(format!("{name}.csv"));
    mu.write_csv(&path)?;
    report.output(name, &path)
}

fn hciz_metrics(report: &mut ExperimentReport, r: &HcizResult) {
    report
        .param("method", format!("{:?}", r.method))
        .metric("log_value", r.log_f64())
        .metric("rate", r.rate())
        .metric("n", r.n as f64)
        .metric("beta", r.beta as f64)
        .metric("precision_bits", r.precision_bits as f64);
    if let Some(se) = r.stderr {
        report.metric("stderr", se);
    }
}

pub fn dispatch(cli: &Cli, out: &Path) -> Result<Outcome, CliError> {
    let seed = cli.seed;
    let mut failures = Vec::new();
    let report = match &cli.command {
        Command::Hciz(a) => hciz(a, seed)?,
        Command::Schur(a) => schur(a, seed)?,
        Command::Kostka(a) => {
            let lambda = parse_partition("--lambda", &a.lambda)?;
            let eta = parse_partition("--eta", &a.eta)?;
            let k = kostka(&lambda, &eta);
            let mut r = ExperimentReport::new("kostka", seed);
            r.param("lambda", &a.lambda).param("eta", &a.eta).param("kostka_exact", &k);
            r.metric("kostka", k.to_f64());
            r
        }
        Command::Lr(a) => {
            let lambda = parse_partition("--lambda", &a.lambda)?;
            let eta = parse_partition("--eta", &a.eta)?;
            let kappa = parse_partition("--kappa", &a.kappa)?;
            let c = lr_coefficient(&lambda, &eta, &kappa);
            let mut r = ExperimentReport::new("lr", seed);
            r.param("lambda", &a.lambda)
                .param("eta", &a.eta)
                .param("kappa", &a.kappa)
                .param("lr_exact", &c);
            r.metric("lr", c.to_f64());
            r
        }
        Command::Experiment(a) => experiment(a, seed, out)?,
        Command::Freeprob(a) => freeprob(a, seed, out)?,
        Command::Rate(a) => rate(a, seed, out)?,
        Command::Bridge(a) => bridge(a, seed, out)?,
        Command::Verify(a) => {
            let (r, f) = verify(a, seed)?;
            failures = f;
            r
        }
    };
    Ok(Outcome { report, failures })
}

fn hciz(a: &HcizArgs, seed: u64) -> Result<ExperimentReport, CliError> {
    let name = format!("hciz {:?}", a.mode).to_lowercase();
    let mut report = ExperimentReport::new(&name, seed);
    report.param("beta", a.beta).param("bits", a.bits);
    match a.mode {
        HcizMode::Exact | HcizMode::Perm | HcizMode::Mc => {
            let sa = parse_spectrum("--a", required("--a", &a.a)?, a.n)?;
            let sb = parse_spectrum("--b", required("--b", &a.b)?, Some(a.n.unwrap_or(sa.len())))?;
            report.param("a", format!("{sa:?}")).param("b", format!("{sb:?}"));
            let r = match a.mode {
                HcizMode::Exact => {
                    if a.beta != 2 {
                        return Err(usage("exact evaluation needs --beta 2"));
                    }
                    if sa.len() > 1 && sa.windows(2).all(|w| w[0] != w[1]) && sb.windows(2).all(|w| w[0] != w[1]) {
                        hciz_exact(&sa, &sb, a.bits)?
                    } else {
                        log_spherical_integral(&sa, &sb, a.bits)?
                    }
                }
                HcizMode::Perm => hciz_perm_sum(&sa, &sb, a.bits)?,
                _ => {
                    report.param("samples", a.samples);
                    hciz_mc(&sa, &sb, a.beta, a.samples, seed)?
                }
            };
            hciz_metrics(&mut report, &r);
        }
        HcizMode::Limit => {
            let mu_a = parse_measure("--a", required("--a", &a.a)?)?;
            let mu_b = parse_measure("--b", required("--b", &a.b)?)?;
            let schedule: Vec<usize> = parse_list("--n-schedule", &a.n_schedule)?;
            report.param("n_schedule", &a.n_schedule);
            let method = if a.beta == 2 {
                LimitMethod::Exact { bits: a.bits }
            } else {
                report.param("samples", a.samples);
                LimitMethod::MonteCarlo {
                    beta: a.beta,
                    n_samples: a.samples,
                    seed,
                }
            };
            let est = limit_i_estimate(&mu_a, &mu_b, &schedule, method)?;
            report
                .metric("value", est.value)
                .metric("slope", est.slope)
                .metric("residual", est.residual);
            for (n, r) in &est.per_n {
                report.metric(&format!("rate_n{n}"), *r);
            }
        }
        HcizMode::Rankone => {
            let mu = match &a.b {
                Some(s) => parse_measure("--b", s)?,
                None => QuantileMeasure::semicircle(1.0, 4096)?,
            };
            let n = a.n.unwrap_or(40);
            report.param("theta", a.theta).param("tau", a.tau).param("n", n);
            let r = rank_one_asymptotic_check(a.theta, a.tau, &mu, n)?;
            report
                .metric("rate", r.rate)
                .metric("predicted", r.predicted)
                .metric("relative_discrepancy", r.relative_discrepancy)
                .metric("predicted_half", r.predicted_half)
                .metric("relative_discrepancy_half", r.relative_discrepancy_half)
                .metric("series_diverged", r.series_diverged as u8 as f64);
        }
    }
    Ok(report)
}

fn schur(a: &SchurArgs, seed: u64) -> Result<ExperimentReport, CliError> {
    let lambda = parse_partition("--lambda", &a.lambda)?;
    let mut report = ExperimentReport::new("schur", seed);
    report.param("lambda", &a.lambda);
    match (&a.x, &a.y) {
        (Some(x), None) => {
            let pts: Vec<Rational> = x.split(',').map(|p| parse_rational("--x", p)).collect::<Result<_, _>>()?;
            let v = schur_combinatorial(&lambda, &pts);
            report.param("x", x).param("value_exact", &v);
            report.metric("value", v.to_f64());
        }
        (None, Some(y)) => {
            let ys: Vec<f64> = parse_list("--y", y)?;
            let lv = log_schur_exp(&lambda, &ys, a.bits)?;
            report.param("y", y).param("bits", a.bits);
            report.metric("log_value", lv.to_f64());
            report.metric("value", Float::with_val(lv.prec(), lv.exp_ref()).to_f64());
        }
        _ => return Err(usage("give exactly one of --x and --y")),
    }
    Ok(report)
}

fn batch_csv(report: &mut ExperimentReport, out: &Path, name: &str, b: &SpectralExperimentBatch) -> Result<(), CliError> {
    let path = out.join(format!("{name}.csv"));
    b.write_csv(&path)?;
    report.output(name, &path)
}

fn experiment(a: &ExperimentArgs, seed: u64, out: &Path) -> Result<ExperimentReport, CliError> {
    let name = match a.kind {
        ExperimentKind::Diag => "diag",
        ExperimentKind::Horn => "horn",
        ExperimentKind::Bridge => "bridge",
        ExperimentKind::TiltedProfile => "tilted-profile",
    };
    let mut report = ExperimentReport::new(&format!("experiment {name}"), seed);
    report.param("beta", a.beta).param("samples", a.samples);
    let spec = |flag: &str, v: &Option<String>| -> Result<Vec<f64>, CliError> { parse_spectrum(flag, required(flag, v)?, a.n) };
    match a.kind {
        ExperimentKind::Diag => {
            let b = spec("--spectrum-b", &a.spectrum_b)?;
            report.param("spectrum_b", format!("{b:?}"));
            let batch = diag_conjugation_experiment(&b, a.beta, a.samples, seed)?;
            let target = QuantileMeasure::dirac(b.iter().sum::<f64>() / b.len() as f64, b.len())?;
            let mut gaps = Vec::new();
            let mut dw = Vec::new();
            for (s, rec) in batch.records.iter().enumerate() {
                gaps.push(majorization_gap(&rec[0], &b).0);
                dw.push(wasserstein(&batch.sample_measure(s, 0)?, &target));
            }
            report
                .metric("max_majorization_gap", gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
                .metric("median_wasserstein_to_mean", median(&dw));
            batch_csv(&mut report, out, "diag_batch", &batch)?;
        }
        ExperimentKind::Horn => {
            let sa = spec("--spectrum-a", &a.spectrum_a)?;
            let sb = parse_spectrum("--spectrum-b", required("--spectrum-b", &a.spectrum_b)?, Some(sa.len()))?;
            report.param("spectrum_a", format!("{sa:?}")).param("spectrum_b", format!("{sb:?}"));
            let batch = horn_sum_experiment(&sa, &sb, a.beta, a.samples, seed)?;
            let gap = batch
                .records
                .iter()
                .map(|r| spherical_ld::rmt::ky_fan_gap(&r[0], &sa, &sb))
                .fold(f64::NEG_INFINITY, f64::max);
            report.metric("max_ky_fan_gap", gap);
            let mean = batch.mean_profile(0)?;
            report.metric("mean_profile_mean", mean.mean());
            batch_csv(&mut report, out, "horn_batch", &batch)?;
        }
        ExperimentKind::Bridge => {
            let sa = spec("--spectrum-a", &a.spectrum_a)?;
            let sb = parse_spectrum("--spectrum-b", required("--spectrum-b", &a.spectrum_b)?, Some(sa.len()))?;
            let t: Vec<f64> = parse_list("--t-grid", &a.t_grid)?;
            report.param("t_grid", &a.t_grid).param("n", sa.len());
            let batch = bridge_simulate(&sa, &sb, a.beta, &t, a.samples, &a.chain.config(), seed)?;
            for (k, tk) in t.iter().enumerate() {
                report.metric(&format!("mean_second_moment_t{tk}"), batch.pooled(k, 4 * sa.len())?.moment(2));
            }
            batch_csv(&mut report, out, "bridge_batch", &batch)?;
        }
        ExperimentKind::TiltedProfile => {
            let y = spec("--spectrum-y", &a.spectrum_y)?;
            let b = parse_spectrum("--spectrum-b", required("--spectrum-b", &a.spectrum_b)?, Some(y.len()))?;
            report.param("spectrum_y", format!("{y:?}")).param("spectrum_b", format!("{b:?}"));
            let p = tilted_diagonal_profile(&y, &b, a.beta, &a.chain.config(), seed)?;
            report
                .metric("monotonicity_flag", p.monotonicity_flag as u8 as f64)
                .metric("max_stderr", p.stderr.iter().cloned().fold(0.0, f64::max))
                .metric("acceptance", p.diagnostics.acceptance);
            write_measure(&mut report, out, "tilted_profile", &p.profile)?;
        }
    }
    Ok(report)
}

fn freeprob(a: &FreeprobArgs, seed: u64, out: &Path) -> Result<ExperimentReport, CliError> {
    let name = format!("freeprob {:?}", a.op).to_lowercase();
    let mut report = ExperimentReport::new(&name, seed);
    let mu = parse_measure("--mu", &a.mu)?;
    report.param("mu", &a.mu);
    let z = Complex64::new(a.z_re, a.z_im);
    match a.op {
        FreeprobOp::Cauchy => {
            let g = cauchy_transform(&mu, z)?;
            report.param("z", z).metric("g_re", g.re).metric("g_im", g.im);
        }
        FreeprobOp::Subordinate => {
            let s = semicircle_subordination(&mu, a.s, z)?;
            report.param("z", z).param("s", a.s);
            report
                .metric("omega_re", s.omega.re)
                .metric("omega_im", s.omega.im)
                .metric("g_re", s.g.re)
                .metric("g_im", s.g.im)
                .metric("iterations", s.iterations as f64)
                .metric("residual", s.residual);
        }
        FreeprobOp::Rtransform => {
            let r = r_transform_series(&mu, a.order)?;
            report.param("order", a.order);
            for (k, c) in r.cumulants.iter().enumerate() {
                report.metric(&format!("kappa{}", k + 1), *c);
            }
        }
        FreeprobOp::Convolve => match &a.mu_b {
            Some(b) => {
                let mu_b = parse_measure("--mu-b", b)?;
                report.param("mu_b", b).param("n", a.n).param("samples", a.samples);
                let p = free_convolution_proxy(&mu, &mu_b, a.n, a.samples, seed)?;
                report.metric("stderr", p.stderr).metric("mean", p.measure.mean()).metric("variance", p.measure.variance());
                write_measure(&mut report, out, "free_convolution", &p.measure)?;
            }
            None => {
                report.param("s", a.s);
                let x = grid(a.x_min, a.x_max, a.points)?;
                let d = free_semicircle_density(&mu, a.s, &x, 1e-2)?;
                report
                    .metric("total_mass", d.total_mass)
                    .metric("unstable_points", d.unstable.iter().filter(|&&u| u).count() as f64);
                let path = out.join("free_density.csv");
                write_density(&path, &d.grid, &d.density)?;
                report.output("free_density", &path)?;
            }
        },
        FreeprobOp::Energy => {
            let e = log_energy(&mu);
            report.metric("log_energy", e.value).metric("atom", e.atom as u8 as f64);
        }
    }
    Ok(report)
}

fn write_density(path: &Path, x: &[f64], d: &[f64]) -> Result<(), CliError> {
    let mut s = String::from("x,density\n");
    for (a, b) in x.iter().zip(d) {
        s.push_str(&format!("{a},{b}\n"));
    }
    std::fs::write(path, s).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn rate(a: &RateArgs, seed: u64, out: &Path) -> Result<ExperimentReport, CliError> {
    let name = format!("rate {:?}", a.kind).to_lowercase();
    let mut report = ExperimentReport::new(&name, seed);
    let mu = parse_measure("--mu", &a.mu)?;
    let ra = parse_measure("--ref-a", &a.ref_a)?;
    let rb = a.ref_b.as_deref().map(|s| parse_measure("--ref-b", s)).transpose()?;
    let two = |rb: Option<QuantileMeasure>| rb.ok_or_else(|| usage("--ref-b is required for this rate"));
    let refs = match a.kind {
        RateKind::D => References::D { b: ra },
        RateKind::K => References::K { lambda: ra },
        RateKind::Ab => References::AB { a: ra, b: two(rb)? },
        RateKind::Lr => References::LR { lambda: ra, eta: two(rb)? },
    };
    let schedule: Vec<usize> = parse_list("--n-schedule", &a.n_schedule)?;
    report
        .param("mu", &a.mu)
        .param("ref_a", &a.ref_a)
        .param("ref_b", a.ref_b.as_deref().unwrap_or(""))
        .param("nu_grid", a.nu_grid)
        .param("n_schedule", &a.n_schedule)
        .param("max_iter", a.max_iter);
    let ev = Evaluator::with_schedule(&schedule);
    let cfg = RateConfig {
        nu_grid: a.nu_grid,
        max_iter: a.max_iter,
        ..RateConfig::default()
    };
    let r = rate_sup(&refs, &mu, &ev, &cfg)?;
    report
        .metric("value", r.value)
        .metric("residual", r.diagnostics.residual)
        .metric("iterations", r.diagnostics.iterations as f64)
        .metric("evaluations", r.diagnostics.evaluations as f64);
    if let Some(c) = &r.certificate {
        report
            .metric("certificate_slope", c.slope)
            .metric("certificate_residual", c.residual)
            .metric("certificate_fit_deviation", c.fit_deviation);
        write_measure(&mut report, out, "certificate_direction", &c.direction)?;
    }
    write_measure(&mut report, out, "nu_star", &r.nu_star)?;
    Ok(report)
}

fn bridge(a: &BridgeArgs, seed: u64, out: &Path) -> Result<ExperimentReport, CliError> {
    let name = format!("bridge {:?}", a.op).to_lowercase();
    let mut report = ExperimentReport::new(&name, seed);
    if let BridgeOp::Simulate = a.op {
        let sa = parse_spectrum("--spectrum-a", required("--spectrum-a", &a.spectrum_a)?, a.n)?;
        let sb = parse_spectrum("--spectrum-b", required("--spectrum-b", &a.spectrum_b)?, Some(sa.len()))?;
        let t: Vec<f64> = parse_list("--t-grid", &a.t_grid)?;
        report
            .param("t_grid", &a.t_grid)
            .param("n", sa.len())
            .param("samples", a.samples)
            .param("beta", a.beta);
        let batch = bridge_simulate(&sa, &sb, a.beta, &t, a.samples, &a.chain.config(), seed)?;
        batch_csv(&mut report, out, "bridge_batch", &batch)?;
        return Ok(report);
    }
    let path = a.batch.as_ref().ok_or_else(|| usage("--batch is required"))?;
    let batch = SpectralExperimentBatch::read_bridge_csv(path, a.beta, seed)?;
    let x = grid(a.x_min, a.x_max, a.x_points)?;
    report
        .param("batch", path.display())
        .param("x_grid", format!("{},{},{}", a.x_min, a.x_max, a.x_points))
        .param("bandwidth", a.bandwidth);
    let field = estimate_field(&batch, &x, a.bandwidth)?;
    let mass_exact = field.raw_mass.iter().all(|&m| m == 1.0);
    report.metric("raw_mass_exact", mass_exact as u8 as f64);
    match a.op {
        BridgeOp::Field => {
            let p = out.join("bridge_field.csv");
            field.write_csv(&p)?;
            report.output("bridge_field", &p)?;
        }
        BridgeOp::Residual => {
            let r = euler_residual(&field)?;
            let fb = f_bound_check(&field, a.support);
            report
                .param("support", a.support)
                .metric("continuity", r.continuity)
                .metric("momentum", r.momentum)
                .metric("combined", r.combined())
                .metric("f_bound_constant", fb.constant);
        }
        BridgeOp::Action => {
            let s = action(&field);
            report
                .metric("action", s.value)
                .metric("pressure", s.pressure)
                .metric("kinetic", s.kinetic);
        }
        BridgeOp::Simulate => unreachable!(),
    }
    if !mass_exact {
        return Err(CliError::Assertion("slice mass differs from one before smoothing".into()));
    }
    Ok(report)
}

fn verify(a: &VerifyArgs, seed: u64) -> Result<(ExperimentReport, Vec<String>), CliError> {
    let scale = match a.suite {
        SuiteKind::Quick => Scale::Quick,
        SuiteKind::Full => Scale::Full,
    };
    let ids: Vec<u8> = match &a.criteria {
        Some(s) => parse_list("--criteria", s)?,
        None => (1..=11).collect(),
    };
    if let Some(bad) = ids.iter().find(|&&i| !(1..=11).contains(&i)) {
        return Err(usage(format!("--criteria: no criterion {bad}")));
    }
    let mut report = ExperimentReport::new("verify", seed);
    report.param("suite", format!("{scale:?}").to_lowercase());
    if let Some(s) = &a.criteria {
        report.param("criteria", s);
    }
    let results = if a.criteria.is_none() {
        run_suite(scale, seed)
    } else {
        ids.iter().map(|&i| crate::suite::run_criterion(i, scale, seed)).collect()
    };
    let mut failures = Vec::new();
    for r in &results {
        eprintln!(
            "criterion {}: {} {} ({:.1}s) {}",
            r.id,
            if r.pass { "PASS" } else { "FAIL" },
            r.name,
            r.seconds,
            r.detail
        );
        report.metric(&format!("c{:02}.pass", r.id), r.pass as u8 as f64);
        for (k, v) in &r.metrics {
            report.metric(&format!("c{:02}.{k}", r.id), *v);
        }
        report.param(&format!("c{:02}.detail", r.id), &r.detail);
        if !r.pass {
            failures.push(format!("criterion {} ({})", r.id, r.name));
        }
    }
    Ok((report, failures))
}
