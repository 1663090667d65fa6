//! Tilt functionals and their suprema: the rate functions for the diagonal of
//! `U B U^*`, for the spectrum of `A + U B U^*`, and for Kostka and
//! Littlewood-Richardson asymptotics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::free_prob::log_energy;
use crate::hciz::{limit_i_estimate, log_spherical_integral, LimitEstimate, LimitMethod, START_BITS};
use crate::linalg::conjugate_diag_diagonal;
use crate::measure::{pairing_integral, schur_horn_report, QuantileMeasure, SchurHornReport};
use crate::rmt::{tilted_sampler, ChainConfig};
use crate::stats::{batch_stderr, isotonic_unweighted};

/// Additive constant of `J`; see [`j_constant_sequence`].
pub const J_CONSTANT: f64 = 0.75;

/// Evaluates the limiting spherical rate `I` by extrapolation over a size schedule.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Evaluator {
    pub schedule: Vec<usize>,
    pub method: LimitMethod,
    pub j_constant: f64,
}

impl Default for Evaluator {
    fn default() -> Self {
        Self {
            schedule: vec![8, 16, 32],
            method: LimitMethod::Exact { bits: START_BITS },
            j_constant: J_CONSTANT,
        }
    }
}

impl Evaluator {
    pub fn with_schedule(schedule: &[usize]) -> Self {
        Self {
            schedule: schedule.to_vec(),
            ..Self::default()
        }
    }

    pub fn i(&self, nu: &QuantileMeasure, mu: &QuantileMeasure) -> Result<LimitEstimate> {
        limit_i_estimate(nu, mu, &self.schedule, self.method)
    }

    /// `J(μ_Y, m_λ) = 2I(μ_Y, m_λ) + ½Σ(m_λ) - ½∬ log((e^x - e^y)/(x - y)) dμ_Y dμ_Y + c`.
    pub fn j(&self, mu_y: &QuantileMeasure, m_lambda: &QuantileMeasure) -> Result<JValue> {
        let i = self.i(mu_y, m_lambda)?;
        let le = log_energy(m_lambda);
        if le.atom {
            return Err(Error::OutOfRange("J needs an atomless reference measure".into()));
        }
        let two_i = 2.0 * i.value;
        let log_energy_lambda = 0.5 * le.value;
        let double_log_kernel = -0.5 * exp_kernel_energy(mu_y);
        Ok(JValue {
            value: two_i + log_energy_lambda + double_log_kernel + self.j_constant,
            two_i,
            log_energy_lambda,
            double_log_kernel,
            constant: self.j_constant,
            residual: 2.0 * i.residual,
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JValue {
    pub value: f64,
    pub two_i: f64,
    pub log_energy_lambda: f64,
    pub double_log_kernel: f64,
    pub constant: f64,
    pub residual: f64,
}

/// `log((e^x - e^y)/(x - y))`, equal to `x` on the diagonal.
pub fn exp_divided_difference_log(x: f64, y: f64) -> f64 {
    let d = (x - y).abs();
    let m = x.max(y);
    if d < 1e-8 {
        // log((1 - e^{-d})/d) = -d/2 + d²/24 + O(d⁴)
        return m - d / 2.0 + d * d / 24.0;
    }
    m + (-(-d).exp_m1() / d).ln()
}

/// `∬ log((e^x - e^y)/(x - y)) dμ dμ` on the quantile grid, diagonal included.
pub fn exp_kernel_energy(mu: &QuantileMeasure) -> f64 {
    let t = mu.values();
    let m = t.len();
    let mut acc = 0.0;
    for j in 0..m {
        acc += t[j];
        for k in j + 1..m {
            acc += 2.0 * exp_divided_difference_log(t[j], t[k]);
        }
    }
    acc / (m * m) as f64
}

/// `(1/N²)[N(N-1)/2 · log N - Σ_{p<N} log p!]`, the finite-`N` source of the
/// additive constant in `J`; it tends to `3/4`.
pub fn j_constant_sequence(n: usize) -> f64 {
    let nf = n as f64;
    let mut logfact = 0.0;
    let mut acc = 0.0;
    for p in 1..n {
        logfact += (p as f64).ln();
        acc += logfact;
    }
    (nf * (nf - 1.0) / 2.0 * nf.ln() - acc) / (nf * nf)
}

/// Reference measures of each rate function.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum References {
    /// Diagonal of `U B U^*`.
    D { b: QuantileMeasure },
    /// Spectrum of `A + U B U^*`.
    AB { a: QuantileMeasure, b: QuantileMeasure },
    /// Kostka numbers with shape measure `m_λ`.
    K { lambda: QuantileMeasure },
    /// Littlewood-Richardson coefficients with `m_λ`, `m_η`.
    LR { lambda: QuantileMeasure, eta: QuantileMeasure },
}

impl References {
    pub fn name(&self) -> &'static str {
        match self {
            References::D { .. } => "D",
            References::AB { .. } => "AB",
            References::K { .. } => "K",
            References::LR { .. } => "LR",
        }
    }

    /// Majorizing quantile function: `T_B`, `T_A + T_B`, `T_λ`, or
    /// `T_λ + T_η - x` (the counting-measure shift makes the last one the
    /// image of `λ + η` and keeps the mean constraint translation free).
    pub fn majorant(&self) -> Result<QuantileMeasure> {
        match self {
            References::D { b } => Ok(b.clone()),
            References::AB { a, b } => Ok(a.quantile_sum(b)),
            References::K { lambda } => Ok(lambda.clone()),
            References::LR { lambda, eta } => lambda.quantile_sum(eta).add_identity(-1.0),
        }
    }
}

/// `H^D_μ(ν) = ½∫T_ν T_μ - I(ν, μ_B)`.
pub fn h_d(mu: &QuantileMeasure, b: &QuantileMeasure, nu: &QuantileMeasure, ev: &Evaluator) -> Result<(f64, f64)> {
    let i = ev.i(nu, b)?;
    Ok((0.5 * pairing_integral(nu, mu) - i.value, i.residual))
}

/// `H^{A+B}_μ(ν) = I(ν, μ) - I(ν, μ_A) - I(ν, μ_B)`.
pub fn h_ab(
    mu: &QuantileMeasure,
    a: &QuantileMeasure,
    b: &QuantileMeasure,
    nu: &QuantileMeasure,
    ev: &Evaluator,
) -> Result<(f64, f64)> {
    let i0 = ev.i(nu, mu)?;
    let ia = ev.i(nu, a)?;
    let ib = ev.i(nu, b)?;
    Ok((i0.value - ia.value - ib.value, i0.residual + ia.residual + ib.residual))
}

/// Quantile increments of at least `1/m`: density bounded by one.
pub fn check_density_bound(mu: &QuantileMeasure) -> Result<()> {
    let m = mu.len() as f64;
    for w in mu.values().windows(2) {
        let inc = w[1] - w[0];
        if inc < (1.0 - 1e-9) / m {
            return Err(Error::DensityBound(inc));
        }
    }
    Ok(())
}

/// `H^K_μ(ν) = ∫(T_μ - x) T_ν dx - J(ν, m_λ)`.
pub fn h_k(
    mu: &QuantileMeasure,
    lambda: &QuantileMeasure,
    nu: &QuantileMeasure,
    ev: &Evaluator,
) -> Result<(f64, f64)> {
    check_density_bound(mu)?;
    let lin = pairing_integral(mu, nu) - first_moment_weighted(nu);
    let j = ev.j(nu, lambda)?;
    Ok((lin - j.value, j.residual))
}

/// `∫_0^1 x T_ν(x) dx` for the piecewise-constant quantile function.
pub fn first_moment_weighted(nu: &QuantileMeasure) -> f64 {
    let m = nu.len() as f64;
    nu.values()
        .iter()
        .enumerate()
        .map(|(k, v)| v * (2.0 * k as f64 + 1.0))
        .sum::<f64>()
        / (2.0 * m * m)
}

/// `H^{LR}_μ(ν) = J(ν, μ) - J(ν, m_λ) - J(ν, m_η)`.
pub fn h_lr(
    mu: &QuantileMeasure,
    lambda: &QuantileMeasure,
    eta: &QuantileMeasure,
    nu: &QuantileMeasure,
    ev: &Evaluator,
) -> Result<(f64, f64)> {
    let j0 = ev.j(nu, mu)?;
    let jl = ev.j(nu, lambda)?;
    let je = ev.j(nu, eta)?;
    Ok((j0.value - jl.value - je.value, j0.residual + jl.residual + je.residual))
}

/// Dispatches to the functional selected by `refs`.
pub fn evaluate_h(refs: &References, mu: &QuantileMeasure, nu: &QuantileMeasure, ev: &Evaluator) -> Result<(f64, f64)> {
    match refs {
        References::D { b } => h_d(mu, b, nu, ev),
        References::AB { a, b } => h_ab(mu, a, b, nu, ev),
        References::K { lambda } => h_k(mu, lambda, nu, ev),
        References::LR { lambda, eta } => h_lr(mu, lambda, eta, nu, ev),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RateConfig {
    pub nu_grid: usize,
    pub max_iter: usize,
    /// Stop when an accepted step improves by less than this.
    pub tol: f64,
    pub fd_step: f64,
    pub admissibility_tol: f64,
    pub certificate_scales: Vec<f64>,
    /// Dilations of the sorted `T_μ - T_ref` used as extra starts.
    pub start_dilations: Vec<f64>,
}

impl Default for RateConfig {
    fn default() -> Self {
        Self {
            nu_grid: 32,
            max_iter: 40,
            tol: 1e-7,
            fd_step: 1e-4,
            admissibility_tol: 1e-9,
            certificate_scales: vec![8.0, 32.0, 128.0],
            start_dilations: vec![0.5, 2.0],
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Certificate {
    pub direction: QuantileMeasure,
    /// Least-squares slope of `H(L · direction)` in `L`.
    pub slope: f64,
    pub scales: Vec<f64>,
    pub values: Vec<f64>,
    /// Largest `I`-estimator residual over the scales.
    pub residual: f64,
    /// Largest deviation from the fitted line; includes the sublinear part of `H`.
    pub fit_deviation: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RateDiagnostics {
    pub iterations: usize,
    pub restarts: usize,
    pub final_improvement: f64,
    pub evaluations: usize,
    pub start_values: Vec<f64>,
    pub residual: f64,
    pub admissibility: SchurHornReport,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RateEvaluation {
    pub value: f64,
    pub nu_star: QuantileMeasure,
    pub certificate: Option<Certificate>,
    pub diagnostics: RateDiagnostics,
}

/// Whether `H(ν + c) = H(ν)`; true for every functional once the mean
/// constraint holds.
pub fn translation_invariant(report: &SchurHornReport) -> bool {
    report.mean_gap.abs() <= report.tolerance
}

fn fit_slope(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let s = sxy / sxx;
    let c = my - s * mx;
    let dev = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (c + s * x - y).abs())
        .fold(0.0, f64::max);
    (s, dev)
}

/// Measures `H(L · direction)` over the configured scales.
pub fn measure_certificate(
    refs: &References,
    mu: &QuantileMeasure,
    direction: &QuantileMeasure,
    ev: &Evaluator,
    scales: &[f64],
) -> Result<Certificate> {
    let mut values = Vec::with_capacity(scales.len());
    let mut worst_res: f64 = 0.0;
    for &l in scales {
        let (h, r) = evaluate_h(refs, mu, &direction.dilate(l), ev)?;
        values.push(h);
        worst_res = worst_res.max(r);
    }
    let (slope, dev) = fit_slope(scales, &values);
    Ok(Certificate {
        direction: direction.clone(),
        slope,
        scales: scales.to_vec(),
        values,
        residual: worst_res,
        fit_deviation: dev,
    })
}

/// Direction that witnesses unboundedness: `δ_{±1}` for a mean gap,
/// `yδ_0 + (1-y)δ_{1/(1-y)}` for a partial-sum violation at `y`. The
/// violation point is moved to the best multiple of `1/resolution` with a
/// positive tail gap, so every size in the schedule represents the
/// direction without mixed cells.
pub fn certificate_direction(
    mu: &QuantileMeasure,
    majorant: &QuantileMeasure,
    report: &SchurHornReport,
    m: usize,
    resolution: usize,
) -> Result<Option<QuantileMeasure>> {
    if report.mean_gap.abs() > report.tolerance {
        return QuantileMeasure::dirac(report.mean_gap.signum(), m).map(Some);
    }
    if report.worst_violation > report.tolerance {
        let tail = |y: f64| mu.integrate_between(y, 1.0) - majorant.integrate_between(y, 1.0);
        let mut y = report.worst_y;
        let mut best = f64::NEG_INFINITY;
        for k in 1..resolution {
            let c = k as f64 / resolution as f64;
            let p = tail(c);
            if p > report.tolerance && p > best {
                best = p;
                y = c;
            }
        }
        return QuantileMeasure::atomic(&[(0.0, y), (1.0 / (1.0 - y), 1.0 - y)], m).map(Some);
    }
    Ok(None)
}

fn project(v: &[f64], center: bool) -> Vec<f64> {
    let mut p = isotonic_unweighted(v);
    if center {
        let m = p.iter().sum::<f64>() / p.len() as f64;
        for x in &mut p {
            *x -= m;
        }
    }
    p
}

struct Branch {
    value: f64,
    nu: Vec<f64>,
    iterations: usize,
    improvement: f64,
    evaluations: usize,
    residual: f64,
}

fn ascend(
    refs: &References,
    mu: &QuantileMeasure,
    start: Vec<f64>,
    center: bool,
    ev: &Evaluator,
    cfg: &RateConfig,
) -> Result<Branch> {
    let m = start.len();
    let eval = |v: &[f64]| -> Result<(f64, f64)> {
        evaluate_h(refs, mu, &QuantileMeasure::from_unsorted(v.to_vec())?, ev)
    };
    let mut v = project(&start, center);
    let (mut f, mut res) = eval(&v)?;
    let mut evaluations = 1;
    let mut alpha = 0.5;
    let mut improvement = f64::INFINITY;
    let mut iterations = 0;
    let mut small_steps = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        // Sorting maps a perturbation inside a tie block to the top of the
        // block, so ties are spread by a ramp wider than the step first.
        let h = cfg.fd_step;
        let tied = v.windows(2).any(|w| w[1] - w[0] < 2.0 * h);
        let (base, f_base) = if tied {
            let r: Vec<f64> = v
                .iter()
                .enumerate()
                .map(|(k, x)| x + 2.0 * h * (k as f64 - (m as f64 - 1.0) / 2.0))
                .collect();
            let (fr, _) = eval(&r)?;
            evaluations += 1;
            (r, fr)
        } else {
            (v.clone(), f)
        };
        let mut grad = vec![0.0; m];
        for k in 0..m {
            let mut w = base.clone();
            w[k] += h;
            let (fk, _) = eval(&w)?;
            grad[k] = (fk - f_base) / h * m as f64;
        }
        evaluations += m;
        let mut accepted = false;
        for _ in 0..10 {
            let trial: Vec<f64> = v.iter().zip(&grad).map(|(x, g)| x + alpha * g).collect();
            let trial = project(&trial, center);
            let (ft, rt) = eval(&trial)?;
            evaluations += 1;
            if ft > f + 1e-14 {
                improvement = ft - f;
                v = trial;
                f = ft;
                res = rt;
                alpha *= 1.5;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            improvement = 0.0;
            break;
        }
        if improvement < cfg.tol {
            small_steps += 1;
            if small_steps >= 2 {
                break;
            }
        } else {
            small_steps = 0;
        }
    }
    Ok(Branch {
        value: f,
        nu: v,
        iterations,
        improvement,
        evaluations,
        residual: res,
    })
}

/// Supremum of the tilt functional over nondecreasing quantile vectors `ν`,
/// or a `+∞` certificate when `μ` fails the majorization constraints.
pub fn rate_sup(refs: &References, mu: &QuantileMeasure, ev: &Evaluator, cfg: &RateConfig) -> Result<RateEvaluation> {
    if cfg.nu_grid < 2 {
        return Err(Error::OutOfRange("nu grid needs at least two points".into()));
    }
    let majorant = refs.majorant()?;
    let report = schur_horn_report(mu, &majorant, cfg.admissibility_tol);
    let m = cfg.nu_grid;
    if let Some(direction) = certificate_direction(mu, &majorant, &report, m, ev.schedule.iter().copied().min().unwrap_or(1))? {
        let cert = measure_certificate(refs, mu, &direction, ev, &cfg.certificate_scales)?;
        if cert.slope > 0.0 && cert.slope > 10.0 * cert.residual {
            return Ok(RateEvaluation {
                value: f64::INFINITY,
                nu_star: direction,
                certificate: Some(cert),
                diagnostics: RateDiagnostics {
                    iterations: 0,
                    restarts: 0,
                    final_improvement: 0.0,
                    evaluations: cfg.certificate_scales.len(),
                    start_values: Vec::new(),
                    residual: 0.0,
                    admissibility: report,
                },
            });
        }
    }
    let center = translation_invariant(&report);
    let mut starts: Vec<Vec<f64>> = vec![vec![0.0; m]];
    starts.push((0..m).map(|k| (k as f64 + 0.5) / m as f64 - 0.5).collect());
    let gap = mu.resample(m).values().iter().zip(majorant.resample(m).values()).map(|(a, b)| a - b).collect::<Vec<f64>>();
    let mut gap_sorted = gap.clone();
    gap_sorted.sort_by(f64::total_cmp);
    for &l in &cfg.start_dilations {
        starts.push(gap_sorted.iter().map(|g| l * g).collect());
    }
    let branches: Vec<Result<Branch>> = starts
        .into_par_iter()
        .map(|s| ascend(refs, mu, s, center, ev, cfg))
        .collect();
    let branches: Vec<Branch> = branches.into_iter().collect::<Result<_>>()?;
    let start_values: Vec<f64> = branches.iter().map(|b| b.value).collect();
    let best = branches
        .iter()
        .enumerate()
        .fold(0usize, |bi, (i, b)| if b.value > branches[bi].value { i } else { bi });
    let b = &branches[best];
    Ok(RateEvaluation {
        value: b.value,
        nu_star: QuantileMeasure::new(b.nu.clone())?,
        certificate: None,
        diagnostics: RateDiagnostics {
            iterations: branches.iter().map(|b| b.iterations).sum(),
            restarts: branches.len(),
            final_improvement: b.improvement,
            evaluations: branches.iter().map(|b| b.evaluations).sum(),
            start_values,
            residual: b.residual,
            admissibility: report,
        },
    })
}

/// Piecewise-linear function through sorted knots, extended linearly.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PiecewiseLinear {
    pub knots: Vec<(f64, f64)>,
}

impl PiecewiseLinear {
    pub fn new(mut knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::OutOfRange("need two knots".into()));
        }
        knots.sort_by(|a, b| a.0.total_cmp(&b.0));
        if knots.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Malformed("repeated knot".into()));
        }
        Ok(Self { knots })
    }

    pub fn identity() -> Self {
        Self {
            knots: vec![(-1.0, -1.0), (1.0, 1.0)],
        }
    }

    pub fn zero() -> Self {
        Self {
            knots: vec![(-1.0, 0.0), (1.0, 0.0)],
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = &self.knots;
        let i = match k.iter().position(|p| p.0 > x) {
            Some(0) => 0,
            Some(i) => i - 1,
            None => k.len() - 2,
        };
        let (x0, y0) = k[i];
        let (x1, y1) = k[i + 1];
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DerivativeReport {
    /// Centered difference of `ε ↦ log I_N(A + εf(A), B)/(2N²)`.
    pub finite_difference: f64,
    /// `|D(2ε) - D(ε)| / 3`, the leading `ε²` error term.
    pub curvature_term: f64,
    /// `(1/(2N)) E_tilted[Tr(f(A) U B U^*)]`.
    pub tilted_expectation: f64,
    pub mc_stderr: f64,
    pub epsilon: f64,
    pub agree: bool,
    pub chains: usize,
    pub acceptance: f64,
}

/// Compares the finite-`N` derivative of the spherical rate in the direction
/// `f(A)` with the tilted-chain expectation of `Tr(f(A) U B U^*) / (2N)`.
pub fn derivative_check(
    a: &[f64],
    b: &[f64],
    f: &PiecewiseLinear,
    epsilon: f64,
    chain: &ChainConfig,
    chains: usize,
    seed: u64,
) -> Result<DerivativeReport> {
    let n = a.len();
    if b.len() != n {
        return Err(Error::DimensionMismatch(n, b.len()));
    }
    let fa: Vec<f64> = a.iter().map(|&x| f.eval(x)).collect();
    let rate = |eps: f64| -> Result<f64> {
        let shifted: Vec<f64> = a.iter().zip(&fa).map(|(x, y)| x + eps * y).collect();
        Ok(log_spherical_integral(&shifted, b, START_BITS)?.rate())
    };
    let d1 = (rate(epsilon)? - rate(-epsilon)?) / (2.0 * epsilon);
    let d2 = (rate(2.0 * epsilon)? - rate(-2.0 * epsilon)?) / (4.0 * epsilon);
    let curvature_term = (d2 - d1).abs() / 3.0;
    let runs: Vec<Result<(Vec<f64>, f64)>> = (0..chains.max(1))
        .into_par_iter()
        .map(|c| {
            let run = tilted_sampler(a, b, 2, chain, seed, c as u64, |u| {
                let d = conjugate_diag_diagonal(u, b);
                fa.iter().zip(&d).map(|(x, y)| x * y).sum::<f64>()
            })?;
            Ok((run.observations, run.diagnostics.acceptance))
        })
        .collect();
    let mut means = Vec::new();
    let mut ses = Vec::new();
    let mut acc = 0.0;
    for r in runs {
        let (obs, a_rate) = r?;
        means.push(obs.iter().sum::<f64>() / obs.len().max(1) as f64);
        ses.push(batch_stderr(&obs, 20));
        acc += a_rate;
    }
    let k = means.len() as f64;
    let mean = means.iter().sum::<f64>() / k;
    // Chains are independent: combine per-chain batch-means errors.
    let se = (ses.iter().map(|s| if s.is_finite() { s * s } else { 0.0 }).sum::<f64>()).sqrt() / k;
    let scale = 1.0 / (2.0 * n as f64);
    let tilted_expectation = scale * mean;
    let mc_stderr = scale * se;
    let agree = (d1 - tilted_expectation).abs() <= 3.0 * (mc_stderr + curvature_term) + 1e-12;
    Ok(DerivativeReport {
        finite_difference: d1,
        curvature_term,
        tilted_expectation,
        mc_stderr,
        epsilon,
        agree,
        chains: chains.max(1),
        acceptance: acc / k,
    })
}
