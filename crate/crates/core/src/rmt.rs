//! Random-matrix experiments: diagonals of `U B U^*`, spectra of `A + U B U^*`,
//! the tilted eigenvector law and the matrix Brownian bridge.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    conjugate_diag, conjugate_diag_diagonal, gaussian_ensemble, haar, hermitian_eigenvalues,
    stream_rng, CMatrix, JACOBI_TOL,
};
use crate::measure::QuantileMeasure;
use crate::stats::{batch_stderr, integrated_autocorrelation, isotonic};
use num_complex::Complex64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchKind {
    DiagConjugation,
    HornSum,
    Bridge,
    TiltedDiag,
}

/// `records[sample][time][k]`; single-time kinds have one time slice.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectralExperimentBatch {
    pub kind: BatchKind,
    pub n: usize,
    pub beta: u8,
    pub seed: u64,
    pub t_grid: Vec<f64>,
    pub records: Vec<Vec<Vec<f64>>>,
}

impl SpectralExperimentBatch {
    /// Pooled empirical measure of one time slice on `m` quantiles.
    pub fn pooled(&self, time: usize, m: usize) -> Result<QuantileMeasure> {
        let all: Vec<f64> = self.records.iter().flat_map(|r| r[time].iter().copied()).collect();
        QuantileMeasure::from_samples(&all, m)
    }

    /// Empirical measure of one sample at one time.
    pub fn sample_measure(&self, sample: usize, time: usize) -> Result<QuantileMeasure> {
        QuantileMeasure::new(self.records[sample][time].clone())
    }

    /// Mean sorted profile of one time slice.
    pub fn mean_profile(&self, time: usize) -> Result<QuantileMeasure> {
        let s = self.records.len() as f64;
        let n = self.records[0][time].len();
        QuantileMeasure::new(
            (0..n)
                .map(|k| self.records.iter().map(|r| r[time][k]).sum::<f64>() / s)
                .collect(),
        )
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["sample", "t", "index", "value"])?;
        for (s, rec) in self.records.iter().enumerate() {
            for (ti, spec) in rec.iter().enumerate() {
                let t = self.t_grid.get(ti).copied().unwrap_or(f64::NAN);
                for (k, v) in spec.iter().enumerate() {
                    w.write_record([s.to_string(), format!("{t}"), k.to_string(), format!("{v:e}")])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a bridge batch written by [`Self::write_csv`].
    pub fn read_bridge_csv(path: &std::path::Path, beta: u8, seed: u64) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut rows: Vec<(usize, f64, usize, f64)> = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec[i].trim().parse::<f64>().map_err(|_| Error::Malformed(rec[i].to_string()))
            };
            rows.push((parse(0)? as usize, parse(1)?, parse(2)? as usize, parse(3)?));
        }
        let mut t_grid: Vec<f64> = rows.iter().map(|r| r.1).collect();
        t_grid.sort_by(f64::total_cmp);
        t_grid.dedup();
        let samples = rows.iter().map(|r| r.0).max().map_or(0, |m| m + 1);
        let n = rows.iter().map(|r| r.2).max().map_or(0, |m| m + 1);
        let mut records = vec![vec![vec![0.0; n]; t_grid.len()]; samples];
        for (s, t, k, v) in rows {
            let ti = t_grid.iter().position(|&x| x == t).unwrap();
            records[s][ti][k] = v;
        }
        Ok(Self {
            kind: BatchKind::Bridge,
            n,
            beta,
            seed,
            t_grid,
            records,
        })
    }
}

fn check_beta(beta: u8) -> Result<()> {
    if beta == 1 || beta == 2 {
        Ok(())
    } else {
        Err(Error::OutOfRange(format!("beta {beta}")))
    }
}

pub fn haar_sample(n: usize, beta: u8, seed: u64) -> Result<CMatrix> {
    check_beta(beta)?;
    if n == 0 {
        return Err(Error::OutOfRange("N = 0".into()));
    }
    Ok(haar(n, beta, &mut stream_rng(seed, 0)))
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Largest violation of `Σ_{i<=k} x_(i) <= Σ_{i<=k} y_(i)` over the top-`k`
/// partial sums (descending order), and the total-sum gap.
pub fn majorization_gap(x: &[f64], y: &[f64]) -> (f64, f64) {
    let xs = sorted(x.to_vec());
    let ys = sorted(y.to_vec());
    let (mut sx, mut sy) = (0.0, 0.0);
    let mut worst = f64::NEG_INFINITY;
    for k in (0..xs.len()).rev() {
        sx += xs[k];
        sy += ys[k];
        worst = worst.max(sx - sy);
    }
    (worst, sx - sy)
}

/// Sorted `diag(U B U^*)` per sample, checked against the Schur-Horn
/// majorization and the trace identity.
pub fn diag_conjugation_experiment(
    b: &[f64],
    beta: u8,
    n_samples: usize,
    seed: u64,
) -> Result<SpectralExperimentBatch> {
    check_beta(beta)?;
    let n = b.len();
    let scale = norm_inf(b).max(1.0);
    let trace: f64 = b.iter().sum();
    let records: Vec<Result<Vec<Vec<f64>>>> = (0..n_samples)
        .into_par_iter()
        .map(|s| {
            let u = haar(n, beta, &mut stream_rng(seed, s as u64));
            let d = sorted(conjugate_diag_diagonal(&u, b));
            let (worst, _) = majorization_gap(&d, b);
            let tr: f64 = d.iter().sum();
            if (tr - trace).abs() > 1e-8 * n as f64 * scale {
                return Err(Error::OutOfRange(format!("trace identity failed in sample {s}")));
            }
            if worst > 1e-10 * n as f64 * scale {
                return Err(Error::OutOfRange(format!(
                    "Schur-Horn majorization violated by {worst:e} in sample {s}"
                )));
            }
            Ok(vec![d])
        })
        .collect();
    Ok(SpectralExperimentBatch {
        kind: BatchKind::DiagConjugation,
        n,
        beta,
        seed,
        t_grid: Vec::new(),
        records: records.into_iter().collect::<Result<_>>()?,
    })
}

/// Worst Ky Fan violation: top-`k` sums of `spec` against those of `a` plus `b`.
pub fn ky_fan_gap(spec: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let s = sorted(spec.to_vec());
    let sa = sorted(a.to_vec());
    let sb = sorted(b.to_vec());
    let n = s.len();
    let (mut x, mut y) = (0.0, 0.0);
    let mut worst = f64::NEG_INFINITY;
    for k in (0..n).rev() {
        x += s[k];
        y += sa[k] + sb[k];
        worst = worst.max(x - y);
    }
    worst
}

/// Sorted spectra of `A + U B U^*` per sample, checked against the trace
/// identity and every Ky Fan inequality.
pub fn horn_sum_experiment(
    a: &[f64],
    b: &[f64],
    beta: u8,
    n_samples: usize,
    seed: u64,
) -> Result<SpectralExperimentBatch> {
    check_beta(beta)?;
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(a.len(), b.len()));
    }
    let n = a.len();
    let scale = norm_inf(a) + norm_inf(b);
    let trace: f64 = a.iter().sum::<f64>() + b.iter().sum::<f64>();
    let records: Vec<Result<Vec<Vec<f64>>>> = (0..n_samples)
        .into_par_iter()
        .map(|s| {
            let spec = if b.iter().all(|&x| x == b[0]) {
                sorted(a.iter().map(|x| x + b[0]).collect())
            } else if a.iter().all(|&x| x == a[0]) {
                sorted(b.iter().map(|x| x + a[0]).collect())
            } else {
                let u = haar(n, beta, &mut stream_rng(seed, s as u64));
                let m = CMatrix::from_diag(a).add(&conjugate_diag(&u, b));
                hermitian_eigenvalues(&m, JACOBI_TOL)
            };
            let tr: f64 = spec.iter().sum();
            if (tr - trace).abs() > 1e-8 * n as f64 * scale.max(1.0) {
                return Err(Error::OutOfRange(format!("trace identity failed in sample {s}")));
            }
            let gap = ky_fan_gap(&spec, a, b);
            if gap > 1e-8 * scale.max(1.0) {
                return Err(Error::OutOfRange(format!("Ky Fan violated by {gap:e} in sample {s}")));
            }
            Ok(vec![spec])
        })
        .collect();
    Ok(SpectralExperimentBatch {
        kind: BatchKind::HornSum,
        n,
        beta,
        seed,
        t_grid: Vec::new(),
        records: records.into_iter().collect::<Result<_>>()?,
    })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ChainConfig {
    pub burn_in: usize,
    /// Steps recorded after burn-in.
    pub steps: usize,
    /// Record every `thin` steps.
    pub thin: usize,
    pub step_scale: f64,
    pub tune: bool,
    pub recompute_every: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            burn_in: 100_000,
            steps: 200_000,
            thin: 10,
            step_scale: 0.5,
            tune: true,
            recompute_every: 10_000,
        }
    }
}

/// Metropolis chain for the density proportional to `exp((βN/2) Tr(Y U B U^*))`
/// on the unitary (`β = 2`) or orthogonal (`β = 1`) group.
#[derive(Clone, Debug)]
pub struct TiltedChain {
    pub y: Vec<f64>,
    pub b: Vec<f64>,
    pub beta: u8,
    pub u: CMatrix,
    pub log_weight: f64,
    pub step_scale: f64,
    pub accepted: u64,
    pub proposed: u64,
    /// Largest gap seen between incremental and recomputed log-weights.
    pub max_drift: f64,
    /// Proposals between refreshes; zero disables them.
    pub recompute_every: u64,
    scale: f64,
    rng: rand_chacha::ChaCha8Rng,
}

impl TiltedChain {
    pub fn new(y: &[f64], b: &[f64], beta: u8, step_scale: f64, seed: u64, stream: u64) -> Result<Self> {
        check_beta(beta)?;
        if y.len() != b.len() {
            return Err(Error::DimensionMismatch(y.len(), b.len()));
        }
        if !(step_scale > 0.0) {
            return Err(Error::OutOfRange(format!("step scale {step_scale}")));
        }
        let n = y.len();
        let mut rng = stream_rng(seed, stream);
        let u = haar(n, beta, &mut rng);
        let mut chain = Self {
            y: y.to_vec(),
            b: b.to_vec(),
            beta,
            u,
            log_weight: 0.0,
            step_scale,
            accepted: 0,
            proposed: 0,
            max_drift: 0.0,
            recompute_every: 10_000,
            scale: beta as f64 * n as f64 / 2.0,
            rng,
        };
        chain.log_weight = chain.fresh_log_weight();
        Ok(chain)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// `(βN/2) Σ_ij y_i |U_ij|² b_j`.
    pub fn fresh_log_weight(&self) -> f64 {
        let d = conjugate_diag_diagonal(&self.u, &self.b);
        self.scale * self.y.iter().zip(&d).map(|(a, c)| a * c).sum::<f64>()
    }

    /// `Tr(Y U B U^*)`.
    pub fn trace_statistic(&self) -> f64 {
        self.log_weight / self.scale
    }

    fn row_weight(&self, row: &[Complex64]) -> f64 {
        row.iter().zip(&self.b).map(|(v, b)| v.norm_sqr() * b).sum()
    }

    /// One Givens proposal; returns whether it was accepted.
    pub fn step(&mut self) -> bool {
        let n = self.n();
        self.proposed += 1;
        if n < 2 {
            self.accepted += 1;
            return true;
        }
        let p = self.rng.random_range(0..n);
        let mut q = self.rng.random_range(0..n - 1);
        if q >= p {
            q += 1;
        }
        let theta: f64 = self.step_scale * self.rng.sample::<f64, _>(rand_distr::StandardNormal);
        let phase = if self.beta == 2 {
            let phi: f64 = self.rng.random_range(0.0..std::f64::consts::TAU);
            Complex64::from_polar(1.0, phi)
        } else {
            Complex64::new(1.0, 0.0)
        };
        let (c, s) = (theta.cos(), theta.sin());
        let rp = &self.u.data[p * n..(p + 1) * n];
        let rq = &self.u.data[q * n..(q + 1) * n];
        let new_p: Vec<Complex64> = rp.iter().zip(rq).map(|(a, b)| a * c + phase * b * s).collect();
        let new_q: Vec<Complex64> = rp
            .iter()
            .zip(rq)
            .map(|(a, b)| -phase.conj() * a * s + b * c)
            .collect();
        let old = self.y[p] * self.row_weight(rp) + self.y[q] * self.row_weight(rq);
        let new = self.y[p] * self.row_weight(&new_p) + self.y[q] * self.row_weight(&new_q);
        let dw = self.scale * (new - old);
        let accept = dw >= 0.0 || self.rng.random::<f64>() < dw.exp();
        if accept {
            self.u.data[p * n..(p + 1) * n].copy_from_slice(&new_p);
            self.u.data[q * n..(q + 1) * n].copy_from_slice(&new_q);
            self.log_weight += dw;
            self.accepted += 1;
        }
        if self.recompute_every > 0 && self.proposed % self.recompute_every == 0 {
            self.refresh();
        }
        accept
    }

    /// Re-orthonormalizes `U` and recomputes the log-weight from scratch.
    pub fn refresh(&mut self) {
        let fresh = self.fresh_log_weight();
        self.max_drift = self.max_drift.max((fresh - self.log_weight).abs());
        self.u.reorthonormalize_rows();
        self.log_weight = self.fresh_log_weight();
    }

    pub fn acceptance(&self) -> f64 {
        if self.proposed == 0 {
            1.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    /// Burn-in with step-size adaptation towards acceptance in `[0.3, 0.5]`.
    pub fn burn_in(&mut self, steps: usize, tune: bool) {
        let window = 500;
        let mut acc = 0usize;
        for i in 1..=steps {
            if self.step() {
                acc += 1;
            }
            if tune && i % window == 0 {
                let rate = acc as f64 / window as f64;
                if rate > 0.5 {
                    self.step_scale = (self.step_scale * 1.25).min(std::f64::consts::PI);
                } else if rate < 0.3 {
                    self.step_scale *= 0.75;
                }
                acc = 0;
            }
        }
        self.accepted = 0;
        self.proposed = 0;
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub acceptance: f64,
    pub step_scale: f64,
    /// Integrated autocorrelation time of `Tr(Y U B U^*)` in recorded samples.
    pub tau_int: f64,
    pub effective_samples: f64,
    pub max_drift: f64,
    pub recorded: usize,
}

#[derive(Clone, Debug)]
pub struct TiltedRun<T> {
    pub observations: Vec<T>,
    pub trace: Vec<f64>,
    pub diagnostics: ChainDiagnostics,
}

/// Runs one chain and records `observe(U)` every `thin` steps.
pub fn tilted_sampler<T>(
    y: &[f64],
    b: &[f64],
    beta: u8,
    config: &ChainConfig,
    seed: u64,
    stream: u64,
    mut observe: impl FnMut(&CMatrix) -> T,
) -> Result<TiltedRun<T>> {
    let mut chain = TiltedChain::new(y, b, beta, config.step_scale, seed, stream)?;
    chain.recompute_every = config.recompute_every as u64;
    chain.burn_in(config.burn_in, config.tune);
    let thin = config.thin.max(1);
    let mut observations = Vec::with_capacity(config.steps / thin + 1);
    let mut trace = Vec::with_capacity(config.steps / thin + 1);
    for i in 1..=config.steps {
        chain.step();
        if i % thin == 0 {
            observations.push(observe(&chain.u));
            trace.push(chain.trace_statistic());
        }
    }
    let acceptance = chain.acceptance();
    if acceptance < 0.05 {
        return Err(Error::ChainStuck(acceptance));
    }
    let tau = integrated_autocorrelation(&trace);
    Ok(TiltedRun {
        diagnostics: ChainDiagnostics {
            acceptance,
            step_scale: chain.step_scale,
            tau_int: tau,
            effective_samples: trace.len() as f64 / tau,
            max_drift: chain.max_drift,
            recorded: trace.len(),
        },
        observations,
        trace,
    })
}

#[derive(Clone, Debug)]
pub struct TiltedProfile {
    /// Block-averaged, isotonized `E[diag(U B U^*)]` along increasing `y`.
    pub profile: QuantileMeasure,
    pub raw: Vec<f64>,
    pub stderr: Vec<f64>,
    /// The raw profile decreased by more than its stderr somewhere.
    pub monotonicity_flag: bool,
    pub diagnostics: ChainDiagnostics,
}

/// Chain estimate of the conditional expectation of `diag(U B U^*)` given
/// the coordinates of `Y`, sorted by `y`.
pub fn tilted_diagonal_profile(
    y: &[f64],
    b: &[f64],
    beta: u8,
    config: &ChainConfig,
    seed: u64,
) -> Result<TiltedProfile> {
    let n = y.len();
    let run = tilted_sampler(y, b, beta, config, seed, 0, |u| conjugate_diag_diagonal(u, b))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| y[i].total_cmp(&y[j]));
    // Average within blocks of equal y.
    let mut raw = vec![0.0; n];
    let mut stderr = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && y[order[end]] == y[order[start]] {
            end += 1;
        }
        let block: Vec<f64> = (0..run.observations.len())
            .map(|t| {
                order[start..end]
                    .iter()
                    .map(|&i| run.observations[t][i])
                    .sum::<f64>()
                    / (end - start) as f64
            })
            .collect();
        let m = block.iter().sum::<f64>() / block.len().max(1) as f64;
        let se = batch_stderr(&block, 20);
        for k in start..end {
            raw[k] = m;
            stderr[k] = se;
        }
        start = end;
    }
    let weights: Vec<f64> = stderr
        .iter()
        .map(|s| if *s > 0.0 && s.is_finite() { 1.0 / (s * s) } else { 1e12 })
        .collect();
    let iso = isotonic(&raw, &weights);
    let flag = raw.windows(2).zip(stderr.windows(2)).any(|(r, s)| r[1] < r[0] - (s[0] + s[1]).max(1e-12));
    Ok(TiltedProfile {
        profile: QuantileMeasure::new(iso)?,
        raw,
        stderr,
        monotonicity_flag: flag,
        diagnostics: run.diagnostics,
    })
}

/// Matrix Brownian bridge `X(t) = (1-t)A + t U B U^* + √(t(1-t)) G`, with
/// `U` drawn from the tilted law (tilt `Tr(A U B U^*)`) and `G` from the
/// Gaussian ensemble. Endpoint snapshots are the exact spectra of `A` and `B`.
pub fn bridge_simulate(
    a: &[f64],
    b: &[f64],
    beta: u8,
    t_grid: &[f64],
    n_samples: usize,
    config: &ChainConfig,
    seed: u64,
) -> Result<SpectralExperimentBatch> {
    check_beta(beta)?;
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(a.len(), b.len()));
    }
    if t_grid.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::OutOfRange("t_grid must lie in [0, 1]".into()));
    }
    let n = a.len();
    let scalar = |v: &[f64]| v.iter().all(|&x| x == v[0]);
    let trivial_tilt = scalar(a) || scalar(b);
    let records: Vec<Result<Vec<Vec<f64>>>> = (0..n_samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = stream_rng(seed, s as u64);
            let g = gaussian_ensemble(n, beta, &mut rng);
            let (ubu, commuting) = if scalar(b) {
                (CMatrix::from_diag(b), true)
            } else if trivial_tilt {
                (conjugate_diag(&haar(n, beta, &mut rng), b), false)
            } else {
                let mut chain = TiltedChain::new(a, b, beta, config.step_scale, seed ^ 0xB81D_6E00, s as u64)?;
                chain.burn_in(config.burn_in, config.tune);
                (conjugate_diag(&chain.u, b), false)
            };
            let base = if commuting && scalar(a) {
                Some(hermitian_eigenvalues(&g, JACOBI_TOL))
            } else {
                None
            };
            let spectra = t_grid
                .iter()
                .map(|&t| {
                    if t == 0.0 {
                        sorted(a.to_vec())
                    } else if t == 1.0 {
                        sorted(b.to_vec())
                    } else if let Some(ev) = &base {
                        // Both endpoints scalar: X(t) is a shifted, scaled G.
                        let shift = (1.0 - t) * a[0] + t * b[0];
                        let sc = (t * (1.0 - t)).sqrt();
                        ev.iter().map(|v| shift + sc * v).collect()
                    } else {
                        let x = CMatrix::from_diag(a)
                            .scale(1.0 - t)
                            .add(&ubu.scale(t))
                            .add(&g.scale((t * (1.0 - t)).sqrt()));
                        hermitian_eigenvalues(&x, JACOBI_TOL)
                    }
                })
                .collect();
            Ok(spectra)
        })
        .collect();
    Ok(SpectralExperimentBatch {
        kind: BatchKind::Bridge,
        n,
        beta,
        seed,
        t_grid: t_grid.to_vec(),
        records: records.into_iter().collect::<Result<_>>()?,
    })
}
