//! Spherical (HCIZ) integrals
//! `I_N(A, B) = ∫ exp((βN/2) Tr(A U B U^*)) dU` over Haar `U`, their
//! rates `log I_N / (βN²)`, and large-`N` extrapolation.

use rayon::prelude::*;
use rug::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{conjugate_diag_diagonal, haar, stream_rng};
use crate::measure::QuantileMeasure;
use crate::partition::Partition;

pub const START_BITS: u32 = 128;
pub const MAX_BITS: u32 = 1 << 18;
/// Two consecutive precision levels must agree this well (on the log scale).
pub const AGREEMENT: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HcizMethod {
    /// One side is a multiple of the identity.
    Closed,
    Determinant,
    PermutationSum,
    /// Divided-difference series, exact for repeated eigenvalues.
    Confluent,
    /// Determinant after spreading repeated eigenvalues apart.
    Jittered,
    MonteCarlo,
}

#[derive(Clone, Debug)]
pub struct HcizResult {
    pub log_value: Float,
    pub precision_bits: u32,
    pub method: HcizMethod,
    /// Standard error of `log_value` (Monte Carlo only).
    pub stderr: Option<f64>,
    pub n: usize,
    pub beta: u8,
}

impl HcizResult {
    pub fn log_f64(&self) -> f64 {
        self.log_value.to_f64()
    }

    /// `log I_N / (βN²)`.
    pub fn rate(&self) -> f64 {
        self.log_f64() / (self.beta as f64 * (self.n * self.n) as f64)
    }
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::Empty);
    }
    for (k, v) in a.iter().chain(b).enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite(k));
        }
    }
    Ok(a.len())
}

fn first_repeat(v: &[f64]) -> Option<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s.windows(2).find(|w| w[0] == w[1]).map(|w| w[0])
}

/// `log( ∏_{p=1}^{N-1} p! · N^{-N(N-1)/2} )`.
pub fn log_prefactor(n: usize, prec: u32) -> Float {
    let mut acc = Float::with_val(prec, 0);
    let mut logfact = Float::with_val(prec, 0);
    for p in 1..n {
        logfact += Float::with_val(prec, p).ln();
        acc += &logfact;
    }
    let pairs = (n * (n.saturating_sub(1)) / 2) as u64;
    acc -= Float::with_val(prec, n).ln() * pairs;
    acc
}

/// Determinant by partial pivoting.
fn float_det(mut m: Vec<Vec<Float>>, prec: u32) -> Float {
    let n = m.len();
    let mut det = Float::with_val(prec, 1);
    for c in 0..n {
        let mut p = c;
        for r in c + 1..n {
            if m[r][c].cmp_abs(&m[p][c]) == Some(std::cmp::Ordering::Greater) {
                p = r;
            }
        }
        if m[p][c].is_zero() {
            return Float::with_val(prec, 0);
        }
        if p != c {
            m.swap(p, c);
            det = -det;
        }
        det *= &m[c][c];
        let (top, bottom) = m.split_at_mut(c + 1);
        let pivot_row = &top[c];
        for row in bottom.iter_mut() {
            if row[c].is_zero() {
                continue;
            }
            let factor = Float::with_val(prec, &row[c] / &pivot_row[c]);
            for k in c + 1..n {
                let d = Float::with_val(prec, &factor * &pivot_row[k]);
                row[k] -= d;
            }
        }
    }
    det
}

fn vandermonde(x: &[f64], prec: u32) -> Float {
    let mut acc = Float::with_val(prec, 1);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            acc *= Float::with_val(prec, x[i]) - x[j];
        }
    }
    acc
}

/// Determinantal formula at a fixed working precision; `None` when the
/// cancellation left no meaningful positive value.
fn determinant_log_at(a: &[f64], b: &[f64], prec: u32) -> Option<Float> {
    let n = a.len();
    let nf = n as f64;
    let m: Vec<Vec<Float>> = a
        .iter()
        .map(|&ai| {
            b.iter()
                .map(|&bj| (Float::with_val(prec, ai) * bj * nf).exp())
                .collect()
        })
        .collect();
    let det = float_det(m, prec);
    let val = det / vandermonde(a, prec) / vandermonde(b, prec);
    if !(val.is_finite() && val.is_sign_positive() && !val.is_zero()) {
        return None;
    }
    Some(val.ln() + log_prefactor(n, prec))
}

fn agree(x: &Float, y: &Float, tol: f64) -> bool {
    let d = Float::with_val(64, x - y).abs().to_f64();
    d <= tol
}

/// Doubles the precision from `start` until two consecutive evaluations agree
/// to `tol` on the log scale; returns the higher-precision value.
fn adaptive(
    start: u32,
    tol: f64,
    mut eval: impl FnMut(u32) -> Option<Float>,
) -> Result<(Float, u32)> {
    let mut prec = start.max(START_BITS);
    let mut prev = eval(prec);
    loop {
        let next_prec = prec.checked_mul(2).filter(|&p| p <= MAX_BITS);
        let Some(np) = next_prec else {
            return Err(Error::Precision(prec));
        };
        let cur = eval(np);
        if let (Some(p), Some(c)) = (&prev, &cur) {
            if agree(p, c, tol) {
                return Ok((c.clone(), np));
            }
        }
        prev = cur;
        prec = np;
    }
}

/// Exact `β = 2` spherical integral for distinct spectra, by the determinantal
/// formula in arbitrary precision, starting at `bits` and doubling until two
/// levels agree to [`AGREEMENT`].
pub fn hciz_exact(a: &[f64], b: &[f64], bits: u32) -> Result<HcizResult> {
    hciz_exact_tol(a, b, bits, AGREEMENT)
}

pub fn hciz_exact_tol(a: &[f64], b: &[f64], bits: u32, tol: f64) -> Result<HcizResult> {
    let n = check_pair(a, b)?;
    if let Some(v) = first_repeat(a).or_else(|| first_repeat(b)) {
        return Err(Error::DegenerateSpectrum(v));
    }
    let (log_value, precision_bits) = adaptive(bits, tol, |p| determinant_log_at(a, b, p))?;
    Ok(HcizResult {
        log_value,
        precision_bits,
        method: HcizMethod::Determinant,
        stderr: None,
        n,
        beta: 2,
    })
}

/// `log S_λ(e^{y_1}, ..., e^{y_N})` from the spherical integral with
/// `a_i = (λ_i + N - i)/N` and `b = y`:
/// `S_λ(e^y) = I_N(a, y) Δ(a) Δ(y) / (∏_{p<N} p! · N^{-N(N-1)/2} · Δ(e^y))`.
pub fn log_schur_exp(lambda: &Partition, y: &[f64], bits: u32) -> Result<Float> {
    let n = y.len();
    if lambda.len() > n {
        return Err(Error::OutOfRange(format!("{} parts for {n} variables", lambda.len())));
    }
    let a: Vec<f64> = lambda
        .padded(n)
        .iter()
        .enumerate()
        .map(|(i, &l)| (l as f64 + (n - 1 - i) as f64) / n as f64)
        .collect();
    let r = hciz_exact(&a, y, bits)?;
    let prec = r.precision_bits;
    let mut acc = r.log_value.clone();
    acc -= log_prefactor(n, prec);
    for i in 0..n {
        for j in i + 1..n {
            acc += Float::with_val(prec, a[i] - a[j]).abs().ln();
            acc += Float::with_val(prec, y[i] - y[j]).abs().ln();
            let ei = Float::with_val(prec, y[i]).exp();
            let ej = Float::with_val(prec, y[j]).exp();
            acc -= Float::with_val(prec, ei - ej).abs().ln();
        }
    }
    Ok(acc)
}

/// Signed sum over the symmetric group, `N <= 8`.
pub fn hciz_perm_sum(a: &[f64], b: &[f64], bits: u32) -> Result<HcizResult> {
    let n = check_pair(a, b)?;
    if n > 8 {
        return Err(Error::OutOfRange(format!("permutation sum needs N <= 8, got {n}")));
    }
    if let Some(v) = first_repeat(a).or_else(|| first_repeat(b)) {
        return Err(Error::DegenerateSpectrum(v));
    }
    let prec = bits.max(64);
    let nf = n as f64;
    let mut total = Float::with_val(prec, 0);
    // Heap's algorithm; each swap flips the sign.
    let mut perm: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    let mut sign = 1i32;
    let term = |perm: &[usize]| {
        let mut s = Float::with_val(prec, 0);
        for (i, &p) in perm.iter().enumerate() {
            s += Float::with_val(prec, a[i]) * b[p];
        }
        (s * nf).exp()
    };
    total += term(&perm);
    let mut i = 1;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            sign = -sign;
            let t = term(&perm);
            if sign > 0 {
                total += t;
            } else {
                total -= t;
            }
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    let val = total / vandermonde(a, prec) / vandermonde(b, prec);
    if !(val.is_sign_positive() && !val.is_zero()) {
        return Err(Error::Precision(prec));
    }
    Ok(HcizResult {
        log_value: val.ln() + log_prefactor(n, prec),
        precision_bits: prec,
        method: HcizMethod::PermutationSum,
        stderr: None,
        n,
        beta: 2,
    })
}

/// Complete homogeneous symmetric polynomials `h[i][m] = h_m(x_0..=x_i)`, `m <= k`.
fn complete_homogeneous(x: &[f64], k: usize, prec: u32) -> Vec<Vec<Float>> {
    let n = x.len();
    let mut out: Vec<Vec<Float>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = Vec::with_capacity(k + 1);
        row.push(Float::with_val(prec, 1));
        for m in 1..=k {
            // h_m(x_0..x_i) = h_m(x_0..x_{i-1}) + x_i h_{m-1}(x_0..x_i)
            let mut v = Float::with_val(prec, &row[m - 1] * x[i]);
            if i > 0 {
                v += &out[i - 1][m];
            }
            row.push(v);
        }
        out.push(row);
    }
    out
}

/// Series length: stop once a bound on the remaining terms of
/// `Σ_k N^k/k! h_{k-i}(a) h_{k-j}(b)` is below `2^{-(prec + 64)}`.
fn series_length(n: usize, amax: f64, bmax: f64, prec: u32) -> usize {
    let x = (n as f64 * amax * bmax).max(1e-300);
    let nf = n as f64;
    let mut logfact = 0.0;
    let target = -((prec + 64) as f64) * std::f64::consts::LN_2;
    let mut k = 0usize;
    loop {
        k += 1;
        logfact += (k as f64).ln();
        // |h_m(x_0..x_i)| <= C(m + i, i) A^m, and C(k, i) <= (k + N)^N / N!.
        let binom = nf * ((k as f64 + nf).ln()) - (1..=n).map(|p| (p as f64).ln()).sum::<f64>();
        let bound = k as f64 * x.ln() - logfact + 2.0 * binom.max(0.0);
        if k >= 2 * n && (bound < target || x <= 1e-300) {
            return k;
        }
        if k > 2_000_000 {
            return k;
        }
    }
}

fn confluent_log_at(a: &[f64], b: &[f64], prec: u32) -> Option<Float> {
    let n = a.len();
    let amax = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let bmax = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let k = series_length(n, amax, bmax, prec);
    let ha = complete_homogeneous(a, k, prec);
    let hb = complete_homogeneous(b, k, prec);
    // c_k = N^k / k!
    let mut coef = Vec::with_capacity(k + 1);
    let mut c = Float::with_val(prec, 1);
    coef.push(c.clone());
    for j in 1..=k {
        c *= n as f64;
        c /= j as f64;
        coef.push(c.clone());
    }
    // g[i][j] = Σ_k c_k h_{k-i}(a_0..a_i) h_{k-j}(b_0..b_j) is the matrix of
    // double divided differences of exp(N a b); det g = det[e^{N a_i b_j}] / (Δa Δb).
    let weighted: Vec<Vec<Float>> = (0..n)
        .map(|i| {
            (0..=k)
                .map(|kk| {
                    if kk < i {
                        Float::with_val(prec, 0)
                    } else {
                        Float::with_val(prec, &coef[kk] * &ha[i][kk - i])
                    }
                })
                .collect()
        })
        .collect();
    let mut g = vec![vec![Float::with_val(prec, 0); n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = Float::with_val(prec, 0);
            for kk in i.max(j)..=k {
                let t = Float::with_val(prec, &weighted[i][kk] * &hb[j][kk - j]);
                acc += t;
            }
            g[i][j] = acc;
        }
    }
    let det = float_det(g, prec);
    if !(det.is_finite() && det.is_sign_positive() && !det.is_zero()) {
        return None;
    }
    Some(det.ln() + log_prefactor(n, prec))
}

/// Exact `β = 2` spherical integral allowing repeated eigenvalues, through
/// the divided-difference series of `exp(N a b)`. Cost grows with
/// `N max|a| max|b|`.
pub fn hciz_confluent(a: &[f64], b: &[f64], bits: u32) -> Result<HcizResult> {
    let n = check_pair(a, b)?;
    let (log_value, precision_bits) =
        adaptive(bits, AGREEMENT, |p| confluent_log_at(a, b, p))?;
    Ok(HcizResult {
        log_value,
        precision_bits,
        method: HcizMethod::Confluent,
        stderr: None,
        n,
        beta: 2,
    })
}

/// Spreads each run of equal values symmetrically with spacing
/// `rel_spacing * max(range, 1)`, preserving the sum and order.
pub fn jitter_spectrum(values: &[f64], rel_spacing: f64) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let lo = values[idx[0]];
    let hi = values[idx[idx.len() - 1]];
    let mut spacing = rel_spacing * (hi - lo).max(1.0);
    let mut out = values.to_vec();
    loop {
        let mut start = 0;
        while start < idx.len() {
            let mut end = start + 1;
            while end < idx.len() && values[idx[end]] == values[idx[start]] {
                end += 1;
            }
            let len = end - start;
            for (r, &i) in idx[start..end].iter().enumerate() {
                out[i] = values[i] + (r as f64 - (len as f64 - 1.0) / 2.0) * spacing;
            }
            start = end;
        }
        if idx.windows(2).all(|w| out[w[0]] < out[w[1]]) {
            return out;
        }
        spacing *= 0.5;
    }
}

/// Above this value of `N max|a| max|b|` repeated eigenvalues are jittered
/// instead of summed through the confluent series.
pub const CONFLUENT_LIMIT: f64 = 512.0;
pub const JITTER_SPACING: f64 = 1e-6;

/// Exact `β = 2` value for arbitrary spectra: closed form when one side is
/// scalar, the determinant for distinct spectra, the confluent series for
/// repeated eigenvalues, and jitter beyond [`CONFLUENT_LIMIT`].
pub fn log_spherical_integral(a: &[f64], b: &[f64], bits: u32) -> Result<HcizResult> {
    let n = check_pair(a, b)?;
    let scalar = |v: &[f64]| v.iter().all(|&x| x == v[0]);
    if scalar(a) || scalar(b) {
        let prec = bits.max(START_BITS);
        let mut s = Float::with_val(prec, 0);
        // Tr(A U B U^*) = c Tr(other) when one side is c I.
        let (c, other) = if scalar(b) { (b[0], a) } else { (a[0], b) };
        for &v in other {
            s += Float::with_val(prec, v) * c;
        }
        s *= n as f64;
        return Ok(HcizResult {
            log_value: s,
            precision_bits: prec,
            method: HcizMethod::Closed,
            stderr: None,
            n,
            beta: 2,
        });
    }
    let repeated = first_repeat(a).is_some() || first_repeat(b).is_some();
    if !repeated {
        return hciz_exact(a, b, bits);
    }
    let amax = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let bmax = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if n as f64 * amax * bmax <= CONFLUENT_LIMIT {
        return hciz_confluent(a, b, bits);
    }
    let ja = jitter_spectrum(a, JITTER_SPACING);
    let jb = jitter_spectrum(b, JITTER_SPACING);
    let mut r = hciz_exact(&ja, &jb, bits)?;
    r.method = HcizMethod::Jittered;
    Ok(r)
}

/// Monte Carlo estimate by Haar sampling. Sample `s` uses the generator
/// stream `(seed, s)`, so results are independent of the thread count.
pub fn hciz_mc(a: &[f64], b: &[f64], beta: u8, n_samples: usize, seed: u64) -> Result<HcizResult> {
    let n = check_pair(a, b)?;
    if beta != 1 && beta != 2 {
        return Err(Error::OutOfRange(format!("beta {beta}")));
    }
    if n_samples == 0 {
        return Err(Error::OutOfRange("zero samples".into()));
    }
    let scale = beta as f64 * n as f64 / 2.0;
    let scalar = |v: &[f64]| v.iter().all(|&x| x == v[0]);
    if scalar(a) || scalar(b) {
        let (c, other) = if scalar(b) { (b[0], a) } else { (a[0], b) };
        let v = scale * c * other.iter().sum::<f64>();
        return Ok(HcizResult {
            log_value: Float::with_val(53, v),
            precision_bits: 53,
            method: HcizMethod::MonteCarlo,
            stderr: Some(0.0),
            n,
            beta,
        });
    }
    let xs: Vec<f64> = (0..n_samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = stream_rng(seed, s as u64);
            let u = haar(n, beta, &mut rng);
            let d = conjugate_diag_diagonal(&u, b);
            scale * a.iter().zip(&d).map(|(x, y)| x * y).sum::<f64>()
        })
        .collect();
    let (log_mean, stderr) = log_mean_exp(&xs);
    Ok(HcizResult {
        log_value: Float::with_val(53, log_mean),
        precision_bits: 53,
        method: HcizMethod::MonteCarlo,
        stderr: Some(stderr),
        n,
        beta,
    })
}

/// `log mean exp(x)` and its delta-method standard error.
pub fn log_mean_exp(xs: &[f64]) -> (f64, f64) {
    let mx = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = xs.iter().map(|x| (x - mx).exp()).collect();
    let n = w.len() as f64;
    let mean = w.iter().sum::<f64>() / n;
    let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mx + mean.ln(), (var / n).sqrt() / mean)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub enum LimitMethod {
    Exact { bits: u32 },
    MonteCarlo { beta: u8, n_samples: usize, seed: u64 },
}

impl Default for LimitMethod {
    fn default() -> Self {
        LimitMethod::Exact { bits: START_BITS }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LimitEstimate {
    /// Intercept `a` of the fit `rate_N ≈ a + b / N`.
    pub value: f64,
    pub slope: f64,
    /// Largest absolute deviation of the fit at the schedule points, plus the
    /// largest Monte Carlo standard error.
    pub residual: f64,
    pub per_n: Vec<(usize, f64)>,
}

/// `n`-point spectrum of a measure: averages of its quantile function over
/// `n` equal cells.
pub fn spectrum(mu: &QuantileMeasure, n: usize) -> Vec<f64> {
    mu.cell_averages(n)
}

/// Rate at a single size.
pub fn finite_rate(
    mu_a: &QuantileMeasure,
    mu_b: &QuantileMeasure,
    n: usize,
    method: LimitMethod,
) -> Result<(f64, f64)> {
    let a = spectrum(mu_a, n);
    let b = spectrum(mu_b, n);
    match method {
        LimitMethod::Exact { bits } => {
            let r = log_spherical_integral(&a, &b, bits)?;
            Ok((r.rate(), 0.0))
        }
        LimitMethod::MonteCarlo {
            beta,
            n_samples,
            seed,
        } => {
            let r = hciz_mc(&a, &b, beta, n_samples, seed ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))?;
            let denom = beta as f64 * (n * n) as f64;
            Ok((r.rate(), r.stderr.unwrap_or(0.0) / denom))
        }
    }
}

/// Least-squares fit of `y ≈ a + b / n`; returns `(a, b, max |residual|)`.
pub fn fit_inverse_n(points: &[(usize, f64)]) -> (f64, f64, f64) {
    let k = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| 1.0 / p.0 as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let a = my - b * mx;
    let res = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (a + b * x - y).abs())
        .fold(0.0, f64::max);
    (a, b, res)
}

/// Limiting rate `lim (1/(βN²)) log I_N(μ_A, μ_B)` by extrapolation in `1/N`
/// over the size schedule.
pub fn limit_i_estimate(
    mu_a: &QuantileMeasure,
    mu_b: &QuantileMeasure,
    schedule: &[usize],
    method: LimitMethod,
) -> Result<LimitEstimate> {
    if schedule.len() < 2 {
        return Err(Error::ShortSchedule);
    }
    let mut per_n = Vec::with_capacity(schedule.len());
    let mut worst_se: f64 = 0.0;
    for &n in schedule {
        let (r, se) = finite_rate(mu_a, mu_b, n, method)?;
        worst_se = worst_se.max(se);
        per_n.push((n, r));
    }
    let (value, slope, res) = fit_inverse_n(&per_n);
    Ok(LimitEstimate {
        value,
        slope,
        residual: res + worst_se,
        per_n,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RankOneReport {
    pub n: usize,
    pub theta: f64,
    pub tau: f64,
    /// Rate `log I_N / (2N²)` at `ν_τ = (1-τ)δ_0 + τδ_θ`.
    pub rate: f64,
    /// `τ ∫_0^θ R_μ`.
    pub predicted: f64,
    pub relative_discrepancy: f64,
    /// `(τ/2) ∫_0^θ R_μ`, the prediction on the `1/(βN²)` scale.
    pub predicted_half: f64,
    pub relative_discrepancy_half: f64,
    pub series_diverged: bool,
}

/// Compares the finite-`N` rate at a small-rank perturbation with the
/// integrated R-transform.
pub fn rank_one_asymptotic_check(
    theta: f64,
    tau: f64,
    mu: &QuantileMeasure,
    n: usize,
) -> Result<RankOneReport> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::OutOfRange(format!("tau {tau}")));
    }
    let nu = QuantileMeasure::atomic(&[(0.0, 1.0 - tau), (theta, tau)], n * 64)?;
    let a = spectrum(&nu, n);
    let b = spectrum(mu, n);
    let r = log_spherical_integral(&a, &b, START_BITS)?;
    let series = crate::free_prob::r_transform_series(mu, 16)?;
    let integral = series.integral(theta);
    let predicted = tau * integral;
    let rate = r.rate();
    let rel = |p: f64| (rate - p).abs() / p.abs().max(1e-300);
    Ok(RankOneReport {
        n,
        theta,
        tau,
        rate,
        predicted,
        relative_discrepancy: rel(predicted),
        predicted_half: predicted / 2.0,
        relative_discrepancy_half: rel(predicted / 2.0),
        series_diverged: series.diverges_at(theta),
    })
}
