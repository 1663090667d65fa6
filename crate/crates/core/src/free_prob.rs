//! Cauchy transforms, semicircular subordination, Stieltjes inversion, free
//! cumulants and logarithmic energy.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{conjugate_diag, haar, hermitian_eigenvalues, stream_rng, CMatrix, JACOBI_TOL};
use crate::measure::QuantileMeasure;

/// `G_μ(z) = ∫ dμ(x) / (z - x)`, defined off the real axis only.
pub fn cauchy_transform(mu: &QuantileMeasure, z: Complex64) -> Result<Complex64> {
    if z.im == 0.0 || !z.is_finite() {
        return Err(Error::OutOfRange(format!("evaluate off the real axis (z = {z})")));
    }
    Ok(cauchy_sum(mu, z))
}

fn cauchy_sum(mu: &QuantileMeasure, z: Complex64) -> Complex64 {
    let m = mu.len() as f64;
    mu.values().iter().map(|&t| 1.0 / (z - t)).sum::<Complex64>() / m
}

/// `G_μ'(z) = -∫ dμ(x) / (z - x)²`.
pub fn cauchy_derivative(mu: &QuantileMeasure, z: Complex64) -> Complex64 {
    let m = mu.len() as f64;
    -mu.values()
        .iter()
        .map(|&t| {
            let d = z - t;
            1.0 / (d * d)
        })
        .sum::<Complex64>()
        / m
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Subordination {
    pub omega: Complex64,
    /// `G_{λ ⊞ σ_s}(z) = G_λ(ω)`.
    pub g: Complex64,
    pub iterations: usize,
    pub residual: f64,
}

pub const SUBORDINATION_TOL: f64 = 1e-12;
pub const SUBORDINATION_MAX_ITER: usize = 10_000;

/// Solves `ω = z - s G_λ(ω)` in the upper half-plane. Newton steps are taken
/// when they stay in `ℂ⁺` and reduce the residual; otherwise a damped
/// fixed-point step with halving keeps `ω` in `ℂ⁺`.
pub fn semicircle_subordination(lambda: &QuantileMeasure, s: f64, z: Complex64) -> Result<Subordination> {
    if !(z.im > 0.0) {
        return Err(Error::OutOfRange(format!("Im z = {} must be positive", z.im)));
    }
    if !(s >= 0.0) {
        return Err(Error::OutOfRange(format!("variance {s}")));
    }
    let resid = |w: Complex64| (w + s * cauchy_sum(lambda, w) - z).norm();
    let mut w = z;
    let mut r = resid(w);
    for it in 0..SUBORDINATION_MAX_ITER {
        if r < SUBORDINATION_TOL {
            return Ok(Subordination {
                omega: w,
                g: cauchy_sum(lambda, w),
                iterations: it,
                residual: r,
            });
        }
        let g = cauchy_sum(lambda, w);
        let f = w + s * g - z;
        let fp = 1.0 + s * cauchy_derivative(lambda, w);
        let newton = w - f / fp;
        if newton.im > 0.0 && newton.is_finite() {
            let rn = resid(newton);
            if rn < r {
                w = newton;
                r = rn;
                continue;
            }
        }
        let target = z - s * g;
        let mut alpha = 1.0;
        let mut next = w + (target - w) * alpha;
        while next.im <= 0.0 && alpha > 1e-12 {
            alpha *= 0.5;
            next = w + (target - w) * alpha;
        }
        w = next;
        r = resid(w);
    }
    Err(Error::NoConvergence(r))
}

/// Density of the centered semicircle law of variance `s`.
pub fn semicircle_density(s: f64, x: f64) -> f64 {
    let r2 = 4.0 * s - x * x;
    if r2 <= 0.0 {
        0.0
    } else {
        r2.sqrt() / (2.0 * std::f64::consts::PI * s)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DensityCurve {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub total_mass: f64,
    /// Points where halving `η` changed the value by more than 10%, which
    /// signals an atom or an unresolved edge.
    pub unstable: Vec<bool>,
    pub renormalized: bool,
}

impl DensityCurve {
    pub fn normalized(mut self) -> Self {
        if self.total_mass > 0.0 {
            for d in &mut self.density {
                *d /= self.total_mass;
            }
            self.total_mass = 1.0;
            self.renormalized = true;
        }
        self
    }
}

pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

/// Stieltjes inversion `ρ(x) = -Im G(x + iη) / π`, Richardson-extrapolated
/// over successive halvings of `eta0`.
pub fn density_from_transform(
    g: impl Fn(Complex64) -> Result<Complex64> + Sync,
    grid: &[f64],
    eta0: f64,
    levels: usize,
) -> Result<DensityCurve> {
    let levels = levels.max(2);
    let rows: Vec<Result<(f64, bool)>> = grid
        .par_iter()
        .map(|&x| {
            let mut vals = Vec::with_capacity(levels);
            let mut eta = eta0;
            for _ in 0..levels {
                let gv = g(Complex64::new(x, eta))?;
                vals.push(-gv.im / std::f64::consts::PI);
                eta *= 0.5;
            }
            // Neville table for linear-in-η error: each level doubles the weight.
            let mut table = vals.clone();
            for k in 1..levels {
                for j in (k..levels).rev() {
                    let f = 2f64.powi(k as i32);
                    table[j] = (f * table[j] - table[j - 1]) / (f - 1.0);
                }
            }
            let est = table[levels - 1];
            let last = vals[levels - 1];
            let prev = vals[levels - 2];
            let unstable = (last - prev).abs() > 0.1 * last.abs().max(1e-3);
            Ok((est.max(0.0), unstable))
        })
        .collect();
    let mut density = Vec::with_capacity(grid.len());
    let mut unstable = Vec::with_capacity(grid.len());
    for r in rows {
        let (d, u) = r?;
        density.push(d);
        unstable.push(u);
    }
    let total_mass = trapezoid(grid, &density);
    Ok(DensityCurve {
        grid: grid.to_vec(),
        density,
        total_mass,
        unstable,
        renormalized: false,
    })
}

/// Density of `λ ⊞ σ_s` on a grid.
pub fn free_semicircle_density(
    lambda: &QuantileMeasure,
    s: f64,
    grid: &[f64],
    eta0: f64,
) -> Result<DensityCurve> {
    density_from_transform(
        |z| semicircle_subordination(lambda, s, z).map(|r| r.g),
        grid,
        eta0,
        3,
    )
}

/// Free cumulants `κ_1..κ_n` from moments `m_1..m_n` through
/// `m_n = Σ_s κ_s [z^{n-s}] M(z)^s`, `M(z) = Σ_j m_j z^j`.
pub fn moments_to_free_cumulants(moments: &[f64]) -> Vec<f64> {
    let n = moments.len();
    let mut mser = vec![1.0];
    mser.extend_from_slice(moments);
    let powers = series_powers(&mser, n);
    let mut kappa = vec![0.0; n + 1];
    for k in 1..=n {
        let mut acc = moments[k - 1];
        for s in 1..k {
            acc -= kappa[s] * powers[s][k - s];
        }
        kappa[k] = acc;
    }
    kappa[1..].to_vec()
}

/// Inverse of [`moments_to_free_cumulants`].
pub fn free_cumulants_to_moments(kappa: &[f64]) -> Vec<f64> {
    let n = kappa.len();
    let mut mser = vec![0.0; n + 1];
    mser[0] = 1.0;
    for k in 1..=n {
        // Coefficients of M up to degree k - 1 are known here.
        let powers = series_powers(&mser[..k], k);
        let mut acc = kappa[k - 1];
        for s in 1..k {
            acc += kappa[s - 1] * powers[s][k - s];
        }
        mser[k] = acc;
    }
    mser[1..].to_vec()
}

/// `powers[s][j] = [z^j] M(z)^s` for `s, j <= n`.
fn series_powers(m: &[f64], n: usize) -> Vec<Vec<f64>> {
    let coef = |j: usize| m.get(j).copied().unwrap_or(0.0);
    let mut powers = vec![vec![0.0; n + 1]; n + 1];
    powers[0][0] = 1.0;
    for s in 1..=n {
        for j in 0..=n {
            let mut acc = 0.0;
            for i in 0..=j {
                acc += powers[s - 1][i] * coef(j - i);
            }
            powers[s][j] = acc;
        }
    }
    powers
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RSeries {
    /// `κ_1, κ_2, ...`; `R(z) = Σ κ_{n+1} z^n`.
    pub cumulants: Vec<f64>,
}

impl RSeries {
    pub fn eval(&self, z: f64) -> f64 {
        self.cumulants
            .iter()
            .enumerate()
            .map(|(n, k)| k * z.powi(n as i32))
            .sum()
    }

    /// `∫_0^θ R(t) dt = Σ κ_n θ^n / n`.
    pub fn integral(&self, theta: f64) -> f64 {
        self.cumulants
            .iter()
            .enumerate()
            .map(|(i, k)| k * theta.powi(i as i32 + 1) / (i as f64 + 1.0))
            .sum()
    }

    /// True when the last terms of the integrated series are not negligible.
    pub fn diverges_at(&self, theta: f64) -> bool {
        let terms: Vec<f64> = self
            .cumulants
            .iter()
            .enumerate()
            .map(|(i, k)| (k * theta.powi(i as i32 + 1) / (i as f64 + 1.0)).abs())
            .collect();
        let total: f64 = terms.iter().sum();
        let tail = terms.iter().rev().take(2).cloned().fold(0.0, f64::max);
        tail > 1e-6 * total.max(1e-12)
    }
}

/// Free cumulants of `μ` up to `order <= 16`.
pub fn r_transform_series(mu: &QuantileMeasure, order: usize) -> Result<RSeries> {
    if order == 0 || order > 16 {
        return Err(Error::OutOfRange(format!("order {order} not in 1..=16")));
    }
    let moments: Vec<f64> = (1..=order as i32).map(|p| mu.moment(p)).collect();
    Ok(RSeries {
        cumulants: moments_to_free_cumulants(&moments),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvolutionProxy {
    pub measure: QuantileMeasure,
    /// Standard error of the averaged quantile function in `L¹`.
    pub stderr: f64,
    pub n_samples: usize,
}

/// Averaged sorted spectrum of `A + U B U^*` with Haar unitary `U`.
pub fn free_convolution_proxy(
    mu_a: &QuantileMeasure,
    mu_b: &QuantileMeasure,
    n: usize,
    n_samples: usize,
    seed: u64,
) -> Result<ConvolutionProxy> {
    if n_samples == 0 || n == 0 {
        return Err(Error::OutOfRange("empty proxy".into()));
    }
    let a = mu_a.cell_averages(n);
    let b = mu_b.cell_averages(n);
    let spectra: Vec<Vec<f64>> = (0..n_samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = stream_rng(seed, s as u64);
            let u = haar(n, 2, &mut rng);
            let m = CMatrix::from_diag(&a).add(&conjugate_diag(&u, &b));
            hermitian_eigenvalues(&m, JACOBI_TOL)
        })
        .collect();
    let ns = n_samples as f64;
    let mean: Vec<f64> = (0..n)
        .map(|k| spectra.iter().map(|s| s[k]).sum::<f64>() / ns)
        .collect();
    let sd_sum: f64 = (0..n)
        .map(|k| {
            let v = spectra.iter().map(|s| (s[k] - mean[k]).powi(2)).sum::<f64>() / (ns - 1.0).max(1.0);
            v.sqrt()
        })
        .sum();
    Ok(ConvolutionProxy {
        measure: QuantileMeasure::from_unsorted(mean)?,
        stderr: sd_sum / n as f64 / ns.sqrt(),
        n_samples,
    })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LogEnergy {
    /// `∬ log|x - y| dμ dμ`, `-∞` when an atom is present.
    pub value: f64,
    pub atom: bool,
}

/// Logarithmic energy of a quantile grid: the off-diagonal pair sum plus a
/// self-interaction term `(1/m²) Σ_k (log s_k - 3/2)` with `s_k` the local
/// grid spacing. The correction is exact under dilations and equals
/// `-(log m + 3/2)/m` on the uniform grid.
pub fn log_energy(mu: &QuantileMeasure) -> LogEnergy {
    let t = mu.values();
    let m = t.len();
    if m < 2 || t.windows(2).any(|w| w[0] == w[1]) {
        return LogEnergy {
            value: f64::NEG_INFINITY,
            atom: true,
        };
    }
    let mut off = 0.0;
    for j in 0..m {
        for k in j + 1..m {
            off += (t[k] - t[j]).ln();
        }
    }
    let mut corr = 0.0;
    for k in 0..m {
        let s = if k == 0 {
            t[1] - t[0]
        } else if k == m - 1 {
            t[m - 1] - t[m - 2]
        } else {
            0.5 * (t[k + 1] - t[k - 1])
        };
        corr += s.ln() - 1.5;
    }
    let mf = (m * m) as f64;
    LogEnergy {
        value: 2.0 * off / mf + corr / mf,
        atom: false,
    }
}
