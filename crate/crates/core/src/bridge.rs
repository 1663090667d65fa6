//! Density and velocity of the spectral bridge estimated from simulations,
//! with the weak Euler residuals, the `|u + iπρ|` bound and the action.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::free_prob::{log_energy, trapezoid};
use crate::hciz::LimitEstimate;
use crate::measure::QuantileMeasure;
use crate::rmt::{BatchKind, SpectralExperimentBatch};

/// Velocity is masked where the density is below this.
pub const DENSITY_FLOOR: f64 = 1e-6;
/// Test functions live where the density exceeds this.
pub const INTERIOR_FLOOR: f64 = 10.0 * DENSITY_FLOOR;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BridgeField {
    pub t_grid: Vec<f64>,
    pub x_grid: Vec<f64>,
    /// `rho[t][x]`.
    pub rho: Vec<Vec<f64>>,
    /// `u[t][x]`, zero where masked.
    pub u: Vec<Vec<f64>>,
    /// `|u + iπρ|`.
    pub f_abs: Vec<Vec<f64>>,
    /// Counting mass of each slice before smoothing.
    pub raw_mass: Vec<f64>,
    pub bandwidth: Vec<f64>,
    pub n: usize,
}

impl BridgeField {
    /// Field from closed-form density and velocity.
    pub fn from_fn(
        t_grid: &[f64],
        x_grid: &[f64],
        rho: impl Fn(f64, f64) -> f64 + Sync,
        u: impl Fn(f64, f64) -> f64 + Sync,
    ) -> Self {
        let rho_m: Vec<Vec<f64>> = t_grid
            .iter()
            .map(|&t| x_grid.iter().map(|&x| rho(t, x).max(0.0)).collect())
            .collect();
        let u_m: Vec<Vec<f64>> = t_grid
            .iter()
            .zip(&rho_m)
            .map(|(&t, r)| {
                x_grid
                    .iter()
                    .zip(r)
                    .map(|(&x, &rv)| if rv > DENSITY_FLOOR { u(t, x) } else { 0.0 })
                    .collect()
            })
            .collect();
        let f_abs = modulus(&rho_m, &u_m);
        Self {
            t_grid: t_grid.to_vec(),
            x_grid: x_grid.to_vec(),
            raw_mass: rho_m.iter().map(|r| trapezoid(x_grid, r)).collect(),
            rho: rho_m,
            u: u_m,
            f_abs,
            bandwidth: vec![0.0; t_grid.len()],
            n: 0,
        }
    }

    /// Trapezoid mass of slice `k`.
    pub fn mass(&self, k: usize) -> f64 {
        trapezoid(&self.x_grid, &self.rho[k])
    }

    /// Writes `t,x,rho,u` rows.
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "x", "rho", "u"])?;
        for (k, &t) in self.t_grid.iter().enumerate() {
            for (j, &x) in self.x_grid.iter().enumerate() {
                w.write_record(&[
                    t.to_string(),
                    x.to_string(),
                    self.rho[k][j].to_string(),
                    self.u[k][j].to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn modulus(rho: &[Vec<f64>], u: &[Vec<f64>]) -> Vec<Vec<f64>> {
    rho.iter()
        .zip(u)
        .map(|(r, v)| r.iter().zip(v).map(|(a, b)| b.hypot(PI * a)).collect())
        .collect()
}

/// `ρ_t = semicircle(t(1-t))`, `u_t = x(1-2t)/(2t(1-t))`: the bridge between
/// two zero matrices.
pub fn zero_bridge_field(t_grid: &[f64], x_grid: &[f64]) -> BridgeField {
    BridgeField::from_fn(
        t_grid,
        x_grid,
        |t, x| semicircle_pdf(t * (1.0 - t), x),
        |t, x| x * (1.0 - 2.0 * t) / (2.0 * t * (1.0 - t)),
    )
}

/// Semicircle bridge between centered semicircles of variances `a` and `b`:
/// variance `q(t) = αt² + βt + a` with `β² - 4αa = 1`, velocity `x q'/(2q)`.
pub fn semicircle_pair_field(a: f64, b: f64, t_grid: &[f64], x_grid: &[f64]) -> Result<BridgeField> {
    let (alpha, beta) = semicircle_pair_coefficients(a, b)?;
    let q = move |t: f64| alpha * t * t + beta * t + a;
    let dq = move |t: f64| 2.0 * alpha * t + beta;
    Ok(BridgeField::from_fn(
        t_grid,
        x_grid,
        move |t, x| semicircle_pdf(q(t), x),
        move |t, x| x * dq(t) / (2.0 * q(t)),
    ))
}

pub fn semicircle_pair_coefficients(a: f64, b: f64) -> Result<(f64, f64)> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::OutOfRange("semicircle variances must be positive".into()));
    }
    let beta = -2.0 * a + (4.0 * a * b + 1.0).sqrt();
    Ok((b - a - beta, beta))
}

/// Action of the semicircle pair bridge in closed form,
/// `∫_0^1 (1 + q'²)/(4q) dt`, by composite Simpson on 4096 panels.
pub fn semicircle_pair_action(a: f64, b: f64) -> Result<f64> {
    let (alpha, beta) = semicircle_pair_coefficients(a, b)?;
    let f = |t: f64| {
        let q = alpha * t * t + beta * t + a;
        let dq = 2.0 * alpha * t + beta;
        (1.0 + dq * dq) / (4.0 * q)
    };
    let m = 4096;
    let h = 1.0 / m as f64;
    let mut s = f(0.0) + f(1.0);
    for k in 1..m {
        s += f(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    Ok(s * h / 3.0)
}

pub fn semicircle_pdf(variance: f64, x: f64) -> f64 {
    let r2 = 4.0 * variance;
    if x * x >= r2 {
        0.0
    } else {
        (r2 - x * x).sqrt() / (2.0 * PI * variance)
    }
}

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Means of `m` equal cells of a sorted sample.
fn cell_means(sorted: &[f64], m: usize) -> Vec<f64> {
    let len = sorted.len();
    (0..m)
        .map(|k| {
            let lo = k * len / m;
            let hi = ((k + 1) * len / m).max(lo + 1).min(len);
            sorted[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Linear interpolation through nondecreasing `pos`; `None` outside its range.
fn interpolate(pos: &[f64], val: &[f64], x: f64) -> Option<f64> {
    let last = pos.len().checked_sub(1)?;
    if x < pos[0] || x > pos[last] {
        return None;
    }
    let i = pos.partition_point(|&p| p <= x);
    if i == 0 {
        return Some(val[0]);
    }
    if i > last {
        // x equals the top position; average any tied values there.
        let j = pos.partition_point(|&p| p < x);
        return Some(val[j..].iter().sum::<f64>() / (last + 1 - j) as f64);
    }
    let (p0, p1) = (pos[i - 1], pos[i]);
    let w = (x - p0) / (p1 - p0);
    Some(val[i - 1] + w * (val[i] - val[i - 1]))
}

/// Kernel estimate of the bridge. Bandwidth `c σ_t N^{-1/3}` with `σ_t` the
/// pooled spread of slice `t`, floored at two grid steps. The velocity comes
/// from `ρu = -∂_t F` in quantile form: the `N` pooled cell quantiles are
/// differenced in time and read off at their current positions, and `u` is
/// masked outside their range.
pub fn estimate_field(batch: &SpectralExperimentBatch, x_grid: &[f64], c: f64) -> Result<BridgeField> {
    if batch.kind != BatchKind::Bridge {
        return Err(Error::Malformed("field estimation needs a bridge batch".into()));
    }
    let nt = batch.t_grid.len();
    if nt < 3 {
        return Err(Error::ShortSchedule);
    }
    if x_grid.len() < 2 || x_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Malformed("x grid must be increasing".into()));
    }
    let dx = x_grid.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let n = batch.n;
    let slices: Vec<(Vec<f64>, Vec<f64>, f64, f64)> = (0..nt)
        .into_par_iter()
        .map(|k| {
            let mut pooled: Vec<f64> = batch.records.iter().flat_map(|r| r[k].iter().copied()).collect();
            pooled.sort_by(f64::total_cmp);
            let count = pooled.len();
            let raw_mass = count as f64 / (n * batch.records.len()) as f64;
            let mean = pooled.iter().sum::<f64>() / count as f64;
            let sd = (pooled.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count as f64).sqrt();
            let h = (c * sd * (n as f64).powf(-1.0 / 3.0)).max(2.0 * dx);
            let rho: Vec<f64> = x_grid
                .iter()
                .map(|&x| pooled.iter().map(|&v| normal_pdf((x - v) / h)).sum::<f64>() / (count as f64 * h))
                .collect();
            let quantiles = cell_means(&pooled, n);
            (rho, quantiles, raw_mass, h)
        })
        .collect();
    let t = &batch.t_grid;
    let mut rho = Vec::with_capacity(nt);
    let mut u = Vec::with_capacity(nt);
    for k in 0..nt {
        let (lo, hi) = if k == 0 {
            (0, 1)
        } else if k == nt - 1 {
            (nt - 2, nt - 1)
        } else {
            (k - 1, k + 1)
        };
        let dt = t[hi] - t[lo];
        let r = &slices[k].0;
        // Lagrangian form of ρu = -∂_t F: u(T_t(q)) = ∂_t T_t(q).
        let pos = &slices[k].1;
        let speed: Vec<f64> = slices[hi].1.iter().zip(&slices[lo].1).map(|(a, b)| (a - b) / dt).collect();
        let vel: Vec<f64> = x_grid
            .iter()
            .zip(r)
            .map(|(&x, &rv)| {
                if rv > DENSITY_FLOOR {
                    interpolate(pos, &speed, x).unwrap_or(0.0)
                } else {
                    0.0
                }
            })
            .collect();
        rho.push(r.clone());
        u.push(vel);
    }
    let f_abs = modulus(&rho, &u);
    Ok(BridgeField {
        t_grid: t.clone(),
        x_grid: x_grid.to_vec(),
        rho,
        u,
        f_abs,
        raw_mass: slices.iter().map(|s| s.2).collect(),
        bandwidth: slices.iter().map(|s| s.3).collect(),
        n,
    })
}

/// `(1 - s²)³` on `|s| < 1` and its derivative.
fn bump(s: f64) -> (f64, f64) {
    if s.abs() >= 1.0 {
        (0.0, 0.0)
    } else {
        let w = 1.0 - s * s;
        (w * w * w, -6.0 * s * w * w)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TestFunction {
    pub t_center: f64,
    pub t_half_width: f64,
    pub x_center: f64,
    pub x_half_width: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EulerResidual {
    /// Largest `|∫∫ ρ ∂_tφ + ρu ∂_xφ| / E(φ)` over the battery.
    pub continuity: f64,
    /// Largest `|∫∫ ρu ∂_tφ + (ρu² - π²ρ³/3) ∂_xφ| / E(φ)`.
    pub momentum: f64,
    pub battery: Vec<TestFunction>,
    /// Per test function, `(continuity, momentum)`.
    pub per_function: Vec<(f64, f64)>,
}

impl EulerResidual {
    pub fn combined(&self) -> f64 {
        self.continuity + self.momentum
    }
}

fn trapezoid_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut w = vec![0.0; n];
    for k in 0..n.saturating_sub(1) {
        let h = x[k + 1] - x[k];
        w[k] += h / 2.0;
        w[k + 1] += h / 2.0;
    }
    w
}

/// Tensor bumps inside `{ρ > 10 · floor}`: three time windows across the
/// interior times, three spatial bumps per window.
pub fn test_battery(field: &BridgeField) -> Result<Vec<TestFunction>> {
    let interior: Vec<usize> = (0..field.t_grid.len())
        .filter(|&k| field.t_grid[k] > 0.0 && field.t_grid[k] < 1.0)
        .collect();
    if interior.len() < 3 {
        return Err(Error::ShortSchedule);
    }
    let t_lo = field.t_grid[interior[0]];
    let t_hi = field.t_grid[*interior.last().unwrap()];
    let wt = (t_hi - t_lo) / 4.0;
    let mut out = Vec::new();
    for q in 1..=3 {
        let tc = t_lo + wt * q as f64;
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for k in 0..field.t_grid.len() {
            if (field.t_grid[k] - tc).abs() >= wt {
                continue;
            }
            let inside: Vec<f64> = field
                .x_grid
                .iter()
                .zip(&field.rho[k])
                .filter(|(_, &r)| r > INTERIOR_FLOOR)
                .map(|(&x, _)| x)
                .collect();
            if inside.is_empty() {
                lo = f64::INFINITY;
                break;
            }
            lo = lo.max(inside[0]);
            hi = hi.min(inside[inside.len() - 1]);
        }
        if !(hi > lo) {
            continue;
        }
        let wx = (hi - lo) / 4.0;
        for p in 1..=3 {
            out.push(TestFunction {
                t_center: tc,
                t_half_width: wt,
                x_center: lo + wx * p as f64,
                x_half_width: wx,
            });
        }
    }
    if out.is_empty() {
        return Err(Error::OutOfRange("no interior region for test functions".into()));
    }
    Ok(out)
}

/// Weak residuals of the continuity and isentropic Euler equations,
/// normalized by `E(φ) = (∫∫ φ_t² + φ_x²)^{1/2}`.
pub fn euler_residual(field: &BridgeField) -> Result<EulerResidual> {
    let battery = test_battery(field)?;
    let wt = trapezoid_weights(&field.t_grid);
    let wx = trapezoid_weights(&field.x_grid);
    let per_function: Vec<(f64, f64)> = battery
        .par_iter()
        .map(|tf| {
            let (mut rc, mut rm, mut energy) = (0.0, 0.0, 0.0);
            for (k, &t) in field.t_grid.iter().enumerate() {
                let (pt, dpt) = bump((t - tf.t_center) / tf.t_half_width);
                if pt == 0.0 && dpt == 0.0 {
                    continue;
                }
                for (j, &x) in field.x_grid.iter().enumerate() {
                    let (px, dpx) = bump((x - tf.x_center) / tf.x_half_width);
                    if px == 0.0 && dpx == 0.0 {
                        continue;
                    }
                    let phi_t = dpt / tf.t_half_width * px;
                    let phi_x = pt * dpx / tf.x_half_width;
                    let r = field.rho[k][j];
                    let m = r * field.u[k][j];
                    let w = wt[k] * wx[j];
                    rc += w * (r * phi_t + m * phi_x);
                    rm += w * (m * phi_t + (m * field.u[k][j] - PI * PI * r * r * r / 3.0) * phi_x);
                    energy += w * (phi_t * phi_t + phi_x * phi_x);
                }
            }
            let e = energy.sqrt().max(f64::MIN_POSITIVE);
            (rc.abs() / e, rm.abs() / e)
        })
        .collect();
    Ok(EulerResidual {
        continuity: per_function.iter().map(|p| p.0).fold(0.0, f64::max),
        momentum: per_function.iter().map(|p| p.1).fold(0.0, f64::max),
        battery,
        per_function,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FBound {
    /// `max |f| √(t(1-t))` over interior times and `{ρ > 10 · floor}`.
    pub max_product: f64,
    /// `max_product / max(K, 1)`.
    pub constant: f64,
    pub support_bound: f64,
    pub per_time: Vec<(f64, f64)>,
}

/// Measures the constant in `|u + iπρ| √(t(1-t)) <= C K`. `K` below one is
/// replaced by one so that the zero-endpoint bridge gets a finite constant.
pub fn f_bound_check(field: &BridgeField, support_bound: f64) -> FBound {
    let mut per_time = Vec::new();
    for (k, &t) in field.t_grid.iter().enumerate() {
        if t <= 0.0 || t >= 1.0 {
            continue;
        }
        let s = (t * (1.0 - t)).sqrt();
        let m = field.f_abs[k]
            .iter()
            .zip(&field.rho[k])
            .filter(|(_, &r)| r > INTERIOR_FLOOR)
            .map(|(f, _)| f * s)
            .fold(0.0, f64::max);
        per_time.push((t, m));
    }
    let max_product = per_time.iter().map(|p| p.1).fold(0.0, f64::max);
    FBound {
        max_product,
        constant: max_product / support_bound.max(1.0),
        support_bound,
        per_time,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ActionValue {
    pub value: f64,
    pub pressure: f64,
    pub kinetic: f64,
    /// `(t, ∫ π²ρ³/3 + u²ρ dx)` per slice.
    pub per_time: Vec<(f64, f64)>,
}

/// `S(u, ρ) = ∫∫ (π²ρ³/3 + u²ρ) dx dt` by the trapezoid rule.
pub fn action(field: &BridgeField) -> ActionValue {
    let mut pressure_t = Vec::with_capacity(field.t_grid.len());
    let mut kinetic_t = Vec::with_capacity(field.t_grid.len());
    for k in 0..field.t_grid.len() {
        let p: Vec<f64> = field.rho[k].iter().map(|r| PI * PI * r * r * r / 3.0).collect();
        let kin: Vec<f64> = field.rho[k].iter().zip(&field.u[k]).map(|(r, u)| u * u * r).collect();
        pressure_t.push(trapezoid(&field.x_grid, &p));
        kinetic_t.push(trapezoid(&field.x_grid, &kin));
    }
    let pressure = trapezoid(&field.t_grid, &pressure_t);
    let kinetic = trapezoid(&field.t_grid, &kinetic_t);
    ActionValue {
        value: pressure + kinetic,
        pressure,
        kinetic,
        per_time: field
            .t_grid
            .iter()
            .zip(pressure_t.iter().zip(&kinetic_t))
            .map(|(&t, (p, k))| (t, p + k))
            .collect(),
    }
}

/// One endpoint pair with its action and spherical rate estimate.
#[derive(Clone, Debug)]
pub struct ActionInstance {
    pub action: f64,
    /// Uncertainty of `action`.
    pub action_error: f64,
    pub mu_a: QuantileMeasure,
    pub mu_b: QuantileMeasure,
    pub i_estimate: LimitEstimate,
}

/// Coefficients of `S`, `Σ(μ_A) + Σ(μ_B)` and `∫x² dμ_A + ∫x² dμ_B` in the
/// action representation of `I`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionCoefficients {
    pub action: f64,
    pub log_energy: f64,
    pub second_moment: f64,
}

impl ActionCoefficients {
    /// Values for `I = lim (1/(βN²)) log ∫ exp((βN/2) Tr(AUBU^*)) dU`. They
    /// satisfy `second_moment = -action`, which `I(δ_0, μ) = 0` forces.
    pub fn calibrated() -> Self {
        Self {
            action: -0.25,
            log_energy: -0.25,
            second_moment: 0.25,
        }
    }

    /// `(-1/2, -1/2, 1/4)`, kept as a diagnostic.
    pub fn literal() -> Self {
        Self {
            action: -0.5,
            log_energy: -0.5,
            second_moment: 0.25,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ActionDifference {
    pub i_difference: f64,
    pub predicted_difference: f64,
    pub action_term: f64,
    pub log_energy_term: f64,
    pub second_moment_term: f64,
    pub slack: f64,
    pub agree: bool,
}

/// Compares `I(μ_A, μ_B) - I(μ_A', μ_B')` with
/// `c_S ΔS + c_Σ Δ(Σ(μ_A) + Σ(μ_B)) + c_2 Δ(∫x² dμ_A + ∫x² dμ_B)`; the
/// unknown constant cancels. `log_energy_error` bounds the quadrature error
/// of each Σ.
pub fn action_difference_check(
    first: &ActionInstance,
    second: &ActionInstance,
    coefficients: ActionCoefficients,
    log_energy_error: f64,
) -> Result<ActionDifference> {
    let sigma = |m: &QuantileMeasure| -> Result<f64> {
        let le = log_energy(m);
        if le.atom {
            return Err(Error::OutOfRange("log-energy is infinite for a measure with atoms".into()));
        }
        Ok(le.value)
    };
    let s1 = sigma(&first.mu_a)? + sigma(&first.mu_b)?;
    let s2 = sigma(&second.mu_a)? + sigma(&second.mu_b)?;
    let m1 = first.mu_a.moment(2) + first.mu_b.moment(2);
    let m2 = second.mu_a.moment(2) + second.mu_b.moment(2);
    let c = coefficients;
    let action_term = c.action * (first.action - second.action);
    let log_energy_term = c.log_energy * (s1 - s2);
    let second_moment_term = c.second_moment * (m1 - m2);
    let predicted = action_term + log_energy_term + second_moment_term;
    let i_difference = first.i_estimate.value - second.i_estimate.value;
    let slack = first.i_estimate.residual
        + second.i_estimate.residual
        + c.action.abs() * (first.action_error + second.action_error)
        + 2.0 * log_energy_error;
    Ok(ActionDifference {
        i_difference,
        predicted_difference: predicted,
        action_term,
        log_energy_term,
        second_moment_term,
        slack,
        agree: (i_difference - predicted).abs() <= slack,
    })
}
