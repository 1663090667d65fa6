//! Compactly supported probability measures on the real line, stored through
//! their quantile function on a uniform midpoint grid.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_GRID: usize = 256;

/// Entry `k` holds `T((k + 1/2) / m)` for `k = 0..m`; entries are nondecreasing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantileMeasure {
    values: Vec<f64>,
}

impl QuantileMeasure {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty);
        }
        for (k, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite(k));
            }
        }
        for k in 1..values.len() {
            if values[k] < values[k - 1] {
                return Err(Error::NonMonotone(k));
            }
        }
        Ok(Self { values })
    }

    /// Sorts first; use for spectra and other unordered data.
    pub fn from_unsorted(mut values: Vec<f64>) -> Result<Self> {
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(k));
        }
        values.sort_by(f64::total_cmp);
        Self::new(values)
    }

    /// Samples a quantile function at the grid midpoints.
    pub fn from_quantile_fn(m: usize, t: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new((0..m).map(|k| t((k as f64 + 0.5) / m as f64)).collect())
    }

    /// Right-continuous generalized inverse of the empirical CDF at the midpoints.
    pub fn from_samples(samples: &[f64], m: usize) -> Result<Self> {
        if samples.is_empty() || m == 0 {
            return Err(Error::Empty);
        }
        let mut s = samples.to_vec();
        if let Some(k) = s.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(k));
        }
        s.sort_by(f64::total_cmp);
        let n = s.len() as f64;
        Self::new(
            (0..m)
                .map(|k| {
                    let u = (k as f64 + 0.5) / m as f64;
                    let idx = ((u * n).ceil() as usize).clamp(1, s.len()) - 1;
                    s[idx]
                })
                .collect(),
        )
    }

    pub fn dirac(c: f64, m: usize) -> Result<Self> {
        Self::new(vec![c; m.max(1)])
    }

    pub fn uniform(a: f64, b: f64, m: usize) -> Result<Self> {
        if !(b >= a) {
            return Err(Error::OutOfRange(format!("uniform [{a}, {b}]")));
        }
        Self::from_quantile_fn(m, |u| a + (b - a) * u)
    }

    /// Centered semicircle law of the given variance.
    pub fn semicircle(variance: f64, m: usize) -> Result<Self> {
        if !(variance >= 0.0) {
            return Err(Error::OutOfRange(format!("variance {variance}")));
        }
        let r = 2.0 * variance.sqrt();
        Self::from_quantile_fn(m, |u| r * semicircle_unit_quantile(u))
    }

    /// Finite atomic measure; masses are normalized.
    pub fn atomic(atoms: &[(f64, f64)], m: usize) -> Result<Self> {
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if atoms.is_empty() || !(total > 0.0) || atoms.iter().any(|a| a.1 < 0.0) {
            return Err(Error::OutOfRange("atomic masses".into()));
        }
        let mut sorted = atoms.to_vec();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self::from_quantile_fn(m, |u| {
            let mut acc = 0.0;
            for &(x, w) in &sorted {
                acc += w / total;
                if acc >= u - 1e-15 {
                    return x;
                }
            }
            sorted[sorted.len() - 1].0
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Piecewise-constant quantile function, `u` in `[0, 1]`.
    pub fn quantile(&self, u: f64) -> f64 {
        let m = self.values.len();
        let k = ((u * m as f64).floor() as isize).clamp(0, m as isize - 1) as usize;
        self.values[k]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.len() as f64
    }

    pub fn moment(&self, p: i32) -> f64 {
        self.values.iter().map(|v| v.powi(p)).sum::<f64>() / self.len() as f64
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.values.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / self.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.len() - 1]
    }

    pub fn support_radius(&self) -> f64 {
        self.min().abs().max(self.max().abs())
    }

    pub fn is_constant(&self) -> bool {
        self.min() == self.max()
    }

    /// Maximal runs of equal values as `(location, mass)`.
    pub fn atoms(&self) -> Vec<(f64, f64)> {
        let m = self.len() as f64;
        let mut out: Vec<(f64, f64)> = Vec::new();
        for &v in &self.values {
            match out.last_mut() {
                Some(last) if last.0 == v => last.1 += 1.0 / m,
                _ => out.push((v, 1.0 / m)),
            }
        }
        out
    }

    /// Piecewise-constant resampling onto `m` midpoints.
    pub fn resample(&self, m: usize) -> Self {
        if m == self.len() {
            return self.clone();
        }
        let vals = (0..m)
            .map(|k| self.quantile((k as f64 + 0.5) / m as f64))
            .collect();
        Self { values: vals }
    }

    /// Averages of the quantile function over the `n` cells `[(k-1)/n, k/n]`.
    /// These are the `n`-point discretization used for matrix spectra; the
    /// mean is preserved exactly.
    pub fn cell_averages(&self, n: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            let lo = k as f64 / n as f64;
            let hi = (k + 1) as f64 / n as f64;
            out.push(self.integrate_between(lo, hi) * n as f64);
        }
        // Enforce monotonicity against rounding in the partial-cell sums.
        for k in 1..n {
            if out[k] < out[k - 1] {
                out[k] = out[k - 1];
            }
        }
        out
    }

    /// `∫_lo^hi T(x) dx` for the piecewise-constant quantile function.
    pub fn integrate_between(&self, lo: f64, hi: f64) -> f64 {
        let m = self.len();
        let mf = m as f64;
        if hi <= lo {
            return 0.0;
        }
        let k0 = ((lo * mf).floor() as usize).min(m - 1);
        let k1 = ((hi * mf).ceil() as usize).min(m);
        let mut acc = 0.0;
        for k in k0..k1 {
            let a = (k as f64 / mf).max(lo);
            let b = ((k + 1) as f64 / mf).min(hi);
            if b > a {
                acc += self.values[k] * (b - a);
            }
        }
        acc
    }

    pub fn shift(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v + c).collect(),
        }
    }

    /// Push-forward under `x -> l x`.
    pub fn dilate(&self, l: f64) -> Self {
        let mut values: Vec<f64> = self.values.iter().map(|v| l * v).collect();
        if l < 0.0 {
            values.reverse();
        }
        Self { values }
    }

    /// Values outside `[-1/eps, 1/eps]` are moved to 0.
    pub fn truncate(&self, eps: f64) -> Self {
        let bound = 1.0 / eps;
        let mut values: Vec<f64> = self
            .values
            .iter()
            .map(|&v| if v.abs() > bound { 0.0 } else { v })
            .collect();
        values.sort_by(f64::total_cmp);
        Self { values }
    }

    /// Quantile-function sum `T_self + T_other`, the comonotone coupling.
    pub fn quantile_sum(&self, other: &Self) -> Self {
        let (a, b) = common_refinement(self, other);
        Self {
            values: a.iter().zip(&b).map(|(x, y)| x + y).collect(),
        }
    }

    /// `T(x) - x`-type correction: adds `c * x` evaluated at the midpoints.
    pub fn add_identity(&self, c: f64) -> Result<Self> {
        let m = self.len() as f64;
        Self::new(
            self.values
                .iter()
                .enumerate()
                .map(|(k, v)| v + c * (k as f64 + 0.5) / m)
                .collect(),
        )
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["quantile", "value"])?;
        let m = self.len() as f64;
        for (k, v) in self.values.iter().enumerate() {
            w.write_record([
                format!("{}", (k as f64 + 0.5) / m),
                format!("{v:e}"),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "quantile" || &headers[1] != "value" {
            return Err(Error::Malformed(format!(
                "expected header quantile,value in {}",
                path.display()
            )));
        }
        let mut values = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let v: f64 = rec[1]
                .trim()
                .parse()
                .map_err(|_| Error::Malformed(format!("value '{}'", &rec[1])))?;
            values.push(v);
        }
        Self::new(values)
    }
}

/// Quantile of the semicircle law on `[-1, 1]`.
pub fn semicircle_unit_quantile(u: f64) -> f64 {
    if u <= 0.0 {
        return -1.0;
    }
    if u >= 1.0 {
        return 1.0;
    }
    // F(sin p) = 1/2 + (p + sin p cos p) / pi, with F' = 2 cos^2 p / pi in p.
    let target = std::f64::consts::PI * (u - 0.5);
    let (mut lo, mut hi) = (-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2);
    let mut p: f64 = 0.0;
    for _ in 0..200 {
        let g = p + p.sin() * p.cos() - target;
        if g > 0.0 {
            hi = p;
        } else {
            lo = p;
        }
        let d = 2.0 * p.cos().powi(2);
        let mut next = p - g / d;
        if !(next > lo && next < hi) || d < 1e-300 {
            next = 0.5 * (lo + hi);
        }
        if (next - p).abs() < 1e-16 {
            p = next;
            break;
        }
        p = next;
    }
    p.sin()
}

/// Both measures on the least common grid (or the finer one if that is huge).
pub fn common_refinement(a: &QuantileMeasure, b: &QuantileMeasure) -> (Vec<f64>, Vec<f64>) {
    let (ma, mb) = (a.len(), b.len());
    if ma == mb {
        return (a.values.clone(), b.values.clone());
    }
    let l = lcm(ma, mb);
    let m = if l <= 1 << 16 { l } else { ma.max(mb) };
    (a.resample(m).values, b.resample(m).values)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

/// `W_1(a, b) = ∫ |T_a - T_b|`.
pub fn wasserstein(a: &QuantileMeasure, b: &QuantileMeasure) -> f64 {
    let (x, y) = common_refinement(a, b);
    x.iter().zip(&y).map(|(p, q)| (p - q).abs()).sum::<f64>() / x.len() as f64
}

/// `∫ T_a T_b dx`.
pub fn pairing_integral(a: &QuantileMeasure, b: &QuantileMeasure) -> f64 {
    let (x, y) = common_refinement(a, b);
    x.iter().zip(&y).map(|(p, q)| p * q).sum::<f64>() / x.len() as f64
}

/// Half-widths of the hat dictionary. Heights are `w / (1 + w)`, so every
/// element has sup norm plus Lipschitz constant equal to one.
pub const WEAK_WIDTHS: [f64; 11] = [
    1.0 / 16.0,
    1.0 / 8.0,
    0.25,
    0.5,
    1.0,
    2.0,
    4.0,
    8.0,
    16.0,
    32.0,
    64.0,
];

/// Largest value the dictionary distance can take.
pub fn weak_distance_cap() -> f64 {
    let w = WEAK_WIDTHS[WEAK_WIDTHS.len() - 1];
    w / (1.0 + w)
}

/// Dictionary lower bound for the bounded-Lipschitz distance: the sup of
/// `|∫f da - ∫f db|` over nonnegative hats `f`.
pub fn weak_distance(a: &QuantileMeasure, b: &QuantileMeasure) -> f64 {
    let lo = a.min().min(b.min());
    let hi = a.max().max(b.max());
    let mut best: f64 = 0.0;
    for &w in &WEAK_WIDTHS {
        let h = w / (1.0 + w);
        let start = lo - w;
        let span = hi + w - start;
        let steps = ((span / (w / 4.0)).ceil() as usize).clamp(1, 4096);
        for s in 0..=steps {
            let c = start + span * s as f64 / steps as f64;
            let f = |x: f64| h * (1.0 - (x - c).abs() / w).max(0.0);
            let ia = a.values.iter().map(|&x| f(x)).sum::<f64>() / a.len() as f64;
            let ib = b.values.iter().map(|&x| f(x)).sum::<f64>() / b.len() as f64;
            best = best.max((ia - ib).abs());
        }
    }
    best
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SchurHornReport {
    /// `∫ (T_μ - T_ref) dx`.
    pub mean_gap: f64,
    /// `sup_{y in (0,1)} ∫_y^1 (T_μ - T_ref) dx`.
    pub worst_violation: f64,
    pub worst_y: f64,
    pub tolerance: f64,
    pub admissible: bool,
}

/// Upper-tail profile `P(y) = ∫_y^1 (T_μ - T_ref)` at the cell boundaries
/// `y = j / m`, `j = 0..=m`. Exact for piecewise-constant inputs.
pub fn tail_profile(mu: &QuantileMeasure, reference: &QuantileMeasure) -> Vec<f64> {
    let (x, y) = common_refinement(mu, reference);
    let m = x.len();
    let mut out = vec![0.0; m + 1];
    for k in (0..m).rev() {
        out[k] = out[k + 1] + (x[k] - y[k]) / m as f64;
    }
    out
}

/// Majorization check of `mu` against `reference`.
pub fn schur_horn_report(
    mu: &QuantileMeasure,
    reference: &QuantileMeasure,
    tolerance: f64,
) -> SchurHornReport {
    let p = tail_profile(mu, reference);
    let m = p.len() - 1;
    let mut worst = f64::NEG_INFINITY;
    let mut worst_y = 0.0;
    for (j, &v) in p.iter().enumerate().take(m).skip(1) {
        if v > worst {
            worst = v;
            worst_y = j as f64 / m as f64;
        }
    }
    if m == 1 {
        worst = 0.0;
    }
    let mean_gap = p[0];
    SchurHornReport {
        mean_gap,
        worst_violation: worst,
        worst_y,
        tolerance,
        admissible: mean_gap.abs() <= tolerance && worst <= tolerance,
    }
}

/// Two-reference variant: `∫_y^1 (T_μ - T_A - T_B) dx <= 0` with equality at `y = 0`.
pub fn schur_horn_report_sum(
    mu: &QuantileMeasure,
    a: &QuantileMeasure,
    b: &QuantileMeasure,
    tolerance: f64,
) -> SchurHornReport {
    schur_horn_report(mu, &a.quantile_sum(b), tolerance)
}

/// Counting measure of `(λ_i + N - i) / N`, `i = 1..N`, for a partition padded to `n` parts.
pub fn counting_measure(lambda: &[u32], n: usize) -> Result<QuantileMeasure> {
    let nonzero = lambda.iter().filter(|&&p| p > 0).count();
    if n == 0 || nonzero > n {
        return Err(Error::OutOfRange(format!(
            "partition with {nonzero} parts in {n} variables"
        )));
    }
    let mut values: Vec<f64> = (0..n)
        .map(|i| {
            let li = lambda.get(i).copied().unwrap_or(0) as f64;
            (li + (n - 1 - i) as f64) / n as f64
        })
        .collect();
    values.reverse();
    QuantileMeasure::new(values)
}
