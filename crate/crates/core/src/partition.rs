//! Integer partitions, Kostka numbers, Littlewood-Richardson coefficients and
//! exact Schur and monomial symmetric polynomial evaluations.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rug::{Integer, Rational};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ExactCount = Integer;

/// Nonincreasing positive parts; trailing zeros are dropped.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Partition(Vec<u32>);

impl Partition {
    pub fn new(mut parts: Vec<u32>) -> Result<Self> {
        while parts.last() == Some(&0) {
            parts.pop();
        }
        if parts.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::Malformed(format!("{parts:?} is not nonincreasing")));
        }
        Ok(Self(parts))
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn parts(&self) -> &[u32] {
        &self.0
    }

    pub fn size(&self) -> u64 {
        self.0.iter().map(|&p| p as u64).sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn part(&self, i: usize) -> u32 {
        self.0.get(i).copied().unwrap_or(0)
    }

    pub fn padded(&self, n: usize) -> Vec<u32> {
        (0..n).map(|i| self.part(i)).collect()
    }

    pub fn contains(&self, other: &Partition) -> bool {
        other.len() <= self.len() && (0..other.len()).all(|i| other.part(i) <= self.part(i))
    }
}

impl FromStr for Partition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().trim_start_matches('(').trim_end_matches(')');
        if s.is_empty() {
            return Ok(Self::empty());
        }
        let parts = s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<u32>()
                    .map_err(|_| Error::Malformed(format!("partition part '{p}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(parts)
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.0.iter().map(|p| p.to_string()).collect();
        write!(f, "({})", s.join(","))
    }
}

/// `a ⊵ b`: equal size and every partial sum of `a` dominates that of `b`.
pub fn dominates(a: &Partition, b: &Partition) -> bool {
    if a.size() != b.size() {
        return false;
    }
    let n = a.len().max(b.len());
    let (mut sa, mut sb) = (0u64, 0u64);
    for i in 0..n {
        sa += a.part(i) as u64;
        sb += b.part(i) as u64;
        if sa < sb {
            return false;
        }
    }
    true
}

/// All partitions of `n` with at most `max_parts` parts, in reverse lexicographic order.
pub fn partitions_of(n: u32, max_parts: usize) -> Vec<Partition> {
    fn rec(rem: u32, cap: u32, slots: usize, cur: &mut Vec<u32>, out: &mut Vec<Partition>) {
        if rem == 0 {
            out.push(Partition(cur.clone()));
            return;
        }
        if slots == 0 {
            return;
        }
        for p in (1..=cap.min(rem)).rev() {
            cur.push(p);
            rec(rem - p, p, slots - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, n, max_parts, &mut Vec::new(), &mut out);
    out
}

/// Calls `f` on every row `r` of length `row.len() - 1` interlacing `row`
/// (`row[i+1] <= r[i] <= row[i]`) with `sum(r) == target`.
fn for_each_interlacing(row: &[u32], target: u64, f: &mut impl FnMut(&[u32])) {
    let k = row.len() - 1;
    if k == 0 {
        if target == 0 {
            f(&[]);
        }
        return;
    }
    // Suffix bounds on the sum still reachable from position i onward.
    let mut min_suffix = vec![0u64; k + 1];
    let mut max_suffix = vec![0u64; k + 1];
    for i in (0..k).rev() {
        min_suffix[i] = min_suffix[i + 1] + row[i + 1] as u64;
        max_suffix[i] = max_suffix[i + 1] + row[i] as u64;
    }
    if target < min_suffix[0] || target > max_suffix[0] {
        return;
    }
    let mut cur = vec![0u32; k];
    fn rec(
        i: usize,
        rem: u64,
        row: &[u32],
        cur: &mut Vec<u32>,
        lo_s: &[u64],
        hi_s: &[u64],
        f: &mut impl FnMut(&[u32]),
    ) {
        let k = cur.len();
        if i == k {
            if rem == 0 {
                f(cur);
            }
            return;
        }
        let lo = row[i + 1] as u64;
        let hi = row[i] as u64;
        for v in lo..=hi {
            if v > rem {
                break;
            }
            let left = rem - v;
            if left < lo_s[i + 1] || left > hi_s[i + 1] {
                continue;
            }
            cur[i] = v as u32;
            rec(i + 1, left, row, cur, lo_s, hi_s, f);
        }
    }
    rec(0, target, row, &mut cur, &min_suffix, &max_suffix, f);
}

/// Number of semistandard tableaux of shape `lambda` and content `content`
/// (any composition), counted as Gelfand-Tsetlin patterns.
pub fn kostka_composition(lambda: &Partition, content: &[u32]) -> ExactCount {
    let n = content.len();
    if lambda.len() > n || lambda.size() != content.iter().map(|&c| c as u64).sum::<u64>() {
        return Integer::new();
    }
    let mut memo: HashMap<Vec<u32>, Integer> = HashMap::new();
    fn count(row: &[u32], content: &[u32], memo: &mut HashMap<Vec<u32>, Integer>) -> Integer {
        let k = row.len();
        if k == 0 {
            return Integer::from(1);
        }
        if let Some(v) = memo.get(row) {
            return v.clone();
        }
        let sum: u64 = row.iter().map(|&p| p as u64).sum();
        let c = content[k - 1] as u64;
        let mut total = Integer::new();
        if sum >= c {
            let mut children = Vec::new();
            for_each_interlacing(row, sum - c, &mut |r| children.push(r.to_vec()));
            for ch in children {
                total += count(&ch, content, memo);
            }
        }
        memo.insert(row.to_vec(), total.clone());
        total
    }
    count(&lambda.padded(n), content, &mut memo)
}

pub fn kostka(lambda: &Partition, eta: &Partition) -> ExactCount {
    kostka_composition(lambda, eta.parts())
}

/// Number of Littlewood-Richardson tableaux of skew shape `kappa / lambda`
/// and content `eta`: semistandard fillings whose reverse reading word is a
/// lattice word.
pub fn lr_coefficient(lambda: &Partition, eta: &Partition, kappa: &Partition) -> ExactCount {
    if !kappa.contains(lambda) || kappa.size() != lambda.size() + eta.size() {
        return Integer::new();
    }
    let rows = kappa.len();
    let cells: Vec<(usize, usize)> = (0..rows)
        .flat_map(|i| {
            let (lo, hi) = (lambda.part(i) as usize, kappa.part(i) as usize);
            (lo..hi).rev().map(move |j| (i, j))
        })
        .collect();
    let width = kappa.part(0) as usize;
    let mut grid = vec![vec![0u32; width]; rows];
    let mut counts = vec![0u32; eta.len() + 1];
    let mut total: u64 = 0;
    fn rec(
        idx: usize,
        cells: &[(usize, usize)],
        lambda: &Partition,
        kappa: &Partition,
        eta: &Partition,
        grid: &mut Vec<Vec<u32>>,
        counts: &mut Vec<u32>,
        total: &mut u64,
    ) {
        if idx == cells.len() {
            *total += 1;
            return;
        }
        let (i, j) = cells[idx];
        let mut hi = eta.len() as u32;
        if j + 1 < kappa.part(i) as usize {
            hi = hi.min(grid[i][j + 1]);
        }
        let mut lo = 1u32;
        if i > 0 && j >= lambda.part(i - 1) as usize {
            lo = lo.max(grid[i - 1][j] + 1);
        }
        for v in lo..=hi {
            let vi = v as usize;
            if counts[vi] >= eta.part(vi - 1) {
                continue;
            }
            if vi >= 2 && counts[vi] + 1 > counts[vi - 1] {
                continue;
            }
            grid[i][j] = v;
            counts[vi] += 1;
            rec(idx + 1, cells, lambda, kappa, eta, grid, counts, total);
            counts[vi] -= 1;
        }
        grid[i][j] = 0;
    }
    rec(0, &cells, lambda, kappa, eta, &mut grid, &mut counts, &mut total);
    Integer::from(total)
}

/// Exact determinant by Gaussian elimination over the rationals.
pub fn rational_det(mut m: Vec<Vec<Rational>>) -> Rational {
    let n = m.len();
    let mut det = Rational::from(1);
    for c in 0..n {
        let Some(p) = (c..n).find(|&r| m[r][c] != 0) else {
            return Rational::new();
        };
        if p != c {
            m.swap(p, c);
            det = -det;
        }
        let pivot = m[c][c].clone();
        det *= &pivot;
        for r in c + 1..n {
            if m[r][c] == 0 {
                continue;
            }
            let factor = Rational::from(&m[r][c] / &pivot);
            for k in c..n {
                let d = Rational::from(&factor * &m[c][k]);
                m[r][k] -= d;
            }
        }
    }
    det
}

fn rpow(x: &Rational, e: u32) -> Rational {
    let mut out = Rational::from(1);
    for _ in 0..e {
        out *= x;
    }
    out
}

/// `S_λ(x) = det[x_i^{λ_j + N - j}] / det[x_i^{N - j}]`.
pub fn schur_bialternant(lambda: &Partition, x: &[Rational]) -> Result<Rational> {
    let n = x.len();
    if lambda.len() > n {
        return Ok(Rational::new());
    }
    let mut vandermonde = Rational::from(1);
    for i in 0..n {
        for j in i + 1..n {
            let d = Rational::from(&x[i] - &x[j]);
            if d == 0 {
                return Err(Error::DegenerateAlternant);
            }
            vandermonde *= d;
        }
    }
    let lam = lambda.padded(n);
    let m: Vec<Vec<Rational>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| rpow(&x[i], lam[j] + (n - 1 - j) as u32))
                .collect()
        })
        .collect();
    Ok(rational_det(m) / vandermonde)
}

/// `S_λ(x)` as a sum over semistandard tableaux, via Gelfand-Tsetlin patterns.
pub fn schur_combinatorial(lambda: &Partition, x: &[Rational]) -> Rational {
    let n = x.len();
    if lambda.len() > n {
        return Rational::new();
    }
    let mut memo: HashMap<Vec<u32>, Rational> = HashMap::new();
    fn eval(row: &[u32], x: &[Rational], memo: &mut HashMap<Vec<u32>, Rational>) -> Rational {
        let k = row.len();
        if k == 0 {
            return Rational::from(1);
        }
        if let Some(v) = memo.get(row) {
            return v.clone();
        }
        let sum: u64 = row.iter().map(|&p| p as u64).sum();
        let lo: u64 = row[1..].iter().map(|&p| p as u64).sum();
        let mut total = Rational::new();
        for target in lo..=sum {
            let mut children = Vec::new();
            for_each_interlacing(row, target, &mut |r| children.push(r.to_vec()));
            if children.is_empty() {
                continue;
            }
            let w = rpow(&x[k - 1], (sum - target) as u32);
            for ch in children {
                total += Rational::from(&w * &eval(&ch, x, memo));
            }
        }
        memo.insert(row.to_vec(), total.clone());
        total
    }
    eval(&lambda.padded(n), x, &mut memo)
}

/// Distinct rearrangements of `v` in lexicographic order.
pub fn distinct_permutations(v: &[u32]) -> Vec<Vec<u32>> {
    let mut cur = v.to_vec();
    cur.sort_unstable();
    let mut out = vec![cur.clone()];
    loop {
        let n = cur.len();
        let Some(i) = (1..n).rev().find(|&i| cur[i - 1] < cur[i]) else {
            break;
        };
        let j = (i..n).rev().find(|&j| cur[j] > cur[i - 1]).unwrap();
        cur.swap(i - 1, j);
        cur[i..].reverse();
        out.push(cur.clone());
    }
    out
}

/// `m_η(x) = Σ x^α` over distinct rearrangements `α` of `η` padded to `N` parts.
pub fn monomial(eta: &Partition, x: &[Rational]) -> Rational {
    let n = x.len();
    if eta.len() > n {
        return Rational::new();
    }
    let mut total = Rational::new();
    for alpha in distinct_permutations(&eta.padded(n)) {
        let mut term = Rational::from(1);
        for (xi, &a) in x.iter().zip(&alpha) {
            term *= rpow(xi, a);
        }
        total += term;
    }
    total
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MonomialBounds {
    pub log_value: f64,
    /// `Σ η_i y_i` with both sorted decreasingly.
    pub log_lower: f64,
    /// `log N! + Σ η_i y_i`.
    pub log_upper: f64,
    pub within: bool,
}

/// `log m_η(e^y)` with the bracket `e^{Σ η_i y_i} <= m_η(e^y) <= N! e^{Σ η_i y_i}`.
pub fn monomial_bounds(eta: &Partition, y: &[f64]) -> MonomialBounds {
    let n = y.len();
    let mut ys = y.to_vec();
    ys.sort_by(|a, b| b.total_cmp(a));
    let pad = eta.padded(n);
    let log_lower: f64 = pad.iter().zip(&ys).map(|(&e, &v)| e as f64 * v).sum();
    let exps: Vec<f64> = distinct_permutations(&pad)
        .iter()
        .map(|alpha| alpha.iter().zip(y).map(|(&a, &v)| a as f64 * v).sum())
        .collect();
    let mx = exps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_value = mx + exps.iter().map(|e| (e - mx).exp()).sum::<f64>().ln();
    let log_fact: f64 = (1..=n).map(|k| (k as f64).ln()).sum();
    let log_upper = log_lower + log_fact;
    let slack = 1e-12 * (1.0 + log_lower.abs());
    MonomialBounds {
        log_value,
        log_lower,
        log_upper,
        within: log_value >= log_lower - slack && log_value <= log_upper + slack,
    }
}
