//! Dense complex matrices, Haar and Gaussian ensembles, and a cyclic Jacobi
//! eigenvalue solver for Hermitian matrices.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Independent generator for `(seed, index)`. Results never depend on which
/// thread draws which index.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Row-major square matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix {
    pub n: usize,
    pub data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![Complex64::new(0.0, 0.0); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m.data[i * d.len() + i] = Complex64::new(v, 0.0);
        }
        m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.n + j] = v;
    }

    pub fn adjoint(&self) -> Self {
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.data[j * n + i] = self.data[i * n + j].conj();
            }
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Self {
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let row = &other.data[k * n..(k + 1) * n];
                let dst = &mut out.data[i * n..(i + 1) * n];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `max |U^* U - I|` entrywise.
    pub fn unitarity_defect(&self) -> f64 {
        let p = self.adjoint().matmul(self);
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((p.get(i, j) - target).norm());
            }
        }
        worst
    }

    /// Re-orthonormalizes the rows in place (two Gram-Schmidt passes).
    pub fn reorthonormalize_rows(&mut self) {
        let n = self.n;
        for i in 0..n {
            for _ in 0..2 {
                for j in 0..i {
                    let mut dot = Complex64::new(0.0, 0.0);
                    for k in 0..n {
                        dot += self.data[j * n + k].conj() * self.data[i * n + k];
                    }
                    for k in 0..n {
                        let v = self.data[j * n + k];
                        self.data[i * n + k] -= dot * v;
                    }
                }
            }
            let norm = (0..n)
                .map(|k| self.data[i * n + k].norm_sqr())
                .sum::<f64>()
                .sqrt();
            for k in 0..n {
                self.data[i * n + k] /= norm;
            }
        }
    }
}

/// `U diag(b) U^*`.
pub fn conjugate_diag(u: &CMatrix, b: &[f64]) -> CMatrix {
    let n = u.n;
    let mut out = CMatrix::zeros(n);
    for i in 0..n {
        for j in i..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..n {
                acc += u.data[i * n + k] * b[k] * u.data[j * n + k].conj();
            }
            out.data[i * n + j] = acc;
            out.data[j * n + i] = acc.conj();
        }
        out.data[i * n + i] = Complex64::new(out.data[i * n + i].re, 0.0);
    }
    out
}

/// `diag(U diag(b) U^*)`.
pub fn conjugate_diag_diagonal(u: &CMatrix, b: &[f64]) -> Vec<f64> {
    let n = u.n;
    (0..n)
        .map(|i| (0..n).map(|k| u.data[i * n + k].norm_sqr() * b[k]).sum())
        .collect()
}

fn gaussian(rng: &mut impl Rng) -> f64 {
    rng.sample::<f64, _>(StandardNormal)
}

/// Haar-distributed orthogonal (`beta = 1`) or unitary (`beta = 2`) matrix:
/// Gram-Schmidt on a Gaussian matrix, which yields the QR factor with
/// positive diagonal in `R`.
pub fn haar(n: usize, beta: u8, rng: &mut impl Rng) -> CMatrix {
    let mut m = CMatrix::zeros(n);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for v in m.data.iter_mut() {
        *v = if beta == 1 {
            Complex64::new(gaussian(rng), 0.0)
        } else {
            Complex64::new(gaussian(rng) * s, gaussian(rng) * s)
        };
    }
    // Rows of a Gaussian matrix are as good as columns; orthonormalize rows.
    m.reorthonormalize_rows();
    m
}

/// GUE (`beta = 2`) or GOE (`beta = 1`) scaled so the spectrum tends to the
/// semicircle of variance one.
pub fn gaussian_ensemble(n: usize, beta: u8, rng: &mut impl Rng) -> CMatrix {
    let mut m = CMatrix::zeros(n);
    let nf = n as f64;
    for i in 0..n {
        let d = gaussian(rng) * (if beta == 1 { 2.0 } else { 1.0 } / nf).sqrt();
        m.set(i, i, Complex64::new(d, 0.0));
        for j in i + 1..n {
            let v = if beta == 1 {
                Complex64::new(gaussian(rng) / nf.sqrt(), 0.0)
            } else {
                let s = (0.5 / nf).sqrt();
                Complex64::new(gaussian(rng) * s, gaussian(rng) * s)
            };
            m.set(i, j, v);
            m.set(j, i, v.conj());
        }
    }
    m
}

pub const JACOBI_TOL: f64 = 1e-12;

/// Above this size eigenvalues come from Householder tridiagonalization and
/// implicit QL instead of Jacobi sweeps.
pub const JACOBI_MAX_N: usize = 48;

/// Eigenvalues of a Hermitian matrix, ascending. Jacobi up to
/// [`JACOBI_MAX_N`], tridiagonal QL above.
pub fn hermitian_eigenvalues(a: &CMatrix, tol: f64) -> Vec<f64> {
    if a.n <= JACOBI_MAX_N {
        jacobi_eigenvalues(a, tol)
    } else {
        tridiagonal_ql_eigenvalues(a)
    }
}

/// Reduces `a` to a real symmetric tridiagonal matrix `(d, e)` by Householder
/// reflections; `e[k]` couples `k` and `k + 1`, `e[n-1] = 0`.
pub fn householder_tridiagonal(a: &CMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = a.n;
    let mut m = a.data.clone();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    let zero = Complex64::new(0.0, 0.0);
    let mut v = vec![zero; n];
    let mut p = vec![zero; n];
    for k in 0..n.saturating_sub(1) {
        d[k] = m[k * n + k].re;
        let len = n - k - 1;
        let alpha = (k + 1..n).map(|i| m[i * n + k].norm_sqr()).sum::<f64>().sqrt();
        e[k] = alpha;
        if len == 1 || alpha == 0.0 {
            if len == 1 {
                e[k] = m[(k + 1) * n + k].norm();
            }
            continue;
        }
        let x0 = m[(k + 1) * n + k];
        let phase = if x0.norm() > 0.0 { x0 / x0.norm() } else { Complex64::new(1.0, 0.0) };
        for i in 0..len {
            v[i] = m[(k + 1 + i) * n + k];
        }
        v[0] += phase * alpha;
        let vv: f64 = v[..len].iter().map(|z| z.norm_sqr()).sum();
        let tau = 2.0 / vv;
        // p = tau S v on the trailing block S = m[k+1.., k+1..].
        for i in 0..len {
            let row = (k + 1 + i) * n + k + 1;
            let mut acc = zero;
            for j in 0..len {
                acc += m[row + j] * v[j];
            }
            p[i] = acc * tau;
        }
        let vp: Complex64 = v[..len].iter().zip(&p[..len]).map(|(a, b)| a.conj() * b).sum();
        let kk = 0.5 * tau * vp.re;
        for i in 0..len {
            p[i] -= v[i] * kk;
        }
        // S <- S - v w^* - w v^*.
        for i in 0..len {
            let row = (k + 1 + i) * n + k + 1;
            let (vi, wi) = (v[i], p[i]);
            for j in 0..len {
                m[row + j] -= vi * p[j].conj() + wi * v[j].conj();
            }
        }
    }
    d[n - 1] = m[(n - 1) * n + n - 1].re;
    (d, e)
}

/// Eigenvalues of a real symmetric tridiagonal matrix by implicit QL.
pub fn tridiagonal_eigenvalues(mut d: Vec<f64>, mut e: Vec<f64>) -> Vec<f64> {
    let n = d.len();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l || iter >= 200 {
                break;
            }
            iter += 1;
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    d.sort_by(f64::total_cmp);
    d
}

pub fn tridiagonal_ql_eigenvalues(a: &CMatrix) -> Vec<f64> {
    if a.n == 0 {
        return Vec::new();
    }
    let (d, e) = householder_tridiagonal(a);
    tridiagonal_eigenvalues(d, e)
}

/// Eigenvalues by cyclic Jacobi sweeps until the off-diagonal Frobenius
/// norm falls below `tol * ||A||_F`.
pub fn jacobi_eigenvalues(a: &CMatrix, tol: f64) -> Vec<f64> {
    let n = a.n;
    if n == 0 {
        return Vec::new();
    }
    let mut m = a.clone();
    let total = m.frobenius().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += m.data[i * n + j].norm_sqr();
            }
        }
        if (2.0 * off).sqrt() <= tol * total {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.data[p * n + q];
                let r = apq.norm();
                if r <= 1e-300 || r < 1e-18 * total / n as f64 {
                    continue;
                }
                let phase = apq / r;
                let app = m.data[p * n + p].re;
                let aqq = m.data[q * n + q].re;
                let zeta = (aqq - app) / (2.0 * r);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // U acts on coordinates (p, q): U = diag(1, conj(phase)) [[c, s], [-s, c]].
                let upp = Complex64::new(c, 0.0);
                let upq = Complex64::new(s, 0.0);
                let uqp = -phase.conj() * s;
                let uqq = phase.conj() * c;
                for k in 0..n {
                    let akp = m.data[k * n + p];
                    let akq = m.data[k * n + q];
                    m.data[k * n + p] = akp * upp + akq * uqp;
                    m.data[k * n + q] = akp * upq + akq * uqq;
                }
                for k in 0..n {
                    let apk = m.data[p * n + k];
                    let aqk = m.data[q * n + k];
                    m.data[p * n + k] = upp.conj() * apk + uqp.conj() * aqk;
                    m.data[q * n + k] = upq.conj() * apk + uqq.conj() * aqk;
                }
                m.data[p * n + q] = Complex64::new(0.0, 0.0);
                m.data[q * n + p] = Complex64::new(0.0, 0.0);
                m.data[p * n + p] = Complex64::new(m.data[p * n + p].re, 0.0);
                m.data[q * n + q] = Complex64::new(m.data[q * n + q].re, 0.0);
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m.data[i * n + i].re).collect();
    ev.sort_by(f64::total_cmp);
    ev
}
