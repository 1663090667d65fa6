use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spherical_ld::stats::*;

fn brute_isotonic(v: &[f64]) -> Vec<f64> {
    // Minimum over lower sets of the maximum over upper sets of block means.
    let n = v.len();
    (0..n)
        .map(|i| {
            let mut best = f64::INFINITY;
            for k in i..n {
                let mut inner = f64::NEG_INFINITY;
                for j in 0..=i {
                    let m = v[j..=k].iter().sum::<f64>() / (k - j + 1) as f64;
                    inner = inner.max(m);
                }
                best = best.min(inner);
            }
            best
        })
        .collect()
}

#[test]
fn isotonic_simple() {
    assert_eq!(isotonic_unweighted(&[3.0, 1.0, 2.0]), vec![2.0, 2.0, 2.0]);
    assert_eq!(isotonic_unweighted(&[1.0, 2.0, 3.0]), vec![1.0, 2.0, 3.0]);
    let w = isotonic(&[2.0, 0.0], &[3.0, 1.0]);
    assert!((w[0] - 1.5).abs() < 1e-15 && (w[1] - 1.5).abs() < 1e-15);
}

#[test]
fn median_and_mean() {
    assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    assert_eq!(mean(&[1.0, 2.0, 6.0]), 3.0);
}

#[test]
fn ks_uniform_samples_pass() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let s: Vec<f64> = (0..4000).map(|_| rng.random::<f64>()).collect();
    let d = ks_statistic(&s, |x| x.clamp(0.0, 1.0));
    assert!(ks_pvalue(d, s.len()) > 0.01);
    let shifted: Vec<f64> = s.iter().map(|x| x * x).collect();
    let d2 = ks_statistic(&shifted, |x| x.clamp(0.0, 1.0));
    assert!(ks_pvalue(d2, s.len()) < 1e-6);
}

#[test]
fn ks_single_point() {
    assert!((ks_statistic(&[0.5], |x| x) - 0.5).abs() < 1e-15);
    assert_eq!(ks_pvalue(0.0, 10), 1.0);
}

#[test]
fn batch_stderr_iid() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x: Vec<f64> = (0..20000).map(|_| rng.random::<f64>()).collect();
    let se = batch_stderr(&x, 20);
    let want = (1.0f64 / 12.0 / 20000.0).sqrt();
    assert!(se > 0.5 * want && se < 2.0 * want, "{se} vs {want}");
}

#[test]
fn autocorrelation_of_ar1() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let phi: f64 = 0.8;
    let mut x = vec![0.0; 50000];
    for i in 1..x.len() {
        x[i] = phi * x[i - 1] + rng.random::<f64>() - 0.5;
    }
    let tau = integrated_autocorrelation(&x);
    let want = (1.0 + phi) / (1.0 - phi);
    assert!((tau - want).abs() < 0.2 * want, "{tau} vs {want}");
    let iid: Vec<f64> = (0..5000).map(|_| rng.random::<f64>()).collect();
    assert!(integrated_autocorrelation(&iid) < 1.3);
}

proptest! {
    #[test]
    fn isotonic_matches_minmax(v in proptest::collection::vec(-5.0f64..5.0, 1..12)) {
        let fit = isotonic_unweighted(&v);
        let want = brute_isotonic(&v);
        for (a, b) in fit.iter().zip(&want) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn isotonic_is_monotone_and_mean_preserving(
        v in proptest::collection::vec(-5.0f64..5.0, 1..40),
        w in proptest::collection::vec(0.1f64..3.0, 40),
    ) {
        let w = &w[..v.len()];
        let fit = isotonic(&v, w);
        prop_assert!(fit.windows(2).all(|p| p[0] <= p[1] + 1e-12));
        let s0: f64 = v.iter().zip(w).map(|(a, b)| a * b).sum();
        let s1: f64 = fit.iter().zip(w).map(|(a, b)| a * b).sum();
        prop_assert!((s0 - s1).abs() < 1e-9);
        let again = isotonic(&fit, w);
        for (a, b) in fit.iter().zip(&again) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
