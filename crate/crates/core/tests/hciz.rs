use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rug::Float;
use spherical_ld::hciz::*;
use spherical_ld::QuantileMeasure;

fn distinct(rng: &mut ChaCha8Rng, n: usize, spread: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-spread..spread)).collect();
        let mut s = v.clone();
        s.sort_by(f64::total_cmp);
        if s.windows(2).all(|w| w[1] - w[0] > 1e-3) {
            return v;
        }
    }
}

fn log_diff(a: &HcizResult, b: &HcizResult) -> f64 {
    Float::with_val(256, &a.log_value - &b.log_value).abs().to_f64()
}

#[test]
fn determinant_matches_permutation_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in 2..=6 {
        for _ in 0..4 {
            let a = distinct(&mut rng, n, 1.5);
            let b = distinct(&mut rng, n, 1.5);
            let e = hciz_exact_tol(&a, &b, 256, 1e-40).unwrap();
            let p = hciz_perm_sum(&a, &b, e.precision_bits).unwrap();
            assert!(log_diff(&e, &p) < 1e-20, "n={n} diff={}", log_diff(&e, &p));
        }
    }
}

#[test]
fn two_by_two_closed_form() {
    let (a, b): ([f64; 2], [f64; 2]) = ([0.7, -0.4], [1.2, 0.1]);
    let num = (2.0 * (a[0] * b[0] + a[1] * b[1])).exp() - (2.0 * (a[0] * b[1] + a[1] * b[0])).exp();
    let oracle = (num / (2.0 * (a[0] - a[1]) * (b[0] - b[1]))).ln();
    let e = hciz_exact(&a, &b, 128).unwrap();
    assert!((e.log_f64() - oracle).abs() < 1e-13);
}

#[test]
fn prefactor_calibrated_against_haar_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n in [2usize, 3] {
        let a = distinct(&mut rng, n, 0.8);
        let b = distinct(&mut rng, n, 0.8);
        let e = hciz_exact(&a, &b, 128).unwrap().log_f64();
        let mc = hciz_mc(&a, &b, 2, 200_000, 17).unwrap();
        let se = mc.stderr.unwrap();
        assert!((e - mc.log_f64()).abs() < 4.0 * se + 1e-3, "n={n} exact={e} mc={}", mc.log_f64());
        // Dropping the N^{-N(N-1)/2} factor is visibly wrong.
        let without = e + (n * (n - 1) / 2) as f64 * (n as f64).ln();
        assert!((without - mc.log_f64()).abs() > 20.0 * se);
    }
}

#[test]
fn scalar_side_is_closed_form() {
    let a = [0.3, -1.0, 2.0, 0.25];
    let r = log_spherical_integral(&a, &[0.5; 4], 128).unwrap();
    assert_eq!(r.method, HcizMethod::Closed);
    assert!((r.log_f64() - 4.0 * 0.5 * 1.55).abs() < 1e-14);
    let mc = hciz_mc(&a, &[0.5; 4], 2, 10, 1).unwrap();
    assert_eq!(mc.stderr, Some(0.0));
    assert!((mc.log_f64() - 4.0 * 0.5 * 1.55).abs() < 1e-14);
}

#[test]
fn symmetric_and_translation_covariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = distinct(&mut rng, 5, 1.0);
    let b = distinct(&mut rng, 5, 1.0);
    let ab = hciz_exact(&a, &b, 128).unwrap();
    let ba = hciz_exact(&b, &a, 128).unwrap();
    assert!(log_diff(&ab, &ba) < 1e-12);
    let c = 0.37;
    let shifted: Vec<f64> = a.iter().map(|x| x + c).collect();
    let s = hciz_exact(&shifted, &b, 128).unwrap().log_f64();
    let expected = ab.log_f64() + 5.0 * c * b.iter().sum::<f64>();
    assert!((s - expected).abs() < 1e-10);
}

#[test]
fn repeated_eigenvalues_are_rejected_by_determinant() {
    assert!(matches!(
        hciz_exact(&[1.0, 1.0, 0.0], &[0.0, 1.0, 2.0], 128),
        Err(spherical_ld::Error::DegenerateSpectrum(_))
    ));
}

#[test]
fn confluent_series_matches_determinant() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for n in [3usize, 6, 12] {
        let a = distinct(&mut rng, n, 1.0);
        let b = distinct(&mut rng, n, 1.0);
        let e = hciz_exact(&a, &b, 128).unwrap();
        let c = hciz_confluent(&a, &b, 128).unwrap();
        assert!(log_diff(&e, &c) < 1e-10, "n={n}");
    }
}

#[test]
fn confluent_series_matches_jittered_determinant() {
    let a = [-1.0, -1.0, -1.0, 1.0, 1.0, 1.0];
    let b = [0.0, 0.0, 0.5, 0.5, 0.5, 2.0];
    let c = hciz_confluent(&a, &b, 128).unwrap().log_f64();
    let ja = jitter_spectrum(&a, 1e-6);
    let jb = jitter_spectrum(&b, 1e-6);
    let j = hciz_exact(&ja, &jb, 128).unwrap().log_f64();
    // The log-integrand moves by at most N Σ|δa| max|b| + N Σ|δb| max|a|.
    let da: f64 = a.iter().zip(&ja).map(|(x, y)| (x - y).abs()).sum();
    let db: f64 = b.iter().zip(&jb).map(|(x, y)| (x - y).abs()).sum();
    let bound = 6.0 * (da * 2.0 + db * 1.0);
    assert!((c - j).abs() <= bound, "{c} {j} {bound}");
    let mc = hciz_mc(&a, &b, 2, 200_000, 4).unwrap();
    assert!((c - mc.log_f64()).abs() < 4.0 * mc.stderr.unwrap() + 1e-3);
}

#[test]
fn jitter_preserves_order_and_sum() {
    let v = [2.0, 0.0, 2.0, 1.0, 0.0, 2.0];
    let j = jitter_spectrum(&v, 1e-6);
    assert!((j.iter().sum::<f64>() - v.iter().sum::<f64>()).abs() < 1e-12);
    for i in 0..v.len() {
        for k in 0..v.len() {
            if v[i] < v[k] {
                assert!(j[i] < j[k]);
            }
        }
        assert!((j[i] - v[i]).abs() <= 3e-6);
    }
}

#[test]
fn monte_carlo_is_thread_count_independent() {
    let a = [0.5, -0.2, 0.9, 0.0];
    let b = [1.0, 0.3, -0.7, 0.2];
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| hciz_mc(&a, &b, 2, 4000, 99).unwrap().log_f64())
    };
    assert_eq!(run(1).to_bits(), run(4).to_bits());
}

#[test]
fn real_orthogonal_sampling_runs() {
    let a = [0.5, -0.2, 0.9];
    let b = [1.0, 0.3, -0.7];
    let r = hciz_mc(&a, &b, 1, 20_000, 2).unwrap();
    // Jensen: log E exp(X) >= E X = (βN/2) mean(a) mean(b) N.
    let jensen = 1.5 * 3.0 * (1.2 / 3.0) * (0.6 / 3.0);
    assert!(r.log_f64() >= jensen - 3.0 * r.stderr.unwrap());
}

#[test]
fn limit_with_dirac_reference_is_exact() {
    let mu = QuantileMeasure::semicircle(1.0, 256).unwrap().shift(0.3);
    let c = 0.7;
    let delta = QuantileMeasure::dirac(c, 256).unwrap();
    let est = limit_i_estimate(&mu, &delta, &[8, 16, 32], LimitMethod::default()).unwrap();
    let expected = c / 2.0 * mu.mean();
    for (_, r) in &est.per_n {
        assert!((r - expected).abs() < 1e-12);
    }
    assert!((est.value - expected).abs() < 1e-12);
    assert!(est.residual < 1e-12);
}

#[test]
fn limit_estimate_is_schedule_stable() {
    let a = QuantileMeasure::uniform(-1.0, 1.0, 256).unwrap();
    let b = QuantileMeasure::semicircle(0.5, 256).unwrap();
    let e1 = limit_i_estimate(&a, &b, &[8, 16, 32], LimitMethod::default()).unwrap();
    let e2 = limit_i_estimate(&a, &b, &[12, 24, 48], LimitMethod::default()).unwrap();
    assert!((e1.value - e2.value).abs() < 5e-3, "{e1:?} {e2:?}");
}
