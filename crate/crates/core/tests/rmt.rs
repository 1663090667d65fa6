use num_complex::Complex64;
use spherical_ld::linalg::{conjugate_diag_diagonal, haar, hermitian_eigenvalues, stream_rng, CMatrix, JACOBI_TOL};
use spherical_ld::rmt::*;
use spherical_ld::stats::{ks_pvalue, ks_statistic};

fn quick_chain() -> ChainConfig {
    ChainConfig {
        burn_in: 20_000,
        steps: 200_000,
        thin: 10,
        ..ChainConfig::default()
    }
}

#[test]
fn haar_rows_are_orthonormal() {
    for beta in [1u8, 2] {
        for n in [1usize, 3, 17] {
            let u = haar_sample(n, beta, 11).unwrap();
            assert!(u.unitarity_defect() < 1e-12, "beta {beta} n {n}");
        }
    }
}

#[test]
fn haar_squared_entries_average_one_over_n() {
    let n = 5;
    let samples = 4000;
    let mut acc = 0.0;
    for s in 0..samples {
        let u = haar(n, 2, &mut stream_rng(3, s));
        acc += u.get(0, 0).norm_sqr();
    }
    let mean = acc / samples as f64;
    // Var |U11|² = (n-1)/(n²(n+1)).
    let se = ((n - 1) as f64 / (n * n * (n + 1)) as f64 / samples as f64).sqrt();
    assert!((mean - 0.2).abs() < 4.0 * se, "mean {mean}");
}

#[test]
fn two_by_two_unitary_diagonal_is_uniform() {
    // For β = 2, |U11|² is uniform, so diag(UBU^*)_1 is uniform on [b1, b2].
    let b = [-1.0, 1.0];
    let batch = diag_conjugation_experiment(&b, 2, 3000, 5).unwrap();
    // Records are sorted, so use the first coordinate of a fresh draw instead.
    let firsts: Vec<f64> = (0..3000u64)
        .map(|s| conjugate_diag_diagonal(&haar(2, 2, &mut stream_rng(9, s)), &b)[0])
        .collect();
    let d = ks_statistic(&firsts, |x| ((x + 1.0) / 2.0).clamp(0.0, 1.0));
    assert!(ks_pvalue(d, firsts.len()) > 1e-3, "D = {d}");
    assert_eq!(batch.records.len(), 3000);
}

#[test]
fn schur_horn_and_trace_hold_per_sample() {
    let b = [-2.0, -0.5, 0.1, 0.3, 3.0, 3.0];
    for beta in [1u8, 2] {
        let batch = diag_conjugation_experiment(&b, beta, 200, 1).unwrap();
        for r in &batch.records {
            let (worst, total) = majorization_gap(&r[0], &b);
            assert!(worst < 1e-10 && total.abs() < 1e-10);
        }
    }
}

#[test]
fn ky_fan_holds_for_sums() {
    let a = [0.0, 0.5, 1.0, 2.0];
    let b = [-1.0, 0.0, 0.0, 1.0];
    let batch = horn_sum_experiment(&a, &b, 2, 200, 2).unwrap();
    for r in &batch.records {
        assert!(ky_fan_gap(&r[0], &a, &b) < 1e-9);
        let tr: f64 = r[0].iter().sum();
        assert!((tr - 3.5).abs() < 1e-9);
    }
}

#[test]
fn sum_with_scalar_is_a_shift() {
    let a = [0.0, 1.0, 2.0];
    let batch = horn_sum_experiment(&a, &[2.0; 3], 2, 3, 0).unwrap();
    assert_eq!(batch.records[0][0], vec![2.0, 3.0, 4.0]);
}

#[test]
fn jacobi_matches_two_by_two_formula() {
    let mut m = CMatrix::from_diag(&[1.0, -1.0]);
    m.set(0, 1, Complex64::new(0.0, 1.0));
    m.set(1, 0, Complex64::new(0.0, -1.0));
    let e = hermitian_eigenvalues(&m, JACOBI_TOL);
    let r = 2f64.sqrt();
    assert!((e[0] + r).abs() < 1e-12 && (e[1] - r).abs() < 1e-12);
}

#[test]
fn scalar_b_chain_accepts_everything() {
    let y = [0.0, 0.3, 1.0, 2.0];
    let run = tilted_sampler(&y, &[1.5; 4], 2, &quick_chain(), 4, 0, |_| ()).unwrap();
    assert_eq!(run.diagnostics.acceptance, 1.0);
}

#[test]
fn zero_tilt_profile_is_flat() {
    let b = [-1.0, 0.0, 0.5, 2.5];
    let p = tilted_diagonal_profile(&[0.0; 4], &b, 2, &quick_chain(), 8).unwrap();
    for v in p.profile.values() {
        assert!((v - 0.5).abs() < 1e-9, "{v}");
    }
}

#[test]
fn tilted_profile_matches_importance_sampling() {
    let y = [-0.5, -0.2, 0.2, 0.5];
    let b = [-1.0, -0.3, 0.3, 1.0];
    let n = 4;
    let p = tilted_diagonal_profile(&y, &b, 2, &quick_chain(), 21).unwrap();
    assert!(p.diagnostics.acceptance > 0.2);
    // Oracle: reweight independent Haar draws by exp(N Σ y_i d_i).
    let draws = 200_000u64;
    let mut num = vec![0.0; n];
    let mut den = 0.0;
    let mut num_sq = vec![0.0; n];
    for s in 0..draws {
        let d = conjugate_diag_diagonal(&haar(n, 2, &mut stream_rng(777, s)), &b);
        let w = (n as f64 * y.iter().zip(&d).map(|(a, c)| a * c).sum::<f64>()).exp();
        den += w;
        for i in 0..n {
            num[i] += w * d[i];
            num_sq[i] += w * d[i] * d[i];
        }
    }
    for i in 0..n {
        let m = num[i] / den;
        let var = num_sq[i] / den - m * m;
        let tol = 4.0 * (p.stderr[i] + (var / draws as f64).sqrt() * 2.0);
        assert!((p.raw[i] - m).abs() < tol, "i {i}: chain {} oracle {m} tol {tol}", p.raw[i]);
    }
    // Positive tilt pushes the diagonal towards the larger eigenvalues.
    assert!(p.raw[3] > p.raw[0]);
}

#[test]
fn chain_drift_stays_small() {
    let y: Vec<f64> = (0..8).map(|i| i as f64 / 4.0 - 1.0).collect();
    let b: Vec<f64> = (0..8).map(|i| (i as f64 / 7.0) * 2.0 - 1.0).collect();
    let run = tilted_sampler(&y, &b, 1, &quick_chain(), 5, 1, |_| ()).unwrap();
    assert!(run.diagnostics.max_drift < 1e-8, "{}", run.diagnostics.max_drift);
    assert!(run.diagnostics.effective_samples > 100.0);
}

#[test]
fn bridge_endpoints_are_exact() {
    let a = [-1.0, 0.0, 1.0];
    let b = [0.0, 0.5, 2.0];
    let cfg = ChainConfig {
        burn_in: 5_000,
        ..ChainConfig::default()
    };
    let batch = bridge_simulate(&a, &b, 2, &[0.0, 0.5, 1.0], 20, &cfg, 3).unwrap();
    for r in &batch.records {
        assert_eq!(r[0], a.to_vec());
        assert_eq!(r[2], b.to_vec());
    }
}

#[test]
fn bridge_trace_mean_interpolates() {
    let a = [0.0; 6];
    let b = [1.0; 6];
    let t = [0.25, 0.5, 0.75];
    let batch = bridge_simulate(&a, &b, 2, &t, 400, &ChainConfig::default(), 6).unwrap();
    for (k, &tk) in t.iter().enumerate() {
        let means: Vec<f64> = batch
            .records
            .iter()
            .map(|r| r[k].iter().sum::<f64>() / 6.0)
            .collect();
        let m = means.iter().sum::<f64>() / means.len() as f64;
        let sd = (means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / means.len() as f64).sqrt();
        assert!((m - tk).abs() < 5.0 * sd / (means.len() as f64).sqrt() + 1e-12, "t {tk}: {m}");
    }
}

#[test]
fn batch_round_trips_through_csv() {
    let dir = std::env::temp_dir().join("sphld_rmt_csv");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("bridge.csv");
    let batch = bridge_simulate(&[0.0; 3], &[1.0; 3], 2, &[0.0, 0.5, 1.0], 4, &ChainConfig::default(), 1).unwrap();
    batch.write_csv(&path).unwrap();
    let back = SpectralExperimentBatch::read_bridge_csv(&path, 2, 1).unwrap();
    assert_eq!(back.t_grid, batch.t_grid);
    for (x, y) in back.records.iter().flatten().flatten().zip(batch.records.iter().flatten().flatten()) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn rejects_bad_beta() {
    assert!(haar_sample(3, 4, 0).is_err());
}
