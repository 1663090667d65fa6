use proptest::prelude::*;
use spherical_ld::measure::*;
use spherical_ld::{Error, QuantileMeasure};

fn measure_strategy() -> impl Strategy<Value = QuantileMeasure> {
    prop::collection::vec(-5.0f64..5.0, 1..40).prop_map(|v| QuantileMeasure::from_unsorted(v).unwrap())
}

#[test]
fn rejects_bad_inputs() {
    assert!(matches!(QuantileMeasure::new(vec![]), Err(Error::Empty)));
    assert!(matches!(QuantileMeasure::new(vec![0.0, f64::NAN]), Err(Error::NonFinite(1))));
    assert!(matches!(QuantileMeasure::new(vec![1.0, 0.0]), Err(Error::NonMonotone(1))));
    assert!(QuantileMeasure::uniform(1.0, 0.0, 4).is_err());
}

#[test]
fn uniform_and_semicircle_moments() {
    let u = QuantileMeasure::uniform(0.0, 2.0, 4096).unwrap();
    assert!((u.mean() - 1.0).abs() < 1e-12);
    assert!((u.variance() - 1.0 / 3.0).abs() < 1e-6);
    let s = QuantileMeasure::semicircle(0.25, 4096).unwrap();
    assert!(s.mean().abs() < 1e-12);
    assert!((s.variance() - 0.25).abs() < 1e-4);
    assert!((s.max() - 1.0).abs() < 1e-2);
}

#[test]
fn semicircle_quantile_inverts_cdf() {
    for &u in &[0.01, 0.1, 0.3, 0.5, 0.77, 0.99] {
        let x: f64 = semicircle_unit_quantile(u);
        let p = x.asin();
        let cdf = 0.5 + (p + p.sin() * p.cos()) / std::f64::consts::PI;
        assert!((cdf - u).abs() < 1e-12, "{u}");
    }
}

#[test]
fn atomic_measure_masses() {
    let m = QuantileMeasure::atomic(&[(1.0, 0.25), (-1.0, 0.75)], 8).unwrap();
    assert_eq!(m.atoms(), vec![(-1.0, 0.75), (1.0, 0.25)]);
}

#[test]
fn samples_give_empirical_quantiles() {
    let m = QuantileMeasure::from_samples(&[3.0, 1.0, 2.0, 4.0], 4).unwrap();
    assert_eq!(m.values(), &[1.0, 2.0, 3.0, 4.0]);
}

#[test]
fn counting_measure_of_partition() {
    let m = counting_measure(&[2, 1], 3).unwrap();
    assert_eq!(m.values(), &[0.0, 2.0 / 3.0, 4.0 / 3.0]);
    assert!(counting_measure(&[1, 1, 1, 1], 3).is_err());
}

#[test]
fn diagonal_majorization_profile() {
    let b = QuantileMeasure::atomic(&[(-1.0, 0.5), (1.0, 0.5)], 64).unwrap();
    let ok = schur_horn_report(&QuantileMeasure::dirac(0.0, 64).unwrap(), &b, 1e-12);
    assert!(ok.admissible);
    let wide = schur_horn_report(&QuantileMeasure::uniform(-1.5, 1.5, 64).unwrap(), &b, 1e-12);
    assert!(!wide.admissible);
    assert!((wide.worst_violation - 1.0 / 24.0).abs() < 1e-3);
    let shifted = schur_horn_report(&QuantileMeasure::dirac(0.5, 64).unwrap(), &b, 1e-12);
    assert!((shifted.mean_gap - 0.5).abs() < 1e-12);
}

#[test]
fn csv_round_trip() {
    let dir = std::env::temp_dir().join("sphld_measure_csv");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("m.csv");
    let m = QuantileMeasure::semicircle(1.0, 33).unwrap();
    m.write_csv(&path).unwrap();
    assert_eq!(QuantileMeasure::read_csv(&path).unwrap(), m);
    std::fs::write(&path, "quantile,value\n0.5,abc\n").unwrap();
    assert!(matches!(QuantileMeasure::read_csv(&path), Err(Error::Malformed(_))));
}

#[test]
fn weak_distance_saturates_below_cap() {
    let a = QuantileMeasure::dirac(-1000.0, 4).unwrap();
    let b = QuantileMeasure::dirac(1000.0, 4).unwrap();
    let d = weak_distance(&a, &b);
    assert!(d <= weak_distance_cap() + 1e-12);
    assert!(d > 0.98 * weak_distance_cap());
}

proptest! {
    #[test]
    fn cell_averages_keep_mean_and_order(m in measure_strategy(), n in 1usize..50) {
        let c = m.cell_averages(n);
        prop_assert!(c.windows(2).all(|w| w[0] <= w[1]));
        let mean = c.iter().sum::<f64>() / n as f64;
        prop_assert!((mean - m.mean()).abs() < 1e-9);
    }

    #[test]
    fn wasserstein_is_a_metric(a in measure_strategy(), b in measure_strategy(), c in measure_strategy()) {
        let ab = wasserstein(&a, &b);
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - wasserstein(&b, &a)).abs() < 1e-12);
        prop_assert!(ab <= wasserstein(&a, &c) + wasserstein(&c, &b) + 1e-9);
        prop_assert!(wasserstein(&a, &a) == 0.0);
    }

    #[test]
    fn shift_moves_wasserstein_by_the_shift(a in measure_strategy(), s in -3.0f64..3.0) {
        prop_assert!((wasserstein(&a, &a.shift(s)) - s.abs()).abs() < 1e-9);
    }

    #[test]
    fn weak_distance_below_wasserstein(a in measure_strategy(), b in measure_strategy()) {
        let d = weak_distance(&a, &b);
        prop_assert!(d >= 0.0 && d <= weak_distance_cap() + 1e-12);
        prop_assert!(d <= wasserstein(&a, &b) + 1e-9);
    }

    #[test]
    fn comonotone_pairing_dominates(a in measure_strategy(), b in measure_strategy()) {
        // Quantile pairing is the largest coupling value.
        let reversed = QuantileMeasure::new(b.values().iter().rev().map(|v| -v).collect()).unwrap();
        prop_assert!(pairing_integral(&a, &b) >= -pairing_integral(&a, &reversed) - 1e-9);
    }

    #[test]
    fn every_measure_is_majorized_by_itself(a in measure_strategy()) {
        prop_assert!(schur_horn_report(&a, &a, 1e-9).admissible);
        // A contraction towards the mean is majorized as well.
        let m = a.mean();
        let c = QuantileMeasure::new(a.values().iter().map(|v| m + 0.5 * (v - m)).collect()).unwrap();
        prop_assert!(schur_horn_report(&c, &a, 1e-9).admissible);
    }

    #[test]
    fn quantile_sum_adds_means(a in measure_strategy(), b in measure_strategy()) {
        prop_assert!((a.quantile_sum(&b).mean() - a.mean() - b.mean()).abs() < 1e-9);
    }

    #[test]
    fn dilation_scales_mean(a in measure_strategy(), l in -4.0f64..4.0) {
        let d = a.dilate(l);
        prop_assert!(d.values().windows(2).all(|w| w[0] <= w[1]));
        prop_assert!((d.mean() - l * a.mean()).abs() < 1e-9);
    }
}
