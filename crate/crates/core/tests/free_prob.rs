use num_complex::Complex64;
use proptest::prelude::*;
use spherical_ld::free_prob::*;
use spherical_ld::measure::wasserstein;
use spherical_ld::stats::sup_cdf_distance;
use spherical_ld::QuantileMeasure;

fn semicircle_cdf(s: f64, x: f64) -> f64 {
    let r = 2.0 * s.sqrt();
    if x <= -r {
        return 0.0;
    }
    if x >= r {
        return 1.0;
    }
    0.5 + x * (4.0 * s - x * x).sqrt() / (4.0 * std::f64::consts::PI * s) + (x / r).asin() / std::f64::consts::PI
}

#[test]
fn cauchy_of_dirac() {
    let mu = QuantileMeasure::dirac(0.7, 16).unwrap();
    let z = Complex64::new(0.3, 1.1);
    let g = cauchy_transform(&mu, z).unwrap();
    assert!((g - 1.0 / (z - 0.7)).norm() < 1e-14);
}

#[test]
fn cauchy_two_atoms_at_i() {
    let mu = QuantileMeasure::atomic(&[(-1.0, 0.5), (1.0, 0.5)], 8).unwrap();
    let g = cauchy_transform(&mu, Complex64::i()).unwrap();
    assert!((g - Complex64::new(0.0, -0.5)).norm() < 1e-14);
}

#[test]
fn cauchy_normalization_at_infinity() {
    let mu = QuantileMeasure::uniform(-1.0, 2.0, 64).unwrap();
    let z = Complex64::new(0.0, 1e8);
    let g = cauchy_transform(&mu, z).unwrap();
    assert!((z * g - 1.0).norm() < 1e-7);
}

#[test]
fn cauchy_rejects_real_axis() {
    let mu = QuantileMeasure::uniform(0.0, 1.0, 8).unwrap();
    assert!(cauchy_transform(&mu, Complex64::new(0.5, 0.0)).is_err());
}

#[test]
fn subordination_zero_variance_is_identity() {
    let lambda = QuantileMeasure::uniform(-1.0, 1.0, 32).unwrap();
    let z = Complex64::new(0.2, 0.4);
    let r = semicircle_subordination(&lambda, 0.0, z).unwrap();
    assert!((r.omega - z).norm() < 1e-14);
    assert!((r.g - cauchy_transform(&lambda, z).unwrap()).norm() < 1e-12);
}

#[test]
fn subordination_rejects_lower_half_plane() {
    let lambda = QuantileMeasure::dirac(0.0, 4).unwrap();
    assert!(semicircle_subordination(&lambda, 1.0, Complex64::new(0.0, -1.0)).is_err());
    assert!(semicircle_subordination(&lambda, -1.0, Complex64::new(0.0, 1.0)).is_err());
}

#[test]
fn subordination_fixed_point_and_sign() {
    let lambda = QuantileMeasure::atomic(&[(-1.0, 0.5), (1.0, 0.5)], 8).unwrap();
    for &x in &[-2.0, -0.5, 0.0, 0.3, 1.7] {
        for &eta in &[1.0, 0.1, 0.01] {
            let z = Complex64::new(x, eta);
            let r = semicircle_subordination(&lambda, 0.25, z).unwrap();
            let lhs = r.omega + 0.25 * cauchy_transform(&lambda, r.omega).unwrap();
            assert!((lhs - z).norm() < 1e-10);
            assert!(r.g.im <= 0.0);
            assert!(r.omega.im > 0.0);
        }
    }
}

#[test]
fn dirac_plus_semicircle_is_semicircle() {
    let lambda = QuantileMeasure::dirac(0.0, 4).unwrap();
    let grid: Vec<f64> = (0..81).map(|k| -0.8 + 0.02 * k as f64).collect();
    let curve = free_semicircle_density(&lambda, 0.25, &grid, 1e-3).unwrap();
    let mid = grid.iter().position(|&x| x.abs() < 1e-12).unwrap();
    assert!((curve.density[mid] - 2.0 / std::f64::consts::PI).abs() < 1e-3);
    for (x, d) in grid.iter().zip(&curve.density) {
        assert!((d - semicircle_density(0.25, *x)).abs() < 1e-3, "x={x}");
    }
}

#[test]
fn two_atom_convolution_mass_and_symmetry() {
    let lambda = QuantileMeasure::atomic(&[(-1.0, 0.5), (1.0, 0.5)], 8).unwrap();
    let grid: Vec<f64> = (0..1201).map(|k| -3.0 + 0.005 * k as f64).collect();
    let curve = free_semicircle_density(&lambda, 0.25, &grid, 1e-3).unwrap();
    assert!((curve.total_mass - 1.0).abs() < 1e-3, "mass {}", curve.total_mass);
    let n = grid.len();
    for k in 0..n {
        assert!((curve.density[k] - curve.density[n - 1 - k]).abs() < 1e-6);
    }
}

#[test]
fn atomic_input_is_flagged() {
    let lambda = QuantileMeasure::dirac(0.0, 4).unwrap();
    let grid = vec![-0.5, 0.0, 0.5];
    let curve = density_from_transform(|z| cauchy_transform(&lambda, z), &grid, 0.1, 3).unwrap();
    assert!(curve.unstable[1]);
}

#[test]
fn semicircle_inversion_is_accurate_inside() {
    let mu = QuantileMeasure::semicircle(1.0, 4096).unwrap();
    let grid: Vec<f64> = (0..31).map(|k| -1.5 + 0.1 * k as f64).collect();
    let curve = density_from_transform(|z| cauchy_transform(&mu, z), &grid, 0.05, 3).unwrap();
    for (x, d) in grid.iter().zip(&curve.density) {
        assert!((d - semicircle_density(1.0, *x)).abs() < 1e-3, "x={x} got {d}");
    }
}

#[test]
fn subordination_round_trip() {
    let lambda = QuantileMeasure::atomic(&[(-1.0, 0.5), (1.0, 0.5)], 8).unwrap();
    let grid: Vec<f64> = (0..1601).map(|k| -4.0 + 0.005 * k as f64).collect();
    let curve = free_semicircle_density(&lambda, 0.25, &grid, 1e-3).unwrap().normalized();
    let z = Complex64::new(0.4, 0.5);
    let direct = semicircle_subordination(&lambda, 0.25, z).unwrap().g;
    let re: Vec<f64> = grid.iter().zip(&curve.density).map(|(x, d)| (d / (z - x)).re).collect();
    let im: Vec<f64> = grid.iter().zip(&curve.density).map(|(x, d)| (d / (z - x)).im).collect();
    let back = Complex64::new(trapezoid(&grid, &re), trapezoid(&grid, &im));
    assert!((back - direct).norm() < 1e-2);
}

#[test]
fn semicircle_cumulants() {
    let mu = QuantileMeasure::semicircle(1.0, 8192).unwrap();
    let r = r_transform_series(&mu, 8).unwrap();
    assert!((r.cumulants[1] - 1.0).abs() < 1e-3);
    for (n, k) in r.cumulants.iter().enumerate() {
        if n != 1 {
            assert!(k.abs() < 1e-3, "kappa_{} = {k}", n + 1);
        }
    }
}

#[test]
fn dirac_cumulants() {
    let mu = QuantileMeasure::dirac(1.3, 8).unwrap();
    let r = r_transform_series(&mu, 6).unwrap();
    assert!((r.cumulants[0] - 1.3).abs() < 1e-12);
    for k in &r.cumulants[1..] {
        assert!(k.abs() < 1e-10);
    }
}

#[test]
fn cumulant_order_bounds() {
    let mu = QuantileMeasure::dirac(0.0, 4).unwrap();
    assert!(r_transform_series(&mu, 0).is_err());
    assert!(r_transform_series(&mu, 17).is_err());
}

#[test]
fn bernoulli_cumulants_known() {
    // Free cumulants of the symmetric ±1 law: κ2 = 1, κ4 = -1, κ6 = 2.
    let mu = QuantileMeasure::atomic(&[(-1.0, 0.5), (1.0, 0.5)], 8).unwrap();
    let r = r_transform_series(&mu, 6).unwrap();
    let want = [0.0, 1.0, 0.0, -1.0, 0.0, 2.0];
    for (k, w) in r.cumulants.iter().zip(want) {
        assert!((k - w).abs() < 1e-12);
    }
}

#[test]
fn r_series_integral_and_divergence() {
    let r = RSeries {
        cumulants: vec![0.0, 1.0],
    };
    assert!((r.eval(0.3) - 0.3).abs() < 1e-15);
    assert!((r.integral(0.5) - 0.125).abs() < 1e-15);
    let g = RSeries {
        cumulants: vec![1.0; 16],
    };
    assert!(!g.diverges_at(0.01));
    assert!(g.diverges_at(1.5));
}

#[test]
fn proxy_with_dirac_is_translate() {
    let a = QuantileMeasure::uniform(-1.0, 1.0, 64).unwrap();
    let b = QuantileMeasure::dirac(0.5, 64).unwrap();
    let p = free_convolution_proxy(&a, &b, 32, 3, 1).unwrap();
    let want = QuantileMeasure::new(a.cell_averages(32)).unwrap().shift(0.5);
    assert!(wasserstein(&p.measure, &want) < 1e-10);
}

#[test]
fn proxy_semicircles_add_variance() {
    let a = QuantileMeasure::semicircle(1.0, 1024).unwrap();
    let b = QuantileMeasure::semicircle(0.5, 1024).unwrap();
    let p = free_convolution_proxy(&a, &b, 160, 4, 7).unwrap();
    let d = sup_cdf_distance(p.measure.values(), |x| semicircle_cdf(1.5, x));
    assert!(d < 0.03, "sup-CDF {d}");
}

#[test]
fn proxy_seeds_agree() {
    let a = QuantileMeasure::atomic(&[(-1.0, 0.5), (1.0, 0.5)], 64).unwrap();
    let p1 = free_convolution_proxy(&a, &a, 48, 40, 1).unwrap();
    let p2 = free_convolution_proxy(&a, &a, 48, 40, 2).unwrap();
    let w = wasserstein(&p1.measure, &p2.measure);
    assert!(w < 2.0 * (p1.stderr + p2.stderr), "w={w} se={} {}", p1.stderr, p2.stderr);
}

#[test]
fn proxy_is_deterministic() {
    let a = QuantileMeasure::uniform(0.0, 1.0, 32).unwrap();
    let p1 = free_convolution_proxy(&a, &a, 16, 5, 3).unwrap();
    let p2 = free_convolution_proxy(&a, &a, 16, 5, 3).unwrap();
    assert_eq!(p1.measure.values(), p2.measure.values());
}

#[test]
fn proxy_cumulants_add() {
    let a = QuantileMeasure::atomic(&[(-1.0, 0.5), (1.0, 0.5)], 256).unwrap();
    let p = free_convolution_proxy(&a, &a, 192, 3, 5).unwrap();
    let ra = r_transform_series(&a, 6).unwrap();
    let rp = r_transform_series(&p.measure, 6).unwrap();
    for n in 0..4 {
        let want = 2.0 * ra.cumulants[n];
        assert!((rp.cumulants[n] - want).abs() < 0.1, "kappa_{} {} vs {want}", n + 1, rp.cumulants[n]);
    }
}

#[test]
fn log_energy_uniform() {
    let mu = QuantileMeasure::uniform(0.0, 1.0, 512).unwrap();
    let e = log_energy(&mu);
    assert!(!e.atom);
    assert!((e.value + 1.5).abs() < 0.01, "{}", e.value);
}

#[test]
fn log_energy_semicircle() {
    let mu = QuantileMeasure::semicircle(1.0, 1024).unwrap();
    assert!((log_energy(&mu).value + 0.25).abs() < 0.01);
}

#[test]
fn log_energy_dirac_flagged() {
    let e = log_energy(&QuantileMeasure::dirac(2.0, 16).unwrap());
    assert!(e.atom);
    assert_eq!(e.value, f64::NEG_INFINITY);
}

#[test]
fn log_energy_dilation() {
    let mu = QuantileMeasure::uniform(-0.3, 1.1, 200).unwrap();
    for &l in &[0.25, 3.0, 17.0] {
        let lhs = log_energy(&mu.dilate(l)).value;
        let rhs = log_energy(&mu).value + f64::ln(l);
        assert!((lhs - rhs).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn cumulant_moment_round_trip(m in proptest::collection::vec(-2.0f64..2.0, 1..9)) {
        let k = moments_to_free_cumulants(&m);
        let back = free_cumulants_to_moments(&k);
        for (a, b) in m.iter().zip(&back) {
            prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn first_cumulants_are_mean_and_variance(v in proptest::collection::vec(-3.0f64..3.0, 2..40)) {
        let mu = QuantileMeasure::from_unsorted(v).unwrap();
        let r = r_transform_series(&mu, 2).unwrap();
        prop_assert!((r.cumulants[0] - mu.mean()).abs() < 1e-12);
        prop_assert!((r.cumulants[1] - mu.variance()).abs() < 1e-10);
    }
}
