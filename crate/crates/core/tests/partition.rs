use proptest::prelude::*;
use rug::{Integer, Rational};
use spherical_ld::partition::*;
use spherical_ld::{Error, Partition};

fn p(s: &str) -> Partition {
    s.parse().unwrap()
}

/// Hook-length count of standard tableaux, an oracle for `K_{λ,1^n}`.
fn hook_length(lambda: &Partition) -> Integer {
    let n = lambda.size() as u32;
    let mut f = Integer::from(Integer::factorial(n));
    let cols = lambda.part(0) as usize;
    let conj: Vec<usize> = (0..cols)
        .map(|j| (0..lambda.len()).filter(|&i| lambda.part(i) as usize > j).count())
        .collect();
    for i in 0..lambda.len() {
        for j in 0..lambda.part(i) as usize {
            let hook = (lambda.part(i) as usize - j) + (conj[j] - i) - 1;
            f /= hook as u32;
        }
    }
    f
}

fn points(n: usize, seed: u32) -> Vec<Rational> {
    (0..n).map(|i| Rational::from((2 * i as u32 + seed, i as u32 + 3 + seed))).collect()
}

#[test]
fn parse_and_display() {
    assert_eq!(p("3,1,1").parts(), &[3, 1, 1]);
    assert_eq!(p("(2,1,0)").to_string(), "(2,1)");
    assert!(matches!("1,2".parse::<Partition>(), Err(Error::Malformed(_))));
    assert!(matches!("1,x".parse::<Partition>(), Err(Error::Malformed(_))));
}

#[test]
fn partition_counts() {
    let expected = [1, 1, 2, 3, 5, 7, 11, 15, 22];
    for (n, &c) in expected.iter().enumerate() {
        assert_eq!(partitions_of(n as u32, n.max(1)).len(), c);
    }
    assert_eq!(partitions_of(6, 2).len(), 4);
}

#[test]
fn small_kostka_numbers() {
    assert_eq!(kostka(&p("2,1"), &p("1,1,1")), 2);
    assert_eq!(kostka(&p("3,2"), &p("2,2,1")), 2);
    assert_eq!(kostka(&p("2,2"), &p("3,1")), 0);
    assert_eq!(kostka(&p("4,2"), &p("4,2")), 1);
    // Content order does not matter.
    assert_eq!(kostka_composition(&p("3,2"), &[1, 2, 2]), 2);
}

#[test]
fn standard_tableaux_match_hook_length() {
    for n in 1..=7u32 {
        for lambda in partitions_of(n, n as usize) {
            let ones = Partition::new(vec![1; n as usize]).unwrap();
            assert_eq!(kostka(&lambda, &ones), hook_length(&lambda), "{lambda}");
        }
    }
}

#[test]
fn kostka_positive_iff_dominated() {
    for n in 1..=6u32 {
        let parts = partitions_of(n, n as usize);
        for l in &parts {
            for e in &parts {
                assert_eq!(kostka(l, e) > 0, dominates(l, e), "{l} {e}");
            }
        }
    }
}

#[test]
fn small_lr_coefficients() {
    assert_eq!(lr_coefficient(&p("1"), &p("1,1"), &p("2,1")), 1);
    assert_eq!(lr_coefficient(&p("2,1"), &p("2,1"), &p("3,2,1")), 2);
    assert_eq!(lr_coefficient(&p("2,1"), &p("1"), &p("2,2")), 1);
    assert_eq!(lr_coefficient(&p("2"), &p("2"), &p("2,1,1")), 0);
    assert_eq!(lr_coefficient(&Partition::empty(), &p("3,1"), &p("3,1")), 1);
}

#[test]
fn lr_is_symmetric_in_factors() {
    for n in 1..=4u32 {
        for l in partitions_of(n, 4) {
            for e in partitions_of(5 - n.min(4), 4) {
                for k in partitions_of(l.size() as u32 + e.size() as u32, 5) {
                    assert_eq!(lr_coefficient(&l, &e, &k), lr_coefficient(&e, &l, &k));
                }
            }
        }
    }
}

#[test]
fn bialternant_matches_tableaux() {
    for n in 1..=5u32 {
        for lambda in partitions_of(n, 3) {
            let x = points(3, n);
            assert_eq!(schur_bialternant(&lambda, &x).unwrap(), schur_combinatorial(&lambda, &x));
        }
    }
    let tied = vec![Rational::from(1), Rational::from(1), Rational::from(2)];
    assert!(matches!(schur_bialternant(&p("1"), &tied), Err(Error::DegenerateAlternant)));
}

#[test]
fn schur_expands_in_monomials() {
    let x = points(4, 1);
    for n in 1..=5u32 {
        for lambda in partitions_of(n, 4) {
            let mut acc = Rational::new();
            for eta in partitions_of(n, 4) {
                acc += Rational::from(kostka(&lambda, &eta)) * monomial(&eta, &x);
            }
            assert_eq!(acc, schur_combinatorial(&lambda, &x), "{lambda}");
        }
    }
}

#[test]
fn schur_products_expand_by_lr() {
    let x = points(3, 2);
    for (l, e) in [("2,1", "1"), ("2", "1,1"), ("2,1", "2,1"), ("3", "2")] {
        let (l, e) = (p(l), p(e));
        let lhs = schur_combinatorial(&l, &x) * schur_combinatorial(&e, &x);
        let mut rhs = Rational::new();
        for k in partitions_of((l.size() + e.size()) as u32, 3) {
            rhs += Rational::from(lr_coefficient(&l, &e, &k)) * schur_combinatorial(&k, &x);
        }
        assert_eq!(Rational::from(lhs), rhs);
    }
}

#[test]
fn monomial_bracket() {
    let b = monomial_bounds(&p("3,1"), &[0.3, -0.2, 1.1]);
    assert!(b.within && b.log_lower <= b.log_value && b.log_value <= b.log_upper);
}

#[test]
fn distinct_permutations_count() {
    assert_eq!(distinct_permutations(&[1, 1, 2]).len(), 3);
    assert_eq!(distinct_permutations(&[0, 1, 2, 3]).len(), 24);
}

proptest! {
    #[test]
    fn dominance_is_a_partial_order(n in 1u32..8, i in 0usize..30, j in 0usize..30, k in 0usize..30) {
        let parts = partitions_of(n, n as usize);
        let (a, b, c) = (&parts[i % parts.len()], &parts[j % parts.len()], &parts[k % parts.len()]);
        prop_assert!(dominates(a, a));
        if dominates(a, b) && dominates(b, a) {
            prop_assert_eq!(a, b);
        }
        if dominates(a, b) && dominates(b, c) {
            prop_assert!(dominates(a, c));
        }
    }

    #[test]
    fn monomial_bracket_holds(parts in prop::collection::vec(0u32..4, 1..4), y in prop::collection::vec(-2.0f64..2.0, 4)) {
        let mut parts = parts;
        parts.sort_unstable_by(|a, b| b.cmp(a));
        let eta = Partition::new(parts).unwrap();
        prop_assert!(monomial_bounds(&eta, &y).within);
    }
}
