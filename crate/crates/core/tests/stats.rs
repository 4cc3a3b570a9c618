use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};
use touchstone_core::stats::{holm_correct, one_sample_t, welch_t, wilcoxon_rank_sum, Alternative, Method};

const ALTERNATIVES: [Alternative; 3] = [Alternative::Greater, Alternative::Less, Alternative::TwoSided];

/// Mann-Whitney U by pair counting, ties counted one half.
fn u_pairs(a: &[f64], b: &[f64]) -> f64 {
    let mut u = 0.0;
    for x in a {
        for y in b {
            if x > y {
                u += 1.0;
            } else if x == y {
                u += 0.5;
            }
        }
    }
    u
}

/// Exact p-value by relabelling every split of the pooled sample.
fn brute_force_p(a: &[f64], b: &[f64], alt: Alternative) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (n, n1) = (pooled.len(), a.len());
    let observed = u_pairs(a, b);
    let (mut ge, mut le, mut total) = (0usize, 0usize, 0usize);
    for bits in 0u32..(1 << n) {
        if bits.count_ones() as usize != n1 {
            continue;
        }
        let (x, y): (Vec<(usize, f64)>, Vec<(usize, f64)>) =
            pooled.iter().copied().enumerate().partition(|(i, _)| bits >> i & 1 == 1);
        let x: Vec<f64> = x.into_iter().map(|p| p.1).collect();
        let y: Vec<f64> = y.into_iter().map(|p| p.1).collect();
        let u = u_pairs(&x, &y);
        total += 1;
        ge += (u >= observed - 1e-9) as usize;
        le += (u <= observed + 1e-9) as usize;
    }
    let (upper, lower) = (ge as f64 / total as f64, le as f64 / total as f64);
    match alt {
        Alternative::Greater => upper,
        Alternative::Less => lower,
        Alternative::TwoSided => (2.0 * upper.min(lower)).min(1.0),
    }
}

#[test]
fn exact_rank_sum_matches_enumeration_for_all_small_sizes() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    for n1 in 1..10usize {
        for n2 in 1..=(10 - n1) {
            for trial in 0..4 {
                // odd trials draw from a tiny integer range to force ties
                let draw = |rng: &mut ChaCha8Rng| {
                    if trial % 2 == 1 { rng.gen_range(0..4) as f64 } else { rng.gen_range(-10.0..10.0) }
                };
                let a: Vec<f64> = (0..n1).map(|_| draw(&mut rng)).collect();
                let b: Vec<f64> = (0..n2).map(|_| draw(&mut rng)).collect();
                for alt in ALTERNATIVES {
                    let r = wilcoxon_rank_sum(&a, &b, alt).unwrap();
                    assert_eq!(r.method, Method::Exact);
                    assert!((r.statistic - u_pairs(&a, &b)).abs() < 1e-12);
                    let want = brute_force_p(&a, &b, alt);
                    assert!((r.p_value - want).abs() < 1e-12, "n1={n1} n2={n2} {alt:?}: {} vs {want}", r.p_value);
                    checked += 1;
                }
            }
        }
    }
    assert_eq!(checked, 45 * 4 * 3);
}

#[test]
fn rank_sum_worked_example() {
    // fully separated groups of three: one of the 20 splits is at least as extreme
    let r = wilcoxon_rank_sum(&[4.0, 5.0, 6.0], &[1.0, 2.0, 3.0], Alternative::Greater).unwrap();
    assert_eq!(r.statistic, 9.0);
    assert!((r.p_value - 0.05).abs() < 1e-15);
}

/// Step-down Holm written the long way round: walk the sorted p-values,
/// multiply by the number of hypotheses still standing, carry the maximum.
fn holm_by_hand(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap());
    let mut out = vec![0.0; m];
    for (rank, &k) in idx.iter().enumerate() {
        let mut best = 0.0f64;
        for (j, &kk) in idx.iter().enumerate().take(rank + 1) {
            best = best.max(((m - j) as f64 * p[kk]).min(1.0));
        }
        out[k] = best;
    }
    out
}

#[test]
fn holm_matches_hand_computation_on_random_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let m = rng.gen_range(1..9);
        let p: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..0.2)).collect();
        let got = holm_correct(&p);
        let want = holm_by_hand(&p);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-15, "{p:?}: {got:?} vs {want:?}");
        }
    }
    let got = holm_correct(&[0.01, 0.04, 0.03, 0.005]);
    let want = [0.03, 0.06, 0.06, 0.02];
    for (g, w) in got.iter().zip(want) {
        assert!((g - w).abs() < 1e-15);
    }
}

#[test]
fn welch_df_and_p_match_reference_formulas() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let na = rng.gen_range(2..15);
        let nb = rng.gen_range(2..15);
        let a: Vec<f64> = (0..na).map(|_| rng.gen_range(0.0..10.0)).collect();
        let b: Vec<f64> = (0..nb).map(|_| rng.gen_range(2.0..14.0)).collect();
        let var = |x: &[f64]| {
            let m = x.iter().sum::<f64>() / x.len() as f64;
            x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
        };
        let (s1, s2) = (var(&a) / na as f64, var(&b) / nb as f64);
        let df = (s1 + s2).powi(2) / (s1 * s1 / (na - 1) as f64 + s2 * s2 / (nb - 1) as f64);
        let r = welch_t(&a, &b, Alternative::TwoSided).unwrap();
        assert!((r.df.unwrap() - df).abs() < 1e-9);
        let dist = StudentsT::new(0.0, 1.0, df).unwrap();
        let p = 2.0 * (1.0 - dist.cdf(r.statistic.abs()));
        assert!((r.p_value - p).abs() < 1e-9, "{} vs {p}", r.p_value);
        let greater = welch_t(&a, &b, Alternative::Greater).unwrap().p_value;
        assert!((greater - (1.0 - dist.cdf(r.statistic))).abs() < 1e-9);
    }
}

#[test]
fn one_sample_t_agrees_with_reference_distribution() {
    let x = [5.2, 6.1, 4.4, 7.9, 5.0, 6.6, 3.8, 5.9];
    let r = one_sample_t(&x, 5.0, Alternative::Greater).unwrap();
    let dist = StudentsT::new(0.0, 1.0, 7.0).unwrap();
    assert!((r.p_value - (1.0 - dist.cdf(r.statistic))).abs() < 1e-10);
    let less = one_sample_t(&x, 5.0, Alternative::Less).unwrap();
    assert!((less.p_value - dist.cdf(r.statistic)).abs() < 1e-10);
}

proptest! {
    #[test]
    fn u_of_both_orders_sums_to_n1_n2(
        a in proptest::collection::vec(-5i32..5, 1..8),
        b in proptest::collection::vec(-5i32..5, 1..8),
    ) {
        let a: Vec<f64> = a.into_iter().map(f64::from).collect();
        let b: Vec<f64> = b.into_iter().map(f64::from).collect();
        let ab = wilcoxon_rank_sum(&a, &b, Alternative::Greater).unwrap();
        let ba = wilcoxon_rank_sum(&b, &a, Alternative::Less).unwrap();
        prop_assert!((ab.statistic + ba.statistic - (a.len() * b.len()) as f64).abs() < 1e-9);
        prop_assert!((ab.p_value - ba.p_value).abs() < 1e-12);
        let less = wilcoxon_rank_sum(&a, &b, Alternative::Less).unwrap().p_value;
        prop_assert!(ab.p_value + less >= 1.0 - 1e-12);
    }

    #[test]
    fn large_samples_stay_in_unit_interval(
        a in proptest::collection::vec(-100.0f64..100.0, 7..30),
        b in proptest::collection::vec(-100.0f64..100.0, 7..30),
    ) {
        for alt in ALTERNATIVES {
            let r = wilcoxon_rank_sum(&a, &b, alt).unwrap();
            prop_assert_eq!(r.method, Method::NormalApprox);
            prop_assert!((0.0..=1.0).contains(&r.p_value));
        }
    }
}
