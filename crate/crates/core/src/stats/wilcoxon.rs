use crate::error::{Error, Result};

use super::metrics::average_ranks;
use super::special::{normal_cdf, normal_sf};
use super::{Alternative, Method, TestResult};

/// Largest combined sample size for which the null distribution is
/// enumerated exactly.
pub const EXACT_MAX_TOTAL: usize = 12;

/// Wilcoxon rank-sum test. The statistic is the Mann–Whitney U of `a`
/// (rank sum of `a` minus n1(n1+1)/2) and `alternative` states the direction
/// of `a` relative to `b`.
pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64], alternative: Alternative) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("rank-sum test needs non-empty samples"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::invalid("rank-sum test needs finite values"));
    }
    let (n1, n2) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = average_ranks(&pooled);
    let r1: f64 = ranks[..n1].iter().sum();
    let u = r1 - (n1 * (n1 + 1)) as f64 / 2.0;

    let (p, method) = if n1 + n2 <= EXACT_MAX_TOTAL {
        (exact_p(&ranks, n1, alternative), Method::Exact)
    } else {
        (normal_p(&pooled, u, n1, n2, alternative), Method::NormalApprox)
    };
    Ok(TestResult {
        statistic: u,
        p_value: p.clamp(0.0, 1.0),
        n1,
        n2,
        method,
        alternative,
        df: None,
    })
}

/// Null distribution of the rank sum of n1 items drawn from the pooled ranks.
/// Average ranks are multiples of 1/2, so doubling keeps the sums integral.
fn exact_p(ranks: &[f64], n1: usize, alternative: Alternative) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let max_sum: usize = doubled.iter().sum();
    // counts[k][s]: number of k-subsets with doubled rank sum s
    let mut counts = vec![vec![0f64; max_sum + 1]; n1 + 1];
    counts[0][0] = 1.0;
    for &r in &doubled {
        for k in (1..=n1).rev() {
            for s in (r..=max_sum).rev() {
                let c = counts[k - 1][s - r];
                if c > 0.0 {
                    counts[k][s] += c;
                }
            }
        }
    }
    let observed: usize = doubled[..n1].iter().sum();
    let total: f64 = counts[n1].iter().sum();
    let upper: f64 = counts[n1][observed..].iter().sum::<f64>() / total;
    let lower: f64 = counts[n1][..=observed].iter().sum::<f64>() / total;
    match alternative {
        Alternative::Greater => upper,
        Alternative::Less => lower,
        Alternative::TwoSided => (2.0 * upper.min(lower)).min(1.0),
    }
}

fn normal_p(pooled: &[f64], u: f64, n1: usize, n2: usize, alternative: Alternative) -> f64 {
    let n = (n1 + n2) as f64;
    let (f1, f2) = (n1 as f64, n2 as f64);
    let mut sorted = pooled.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let mu = f1 * f2 / 2.0;
    let var = f1 * f2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var <= 0.0 {
        return 1.0;
    }
    let sd = var.sqrt();
    match alternative {
        Alternative::Greater => normal_sf((u - mu - 0.5) / sd),
        Alternative::Less => normal_cdf((u - mu + 0.5) / sd),
        Alternative::TwoSided => {
            let z = ((u - mu).abs() - 0.5).max(0.0) / sd;
            (2.0 * normal_sf(z)).min(1.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding;
    use rand::Rng;

    #[test]
    fn separated_samples() {
        let r = wilcoxon_rank_sum(&[4.0, 5.0, 6.0], &[1.0, 2.0, 3.0], Alternative::Greater).unwrap();
        assert_eq!(r.method, Method::Exact);
        assert!((r.p_value - 0.05).abs() < 1e-15);
        assert_eq!(r.statistic, 9.0);
        let r = wilcoxon_rank_sum(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], Alternative::Less).unwrap();
        assert!((r.p_value - 0.05).abs() < 1e-15);
        assert_eq!(r.statistic, 0.0);
    }

    #[test]
    fn identical_multisets() {
        let x = [1.0, 2.0, 2.0, 5.0];
        let r = wilcoxon_rank_sum(&x, &x, Alternative::TwoSided).unwrap();
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn empty_errors() {
        assert!(wilcoxon_rank_sum(&[], &[1.0], Alternative::TwoSided).is_err());
    }

    #[test]
    fn all_tied_large_sample() {
        let x = vec![3.0; 10];
        let r = wilcoxon_rank_sum(&x, &x, Alternative::Greater).unwrap();
        assert_eq!(r.method, Method::NormalApprox);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn exact_and_normal_agree_without_ties() {
        let mut rng = seeding::rng(7, &[1]);
        for _ in 0..20 {
            let a: Vec<f64> = (0..10).map(|_| rng.gen::<f64>() + 0.2).collect();
            let b: Vec<f64> = (0..10).map(|_| rng.gen::<f64>()).collect();
            let pooled: Vec<f64> = a.iter().chain(&b).copied().collect();
            let ranks = average_ranks(&pooled);
            let u: f64 = ranks[..10].iter().sum::<f64>() - 55.0;
            for alt in [Alternative::Greater, Alternative::Less, Alternative::TwoSided] {
                let exact = exact_p(&ranks, 10, alt);
                let approx = normal_p(&pooled, u, 10, 10, alt);
                assert!((exact - approx).abs() < 0.02, "{alt:?}: {exact} vs {approx}");
            }
        }
    }
}
