use crate::error::{Error, Result};

use super::descriptive::{mean, sample_variance};
use super::special::{student_t_cdf, student_t_sf};
use super::{Alternative, Method, TestResult};

fn t_p_value(t: f64, df: f64, alternative: Alternative) -> f64 {
    let p = match alternative {
        Alternative::TwoSided => 2.0 * student_t_sf(t.abs(), df),
        Alternative::Greater => student_t_sf(t, df),
        Alternative::Less => student_t_cdf(t, df),
    };
    p.clamp(0.0, 1.0)
}

/// Welch's unequal-variance t-test with Welch–Satterthwaite degrees of freedom.
pub fn welch_t(a: &[f64], b: &[f64], alternative: Alternative) -> Result<TestResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::invalid("Welch t-test needs at least two values per group"));
    }
    let va = sample_variance(a) / a.len() as f64;
    let vb = sample_variance(b) / b.len() as f64;
    let se2 = va + vb;
    if se2 == 0.0 {
        return Err(Error::Degenerate("both groups have zero variance".into()));
    }
    let t = (mean(a) - mean(b)) / se2.sqrt();
    let df = se2 * se2
        / (va * va / (a.len() as f64 - 1.0) + vb * vb / (b.len() as f64 - 1.0));
    Ok(TestResult {
        statistic: t,
        p_value: t_p_value(t, df, alternative),
        n1: a.len(),
        n2: b.len(),
        method: Method::StudentT,
        alternative,
        df: Some(df),
    })
}

/// One-sample t-test of the mean of `x` against `mu0`.
pub fn one_sample_t(x: &[f64], mu0: f64, alternative: Alternative) -> Result<TestResult> {
    if x.len() < 2 {
        return Err(Error::invalid("one-sample t-test needs at least two values"));
    }
    let v = sample_variance(x);
    if v == 0.0 {
        return Err(Error::Degenerate("sample has zero variance".into()));
    }
    let n = x.len() as f64;
    let t = (mean(x) - mu0) / (v / n).sqrt();
    let df = n - 1.0;
    Ok(TestResult {
        statistic: t,
        p_value: t_p_value(t, df, alternative),
        n1: x.len(),
        n2: 0,
        method: Method::StudentT,
        alternative,
        df: Some(df),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn welch_hand_values() {
        let r = welch_t(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 3.0, 4.0, 5.0, 6.0], Alternative::TwoSided)
            .unwrap();
        assert!((r.statistic + 1.0).abs() < 1e-12);
        assert!((r.df.unwrap() - 8.0).abs() < 1e-12);
        // two-sided p for |t| = 1 with 8 df
        assert!((r.p_value - 0.346_593_507_087_353_3).abs() < 1e-9);
    }

    #[test]
    fn welch_null_case() {
        let a = [10.0, 10.1, 9.9, 10.05, 9.95];
        let b = [10.02, 9.98, 10.0, 10.04, 9.96];
        let r = welch_t(&a, &b, Alternative::TwoSided).unwrap();
        assert!(r.statistic.abs() < 0.5 && r.p_value > 0.5);
    }

    #[test]
    fn one_sample_null_case() {
        let x = [5.0 - 1e-3, 5.0 + 1e-3, 5.0 - 2e-3, 5.0 + 2e-3];
        let r = one_sample_t(&x, 5.0, Alternative::TwoSided).unwrap();
        assert!((r.p_value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_variance_errors() {
        assert!(welch_t(&[1.0, 1.0], &[2.0, 2.0], Alternative::TwoSided).is_err());
        assert!(one_sample_t(&[3.0, 3.0, 3.0], 1.0, Alternative::Less).is_err());
    }

    #[test]
    fn one_sided_directions() {
        let x = [1.0, 1.5, 2.0, 1.2, 0.8, 1.1];
        let less = one_sample_t(&x, 5.0, Alternative::Less).unwrap();
        let greater = one_sample_t(&x, 5.0, Alternative::Greater).unwrap();
        assert!(less.p_value < 1e-5);
        assert!(greater.p_value > 0.99);
        assert!((less.p_value + greater.p_value - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn two_sided_p_is_symmetric(
            a in proptest::collection::vec(-50.0f64..50.0, 2..12),
            b in proptest::collection::vec(-50.0f64..50.0, 2..12),
        ) {
            if let (Ok(ab), Ok(ba)) = (welch_t(&a, &b, Alternative::TwoSided), welch_t(&b, &a, Alternative::TwoSided)) {
                prop_assert!((ab.p_value - ba.p_value).abs() < 1e-12);
                prop_assert!((0.0..=1.0).contains(&ab.p_value));
            }
        }
    }
}
