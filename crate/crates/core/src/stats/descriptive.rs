use crate::error::{Error, Result};

use super::special::student_t_quantile;

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Variance with divisor n.
pub fn population_variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64
}

/// Variance with divisor n − 1.
pub fn sample_variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Median; reorders the input. NaN for an empty slice.
pub fn median(x: &mut [f64]) -> f64 {
    let n = x.len();
    if n == 0 {
        return f64::NAN;
    }
    let mid = n / 2;
    let (_, hi, _) = x.select_nth_unstable_by(mid, f64::total_cmp);
    let hi = *hi;
    if n % 2 == 1 {
        hi
    } else {
        let lo = x[..mid].iter().copied().fold(f64::MIN, f64::max);
        0.5 * (lo + hi)
    }
}

/// Percentile with linear interpolation between order statistics
/// (`q` in [0, 100]).
pub fn percentile(x: &[f64], q: f64) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::invalid("percentile of empty sample"));
    }
    if !(0.0..=100.0).contains(&q) {
        return Err(Error::invalid(format!("percentile {q} outside [0, 100]")));
    }
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let pos = q / 100.0 * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(s[lo] + (s[hi] - s[lo]) * (pos - lo as f64))
}

/// Mean with a two-sided 95% Student-t confidence interval.
pub fn mean_ci95(x: &[f64]) -> Result<(f64, f64, f64)> {
    if x.len() < 2 {
        return Err(Error::invalid("confidence interval needs at least two values"));
    }
    let m = mean(x);
    let se = (sample_variance(x) / x.len() as f64).sqrt();
    let t = student_t_quantile(0.975, (x.len() - 1) as f64);
    Ok((m, m - t * se, m + t * se))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
        assert!(median(&mut []).is_nan());
    }

    #[test]
    fn percentiles_interpolate() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&x, 25.0).unwrap(), 2.0);
        assert_eq!(percentile(&x, 50.0).unwrap(), 3.0);
        assert_eq!(percentile(&[1.0, 2.0], 75.0).unwrap(), 1.75);
        assert!(percentile(&[], 50.0).is_err());
    }

    #[test]
    fn ci_contains_mean() {
        let (m, lo, hi) = mean_ci95(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m, 2.5);
        // t_{0.975,3} = 3.182446305
        let half = 3.182_446_305_284_263 * (1.666_666_666_666_666_7f64 / 4.0).sqrt();
        assert!((hi - m - half).abs() < 1e-6 && (m - lo - half).abs() < 1e-6);
    }
}
