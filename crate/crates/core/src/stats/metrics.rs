use crate::error::{Error, Result};

use super::descriptive::mean;

fn check_pair(p: &[f64], l: &[f64]) -> Result<()> {
    if p.len() != l.len() {
        return Err(Error::ShapeMismatch(format!("{} predictions vs {} labels", p.len(), l.len())));
    }
    if p.len() < 2 {
        return Err(Error::invalid("metrics need at least two samples"));
    }
    Ok(())
}

pub fn rmse(p: &[f64], l: &[f64]) -> Result<f64> {
    check_pair(p, l)?;
    let mse = p.iter().zip(l).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / p.len() as f64;
    Ok(mse.sqrt())
}

/// Coefficient of determination 1 − SS_res / SS_tot.
pub fn r2(p: &[f64], l: &[f64]) -> Result<f64> {
    check_pair(p, l)?;
    let m = mean(l);
    let ss_tot: f64 = l.iter().map(|v| (v - m).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Degenerate("labels have zero variance".into()));
    }
    let ss_res: f64 = p.iter().zip(l).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// 1-based ranks with ties sharing the average of their positions.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = 0.5 * ((i + 1) + (j + 1)) as f64;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::Degenerate("zero variance in correlation input".into()));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's ρ: Pearson correlation of average ranks.
pub fn spearman(p: &[f64], l: &[f64]) -> Result<f64> {
    check_pair(p, l)?;
    pearson(&average_ranks(p), &average_ranks(l))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity() {
        let x = [60.0, 65.0, 71.0, 80.0];
        assert_eq!(rmse(&x, &x).unwrap(), 0.0);
        assert_eq!(r2(&x, &x).unwrap(), 1.0);
        assert!((spearman(&x, &x).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn reversed_order() {
        let l = [1.0, 2.0, 3.0, 4.0, 5.0];
        let p = [9.0, 7.0, 4.0, 3.0, 0.5];
        assert!((spearman(&p, &l).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn average_ranks_with_ties() {
        assert_eq!(average_ranks(&[1.0, 2.0, 2.0, 4.0]), vec![1.0, 2.5, 2.5, 4.0]);
    }

    /// Brute force: the tie-averaged rank of a value equals the mean position
    /// it occupies over every ordering of its tied group.
    fn brute_ranks(x: &[f64]) -> Vec<f64> {
        x.iter()
            .map(|&v| {
                let below = x.iter().filter(|&&w| w < v).count();
                let tied = x.iter().filter(|&&w| w == v).count();
                (1..=tied).map(|k| (below + k) as f64).sum::<f64>() / tied as f64
            })
            .collect()
    }

    #[test]
    fn spearman_with_ties_against_enumeration() {
        let p = [1.0, 2.0, 2.0, 4.0];
        let l = [1.0, 2.0, 3.0, 4.0];
        let rp = brute_ranks(&p);
        let rl = brute_ranks(&l);
        let mp = rp.iter().sum::<f64>() / 4.0;
        let ml = rl.iter().sum::<f64>() / 4.0;
        let num: f64 = rp.iter().zip(&rl).map(|(a, b)| (a - mp) * (b - ml)).sum();
        let den = (rp.iter().map(|a| (a - mp).powi(2)).sum::<f64>()
            * rl.iter().map(|b| (b - ml).powi(2)).sum::<f64>())
        .sqrt();
        let expected = num / den;
        // ranks p = [1, 2.5, 2.5, 4] → ρ = 4.5/√(4.5·5) = 0.9486832980505138
        assert!((expected - 0.948_683_298_050_513_8).abs() < 1e-15);
        assert!((spearman(&p, &l).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_label_variance_errors() {
        assert!(r2(&[1.0, 2.0], &[3.0, 3.0]).is_err());
        assert!(spearman(&[1.0, 2.0], &[3.0, 3.0]).is_err());
        assert!(rmse(&[1.0], &[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn spearman_is_rank_invariant(v in proptest::collection::vec((-100i32..100, -100i32..100), 3..30)) {
            let a: Vec<f64> = v.iter().map(|p| p.0 as f64).collect();
            let b: Vec<f64> = v.iter().map(|p| p.1 as f64).collect();
            if let (Ok(direct), Ok(ranked)) = (spearman(&a, &b), spearman(&average_ranks(&a), &average_ranks(&b))) {
                prop_assert!((direct - ranked).abs() < 1e-12);
                prop_assert!((-1.0..=1.0).contains(&direct));
            }
        }
    }
}
