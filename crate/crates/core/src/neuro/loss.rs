use crate::error::{Error, Result};

pub const VAR_EPS: f64 = 1e-6;
pub const PENALTY_CAP: f64 = 1000.0;
pub const PENALTY_WEIGHT: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub mse: f64,
    pub penalty: f64,
    pub total: f64,
    /// Population variance of the predictions.
    pub variance: f64,
}

fn check(p: &[f64], l: &[f64]) -> Result<()> {
    if p.len() != l.len() {
        return Err(Error::ShapeMismatch(format!("{} predictions vs {} labels", p.len(), l.len())));
    }
    if p.len() < 2 {
        return Err(Error::invalid("loss needs a batch of at least 2"));
    }
    Ok(())
}

/// MSE plus a penalty that grows as the predictions lose spread:
/// `MSE(p, l) + 4 · min(1 / (Var(p) + 1e-6), 1000)`.
pub fn hardness_loss(p: &[f64], l: &[f64]) -> Result<LossValue> {
    check(p, l)?;
    let n = p.len() as f64;
    let mse = p.iter().zip(l).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
    let mean = p.iter().sum::<f64>() / n;
    let variance = p.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let penalty = PENALTY_WEIGHT * (1.0 / (variance + VAR_EPS)).min(PENALTY_CAP);
    Ok(LossValue { mse, penalty, total: mse + penalty, variance })
}

/// Loss value and its gradient with respect to each prediction. When the
/// cap is active the penalty contributes no gradient.
pub fn hardness_loss_grad(p: &[f64], l: &[f64]) -> Result<(LossValue, Vec<f64>)> {
    let value = hardness_loss(p, l)?;
    let n = p.len() as f64;
    let mean = p.iter().sum::<f64>() / n;
    let inv = 1.0 / (value.variance + VAR_EPS);
    let pen_scale = if inv < PENALTY_CAP { -PENALTY_WEIGHT * inv * inv } else { 0.0 };
    let grad = p
        .iter()
        .zip(l)
        .map(|(&pi, &li)| 2.0 * (pi - li) / n + pen_scale * 2.0 * (pi - mean) / n)
        .collect();
    Ok((value, grad))
}
