use crate::{Error, Result};

/// Loss value with its gradient w.r.t. the prediction input.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub gradient: Vec<f64>,
}

/// Softmax cross-entropy of `logits` against class `target`.
pub fn cross_entropy(logits: &[f64], target: usize) -> Result<LossValue> {
    if logits.len() < 2 {
        return Err(Error::input("cross-entropy needs at least two classes"));
    }
    if target >= logits.len() {
        return Err(Error::input(format!(
            "target class {target} out of range for {} logits",
            logits.len()
        )));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("non-finite logit"));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&z| (z - max).exp()).sum();
    let log_norm = max + sum.ln();
    let mut gradient: Vec<f64> = logits.iter().map(|&z| (z - log_norm).exp()).collect();
    gradient[target] -= 1.0;
    Ok(LossValue {
        value: log_norm - logits[target],
        gradient,
    })
}

fn check_probability(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::input(format!("probability {p} must lie strictly inside (0, 1)")));
    }
    Ok(())
}

/// Binary cross-entropy on a probability; gradient w.r.t. `p`.
pub fn binary_cross_entropy(p: f64, target: bool) -> Result<LossValue> {
    focal_loss(p, target, 0.0, 1.0)
}

/// `-alpha * (1 - p_t)^gamma * ln(p_t)` with `p_t = p` for positives and
/// `1 - p` otherwise. Gradient is w.r.t. `p`.
pub fn focal_loss(p: f64, target: bool, gamma: f64, alpha: f64) -> Result<LossValue> {
    check_probability(p)?;
    if gamma.is_nan() || gamma < 0.0 {
        return Err(Error::input("focal gamma must be non-negative"));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::input("focal alpha must lie in (0, 1]"));
    }
    let (pt, sign) = if target { (p, 1.0) } else { (1.0 - p, -1.0) };
    let q = 1.0 - pt;
    let log_pt = pt.ln();
    let value = -alpha * q.powf(gamma) * log_pt;
    let d_pt = if gamma == 0.0 {
        -alpha / pt
    } else {
        alpha * (gamma * q.powf(gamma - 1.0) * log_pt - q.powf(gamma) / pt)
    };
    Ok(LossValue {
        value,
        gradient: vec![sign * d_pt],
    })
}
