use crate::error::{Error, Result};

/// Gradient norms below this are clamped before taking reciprocals.
pub const GRAD_NORM_FLOOR: f64 = 1e-8;

/// Per-domain learning-rate state of one joint batch.
#[derive(Clone, Debug, PartialEq)]
pub struct DynamicLrState {
    pub n_b: Vec<usize>,
    pub w: Vec<f64>,
    pub lambda_hat: Vec<f64>,
}

impl DynamicLrState {
    /// True when one active domain takes practically the whole rate while
    /// others are also active.
    pub fn saturated(&self, lambda: f64) -> bool {
        let active = self.n_b.iter().filter(|&&n| n > 0).count();
        active > 1 && self.lambda_hat.iter().any(|&l| l / lambda > 1.0 - 1e-6)
    }
}

/// `lambda_hat = softmax(N_B ⊙ W) · lambda` over domains present in the batch,
/// with `W = 1 / max(grad_norm, floor)`. Absent domains get zero.
pub fn dynamic_lr(n_b: &[usize], grad_norms: &[f64], lambda: f64) -> Result<DynamicLrState> {
    if n_b.len() != grad_norms.len() {
        return Err(Error::InvalidArgument(format!(
            "{} sample counts vs {} gradient norms",
            n_b.len(),
            grad_norms.len()
        )));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("learning rate {lambda} must be positive")));
    }
    if let Some(g) = grad_norms.iter().find(|g| !(**g >= 0.0) || !g.is_finite()) {
        return Err(Error::InvalidArgument(format!("gradient norm {g} must be finite and non-negative")));
    }
    if n_b.iter().all(|&n| n == 0) {
        return Err(Error::InvalidArgument("no domain has samples in this batch".into()));
    }
    let w: Vec<f64> = grad_norms.iter().map(|g| 1.0 / g.max(GRAD_NORM_FLOOR)).collect();
    let logits: Vec<f64> = n_b.iter().zip(&w).map(|(&n, w)| n as f64 * w).collect();
    let max = n_b
        .iter()
        .zip(&logits)
        .filter(|(&n, _)| n > 0)
        .map(|(_, &l)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = n_b
        .iter()
        .zip(&logits)
        .map(|(&n, &l)| if n > 0 { (l - max).exp() } else { 0.0 })
        .collect();
    let z: f64 = e.iter().sum();
    Ok(DynamicLrState {
        n_b: n_b.to_vec(),
        w,
        lambda_hat: e.iter().map(|v| lambda * v / z).collect(),
    })
}
