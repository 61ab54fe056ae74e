use super::model::{mse_loss, ForecastModel};
use crate::error::Result;

/// Outcome of comparing tape gradients with central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    /// Number of parameter entries compared.
    pub checked: usize,
    /// Largest `|fd - g| / max(|fd|, |g|, 1e-6)` over smooth entries.
    pub max_relative_error: f64,
    /// Name and index of the entry attaining the maximum.
    pub worst: Option<(String, usize)>,
    /// Entries whose stencil straddles a ReLU corner: the central
    /// difference disagrees with the tape, but the tape value matches one of
    /// the one-sided differences.
    pub kinks: Vec<(String, usize)>,
}

/// Perturbs every parameter entry by `±eps` and compares the central
/// difference of the batch MSE with the reverse-mode gradient.
pub fn gradient_check(model: &ForecastModel, inputs: &[f64], targets: &[f64], batch: usize, eps: f64) -> Result<GradientCheck> {
    let (base, grads) = model.loss_and_gradients(inputs, targets, batch)?;
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-6);
    let mut probe = model.clone();
    let mut out = GradientCheck { checked: 0, max_relative_error: 0.0, worst: None, kinks: Vec::new() };
    for (pi, g) in grads.iter().enumerate() {
        for (k, &analytic) in g.iter().enumerate() {
            let orig = probe.parameters[pi].tensor.data()[k];
            probe.parameters[pi].tensor.data_mut()[k] = orig + eps;
            let up = mse_loss(&probe.forward(inputs, batch)?, targets, batch)?;
            probe.parameters[pi].tensor.data_mut()[k] = orig - eps;
            let down = mse_loss(&probe.forward(inputs, batch)?, targets, batch)?;
            probe.parameters[pi].tensor.data_mut()[k] = orig;
            out.checked += 1;

            let err = rel((up - down) / (2.0 * eps), analytic);
            let name = &probe.parameters[pi].name;
            if err >= 1e-4 {
                let right = (up - base) / eps;
                let left = (base - down) / eps;
                let one_sided_gap = rel(right, left);
                if one_sided_gap > 1e-3 && rel(right, analytic).min(rel(left, analytic)) < 1e-3 {
                    out.kinks.push((name.clone(), k));
                    continue;
                }
            }
            if err > out.max_relative_error {
                out.max_relative_error = err;
                out.worst = Some((name.clone(), k));
            }
        }
    }
    Ok(out)
}
