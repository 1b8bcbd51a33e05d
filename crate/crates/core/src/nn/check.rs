//! Finite-difference check of backpropagation.

use super::mlp::Mlp;
use crate::error::Result;

/// Worst relative error between backprop gradients and central differences
/// (step `h`) of the training-mode loss, over every parameter.
///
/// Biases feeding a normalization have exactly zero gradient; the 1e-4 floor
/// on the denominator keeps finite-difference round-off from dominating them.
pub fn gradient_check(net: &Mlp<f64>, x: &[f64], y: &[f64], rows: usize, h: f64) -> Result<f64> {
    let loss_at = |net: &Mlp<f64>| -> Result<f64> {
        let mut probe = net.clone();
        let cache = probe.forward_train(x, rows)?;
        Ok(probe.backward(&cache, y)?.0)
    };
    let mut probe = net.clone();
    let cache = probe.forward_train(x, rows)?;
    let (_, grads) = net.backward(&cache, y)?;

    let mut net = net.clone();
    let mut worst: f64 = 0.0;
    for (k, &g) in grads.iter().enumerate() {
        let orig = net.params()[k];
        net.params_mut()[k] = orig + h;
        let up = loss_at(&net)?;
        net.params_mut()[k] = orig - h;
        let down = loss_at(&net)?;
        net.params_mut()[k] = orig;
        let fd = (up - down) / (2.0 * h);
        let denom = fd.abs().max(g.abs()).max(1e-4);
        worst = worst.max((fd - g).abs() / denom);
    }
    Ok(worst)
}
