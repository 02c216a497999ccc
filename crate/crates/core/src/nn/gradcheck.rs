//! Central finite-difference verification of analytic gradients.

use super::Gradients;

/// Anything that exposes its trainable parameters as ordered blocks.
pub trait Parameterized {
    fn param_blocks_mut(&mut self) -> Vec<&mut [f64]>;
}

impl Parameterized for super::MultiLayerNet {
    fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        super::MultiLayerNet::param_blocks_mut(self)
    }
}

/// `|a − n| / max(|a|, |n|, 1e-12)`, maximized over all entries.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-12))
        .fold(0.0, f64::max)
}

/// Central differences of `loss` with step `h`, one parameter at a time.
pub fn numeric_gradients<M: Parameterized>(
    model: &mut M,
    mut loss: impl FnMut(&M) -> f64,
    h: f64,
) -> Gradients {
    let sizes: Vec<usize> = model.param_blocks_mut().iter().map(|b| b.len()).collect();
    let mut blocks = Vec::with_capacity(sizes.len());
    for (bi, &len) in sizes.iter().enumerate() {
        let mut g = vec![0.0; len];
        for (j, gj) in g.iter_mut().enumerate() {
            let orig = model.param_blocks_mut()[bi][j];
            model.param_blocks_mut()[bi][j] = orig + h;
            let up = loss(model);
            model.param_blocks_mut()[bi][j] = orig - h;
            let down = loss(model);
            model.param_blocks_mut()[bi][j] = orig;
            *gj = (up - down) / (2.0 * h);
        }
        blocks.push(g);
    }
    Gradients { blocks }
}

/// Max relative error between `analytic` and central differences of `loss`.
pub fn grad_check<M: Parameterized>(
    model: &mut M,
    analytic: &Gradients,
    loss: impl FnMut(&M) -> f64,
    h: f64,
) -> f64 {
    let numeric = numeric_gradients(model, loss, h);
    max_relative_error(&analytic.flatten(), &numeric.flatten())
}
