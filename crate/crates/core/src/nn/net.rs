use rand::Rng;

use super::layer::BatchNormCache;
use super::{Activation, AffineLayer, BatchNormLayer, Layer, Matrix, Mode};
use crate::error::{Error, Result};

/// Ordered stack of affine, batch-norm and activation layers.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiLayerNet {
    layers: Vec<Layer>,
    input_dim: usize,
    output_dim: usize,
}

enum LayerCache {
    Affine { input: Matrix },
    BatchNorm(BatchNormCache),
    Activation { output: Matrix },
}

/// Activations recorded by a forward pass, consumed by [`MultiLayerNet::backward`].
pub struct ForwardCache {
    entries: Vec<LayerCache>,
    rows: usize,
    /// Number of layers covered, so prefix caches can be detected.
    layers: usize,
}

/// Gradient blocks in the order of [`MultiLayerNet::param_blocks`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub blocks: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(blocks: &[&[f64]]) -> Self {
        Self {
            blocks: blocks.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().flatten().all(|g| g.is_finite())
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.blocks.iter().flatten().copied().collect()
    }

    pub fn scale(&mut self, factor: f64) {
        self.blocks
            .iter_mut()
            .flatten()
            .for_each(|g| *g *= factor);
    }

    pub fn extend(&mut self, other: Gradients) {
        self.blocks.extend(other.blocks);
    }
}

impl MultiLayerNet {
    /// Validates that dimensions chain and that a softmax, if present, is the
    /// last layer.
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        let mut dim: Option<usize> = None;
        let mut input_dim = None;
        for (i, layer) in layers.iter().enumerate() {
            match layer {
                Layer::Affine(a) => {
                    if let Some(d) = dim {
                        if d != a.input_dim() {
                            return Err(Error::shape("net layer chain", d, a.input_dim()));
                        }
                    }
                    input_dim.get_or_insert(a.input_dim());
                    dim = Some(a.output_dim());
                }
                Layer::BatchNorm(b) => {
                    match dim {
                        Some(d) if d != b.features() => {
                            return Err(Error::shape("net layer chain", d, b.features()))
                        }
                        None => dim = Some(b.features()),
                        _ => {}
                    }
                    input_dim.get_or_insert(b.features());
                }
                Layer::Activation(Activation::Softmax) if i + 1 != layers.len() => {
                    return Err(Error::Input(
                        "softmax is only allowed as the final layer".into(),
                    ));
                }
                Layer::Activation(_) => {}
            }
        }
        let (Some(input_dim), Some(output_dim)) = (input_dim, dim) else {
            return Err(Error::Input("network has no sized layer".into()));
        };
        Ok(Self {
            layers,
            input_dim,
            output_dim,
        })
    }

    /// Fully connected stack over `sizes`: every hidden layer is
    /// affine → (batch norm) → `hidden`, the last is affine → `output`.
    pub fn mlp(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        batch_norm: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Input("an MLP needs at least two sizes".into()));
        }
        let mut layers = Vec::new();
        for (i, w) in sizes.windows(2).enumerate() {
            layers.push(Layer::Affine(AffineLayer::he_uniform(w[0], w[1], rng)));
            if i + 2 < sizes.len() {
                if batch_norm {
                    layers.push(Layer::BatchNorm(BatchNormLayer::new(w[1])));
                }
                layers.push(Layer::Activation(hidden));
            } else {
                layers.push(Layer::Activation(output));
            }
        }
        Self::new(layers)
    }

    /// Every layer is affine → (batch norm) → `activation`; used for
    /// representation bodies whose last layer is itself a hidden layer.
    pub fn stack(
        sizes: &[usize],
        activation: Activation,
        batch_norm: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Input("a stack needs at least two sizes".into()));
        }
        let mut layers = Vec::new();
        for w in sizes.windows(2) {
            layers.push(Layer::Affine(AffineLayer::he_uniform(w[0], w[1], rng)));
            if batch_norm {
                layers.push(Layer::BatchNorm(BatchNormLayer::new(w[1])));
            }
            layers.push(Layer::Activation(activation));
        }
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    /// Output dimension after the first `n` layers.
    pub fn dim_after(&self, n: usize) -> usize {
        let mut dim = self.input_dim;
        for layer in &self.layers[..n] {
            if let Layer::Affine(a) = layer {
                dim = a.output_dim();
            }
        }
        dim
    }

    pub fn param_blocks(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Affine(a) => {
                    out.push(a.weight.as_slice());
                    out.push(a.bias.as_slice());
                }
                Layer::BatchNorm(b) => {
                    out.push(b.gamma.as_slice());
                    out.push(b.beta.as_slice());
                }
                Layer::Activation(_) => {}
            }
        }
        out
    }

    pub fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Affine(a) => {
                    out.push(a.weight.as_mut_slice());
                    out.push(a.bias.as_mut_slice());
                }
                Layer::BatchNorm(b) => {
                    out.push(b.gamma.as_mut_slice());
                    out.push(b.beta.as_mut_slice());
                }
                Layer::Activation(_) => {}
            }
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.param_blocks().iter().map(|b| b.len()).sum()
    }

    /// Full forward pass. `Train` uses and updates batch statistics.
    pub fn forward(&mut self, x: &Matrix, mode: Mode) -> Result<(Matrix, ForwardCache)> {
        match mode {
            Mode::Eval => self.forward_eval(x),
            Mode::Train => {
                let n = self.layers.len();
                self.forward_train_prefix(x, n)
            }
        }
    }

    /// Eval-mode forward pass through `&self`.
    pub fn forward_eval(&self, x: &Matrix) -> Result<(Matrix, ForwardCache)> {
        self.forward_eval_prefix(x, self.layers.len())
    }

    /// Eval-mode output without keeping a cache.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward_eval(x)?.0)
    }

    /// Eval-mode output of the first `n` layers.
    pub fn predict_prefix(&self, x: &Matrix, n: usize) -> Result<Matrix> {
        Ok(self.forward_eval_prefix(x, n)?.0)
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim {
            return Err(Error::shape("net forward", self.input_dim, x.cols()));
        }
        Ok(())
    }

    pub(crate) fn forward_train_prefix(
        &mut self,
        x: &Matrix,
        n: usize,
    ) -> Result<(Matrix, ForwardCache)> {
        self.check_input(x)?;
        let mut entries = Vec::with_capacity(n);
        let mut cur = x.clone();
        for layer in &mut self.layers[..n] {
            cur = match layer {
                Layer::Affine(a) => {
                    let y = a.forward(&cur)?;
                    entries.push(LayerCache::Affine { input: cur });
                    y
                }
                Layer::BatchNorm(b) => {
                    let (y, c) = b.forward(&cur, Mode::Train)?;
                    entries.push(LayerCache::BatchNorm(c));
                    y
                }
                Layer::Activation(act) => {
                    let y = act.apply(&cur);
                    entries.push(LayerCache::Activation { output: y.clone() });
                    y
                }
            };
        }
        Ok((
            cur,
            ForwardCache {
                entries,
                rows: x.rows(),
                layers: n,
            },
        ))
    }

    pub(crate) fn forward_eval_prefix(&self, x: &Matrix, n: usize) -> Result<(Matrix, ForwardCache)> {
        self.check_input(x)?;
        let mut entries = Vec::with_capacity(n);
        let mut cur = x.clone();
        for layer in &self.layers[..n] {
            cur = match layer {
                Layer::Affine(a) => {
                    let y = a.forward(&cur)?;
                    entries.push(LayerCache::Affine { input: cur });
                    y
                }
                Layer::BatchNorm(b) => {
                    let (y, c) = b.forward_frozen(&cur)?;
                    entries.push(LayerCache::BatchNorm(c));
                    y
                }
                Layer::Activation(act) => {
                    let y = act.apply(&cur);
                    entries.push(LayerCache::Activation { output: y.clone() });
                    y
                }
            };
        }
        Ok((
            cur,
            ForwardCache {
                entries,
                rows: x.rows(),
                layers: n,
            },
        ))
    }

    /// Back-propagates the adjoint `dy` of the network output. Parameter
    /// gradients are those of `Σ Y ⊙ dY`.
    pub fn backward(&self, cache: &ForwardCache, dy: &Matrix) -> Result<(Matrix, Gradients)> {
        if cache.layers != self.layers.len() || cache.entries.len() != self.layers.len() {
            return Err(Error::State(format!(
                "cache covers {} layers, network has {}",
                cache.layers,
                self.layers.len()
            )));
        }
        if dy.rows() != cache.rows || dy.cols() != self.output_dim {
            return Err(Error::shape(
                "net backward",
                format!("{}x{}", cache.rows, self.output_dim),
                format!("{}x{}", dy.rows(), dy.cols()),
            ));
        }
        let mut blocks: Vec<Vec<f64>> = Vec::new();
        let mut grad = dy.clone();
        for (layer, entry) in self.layers.iter().zip(&cache.entries).rev() {
            grad = match (layer, entry) {
                (Layer::Affine(a), LayerCache::Affine { input }) => {
                    if input.cols() != a.input_dim() {
                        return Err(Error::State("cache does not match affine layer".into()));
                    }
                    let (dx, dw, db) = a.backward(input, &grad)?;
                    blocks.push(db);
                    blocks.push(dw.into_vec());
                    dx
                }
                (Layer::BatchNorm(b), LayerCache::BatchNorm(c)) => {
                    if c.inv_std.len() != b.features() {
                        return Err(Error::State("cache does not match batch-norm layer".into()));
                    }
                    let (dx, dgamma, dbeta) = b.backward(c, &grad);
                    blocks.push(dbeta);
                    blocks.push(dgamma);
                    dx
                }
                (Layer::Activation(act), LayerCache::Activation { output }) => {
                    if output.shape() != grad.shape() {
                        return Err(Error::State("cache does not match activation".into()));
                    }
                    act.backward(output, &grad)
                }
                _ => return Err(Error::State("cache layer kinds do not match network".into())),
            };
        }
        blocks.reverse();
        Ok((grad, Gradients { blocks }))
    }
}
