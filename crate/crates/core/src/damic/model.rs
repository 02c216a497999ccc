use rand::Rng;

use super::objective::{loss_from_log_probs, soft_assign_from_log_probs};
use crate::error::{Error, Result};
use crate::nn::{
    half_sq_distance, log_softmax_rows, softmax_rows, Activation, AffineLayer, ForwardCache,
    Gradients, Layer, Matrix, Mode, MultiLayerNet, Parameterized,
};

/// Soft clustering network: a representation body `h(x)` followed by a
/// `k`-way affine head and a softmax.
#[derive(Clone, Debug, PartialEq)]
pub struct GateNetwork {
    pub body: MultiLayerNet,
    pub head: AffineLayer,
}

pub(crate) struct GatePass {
    pub logits: Matrix,
    body_cache: ForwardCache,
    embedding: Matrix,
}

impl GateNetwork {
    /// `d → hidden… → embedding_dim → k`.
    pub fn new(
        d: usize,
        hidden: &[usize],
        embedding_dim: usize,
        k: usize,
        batch_norm: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut sizes = vec![d];
        sizes.extend_from_slice(hidden);
        sizes.push(embedding_dim);
        let body = MultiLayerNet::stack(&sizes, Activation::Elu, batch_norm, rng)?;
        let head = AffineLayer::he_uniform(embedding_dim, k, rng);
        Ok(Self { body, head })
    }

    pub fn k(&self) -> usize {
        self.head.output_dim()
    }

    pub fn embedding_dim(&self) -> usize {
        self.head.input_dim()
    }

    /// Eval-mode `(H, logits)`.
    pub fn embed_and_logits(&self, x: &Matrix) -> Result<(Matrix, Matrix)> {
        let h = self.body.predict(x)?;
        let logits = self.head.forward(&h)?;
        Ok((h, logits))
    }

    pub(crate) fn pass(&mut self, x: &Matrix, mode: Mode) -> Result<GatePass> {
        let (embedding, body_cache) = self.body.forward(x, mode)?;
        let logits = self.head.forward(&embedding)?;
        Ok(GatePass {
            logits,
            body_cache,
            embedding,
        })
    }

    /// Gradients for `[body…, head weight, head bias]` given `∂L/∂logits`.
    pub(crate) fn backward(&self, pass: &GatePass, d_logits: &Matrix) -> Result<Gradients> {
        let (d_h, d_w, d_b) = self.head.backward(&pass.embedding, d_logits)?;
        let (_, mut grads) = self.body.backward(&pass.body_cache, &d_h)?;
        grads.blocks.push(d_w.into_vec());
        grads.blocks.push(d_b);
        Ok(grads)
    }

    pub fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut blocks = self.body.param_blocks_mut();
        blocks.push(self.head.weight.as_mut_slice());
        blocks.push(self.head.bias.as_mut_slice());
        blocks
    }

    pub fn param_blocks(&self) -> Vec<&[f64]> {
        let mut blocks = self.body.param_blocks();
        blocks.push(self.head.weight.as_slice());
        blocks.push(self.head.bias.as_slice());
        blocks
    }
}

/// A `d → hidden… → bottleneck → …hidden → d` autoencoder with sigmoid output.
#[derive(Clone, Debug, PartialEq)]
pub struct Autoencoder {
    pub net: MultiLayerNet,
    /// Number of layers up to and including the bottleneck activation.
    pub encoder_layers: usize,
}

impl Autoencoder {
    pub fn new(
        d: usize,
        hidden: &[usize],
        bottleneck: usize,
        batch_norm: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut sizes = vec![d];
        sizes.extend_from_slice(hidden);
        sizes.push(bottleneck);
        sizes.extend(hidden.iter().rev());
        sizes.push(d);
        let net = MultiLayerNet::mlp(&sizes, Activation::Elu, Activation::Sigmoid, batch_norm, rng)?;
        let per_layer = if batch_norm { 3 } else { 2 };
        Ok(Self {
            net,
            encoder_layers: (hidden.len() + 1) * per_layer,
        })
    }

    /// Wraps an existing network whose bottleneck ends after `encoder_layers`.
    pub fn from_net(net: MultiLayerNet, encoder_layers: usize) -> Result<Self> {
        if encoder_layers == 0 || encoder_layers >= net.layers().len() {
            return Err(Error::Input("encoder must be a proper prefix".into()));
        }
        if net.input_dim() != net.output_dim() {
            return Err(Error::shape(
                "autoencoder",
                net.input_dim(),
                net.output_dim(),
            ));
        }
        Ok(Self {
            net,
            encoder_layers,
        })
    }

    pub fn dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn bottleneck_dim(&self) -> usize {
        self.net.dim_after(self.encoder_layers)
    }

    /// Eval-mode bottleneck activations.
    pub fn encode(&self, x: &Matrix) -> Result<Matrix> {
        self.net.predict_prefix(x, self.encoder_layers)
    }

    /// Eval-mode reconstruction.
    pub fn reconstruct(&self, x: &Matrix) -> Result<Matrix> {
        self.net.predict(x)
    }

    /// Adds `N(0, std²)` noise to every weight and bias.
    pub fn perturb(&mut self, std: f64, rng: &mut impl Rng) {
        use rand_distr::{Distribution, Normal};
        let normal = Normal::new(0.0, std).expect("finite std");
        for layer in self.net.layers_mut() {
            if let Layer::Affine(a) = layer {
                a.weight
                    .as_mut_slice()
                    .iter_mut()
                    .chain(a.bias.iter_mut())
                    .for_each(|w| *w += normal.sample(rng));
            }
        }
    }
}

/// One autoencoder per cluster, all over the same input dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct AutoencoderBank {
    pub experts: Vec<Autoencoder>,
}

impl AutoencoderBank {
    pub fn new(experts: Vec<Autoencoder>) -> Result<Self> {
        let Some(first) = experts.first() else {
            return Err(Error::Input("bank needs at least one expert".into()));
        };
        let d = first.dim();
        if let Some(bad) = experts.iter().find(|e| e.dim() != d) {
            return Err(Error::shape("autoencoder bank", d, bad.dim()));
        }
        Ok(Self { experts })
    }

    pub fn k(&self) -> usize {
        self.experts.len()
    }

    pub fn dim(&self) -> usize {
        self.experts[0].dim()
    }

    /// Eval-mode reconstructions and `D[t][i] = ½‖x_t − f_i(x_t)‖²`.
    pub fn reconstruct_all(&self, x: &Matrix) -> Result<(Vec<Matrix>, Matrix)> {
        if x.cols() != self.dim() {
            return Err(Error::shape("reconstruct_all", self.dim(), x.cols()));
        }
        let mut recon = Vec::with_capacity(self.k());
        let mut d = Matrix::zeros(x.rows(), self.k());
        for (i, e) in self.experts.iter().enumerate() {
            let xhat = e.reconstruct(x)?;
            for (t, dt) in half_sq_distance(x, &xhat)?.into_iter().enumerate() {
                d[(t, i)] = dt;
            }
            recon.push(xhat);
        }
        Ok((recon, d))
    }

    pub fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.experts
            .iter_mut()
            .flat_map(|e| e.net.param_blocks_mut())
            .collect()
    }
}

/// A gate plus `k` expert autoencoders.
#[derive(Clone, Debug, PartialEq)]
pub struct DamicModel {
    pub gate: GateNetwork,
    pub bank: AutoencoderBank,
}

/// Everything computed by one differentiable pass over a batch.
pub struct BatchEvaluation {
    /// `Σ_t` of the per-sample mixture loss.
    pub loss: f64,
    pub per_sample: Vec<f64>,
    pub p: Matrix,
    pub d: Matrix,
    pub w: Matrix,
    /// Gradients in [`DamicModel::param_blocks_mut`] order, of the summed loss.
    pub grads: Gradients,
}

impl DamicModel {
    pub fn new(gate: GateNetwork, bank: AutoencoderBank) -> Result<Self> {
        if gate.k() != bank.k() {
            return Err(Error::shape("gate vs bank size", gate.k(), bank.k()));
        }
        if gate.body.input_dim() != bank.dim() {
            return Err(Error::shape("gate vs bank dimension", gate.body.input_dim(), bank.dim()));
        }
        Ok(Self { gate, bank })
    }

    /// Randomly initialized model with the architecture from `cfg`.
    pub fn random(d: usize, cfg: &super::TrainConfig, rng: &mut impl Rng) -> Result<Self> {
        let gate = GateNetwork::new(
            d,
            &cfg.gate_hidden,
            cfg.embedding_dim,
            cfg.k,
            cfg.batch_norm,
            rng,
        )?;
        let experts = (0..cfg.k)
            .map(|_| Autoencoder::new(d, &cfg.ae_hidden, cfg.bottleneck(), cfg.batch_norm, rng))
            .collect::<Result<Vec<_>>>()?;
        Self::new(gate, AutoencoderBank::new(experts)?)
    }

    pub fn k(&self) -> usize {
        self.bank.k()
    }

    pub fn dim(&self) -> usize {
        self.bank.dim()
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.dim() {
            return Err(Error::shape("model input", self.dim(), x.cols()));
        }
        Ok(())
    }

    /// Eval-mode embedding `H = h(X)` and gate distribution `P`.
    pub fn gate_forward(&self, x: &Matrix) -> Result<(Matrix, Matrix)> {
        self.check_input(x)?;
        let (h, logits) = self.gate.embed_and_logits(x)?;
        Ok((h, softmax_rows(&logits)))
    }

    /// Raw gate logits `w_i h(x) + b_i` (eval mode).
    pub fn gate_logits(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        Ok(self.gate.embed_and_logits(x)?.1)
    }

    pub fn reconstruct_all(&self, x: &Matrix) -> Result<(Vec<Matrix>, Matrix)> {
        self.bank.reconstruct_all(x)
    }

    pub fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut blocks = self.gate.param_blocks_mut();
        blocks.extend(self.bank.param_blocks_mut());
        blocks
    }

    /// Mixture loss over `x` and its exact gradient.
    ///
    /// Per sample, the gate logits receive `P − W` and expert `i`'s output
    /// receives `W[t][i]·(f_i(x_t) − x_t)`. `mode` selects batch statistics
    /// (`Train`) or frozen running statistics (`Eval`) for batch norm.
    pub fn evaluate(&mut self, x: &Matrix, mode: Mode) -> Result<BatchEvaluation> {
        self.check_input(x)?;
        let (n, k) = (x.rows(), self.k());
        let gate_pass = self.gate.pass(x, mode)?;
        let log_p = log_softmax_rows(&gate_pass.logits);
        let p = log_p.map(f64::exp);

        let mut d = Matrix::zeros(n, k);
        let mut expert_passes = Vec::with_capacity(k);
        for (i, e) in self.bank.experts.iter_mut().enumerate() {
            let (xhat, cache) = e.net.forward(x, mode)?;
            for (t, dt) in half_sq_distance(x, &xhat)?.into_iter().enumerate() {
                d[(t, i)] = dt;
            }
            expert_passes.push((xhat, cache));
        }

        let per_sample = loss_from_log_probs(&log_p, &d);
        let loss: f64 = per_sample.iter().sum();
        if !loss.is_finite() {
            return Err(Error::Divergence(format!("non-finite mixture loss {loss}")));
        }
        let w = soft_assign_from_log_probs(&log_p, &d);

        let mut d_logits = p.clone();
        for (g, wi) in d_logits.as_mut_slice().iter_mut().zip(w.as_slice()) {
            *g -= wi;
        }
        let mut grads = self.gate.backward(&gate_pass, &d_logits)?;
        for (i, (e, (xhat, cache))) in self.bank.experts.iter().zip(&expert_passes).enumerate() {
            let mut adj = xhat.clone();
            for t in 0..n {
                let wt = w[(t, i)];
                for (a, xv) in adj.row_mut(t).iter_mut().zip(x.row(t)) {
                    *a = wt * (*a - xv);
                }
            }
            let (_, g) = e.net.backward(cache, &adj)?;
            grads.extend(g);
        }
        Ok(BatchEvaluation {
            loss,
            per_sample,
            p,
            d,
            w,
            grads,
        })
    }

    /// Eval-mode mixture loss `Σ_t` over `x`.
    pub fn loss(&self, x: &Matrix) -> Result<f64> {
        let (_, logits) = self.gate.embed_and_logits(x)?;
        let log_p = log_softmax_rows(&logits);
        let (_, d) = self.reconstruct_all(x)?;
        Ok(loss_from_log_probs(&log_p, &d).iter().sum())
    }
}

impl Parameterized for DamicModel {
    fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        DamicModel::param_blocks_mut(self)
    }
}
