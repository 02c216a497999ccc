use std::path::Path;

use super::model::{Autoencoder, AutoencoderBank, DamicModel, GateNetwork};
use crate::data::{BinReader, BinWriter};
use crate::error::{Error, Result};
use crate::nn::{Activation, AffineLayer, BatchNormLayer, Layer, MultiLayerNet};

pub const MODEL_MAGIC: &[u8; 8] = b"DAMICMD\0";
pub const MODEL_VERSION: u32 = 1;

const TAG_AFFINE: u8 = 0;
const TAG_BATCH_NORM: u8 = 1;
const TAG_ACTIVATION: u8 = 2;

fn write_affine(w: &mut BinWriter, a: &AffineLayer) {
    w.matrix(&a.weight);
    w.f64s(&a.bias);
}

fn read_affine(r: &mut BinReader) -> Result<AffineLayer> {
    let weight = r.matrix()?;
    let bias = r.f64s()?;
    if bias.len() != weight.rows() {
        return Err(Error::format("affine bias length does not match weight rows"));
    }
    Ok(AffineLayer { weight, bias })
}

fn write_net(w: &mut BinWriter, net: &MultiLayerNet) {
    w.u64(net.layers().len() as u64);
    for layer in net.layers() {
        match layer {
            Layer::Affine(a) => {
                w.u8(TAG_AFFINE);
                write_affine(w, a);
            }
            Layer::BatchNorm(b) => {
                w.u8(TAG_BATCH_NORM);
                w.f64s(&b.gamma);
                w.f64s(&b.beta);
                w.f64s(&b.running_mean);
                w.f64s(&b.running_var);
                w.f64(b.momentum);
                w.f64(b.epsilon);
            }
            Layer::Activation(act) => {
                w.u8(TAG_ACTIVATION);
                w.u8(act.tag());
            }
        }
    }
}

fn read_net(r: &mut BinReader) -> Result<MultiLayerNet> {
    let count = r.usize()?;
    let mut layers = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let layer = match r.u8()? {
            TAG_AFFINE => Layer::Affine(read_affine(r)?),
            TAG_BATCH_NORM => {
                let gamma = r.f64s()?;
                let beta = r.f64s()?;
                let running_mean = r.f64s()?;
                let running_var = r.f64s()?;
                let f = gamma.len();
                if beta.len() != f || running_mean.len() != f || running_var.len() != f {
                    return Err(Error::format("batch-norm vectors differ in length"));
                }
                Layer::BatchNorm(BatchNormLayer {
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                    momentum: r.f64()?,
                    epsilon: r.f64()?,
                })
            }
            TAG_ACTIVATION => {
                let tag = r.u8()?;
                Layer::Activation(
                    Activation::from_tag(tag)
                        .ok_or_else(|| Error::format(format!("unknown activation tag {tag}")))?,
                )
            }
            other => return Err(Error::format(format!("unknown layer tag {other}"))),
        };
        layers.push(layer);
    }
    MultiLayerNet::new(layers).map_err(|e| Error::format(format!("invalid network: {e}")))
}

pub fn model_to_bytes(model: &DamicModel) -> Vec<u8> {
    let mut w = BinWriter::new();
    w.bytes(MODEL_MAGIC);
    w.u32(MODEL_VERSION);
    w.u64(model.k() as u64);
    w.u64(model.dim() as u64);
    write_net(&mut w, &model.gate.body);
    write_affine(&mut w, &model.gate.head);
    for e in &model.bank.experts {
        w.u64(e.encoder_layers as u64);
        write_net(&mut w, &e.net);
    }
    w.finish()
}

pub fn model_from_bytes(buf: &[u8]) -> Result<DamicModel> {
    let mut r = BinReader::new(buf);
    r.expect_magic(MODEL_MAGIC)?;
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(Error::format(format!("unsupported model version {version}")));
    }
    let k = r.usize()?;
    let d = r.usize()?;
    let body = read_net(&mut r)?;
    let head = read_affine(&mut r)?;
    if head.input_dim() != body.output_dim() {
        return Err(Error::format("gate head does not match its body"));
    }
    let mut experts = Vec::with_capacity(k.min(1024));
    for _ in 0..k {
        let encoder_layers = r.usize()?;
        let net = read_net(&mut r)?;
        experts.push(Autoencoder::from_net(net, encoder_layers).map_err(|e| Error::format(e.to_string()))?);
    }
    r.finish()?;
    let model = DamicModel::new(GateNetwork { body, head }, AutoencoderBank::new(experts)?)
        .map_err(|e| Error::format(e.to_string()))?;
    if model.k() != k || model.dim() != d {
        return Err(Error::format("model header disagrees with its layers"));
    }
    Ok(model)
}

pub fn save_model(path: &Path, model: &DamicModel) -> Result<()> {
    std::fs::write(path, model_to_bytes(model))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<DamicModel> {
    model_from_bytes(&std::fs::read(path)?)
}
