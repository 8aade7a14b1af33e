//! Model file format.
//!
//! ```text
//! "STRN1\0" | u32 LE header length | JSON header | f32 LE arrays
//! ```
//!
//! Arrays follow layer order, weights then bias for each layer.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::nn::network::{NetConfig, Network};
use crate::nn::NnError;
use crate::tensor::Tensor;

pub const MODEL_MAGIC: &[u8; 6] = b"STRN1\0";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub train_samples: usize,
    pub val_samples: usize,
    pub final_val_mse: Option<f64>,
    pub train_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerHeader {
    pub kind: String,
    pub weights: Vec<usize>,
    pub bias: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub profile: String,
    pub seed: u64,
    pub config: NetConfig,
    pub layers: Vec<LayerHeader>,
    pub parameter_count: usize,
    #[serde(default)]
    pub training: Option<TrainingMeta>,
}

pub fn encode_model(net: &Network, training: Option<&TrainingMeta>) -> Vec<u8> {
    let cfg = net.config();
    let header = ModelHeader {
        profile: cfg.profile.clone(),
        seed: cfg.seed,
        config: cfg.clone(),
        layers: net
            .layers()
            .iter()
            .map(|l| LayerHeader {
                kind: match l {
                    crate::nn::Layer::Conv(_) => "conv".into(),
                    crate::nn::Layer::Dense(_) => "dense".into(),
                },
                weights: l.weights().shape().to_vec(),
                bias: l.bias().len(),
            })
            .collect(),
        parameter_count: cfg.parameter_count(),
        training: training.cloned(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(10 + json.len() + 4 * header.parameter_count);
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for l in net.layers() {
        for t in [l.weights(), l.bias()] {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

pub fn decode_model(bytes: &[u8]) -> Result<(Network, ModelHeader), NnError> {
    if bytes.len() < MODEL_MAGIC.len() || &bytes[..MODEL_MAGIC.len()] != MODEL_MAGIC {
        return Err(NnError::Format("bad magic, not a model file".into()));
    }
    let rest = &bytes[MODEL_MAGIC.len()..];
    if rest.len() < 4 {
        return Err(NnError::Truncated("missing header length".into()));
    }
    let hlen = u32::from_le_bytes(rest[..4].try_into().unwrap()) as usize;
    let rest = &rest[4..];
    if rest.len() < hlen {
        return Err(NnError::Truncated(format!(
            "header declares {hlen} bytes, {} available",
            rest.len()
        )));
    }
    let header: ModelHeader = serde_json::from_slice(&rest[..hlen])
        .map_err(|e| NnError::Format(format!("bad header: {e}")))?;
    let expected = header.config.layer_shapes();
    if header.layers.len() != expected.len()
        || header
            .layers
            .iter()
            .zip(&expected)
            .any(|(l, (w, b))| &l.weights != w || l.bias != *b)
    {
        return Err(NnError::Shape(
            "header layer shapes disagree with the network config".into(),
        ));
    }

    let mut data = &rest[hlen..];
    let mut params = Vec::with_capacity(header.layers.len());
    for (i, l) in header.layers.iter().enumerate() {
        let mut take = |shape: &[usize]| -> Result<Tensor, NnError> {
            let n: usize = shape.iter().product();
            if data.len() < 4 * n {
                return Err(NnError::Truncated(format!(
                    "layer {i}: need {n} floats, {} bytes left",
                    data.len()
                )));
            }
            let vals = data[..4 * n]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            data = &data[4 * n..];
            Tensor::from_vec(shape, vals)
        };
        let w = take(&l.weights)?;
        let b = take(&[l.bias])?;
        params.push((w, b));
    }
    if !data.is_empty() {
        return Err(NnError::Format(format!("{} trailing bytes", data.len())));
    }
    let net = Network::from_parameters(header.config.clone(), params)?;
    Ok((net, header))
}

pub fn save_model(
    net: &Network,
    training: Option<&TrainingMeta>,
    path: &Path,
) -> Result<(), NnError> {
    std::fs::write(path, encode_model(net, training))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<(Network, ModelHeader), NnError> {
    decode_model(&std::fs::read(path)?)
}
