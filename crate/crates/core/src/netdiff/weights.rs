//! JSON weight files.
//!
//! ```text
//! {"format_version":1,"n":2,"m":1,
//!  "layers":[{"in_dim":2,"out_dim":1,"activation":"relu",
//!             "weights":[0.5,-1.25],"biases":[0.0]}]}
//! ```
//!
//! Floats are written with shortest round-trip formatting, so
//! `load(save(net))` reproduces every parameter bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mlp::relabel_layer;
use super::{Activation, Layer, MlpNetwork};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct WeightFile {
    format_version: u32,
    n: usize,
    m: usize,
    layers: Vec<LayerRecord>,
}

#[derive(Serialize, Deserialize)]
struct LayerRecord {
    in_dim: usize,
    out_dim: usize,
    activation: String,
    weights: Vec<f64>,
    biases: Vec<f64>,
}

pub fn network_to_string(net: &MlpNetwork) -> Result<String> {
    let mut layers = Vec::with_capacity(net.layers().len());
    for (i, layer) in net.layers().iter().enumerate() {
        if !layer
            .weights()
            .iter()
            .chain(layer.biases())
            .all(|v| v.is_finite())
        {
            return Err(Error::Layer {
                layer: i,
                reason: "non-finite parameter cannot be written".into(),
            });
        }
        layers.push(LayerRecord {
            in_dim: layer.in_dim(),
            out_dim: layer.out_dim(),
            activation: layer.activation().tag().to_string(),
            weights: layer.weights().to_vec(),
            biases: layer.biases().to_vec(),
        });
    }
    let file = WeightFile {
        format_version: FORMAT_VERSION,
        n: net.in_dim(),
        m: net.out_dim(),
        layers,
    };
    serde_json::to_string(&file).map_err(|e| Error::Format(e.to_string()))
}

pub fn network_from_str(text: &str) -> Result<MlpNetwork> {
    let file: WeightFile = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    if file.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported format version {} (expected {FORMAT_VERSION})",
            file.format_version
        )));
    }
    let mut layers = Vec::with_capacity(file.layers.len());
    for (i, rec) in file.layers.into_iter().enumerate() {
        let activation = Activation::from_tag(&rec.activation).ok_or_else(|| Error::Layer {
            layer: i,
            reason: format!("unknown activation tag {:?}", rec.activation),
        })?;
        let layer = Layer::new(rec.in_dim, rec.out_dim, rec.weights, rec.biases, activation)
            .map_err(|e| relabel_layer(e, i))?;
        layers.push(layer);
    }
    let net = MlpNetwork::new(layers)?;
    if net.in_dim() != file.n || net.out_dim() != file.m {
        return Err(Error::Format(format!(
            "header declares {}→{} but layers give {}→{}",
            file.n,
            file.m,
            net.in_dim(),
            net.out_dim()
        )));
    }
    Ok(net)
}

pub fn save_network(net: &MlpNetwork, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, network_to_string(net)?)?;
    Ok(())
}

pub fn load_network(path: impl AsRef<Path>) -> Result<MlpNetwork> {
    network_from_str(&fs::read_to_string(path)?)
}
