//! Self-describing JSON model files.
//!
//! Weights are written row-major as decimal floats using the shortest
//! representation that parses back to the same bits, so save → load is
//! bit-exact.

use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{InputBlocks, MlpModel, OutputMode};
use crate::error::{self, Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct LayerFile {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    d_in: usize,
    #[serde(rename = "L")]
    n_labels: usize,
    hidden: usize,
    output_mode: OutputMode,
    dropout_p: f64,
    label_order: Vec<String>,
    input_blocks: InputBlocks,
    layers: Vec<LayerFile>,
}

fn layer(w: &Array2<f64>, b: &Array1<f64>) -> LayerFile {
    LayerFile {
        rows: w.nrows(),
        cols: w.ncols(),
        weights: w.iter().copied().collect(),
        bias: b.to_vec(),
    }
}

fn unpack(layer: LayerFile, rows: usize, cols: usize, name: &str) -> Result<(Array2<f64>, Array1<f64>)> {
    if layer.rows != rows || layer.cols != cols || layer.bias.len() != rows {
        return Err(Error::Shape(format!(
            "{name}: header says {}×{} with {} biases, expected {rows}×{cols}",
            layer.rows,
            layer.cols,
            layer.bias.len()
        )));
    }
    let w = Array2::from_shape_vec((rows, cols), layer.weights)
        .map_err(|e| Error::Shape(format!("{name}: {e}")))?;
    Ok((w, Array1::from(layer.bias)))
}

pub fn model_to_writer<W: Write>(model: &MlpModel, writer: W) -> Result<()> {
    let file = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        d_in: model.d_in(),
        n_labels: model.n_labels(),
        hidden: model.hidden(),
        output_mode: model.output_mode,
        dropout_p: model.dropout_p,
        label_order: model.label_order.clone(),
        input_blocks: model.input_blocks.clone(),
        layers: vec![
            layer(&model.w1, &model.b1),
            layer(&model.w2, &model.b2),
            layer(&model.w3, &model.b3),
        ],
    };
    serde_json::to_writer(writer, &file)?;
    Ok(())
}

pub fn model_from_str(text: &str) -> Result<MlpModel> {
    #[derive(Deserialize)]
    struct Version {
        format_version: u32,
    }
    let version: Version = serde_json::from_str(text)?;
    if version.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::Version {
            found: version.format_version,
            expected: MODEL_FORMAT_VERSION,
        });
    }
    let file: ModelFile = serde_json::from_str(text)?;
    if file.layers.len() != 3 {
        return Err(Error::Shape(format!("expected 3 layers, found {}", file.layers.len())));
    }
    if file.label_order.len() != file.n_labels {
        return Err(Error::Shape(format!(
            "L = {} but label_order has {} entries",
            file.n_labels,
            file.label_order.len()
        )));
    }
    let mut layers = file.layers.into_iter();
    let mut next = || layers.next().expect("three layers");
    let (w1, b1) = unpack(next(), file.hidden, file.d_in, "layer 1")?;
    let (w2, b2) = unpack(next(), file.hidden, file.hidden, "layer 2")?;
    let (w3, b3) = unpack(next(), file.n_labels, file.hidden, "output layer")?;
    let model = MlpModel {
        w1,
        b1,
        w2,
        b2,
        w3,
        b3,
        dropout_p: file.dropout_p,
        output_mode: file.output_mode,
        label_order: file.label_order,
        input_blocks: Vec::new(),
    };
    model.with_input_blocks(file.input_blocks)
}

pub fn save_model(model: &MlpModel, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    model_to_writer(model, &mut writer)?;
    writer.flush().map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<MlpModel> {
    model_from_str(&error::read_to_string(path)?)
}
