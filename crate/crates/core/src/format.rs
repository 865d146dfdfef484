//! Model files (JSON) and datasets (CSV).
//!
//! A model file holds the input width, the label count and the layers in
//! order. Affine layers carry row-major `weights` (one array per output
//! neuron) and `biases`; convolution layers carry flat `kernels` in
//! `out_ch × in_ch × kh × kw` order plus their geometry:
//!
//! ```json
//! {
//!   "input_dim": 2,
//!   "num_labels": 2,
//!   "layers": [
//!     {"type": "affine", "activation": "sigmoid",
//!      "weights": [[1.0, 1.0], [1.0, -1.0]], "biases": [0.0, 0.0]},
//!     {"type": "affine", "activation": "identity",
//!      "weights": [[2.0, 1.0], [1.0, 1.0]], "biases": [0.0, 0.0]}
//!   ]
//! }
//! ```
//!
//! A dataset is headerless CSV, one sample per line: the label, then
//! `input_dim` values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::activation::ActivationKind;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::network::{Conv, Layer, LayerKind, Network};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub input_dim: usize,
    pub num_labels: usize,
    pub layers: Vec<LayerFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum LayerFile {
    Affine {
        activation: ActivationKind,
        weights: Vec<Vec<f64>>,
        biases: Vec<f64>,
    },
    Conv {
        activation: ActivationKind,
        kernels: Vec<f64>,
        kernel_shape: [usize; 4],
        biases: Vec<f64>,
        #[serde(default = "unit_stride")]
        stride: [usize; 2],
        #[serde(default)]
        padding: [usize; 2],
        in_shape: [usize; 3],
    },
}

fn unit_stride() -> [usize; 2] {
    [1, 1]
}

impl ModelFile {
    pub fn from_network(net: &Network) -> Self {
        let layers = net
            .layers()
            .iter()
            .map(|layer| match &layer.kind {
                LayerKind::Affine { w, b } => LayerFile::Affine {
                    activation: layer.activation,
                    weights: w.to_rows(),
                    biases: b.to_vec(),
                },
                LayerKind::Conv(c) => LayerFile::Conv {
                    activation: layer.activation,
                    kernels: c.kernels.clone(),
                    kernel_shape: c.kernel_shape,
                    biases: c.bias.to_vec(),
                    stride: [c.stride.0, c.stride.1],
                    padding: [c.padding.0, c.padding.1],
                    in_shape: [c.in_shape.0, c.in_shape.1, c.in_shape.2],
                },
            })
            .collect();
        Self {
            input_dim: net.input_dim(),
            num_labels: net.num_labels(),
            layers,
        }
    }

    pub fn into_network(self) -> Result<Network> {
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.into_iter().enumerate() {
            layers.push(match layer {
                LayerFile::Affine {
                    activation,
                    weights,
                    biases,
                } => {
                    let cols = weights.first().map_or(0, Vec::len);
                    if let Some(r) = weights.iter().position(|row| row.len() != cols) {
                        return Err(Error::Shape {
                            layer: i,
                            reason: format!("weight row {r} has {} entries, row 0 has {cols}", weights[r].len()),
                        });
                    }
                    Layer::affine(Matrix::from_rows(&weights)?, Vector::new(biases)?, activation)
                }
                LayerFile::Conv {
                    activation,
                    kernels,
                    kernel_shape,
                    biases,
                    stride,
                    padding,
                    in_shape,
                } => Layer {
                    kind: LayerKind::Conv(Conv {
                        kernels,
                        kernel_shape,
                        bias: Vector::new(biases)?,
                        stride: (stride[0], stride[1]),
                        padding: (padding[0], padding[1]),
                        in_shape: (in_shape[0], in_shape[1], in_shape[2]),
                    }),
                    activation,
                },
            });
        }
        Network::new(layers, self.input_dim, self.num_labels)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, message: impl ToString) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

pub fn parse_network(text: &str) -> Result<Network> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Structure(format!("model: {e}")))?;
    file.into_network()
}

pub fn load_network(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let mut text = String::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_string(&mut text))
        .map_err(io_err(path))?;
    let file: ModelFile = serde_json::from_str(&text).map_err(|e| parse_err(path, e))?;
    file.into_network().map_err(|e| parse_err(path, e))
}

pub fn network_to_json(net: &Network) -> String {
    serde_json::to_string_pretty(&ModelFile::from_network(net)).expect("model serialises") + "\n"
}

pub fn save_network(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, network_to_json(net)).map_err(io_err(path))
}

pub type Sample = (usize, Vec<f64>);

pub fn read_dataset<R: Read>(reader: R, input_dim: Option<usize>) -> std::result::Result<Vec<Sample>, String> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let line = rec.position().map_or(i + 1, |p| p.line() as usize);
        let mut fields = rec.iter();
        let label: usize = fields
            .next()
            .ok_or_else(|| format!("line {line}: empty record"))?
            .parse()
            .map_err(|e| format!("line {line}: label: {e}"))?;
        let x = fields
            .map(|f| f.parse::<f64>().map_err(|e| format!("line {line}: value {f:?}: {e}")))
            .collect::<std::result::Result<Vec<f64>, _>>()?;
        if let Some(n) = input_dim {
            if x.len() != n {
                return Err(format!("line {line}: {} values, model expects {n}", x.len()));
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(format!("line {line}: non-finite value"));
        }
        out.push((label, x));
    }
    Ok(out)
}

pub fn load_dataset(path: impl AsRef<Path>, input_dim: Option<usize>) -> Result<Vec<Sample>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    read_dataset(BufReader::new(file), input_dim).map_err(|m| parse_err(path, m))
}

pub fn write_dataset<W: Write>(writer: W, data: &[Sample]) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).flexible(true).from_writer(writer);
    for (label, x) in data {
        let mut rec = vec![label.to_string()];
        rec.extend(x.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset(path: impl AsRef<Path>, data: &[Sample]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    write_dataset(BufWriter::new(file), data).map_err(|e| parse_err(path, e))
}
