use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the verification library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid shape in layer {layer}: {reason}")]
    Shape { layer: usize, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("neuron {index} of layer {layer}: {source}")]
    Neuron {
        layer: usize,
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("structural error: {0}")]
    Structure(String),

    #[error("invalid label {label} (network has {num_labels} labels)")]
    Label { label: usize, num_labels: usize },

    #[error("input is misclassified: predicted {predicted}, expected {expected}")]
    Misclassified { predicted: usize, expected: usize },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::Dimension {
            context,
            expected,
            actual,
        }
    }

    pub(crate) fn at_neuron(self, layer: usize, index: usize) -> Self {
        Error::Neuron {
            layer,
            index,
            source: Box::new(self),
        }
    }
}
