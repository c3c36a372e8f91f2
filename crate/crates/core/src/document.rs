//! Portable model documents.
//!
//! Trained models and their feature-pipeline artifacts serialize to a single
//! JSON document so inference is self-contained: architecture metadata, every
//! weight/bias array in row-major order with declared shapes, and the fitted
//! normalization/PCA state. Floats are written with shortest-round-trip
//! decimal encoding, so save → load reproduces every `f64` bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Serde adapter storing an `ndarray::Array2<f64>` as
/// `{"rows": r, "cols": c, "data": [row-major floats]}`.
pub mod serde_matrix {
    use ndarray::Array2;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Repr {
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    }

    pub fn serialize<S: Serializer>(m: &Array2<f64>, s: S) -> Result<S::Ok, S::Error> {
        Repr {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.iter().copied().collect(),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Array2<f64>, D::Error> {
        let repr = Repr::deserialize(d)?;
        if repr.data.len() != repr.rows * repr.cols {
            return Err(serde::de::Error::custom(format!(
                "matrix declared {}x{} but carries {} values",
                repr.rows,
                repr.cols,
                repr.data.len()
            )));
        }
        Array2::from_shape_vec((repr.rows, repr.cols), repr.data)
            .map_err(|e| serde::de::Error::custom(e.to_string()))
    }
}

/// Serde adapter storing an `ndarray::Array1<f64>` as a plain JSON array.
pub mod serde_vector {
    use ndarray::Array1;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Array1<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice()
            .map(|sl| sl.to_vec())
            .unwrap_or_else(|| v.iter().copied().collect::<Vec<f64>>())
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Array1<f64>, D::Error> {
        Ok(Array1::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

use crate::baselines::fnn::FnnModel;
use crate::net::NetworkParams;
use crate::pipeline::FeaturePipeline;

pub const DOCUMENT_FORMAT: &str = "loadcast-model";
pub const DOCUMENT_VERSION: u32 = 1;

/// The trained estimator held by a document: either a recurrent sequence
/// network or one of the feed-forward baseline variants.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ModelSpec {
    Sequence(NetworkParams),
    FeedForward(FnnModel),
}

impl ModelSpec {
    pub fn label(&self) -> String {
        match self {
            ModelSpec::Sequence(net) => format!("{}-{}", net.cell_kind(), net.mode),
            ModelSpec::FeedForward(fnn) => format!("fnn-{}in", fnn.input_width()),
        }
    }

    pub fn parameter_count(&self) -> usize {
        match self {
            ModelSpec::Sequence(net) => net.parameter_count(),
            ModelSpec::FeedForward(fnn) => fnn.parameter_count(),
        }
    }

    /// Applies the model to one engineered window and returns the
    /// normalized final-year prediction. A feed-forward model consumes the
    /// final step when its input matches one step's width, otherwise the
    /// whole window flattened.
    pub fn predict_window(&self, steps: &[Vec<f64>]) -> Result<f64> {
        match self {
            ModelSpec::Sequence(net) => net
                .forward_sequence(steps)?
                .last()
                .copied()
                .ok_or_else(|| Error::shape("network produced no outputs")),
            ModelSpec::FeedForward(fnn) => {
                let last = steps
                    .last()
                    .ok_or_else(|| Error::shape("window has no steps"))?;
                if fnn.input_width() == last.len() {
                    fnn.forward(last)
                } else {
                    fnn.forward(&steps.concat())
                }
            }
        }
    }
}

/// Echo of the hyperparameters a model was trained with, kept for provenance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: String,
    pub seed: u64,
    pub final_epoch_loss: Option<f64>,
}

/// A self-contained trained model: estimator weights plus the fitted feature
/// pipeline required to map raw records into model inputs and outputs back to
/// amperes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format: String,
    pub version: u32,
    pub model: ModelSpec,
    pub pipeline: FeaturePipeline,
    pub training: Option<TrainingSummary>,
}

impl ModelDocument {
    pub fn new(model: ModelSpec, pipeline: FeaturePipeline, training: Option<TrainingSummary>) -> Self {
        ModelDocument {
            format: DOCUMENT_FORMAT.to_string(),
            version: DOCUMENT_VERSION,
            model,
            pipeline,
            training,
        }
    }

    /// Structural sanity checks after deserialization.
    pub fn check(&self) -> Result<()> {
        if self.format != DOCUMENT_FORMAT {
            return Err(Error::domain(format!(
                "unrecognized document format {:?} (expected {:?})",
                self.format, DOCUMENT_FORMAT
            )));
        }
        if self.version != DOCUMENT_VERSION {
            return Err(Error::domain(format!(
                "unsupported document version {} (expected {})",
                self.version, DOCUMENT_VERSION
            )));
        }
        match &self.model {
            ModelSpec::Sequence(net) => {
                net.check()?;
                if net.input_width != self.pipeline.engineered_width() {
                    return Err(Error::shape(format!(
                        "network expects {} inputs but the pipeline produces {}",
                        net.input_width,
                        self.pipeline.engineered_width()
                    )));
                }
            }
            ModelSpec::FeedForward(fnn) => {
                fnn.check()?;
                let w = self.pipeline.engineered_width();
                let n = self.pipeline.n_steps;
                if fnn.input_width() != w && fnn.input_width() != n * w {
                    return Err(Error::shape(format!(
                        "feed-forward input width {} matches neither one step ({}) nor {} flattened steps ({})",
                        fnn.input_width(),
                        w,
                        n,
                        n * w
                    )));
                }
            }
        }
        self.pipeline.check()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::domain(format!("model document serialization failed: {e}")))
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(json)
            .map_err(|e| Error::domain(format!("model document parse failed: {e}")))?;
        doc.check()?;
        Ok(doc)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut json = self.to_json()?;
        json.push('\n');
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let json = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&json).map_err(|e| match e {
            Error::Domain(detail) => Error::parse(path, detail),
            other => other,
        })
    }
}
