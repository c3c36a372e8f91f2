//! Plain feed-forward comparison networks.
//!
//! Two variants consume engineered records: the one-year net sees only the
//! final step's features, the three-year net sees all steps flattened into
//! one vector. Hidden and output layers use ReLU; training mirrors the
//! sequence trainer exactly (mean-absolute-error loss, same optimizer,
//! same shuffling and seeding contract) so timing and accuracy comparisons
//! are apples-to-apples.

use serde::{Deserialize, Serialize};

use crate::data::SequenceSample;
use crate::error::{Error, Result};
use crate::net::train::OptimizerState;
use crate::net::{Activation, DenseParams, TrainHyperparams};
use crate::rng::{seed_stream, STREAM_INIT, STREAM_SHUFFLE};

/// Which slice of an engineered record the net consumes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FnnVariant {
    /// Final step only: `input_width` engineered features.
    OneYear,
    /// All steps concatenated: `n_steps × input_width` features.
    ThreeYear,
}

impl FnnVariant {
    /// Hidden widths used when none are given explicitly. One wide layer
    /// per variant: at a few hundred training records the shallow stack
    /// optimizes much more reliably than a deep one.
    pub fn default_hidden(self) -> Vec<usize> {
        match self {
            FnnVariant::OneYear => vec![8],
            FnnVariant::ThreeYear => vec![16],
        }
    }
}

impl std::fmt::Display for FnnVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FnnVariant::OneYear => "one-year",
            FnnVariant::ThreeYear => "three-year",
        })
    }
}

/// One training pair: a flattened input vector and the final-year
/// normalized peak.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FnnExample {
    pub input: Vec<f64>,
    pub target: f64,
}

/// Builds the variant's training pairs from engineered sequence records.
/// The target is always the final forecast year's (normalized) peak.
pub fn fnn_dataset(samples: &[SequenceSample], variant: FnnVariant) -> Result<Vec<FnnExample>> {
    samples
        .iter()
        .map(|s| {
            let target = *s.targets.last().ok_or_else(|| {
                Error::shape(format!("record {} has no targets", s.record_id))
            })?;
            let input = match variant {
                FnnVariant::OneYear => s
                    .steps
                    .last()
                    .ok_or_else(|| Error::shape(format!("record {} has no steps", s.record_id)))?
                    .clone(),
                FnnVariant::ThreeYear => s.steps.concat(),
            };
            Ok(FnnExample { input, target })
        })
        .collect()
}

/// A fully-connected stack ending in a single ReLU output unit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FnnModel {
    pub layers: Vec<DenseParams>,
}

impl FnnModel {
    pub fn zeros(input_width: usize, hidden_widths: &[usize]) -> Result<Self> {
        if input_width == 0 {
            return Err(Error::domain("input width must be positive"));
        }
        if hidden_widths.iter().any(|&w| w == 0) {
            return Err(Error::domain("hidden widths must be positive"));
        }
        let mut layers = Vec::with_capacity(hidden_widths.len() + 1);
        let mut in_width = input_width;
        for &w in hidden_widths {
            layers.push(DenseParams::zeros(w, in_width, Activation::Relu));
            in_width = w;
        }
        layers.push(DenseParams::zeros(1, in_width, Activation::Relu));
        Ok(FnnModel { layers })
    }

    /// Seeded initialization with the same per-matrix uniform scaling as the
    /// sequence networks.
    pub fn init(input_width: usize, hidden_widths: &[usize], seed: u64) -> Result<Self> {
        let mut model = Self::zeros(input_width, hidden_widths)?;
        let mut rng = seed_stream(seed, STREAM_INIT);
        for layer in &mut model.layers {
            let fan_in = layer.in_width() as f64;
            let fan_out = layer.out_width() as f64;
            let limit = (6.0 / (fan_in + fan_out)).sqrt();
            for w in layer.weight.iter_mut() {
                *w = rand::Rng::random_range(&mut rng, -limit..limit);
            }
        }
        Ok(model)
    }

    pub fn input_width(&self) -> usize {
        self.layers.first().map(|l| l.in_width()).unwrap_or(0)
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len().saturating_sub(1)]
            .iter()
            .map(|l| l.out_width())
            .collect()
    }

    pub fn check(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::shape("network has no layers"));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            layer.check()?;
            if i > 0 && layer.in_width() != self.layers[i - 1].out_width() {
                return Err(Error::shape(format!(
                    "layer {i} expects {} inputs but layer {} emits {}",
                    layer.in_width(),
                    i - 1,
                    self.layers[i - 1].out_width()
                )));
            }
        }
        let last = self.layers.last().expect("nonempty");
        if last.out_width() != 1 {
            return Err(Error::shape(format!(
                "output layer emits {} values, expected 1",
                last.out_width()
            )));
        }
        if let Some(layer) = self.find_non_finite() {
            return Err(Error::numeric(layer, "non-finite parameter"));
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.parameter_count()).sum()
    }

    pub fn forward(&self, input: &[f64]) -> Result<f64> {
        let mut x = ndarray::Array1::from(input.to_vec());
        for layer in &self.layers {
            x = layer.forward(x.view())?;
        }
        Ok(x[0])
    }

    /// Forward pass keeping each layer's input and pre-activation.
    fn forward_cached(&self, input: &[f64]) -> Result<Vec<LayerCache>> {
        let mut x = ndarray::Array1::from(input.to_vec());
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (pre, act) = layer.forward_cached(x.view())?;
            caches.push(LayerCache {
                input: x,
                pre,
                output: None,
            });
            x = act;
        }
        caches
            .last_mut()
            .expect("checked nonempty")
            .output = Some(x[0]);
        Ok(caches)
    }

    pub fn zeros_like(&self) -> Self {
        let mut copy = self.clone();
        for layer in &mut copy.layers {
            layer.weight.fill(0.0);
            layer.bias.fill(0.0);
        }
        copy
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for layer in &self.layers {
            out.extend(layer.weight.iter().copied());
            out.extend(layer.bias.iter().copied());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.parameter_count() {
            return Err(Error::shape(format!(
                "flat vector has {} entries, network has {} parameters",
                flat.len(),
                self.parameter_count()
            )));
        }
        let mut cursor = 0;
        for layer in &mut self.layers {
            for w in layer.weight.iter_mut().chain(layer.bias.iter_mut()) {
                *w = flat[cursor];
                cursor += 1;
            }
        }
        Ok(())
    }

    fn find_non_finite(&self) -> Option<String> {
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.weight.iter().any(|x| !x.is_finite()) {
                return Some(format!("layer {i} weights"));
            }
            if layer.bias.iter().any(|x| !x.is_finite()) {
                return Some(format!("layer {i} bias"));
            }
        }
        None
    }
}

struct LayerCache {
    input: ndarray::Array1<f64>,
    pre: ndarray::Array1<f64>,
    output: Option<f64>,
}

/// Mean absolute error and its gradients over a batch, with the same
/// `|x|` subgradient convention as the sequence loss (0 at exactly 0).
pub fn compute_fnn_gradients(
    model: &FnnModel,
    batch: &[FnnExample],
) -> Result<(FnnModel, f64)> {
    if batch.is_empty() {
        return Err(Error::domain("gradient batch is empty"));
    }
    model.check()?;
    let mut grads = model.zeros_like();
    let weight = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for example in batch {
        let caches = model.forward_cached(&example.input)?;
        let output = caches
            .last()
            .and_then(|c| c.output)
            .expect("cached forward stores the output");
        let residual = output - example.target;
        loss += weight * residual.abs();
        let dl_dout = weight * crate::net::loss::abs_subgradient(residual);
        // backward through the stack
        let mut d_act = ndarray::Array1::from(vec![dl_dout]);
        for (layer, grad_layer, cache) in itertools_rev(&model.layers, &mut grads.layers, &caches) {
            let d_pre: ndarray::Array1<f64> = ndarray::Zip::from(&d_act)
                .and(&cache.pre)
                .map_collect(|&da, &pre| da * layer.activation.derivative(pre));
            for (r, &dz) in d_pre.iter().enumerate() {
                if dz != 0.0 {
                    grad_layer.weight.row_mut(r).scaled_add(dz, &cache.input);
                }
                grad_layer.bias[r] += dz;
            }
            d_act = layer.weight.t().dot(&d_pre);
        }
    }
    if !loss.is_finite() {
        return Err(Error::numeric("outputs", "non-finite batch loss"));
    }
    if let Some(layer) = grads.find_non_finite() {
        return Err(Error::numeric(layer, "non-finite gradient"));
    }
    Ok((grads, loss))
}

/// Zips layers, gradient layers, and caches in reverse order.
fn itertools_rev<'a>(
    layers: &'a [DenseParams],
    grads: &'a mut [DenseParams],
    caches: &'a [LayerCache],
) -> impl Iterator<Item = (&'a DenseParams, &'a mut DenseParams, &'a LayerCache)> {
    layers
        .iter()
        .rev()
        .zip(grads.iter_mut().rev())
        .zip(caches.iter().rev())
        .map(|((l, g), c)| (l, g, c))
}

/// Trains with the shared hyperparameter/optimizer/seeding contract:
/// seeded shuffle each epoch, loss history per epoch, divergence reported
/// with its epoch.
pub fn train_fnn(
    model: &FnnModel,
    data: &[FnnExample],
    hyper: &TrainHyperparams,
) -> Result<(FnnModel, Vec<f64>)> {
    model.check()?;
    hyper.check(data.len())?;
    let width = model.input_width();
    for (i, ex) in data.iter().enumerate() {
        if ex.input.len() != width {
            return Err(Error::shape(format!(
                "example {i} has {} features, network expects {width}",
                ex.input.len()
            )));
        }
    }
    let mut trained = model.clone();
    let mut history = Vec::with_capacity(hyper.epochs);
    let mut optimizer = OptimizerState::new(
        hyper.optimizer,
        hyper.learning_rate,
        hyper.clip_norm,
        trained.parameter_count(),
    );
    let mut rng = seed_stream(hyper.seed, STREAM_SHUFFLE);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..hyper.epochs {
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(hyper.batch_size) {
            let batch: Vec<FnnExample> = chunk.iter().map(|&i| data[i].clone()).collect();
            let (grads, batch_loss) = compute_fnn_gradients(&trained, &batch).map_err(|e| {
                Error::Training {
                    epoch,
                    detail: e.to_string(),
                }
            })?;
            epoch_loss += batch_loss * chunk.len() as f64;
            let mut flat_params = trained.flat();
            let mut flat_grads = grads.flat();
            optimizer.apply(&mut flat_params, &mut flat_grads);
            trained.set_flat(&flat_params)?;
        }
        epoch_loss /= data.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::Training {
                epoch,
                detail: format!("epoch loss became {epoch_loss}"),
            });
        }
        history.push(epoch_loss);
    }
    Ok((trained, history))
}

/// Trains like [`train_fnn`], but redraws the model from a derived seed when
/// the loss history comes back perfectly flat — the zero-bias rectified
/// output head can start inactive on every example, where its subgradient is
/// exactly zero and no descent is possible. Deterministic in
/// `(model, data, hyper)`; the final attempt is returned even if still flat.
pub fn train_fnn_descending(
    model: &FnnModel,
    data: &[FnnExample],
    hyper: &TrainHyperparams,
    restarts: u32,
) -> Result<(FnnModel, Vec<f64>)> {
    let (mut trained, mut history) = train_fnn(model, data, hyper)?;
    for attempt in 1..=restarts {
        if !crate::net::history_is_flat(&history) {
            break;
        }
        let reseed = crate::net::train::restart_seed(hyper.seed, attempt);
        log::warn!(
            "training stalled at a dead start (loss pinned at {:.6}); redrawing weights (attempt {attempt})",
            history[0]
        );
        let redrawn = FnnModel::init(model.input_width(), &model.hidden_widths(), reseed)?;
        (trained, history) = train_fnn(&redrawn, data, hyper)?;
    }
    Ok((trained, history))
}
