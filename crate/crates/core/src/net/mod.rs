//! From-scratch LSTM and GRU sequence models.
//!
//! A network is a single recurrent layer (LSTM or GRU cell, written out
//! gate-by-gate in [`cell`]) followed by a dense hidden layer and a scalar
//! output layer. Two output arrangements are supported: `many-to-one` reads
//! the dense head only at the final step, `many-to-many` reads it at every
//! step. Losses live in [`loss`], exact backpropagation-through-time
//! gradients in [`grad`], and the deterministic mini-batch trainer in
//! [`train`].

pub mod cell;
pub mod grad;
pub mod loss;
pub mod train;

pub use cell::{gru_step, lstm_step};
pub use grad::{compute_gradients, TrainingExample};
pub use loss::sequence_loss;
pub use train::{history_is_flat, train, train_descending, OptimizerKind, TrainHyperparams};

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::document::{serde_matrix, serde_vector};
use crate::error::{Error, Result};
use crate::rng::{seed_stream, STREAM_INIT};

/// Which recurrent cell a network uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CellKind {
    Lstm,
    Gru,
}

impl std::fmt::Display for CellKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CellKind::Lstm => "lstm",
            CellKind::Gru => "gru",
        })
    }
}

/// Output arrangement of a sequence network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// One output, produced at the final step.
    ManyToOne,
    /// One output per step.
    ManyToMany,
}

impl Mode {
    /// Number of outputs (and targets) per sequence of `n_steps` inputs.
    pub fn output_count(self, n_steps: usize) -> usize {
        match self {
            Mode::ManyToOne => 1,
            Mode::ManyToMany => n_steps,
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::ManyToOne => "many-to-one",
            Mode::ManyToMany => "many-to-many",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Identity => z,
        }
    }

    /// Derivative at pre-activation `z`. The ReLU kink at exactly 0 takes
    /// subgradient 0, matching the absolute-error convention in [`loss`].
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// One fully connected layer: `act(W x + b)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DenseParams {
    #[serde(with = "serde_matrix")]
    pub weight: Array2<f64>,
    #[serde(with = "serde_vector")]
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl DenseParams {
    pub fn zeros(out_width: usize, in_width: usize, activation: Activation) -> Self {
        DenseParams {
            weight: Array2::zeros((out_width, in_width)),
            bias: Array1::zeros(out_width),
            activation,
        }
    }

    pub fn out_width(&self) -> usize {
        self.weight.nrows()
    }

    pub fn in_width(&self) -> usize {
        self.weight.ncols()
    }

    pub fn check(&self) -> Result<()> {
        if self.bias.len() != self.weight.nrows() {
            return Err(Error::shape(format!(
                "dense layer weight has {} rows but bias has {} entries",
                self.weight.nrows(),
                self.bias.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        Ok(self.forward_cached(x)?.1)
    }

    /// Forward pass that also returns the pre-activations (needed by backprop).
    pub(crate) fn forward_cached(&self, x: ArrayView1<'_, f64>) -> Result<(Array1<f64>, Array1<f64>)> {
        if x.len() != self.in_width() {
            return Err(Error::shape(format!(
                "dense layer expects {} inputs, got {}",
                self.in_width(),
                x.len()
            )));
        }
        let pre = self.weight.dot(&x) + &self.bias;
        let act = pre.mapv(|z| self.activation.apply(z));
        Ok((pre, act))
    }

    pub fn parameter_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// LSTM cell parameters: forget/input/output gates and the candidate
/// ("new memory") path, each acting on the concatenation `[H_{t-1}, X_t]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LstmCellParams {
    #[serde(with = "serde_matrix")]
    pub w_forget: Array2<f64>,
    #[serde(with = "serde_matrix")]
    pub w_input: Array2<f64>,
    #[serde(with = "serde_matrix")]
    pub w_cand: Array2<f64>,
    #[serde(with = "serde_matrix")]
    pub w_output: Array2<f64>,
    #[serde(with = "serde_vector")]
    pub b_forget: Array1<f64>,
    #[serde(with = "serde_vector")]
    pub b_input: Array1<f64>,
    #[serde(with = "serde_vector")]
    pub b_cand: Array1<f64>,
    #[serde(with = "serde_vector")]
    pub b_output: Array1<f64>,
}

impl LstmCellParams {
    pub fn zeros(hidden_width: usize, input_width: usize) -> Self {
        let w = || Array2::zeros((hidden_width, hidden_width + input_width));
        let b = || Array1::zeros(hidden_width);
        LstmCellParams {
            w_forget: w(),
            w_input: w(),
            w_cand: w(),
            w_output: w(),
            b_forget: b(),
            b_input: b(),
            b_cand: b(),
            b_output: b(),
        }
    }

    pub fn hidden_width(&self) -> usize {
        self.w_forget.nrows()
    }

    pub fn input_width(&self) -> usize {
        self.w_forget.ncols() - self.w_forget.nrows()
    }

    pub fn check(&self) -> Result<()> {
        let shape = self.w_forget.dim();
        for (name, w) in [("w_input", &self.w_input), ("w_cand", &self.w_cand), ("w_output", &self.w_output)] {
            if w.dim() != shape {
                return Err(Error::shape(format!(
                    "lstm {} has shape {:?}, expected {:?}",
                    name,
                    w.dim(),
                    shape
                )));
            }
        }
        for (name, b) in [
            ("b_forget", &self.b_forget),
            ("b_input", &self.b_input),
            ("b_cand", &self.b_cand),
            ("b_output", &self.b_output),
        ] {
            if b.len() != shape.0 {
                return Err(Error::shape(format!(
                    "lstm {} has {} entries, expected {}",
                    name,
                    b.len(),
                    shape.0
                )));
            }
        }
        if shape.1 <= shape.0 {
            return Err(Error::shape(format!(
                "lstm weight shape {:?} leaves no room for inputs",
                shape
            )));
        }
        Ok(())
    }
}

/// GRU cell parameters: reset/update gates and the candidate path.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GruCellParams {
    #[serde(with = "serde_matrix")]
    pub w_reset: Array2<f64>,
    #[serde(with = "serde_matrix")]
    pub w_update: Array2<f64>,
    #[serde(with = "serde_matrix")]
    pub w_cand: Array2<f64>,
    #[serde(with = "serde_vector")]
    pub b_reset: Array1<f64>,
    #[serde(with = "serde_vector")]
    pub b_update: Array1<f64>,
    #[serde(with = "serde_vector")]
    pub b_cand: Array1<f64>,
}

impl GruCellParams {
    pub fn zeros(hidden_width: usize, input_width: usize) -> Self {
        let w = || Array2::zeros((hidden_width, hidden_width + input_width));
        let b = || Array1::zeros(hidden_width);
        GruCellParams {
            w_reset: w(),
            w_update: w(),
            w_cand: w(),
            b_reset: b(),
            b_update: b(),
            b_cand: b(),
        }
    }

    pub fn hidden_width(&self) -> usize {
        self.w_reset.nrows()
    }

    pub fn input_width(&self) -> usize {
        self.w_reset.ncols() - self.w_reset.nrows()
    }

    pub fn check(&self) -> Result<()> {
        let shape = self.w_reset.dim();
        for (name, w) in [("w_update", &self.w_update), ("w_cand", &self.w_cand)] {
            if w.dim() != shape {
                return Err(Error::shape(format!(
                    "gru {} has shape {:?}, expected {:?}",
                    name,
                    w.dim(),
                    shape
                )));
            }
        }
        for (name, b) in [("b_reset", &self.b_reset), ("b_update", &self.b_update), ("b_cand", &self.b_cand)] {
            if b.len() != shape.0 {
                return Err(Error::shape(format!(
                    "gru {} has {} entries, expected {}",
                    name,
                    b.len(),
                    shape.0
                )));
            }
        }
        if shape.1 <= shape.0 {
            return Err(Error::shape(format!(
                "gru weight shape {:?} leaves no room for inputs",
                shape
            )));
        }
        Ok(())
    }
}

/// The recurrent layer of a network. The enum variant *is* the cell kind, so
/// parameters can never disagree with the declared architecture.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "cell", rename_all = "kebab-case")]
pub enum RecurrentParams {
    Lstm(LstmCellParams),
    Gru(GruCellParams),
}

impl RecurrentParams {
    pub fn cell_kind(&self) -> CellKind {
        match self {
            RecurrentParams::Lstm(_) => CellKind::Lstm,
            RecurrentParams::Gru(_) => CellKind::Gru,
        }
    }

    pub fn hidden_width(&self) -> usize {
        match self {
            RecurrentParams::Lstm(p) => p.hidden_width(),
            RecurrentParams::Gru(p) => p.hidden_width(),
        }
    }

    pub fn input_width(&self) -> usize {
        match self {
            RecurrentParams::Lstm(p) => p.input_width(),
            RecurrentParams::Gru(p) => p.input_width(),
        }
    }

    pub fn check(&self) -> Result<()> {
        match self {
            RecurrentParams::Lstm(p) => p.check(),
            RecurrentParams::Gru(p) => p.check(),
        }
    }
}

/// Recurrent state after a step: hidden vector `H_t`, plus the memory vector
/// `C_t` for LSTM cells (GRU carries hidden state only).
#[derive(Clone, Debug, PartialEq)]
pub struct CellState {
    pub hidden: Array1<f64>,
    pub memory: Option<Array1<f64>>,
}

impl CellState {
    /// The all-zero initial state every sequence starts from.
    pub fn zeros(cell: CellKind, hidden_width: usize) -> Self {
        CellState {
            hidden: Array1::zeros(hidden_width),
            memory: match cell {
                CellKind::Lstm => Some(Array1::zeros(hidden_width)),
                CellKind::Gru => None,
            },
        }
    }
}

/// All weights and biases of one sequence network, with its architecture
/// metadata.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NetworkParams {
    pub mode: Mode,
    pub n_steps: usize,
    pub input_width: usize,
    pub recurrent: RecurrentParams,
    pub dense_hidden: DenseParams,
    pub dense_out: DenseParams,
}

/// Borrowed view of one named parameter block.
pub(crate) enum BlockRef<'a> {
    Mat(&'a Array2<f64>),
    Vec(&'a Array1<f64>),
}

pub(crate) enum BlockMut<'a> {
    Mat(&'a mut Array2<f64>),
    Vec(&'a mut Array1<f64>),
}

impl NetworkParams {
    /// A network with all weights and biases zero — useful as a gradient
    /// accumulator and in tests.
    pub fn zeros(cell: CellKind, mode: Mode, n_steps: usize, input_width: usize, hidden_width: usize) -> Result<Self> {
        if n_steps == 0 || input_width == 0 || hidden_width == 0 {
            return Err(Error::domain(
                "n_steps, input_width and hidden_width must all be positive",
            ));
        }
        let recurrent = match cell {
            CellKind::Lstm => RecurrentParams::Lstm(LstmCellParams::zeros(hidden_width, input_width)),
            CellKind::Gru => RecurrentParams::Gru(GruCellParams::zeros(hidden_width, input_width)),
        };
        Ok(NetworkParams {
            mode,
            n_steps,
            input_width,
            recurrent,
            dense_hidden: DenseParams::zeros(hidden_width, hidden_width, Activation::Relu),
            dense_out: DenseParams::zeros(1, hidden_width, Activation::Relu),
        })
    }

    /// Seeded initialization: every weight matrix is drawn uniformly from
    /// `±sqrt(6 / (fan_in + fan_out))`, biases start at zero. The same seed
    /// always produces the same network.
    pub fn init(
        cell: CellKind,
        mode: Mode,
        n_steps: usize,
        input_width: usize,
        hidden_width: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut net = Self::zeros(cell, mode, n_steps, input_width, hidden_width)?;
        let mut rng = seed_stream(seed, STREAM_INIT);
        for (_, block) in net.blocks_mut() {
            if let BlockMut::Mat(m) = block {
                let fan_in = m.ncols() as f64;
                let fan_out = m.nrows() as f64;
                let limit = (6.0 / (fan_in + fan_out)).sqrt();
                for w in m.iter_mut() {
                    *w = rng.random_range(-limit..limit);
                }
            }
        }
        Ok(net)
    }

    pub fn cell_kind(&self) -> CellKind {
        self.recurrent.cell_kind()
    }

    pub fn hidden_width(&self) -> usize {
        self.recurrent.hidden_width()
    }

    /// Validates every structural invariant and that all entries are finite.
    pub fn check(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::domain("n_steps must be positive"));
        }
        self.recurrent.check()?;
        self.dense_hidden.check()?;
        self.dense_out.check()?;
        if self.recurrent.input_width() != self.input_width {
            return Err(Error::shape(format!(
                "recurrent layer expects {} inputs but the network declares {}",
                self.recurrent.input_width(),
                self.input_width
            )));
        }
        if self.dense_hidden.in_width() != self.hidden_width() {
            return Err(Error::shape(format!(
                "dense hidden layer expects {} inputs but the recurrent layer emits {}",
                self.dense_hidden.in_width(),
                self.hidden_width()
            )));
        }
        if self.dense_out.in_width() != self.dense_hidden.out_width() {
            return Err(Error::shape(format!(
                "output layer expects {} inputs but the hidden layer emits {}",
                self.dense_out.in_width(),
                self.dense_hidden.out_width()
            )));
        }
        if self.dense_out.out_width() != 1 {
            return Err(Error::shape(format!(
                "output layer must emit exactly 1 value, emits {}",
                self.dense_out.out_width()
            )));
        }
        for (name, block) in self.blocks() {
            let bad = match block {
                BlockRef::Mat(m) => m.iter().any(|x| !x.is_finite()),
                BlockRef::Vec(v) => v.iter().any(|x| !x.is_finite()),
            };
            if bad {
                return Err(Error::numeric(name, "parameter entry is not finite"));
            }
        }
        Ok(())
    }

    /// Runs the network over one sequence starting from the all-zero state.
    /// Returns 1 output (`many-to-one`, final step) or `n_steps` outputs
    /// (`many-to-many`, one per step).
    pub fn forward_sequence(&self, steps: &[Vec<f64>]) -> Result<Vec<f64>> {
        if steps.len() != self.n_steps {
            return Err(Error::shape(format!(
                "expected {} steps, got {}",
                self.n_steps,
                steps.len()
            )));
        }
        let hidden = self.hidden_width();
        let mut state = CellState::zeros(self.cell_kind(), hidden);
        let mut outputs = Vec::with_capacity(self.mode.output_count(self.n_steps));
        for (t, step) in steps.iter().enumerate() {
            if step.len() != self.input_width {
                return Err(Error::shape(format!(
                    "step {} has {} features, expected {}",
                    t,
                    step.len(),
                    self.input_width
                )));
            }
            let x = ArrayView1::from(step.as_slice());
            state = match &self.recurrent {
                RecurrentParams::Lstm(p) => cell::lstm_step(p, x, &state)?,
                RecurrentParams::Gru(p) => CellState {
                    hidden: cell::gru_step(p, x, state.hidden.view())?,
                    memory: None,
                },
            };
            let emit = match self.mode {
                Mode::ManyToMany => true,
                Mode::ManyToOne => t + 1 == self.n_steps,
            };
            if emit {
                let g = self.dense_hidden.forward(state.hidden.view())?;
                let y = self.dense_out.forward(g.view())?;
                outputs.push(y[0]);
            }
        }
        Ok(outputs)
    }

    /// A same-shaped network with every parameter zeroed (gradient container).
    pub fn zeros_like(&self) -> Self {
        let mut copy = self.clone();
        for (_, block) in copy.blocks_mut() {
            match block {
                BlockMut::Mat(m) => m.fill(0.0),
                BlockMut::Vec(v) => v.fill(0.0),
            }
        }
        copy
    }

    pub fn parameter_count(&self) -> usize {
        self.blocks()
            .iter()
            .map(|(_, b)| match b {
                BlockRef::Mat(m) => m.len(),
                BlockRef::Vec(v) => v.len(),
            })
            .sum()
    }

    /// All parameters flattened into one vector, in the fixed block order
    /// used by `set_flat` and the optimizer. Matrices are row-major.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for (_, block) in self.blocks() {
            match block {
                BlockRef::Mat(m) => out.extend(m.iter().copied()),
                BlockRef::Vec(v) => out.extend(v.iter().copied()),
            }
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
        for (_, block) in self.blocks_mut() {
            match block {
                BlockMut::Mat(m) => {
                    for w in m.iter_mut() {
                        *w = flat[cursor];
                        cursor += 1;
                    }
                }
                BlockMut::Vec(v) => {
                    for w in v.iter_mut() {
                        *w = flat[cursor];
                        cursor += 1;
                    }
                }
            }
        }
        Ok(())
    }

    /// Returns the first parameter block containing a non-finite entry, if any.
    pub(crate) fn find_non_finite(&self) -> Option<&'static str> {
        for (name, block) in self.blocks() {
            let bad = match block {
                BlockRef::Mat(m) => m.iter().any(|x| !x.is_finite()),
                BlockRef::Vec(v) => v.iter().any(|x| !x.is_finite()),
            };
            if bad {
                return Some(name);
            }
        }
        None
    }

    pub(crate) fn blocks(&self) -> Vec<(&'static str, BlockRef<'_>)> {
        let mut v: Vec<(&'static str, BlockRef<'_>)> = Vec::with_capacity(12);
        match &self.recurrent {
            RecurrentParams::Lstm(p) => {
                v.push(("w_forget", BlockRef::Mat(&p.w_forget)));
                v.push(("w_input", BlockRef::Mat(&p.w_input)));
                v.push(("w_cand", BlockRef::Mat(&p.w_cand)));
                v.push(("w_output", BlockRef::Mat(&p.w_output)));
                v.push(("b_forget", BlockRef::Vec(&p.b_forget)));
                v.push(("b_input", BlockRef::Vec(&p.b_input)));
                v.push(("b_cand", BlockRef::Vec(&p.b_cand)));
                v.push(("b_output", BlockRef::Vec(&p.b_output)));
            }
            RecurrentParams::Gru(p) => {
                v.push(("w_reset", BlockRef::Mat(&p.w_reset)));
                v.push(("w_update", BlockRef::Mat(&p.w_update)));
                v.push(("w_cand", BlockRef::Mat(&p.w_cand)));
                v.push(("b_reset", BlockRef::Vec(&p.b_reset)));
                v.push(("b_update", BlockRef::Vec(&p.b_update)));
                v.push(("b_cand", BlockRef::Vec(&p.b_cand)));
            }
        }
        v.push(("dense_hidden.weight", BlockRef::Mat(&self.dense_hidden.weight)));
        v.push(("dense_hidden.bias", BlockRef::Vec(&self.dense_hidden.bias)));
        v.push(("dense_out.weight", BlockRef::Mat(&self.dense_out.weight)));
        v.push(("dense_out.bias", BlockRef::Vec(&self.dense_out.bias)));
        v
    }

    pub(crate) fn blocks_mut(&mut self) -> Vec<(&'static str, BlockMut<'_>)> {
        let mut v: Vec<(&'static str, BlockMut<'_>)> = Vec::with_capacity(12);
        match &mut self.recurrent {
            RecurrentParams::Lstm(p) => {
                v.push(("w_forget", BlockMut::Mat(&mut p.w_forget)));
                v.push(("w_input", BlockMut::Mat(&mut p.w_input)));
                v.push(("w_cand", BlockMut::Mat(&mut p.w_cand)));
                v.push(("w_output", BlockMut::Mat(&mut p.w_output)));
                v.push(("b_forget", BlockMut::Vec(&mut p.b_forget)));
                v.push(("b_input", BlockMut::Vec(&mut p.b_input)));
                v.push(("b_cand", BlockMut::Vec(&mut p.b_cand)));
                v.push(("b_output", BlockMut::Vec(&mut p.b_output)));
            }
            RecurrentParams::Gru(p) => {
                v.push(("w_reset", BlockMut::Mat(&mut p.w_reset)));
                v.push(("w_update", BlockMut::Mat(&mut p.w_update)));
                v.push(("w_cand", BlockMut::Mat(&mut p.w_cand)));
                v.push(("b_reset", BlockMut::Vec(&mut p.b_reset)));
                v.push(("b_update", BlockMut::Vec(&mut p.b_update)));
                v.push(("b_cand", BlockMut::Vec(&mut p.b_cand)));
            }
        }
        v.push(("dense_hidden.weight", BlockMut::Mat(&mut self.dense_hidden.weight)));
        v.push(("dense_hidden.bias", BlockMut::Vec(&mut self.dense_hidden.bias)));
        v.push(("dense_out.weight", BlockMut::Mat(&mut self.dense_out.weight)));
        v.push(("dense_out.bias", BlockMut::Vec(&mut self.dense_out.bias)));
        v
    }
}
