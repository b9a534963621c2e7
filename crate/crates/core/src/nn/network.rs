//! Shared-trunk actor-critic: a stack of dense layers feeding a linear
//! policy head (one logit per action) and a linear value head.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::autodiff::{Tape, Var};
use super::tensor::{self, Tensor};
use crate::error::{Error, Result};

const POLICY_HEAD_GAIN: f64 = 0.01;
const VALUE_HEAD_GAIN: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    pub fn code(self) -> u32 {
        match self {
            Activation::Tanh => 0,
            Activation::Relu => 1,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Relu),
            _ => None,
        }
    }

    fn apply(self, x: &Tensor) -> Tensor {
        match self {
            Activation::Tanh => x.map(f64::tanh),
            Activation::Relu => x.map(|a| a.max(0.0)),
        }
    }

    fn hidden_gain(self) -> f64 {
        std::f64::consts::SQRT_2
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        })
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            _ => Err(Error::Input(format!("unknown activation {s:?} (expected tanh or relu)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkArchitecture {
    input_dim: usize,
    trunk: Vec<usize>,
    action_count: usize,
    activation: Activation,
}

impl NetworkArchitecture {
    pub fn new(
        input_dim: usize,
        trunk: Vec<usize>,
        action_count: usize,
        activation: Activation,
    ) -> Result<Self> {
        if input_dim == 0 || action_count == 0 || trunk.contains(&0) {
            return Err(Error::Input(format!(
                "layer widths must be >= 1 (input {input_dim}, trunk {trunk:?}, actions {action_count})"
            )));
        }
        Ok(Self {
            input_dim,
            trunk,
            action_count,
            activation,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn trunk(&self) -> &[usize] {
        &self.trunk
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// `(fan_in, fan_out)` for trunk layers, then the policy head, then the value head.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.trunk.len() + 2);
        let mut prev = self.input_dim;
        for &w in &self.trunk {
            shapes.push((prev, w));
            prev = w;
        }
        shapes.push((prev, self.action_count));
        shapes.push((prev, 1));
        shapes
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }
}

impl fmt::Display for NetworkArchitecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} -> {:?} ({}) -> {} actions + value",
            self.input_dim, self.trunk, self.activation, self.action_count
        )
    }
}

/// Flat parameters laid out layer by layer, each layer as its
/// `fan_in x fan_out` weight matrix (row-major) followed by its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    arch: NetworkArchitecture,
    values: Vec<f64>,
}

/// Batched network outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub logits: Tensor,
    pub values: Vec<f64>,
}

impl ParameterVector {
    pub fn from_values(arch: NetworkArchitecture, values: Vec<f64>) -> Result<Self> {
        if values.len() != arch.parameter_count() {
            return Err(Error::Input(format!(
                "architecture {arch} needs {} parameters, got {}",
                arch.parameter_count(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("parameters", "non-finite parameter value"));
        }
        Ok(Self { arch, values })
    }

    pub fn zeros(arch: NetworkArchitecture) -> Self {
        let n = arch.parameter_count();
        Self {
            arch,
            values: vec![0.0; n],
        }
    }

    /// Seeded orthogonal initialisation: hidden layers with gain √2, the
    /// policy head with gain 0.01, the value head with gain 1. Biases start at 0.
    pub fn init(arch: NetworkArchitecture, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shapes = arch.layer_shapes();
        let last = shapes.len() - 1;
        let mut values = Vec::with_capacity(arch.parameter_count());
        for (li, &(fan_in, fan_out)) in shapes.iter().enumerate() {
            let gain = if li == last {
                VALUE_HEAD_GAIN
            } else if li == last - 1 {
                POLICY_HEAD_GAIN
            } else {
                arch.activation.hidden_gain()
            };
            let w = orthogonal(fan_in, fan_out, &mut rng);
            values.extend(w.into_iter().map(|x| x * gain));
            values.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Self { arch, values }
    }

    pub fn architecture(&self) -> &NetworkArchitecture {
        &self.arch
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn layers(&self) -> Vec<(Tensor, Tensor)> {
        let mut offset = 0;
        self.arch
            .layer_shapes()
            .into_iter()
            .map(|(i, o)| {
                let w = Tensor::new(i, o, self.values[offset..offset + i * o].to_vec()).unwrap();
                offset += i * o;
                let b = Tensor::new(1, o, self.values[offset..offset + o].to_vec()).unwrap();
                offset += o;
                (w, b)
            })
            .collect()
    }

    fn check_input(&self, observations: &Tensor) -> Result<()> {
        if observations.cols() != self.arch.input_dim {
            return Err(Error::Input(format!(
                "observation dimension {} does not match network input {}",
                observations.cols(),
                self.arch.input_dim
            )));
        }
        Ok(())
    }

    /// Evaluates logits and state values for a batch of observations (one per row).
    pub fn forward(&self, observations: &Tensor) -> Result<ForwardOutput> {
        self.check_input(observations)?;
        let layers = self.layers();
        let n_trunk = self.arch.trunk.len();
        let mut h = observations.clone();
        for (w, b) in &layers[..n_trunk] {
            h = self.arch.activation.apply(&tensor::add_row_bias(&tensor::matmul(&h, w), b));
        }
        let (pw, pb) = &layers[n_trunk];
        let (vw, vb) = &layers[n_trunk + 1];
        let logits = tensor::add_row_bias(&tensor::matmul(&h, pw), pb);
        let values = tensor::add_row_bias(&tensor::matmul(&h, vw), vb).into_data();
        Ok(ForwardOutput { logits, values })
    }
}

/// Gaussian matrix orthonormalised by modified Gram-Schmidt, returned as a
/// row-major `rows x cols` matrix with orthonormal columns (or rows, when
/// `rows < cols`).
fn orthogonal(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (tall, short) = (rows.max(cols), rows.min(cols));
    // `basis[c]` is a column of length `tall`.
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(short);
    while basis.len() < short {
        let mut v: Vec<f64> = (0..tall).map(|_| StandardNormal.sample(rng)).collect();
        for q in &basis {
            let dot: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|a| *a /= norm);
        basis.push(v);
    }
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[r * cols + c] = if rows >= cols { basis[c][r] } else { basis[r][c] };
        }
    }
    out
}

/// Frozen parameters of the data-collecting policy. Cheap to clone and share.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySnapshot(Arc<ParameterVector>);

impl PolicySnapshot {
    pub fn new(params: &ParameterVector) -> Self {
        Self(Arc::new(params.clone()))
    }

    pub fn params(&self) -> &ParameterVector {
        &self.0
    }
}

/// Parameter tensors of one network placed on a [`Tape`].
#[derive(Debug, Clone)]
pub struct NetworkVars {
    arch: NetworkArchitecture,
    layers: Vec<(Var, Var)>,
}

impl NetworkVars {
    pub fn attach(tape: &mut Tape, params: &ParameterVector) -> Self {
        let layers = params
            .layers()
            .into_iter()
            .map(|(w, b)| (tape.leaf(w), tape.leaf(b)))
            .collect();
        Self {
            arch: params.arch.clone(),
            layers,
        }
    }

    /// All parameter leaves in declared order.
    pub fn all(&self) -> Vec<Var> {
        self.layers.iter().flat_map(|&(w, b)| [w, b]).collect()
    }

    /// Differentiable forward pass. Returns `(logits n x A, values n x 1)`.
    pub fn forward(&self, tape: &mut Tape, observations: Var) -> (Var, Var) {
        let n_trunk = self.arch.trunk.len();
        let mut h = observations;
        for &(w, b) in &self.layers[..n_trunk] {
            let z = tape.matmul(h, w);
            let z = tape.add_bias(z, b);
            h = match self.arch.activation {
                Activation::Tanh => tape.tanh(z),
                Activation::Relu => tape.relu(z),
            };
        }
        let (pw, pb) = self.layers[n_trunk];
        let (vw, vb) = self.layers[n_trunk + 1];
        let logits = tape.matmul(h, pw);
        let logits = tape.add_bias(logits, pb);
        let values = tape.matmul(h, vw);
        let values = tape.add_bias(values, vb);
        (logits, values)
    }
}

/// Exact gradient of a scalar loss built on a fresh tape from `params`.
///
/// Returns the loss value and its gradient flattened in parameter order.
/// Parameters the loss does not touch get zero gradient.
pub fn gradient<F>(params: &ParameterVector, build: F) -> Result<(f64, Vec<f64>)>
where
    F: FnOnce(&mut Tape, &NetworkVars) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars = NetworkVars::attach(&mut tape, params);
    let loss = build(&mut tape, &vars)?;
    let value = tape.value(loss).item();
    if !value.is_finite() {
        return Err(Error::numeric("loss", format!("loss evaluated to {value}")));
    }
    let grads = tape.backward(loss);
    let mut flat = Vec::with_capacity(params.len());
    for v in vars.all() {
        match grads.get(v) {
            Some(g) => flat.extend_from_slice(g.data()),
            None => flat.extend(std::iter::repeat_n(0.0, tape.value(v).data().len())),
        }
    }
    Ok((value, flat))
}
