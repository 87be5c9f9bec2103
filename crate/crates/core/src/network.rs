//! Layers, activations and the forward/backward passes of the network.
//!
//! A network is a [`NetworkSpec`] (the topology) plus [`ModelParams`] (one
//! weight matrix and bias vector per dense layer). Dense layers compute
//! `act(W·x + b)`; dropout layers zero units at random during training and
//! scale the survivors by `1/(1 - rate)` so that inference is a plain
//! composition of dense layers.

use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Rng, Vector};

/// Exponential linear unit: `x` for `x > 0`, `alpha·(eˣ − 1)` otherwise.
pub fn elu(x: f64, alpha: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        alpha * x.exp_m1()
    }
}

/// Derivative of [`elu`]. At `x == 0` the left branch is used, giving `alpha`.
pub fn elu_grad(x: f64, alpha: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        alpha * x.exp()
    }
}

/// `ln(1 + eˣ)`, evaluated without overflow and never returning zero.
pub fn softplus(x: f64) -> f64 {
    let y = if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    };
    // e^x underflows below about -745; keep the result strictly positive.
    y.max(f64::from_bits(1))
}

/// Derivative of [`softplus`], i.e. the logistic sigmoid.
pub fn softplus_grad(x: f64) -> f64 {
    sigmoid(x)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Elementwise nonlinearity applied after a dense layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Elu { alpha: f64 },
    Softplus,
    Sigmoid,
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    pub const ELU: Activation = Activation::Elu { alpha: 1.0 };

    pub fn eval(self, x: f64) -> f64 {
        match self {
            Activation::Elu { alpha } => elu(x, alpha),
            Activation::Softplus => softplus(x),
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative with respect to the pre-activation `x`.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Elu { alpha } => elu_grad(x, alpha),
            Activation::Softplus => softplus_grad(x),
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Elu { .. } => "elu",
            Activation::Softplus => "softplus",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }

    /// Looks up an activation by name; ELU gets `alpha = 1`.
    pub fn from_name(name: &str) -> Option<Activation> {
        Some(match name.to_ascii_lowercase().as_str() {
            "elu" => Activation::ELU,
            "softplus" => Activation::Softplus,
            "sigmoid" => Activation::Sigmoid,
            "tanh" => Activation::Tanh,
            "relu" => Activation::Relu,
            "identity" | "linear" => Activation::Identity,
            _ => return None,
        })
    }

    fn validate(self) -> Result<()> {
        match self {
            Activation::Elu { alpha } if !(alpha > 0.0 && alpha.is_finite()) => Err(Error::param(
                format!("ELU alpha must be positive and finite, got {alpha}"),
            )),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::Elu { alpha } => write!(f, "elu(alpha={alpha})"),
            other => f.write_str(other.name()),
        }
    }
}

/// A dense layer with its own parameters: `output = act(W·x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Vector,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Matrix, bias: Vector, activation: Activation) -> Result<Self> {
        if weights.rows() != bias.len() {
            return Err(Error::shape(
                "dense layer",
                weights.shape(),
                format!("bias[{}]", bias.len()),
            ));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    /// Returns `(pre_activation, output)`.
    pub fn forward(&self, x: &Vector) -> Result<(Vector, Vector)> {
        dense_forward(&self.weights, &self.bias, self.activation, x)
    }
}

/// Affine map followed by the activation; returns `(W·x + b, act(W·x + b))`.
pub fn dense_forward(
    weights: &Matrix,
    bias: &Vector,
    activation: Activation,
    x: &Vector,
) -> Result<(Vector, Vector)> {
    let pre = weights.matvec(x)?.add(bias)?;
    let out = pre.iter().map(|&z| activation.eval(z)).collect();
    Ok((pre, out))
}

/// Inverted dropout.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutLayer {
    rate: f64,
    /// Mask of the last training-mode pass: `0` for dropped units, `1/(1-rate)` for kept ones.
    pub last_mask: Option<Vector>,
}

impl DropoutLayer {
    pub fn new(rate: f64) -> Result<Self> {
        check_rate(rate)?;
        Ok(Self {
            rate,
            last_mask: None,
        })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn forward(&mut self, x: &Vector, rng: &mut Rng, training: bool) -> Vector {
        if !training {
            return x.clone();
        }
        let mask = sample_mask(self.rate, x.len(), rng);
        let out = apply_mask(x, &mask);
        self.last_mask = Some(mask);
        out
    }
}

/// Functional form of [`DropoutLayer::forward`].
pub fn dropout_forward(
    layer: &mut DropoutLayer,
    x: &Vector,
    rng: &mut Rng,
    training: bool,
) -> Vector {
    layer.forward(x, rng, training)
}

fn check_rate(rate: f64) -> Result<()> {
    if (0.0..1.0).contains(&rate) {
        Ok(())
    } else {
        Err(Error::param(format!(
            "dropout rate must lie in [0, 1), got {rate}"
        )))
    }
}

/// One uniform draw per unit, in index order; a unit is dropped when its draw is below `rate`.
pub fn sample_mask(rate: f64, len: usize, rng: &mut Rng) -> Vector {
    let keep = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| if rng.next_f64() < rate { 0.0 } else { keep })
        .collect()
}

fn apply_mask(x: &Vector, mask: &Vector) -> Vector {
    x.iter().zip(mask.iter()).map(|(a, m)| a * m).collect()
}

/// One entry in a [`NetworkSpec`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerSpec {
    Dense {
        width: usize,
        activation: Activation,
    },
    Dropout {
        rate: f64,
    },
}

/// Network topology: input width and the ordered layer list.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub input_width: usize,
    pub layers: Vec<LayerSpec>,
}

impl Default for NetworkSpec {
    /// Dense 8→64 ELU, dropout 0.25, dense 64→32 ELU, dropout 0.5, dense 32→1 softplus.
    fn default() -> Self {
        Self {
            input_width: 8,
            layers: vec![
                LayerSpec::Dense {
                    width: 64,
                    activation: Activation::ELU,
                },
                LayerSpec::Dropout { rate: 0.25 },
                LayerSpec::Dense {
                    width: 32,
                    activation: Activation::ELU,
                },
                LayerSpec::Dropout { rate: 0.5 },
                LayerSpec::Dense {
                    width: 1,
                    activation: Activation::Softplus,
                },
            ],
        }
    }
}

impl NetworkSpec {
    /// Checks widths, rates and activations, and that the last dense layer has one unit.
    pub fn validate(&self) -> Result<()> {
        if self.input_width == 0 {
            return Err(Error::param("input width must be at least 1"));
        }
        let mut last_dense = None;
        for (i, layer) in self.layers.iter().enumerate() {
            match *layer {
                LayerSpec::Dense { width, activation } => {
                    if width == 0 {
                        return Err(Error::param(format!(
                            "layer {i}: dense width must be at least 1"
                        )));
                    }
                    activation.validate()?;
                    last_dense = Some(width);
                }
                LayerSpec::Dropout { rate } => {
                    check_rate(rate).map_err(|e| Error::param(format!("layer {i}: {e}")))?
                }
            }
        }
        match last_dense {
            None => Err(Error::param("network needs at least one dense layer")),
            Some(1) => Ok(()),
            Some(w) => Err(Error::param(format!(
                "the last dense layer must have exactly 1 unit, got {w}"
            ))),
        }
    }

    /// `(out, in)` shape of every dense layer, in order.
    pub fn dense_shapes(&self) -> Vec<(usize, usize)> {
        let mut width = self.input_width;
        let mut shapes = Vec::new();
        for layer in &self.layers {
            if let LayerSpec::Dense { width: out, .. } = *layer {
                shapes.push((out, width));
                width = out;
            }
        }
        shapes
    }

    pub fn dropout_rates(&self) -> Vec<f64> {
        self.layers
            .iter()
            .filter_map(|l| match *l {
                LayerSpec::Dropout { rate } => Some(rate),
                _ => None,
            })
            .collect()
    }

    /// The same topology with every dropout rate set to zero.
    pub fn without_dropout(&self) -> NetworkSpec {
        let mut spec = self.clone();
        for layer in &mut spec.layers {
            if let LayerSpec::Dropout { rate } = layer {
                *rate = 0.0;
            }
        }
        spec
    }

    pub fn has_dropout(&self) -> bool {
        self.dropout_rates().iter().any(|&r| r > 0.0)
    }
}

/// Weights and bias of one dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    pub weights: Matrix,
    pub bias: Vector,
}

/// Parameters of every dense layer of a network, in layer order.
///
/// Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub layers: Vec<DenseParams>,
}

impl ModelParams {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        Self {
            layers: spec
                .dense_shapes()
                .into_iter()
                .map(|(out, inp)| DenseParams {
                    weights: Matrix::zeros(out, inp),
                    bias: Vector::zeros(out),
                })
                .collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| DenseParams {
                    weights: Matrix::zeros(l.weights.rows(), l.weights.cols()),
                    bias: Vector::zeros(l.bias.len()),
                })
                .collect(),
        }
    }

    pub fn check_matches(&self, spec: &NetworkSpec) -> Result<()> {
        let expected = spec.dense_shapes();
        let found: Vec<(usize, usize)> =
            self.shapes().into_iter().map(|(r, c, _)| (r, c)).collect();
        let biases_ok = self.layers.iter().all(|l| l.bias.len() == l.weights.rows());
        if expected != found || !biases_ok {
            return Err(Error::shape(
                "params vs spec",
                format!("params {:?}", self.shapes()),
                format!("spec {expected:?}"),
            ));
        }
        Ok(())
    }

    pub fn check_same_shape(&self, other: &ModelParams) -> Result<()> {
        if self.shapes() != other.shapes() {
            return Err(Error::shape(
                "parameter collections",
                format!("{:?}", self.shapes()),
                format!("{:?}", other.shapes()),
            ));
        }
        Ok(())
    }

    /// `(rows, cols, bias_len)` per layer.
    pub fn shapes(&self) -> Vec<(usize, usize, usize)> {
        self.layers
            .iter()
            .map(|l| (l.weights.rows(), l.weights.cols(), l.bias.len()))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every parameter as a flat block: per layer, the weights (row-major) then the bias.
    pub fn blocks(&self) -> impl Iterator<Item = &[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
    }

    pub fn blocks_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers.iter_mut().flat_map(|l| {
            let DenseParams { weights, bias } = l;
            [weights.as_mut_slice(), bias.as_mut_slice()]
        })
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.blocks().flat_map(|b| b.iter().copied())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.blocks_mut().flat_map(|b| b.iter_mut())
    }

    /// `self += scale · other`.
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, b) in self.values_mut().zip(other.values()) {
            *a += scale * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.values_mut() {
            *v *= factor;
        }
    }
}

/// How dropout layers behave during a forward pass.
#[derive(Debug)]
pub enum Pass<'a> {
    /// Dropout is the identity.
    Inference,
    /// Fresh masks are sampled from the generator.
    Training(&'a mut Rng),
    /// One precomputed mask (values `0` or `1/(1-rate)`) per dropout layer, in order.
    FrozenMasks(&'a [Vector]),
}

#[derive(Debug, Clone, PartialEq)]
enum TapeStep {
    Dense { input: Vector, pre: Vector },
    Dropout { mask: Option<Vector> },
}

/// Intermediates recorded by [`forward`] and consumed by [`backward`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Tape {
    steps: Vec<TapeStep>,
    score: f64,
}

impl Tape {
    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn score(&self) -> f64 {
        self.score
    }

    /// Dropout masks recorded during the pass; `None` where dropout was inactive.
    pub fn masks(&self) -> Vec<Option<&Vector>> {
        self.steps
            .iter()
            .filter_map(|s| match s {
                TapeStep::Dropout { mask } => Some(mask.as_ref()),
                _ => None,
            })
            .collect()
    }
}

/// Runs the network on one input and returns the scalar score with its tape.
pub fn forward(
    spec: &NetworkSpec,
    params: &ModelParams,
    x: &Vector,
    mut pass: Pass<'_>,
) -> Result<(f64, Tape)> {
    if x.len() != spec.input_width {
        return Err(Error::shape(
            "network input",
            format!("vector[{}]", x.len()),
            format!("input width {}", spec.input_width),
        ));
    }
    params.check_matches(spec)?;
    if let Pass::FrozenMasks(masks) = pass {
        let n = spec.dropout_rates().len();
        if masks.len() != n {
            return Err(Error::shape(
                "frozen masks",
                format!("{} masks", masks.len()),
                format!("{n} dropout layers"),
            ));
        }
    }

    let mut steps = Vec::with_capacity(spec.layers.len());
    let mut dense = params.layers.iter();
    let mut dropout_index = 0;
    let mut h = x.clone();
    for layer in &spec.layers {
        match *layer {
            LayerSpec::Dense { activation, .. } => {
                let p = dense.next().expect("shapes checked above");
                let (pre, out) = dense_forward(&p.weights, &p.bias, activation, &h)?;
                steps.push(TapeStep::Dense { input: h, pre });
                h = out;
            }
            LayerSpec::Dropout { rate } => {
                let mask = match &mut pass {
                    Pass::Inference => None,
                    Pass::Training(rng) => Some(sample_mask(rate, h.len(), rng)),
                    Pass::FrozenMasks(masks) => {
                        let m = &masks[dropout_index];
                        if m.len() != h.len() {
                            return Err(Error::shape(
                                "frozen mask",
                                format!("mask[{}]", m.len()),
                                format!("activations[{}]", h.len()),
                            ));
                        }
                        Some(m.clone())
                    }
                };
                if let Some(m) = &mask {
                    h = apply_mask(&h, m);
                }
                steps.push(TapeStep::Dropout { mask });
                dropout_index += 1;
            }
        }
    }
    let score = h[0];
    Ok((score, Tape { steps, score }))
}

/// Inference-mode score for one input.
pub fn infer(spec: &NetworkSpec, params: &ModelParams, x: &Vector) -> Result<f64> {
    forward(spec, params, x, Pass::Inference).map(|(s, _)| s)
}

/// Gradients of the loss with respect to every parameter, given `∂loss/∂score`.
pub fn backward(
    spec: &NetworkSpec,
    params: &ModelParams,
    tape: &Tape,
    dloss_dscore: f64,
) -> Result<ModelParams> {
    let mut grads = params.zeros_like();
    accumulate_backward(spec, params, tape, dloss_dscore, &mut grads)?;
    Ok(grads)
}

/// Like [`backward`], but adds the gradients into `grads`.
pub fn accumulate_backward(
    spec: &NetworkSpec,
    params: &ModelParams,
    tape: &Tape,
    dloss_dscore: f64,
    grads: &mut ModelParams,
) -> Result<()> {
    if tape.steps.len() != spec.layers.len() {
        return Err(Error::State(format!(
            "tape holds {} steps but the network has {} layers; run forward first",
            tape.steps.len(),
            spec.layers.len()
        )));
    }
    params.check_same_shape(grads)?;

    let mut delta = Vector::new(vec![dloss_dscore]);
    let mut dense_index = params.layers.len();
    for (layer, step) in spec.layers.iter().zip(&tape.steps).rev() {
        match (layer, step) {
            (LayerSpec::Dropout { .. }, TapeStep::Dropout { mask }) => {
                if let Some(m) = mask {
                    delta = apply_mask(&delta, m);
                }
            }
            (LayerSpec::Dense { activation, .. }, TapeStep::Dense { input, pre }) => {
                dense_index -= 1;
                let p = &params.layers[dense_index];
                let g = &mut grads.layers[dense_index];
                let dpre: Vector = delta
                    .iter()
                    .zip(pre.iter())
                    .map(|(d, &z)| d * activation.derivative(z))
                    .collect();
                let cols = input.len();
                let gw = g.weights.as_mut_slice();
                for (i, &di) in dpre.iter().enumerate() {
                    g.bias[i] += di;
                    if di != 0.0 {
                        for (w, &xj) in gw[i * cols..(i + 1) * cols].iter_mut().zip(input.iter()) {
                            *w += di * xj;
                        }
                    }
                }
                if dense_index > 0 {
                    delta = p.weights.transpose_matvec(&dpre)?;
                }
            }
            _ => {
                return Err(Error::State(
                    "tape does not match the network layout".to_string(),
                ))
            }
        }
    }
    Ok(())
}
