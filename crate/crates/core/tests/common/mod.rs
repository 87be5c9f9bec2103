//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use dropout_mlp::linalg::{Rng, Vector};
use dropout_mlp::network::{
    self, dense_forward, elu, forward, softplus, Activation, LayerSpec, ModelParams, NetworkSpec,
    Pass,
};
use dropout_mlp::optim::{mse_grad, mse_loss};

pub const H: f64 = 1e-5;
pub const TOL: f64 = 1e-5;

pub const ACTIVATIONS: [Activation; 6] = [
    Activation::Elu { alpha: 1.0 },
    Activation::Softplus,
    Activation::Sigmoid,
    Activation::Tanh,
    Activation::Relu,
    Activation::Identity,
];

pub fn random_network(
    index: usize,
    rng: &mut Rng,
    dropout_rate: f64,
) -> (NetworkSpec, ModelParams) {
    let input_width = 1 + rng.below(8);
    let depth = 1 + rng.below(3);
    let mut layers = Vec::new();
    for d in 0..depth {
        let width = if d + 1 == depth { 1 } else { 1 + rng.below(8) };
        let activation = ACTIVATIONS[(index * 3 + d) % ACTIVATIONS.len()];
        layers.push(LayerSpec::Dense { width, activation });
        if d + 1 < depth {
            layers.push(LayerSpec::Dropout { rate: dropout_rate });
        }
    }
    let spec = NetworkSpec {
        input_width,
        layers,
    };
    spec.validate().unwrap();
    let mut params = ModelParams::zeros(&spec);
    for v in params.values_mut() {
        *v = rng.uniform(-1.0, 1.0).unwrap();
    }
    (spec, params)
}

/// Smallest |pre-activation| feeding a ReLU, so inputs near the kink can be resampled.
pub fn relu_margin(spec: &NetworkSpec, params: &ModelParams, x: &Vector, masks: &[Vector]) -> f64 {
    let mut h = x.clone();
    let mut dense = params.layers.iter();
    let mut masks = masks.iter();
    let mut margin = f64::INFINITY;
    for layer in &spec.layers {
        match *layer {
            LayerSpec::Dense { activation, .. } => {
                let p = dense.next().unwrap();
                let (pre, out) = dense_forward(&p.weights, &p.bias, activation, &h).unwrap();
                if activation == Activation::Relu {
                    margin = pre.iter().fold(margin, |m, v| m.min(v.abs()));
                }
                h = out;
            }
            LayerSpec::Dropout { .. } => {
                if let Some(m) = masks.next() {
                    h = h.iter().zip(m.iter()).map(|(a, b)| a * b).collect();
                }
            }
        }
    }
    margin
}

pub fn loss(
    spec: &NetworkSpec,
    params: &ModelParams,
    x: &Vector,
    y: f64,
    masks: Option<&[Vector]>,
) -> f64 {
    let pass = match masks {
        Some(m) => Pass::FrozenMasks(m),
        None => Pass::Inference,
    };
    let (score, _) = forward(spec, params, x, pass).unwrap();
    mse_loss(&[score], &[y]).unwrap()
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

/// Worst relative error over every parameter of one network.
pub fn check(
    spec: &NetworkSpec,
    params: &ModelParams,
    x: &Vector,
    y: f64,
    masks: Option<&[Vector]>,
) -> f64 {
    let pass = match masks {
        Some(m) => Pass::FrozenMasks(m),
        None => Pass::Inference,
    };
    let (score, tape) = forward(spec, params, x, pass).unwrap();
    let grads = network::backward(spec, params, &tape, mse_grad(score, y, 1).unwrap()).unwrap();
    let analytic: Vec<f64> = grads.values().collect();

    let mut worst: f64 = 0.0;
    for (k, &g) in analytic.iter().enumerate() {
        let mut plus = params.clone();
        let mut minus = params.clone();
        *plus.values_mut().nth(k).unwrap() += H;
        *minus.values_mut().nth(k).unwrap() -= H;
        let numeric =
            (loss(spec, &plus, x, y, masks) - loss(spec, &minus, x, y, masks)) / (2.0 * H);
        worst = worst.max(relative_error(g, numeric));
    }
    worst
}

pub fn sample_input(
    spec: &NetworkSpec,
    params: &ModelParams,
    masks: &[Vector],
    rng: &mut Rng,
) -> Vector {
    loop {
        let x: Vector = (0..spec.input_width)
            .map(|_| rng.uniform(-2.0, 2.0).unwrap())
            .collect();
        if relu_margin(spec, params, &x, masks) > 1e-3 {
            return x;
        }
    }
}

pub fn pid_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/pima-indians-diabetes.csv")
}

/// Width of each dropout layer, in order.
pub fn mask_widths(spec: &NetworkSpec) -> Vec<usize> {
    spec.layers
        .windows(2)
        .filter_map(|w| match (w[0], w[1]) {
            (LayerSpec::Dense { width, .. }, LayerSpec::Dropout { .. }) => Some(width),
            _ => None,
        })
        .collect()
}

/// Φ(b2 + W2 φ(b1 + W1 x)) written out with plain loops.
pub fn composed(w1: &[Vec<f64>], b1: &[f64], w2: &[f64], b2: f64, x: &[f64]) -> f64 {
    let hidden: Vec<f64> = w1
        .iter()
        .zip(b1)
        .map(|(row, b)| {
            let mut z = *b;
            for (w, xi) in row.iter().zip(x) {
                z += w * xi;
            }
            elu(z, 1.0)
        })
        .collect();
    let mut z = b2;
    for (w, h) in w2.iter().zip(&hidden) {
        z += w * h;
    }
    softplus(z)
}
