//! MSE loss and the two parameter-update rules: Adadelta and plain SGD.

use crate::error::{Error, Result};
use crate::network::ModelParams;

/// Mean squared error `(1/N)·Σ(predᵢ − targetᵢ)²`.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.is_empty() || pred.len() != target.len() {
        return Err(Error::param(format!(
            "mse needs two equally long nonempty sequences, got {} and {}",
            pred.len(),
            target.len()
        )));
    }
    let sum: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Derivative of the `n`-sample mean squared error with respect to one prediction.
pub fn mse_grad(pred: f64, target: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::param("mse gradient needs n >= 1"));
    }
    Ok(2.0 * (pred - target) / n as f64)
}

/// Adadelta accumulators and constants.
///
/// Per parameter `x` with gradient `g`:
///
/// ```text
/// E[g²]  ← ρ·E[g²] + (1−ρ)·g²
/// Δx     = −(√(E[Δx²] + ε) / √(E[g²] + ε))·g
/// E[Δx²] ← ρ·E[Δx²] + (1−ρ)·Δx²
/// x      ← x + Δx
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct AdadeltaState {
    pub rho: f64,
    pub epsilon: f64,
    pub avg_sq_grad: ModelParams,
    pub avg_sq_update: ModelParams,
}

impl AdadeltaState {
    pub const DEFAULT_RHO: f64 = 0.95;
    pub const DEFAULT_EPSILON: f64 = 1e-6;

    /// Fresh (all-zero) accumulators shaped like `params`.
    pub fn new(params: &ModelParams, rho: f64, epsilon: f64) -> Result<Self> {
        validate_adadelta(rho, epsilon)?;
        Ok(Self {
            rho,
            epsilon,
            avg_sq_grad: params.zeros_like(),
            avg_sq_update: params.zeros_like(),
        })
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams) -> Result<()> {
        params.check_same_shape(grads)?;
        params.check_same_shape(&self.avg_sq_grad)?;
        let (rho, eps) = (self.rho, self.epsilon);
        let blocks = params
            .blocks_mut()
            .zip(grads.blocks())
            .zip(self.avg_sq_grad.blocks_mut())
            .zip(self.avg_sq_update.blocks_mut());
        for (((x, g), eg), ed) in blocks {
            for i in 0..x.len() {
                let gi = g[i];
                eg[i] = rho * eg[i] + (1.0 - rho) * gi * gi;
                let dx = -((ed[i] + eps).sqrt() / (eg[i] + eps).sqrt()) * gi;
                ed[i] = rho * ed[i] + (1.0 - rho) * dx * dx;
                x[i] += dx;
            }
        }
        Ok(())
    }
}

pub(crate) fn validate_adadelta(rho: f64, epsilon: f64) -> Result<()> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::param(format!(
            "adadelta rho must lie in (0, 1), got {rho}"
        )));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::param(format!(
            "adadelta epsilon must be positive, got {epsilon}"
        )));
    }
    Ok(())
}

/// Plain gradient descent: `x ← x − lr·g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdState {
    pub learning_rate: f64,
}

impl SgdState {
    pub const DEFAULT_LEARNING_RATE: f64 = 0.01;

    pub fn new(learning_rate: f64) -> Result<Self> {
        validate_sgd(learning_rate)?;
        Ok(Self { learning_rate })
    }

    pub fn step(&self, params: &mut ModelParams, grads: &ModelParams) -> Result<()> {
        params.add_scaled(grads, -self.learning_rate)
    }
}

pub(crate) fn validate_sgd(learning_rate: f64) -> Result<()> {
    if learning_rate > 0.0 && learning_rate.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!(
            "learning rate must be positive, got {learning_rate}"
        )))
    }
}

/// Either optimizer, behind one `step`.
#[derive(Debug, Clone, PartialEq)]
pub enum Optimizer {
    Adadelta(AdadeltaState),
    Sgd(SgdState),
}

impl Optimizer {
    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams) -> Result<()> {
        match self {
            Optimizer::Adadelta(s) => s.step(params, grads),
            Optimizer::Sgd(s) => s.step(params, grads),
        }
    }
}
