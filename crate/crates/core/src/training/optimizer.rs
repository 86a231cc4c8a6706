//! ADADELTA with Nesterov momentum applied on top of the ADADELTA step.
//!
//! ```text
//! E[g²]  ← ρ E[g²] + (1 − ρ) g²
//! Δ      = −√(E[Δx²] + ε) / √(E[g²] + ε) · g
//! E[Δx²] ← ρ E[Δx²] + (1 − ρ) Δ²
//! v      ← μ v + Δ
//! x      ← x + μ v + Δ
//! ```

use crate::cells::Matrix;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub rho: f64,
    pub eps: f64,
    pub momentum: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            rho: 0.95,
            eps: 1e-6,
            momentum: 0.9,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Config(format!("rho must be in (0, 1), got {}", self.rho)));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!("eps must be positive, got {}", self.eps)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        Ok(())
    }
}

/// Per-parameter accumulators, one entry per parameter block.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub mean_sq_grad: Vec<Vec<f64>>,
    pub mean_sq_delta: Vec<Vec<f64>>,
    pub velocity: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new<'a>(blocks: impl IntoIterator<Item = &'a Matrix>) -> Self {
        let zeros: Vec<Vec<f64>> = blocks.into_iter().map(|m| vec![0.0; m.len()]).collect();
        Self {
            mean_sq_grad: zeros.clone(),
            mean_sq_delta: zeros.clone(),
            velocity: zeros,
        }
    }

    /// Updates one block in place.
    pub fn update_block(&mut self, block: usize, param: &mut [f64], grad: &[f64], cfg: &OptimizerConfig) {
        let (rho, eps, mu) = (cfg.rho, cfg.eps, cfg.momentum);
        let eg2 = &mut self.mean_sq_grad[block];
        let edx2 = &mut self.mean_sq_delta[block];
        let vel = &mut self.velocity[block];
        for k in 0..param.len() {
            let g = grad[k];
            eg2[k] = rho * eg2[k] + (1.0 - rho) * g * g;
            let delta = -((edx2[k] + eps).sqrt() / (eg2[k] + eps).sqrt()) * g;
            edx2[k] = rho * edx2[k] + (1.0 - rho) * delta * delta;
            vel[k] = mu * vel[k] + delta;
            param[k] += mu * vel[k] + delta;
        }
    }
}

/// Applies one update to every block. Gradients are checked for finiteness
/// before anything is modified.
pub fn adadelta_nesterov_update(
    params: Vec<&mut Matrix>,
    grads: Vec<&Matrix>,
    names: &[String],
    state: &mut OptimizerState,
    cfg: &OptimizerConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.velocity.len() {
        return Err(Error::Argument(format!(
            "{} parameter blocks, {} gradient blocks, {} optimizer blocks",
            params.len(),
            grads.len(),
            state.velocity.len()
        )));
    }
    for (b, (p, g)) in params.iter().zip(&grads).enumerate() {
        if p.len() != g.len() || p.len() != state.velocity[b].len() {
            return Err(Error::dim("optimizer block", p.len(), g.len()));
        }
        if let Some(bad) = g.data().iter().find(|v| !v.is_finite()) {
            let name = names.get(b).map(String::as_str).unwrap_or("?");
            return Err(Error::Numeric(format!("non-finite gradient {bad} in parameter block {name}")));
        }
    }
    for (b, (p, g)) in params.into_iter().zip(grads).enumerate() {
        state.update_block(b, p.data_mut(), g.data(), cfg);
    }
    Ok(())
}
