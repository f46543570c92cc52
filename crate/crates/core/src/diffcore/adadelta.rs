//! ADADELTA: per-coordinate step sizes from running averages of squared
//! gradients and squared updates.
//!
//! ```text
//! acc_grad   = rho * acc_grad   + (1 - rho) * g^2
//! delta      = -sqrt(acc_update + eps) / sqrt(acc_grad + eps) * g
//! acc_update = rho * acc_update + (1 - rho) * delta^2
//! x         += delta
//! ```

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdadeltaState {
    pub rho: f64,
    pub eps: f64,
    acc_grad: Vec<Vec<f64>>,
    acc_update: Vec<Vec<f64>>,
}

impl AdadeltaState {
    /// Zero-initialised state for parameters with the given element counts.
    pub fn new(sizes: impl IntoIterator<Item = usize>, rho: f64, eps: f64) -> Self {
        let sizes: Vec<usize> = sizes.into_iter().collect();
        AdadeltaState {
            rho,
            eps,
            acc_grad: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            acc_update: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn acc_grad(&self, i: usize) -> &[f64] {
        &self.acc_grad[i]
    }

    pub fn acc_update(&self, i: usize) -> &[f64] {
        &self.acc_update[i]
    }

    /// Applies one update to `params` in place. `params[i]` pairs with
    /// `grads[i]` and with slot `i` of the state.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[&Tensor]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.acc_grad.len() {
            return Err(Error::dim(
                "adadelta",
                format!(
                    "{} params, {} grads, {} state slots",
                    params.len(),
                    grads.len(),
                    self.acc_grad.len()
                ),
            ));
        }
        let (rho, eps) = (self.rho, self.eps);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.len() != self.acc_grad[i].len() {
                return Err(Error::dim(
                    "adadelta",
                    format!("slot {i}: param {:?}, grad {:?}", p.shape(), g.shape()),
                ));
            }
            let eg = &mut self.acc_grad[i];
            let ex = &mut self.acc_update[i];
            for (k, (x, &gk)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                eg[k] = rho * eg[k] + (1.0 - rho) * gk * gk;
                let delta = -((ex[k] + eps).sqrt() / (eg[k] + eps).sqrt()) * gk;
                ex[k] = rho * ex[k] + (1.0 - rho) * delta * delta;
                *x += delta;
            }
        }
        Ok(())
    }
}
