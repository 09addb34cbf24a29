use serde::{Deserialize, Serialize};

use super::dense::Tensor;
use crate::error::{Error, Result};

/// Updates a parameter list in place from gradients of the same shapes.
pub trait Optimizer {
    fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()>;
}

fn check_shapes(params: &[Tensor], grads: &[Tensor]) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::Dimension {
            op: "optimizer",
            left: (params.len(), 0),
            right: (grads.len(), 0),
        });
    }
    for (p, g) in params.iter().zip(grads) {
        p.same_shape(g, "optimizer")?;
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Sgd {
    pub lr: f64,
}

impl Optimizer for Sgd {
    fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        check_shapes(params, grads)?;
        for (p, g) in params.iter_mut().zip(grads) {
            for (w, d) in p.data_mut().iter_mut().zip(g.data()) {
                *w -= self.lr * d;
            }
        }
        Ok(())
    }
}

/// Bias-corrected Adam. Moment buffers are created lazily on the first step
/// to match the parameter shapes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }
}

impl Optimizer for AdamState {
    fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        check_shapes(params, grads)?;
        if self.first.is_empty() {
            self.first = params.iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect();
            self.second = self.first.clone();
        } else if self.first.len() != params.len() {
            return Err(Error::Dimension {
                op: "adam",
                left: (self.first.len(), 0),
                right: (params.len(), 0),
            });
        } else {
            check_shapes(&self.first, params)?;
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            for (((w, &d), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * d;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * d * d;
                let mhat = *mi / c1;
                let vhat = *vi / c2;
                *w -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut params = vec![Tensor::from_rows(&[[1.0, -2.0]])];
        let mut adam = AdamState::new(0.1);
        adam.step(&mut params, &[Tensor::zeros(1, 2)]).unwrap();
        assert_eq!(params[0], Tensor::from_rows(&[[1.0, -2.0]]));
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let lr = 5e-4;
        let mut params = vec![Tensor::scalar(3.0)];
        let mut adam = AdamState::new(lr);
        adam.step(&mut params, &[Tensor::scalar(1.0)]).unwrap();
        // m̂ = 1, v̂ = 1, so Δ = -lr / (1 + eps).
        let delta = params[0].item() - 3.0;
        assert!((delta + lr).abs() < 1e-10, "{delta}");
    }

    #[test]
    fn step_counter_increments() {
        let mut params = vec![Tensor::scalar(0.0)];
        let mut adam = AdamState::new(0.01);
        for k in 1..=3 {
            adam.step(&mut params, &[Tensor::scalar(0.5)]).unwrap();
            assert_eq!(adam.steps(), k);
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut params = vec![Tensor::zeros(2, 2)];
        let mut adam = AdamState::new(0.01);
        assert!(adam.step(&mut params, &[Tensor::zeros(1, 2)]).is_err());
        let mut sgd = Sgd { lr: 0.1 };
        assert!(sgd.step(&mut params, &[Tensor::zeros(2, 1)]).is_err());
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let run = || {
            let mut params = vec![Tensor::from_rows(&[[0.3, -0.7], [1.1, 0.05]])];
            let mut adam = AdamState::new(5e-4);
            for k in 0..50 {
                let g = params[0].map(|w| (w * 3.0 + k as f64).sin());
                adam.step(&mut params, &[g]).unwrap();
            }
            params
        };
        let (a, b) = (run(), run());
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a[0]), bits(&b[0]));
    }
}
