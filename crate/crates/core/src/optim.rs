//! First-order optimizers for the experiment loops: SGD, RMSprop, and Adam.

use crate::error::{Error, Result};

pub const RMSPROP_DECAY: f64 = 0.99;
pub const RMSPROP_EPS: f64 = 1e-8;
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    RmsProp { decay: f64, eps: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn rmsprop() -> Self {
        OptimizerKind::RmsProp {
            decay: RMSPROP_DECAY,
            eps: RMSPROP_EPS,
        }
    }

    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
        }
    }
}

/// Per-parameter accumulator state plus step count. One owner per parameter
/// vector; `step` mutates the parameters in place.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    first: Vec<f64>,
    second: Vec<f64>,
    steps: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, n_params: usize) -> Self {
        Self {
            kind,
            first: vec![0.0; n_params],
            second: vec![0.0; n_params],
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
        assert_eq!(params.len(), grad.len());
        assert_eq!(params.len(), self.second.len());
        assert!(lr > 0.0, "learning rate must be positive");
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NanGradient(i));
        }
        self.steps += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, &g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::RmsProp { decay, eps } => {
                for ((p, &g), v) in params.iter_mut().zip(grad).zip(&mut self.second) {
                    *v = decay * *v + (1.0 - decay) * g * g;
                    *p -= lr * g / (*v + eps).sqrt();
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let t = self.steps as i32;
                let bc1 = 1.0 - beta1.powi(t);
                let bc2 = 1.0 - beta2.powi(t);
                for (((p, &g), m), v) in params
                    .iter_mut()
                    .zip(grad)
                    .zip(&mut self.first)
                    .zip(&mut self.second)
                {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *p -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sgd_step() {
        let mut opt = Optimizer::new(OptimizerKind::Sgd, 2);
        let mut p = vec![0.0, 0.0];
        opt.step(&mut p, &[1.0, -2.0], 0.1).unwrap();
        assert_abs_diff_eq!(p[0], -0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 0.2, epsilon = 1e-15);
    }

    #[test]
    fn rmsprop_first_step() {
        let mut opt = Optimizer::new(OptimizerKind::rmsprop(), 1);
        let g = 0.7;
        let mut p = vec![1.0];
        opt.step(&mut p, &[g], 0.05).unwrap();
        let expected = 1.0 - 0.05 * g / (0.01 * g * g + 1e-8).sqrt();
        assert_abs_diff_eq!(p[0], expected, epsilon = 1e-14);
    }

    #[test]
    fn zero_gradient_is_noop() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::rmsprop(), OptimizerKind::adam()] {
            let mut opt = Optimizer::new(kind, 3);
            let mut p = vec![1.0, -2.0, 0.5];
            opt.step(&mut p, &[0.0, 0.0, 0.0], 0.1).unwrap();
            assert_eq!(p, vec![1.0, -2.0, 0.5]);
        }
    }

    #[test]
    fn rejects_nan_gradient() {
        let mut opt = Optimizer::new(OptimizerKind::Sgd, 1);
        let mut p = vec![0.0];
        assert!(matches!(
            opt.step(&mut p, &[f64::NAN], 0.1),
            Err(Error::NanGradient(0))
        ));
    }

    #[test]
    fn deterministic_updates() {
        let grads = [[0.3, -0.2], [0.1, 0.4], [-0.5, 0.2]];
        let run = |kind: OptimizerKind| {
            let mut opt = Optimizer::new(kind, 2);
            let mut p = vec![0.5, -0.5];
            for g in &grads {
                opt.step(&mut p, g, 0.01).unwrap();
            }
            p
        };
        for kind in [OptimizerKind::Sgd, OptimizerKind::rmsprop(), OptimizerKind::adam()] {
            let a = run(kind);
            let b = run(kind);
            assert_eq!(
                a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                b.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn quadratic_descent_after_burn_in() {
        // On 0.5 ||x||^2 every optimizer reduces the objective monotonically
        // once past a short burn-in.
        let objective = |x: &[f64]| 0.5 * x.iter().map(|v| v * v).sum::<f64>();
        for kind in [OptimizerKind::Sgd, OptimizerKind::rmsprop(), OptimizerKind::adam()] {
            let mut opt = Optimizer::new(kind, 4);
            let mut x = vec![1.0, -2.0, 0.7, 1.5];
            let mut values = Vec::new();
            for _ in 0..200 {
                let grad = x.clone();
                opt.step(&mut x, &grad, 0.01).unwrap();
                values.push(objective(&x));
            }
            for w in values[10..].windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{kind:?} not monotone: {w:?}");
            }
        }
    }
}
