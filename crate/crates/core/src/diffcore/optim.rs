use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam { beta1: f64, beta2: f64, eps: f64 },
    Sgd,
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First-order optimizer over one flat parameter vector.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    kind: OptimizerKind,
    learning_rate: f64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step_count: u64,
}

impl OptimizerState {
    /// A zero learning rate is accepted and freezes the parameters.
    pub fn new(kind: OptimizerKind, learning_rate: f64, n_params: usize) -> Result<Self> {
        if !(learning_rate.is_finite() && learning_rate >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be finite and non-negative, got {learning_rate}"
            )));
        }
        let buffers = match kind {
            OptimizerKind::Adam { .. } => n_params,
            OptimizerKind::Sgd => 0,
        };
        Ok(Self {
            kind,
            learning_rate,
            first_moment: vec![0.0; buffers],
            second_moment: vec![0.0; buffers],
            step_count: 0,
        })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.first_moment, &self.second_moment)
    }

    /// Applies one update. A non-finite gradient leaves both `params` and
    /// the optimizer state untouched.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::DimensionMismatch {
                context: "optimizer gradient".into(),
                expected: params.len(),
                actual: grads.len(),
            });
        }
        if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { index });
        }
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                if self.first_moment.len() != params.len() {
                    return Err(Error::DimensionMismatch {
                        context: "adam moment buffers".into(),
                        expected: self.first_moment.len(),
                        actual: params.len(),
                    });
                }
                let t = (self.step_count + 1) as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((p, &g), m), v) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(self.first_moment.iter_mut())
                    .zip(self.second_moment.iter_mut())
                {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
        self.step_count += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_one_step() {
        let mut opt = OptimizerState::new(OptimizerKind::Sgd, 0.1, 1).unwrap();
        let mut theta = [1.0];
        opt.step(&mut theta, &[2.0]).unwrap();
        assert!((theta[0] - 0.8).abs() < 1e-15);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn adam_first_step_is_lr_times_sign() {
        let lr = 1e-3;
        let mut opt = OptimizerState::new(OptimizerKind::adam(), lr, 3).unwrap();
        let mut theta = [0.0, 0.0, 0.0];
        opt.step(&mut theta, &[4.0, -0.02, 1e3]).unwrap();
        for (t, sign) in theta.iter().zip([-1.0, 1.0, -1.0]) {
            assert!((t - sign * lr).abs() < lr * 1e-5, "{t}");
            assert!(t.abs() <= lr * (1.0 + 1e-9));
        }
    }

    #[test]
    fn sgd_converges_on_quadratic() {
        // d/dθ (θ-5)² = 2(θ-5); error contracts by 0.8 per step.
        let mut opt = OptimizerState::new(OptimizerKind::Sgd, 0.1, 1).unwrap();
        let mut theta = [0.0];
        for _ in 0..50 {
            let g = 2.0 * (theta[0] - 5.0);
            opt.step(&mut theta, &[g]).unwrap();
        }
        let closed_form = 5.0 - 5.0 * 0.8f64.powi(50);
        assert!((theta[0] - closed_form).abs() < 1e-12);
        assert!((theta[0] - 5.0).abs() < 1e-3);
    }

    #[test]
    fn non_finite_gradient_leaves_state_unchanged() {
        let mut opt = OptimizerState::new(OptimizerKind::adam(), 0.01, 2).unwrap();
        let mut theta = [1.0, 2.0];
        opt.step(&mut theta, &[0.5, 0.5]).unwrap();
        let before = (theta, opt.moments().0.to_vec(), opt.moments().1.to_vec());
        let err = opt.step(&mut theta, &[f64::NAN, 1.0]).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { index: 0 }));
        assert_eq!(theta, before.0);
        assert_eq!(opt.moments().0, &before.1[..]);
        assert_eq!(opt.moments().1, &before.2[..]);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn moment_buffers_cover_every_parameter() {
        let opt = OptimizerState::new(OptimizerKind::adam(), 0.01, 17).unwrap();
        assert_eq!(opt.moments().0.len(), 17);
        assert_eq!(opt.moments().1.len(), 17);
    }

    #[test]
    fn negative_learning_rate_rejected() {
        assert!(OptimizerState::new(OptimizerKind::Sgd, -0.1, 1).is_err());
        assert!(OptimizerState::new(OptimizerKind::Sgd, f64::NAN, 1).is_err());
    }
}
