use super::matrix::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Coupled L2: `λ·θ` is added to the gradient before the moment updates.
    pub l2: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            l2: 0.0,
        }
    }
}

/// Bias-corrected Adam over an ordered list of tensors.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl AdamState {
    pub fn new(config: AdamConfig, shapes: &[(usize, usize)]) -> Self {
        let zeros = || shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect();
        AdamState {
            config,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.config.learning_rate = lr;
    }

    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[&Matrix]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != params.len() {
            return Err(Error::Usage(format!(
                "adam state tracks {} tensors, got {} params and {} grads",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != self.first[i].shape() {
                return Err(Error::shape("adam_step", self.first[i].shape(), p.shape()));
            }
            if g.shape() != p.shape() {
                return Err(Error::shape("adam_step", p.shape(), g.shape()));
            }
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            l2,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            for (j, (theta, &grad)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                let gj = grad + l2 * *theta;
                m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                *theta -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(config: AdamConfig, theta: f64, grad: f64) -> (f64, AdamState) {
        let mut p = Matrix::from_vec(1, 2, vec![theta; 2]).unwrap();
        let g = Matrix::from_vec(1, 2, vec![grad; 2]).unwrap();
        let mut state = AdamState::new(config, &[(1, 2)]);
        state.step(&mut [&mut p], &[&g]).unwrap();
        (p.get(0, 0), state)
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let (theta, state) = run(AdamConfig::default(), 0.5, 1.0);
        // m̂ = 1, v̂ = 1, so the step is lr·1/(1+ε)
        assert!((theta - (0.5 - 0.001 / (1.0 + 1e-8))).abs() < 1e-15);
        assert_eq!(state.steps(), 1);
    }

    #[test]
    fn zero_gradient_no_l2_is_identity() {
        let (theta, _) = run(AdamConfig::default(), 0.5, 0.0);
        assert_eq!(theta, 0.5);
    }

    #[test]
    fn l2_pulls_towards_zero() {
        let config = AdamConfig {
            l2: 1e-2,
            ..AdamConfig::default()
        };
        let (theta, _) = run(config, 0.5, 0.0);
        assert!(theta < 0.5);
    }

    #[test]
    fn shape_mismatch() {
        let mut p = Matrix::zeros(2, 2);
        let g = Matrix::zeros(1, 2);
        let mut state = AdamState::new(AdamConfig::default(), &[(2, 2)]);
        assert!(state.step(&mut [&mut p], &[&g]).is_err());
        assert_eq!(state.steps(), 0);
    }

    #[test]
    fn step_counter_increments() {
        let mut p = Matrix::zeros(1, 1);
        let g = Matrix::zeros(1, 1);
        let mut state = AdamState::new(AdamConfig::default(), &[(1, 1)]);
        for expected in 1..=3 {
            state.step(&mut [&mut p], &[&g]).unwrap();
            assert_eq!(state.steps(), expected);
        }
    }
}
