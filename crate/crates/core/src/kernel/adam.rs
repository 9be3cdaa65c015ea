use crate::error::{Error, Result};

/// A collection of parameter tensors visited in a fixed order.
pub trait ParamSet {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

impl ParamSet for Vec<Vec<f64>> {
    fn tensors(&self) -> Vec<&[f64]> {
        self.iter().map(Vec::as_slice).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.iter_mut().map(Vec::as_mut_slice).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.0004,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates mirroring a parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &impl ParamSet, config: AdamConfig) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
        Self {
            config,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    /// Bias-corrected Adam update of `params` from `grads`.
    pub fn step(&mut self, params: &mut impl ParamSet, grads: &impl ParamSet) -> Result<()> {
        let mut ps = params.tensors_mut();
        let gs = grads.tensors();
        if ps.len() != gs.len() || ps.len() != self.m.len() {
            return Err(Error::shape(
                "adam_step",
                format!("{} params, {} grads, {} moments", ps.len(), gs.len(), self.m.len()),
            ));
        }
        for (i, (p, g)) in ps.iter().zip(&gs).enumerate() {
            if p.len() != g.len() || p.len() != self.m[i].len() {
                return Err(Error::shape(
                    "adam_step",
                    format!("tensor {i}: {} params, {} grads, {} moments", p.len(), g.len(), self.m[i].len()),
                ));
            }
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in ps.iter_mut().zip(&gs).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_is_lr_times_sign() {
        let mut params = vec![vec![1.0]];
        let grads = vec![vec![0.1]];
        let mut state = AdamState::new(&params, AdamConfig::default());
        state.step(&mut params, &grads).unwrap();
        assert_eq!(state.t, 1);
        let expected = 1.0 - 0.0004 * 0.1 / (0.1 + 1e-8);
        assert!((params[0][0] - expected).abs() < 1e-15);
        assert!((params[0][0] - 0.9996).abs() < 1e-9);
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut params = vec![vec![0.5, -2.0], vec![3.0]];
        let before = params.clone();
        let grads = vec![vec![0.0, 0.0], vec![0.0]];
        let mut state = AdamState::new(&params, AdamConfig::default());
        for _ in 0..10 {
            state.step(&mut params, &grads).unwrap();
        }
        assert_eq!(params, before);
    }

    #[test]
    fn equal_grads_equal_updates() {
        let mut params = vec![vec![1.0, 1.0]];
        let grads = vec![vec![-0.3, -0.3]];
        let mut state = AdamState::new(&params, AdamConfig::default());
        state.step(&mut params, &grads).unwrap();
        assert_eq!(params[0][0], params[0][1]);
    }

    #[test]
    fn shape_mismatch() {
        let mut params = vec![vec![1.0, 1.0]];
        let mut state = AdamState::new(&params, AdamConfig::default());
        assert!(state.step(&mut params, &vec![vec![0.1]]).is_err());
        assert!(state.step(&mut params, &vec![vec![0.1, 0.1], vec![0.0]]).is_err());
        assert_eq!(state.t, 0);
    }
}
