use ndarray::Zip;
use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, Mlp};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments for one network.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    first_moment: Gradients,
    second_moment: Gradients,
    step_count: u64,
}

impl AdamState {
    pub fn new(net: &Mlp, config: AdamConfig) -> Self {
        Self {
            config,
            first_moment: Gradients::zeros_like(net),
            second_moment: Gradients::zeros_like(net),
            step_count: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<()> {
        if !grads.matches(net) || !self.first_moment.matches(net) {
            return Err(Error::contract("adam: gradient/optimizer shapes differ from network"));
        }
        self.step_count += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step_count as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for l in 0..net.weights.len() {
            Zip::from(&mut net.weights[l])
                .and(&mut self.first_moment.weights[l])
                .and(&mut self.second_moment.weights[l])
                .and(&grads.weights[l])
                .for_each(|p, m, v, &g| update(p, m, v, g));
            Zip::from(&mut net.biases[l])
                .and(&mut self.first_moment.biases[l])
                .and(&mut self.second_moment.biases[l])
                .and(&grads.biases[l])
                .for_each(|p, m, v, &g| update(p, m, v, g));
        }
        Ok(())
    }

    pub fn second_moment_nonnegative(&self) -> bool {
        self.second_moment.flatten().iter().all(|&v| v >= 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;
    use ndarray::array;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut rng = seeded_rng(5, "test");
        let mut net = Mlp::new(3, &[4], 2, &mut rng).unwrap();
        let before = net.clone();
        let mut state = AdamState::new(&net, AdamConfig::default());
        state.step(&mut net, &Gradients::zeros_like(&before)).unwrap();
        assert_eq!(net, before);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn first_step_closed_form() {
        let mut net =
            Mlp::from_layers(vec![array![[0.5]]], vec![array![0.0]]).unwrap();
        let cfg = AdamConfig {
            lr: 0.1,
            eps: 1e-8,
            ..AdamConfig::default()
        };
        let mut state = AdamState::new(&net, cfg);
        let g = Gradients {
            weights: vec![array![[1.0]]],
            biases: vec![array![0.0]],
        };
        state.step(&mut net, &g).unwrap();
        let expected = 0.5 - 0.1 / (1.0 + 1e-8);
        assert!((net.weights()[0][[0, 0]] - expected).abs() < 1e-15);
        assert!(state.second_moment_nonnegative());
    }

    #[test]
    fn deterministic_on_copies() {
        let mut rng = seeded_rng(6, "test");
        let net = Mlp::new(3, &[4], 2, &mut rng).unwrap();
        let mut g = Gradients::zeros_like(&net);
        g.weights[0].fill(0.3);
        g.biases[1].fill(-0.7);
        let (mut a, mut b) = (net.clone(), net.clone());
        let mut sa = AdamState::new(&net, AdamConfig::default());
        let mut sb = sa.clone();
        for _ in 0..3 {
            sa.step(&mut a, &g).unwrap();
            sb.step(&mut b, &g).unwrap();
        }
        assert_eq!(a, b);
        assert_eq!(sa, sb);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut net = Mlp::zeros(3, &[4], 2);
        let other = Mlp::zeros(3, &[5], 2);
        let mut state = AdamState::new(&net, AdamConfig::default());
        assert!(state.step(&mut net, &Gradients::zeros_like(&other)).is_err());
    }
}
