use crate::error::Result;
use crate::nn::{argmax, AdamConfig, AdamState, Mlp};

#[derive(Clone, Debug, PartialEq)]
pub struct BehaviorModel {
    pub net: Mlp,
    pub optimizer: AdamState,
}

/// One agent's trainable state.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentLearner {
    pub q_net: Mlp,
    pub target_net: Mlp,
    pub optimizer: AdamState,
    /// Present only for BCQ.
    pub behavior: Option<BehaviorModel>,
}

impl AgentLearner {
    pub fn new(q_net: Mlp, adam: AdamConfig, behavior: Option<Mlp>) -> Self {
        Self {
            target_net: q_net.clone(),
            optimizer: AdamState::new(&q_net, adam),
            behavior: behavior.map(|net| BehaviorModel {
                optimizer: AdamState::new(&net, adam),
                net,
            }),
            q_net,
        }
    }

    pub fn sync_target(&mut self) {
        self.target_net.clone_from(&self.q_net);
    }

    pub fn policy(&self, bcq_tau: f64) -> AgentPolicy {
        AgentPolicy {
            q_net: self.q_net.clone(),
            filter: self.behavior.as_ref().map(|b| (b.net.clone(), bcq_tau)),
        }
    }
}

/// Greedy decentralised policy for one agent.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentPolicy {
    pub q_net: Mlp,
    /// BCQ behaviour network and ratio threshold; actions the behaviour
    /// model deems unlikely are never chosen.
    pub filter: Option<(Mlp, f64)>,
}

impl AgentPolicy {
    pub fn greedy(q_net: Mlp) -> Self {
        Self { q_net, filter: None }
    }

    pub fn act(&self, obs: &[f64]) -> Result<usize> {
        let q = self.q_net.forward_one(obs)?;
        match &self.filter {
            None => Ok(argmax(&q)),
            Some((net, tau)) => {
                let logits = net.forward_one(obs)?;
                Ok(masked_argmax(&q, &logits, *tau).unwrap_or_else(|| argmax(&q)))
            }
        }
    }
}

/// Index of the largest `q` entry, ties to the lowest index.
pub fn greedy_action(q_net: &Mlp, obs: &[f64]) -> Result<usize> {
    Ok(argmax(&q_net.forward_one(obs)?))
}

/// Whether action `a` passes the ratio test `p(a) / max p >= tau`, computed
/// from logits so that the softmax normaliser cancels.
#[inline]
pub(crate) fn bcq_allowed(logit: f64, max_logit: f64, ln_tau: f64) -> bool {
    logit - max_logit >= ln_tau
}

pub(crate) fn masked_argmax(q: &[f64], logits: &[f64], tau: f64) -> Option<usize> {
    let max_logit = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ln_tau = tau.ln();
    let mut best: Option<usize> = None;
    for (a, (&qa, &la)) in q.iter().zip(logits).enumerate() {
        if bcq_allowed(la, max_logit, ln_tau) && best.is_none_or(|b| qa > q[b]) {
            best = Some(a);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2};

    fn linear(w: Vec<Vec<f64>>, b: Vec<f64>) -> Mlp {
        let rows = w.len();
        let cols = w[0].len();
        let flat: Vec<f64> = w.into_iter().flatten().collect();
        Mlp::from_layers(
            vec![ndarray::Array2::from_shape_vec((rows, cols), flat).unwrap()],
            vec![arr1(&b)],
        )
        .unwrap()
    }

    #[test]
    fn greedy_examples() {
        let net = linear(vec![vec![0.0]; 3], vec![1.0, 3.0, 2.0]);
        assert_eq!(greedy_action(&net, &[5.0]).unwrap(), 1);
        let flat = linear(vec![vec![0.0]; 3], vec![4.0, 4.0, 4.0]);
        assert_eq!(greedy_action(&flat, &[5.0]).unwrap(), 0);
        let shifted = linear(vec![vec![0.0]; 3], vec![101.0, 103.0, 102.0]);
        assert_eq!(greedy_action(&shifted, &[5.0]).unwrap(), 1);
    }

    #[test]
    fn filter_blocks_unlikely_actions() {
        let q = linear(vec![vec![0.0]; 3], vec![1.0, 9.0, 2.0]);
        // behaviour probabilities proportional to e^[2, 0, 1.5]
        let b = Mlp::from_layers(vec![arr2(&[[0.0], [0.0], [0.0]])], vec![arr1(&[2.0, 0.0, 1.5])]).unwrap();
        let policy = AgentPolicy {
            q_net: q.clone(),
            filter: Some((b.clone(), 0.3)),
        };
        assert_eq!(policy.act(&[0.0]).unwrap(), 2);
        let permissive = AgentPolicy {
            q_net: q,
            filter: Some((b, 0.1)),
        };
        assert_eq!(permissive.act(&[0.0]).unwrap(), 1);
    }

    #[test]
    fn sync_copies_weights() {
        let mut rng = crate::rng::seeded_rng(1, "t");
        let mut l = AgentLearner::new(Mlp::new(3, &[4], 2, &mut rng).unwrap(), AdamConfig::default(), None);
        l.q_net.biases_mut()[0][0] = 5.0;
        assert_ne!(l.q_net, l.target_net);
        l.sync_target();
        assert_eq!(l.q_net, l.target_net);
    }
}
