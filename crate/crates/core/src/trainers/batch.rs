use ndarray::Array2;

use crate::dataset::Transition;
use crate::error::{Error, Result};

/// Minibatch laid out per agent: `obs[i]` is `(B, obs_dim)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub obs: Vec<Array2<f64>>,
    pub actions: Vec<Vec<usize>>,
    pub rewards: Vec<f64>,
    pub next_obs: Vec<Array2<f64>>,
    pub dones: Vec<bool>,
}

impl Batch {
    pub fn gather(transitions: &[Transition], indices: &[usize]) -> Result<Self> {
        let rows: Vec<&Transition> = indices
            .iter()
            .map(|&i| {
                transitions
                    .get(i)
                    .ok_or_else(|| Error::contract(format!("batch index {i} out of range")))
            })
            .collect::<Result<_>>()?;
        Self::from_refs(&rows)
    }

    pub fn from_refs(rows: &[&Transition]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::contract("batch must not be empty"))?;
        let agents = first.obs.len();
        let dim = first.obs.first().map_or(0, Vec::len);
        let b = rows.len();
        let mut obs = vec![Array2::zeros((b, dim)); agents];
        let mut next_obs = vec![Array2::zeros((b, dim)); agents];
        let mut actions = vec![Vec::with_capacity(b); agents];
        for (r, tr) in rows.iter().enumerate() {
            if tr.obs.len() != agents || tr.actions.len() != agents || tr.next_obs.len() != agents {
                return Err(Error::contract("transitions in one batch disagree on agent count"));
            }
            for i in 0..agents {
                if tr.obs[i].len() != dim || tr.next_obs[i].len() != dim {
                    return Err(Error::contract("transitions in one batch disagree on obs dim"));
                }
                for (c, (&o, &n)) in tr.obs[i].iter().zip(&tr.next_obs[i]).enumerate() {
                    obs[i][[r, c]] = o;
                    next_obs[i][[r, c]] = n;
                }
                actions[i].push(tr.actions[i]);
            }
        }
        Ok(Self {
            obs,
            actions,
            rewards: rows.iter().map(|t| t.reward).collect(),
            next_obs,
            dones: rows.iter().map(|t| t.done).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn num_agents(&self) -> usize {
        self.obs.len()
    }
}
