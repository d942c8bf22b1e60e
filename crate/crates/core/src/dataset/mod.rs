//! Offline experience: transitions recorded from behavioural policies,
//! subsampled to a budget and frozen into an immutable dataset.

mod collect;
mod format;

use std::sync::Arc;

use rand::seq::index::sample;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::env::uav::TaskSpec;
use crate::env::{EnvConfig, EnvKind, Fingerprint};
use crate::error::{Error, Result};
use crate::rng::seeded_rng;

pub use collect::{
    collect_online, collection_episode_seed, replay_prefix, BehaviorConfig, CollectedStream,
    ReplayReport,
};
pub use format::{decode, encode, load, save, DATASET_MAGIC, FORMAT_VERSION};

/// One joint step of experience.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub reward: f64,
    pub next_obs: Vec<Vec<f64>>,
    pub done: bool,
    pub t: u64,
    /// Environment-specific per-step record (see [`crate::env::Step::info`]).
    pub info: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DatasetShape {
    pub num_agents: usize,
    pub obs_dim: usize,
    pub num_actions: usize,
    pub info_dim: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetMeta {
    pub behavior_policy: String,
    pub collection_seed: u64,
    /// Fraction of the original stream this dataset holds.
    pub source_fraction: f64,
    pub behavior_score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OfflineDataset {
    env: EnvKind,
    fingerprint: Fingerprint,
    task: Option<TaskSpec>,
    meta: DatasetMeta,
    shape: DatasetShape,
    transitions: Arc<[Transition]>,
}

impl OfflineDataset {
    pub fn new(
        env: EnvKind,
        fingerprint: Fingerprint,
        task: Option<TaskSpec>,
        meta: DatasetMeta,
        shape: DatasetShape,
        transitions: Vec<Transition>,
    ) -> Result<Self> {
        if transitions.is_empty() {
            return Err(Error::contract("dataset must hold at least one transition"));
        }
        for (i, tr) in transitions.iter().enumerate() {
            let ok = tr.obs.len() == shape.num_agents
                && tr.next_obs.len() == shape.num_agents
                && tr.actions.len() == shape.num_agents
                && tr.obs.iter().chain(&tr.next_obs).all(|o| o.len() == shape.obs_dim)
                && tr.actions.iter().all(|&a| a < shape.num_actions)
                && tr.info.len() == shape.info_dim;
            if !ok {
                return Err(Error::contract(format!(
                    "transition {i} does not match dataset shape {shape:?}"
                )));
            }
        }
        Ok(Self {
            env,
            fingerprint,
            task,
            meta,
            shape,
            transitions: transitions.into(),
        })
    }

    pub fn env(&self) -> EnvKind {
        self.env
    }

    pub fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    pub fn task(&self) -> Option<TaskSpec> {
        self.task
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn shape(&self) -> DatasetShape {
        self.shape
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// SHA-256 of the canonical binary encoding.
    pub fn content_digest(&self) -> [u8; 32] {
        let mut out = [0u8; 32];
        out.copy_from_slice(&Sha256::digest(encode(self)));
        out
    }

    pub fn check_compatible(&self, config: &EnvConfig) -> Result<()> {
        if self.env != config.kind() || self.fingerprint != config.fingerprint() {
            return Err(Error::FingerprintMismatch {
                expected: format!("{}:{}", config.kind(), config.fingerprint()),
                found: format!("{}:{}", self.env, self.fingerprint),
            });
        }
        Ok(())
    }

    /// Copy with rewards replaced; everything else is shared verbatim.
    pub(crate) fn with_rewards(
        &self,
        task: Option<TaskSpec>,
        mut reward: impl FnMut(&Transition) -> Result<f64>,
    ) -> Result<Self> {
        let transitions = self
            .transitions
            .iter()
            .map(|tr| {
                Ok(Transition {
                    reward: reward(tr)?,
                    ..tr.clone()
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            task,
            transitions: transitions.into(),
            ..self.clone()
        })
    }
}

/// Uniform sample of `floor(fraction * len)` transitions without
/// replacement, kept in stream order.
pub fn subsample(stream: &OfflineDataset, fraction: f64, seed: u64) -> Result<OfflineDataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::contract(format!("fraction {fraction} outside (0, 1]")));
    }
    let n = stream.len();
    let k = (fraction * n as f64).floor() as usize;
    if k == 0 {
        return Err(Error::contract(format!(
            "fraction {fraction} of {n} transitions keeps nothing"
        )));
    }
    let mut rng = seeded_rng(seed, "subsample");
    let mut idx = sample(&mut rng, n, k).into_vec();
    idx.sort_unstable();
    let transitions = idx.iter().map(|&i| stream.transitions[i].clone()).collect();
    let meta = DatasetMeta {
        source_fraction: stream.meta.source_fraction * fraction,
        ..stream.meta.clone()
    };
    OfflineDataset::new(
        stream.env,
        stream.fingerprint,
        stream.task,
        meta,
        stream.shape,
        transitions,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DatasetStats {
    pub transitions: usize,
    /// `[agent][action]` counts.
    pub action_histograms: Vec<Vec<u64>>,
    pub reward_mean: f64,
    /// Population standard deviation.
    pub reward_std: f64,
    /// Distinct actions seen divided by the action-space size, per agent.
    pub coverage: Vec<f64>,
}

impl DatasetStats {
    pub fn mean_coverage(&self) -> f64 {
        self.coverage.iter().sum::<f64>() / self.coverage.len() as f64
    }
}

pub fn dataset_stats(dataset: &OfflineDataset) -> DatasetStats {
    let shape = dataset.shape();
    let mut hist = vec![vec![0u64; shape.num_actions]; shape.num_agents];
    for tr in dataset.transitions() {
        for (agent, &a) in tr.actions.iter().enumerate() {
            hist[agent][a] += 1;
        }
    }
    let n = dataset.len() as f64;
    let mean = dataset.transitions().iter().map(|t| t.reward).sum::<f64>() / n;
    let var = dataset
        .transitions()
        .iter()
        .map(|t| (t.reward - mean).powi(2))
        .sum::<f64>()
        / n;
    let coverage = hist
        .iter()
        .map(|h| h.iter().filter(|&&c| c > 0).count() as f64 / shape.num_actions as f64)
        .collect();
    DatasetStats {
        transitions: dataset.len(),
        action_histograms: hist,
        reward_mean: mean,
        reward_std: var.sqrt(),
        coverage,
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    pub fn toy_dataset(n: usize, num_actions: usize) -> OfflineDataset {
        let transitions = (0..n)
            .map(|i| Transition {
                obs: vec![vec![i as f64, 1.0], vec![0.5, -(i as f64)]],
                actions: vec![i % num_actions, (i * 7 + 1) % num_actions],
                reward: (i as f64).sin(),
                next_obs: vec![vec![i as f64 + 1.0, 1.0], vec![0.25, 2.0]],
                done: i % 10 == 9,
                t: (i % 10) as u64,
                info: vec![i as f64 * 0.5, 100.0, 1e-3 * i as f64],
            })
            .collect();
        OfflineDataset::new(
            EnvKind::Synthetic,
            Fingerprint([7; 32]),
            Some(TaskSpec { power_factor: 1.0 }),
            DatasetMeta {
                behavior_policy: "hand".into(),
                collection_seed: 3,
                source_fraction: 1.0,
                behavior_score: -1.5,
            },
            DatasetShape {
                num_agents: 2,
                obs_dim: 2,
                num_actions,
                info_dim: 3,
            },
            transitions,
        )
        .unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::toy_dataset;
    use super::*;

    #[test]
    fn subsample_counts_and_subset() {
        let ds = toy_dataset(1000, 4);
        let sub = subsample(&ds, 0.2, 5).unwrap();
        assert_eq!(sub.len(), 200);
        assert!(sub.transitions().iter().all(|t| ds.transitions().contains(t)));
        assert_eq!(sub, subsample(&ds, 0.2, 5).unwrap());
        assert_ne!(sub, subsample(&ds, 0.2, 6).unwrap());
        assert!((sub.meta().source_fraction - 0.2).abs() < 1e-15);
    }

    #[test]
    fn full_fraction_is_identity() {
        let ds = toy_dataset(37, 3);
        let all = subsample(&ds, 1.0, 1).unwrap();
        assert_eq!(all.transitions(), ds.transitions());
    }

    #[test]
    fn empty_subsample_rejected() {
        let ds = toy_dataset(10, 3);
        assert!(subsample(&ds, 0.05, 1).is_err());
        assert!(subsample(&ds, 0.0, 1).is_err());
    }

    #[test]
    fn single_action_coverage() {
        let ds = toy_dataset(20, 1);
        let stats = dataset_stats(&ds);
        assert_eq!(stats.coverage, vec![1.0, 1.0]);
        let ds = toy_dataset(1, 5);
        let stats = dataset_stats(&ds);
        assert_eq!(stats.coverage, vec![0.2, 0.2]);
    }

    #[test]
    fn reward_stats_match_recomputation() {
        let ds = toy_dataset(123, 4);
        let stats = dataset_stats(&ds);
        let r: Vec<f64> = (0..123).map(|i| (i as f64).sin()).collect();
        let mean = r.iter().sum::<f64>() / 123.0;
        let var = r.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 123.0;
        assert!((stats.reward_mean - mean).abs() < 1e-14);
        assert!((stats.reward_std - var.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn shape_violations_rejected() {
        let ds = toy_dataset(3, 4);
        let mut trs = ds.transitions().to_vec();
        trs[1].obs[0].push(0.0);
        assert!(OfflineDataset::new(
            ds.env(),
            ds.fingerprint(),
            None,
            ds.meta().clone(),
            ds.shape(),
            trs
        )
        .is_err());
    }
}
