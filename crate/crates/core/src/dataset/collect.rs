use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetMeta, DatasetShape, OfflineDataset, Transition};
use crate::env::{EnvConfig, MultiAgentEnv};
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, Mlp, DEFAULT_HIDDEN};
use crate::rng::{derive_seed, seeded_rng, SeedDomain};
use crate::trainers::{greedy_action, init_learners, update_step, Algo, Batch, Mode, TrainerConfig};

/// Online epsilon-greedy DQN used as the behavioural policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BehaviorConfig {
    pub episodes: usize,
    pub mode: Mode,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Share of the episodes over which epsilon decays linearly.
    pub epsilon_decay_fraction: f64,
    pub gamma: f64,
    pub batch_size: usize,
    /// Replay window: updates sample from the most recent transitions.
    pub replay_capacity: usize,
    pub warmup_steps: usize,
    pub train_every: usize,
    pub target_sync_every: usize,
    pub adam: AdamConfig,
    pub huber_delta: f64,
    pub hidden: Vec<usize>,
    pub eval_episodes: usize,
}

impl Default for BehaviorConfig {
    fn default() -> Self {
        Self {
            episodes: 100,
            mode: Mode::Independent,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.5,
            gamma: 0.99,
            batch_size: 64,
            replay_capacity: 50_000,
            warmup_steps: 500,
            train_every: 4,
            target_sync_every: 250,
            adam: AdamConfig {
                lr: 1e-3,
                ..AdamConfig::default()
            },
            huber_delta: 1.0,
            hidden: DEFAULT_HIDDEN.to_vec(),
            eval_episodes: 5,
        }
    }
}

impl BehaviorConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.episodes > 0
            && (0.0..=1.0).contains(&self.epsilon_start)
            && (0.0..=1.0).contains(&self.epsilon_end)
            && self.epsilon_decay_fraction >= 0.0
            && self.replay_capacity > 0
            && self.train_every > 0;
        if !ok {
            return Err(Error::config(format!("invalid behaviour settings: {self:?}")));
        }
        self.trainer_config(0).validate()
    }

    pub fn epsilon(&self, episode: usize) -> f64 {
        let span = (self.epsilon_decay_fraction * self.episodes as f64).max(1.0);
        let frac = (episode as f64 / span).min(1.0);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }

    fn trainer_config(&self, seed: u64) -> TrainerConfig {
        TrainerConfig {
            algo: Algo::Dqn,
            mode: self.mode,
            gamma: self.gamma,
            batch_size: self.batch_size,
            target_sync_every: self.target_sync_every,
            seed,
            adam: self.adam,
            huber_delta: self.huber_delta,
            hidden: self.hidden.clone(),
            ..TrainerConfig::default()
        }
    }

    pub fn policy_name(&self) -> String {
        format!("online-dqn-{}-epsilon-greedy", self.mode)
    }
}

pub fn collection_episode_seed(collection_seed: u64, episode: usize) -> u64 {
    derive_seed(collection_seed, "collect-episode", episode as u64, SeedDomain::Train)
}

#[derive(Clone, Debug)]
pub struct CollectedStream {
    /// Every transition in collection order (`source_fraction` 1).
    pub dataset: OfflineDataset,
    pub episode_returns: Vec<f64>,
    /// Mean greedy episode return of the final behavioural networks.
    pub behavior_score: f64,
    pub q_nets: Vec<Mlp>,
}

pub fn collect_online(env_config: &EnvConfig, behavior: &BehaviorConfig, seed: u64) -> Result<CollectedStream> {
    env_config.validate()?;
    behavior.validate()?;
    let mut env = env_config.build()?;
    let shape = DatasetShape {
        num_agents: env.num_agents(),
        obs_dim: env.obs_dim(),
        num_actions: env.num_actions(),
        info_dim: 0,
    };
    let tcfg = behavior.trainer_config(derive_seed(seed, "behavior-net", 0, SeedDomain::Train));
    let mut learners = init_learners(shape, &tcfg, None)?;
    let mut explore = seeded_rng(seed, "collect-explore");
    let mut replay_rng = seeded_rng(seed, "collect-replay");
    let mut stream: Vec<Transition> = Vec::with_capacity(behavior.episodes * env.episode_len());
    let mut returns = Vec::with_capacity(behavior.episodes);
    let mut updates = 0u64;
    let mut batch_idx = vec![0usize; behavior.batch_size];

    for ep in 0..behavior.episodes {
        let eps = behavior.epsilon(ep);
        let mut obs = env.reset(collection_episode_seed(seed, ep));
        let mut ret = 0.0;
        for t in 0.. {
            let actions = learners
                .iter()
                .zip(&obs)
                .map(|(l, o)| {
                    if explore.random::<f64>() < eps {
                        Ok(explore.random_range(0..shape.num_actions))
                    } else {
                        greedy_action(&l.q_net, o)
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            let step = env.step(&actions)?;
            ret += step.reward;
            let done = step.done;
            stream.push(Transition {
                obs: std::mem::replace(&mut obs, step.observations.clone()),
                actions,
                reward: step.reward,
                next_obs: step.observations,
                done,
                t: t as u64,
                info: step.info,
            });
            let n = stream.len();
            if n >= behavior.warmup_steps.max(1) && n.is_multiple_of(behavior.train_every) {
                let lo = n.saturating_sub(behavior.replay_capacity);
                for slot in batch_idx.iter_mut() {
                    *slot = replay_rng.random_range(lo..n);
                }
                let batch = Batch::gather(&stream, &batch_idx)?;
                update_step(&mut learners, &batch, &tcfg, &mut updates)?;
            }
            if done {
                break;
            }
        }
        returns.push(ret);
    }

    let q_nets: Vec<Mlp> = learners.into_iter().map(|l| l.q_net).collect();
    let behavior_score = greedy_score(env_config, &q_nets, behavior.eval_episodes, seed)?;
    let info_dim = stream.first().map_or(0, |t| t.info.len());
    let dataset = OfflineDataset::new(
        env_config.kind(),
        env_config.fingerprint(),
        env_config.as_uav().map(|u| u.task()),
        DatasetMeta {
            behavior_policy: behavior.policy_name(),
            collection_seed: seed,
            source_fraction: 1.0,
            behavior_score,
        },
        DatasetShape { info_dim, ..shape },
        stream,
    )?;
    Ok(CollectedStream {
        dataset,
        episode_returns: returns,
        behavior_score,
        q_nets,
    })
}

fn greedy_score(env_config: &EnvConfig, q_nets: &[Mlp], episodes: usize, seed: u64) -> Result<f64> {
    if episodes == 0 {
        return Ok(f64::NAN);
    }
    let mut env = env_config.build()?;
    let mut total = 0.0;
    for i in 0..episodes {
        let mut obs = env.reset(derive_seed(seed, "collect-eval", i as u64, SeedDomain::Eval));
        loop {
            let actions = q_nets
                .iter()
                .zip(&obs)
                .map(|(q, o)| greedy_action(q, o))
                .collect::<Result<Vec<_>>>()?;
            let step = env.step(&actions)?;
            total += step.reward;
            obs = step.observations;
            if step.done {
                break;
            }
        }
    }
    Ok(total / episodes as f64)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReplayReport {
    pub checked: usize,
    pub first_mismatch: Option<usize>,
}

/// Re-runs the first `len` transitions of a full collected stream through a
/// fresh environment, using the recorded actions and per-episode seeds, and
/// compares observations, rewards and termination bit for bit.
pub fn replay_prefix(stream: &OfflineDataset, env_config: &EnvConfig, len: usize) -> Result<ReplayReport> {
    stream.check_compatible(env_config)?;
    if stream.meta().source_fraction != 1.0 {
        return Err(Error::contract("only complete streams can be replayed"));
    }
    let config = match (env_config, stream.task()) {
        (EnvConfig::Uav(u), Some(task)) => EnvConfig::Uav(u.with_task(&task)),
        _ => env_config.clone(),
    };
    let mut env = config.build()?;
    let seed = stream.meta().collection_seed;
    let mut episode = 0usize;
    let mut current: Option<Vec<Vec<f64>>> = None;
    let same = |a: &[Vec<f64>], b: &[Vec<f64>]| {
        a.len() == b.len()
            && a.iter().zip(b).all(|(x, y)| {
                x.len() == y.len() && x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits())
            })
    };
    let n = len.min(stream.len());
    for (i, tr) in stream.transitions()[..n].iter().enumerate() {
        if tr.t == 0 {
            current = Some(env.reset(collection_episode_seed(seed, episode)));
            episode += 1;
        }
        let obs = current
            .as_ref()
            .ok_or_else(|| Error::contract("stream does not start at an episode boundary"))?;
        if !same(obs, &tr.obs) {
            return Ok(ReplayReport { checked: i, first_mismatch: Some(i) });
        }
        let step = env.step(&tr.actions)?;
        let ok = step.reward.to_bits() == tr.reward.to_bits()
            && step.done == tr.done
            && same(&step.observations, &tr.next_obs)
            && step.info.len() == tr.info.len()
            && step.info.iter().zip(&tr.info).all(|(a, b)| a.to_bits() == b.to_bits());
        if !ok {
            return Ok(ReplayReport { checked: i, first_mismatch: Some(i) });
        }
        current = Some(step.observations);
    }
    Ok(ReplayReport { checked: n, first_mismatch: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{RrmConfig, UavConfig};

    fn tiny_rrm() -> EnvConfig {
        EnvConfig::Rrm(RrmConfig {
            num_aps: 2,
            num_ues: 6,
            episode_len: 20,
            ..RrmConfig::default()
        })
    }

    fn small_behavior(episodes: usize) -> BehaviorConfig {
        BehaviorConfig {
            episodes,
            warmup_steps: 16,
            batch_size: 8,
            hidden: vec![16],
            eval_episodes: 1,
            ..BehaviorConfig::default()
        }
    }

    #[test]
    fn stream_length_and_replay() {
        let cfg = tiny_rrm();
        let out = collect_online(&cfg, &small_behavior(4), 9).unwrap();
        assert_eq!(out.dataset.len(), 4 * 20);
        assert_eq!(out.episode_returns.len(), 4);
        let report = replay_prefix(&out.dataset, &cfg, usize::MAX).unwrap();
        assert_eq!(report, ReplayReport { checked: 80, first_mismatch: None });
        assert!(out.dataset.meta().behavior_policy.starts_with("online-dqn"));
    }

    #[test]
    fn uav_replay_and_task() {
        let cfg = EnvConfig::Uav(UavConfig {
            grid_cells: 5,
            area_side_m: 500.0,
            num_uavs: 2,
            num_devices: 3,
            episode_len: 15,
            power_factor: 3.0,
            ..UavConfig::default()
        });
        let out = collect_online(&cfg, &small_behavior(3), 2).unwrap();
        assert_eq!(out.dataset.task().unwrap().power_factor, 3.0);
        assert_eq!(replay_prefix(&out.dataset, &cfg, 45).unwrap().first_mismatch, None);
    }

    #[test]
    fn collection_is_deterministic() {
        let cfg = tiny_rrm();
        let a = collect_online(&cfg, &small_behavior(2), 4).unwrap();
        let b = collect_online(&cfg, &small_behavior(2), 4).unwrap();
        assert_eq!(a.dataset, b.dataset);
    }

    #[test]
    fn epsilon_schedule() {
        let b = BehaviorConfig {
            episodes: 10,
            epsilon_start: 1.0,
            epsilon_end: 0.1,
            epsilon_decay_fraction: 0.5,
            ..BehaviorConfig::default()
        };
        assert_eq!(b.epsilon(0), 1.0);
        assert!((b.epsilon(5) - 0.1).abs() < 1e-12);
        assert!((b.epsilon(9) - 0.1).abs() < 1e-12);
    }
}
