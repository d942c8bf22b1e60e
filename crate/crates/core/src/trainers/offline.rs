use std::path::Path;

use rand::seq::SliceRandom;
use serde::Serialize;

use super::batch::Batch;
use super::learner::{AgentLearner, AgentPolicy};
use super::loss::{imitation_loss_and_grads, loss_and_grads, BatchLoss};
use super::{Algo, TrainerConfig};
use crate::dataset::{DatasetShape, OfflineDataset};
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::nn::{AdamState, Mlp};
use crate::rng::seeded_rng;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurveRow {
    pub epoch: usize,
    pub mean_loss: f64,
    pub mean_penalty: Option<f64>,
    pub eval_score: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingCurve {
    pub rows: Vec<CurveRow>,
}

impl TrainingCurve {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn last_score(&self) -> Option<f64> {
        self.rows.iter().rev().find_map(|r| r.eval_score)
    }
}

/// Called after every epoch with read-only learners. Returning a score
/// records it in the curve. Hooks must not feed anything back into the
/// dataset; evaluation rollouts happen in environments of their own.
pub trait EpochHook {
    fn after_epoch(
        &mut self,
        epoch: usize,
        learners: &[AgentLearner],
        config: &TrainerConfig,
    ) -> Result<Option<f64>>;
}

impl<F> EpochHook for F
where
    F: FnMut(usize, &[AgentLearner], &TrainerConfig) -> Result<Option<f64>>,
{
    fn after_epoch(
        &mut self,
        epoch: usize,
        learners: &[AgentLearner],
        config: &TrainerConfig,
    ) -> Result<Option<f64>> {
        self(epoch, learners, config)
    }
}

#[derive(Default)]
pub struct TrainOptions<'a> {
    /// When given, the dataset must carry this configuration's fingerprint.
    pub env: Option<&'a EnvConfig>,
    /// Starting Q-network parameters, one per agent.
    pub init: Option<&'a [Mlp]>,
    pub hook: Option<&'a mut dyn EpochHook>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub learners: Vec<AgentLearner>,
    pub curve: TrainingCurve,
    pub updates: u64,
}

impl TrainOutcome {
    pub fn policies(&self, bcq_tau: f64) -> Vec<AgentPolicy> {
        self.learners.iter().map(|l| l.policy(bcq_tau)).collect()
    }

    pub fn q_nets(&self) -> Vec<Mlp> {
        self.learners.iter().map(|l| l.q_net.clone()).collect()
    }
}

pub fn init_learners(
    shape: DatasetShape,
    config: &TrainerConfig,
    init: Option<&[Mlp]>,
) -> Result<Vec<AgentLearner>> {
    let q_nets = match init {
        Some(nets) => {
            if nets.len() != shape.num_agents {
                return Err(Error::contract(format!(
                    "initialisation has {} networks for {} agents",
                    nets.len(),
                    shape.num_agents
                )));
            }
            for (i, n) in nets.iter().enumerate() {
                if n.in_dim() != shape.obs_dim || n.out_dim() != shape.num_actions {
                    return Err(Error::contract(format!(
                        "agent {i}: network maps {} -> {}, data needs {} -> {}",
                        n.in_dim(),
                        n.out_dim(),
                        shape.obs_dim,
                        shape.num_actions
                    )));
                }
            }
            nets.to_vec()
        }
        None => {
            let mut rng = seeded_rng(config.seed, "trainer-init");
            (0..shape.num_agents)
                .map(|_| Mlp::new(shape.obs_dim, &config.hidden, shape.num_actions, &mut rng))
                .collect::<Result<_>>()?
        }
    };
    let mut behavior_rng = seeded_rng(config.seed, "trainer-behavior-init");
    q_nets
        .into_iter()
        .map(|q| {
            let behavior = match config.algo {
                Algo::Bcq => Some(Mlp::new(
                    shape.obs_dim,
                    &config.hidden,
                    shape.num_actions,
                    &mut behavior_rng,
                )?),
                _ => None,
            };
            Ok(AgentLearner::new(q, config.adam, behavior))
        })
        .collect()
}

/// One gradient step on every agent, with the hard target copy every
/// `target_sync_every` updates.
pub fn update_step(
    learners: &mut [AgentLearner],
    batch: &Batch,
    config: &TrainerConfig,
    updates: &mut u64,
) -> Result<BatchLoss> {
    let out = loss_and_grads(batch, learners, config)?;
    for (l, a) in learners.iter_mut().zip(&out.agents) {
        l.optimizer.step(&mut l.q_net, &a.grads)?;
        if let (Some(b), Some(g)) = (l.behavior.as_mut(), a.behavior_grads.as_ref()) {
            b.optimizer.step(&mut b.net, g)?;
        }
    }
    *updates += 1;
    if (*updates).is_multiple_of(config.target_sync_every as u64) {
        learners.iter_mut().for_each(AgentLearner::sync_target);
    }
    Ok(out)
}

pub fn train_offline(
    dataset: &OfflineDataset,
    config: &TrainerConfig,
    options: TrainOptions<'_>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if let Some(env) = options.env {
        dataset.check_compatible(env)?;
    }
    let mut learners = init_learners(dataset.shape(), config, options.init)?;
    let mut hook = options.hook;
    let mut rng = seeded_rng(config.seed, "trainer-shuffle");
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut curve = TrainingCurve::default();
    let mut updates = 0u64;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut pen_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch = Batch::gather(dataset.transitions(), chunk)?;
            let out = update_step(&mut learners, &batch, config, &mut updates)?;
            loss_sum += out.total;
            pen_sum += out.mean_penalty();
            batches += 1;
        }
        let eval_score = match hook.as_mut() {
            Some(h) => h.after_epoch(epoch, &learners, config)?,
            None => None,
        };
        curve.rows.push(CurveRow {
            epoch,
            mean_loss: loss_sum / batches as f64,
            mean_penalty: (config.algo == Algo::Cql).then(|| pen_sum / batches as f64),
            eval_score,
        });
    }
    Ok(TrainOutcome {
        learners,
        curve,
        updates,
    })
}

/// Per-agent softmax classifiers of the dataset's actions.
pub fn fit_behavior(dataset: &OfflineDataset, config: &TrainerConfig) -> Result<Vec<Mlp>> {
    config.validate()?;
    let shape = dataset.shape();
    let mut init_rng = seeded_rng(config.seed, "behavior-fit-init");
    let mut nets: Vec<Mlp> = (0..shape.num_agents)
        .map(|_| Mlp::new(shape.obs_dim, &config.hidden, shape.num_actions, &mut init_rng))
        .collect::<Result<_>>()?;
    let mut opts: Vec<AdamState> = nets.iter().map(|n| AdamState::new(n, config.adam)).collect();
    let mut rng = seeded_rng(config.seed, "behavior-fit-shuffle");
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch = Batch::gather(dataset.transitions(), chunk)?;
            for (i, (net, opt)) in nets.iter_mut().zip(&mut opts).enumerate() {
                let (_, g) = imitation_loss_and_grads(net, batch.obs[i].view(), &batch.actions[i])?;
                opt.step(net, &g)?;
            }
        }
    }
    Ok(nets)
}
