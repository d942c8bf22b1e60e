//! First-order meta-learning of Q-network initialisations over the UAV
//! power-factor task family, and few-epoch adaptation to a held-out task.
//!
//! The outer update is Reptile-style: after adapting a copy of the
//! initialisation to each sampled task with the ordinary offline trainer,
//! the initialisation moves a step `eps_t` towards the mean adapted weights,
//! with `eps_t` decaying linearly from `outer_lr` to zero.

use std::path::Path;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetShape, OfflineDataset};
use crate::env::uav::{default_task_family, uav_reward, TaskSpec, DEFAULT_TEST_POWER_FACTOR};
use crate::env::EnvKind;
use crate::error::{Error, Result};
use crate::nn::{load_networks, save_networks, Mlp};
use crate::rng::{derive_seed, seeded_rng, SeedDomain};
use crate::trainers::{train_offline, Algo, TrainOptions, TrainOutcome, TrainerConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetaConfig {
    pub train_tasks: Vec<TaskSpec>,
    pub test_task: TaskSpec,
    pub inner_epochs: usize,
    /// Learning rate of the inner trainer; `None` keeps the base trainer's.
    pub inner_lr: Option<f64>,
    pub outer_lr: f64,
    pub meta_iterations: usize,
    /// Tasks adapted per iteration; `None` uses all of them.
    pub tasks_per_iteration: Option<usize>,
    pub adapt_epochs: usize,
    pub base_trainer: TrainerConfig,
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self {
            train_tasks: default_task_family(),
            test_task: TaskSpec {
                power_factor: DEFAULT_TEST_POWER_FACTOR,
            },
            inner_epochs: 3,
            inner_lr: None,
            outer_lr: 0.5,
            meta_iterations: 10,
            tasks_per_iteration: None,
            adapt_epochs: 20,
            base_trainer: TrainerConfig {
                algo: Algo::Cql,
                ..TrainerConfig::default()
            },
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.train_tasks.is_empty() {
            return Err(Error::config("meta: at least one training task is required"));
        }
        if self.train_tasks.contains(&self.test_task) {
            return Err(Error::config(format!(
                "meta: test power factor {} is also a training task",
                self.test_task.power_factor
            )));
        }
        if !(self.outer_lr > 0.0 && self.outer_lr <= 1.0) {
            return Err(Error::config("meta: outer_lr must lie in (0, 1]"));
        }
        if self.inner_lr.is_some_and(|lr| !(lr > 0.0 && lr.is_finite())) {
            return Err(Error::config("meta: inner_lr must be positive"));
        }
        if self.tasks_per_iteration == Some(0) {
            return Err(Error::config("meta: tasks_per_iteration must be positive"));
        }
        self.base_trainer.validate()
    }

    /// Outer step size at iteration `t`.
    pub fn outer_step(&self, t: usize) -> f64 {
        self.outer_lr * (1.0 - t as f64 / self.meta_iterations.max(1) as f64)
    }

    pub fn inner_trainer(&self, seed: u64) -> TrainerConfig {
        let mut cfg = self.base_trainer.clone();
        cfg.epochs = self.inner_epochs;
        cfg.seed = seed;
        if let Some(lr) = self.inner_lr {
            cfg.adam.lr = lr;
        }
        cfg
    }
}

/// Learned per-agent initialisation.
#[derive(Clone, Debug, PartialEq)]
pub struct MetaInit {
    pub nets: Vec<Mlp>,
}

impl MetaInit {
    pub fn random(shape: DatasetShape, hidden: &[usize], seed: u64) -> Result<Self> {
        let mut rng = seeded_rng(seed, "meta-init");
        let nets = (0..shape.num_agents)
            .map(|_| Mlp::new(shape.obs_dim, hidden, shape.num_actions, &mut rng))
            .collect::<Result<_>>()?;
        Ok(Self { nets })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_networks(path, &self.nets)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self {
            nets: load_networks(path)?,
        })
    }
}

/// Seed of the inner run for task slot `task` at meta-iteration `iteration`.
pub fn inner_seed(seed: u64, iteration: usize, task: usize) -> u64 {
    derive_seed(
        seed,
        "meta-inner",
        ((iteration as u64) << 32) | task as u64,
        SeedDomain::Train,
    )
}

/// `init += step * mean_k(adapted_k - init)`, parameter-wise.
pub fn reptile_update(init: &mut [Mlp], adapted: &[Vec<Mlp>], step: f64) -> Result<()> {
    if adapted.is_empty() {
        return Err(Error::contract("reptile update needs at least one adapted task"));
    }
    let k = adapted.len() as f64;
    for (i, net) in init.iter_mut().enumerate() {
        let mut flat = net.flat_params();
        let mut mean_delta = vec![0.0; flat.len()];
        for task in adapted {
            let other = task
                .get(i)
                .filter(|o| o.same_shape(net))
                .ok_or_else(|| Error::contract(format!("adapted agent {i} does not match the init")))?;
            for ((d, &p), &q) in mean_delta.iter_mut().zip(&flat).zip(&other.flat_params()) {
                *d += (q - p) / k;
            }
        }
        for (p, d) in flat.iter_mut().zip(mean_delta) {
            *p += step * d;
        }
        net.set_flat_params(&flat)?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct MetaOutcome {
    pub init: MetaInit,
    /// Mean final-epoch inner loss per meta-iteration.
    pub inner_losses: Vec<f64>,
}

pub fn meta_train(
    task_datasets: &[(TaskSpec, OfflineDataset)],
    config: &MetaConfig,
    seed: u64,
) -> Result<MetaOutcome> {
    config.validate()?;
    let first = &task_datasets
        .first()
        .ok_or_else(|| Error::contract("meta-training needs at least one task dataset"))?
        .1;
    let shape = first.shape();
    for (task, ds) in task_datasets {
        if ds.shape() != shape || ds.fingerprint() != first.fingerprint() {
            return Err(Error::contract(format!(
                "task {} dataset does not share the first task's dynamics",
                task.power_factor
            )));
        }
        if ds.task().is_some_and(|t| t != *task) {
            return Err(Error::contract(format!(
                "dataset labelled with power factor {} passed for task {}",
                ds.task().unwrap().power_factor,
                task.power_factor
            )));
        }
    }
    let mut init = MetaInit::random(shape, &config.base_trainer.hidden, seed)?;
    let mut rng = seeded_rng(seed, "meta-task-sample");
    let per_iter = config
        .tasks_per_iteration
        .unwrap_or(task_datasets.len())
        .min(task_datasets.len());
    let mut inner_losses = Vec::with_capacity(config.meta_iterations);
    for it in 0..config.meta_iterations {
        let mut chosen: Vec<usize> = if per_iter == task_datasets.len() {
            (0..per_iter).collect()
        } else {
            sample(&mut rng, task_datasets.len(), per_iter).into_vec()
        };
        chosen.sort_unstable();
        let mut adapted = Vec::with_capacity(chosen.len());
        let mut loss = 0.0;
        for (slot, &k) in chosen.iter().enumerate() {
            let cfg = config.inner_trainer(inner_seed(seed, it, slot));
            let out = train_offline(
                &task_datasets[k].1,
                &cfg,
                TrainOptions {
                    init: Some(&init.nets),
                    ..Default::default()
                },
            )
            .map_err(|e| Error::Stage {
                stage: format!("meta inner loop (task {})", task_datasets[k].0.power_factor),
                seed: cfg.seed,
                source: Box::new(e),
            })?;
            loss += out.curve.rows.last().map_or(f64::NAN, |r| r.mean_loss);
            adapted.push(out.q_nets());
        }
        reptile_update(&mut init.nets, &adapted, config.outer_step(it))?;
        inner_losses.push(loss / chosen.len() as f64);
    }
    Ok(MetaOutcome { init, inner_losses })
}

/// Ordinary offline training started from `init`.
pub fn adapt<'a>(
    init: &'a MetaInit,
    dataset: &OfflineDataset,
    adapt_epochs: usize,
    trainer: &TrainerConfig,
    options: TrainOptions<'a>,
) -> Result<TrainOutcome> {
    let cfg = TrainerConfig {
        epochs: adapt_epochs,
        ..trainer.clone()
    };
    train_offline(
        dataset,
        &cfg,
        TrainOptions {
            init: Some(&init.nets),
            ..options
        },
    )
}

/// Rewrites every reward under `task`, using the `[mean_aoi, aoi_cap,
/// step_power_w]` record stored with each UAV transition.
pub fn relabel_rewards(stream: &OfflineDataset, task: TaskSpec) -> Result<OfflineDataset> {
    if !matches!(stream.env(), EnvKind::Uav | EnvKind::Synthetic) {
        return Err(Error::contract(format!(
            "reward relabelling needs UAV experience, got {}",
            stream.env()
        )));
    }
    if stream.shape().info_dim < 3 {
        return Err(Error::Format {
            offset: 0,
            detail: format!(
                "transitions carry {} info fields; mean AoI, AoI cap and power are required",
                stream.shape().info_dim
            ),
        });
    }
    stream.with_rewards(Some(task), |tr| {
        Ok(uav_reward(tr.info[0], tr.info[1], tr.info[2], task.power_factor))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::test_support::toy_dataset;

    #[test]
    fn relabel_identity_and_zero_factor() {
        let ds = toy_dataset(20, 3);
        let same = relabel_rewards(&ds, TaskSpec { power_factor: 1.0 }).unwrap();
        let zero = relabel_rewards(&ds, TaskSpec { power_factor: 0.0 }).unwrap();
        for ((a, b), tr) in same.transitions().iter().zip(zero.transitions()).zip(ds.transitions()) {
            assert_eq!(a.reward.to_bits(), uav_reward(tr.info[0], tr.info[1], tr.info[2], 1.0).to_bits());
            assert_eq!(b.reward, -(tr.info[0] / tr.info[1]));
            assert_eq!((&a.obs, &a.actions, &a.next_obs, a.done), (&tr.obs, &tr.actions, &tr.next_obs, tr.done));
        }
        assert_eq!(zero.task().unwrap().power_factor, 0.0);
    }

    #[test]
    fn outer_step_decays_linearly() {
        let cfg = MetaConfig {
            meta_iterations: 4,
            ..Default::default()
        };
        assert_eq!(cfg.outer_step(0), 0.5);
        assert_eq!(cfg.outer_step(2), 0.25);
    }

    #[test]
    fn validate_rejects_test_in_family() {
        let cfg = MetaConfig {
            test_task: default_task_family()[2],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        MetaConfig::default().validate().unwrap();
    }

    #[test]
    fn reptile_full_step_copies_mean() {
        let mut rng = seeded_rng(0, "t");
        let a = Mlp::new(2, &[3], 2, &mut rng).unwrap();
        let b = Mlp::new(2, &[3], 2, &mut rng).unwrap();
        let c = Mlp::new(2, &[3], 2, &mut rng).unwrap();
        let mut init = vec![a];
        reptile_update(&mut init, &[vec![b.clone()], vec![c.clone()]], 1.0).unwrap();
        let expect: Vec<f64> = b.flat_params().iter().zip(c.flat_params()).map(|(x, y)| (x + y) / 2.0).collect();
        for (p, e) in init[0].flat_params().iter().zip(expect) {
            assert!((p - e).abs() < 1e-12);
        }
    }
}
