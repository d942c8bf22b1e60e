//! Experiment orchestration: evaluation protocol, metric aggregation,
//! CSV output and the figure recipes.

mod config;
mod figures;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{Controller, LearnedController};
use crate::env::{Env, EnvConfig, MultiAgentEnv};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, SeedDomain};
use crate::trainers::{AgentLearner, EpochHook, TrainerConfig};

pub use config::{ExperimentConfig, FigureId, FigureRecipe, ScalePreset};
pub use figures::{run_figure, FigureReport, Point};

/// Evaluation episode seeds for a master seed. They carry the evaluation
/// bit, so they never coincide with collection or training seeds.
pub fn eval_seeds(master: u64, episodes: usize) -> Vec<u64> {
    (0..episodes as u64)
        .map(|i| derive_seed(master, "eval-episode", i, SeedDomain::Eval))
        .collect()
}

/// Worker pool bounded by `OMRL_WORKERS` (default: available cores).
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let n = match std::env::var("OMRL_WORKERS") {
        Ok(v) => v
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::config(format!("OMRL_WORKERS must be a positive integer, got `{v}`")))?,
        Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Rscore,
    MeanAoi,
    TotalPowerW,
    AvgReward,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Rscore => "rscore",
            Metric::MeanAoi => "mean_aoi",
            Metric::TotalPowerW => "total_power_w",
            Metric::AvgReward => "avg_reward",
        }
    }

    /// Metric plotted against epochs for an environment.
    pub fn headline(env: &EnvConfig) -> Self {
        match env {
            EnvConfig::Rrm(_) => Metric::Rscore,
            EnvConfig::Uav(_) => Metric::AvgReward,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [Metric::Rscore, Metric::MeanAoi, Metric::TotalPowerW, Metric::AvgReward]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config(format!("unknown metric `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeMetrics {
    pub seed: u64,
    pub steps: usize,
    /// Mean per-step team reward.
    pub avg_reward: f64,
    /// RRM only.
    pub rscore: Option<f64>,
    /// RRM only: per-UE mean rate over the episode.
    pub mean_rates: Option<Vec<f64>>,
    /// UAV only: per-step mean AoI averaged over the episode.
    pub mean_aoi: Option<f64>,
    /// UAV only: device transmit power summed over the episode.
    pub total_power_w: Option<f64>,
}

impl EpisodeMetrics {
    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Rscore => self.rscore,
            Metric::MeanAoi => self.mean_aoi,
            Metric::TotalPowerW => self.total_power_w,
            Metric::AvgReward => Some(self.avg_reward),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Aggregate {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub count: usize,
}

impl Aggregate {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self {
            mean,
            std: var.sqrt(),
            count: values.len(),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub scheme: String,
    pub episodes: Vec<EpisodeMetrics>,
    pub metrics: BTreeMap<Metric, Aggregate>,
}

impl EvalReport {
    pub fn mean(&self, metric: Metric) -> Option<f64> {
        self.metrics.get(&metric).map(|a| a.mean)
    }
}

/// Runs one greedy episode from `seed`.
pub fn run_episode(env: &mut Env, controller: &mut dyn Controller, seed: u64) -> Result<EpisodeMetrics> {
    let mut obs = env.reset(seed);
    controller.begin_episode(env, seed)?;
    let mut reward_sum = 0.0;
    let mut aoi_sum = 0.0;
    let mut power = 0.0;
    let mut steps = 0usize;
    loop {
        let actions = controller.act(env, &obs)?;
        let step = env.step(&actions)?;
        reward_sum += step.reward;
        if let Env::Uav(_) = env {
            aoi_sum += step.info[0];
            power += step.info[2];
        }
        steps += 1;
        obs = step.observations;
        if step.done {
            break;
        }
    }
    let n = steps as f64;
    let (rscore, mean_rates, mean_aoi, total_power_w) = match env {
        Env::Rrm(r) => (Some(r.episode_rscore()), Some(r.episode_mean_rates()), None, None),
        Env::Uav(_) => (None, None, Some(aoi_sum / n), Some(power)),
    };
    Ok(EpisodeMetrics {
        seed,
        steps,
        avg_reward: reward_sum / n,
        rscore,
        mean_rates,
        mean_aoi,
        total_power_w,
    })
}

/// Greedy evaluation over the given episode seeds in a fresh environment.
pub fn evaluate(controller: &mut dyn Controller, env_config: &EnvConfig, seeds: &[u64]) -> Result<EvalReport> {
    if seeds.is_empty() {
        return Err(Error::contract("evaluation needs at least one episode"));
    }
    let mut env = env_config.build()?;
    let episodes = seeds
        .iter()
        .map(|&s| run_episode(&mut env, controller, s))
        .collect::<Result<Vec<_>>>()?;
    let mut metrics = BTreeMap::new();
    for m in [Metric::Rscore, Metric::MeanAoi, Metric::TotalPowerW, Metric::AvgReward] {
        let values: Vec<f64> = episodes.iter().filter_map(|e| e.get(m)).collect();
        if let Some(a) = Aggregate::of(&values) {
            metrics.insert(m, a);
        }
    }
    Ok(EvalReport {
        scheme: controller.name(),
        episodes,
        metrics,
    })
}

/// One CSV row: a metric value for a scheme, seed and epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub scheme: String,
    pub seed: u64,
    pub epoch: usize,
    pub metric: Metric,
    pub value: f64,
}

impl MetricsRow {
    pub fn from_report(scheme: &str, seed: u64, epoch: usize, report: &EvalReport) -> Vec<Self> {
        report
            .metrics
            .iter()
            .map(|(&metric, agg)| MetricsRow {
                scheme: scheme.to_owned(),
                seed,
                epoch,
                metric,
                value: agg.mean,
            })
            .collect()
    }
}

pub fn write_rows<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Epoch hook that evaluates the current greedy policies every `every`
/// epochs (and after the last one) in a separate environment.
pub struct PeriodicEval<'a> {
    pub env: &'a EnvConfig,
    pub seeds: Vec<u64>,
    pub every: usize,
    pub last_epoch: usize,
    pub scheme: String,
    pub reports: Vec<(usize, EvalReport)>,
}

impl<'a> PeriodicEval<'a> {
    pub fn new(env: &'a EnvConfig, seeds: Vec<u64>, every: usize, last_epoch: usize, scheme: &str) -> Self {
        Self {
            env,
            seeds,
            every: every.max(1),
            last_epoch,
            scheme: scheme.to_owned(),
            reports: Vec::new(),
        }
    }

    pub fn evaluate_now(&mut self, epoch: usize, learners: &[AgentLearner], bcq_tau: f64) -> Result<f64> {
        let mut ctrl = LearnedController {
            name: self.scheme.clone(),
            policies: learners.iter().map(|l| l.policy(bcq_tau)).collect(),
        };
        let report = evaluate(&mut ctrl, self.env, &self.seeds)?;
        let score = report
            .mean(Metric::headline(self.env))
            .expect("headline metric is always reported");
        self.reports.push((epoch, report));
        Ok(score)
    }
}

impl EpochHook for PeriodicEval<'_> {
    fn after_epoch(
        &mut self,
        epoch: usize,
        learners: &[AgentLearner],
        config: &TrainerConfig,
    ) -> Result<Option<f64>> {
        if epoch.is_multiple_of(self.every) || epoch == self.last_epoch {
            Ok(Some(self.evaluate_now(epoch, learners, config.bcq_tau)?))
        } else {
            Ok(None)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::BaselineKind;
    use crate::env::RrmConfig;

    #[test]
    fn aggregate_single_value() {
        let a = Aggregate::of(&[3.5]).unwrap();
        assert_eq!((a.mean, a.std, a.count), (3.5, 0.0, 1));
        assert!(Aggregate::of(&[]).is_none());
    }

    #[test]
    fn eval_seed_domain() {
        let s = eval_seeds(4, 10);
        assert!(s.iter().all(|&x| crate::rng::is_eval_seed(x)));
        let mut d = s.clone();
        d.dedup();
        assert_eq!(d.len(), 10);
    }

    #[test]
    fn random_walk_eval_is_deterministic() {
        let cfg = EnvConfig::Rrm(RrmConfig {
            num_aps: 2,
            num_ues: 6,
            episode_len: 30,
            ..RrmConfig::default()
        });
        let seeds = eval_seeds(1, 3);
        let a = evaluate(BaselineKind::RandomWalk.build().as_mut(), &cfg, &seeds).unwrap();
        let b = evaluate(BaselineKind::RandomWalk.build().as_mut(), &cfg, &seeds).unwrap();
        assert_eq!(a, b);
        let one = evaluate(BaselineKind::RandomWalk.build().as_mut(), &cfg, &seeds[..1]).unwrap();
        assert_eq!(one.mean(Metric::Rscore), one.episodes[0].rscore);
    }

    #[test]
    fn metric_names() {
        assert_eq!("total_power_w".parse::<Metric>().unwrap(), Metric::TotalPowerW);
        assert!("reward".parse::<Metric>().is_err());
    }
}
