//! Non-learning reference controllers and the adapter that runs learned
//! greedy policies through the same interface.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::uav::{Direction, UavAction, UavEnv};
use crate::env::{Env, MultiAgentEnv};
use crate::error::{Error, Result};
use crate::rng::{seeded_rng, StreamRng};
use crate::trainers::AgentPolicy;

/// Picks a joint action each step. `begin_episode` is called right after
/// the environment has been reset.
pub trait Controller {
    fn name(&self) -> String;
    fn begin_episode(&mut self, env: &Env, episode_seed: u64) -> Result<()>;
    fn act(&mut self, env: &Env, obs: &[Vec<f64>]) -> Result<Vec<usize>>;
}

/// RRM: always the top-ranked slot.
pub fn full_reuse(_obs: &[f64]) -> usize {
    0
}

/// RRM: cycles through the ranked slots.
pub fn round_robin(step: usize, top_k: usize) -> usize {
    step % top_k
}

pub fn random_walk<R: Rng + ?Sized>(action_space: usize, rng: &mut R) -> usize {
    rng.random_range(0..action_space)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    FullReuse,
    RoundRobin,
    RandomWalk,
    DeterministicTour,
}

impl BaselineKind {
    pub fn build(self) -> Box<dyn Controller + Send> {
        match self {
            BaselineKind::FullReuse => Box::new(FullReuse),
            BaselineKind::RoundRobin => Box::new(RoundRobin::default()),
            BaselineKind::RandomWalk => Box::new(RandomWalk::default()),
            BaselineKind::DeterministicTour => Box::new(DeterministicTour::default()),
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaselineKind::FullReuse => "full_reuse",
            BaselineKind::RoundRobin => "round_robin",
            BaselineKind::RandomWalk => "random_walk",
            BaselineKind::DeterministicTour => "deterministic",
        })
    }
}

impl FromStr for BaselineKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full_reuse" => Ok(BaselineKind::FullReuse),
            "round_robin" => Ok(BaselineKind::RoundRobin),
            "random_walk" => Ok(BaselineKind::RandomWalk),
            "deterministic" | "deterministic_tour" => Ok(BaselineKind::DeterministicTour),
            other => Err(Error::config(format!("unknown baseline `{other}`"))),
        }
    }
}

fn rrm_only(env: &Env, who: &str) -> Result<()> {
    match env {
        Env::Rrm(_) => Ok(()),
        _ => Err(Error::contract(format!("{who} is an RRM scheduler"))),
    }
}

#[derive(Clone, Debug, Default)]
pub struct FullReuse;

impl Controller for FullReuse {
    fn name(&self) -> String {
        "full_reuse".into()
    }
    fn begin_episode(&mut self, env: &Env, _: u64) -> Result<()> {
        rrm_only(env, "full_reuse")
    }
    fn act(&mut self, _env: &Env, obs: &[Vec<f64>]) -> Result<Vec<usize>> {
        Ok(obs.iter().map(|o| full_reuse(o)).collect())
    }
}

#[derive(Clone, Debug, Default)]
pub struct RoundRobin {
    step: usize,
}

impl Controller for RoundRobin {
    fn name(&self) -> String {
        "round_robin".into()
    }
    fn begin_episode(&mut self, env: &Env, _: u64) -> Result<()> {
        self.step = 0;
        rrm_only(env, "round_robin")
    }
    fn act(&mut self, env: &Env, obs: &[Vec<f64>]) -> Result<Vec<usize>> {
        let slot = round_robin(self.step, env.num_actions());
        self.step += 1;
        Ok(vec![slot; obs.len()])
    }
}

/// Uniform random actions, reseeded at every episode.
#[derive(Clone, Debug, Default)]
pub struct RandomWalk {
    rng: Option<StreamRng>,
}

impl Controller for RandomWalk {
    fn name(&self) -> String {
        "random_walk".into()
    }
    fn begin_episode(&mut self, _env: &Env, episode_seed: u64) -> Result<()> {
        self.rng = Some(seeded_rng(episode_seed, "random-walk"));
        Ok(())
    }
    fn act(&mut self, env: &Env, obs: &[Vec<f64>]) -> Result<Vec<usize>> {
        let rng = self
            .rng
            .as_mut()
            .ok_or_else(|| Error::contract("random_walk used before begin_episode"))?;
        Ok((0..obs.len()).map(|_| random_walk(env.num_actions(), rng)).collect())
    }
}

/// UAV: each UAV loops over a nearest-neighbour tour of the devices closest
/// to it, stepping one cell towards the current target (rows first) and
/// always selecting that target.
#[derive(Clone, Debug, Default)]
pub struct DeterministicTour {
    plans: Vec<Vec<usize>>,
    cursor: Vec<usize>,
}

fn manhattan(a: (usize, usize), b: (usize, usize)) -> usize {
    a.0.abs_diff(b.0) + a.1.abs_diff(b.1)
}

impl DeterministicTour {
    pub fn plan(&self, uav: usize) -> &[usize] {
        &self.plans[uav]
    }

    /// Device the UAV is currently heading for.
    pub fn current_target(&self, uav: usize) -> usize {
        let plan = &self.plans[uav];
        plan[self.cursor[uav] % plan.len()]
    }

    pub fn build_plans(env: &UavEnv) -> Vec<Vec<usize>> {
        let state = env.state();
        let n_uav = state.uav_cells.len();
        let n_dev = state.device_positions.len();
        let mut assigned = vec![Vec::new(); n_uav];
        for d in 0..n_dev {
            let owner = (0..n_uav)
                .min_by(|&a, &b| {
                    env.distance_3d(state.uav_cells[a], d)
                        .total_cmp(&env.distance_3d(state.uav_cells[b], d))
                })
                .expect("at least one UAV");
            assigned[owner].push(d);
        }
        assigned
            .into_iter()
            .enumerate()
            .map(|(u, mut left)| {
                if left.is_empty() {
                    // nothing nearby: keep serving the globally closest device
                    let d = (0..n_dev)
                        .min_by(|&a, &b| {
                            env.distance_3d(state.uav_cells[u], a)
                                .total_cmp(&env.distance_3d(state.uav_cells[u], b))
                        })
                        .expect("at least one device");
                    return vec![d];
                }
                let mut tour = Vec::with_capacity(left.len());
                let mut here = state.uav_cells[u];
                while !left.is_empty() {
                    let (pos, &d) = left
                        .iter()
                        .enumerate()
                        .min_by_key(|&(_, &d)| (manhattan(here, env.device_cell(d)), d))
                        .expect("non-empty");
                    left.swap_remove(pos);
                    here = env.device_cell(d);
                    tour.push(d);
                }
                tour
            })
            .collect()
    }
}

fn uav_env<'a>(env: &'a Env, who: &str) -> Result<&'a UavEnv> {
    match env {
        Env::Uav(u) => Ok(u),
        _ => Err(Error::contract(format!("{who} needs the UAV environment"))),
    }
}

impl Controller for DeterministicTour {
    fn name(&self) -> String {
        "deterministic".into()
    }

    fn begin_episode(&mut self, env: &Env, _: u64) -> Result<()> {
        let u = uav_env(env, "deterministic tour")?;
        self.plans = Self::build_plans(u);
        self.cursor = vec![0; self.plans.len()];
        Ok(())
    }

    fn act(&mut self, env: &Env, _obs: &[Vec<f64>]) -> Result<Vec<usize>> {
        let u = uav_env(env, "deterministic tour")?;
        if self.plans.is_empty() {
            return Err(Error::contract("deterministic tour used before begin_episode"));
        }
        let n_dev = u.config().num_devices;
        let mut out = Vec::with_capacity(self.plans.len());
        for (k, &cell) in u.state().uav_cells.iter().enumerate() {
            let target = self.current_target(k);
            let goal = u.device_cell(target);
            let direction = if goal.0 > cell.0 {
                Direction::North
            } else if goal.0 < cell.0 {
                Direction::South
            } else if goal.1 > cell.1 {
                Direction::East
            } else if goal.1 < cell.1 {
                Direction::West
            } else {
                self.cursor[k] += 1;
                Direction::Hover
            };
            out.push(
                UavAction {
                    direction,
                    device: target,
                }
                .encode(n_dev),
            );
        }
        Ok(out)
    }
}

/// Decentralised greedy execution of learned per-agent policies.
#[derive(Clone, Debug)]
pub struct LearnedController {
    pub name: String,
    pub policies: Vec<AgentPolicy>,
}

impl Controller for LearnedController {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn begin_episode(&mut self, env: &Env, _: u64) -> Result<()> {
        if self.policies.len() != env.num_agents() {
            return Err(Error::contract(format!(
                "{} policies for {} agents",
                self.policies.len(),
                env.num_agents()
            )));
        }
        for (i, p) in self.policies.iter().enumerate() {
            if p.q_net.in_dim() != env.obs_dim() || p.q_net.out_dim() != env.num_actions() {
                return Err(Error::contract(format!(
                    "agent {i}: checkpoint maps {} -> {}, environment needs {} -> {}",
                    p.q_net.in_dim(),
                    p.q_net.out_dim(),
                    env.obs_dim(),
                    env.num_actions()
                )));
            }
        }
        Ok(())
    }

    fn act(&mut self, _env: &Env, obs: &[Vec<f64>]) -> Result<Vec<usize>> {
        self.policies.iter().zip(obs).map(|(p, o)| p.act(o)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvConfig, RrmConfig, UavConfig};

    #[test]
    fn round_robin_cycle() {
        let slots: Vec<usize> = (0..4).map(|s| round_robin(s, 3)).collect();
        assert_eq!(slots, vec![0, 1, 2, 0]);
    }

    #[test]
    fn random_walk_size_one() {
        let mut rng = seeded_rng(3, "x");
        assert!((0..100).all(|_| random_walk(1, &mut rng) == 0));
    }

    #[test]
    fn kinds_parse() {
        for k in [
            BaselineKind::FullReuse,
            BaselineKind::RoundRobin,
            BaselineKind::RandomWalk,
            BaselineKind::DeterministicTour,
        ] {
            assert_eq!(k.to_string().parse::<BaselineKind>().unwrap(), k);
        }
    }

    #[test]
    fn rrm_baselines_reject_uav() {
        let mut env = EnvConfig::Uav(UavConfig::default()).build().unwrap();
        env.reset(1);
        assert!(FullReuse.begin_episode(&env, 1).is_err());
        let mut env = EnvConfig::Rrm(RrmConfig::default()).build().unwrap();
        env.reset(1);
        assert!(DeterministicTour::default().begin_episode(&env, 1).is_err());
    }
}
