//! Cooperative, partially observable simulators.
//!
//! Both environments share one team reward per step and hand each agent a
//! local observation vector. [`Env`] wraps the concrete simulators so that
//! collectors, trainers and evaluators can stay environment-agnostic.

pub mod rrm;
pub mod uav;

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
pub use rrm::{RrmConfig, RrmEnv};
pub use uav::{UavConfig, UavEnv};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Rrm,
    Uav,
    /// Hand-built datasets that have no simulator behind them.
    Synthetic,
}

impl EnvKind {
    pub fn code(self) -> u8 {
        match self {
            EnvKind::Rrm => 0,
            EnvKind::Uav => 1,
            EnvKind::Synthetic => 255,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(EnvKind::Rrm),
            1 => Some(EnvKind::Uav),
            255 => Some(EnvKind::Synthetic),
            _ => None,
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EnvKind::Rrm => "rrm",
            EnvKind::Uav => "uav",
            EnvKind::Synthetic => "synthetic",
        })
    }
}

/// SHA-256 over the canonical JSON encoding of an environment's dynamics.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fingerprint(pub [u8; 32]);

impl Fingerprint {
    pub fn of_json(value: &serde_json::Value) -> Self {
        let canonical = serde_json::to_vec(value).expect("json values always serialise");
        let mut out = [0u8; 32];
        out.copy_from_slice(&Sha256::digest(&canonical));
        Fingerprint(out)
    }

    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl fmt::Debug for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fingerprint({})", &self.to_hex()[..16])
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex()[..16])
    }
}

/// Result of one joint step.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub observations: Vec<Vec<f64>>,
    pub reward: f64,
    pub done: bool,
    /// Flat per-step record kept alongside dataset transitions. RRM: per-UE
    /// rates (bit/s) followed by the served PF factor of each AP. UAV:
    /// `[mean_aoi, aoi_cap, step_power_w]`.
    pub info: Vec<f64>,
}

pub trait MultiAgentEnv {
    fn num_agents(&self) -> usize;
    fn obs_dim(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn episode_len(&self) -> usize;
    fn reset(&mut self, seed: u64) -> Vec<Vec<f64>>;
    fn step(&mut self, joint_action: &[usize]) -> Result<Step>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EnvConfig {
    Rrm(RrmConfig),
    Uav(UavConfig),
}

impl EnvConfig {
    pub fn kind(&self) -> EnvKind {
        match self {
            EnvConfig::Rrm(_) => EnvKind::Rrm,
            EnvConfig::Uav(_) => EnvKind::Uav,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EnvConfig::Rrm(c) => c.validate(),
            EnvConfig::Uav(c) => c.validate(),
        }
    }

    /// Identifies the dynamics. The UAV power factor only shapes the reward
    /// and is carried by the dataset's task instead.
    pub fn fingerprint(&self) -> Fingerprint {
        match self {
            EnvConfig::Rrm(c) => c.fingerprint(),
            EnvConfig::Uav(c) => c.fingerprint(),
        }
    }

    pub fn build(&self) -> Result<Env> {
        Ok(match self {
            EnvConfig::Rrm(c) => Env::Rrm(RrmEnv::new(c.clone())?),
            EnvConfig::Uav(c) => Env::Uav(UavEnv::new(c.clone())?),
        })
    }

    pub fn num_agents(&self) -> usize {
        match self {
            EnvConfig::Rrm(c) => c.num_aps,
            EnvConfig::Uav(c) => c.num_uavs,
        }
    }

    pub fn obs_dim(&self) -> usize {
        match self {
            EnvConfig::Rrm(c) => 2 * c.top_k,
            EnvConfig::Uav(c) => 2 + c.num_devices,
        }
    }

    pub fn num_actions(&self) -> usize {
        match self {
            EnvConfig::Rrm(c) => c.top_k,
            EnvConfig::Uav(c) => uav::NUM_DIRECTIONS * c.num_devices,
        }
    }

    pub fn episode_len(&self) -> usize {
        match self {
            EnvConfig::Rrm(c) => c.episode_len,
            EnvConfig::Uav(c) => c.episode_len,
        }
    }

    pub fn as_uav(&self) -> Option<&UavConfig> {
        match self {
            EnvConfig::Uav(c) => Some(c),
            _ => None,
        }
    }

    pub fn as_rrm(&self) -> Option<&RrmConfig> {
        match self {
            EnvConfig::Rrm(c) => Some(c),
            _ => None,
        }
    }
}

pub enum Env {
    Rrm(RrmEnv),
    Uav(UavEnv),
}

impl Env {
    pub fn kind(&self) -> EnvKind {
        match self {
            Env::Rrm(_) => EnvKind::Rrm,
            Env::Uav(_) => EnvKind::Uav,
        }
    }

    fn inner(&self) -> &dyn MultiAgentEnv {
        match self {
            Env::Rrm(e) => e,
            Env::Uav(e) => e,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn MultiAgentEnv {
        match self {
            Env::Rrm(e) => e,
            Env::Uav(e) => e,
        }
    }
}

impl MultiAgentEnv for Env {
    fn num_agents(&self) -> usize {
        self.inner().num_agents()
    }
    fn obs_dim(&self) -> usize {
        self.inner().obs_dim()
    }
    fn num_actions(&self) -> usize {
        self.inner().num_actions()
    }
    fn episode_len(&self) -> usize {
        self.inner().episode_len()
    }
    fn reset(&mut self, seed: u64) -> Vec<Vec<f64>> {
        self.inner_mut().reset(seed)
    }
    fn step(&mut self, joint_action: &[usize]) -> Result<Step> {
        self.inner_mut().step(joint_action)
    }
}

pub(crate) fn check_joint_action(
    joint_action: &[usize],
    num_agents: usize,
    num_actions: usize,
) -> Result<()> {
    if joint_action.len() != num_agents {
        return Err(Error::contract(format!(
            "joint action has {} entries for {num_agents} agents",
            joint_action.len()
        )));
    }
    if let Some((agent, &a)) = joint_action
        .iter()
        .enumerate()
        .find(|(_, &a)| a >= num_actions)
    {
        return Err(Error::contract(format!(
            "agent {agent}: action {a} outside [0, {num_actions})"
        )));
    }
    Ok(())
}

pub(crate) fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}
