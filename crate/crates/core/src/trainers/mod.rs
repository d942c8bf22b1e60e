//! Offline multi-agent learners: offline DQN, CQL (independent or with an
//! additive team value), discrete BCQ and behaviour cloning.

mod batch;
mod learner;
mod loss;
mod offline;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{AdamConfig, DEFAULT_HIDDEN};

pub use batch::Batch;
pub use learner::{greedy_action, AgentLearner, AgentPolicy, BehaviorModel};
pub use loss::{
    bootstrap_values, cql_penalty, loss_and_grads, q_total, td_targets, AgentLoss, Bootstrap,
    BatchLoss, Targets,
};
pub use offline::{
    fit_behavior, init_learners, train_offline, update_step, CurveRow, EpochHook, TrainOptions,
    TrainOutcome, TrainingCurve,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Dqn,
    Cql,
    Bcq,
    Bc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Independent,
    Ctde,
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algo::Dqn => "dqn",
            Algo::Cql => "cql",
            Algo::Bcq => "bcq",
            Algo::Bc => "bc",
        })
    }
}

impl FromStr for Algo {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dqn" => Ok(Algo::Dqn),
            "cql" => Ok(Algo::Cql),
            "bcq" => Ok(Algo::Bcq),
            "bc" => Ok(Algo::Bc),
            other => Err(Error::config(format!("unknown algorithm `{other}`"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Independent => "independent",
            Mode::Ctde => "ctde",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "independent" => Ok(Mode::Independent),
            "ctde" => Ok(Mode::Ctde),
            other => Err(Error::config(format!("unknown execution mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerConfig {
    pub algo: Algo,
    pub mode: Mode,
    pub cql_alpha: f64,
    pub bcq_tau: f64,
    pub gamma: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Hard target copy every this many updates.
    pub target_sync_every: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    pub huber_delta: f64,
    pub hidden: Vec<usize>,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            algo: Algo::Cql,
            mode: Mode::Ctde,
            cql_alpha: 5.0,
            bcq_tau: 0.3,
            gamma: 0.99,
            batch_size: 64,
            epochs: 50,
            target_sync_every: 500,
            seed: 0,
            adam: AdamConfig::default(),
            huber_delta: 1.0,
            hidden: DEFAULT_HIDDEN.to_vec(),
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::config(format!("trainer: {what}")));
        if !(self.cql_alpha >= 0.0 && self.cql_alpha.is_finite()) {
            return bad("cql_alpha must be finite and >= 0");
        }
        if !(self.bcq_tau > 0.0 && self.bcq_tau <= 1.0) {
            return bad("bcq_tau must lie in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.target_sync_every == 0 {
            return bad("target_sync_every must be positive");
        }
        if !(self.adam.lr > 0.0 && self.adam.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.huber_delta.is_nan() || self.huber_delta <= 0.0 {
            return bad("huber_delta must be positive");
        }
        if self.hidden.contains(&0) {
            return bad("hidden widths must be positive");
        }
        Ok(())
    }

    /// Short scheme label such as `ctde-cql` or `i-dqn`.
    pub fn scheme_name(&self) -> String {
        let prefix = match self.mode {
            Mode::Independent => "i",
            Mode::Ctde => "ctde",
        };
        format!("{prefix}-{}", self.algo)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        TrainerConfig::default().validate().unwrap();
        let cfg = TrainerConfig {
            gamma: 1.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = TrainerConfig {
            bcq_tau: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn names_roundtrip() {
        for a in [Algo::Dqn, Algo::Cql, Algo::Bcq, Algo::Bc] {
            assert_eq!(a.to_string().parse::<Algo>().unwrap(), a);
        }
        for m in [Mode::Independent, Mode::Ctde] {
            assert_eq!(m.to_string().parse::<Mode>().unwrap(), m);
        }
        assert!("sac".parse::<Algo>().is_err());
        let cfg = TrainerConfig::default();
        assert_eq!(cfg.scheme_name(), "ctde-cql");
    }

    #[test]
    fn toml_partial_config() {
        let cfg: TrainerConfig = toml::from_str("algo = \"bcq\"\nmode = \"independent\"\nepochs = 3\n").unwrap();
        assert_eq!(cfg.algo, Algo::Bcq);
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.cql_alpha, 5.0);
    }
}
