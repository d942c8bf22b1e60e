use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::BehaviorConfig;
use crate::env::uav::default_task_family;
use crate::env::{EnvConfig, RrmConfig, UavConfig};
use crate::error::{Error, Result};
use crate::meta::MetaConfig;
use crate::nn::AdamConfig;
use crate::trainers::{Algo, Mode, TrainerConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalePreset {
    Paper,
    #[default]
    Desk,
}

impl FromStr for ScalePreset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(ScalePreset::Paper),
            "desk" => Ok(ScalePreset::Desk),
            other => Err(Error::config(format!("unknown scale preset `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FigureId {
    Fig3,
    Fig4,
    Fig5,
}

impl fmt::Display for FigureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FigureId::Fig3 => "fig3",
            FigureId::Fig4 => "fig4",
            FigureId::Fig5 => "fig5",
        })
    }
}

impl FromStr for FigureId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig3" => Ok(FigureId::Fig3),
            "fig4" => Ok(FigureId::Fig4),
            "fig5" => Ok(FigureId::Fig5),
            other => Err(Error::config(format!("unknown figure `{other}`"))),
        }
    }
}

/// Everything a figure run needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FigureRecipe {
    pub figure: FigureId,
    pub env: EnvConfig,
    pub behavior: BehaviorConfig,
    pub trainer: TrainerConfig,
    /// Share of the collected stream kept for offline training.
    pub fraction: f64,
    pub eval_episodes: usize,
    pub eval_every: usize,
    pub seeds: Vec<u64>,
    /// Power factors swept by fig4.
    pub power_factors: Vec<f64>,
    /// fig5 meta-learning settings.
    pub meta: MetaConfig,
    /// fig5 share of the stream available for the held-out task.
    pub test_fraction: f64,
}

impl FigureRecipe {
    pub fn preset(figure: FigureId, scale: ScalePreset) -> Self {
        let rrm = match scale {
            ScalePreset::Paper => RrmConfig::default(),
            ScalePreset::Desk => RrmConfig {
                area_side_m: 2500.0,
                num_aps: 2,
                num_ues: 8,
                episode_len: 200,
                ..RrmConfig::default()
            },
        };
        let uav = match scale {
            ScalePreset::Paper => UavConfig::default(),
            ScalePreset::Desk => UavConfig {
                area_side_m: 800.0,
                grid_cells: 8,
                num_uavs: 2,
                num_devices: 6,
                episode_len: 60,
                aoi_cap: Some(10),
                ..UavConfig::default()
            },
        };
        let env = match figure {
            FigureId::Fig3 => EnvConfig::Rrm(rrm),
            FigureId::Fig4 | FigureId::Fig5 => EnvConfig::Uav(uav),
        };
        let desk = scale == ScalePreset::Desk;
        let rrm_fig = figure == FigureId::Fig3;
        let behavior = BehaviorConfig {
            episodes: match (rrm_fig, desk) {
                (true, true) => 60,
                (false, true) => 150,
                (true, false) => 100,
                (false, false) => 500,
            },
            // polling rewards are short-horizon; a long discount only adds
            // bootstrap noise to the behaviour learner
            gamma: if rrm_fig { 0.99 } else { 0.5 },
            train_every: if rrm_fig { 4 } else { 1 },
            ..BehaviorConfig::default()
        };
        let trainer = TrainerConfig {
            algo: Algo::Cql,
            mode: Mode::Ctde,
            cql_alpha: if desk { 1.0 } else { TrainerConfig::default().cql_alpha },
            gamma: match (rrm_fig, desk) {
                (_, false) => TrainerConfig::default().gamma,
                (true, true) => 0.9,
                (false, true) => 0.5,
            },
            epochs: if desk { 30 } else { 100 },
            adam: AdamConfig {
                lr: if desk { 1e-3 } else { 1e-4 },
                ..AdamConfig::default()
            },
            ..TrainerConfig::default()
        };
        let meta = MetaConfig {
            base_trainer: trainer.clone(),
            meta_iterations: if desk { 10 } else { 50 },
            ..MetaConfig::default()
        };
        Self {
            figure,
            env,
            behavior,
            trainer,
            fraction: 0.2,
            eval_episodes: if desk { 50 } else { 100 },
            eval_every: if desk { 5 } else { 10 },
            seeds: vec![0, 1, 2],
            power_factors: default_task_family()
                .iter()
                .step_by(2)
                .map(|t| t.power_factor)
                .collect(),
            meta,
            test_fraction: 0.05,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.behavior.validate()?;
        self.trainer.validate()?;
        if !(self.fraction > 0.0 && self.fraction <= 1.0) || !(self.test_fraction > 0.0 && self.test_fraction <= 1.0) {
            return Err(Error::config("dataset fractions must lie in (0, 1]"));
        }
        if self.eval_episodes == 0 || self.seeds.is_empty() {
            return Err(Error::config("need at least one seed and one evaluation episode"));
        }
        let uav = matches!(self.env, EnvConfig::Uav(_));
        match self.figure {
            FigureId::Fig3 if uav => Err(Error::config("fig3 runs on the RRM environment")),
            FigureId::Fig4 | FigureId::Fig5 if !uav => Err(Error::config(format!("{} runs on the UAV environment", self.figure))),
            FigureId::Fig4 if self.power_factors.is_empty() => Err(Error::config("fig4 needs power factors")),
            FigureId::Fig5 => self.meta.validate(),
            _ => Ok(()),
        }
    }
}

/// Structured-text experiment file. Every field is optional; missing ones
/// come from the scale preset of the chosen figure.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: ScalePreset,
    pub figure: Option<FigureId>,
    pub env: Option<EnvConfig>,
    pub behavior: Option<BehaviorConfig>,
    pub trainer: Option<TrainerConfig>,
    pub meta: Option<MetaConfig>,
    pub fraction: Option<f64>,
    pub eval_episodes: Option<usize>,
    pub eval_every: Option<usize>,
    pub seeds: Option<Vec<u64>>,
    pub power_factors: Option<Vec<f64>>,
    pub test_fraction: Option<f64>,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        // an unreadable experiment file is a configuration problem, not a data one
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    pub fn recipe(&self, figure: FigureId) -> Result<FigureRecipe> {
        let mut r = FigureRecipe::preset(figure, self.preset);
        if let Some(v) = &self.env {
            r.env = v.clone();
        }
        if let Some(v) = &self.behavior {
            r.behavior = v.clone();
        }
        if let Some(v) = &self.trainer {
            r.trainer = v.clone();
            r.meta.base_trainer = v.clone();
        }
        if let Some(v) = &self.meta {
            r.meta = v.clone();
        }
        if let Some(v) = self.fraction {
            r.fraction = v;
        }
        if let Some(v) = self.eval_episodes {
            r.eval_episodes = v;
        }
        if let Some(v) = self.eval_every {
            r.eval_every = v;
        }
        if let Some(v) = &self.seeds {
            r.seeds = v.clone();
        }
        if let Some(v) = &self.power_factors {
            r.power_factors = v.clone();
        }
        if let Some(v) = self.test_fraction {
            r.test_fraction = v;
        }

        r.validate()?;
        Ok(r)
    }

    /// Figure chosen in the file, else fig3 (RRM) or fig4 (UAV) from the
    /// environment kind.
    pub fn default_figure(&self) -> FigureId {
        self.figure.unwrap_or(match self.env {
            Some(EnvConfig::Uav(_)) => FigureId::Fig4,
            _ => FigureId::Fig3,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for f in [FigureId::Fig3, FigureId::Fig4, FigureId::Fig5] {
            for s in [ScalePreset::Desk, ScalePreset::Paper] {
                FigureRecipe::preset(f, s).validate().unwrap();
            }
        }
        let r = FigureRecipe::preset(FigureId::Fig3, ScalePreset::Desk);
        let rrm = r.env.as_rrm().unwrap();
        assert_eq!((rrm.num_aps, rrm.num_ues, rrm.episode_len), (2, 8, 200));
        assert_eq!((r.eval_episodes, r.seeds.len()), (50, 3));
        let u = FigureRecipe::preset(FigureId::Fig4, ScalePreset::Desk);
        let uav = u.env.as_uav().unwrap();
        assert_eq!((uav.num_uavs, uav.num_devices, uav.grid_cells, uav.episode_len), (2, 6, 8, 60));
    }

    #[test]
    fn toml_overrides() {
        let cfg: ExperimentConfig = toml::from_str(
            "preset = \"desk\"\nseeds = [7]\neval_episodes = 3\n[env]\nkind = \"rrm\"\nnum_aps = 2\nnum_ues = 6\nepisode_len = 10\n",
        )
        .unwrap();
        let r = cfg.recipe(cfg.default_figure()).unwrap();
        assert_eq!(r.seeds, vec![7]);
        assert_eq!(r.env.episode_len(), 10);
        assert!(toml::from_str::<ExperimentConfig>("bogus = 1").is_err());
    }

    #[test]
    fn wrong_env_for_figure() {
        let cfg = ExperimentConfig {
            env: Some(EnvConfig::Rrm(RrmConfig::default())),
            ..Default::default()
        };
        assert!(cfg.recipe(FigureId::Fig4).is_err());
    }
}
