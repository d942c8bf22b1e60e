#![allow(dead_code)]

use omrl::dataset::{collect_online, BehaviorConfig, OfflineDataset};
use omrl::env::{EnvConfig, RrmConfig, UavConfig};
use omrl::trainers::TrainerConfig;

pub fn tiny_uav() -> EnvConfig {
    EnvConfig::Uav(UavConfig {
        area_side_m: 500.0,
        grid_cells: 5,
        num_uavs: 2,
        num_devices: 4,
        episode_len: 30,
        aoi_cap: Some(8),
        ..UavConfig::default()
    })
}

pub fn tiny_rrm() -> EnvConfig {
    EnvConfig::Rrm(RrmConfig {
        num_aps: 2,
        num_ues: 6,
        episode_len: 30,
        ..RrmConfig::default()
    })
}

pub fn tiny_behavior(episodes: usize) -> BehaviorConfig {
    BehaviorConfig {
        episodes,
        warmup_steps: 32,
        batch_size: 16,
        hidden: vec![16],
        eval_episodes: 1,
        ..BehaviorConfig::default()
    }
}

pub fn stream(env: &EnvConfig, episodes: usize, seed: u64) -> OfflineDataset {
    collect_online(env, &tiny_behavior(episodes), seed).unwrap().dataset
}

pub fn tiny_trainer() -> TrainerConfig {
    TrainerConfig {
        epochs: 3,
        batch_size: 32,
        hidden: vec![16],
        target_sync_every: 20,
        ..TrainerConfig::default()
    }
}
