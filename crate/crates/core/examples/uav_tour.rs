//! Follows the deterministic tour for one episode and prints where each
//! UAV is headed, then compares it with a random walk.

use omrl::baselines::{BaselineKind, Controller, DeterministicTour};
use omrl::env::{Env, EnvConfig, MultiAgentEnv, UavConfig};
use omrl::harness::{eval_seeds, evaluate, Metric};

fn main() -> omrl::Result<()> {
    let cfg = EnvConfig::Uav(UavConfig {
        area_side_m: 800.0,
        grid_cells: 8,
        num_uavs: 2,
        num_devices: 6,
        episode_len: 60,
        ..UavConfig::default()
    });
    let mut env = cfg.build()?;
    let mut tour = DeterministicTour::default();
    let mut obs = env.reset(3);
    tour.begin_episode(&env, 3)?;
    for k in 0..2 {
        println!("uav {k} plan {:?}", tour.plan(k));
    }
    for t in 0..12 {
        let joint = tour.act(&env, &obs)?;
        let step = env.step(&joint)?;
        obs = step.observations;
        if let Env::Uav(u) = &env {
            println!("t {t:>2} cells {:?} aoi {:?} reward {:.3}", u.state().uav_cells, u.state().aoi, step.reward);
        }
    }

    let seeds = eval_seeds(3, 30);
    for kind in [BaselineKind::DeterministicTour, BaselineKind::RandomWalk] {
        let r = evaluate(kind.build().as_mut(), &cfg, &seeds)?;
        println!(
            "{kind:<14} mean AoI {:.2}  power {:.3} W  reward/step {:.3}",
            r.mean(Metric::MeanAoi).unwrap(),
            r.mean(Metric::TotalPowerW).unwrap(),
            r.mean(Metric::AvgReward).unwrap()
        );
    }
    Ok(())
}
