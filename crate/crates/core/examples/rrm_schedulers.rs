//! Non-learning schedulers on the multi-cell downlink.

use omrl::baselines::BaselineKind;
use omrl::env::{EnvConfig, RrmConfig};
use omrl::harness::{eval_seeds, evaluate, Metric};

fn main() -> omrl::Result<()> {
    let env = EnvConfig::Rrm(RrmConfig {
        num_aps: 2,
        num_ues: 8,
        episode_len: 200,
        ..RrmConfig::default()
    });
    let seeds = eval_seeds(0, 20);
    for kind in [BaselineKind::FullReuse, BaselineKind::RoundRobin, BaselineKind::RandomWalk] {
        let report = evaluate(kind.build().as_mut(), &env, &seeds)?;
        println!(
            "{kind:<12} R-score {:.4e}  reward/step {:.3}",
            report.mean(Metric::Rscore).unwrap(),
            report.mean(Metric::AvgReward).unwrap()
        );
    }
    Ok(())
}
