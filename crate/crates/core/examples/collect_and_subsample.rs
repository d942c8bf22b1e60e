//! Online behaviour collection, the 20% budget, and the binary round trip.

use omrl::dataset::{collect_online, dataset_stats, load, save, subsample, BehaviorConfig};
use omrl::env::{EnvConfig, RrmConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let env = EnvConfig::Rrm(RrmConfig {
        num_aps: 2,
        num_ues: 8,
        episode_len: 100,
        ..RrmConfig::default()
    });
    let behavior = BehaviorConfig {
        episodes: 20,
        hidden: vec![64, 64],
        ..BehaviorConfig::default()
    };
    let stream = collect_online(&env, &behavior, 7)?;
    println!(
        "collected {} transitions, greedy behaviour return {:.2}",
        stream.dataset.len(),
        stream.behavior_score
    );
    let ds = subsample(&stream.dataset, 0.2, 7)?;
    let stats = dataset_stats(&ds);
    println!(
        "kept {} ({:.0}%), reward {:.3} +- {:.3}, action coverage {:.2}",
        ds.len(),
        100.0 * ds.meta().source_fraction,
        stats.reward_mean,
        stats.reward_std,
        stats.mean_coverage()
    );

    let dir = std::env::temp_dir().join("omrl-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("rrm.omrl");
    save(&ds, &path)?;
    let back = load(&path, Some(&env))?;
    println!("reloaded {} transitions, identical: {}", back.len(), back == ds);
    Ok(())
}
