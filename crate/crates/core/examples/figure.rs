//! Runs one figure recipe at desk scale and prints the per-seed points.
//!
//! cargo run --release --example figure -- fig3 out/fig3 [seeds] [overrides.toml]

use std::time::Instant;

use omrl::harness::{run_figure, ExperimentConfig, FigureId};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let fig: FigureId = args.next().as_deref().unwrap_or("fig3").parse()?;
    let out = args.next().unwrap_or_else(|| format!("out/{fig}"));
    let seeds = args.next();
    let overrides = match args.next() {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let mut recipe = overrides.recipe(fig)?;
    if let Some(n) = seeds {
        recipe.seeds = (0..n.parse::<u64>()?).collect();
    }
    let started = Instant::now();
    let report = run_figure(&recipe, &out)?;
    for p in &report.points {
        println!(
            "{:<14} seed {} factor {:>5} rscore {:>8} aoi {:>8} power {:>10} reward {:.4}",
            p.scheme,
            p.seed,
            p.power_factor.map_or("-".into(), |f| f.to_string()),
            p.rscore.map_or("-".into(), |v| format!("{v:.4}")),
            p.mean_aoi.map_or("-".into(), |v| format!("{v:.3}")),
            p.total_power_w.map_or("-".into(), |v| format!("{v:.3e}")),
            p.avg_reward
        );
    }
    println!("wrote {} files in {:.1?}", report.files.len(), started.elapsed());
    Ok(())
}
