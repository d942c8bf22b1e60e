//! Batch-constrained Q-learning and plain behaviour cloning on the UAV task.
//! BCQ's policy only picks actions its behaviour model finds plausible
//! relative to the most likely one.

use omrl::baselines::LearnedController;
use omrl::dataset::{collect_online, subsample};
use omrl::harness::{eval_seeds, evaluate, FigureId, FigureRecipe, Metric, ScalePreset};
use omrl::trainers::{train_offline, Algo, Mode, TrainOptions, TrainerConfig};

fn main() -> omrl::Result<()> {
    let recipe = FigureRecipe::preset(FigureId::Fig4, ScalePreset::Desk);
    let stream = collect_online(&recipe.env, &recipe.behavior, 1)?;
    let ds = subsample(&stream.dataset, recipe.fraction, 1)?;
    let seeds = eval_seeds(1, 20);
    for (algo, tau) in [(Algo::Bcq, 0.3), (Algo::Bcq, 0.05), (Algo::Bc, 0.3)] {
        let cfg = TrainerConfig {
            algo,
            mode: Mode::Independent,
            bcq_tau: tau,
            ..recipe.trainer.clone()
        };
        let out = train_offline(&ds, &cfg, TrainOptions::default())?;
        let mut ctl = LearnedController {
            name: cfg.scheme_name(),
            policies: out.policies(tau),
        };
        let r = evaluate(&mut ctl, &recipe.env, &seeds)?;
        let label = if algo == Algo::Bcq { format!("{algo} tau {tau}") } else { algo.to_string() };
        println!(
            "{label:<13} AoI {:.2} power {:.3} reward/step {:.4}",
            r.mean(Metric::MeanAoi).unwrap(),
            r.mean(Metric::TotalPowerW).unwrap(),
            r.mean(Metric::AvgReward).unwrap()
        );
    }
    Ok(())
}
