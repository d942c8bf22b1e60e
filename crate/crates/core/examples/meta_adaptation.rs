//! Meta-trains a Q-network initialisation over the power-factor family,
//! then adapts it to the held-out factor on a 5% dataset and compares with
//! training from scratch for the same number of epochs.

use omrl::baselines::LearnedController;
use omrl::dataset::{collect_online, subsample};
use omrl::env::EnvConfig;
use omrl::harness::{eval_seeds, evaluate, FigureId, FigureRecipe, Metric, ScalePreset};
use omrl::meta::{adapt, meta_train, relabel_rewards};
use omrl::trainers::{train_offline, TrainOptions, TrainOutcome};

fn main() -> omrl::Result<()> {
    let recipe = FigureRecipe::preset(FigureId::Fig5, ScalePreset::Desk);
    let meta = &recipe.meta;
    let stream = collect_online(&recipe.env, &recipe.behavior, 0)?.dataset;
    let train_ds = subsample(&stream, recipe.fraction, 0)?;
    let tasks = meta
        .train_tasks
        .iter()
        .map(|&t| Ok((t, relabel_rewards(&train_ds, t)?)))
        .collect::<omrl::Result<Vec<_>>>()?;
    let outcome = meta_train(&tasks, meta, 0)?;
    println!("inner losses per meta-iteration: {:.4?}", outcome.inner_losses);

    let test_env = EnvConfig::Uav(recipe.env.as_uav().unwrap().with_task(&meta.test_task));
    let test_ds = relabel_rewards(&subsample(&stream, recipe.test_fraction, 1)?, meta.test_task)?;
    let seeds = eval_seeds(0, 20);
    let score = |name: &str, out: &TrainOutcome| -> omrl::Result<()> {
        let mut ctl = LearnedController {
            name: name.into(),
            policies: out.policies(meta.base_trainer.bcq_tau),
        };
        let r = evaluate(&mut ctl, &test_env, &seeds)?;
        println!("{name:<8} reward/step {:.4}", r.mean(Metric::AvgReward).unwrap());
        Ok(())
    };
    let adapted = adapt(&outcome.init, &test_ds, meta.adapt_epochs, &meta.base_trainer, TrainOptions::default())?;
    score("adapted", &adapted)?;
    let scratch_cfg = omrl::trainers::TrainerConfig {
        epochs: meta.adapt_epochs,
        ..meta.base_trainer.clone()
    };
    score("scratch", &train_offline(&test_ds, &scratch_cfg, TrainOptions::default())?)?;
    Ok(())
}
