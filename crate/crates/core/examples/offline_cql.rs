//! Trains CTDE-CQL, I-CQL and offline DQN on one RRM dataset and evaluates
//! the greedy policies next to full reuse.

use omrl::baselines::{BaselineKind, LearnedController};
use omrl::dataset::{collect_online, subsample};
use omrl::harness::{eval_seeds, evaluate, FigureId, FigureRecipe, Metric, ScalePreset};
use omrl::trainers::{train_offline, Algo, Mode, TrainOptions, TrainerConfig};

fn main() -> omrl::Result<()> {
    let recipe = FigureRecipe::preset(FigureId::Fig3, ScalePreset::Desk);
    let stream = collect_online(&recipe.env, &recipe.behavior, 0)?;
    let ds = subsample(&stream.dataset, recipe.fraction, 0)?;
    println!("{} offline transitions", ds.len());
    let seeds = eval_seeds(0, 20);

    for (algo, mode) in [(Algo::Cql, Mode::Ctde), (Algo::Cql, Mode::Independent), (Algo::Dqn, Mode::Independent)] {
        let cfg = TrainerConfig {
            algo,
            mode,
            ..recipe.trainer.clone()
        };
        let out = train_offline(&ds, &cfg, TrainOptions { env: Some(&recipe.env), ..Default::default() })?;
        let last = out.curve.rows.last().unwrap();
        let mut ctl = LearnedController {
            name: cfg.scheme_name(),
            policies: out.policies(cfg.bcq_tau),
        };
        let r = evaluate(&mut ctl, &recipe.env, &seeds)?;
        println!(
            "{:<10} loss {:.4} penalty {:>8}  R-score {:.4e}",
            cfg.scheme_name(),
            last.mean_loss,
            last.mean_penalty.map_or("-".into(), |p| format!("{p:.4}")),
            r.mean(Metric::Rscore).unwrap()
        );
    }
    let r = evaluate(BaselineKind::FullReuse.build().as_mut(), &recipe.env, &seeds)?;
    println!("full_reuse R-score {:.4e}", r.mean(Metric::Rscore).unwrap());
    Ok(())
}
