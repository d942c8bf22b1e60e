mod common;

use omrl::baselines::{BaselineKind, LearnedController};
use omrl::env::uav::TaskSpec;
use omrl::env::{EnvConfig, MultiAgentEnv};
use omrl::harness::{eval_seeds, evaluate, run_figure, FigureId, FigureRecipe, Metric, ScalePreset};
use omrl::meta::MetaConfig;
use omrl::rng::is_eval_seed;
use omrl::trainers::{train_offline, TrainOptions};
use proptest::prelude::*;

fn tiny_recipe(figure: FigureId) -> FigureRecipe {
    let mut r = FigureRecipe::preset(figure, ScalePreset::Desk);
    r.env = match figure {
        FigureId::Fig3 => common::tiny_rrm(),
        _ => common::tiny_uav(),
    };
    r.behavior = common::tiny_behavior(4);
    r.trainer = common::tiny_trainer();
    r.trainer.epochs = 2;
    r.seeds = vec![0, 1];
    r.eval_episodes = 2;
    r.eval_every = 1;
    r.power_factors = vec![0.1, 1.0];
    r.test_fraction = 0.3;
    r.meta = MetaConfig {
        train_tasks: vec![TaskSpec { power_factor: 0.3 }, TaskSpec { power_factor: 1.0 }],
        inner_epochs: 1,
        meta_iterations: 2,
        adapt_epochs: 2,
        base_trainer: r.trainer.clone(),
        ..MetaConfig::default()
    };
    r
}

#[test]
fn every_figure_carries_its_schemes_and_is_reproducible() {
    let expected: [(FigureId, &[&str]); 3] = [
        (FigureId::Fig3, &["ctde-cql", "i-cql", "bcq", "offline-dqn", "full_reuse", "round_robin", "random_walk"]),
        (FigureId::Fig4, &["ctde-cql", "i-cql", "ctde-dqn", "i-dqn", "random_walk", "deterministic"]),
        (FigureId::Fig5, &["m-ctde-cql", "m-i-cql", "ctde-cql", "i-cql"]),
    ];
    for (fig, schemes) in expected {
        let recipe = tiny_recipe(fig);
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let ra = run_figure(&recipe, a.path()).unwrap();
        let rb = run_figure(&recipe, b.path()).unwrap();
        let mut got = ra.schemes();
        got.sort();
        let mut want: Vec<String> = schemes.iter().map(|s| s.to_string()).collect();
        want.sort();
        assert_eq!(got, want, "{fig}");
        assert_eq!(ra.points, rb.points, "{fig}");
        assert_eq!(ra.curves, rb.curves, "{fig}");
        assert_eq!(ra.seeds(), vec![0, 1]);
        assert!(!ra.files.is_empty());
        for (fa, fb) in ra.files.iter().zip(&rb.files) {
            assert_eq!(fa.file_name(), fb.file_name());
            assert_eq!(std::fs::read(fa).unwrap(), std::fs::read(fb).unwrap(), "{}", fa.display());
        }
        let cells = if fig == FigureId::Fig4 { 2 * 2 } else { 2 };
        assert_eq!(ra.points.len(), schemes.len() * cells, "{fig}");
        let headline = if fig == FigureId::Fig3 { Metric::Rscore } else { Metric::AvgReward };
        assert!(ra.points.iter().all(|p| p.get(headline).is_some_and(f64::is_finite)));
    }
}

#[test]
fn evaluation_leaves_policies_and_data_untouched() {
    let env = common::tiny_uav();
    let ds = common::stream(&env, 3, 2);
    let digest = ds.content_digest();
    let out = train_offline(&ds, &common::tiny_trainer(), TrainOptions::default()).unwrap();
    let mut ctl = LearnedController { name: "ctde-cql".into(), policies: out.policies(0.3) };
    let before = ctl.policies.clone();
    let seeds = eval_seeds(2, 3);
    let first = evaluate(&mut ctl, &env, &seeds).unwrap();
    let second = evaluate(&mut ctl, &env, &seeds).unwrap();
    assert_eq!(ctl.policies, before);
    assert_eq!(ds.content_digest(), digest);
    assert_eq!(first, second);
    assert_eq!(first.episodes.len(), 3);
}

#[test]
fn eval_seeds_never_collide_with_training_seeds() {
    let seeds = eval_seeds(0, 500);
    let mut uniq = seeds.clone();
    uniq.sort_unstable();
    uniq.dedup();
    assert_eq!(uniq.len(), 500);
    assert!(seeds.iter().all(|&s| is_eval_seed(s)));
    for ep in 0..500 {
        assert!(!is_eval_seed(omrl::dataset::collection_episode_seed(0, ep)));
    }
}

fn legal_run(kind: BaselineKind, env_cfg: &EnvConfig, seed: u64) -> Result<(), TestCaseError> {
    let mut env = env_cfg.build().unwrap();
    let mut ctl = kind.build();
    let mut obs = env.reset(seed);
    ctl.begin_episode(&env, seed).unwrap();
    for _ in 0..env.episode_len() {
        let joint = ctl.act(&env, &obs).unwrap();
        prop_assert_eq!(joint.len(), env.num_agents());
        prop_assert!(joint.iter().all(|&a| a < env.num_actions()));
        obs = env.step(&joint).unwrap().observations;
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn baselines_only_emit_legal_actions(seed in any::<u64>()) {
        for kind in [BaselineKind::FullReuse, BaselineKind::RoundRobin, BaselineKind::RandomWalk] {
            legal_run(kind, &common::tiny_rrm(), seed)?;
        }
        for kind in [BaselineKind::RandomWalk, BaselineKind::DeterministicTour] {
            legal_run(kind, &common::tiny_uav(), seed)?;
        }
    }

    #[test]
    fn baselines_are_deterministic_given_the_seed(seed in any::<u64>()) {
        for (kind, env) in [(BaselineKind::RandomWalk, common::tiny_uav()), (BaselineKind::DeterministicTour, common::tiny_uav()), (BaselineKind::RoundRobin, common::tiny_rrm())] {
            let a = evaluate(kind.build().as_mut(), &env, &[seed]).unwrap();
            let b = evaluate(kind.build().as_mut(), &env, &[seed]).unwrap();
            prop_assert_eq!(a.episodes, b.episodes);
        }
    }
}
