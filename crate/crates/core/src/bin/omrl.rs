use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use omrl::baselines::{BaselineKind, Controller, LearnedController};
use omrl::dataset::{self, collect_online, dataset_stats, subsample, OfflineDataset};
use omrl::env::uav::TaskSpec;
use omrl::env::EnvConfig;
use omrl::harness::{
    eval_seeds, evaluate, run_figure, write_rows, ExperimentConfig, FigureId, FigureRecipe, MetricsRow, PeriodicEval,
};
use omrl::meta::{adapt, meta_train, relabel_rewards, MetaInit};
use omrl::nn::{load_networks, save_networks, Mlp};
use omrl::trainers::{train_offline, AgentPolicy, Algo, TrainOptions, TrainOutcome, TrainerConfig};
use omrl::{Error, Result};

/// Offline multi-agent RL workbench: data collection, offline training,
/// meta-learning and figure recipes for the RRM and UAV environments.
#[derive(Parser)]
#[command(name = "omrl", version)]
struct Cli {
    /// Experiment file (TOML); missing fields come from the scale preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the online behavioural learner and record its full experience stream.
    Collect,
    /// Keep a uniform random share of a dataset.
    Subsample {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        fraction: f64,
    },
    /// Action histograms, reward moments and coverage of a dataset.
    Stats {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Offline training on a dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Learn an initialisation over UAV power-factor tasks.
    MetaTrain {
        #[arg(long)]
        dataset: PathBuf,
        /// Comma-separated power factors; defaults to the configured family.
        #[arg(long)]
        tasks: Option<String>,
    },
    /// Adapt a learned initialisation to a held-out task.
    MetaTest {
        #[arg(long)]
        init: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        task: Option<f64>,
        #[arg(long)]
        fraction: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Greedy evaluation of a checkpoint or a baseline.
    Evaluate {
        #[arg(long, conflicts_with = "baseline", required_unless_present = "baseline")]
        checkpoint: Option<PathBuf>,
        /// full_reuse, round_robin, random_walk or deterministic.
        #[arg(long)]
        baseline: Option<String>,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Run a whole figure recipe.
    Figure {
        /// fig3, fig4 or fig5; defaults to the one in the config file.
        #[arg(long)]
        figure: Option<String>,
    },
}

#[derive(Args)]
struct EvalArgs {
    /// Evaluate every N epochs (0 disables evaluation).
    #[arg(long)]
    eval_every: Option<usize>,
}

struct Ctx {
    experiment: ExperimentConfig,
    seed: u64,
    out: PathBuf,
}

impl Ctx {
    fn recipe(&self) -> Result<FigureRecipe> {
        self.experiment.recipe(self.experiment.default_figure())
    }

    fn env(&self) -> Result<EnvConfig> {
        Ok(self.recipe()?.env)
    }

    fn trainer(&self) -> Result<TrainerConfig> {
        Ok(TrainerConfig {
            seed: self.seed,
            ..self.recipe()?.trainer
        })
    }

    fn path(&self, name: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out).map_err(|e| io_err(&self.out, e))?;
        Ok(self.out.join(name))
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_owned(),
        source: e,
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("plain data serialises");
    std::fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

#[derive(Serialize)]
struct ReturnRow {
    episode: usize,
    episode_return: f64,
}

#[derive(Serialize)]
struct MetaRow {
    iteration: usize,
    inner_loss: f64,
}

fn collect(ctx: &Ctx) -> Result<()> {
    let recipe = ctx.recipe()?;
    let env = ctx.env()?;
    let stream = collect_online(&env, &recipe.behavior, ctx.seed)?;
    dataset::save(&stream.dataset, ctx.path("stream.omrl")?)?;
    let rows: Vec<ReturnRow> = stream
        .episode_returns
        .iter()
        .enumerate()
        .map(|(episode, &r)| ReturnRow { episode, episode_return: r })
        .collect();
    write_rows(ctx.path("collect.csv")?, &rows)?;
    println!(
        "collected {} transitions over {} episodes, behaviour score {:.4}",
        stream.dataset.len(),
        rows.len(),
        stream.behavior_score
    );
    Ok(())
}

fn evaluation_hook<'a>(ctx: &Ctx, env: &'a EnvConfig, eval: &EvalArgs, epochs: usize, scheme: &str) -> Result<Option<PeriodicEval<'a>>> {
    let recipe = ctx.recipe()?;
    let every = eval.eval_every.unwrap_or(recipe.eval_every);
    Ok((every > 0).then(|| PeriodicEval::new(env, eval_seeds(ctx.seed, recipe.eval_episodes), every, epochs, scheme)))
}

/// Checkpoint layout: the Q-networks, followed by the behaviour networks
/// when the scheme uses them.
fn save_outcome(ctx: &Ctx, outcome: &TrainOutcome, hook: Option<PeriodicEval<'_>>, scheme: &str) -> Result<()> {
    let mut nets = outcome.q_nets();
    nets.extend(outcome.learners.iter().filter_map(|l| l.behavior.as_ref().map(|b| b.net.clone())));
    save_networks(ctx.path("checkpoint.bin")?, &nets)?;
    outcome.curve.write_csv(ctx.path("curve.csv")?)?;
    if let Some(hook) = hook {
        let rows: Vec<MetricsRow> = hook
            .reports
            .iter()
            .flat_map(|(epoch, r)| MetricsRow::from_report(scheme, ctx.seed, *epoch, r))
            .collect();
        write_rows(ctx.path("eval.csv")?, &rows)?;
    }
    if let Some(last) = outcome.curve.rows.last() {
        println!(
            "{scheme}: {} epochs, {} updates, final loss {:.6}{}",
            last.epoch,
            outcome.updates,
            last.mean_loss,
            outcome.curve.last_score().map_or(String::new(), |s| format!(", score {s:.4}"))
        );
    }
    Ok(())
}

fn train(ctx: &Ctx, dataset_path: &Path, eval: &EvalArgs) -> Result<()> {
    let env = ctx.env()?;
    let ds = dataset::load(dataset_path, Some(&env))?;
    let cfg = ctx.trainer()?;
    let scheme = cfg.scheme_name();
    let mut hook = evaluation_hook(ctx, &env, eval, cfg.epochs, &scheme)?;
    let outcome = train_offline(
        &ds,
        &cfg,
        TrainOptions {
            env: Some(&env),
            hook: hook.as_mut().map(|h| h as _),
            ..Default::default()
        },
    )?;
    save_outcome(ctx, &outcome, hook, &scheme)
}

fn parse_tasks(text: &str) -> Result<Vec<TaskSpec>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map(|power_factor| TaskSpec { power_factor })
                .map_err(|_| Error::Config(format!("bad power factor `{t}` in --tasks")))
        })
        .collect()
}

fn meta_train_cmd(ctx: &Ctx, dataset_path: &Path, tasks: Option<&str>) -> Result<()> {
    let recipe = ctx.recipe()?;
    let env = ctx.env()?;
    let stream = dataset::load(dataset_path, Some(&env))?;
    let mut cfg = recipe.meta.clone();
    if let Some(t) = tasks {
        cfg.train_tasks = parse_tasks(t)?;
    }
    let task_sets = cfg
        .train_tasks
        .iter()
        .map(|&t| Ok((t, relabel_rewards(&stream, t)?)))
        .collect::<Result<Vec<_>>>()?;
    let outcome = meta_train(&task_sets, &cfg, ctx.seed)?;
    outcome.init.save(ctx.path("init.bin")?)?;
    let rows: Vec<MetaRow> = outcome
        .inner_losses
        .iter()
        .enumerate()
        .map(|(iteration, &inner_loss)| MetaRow { iteration, inner_loss })
        .collect();
    write_rows(ctx.path("meta.csv")?, &rows)?;
    println!("meta-trained over {} tasks for {} iterations", task_sets.len(), rows.len());
    Ok(())
}

fn meta_test(ctx: &Ctx, init: &Path, dataset_path: &Path, task: Option<f64>, fraction: Option<f64>, epochs: Option<usize>, eval: &EvalArgs) -> Result<()> {
    let recipe = ctx.recipe()?;
    let task = task.map_or(recipe.meta.test_task, |power_factor| TaskSpec { power_factor });
    let base = ctx.env()?;
    let uav = base
        .as_uav()
        .ok_or_else(|| Error::Config("meta-test runs on the UAV environment".into()))?;
    let env = EnvConfig::Uav(uav.with_task(&task));
    let stream = dataset::load(dataset_path, Some(&env))?;
    let fraction = fraction.unwrap_or(recipe.test_fraction);
    let ds = if fraction < 1.0 { subsample(&stream, fraction, ctx.seed)? } else { stream };
    let ds = relabel_rewards(&ds, task)?;
    let init = MetaInit::load(init)?;
    let epochs = epochs.unwrap_or(recipe.meta.adapt_epochs);
    let cfg = TrainerConfig {
        seed: ctx.seed,
        ..recipe.meta.base_trainer.clone()
    };
    let scheme = format!("m-{}", cfg.scheme_name());
    let mut hook = evaluation_hook(ctx, &env, eval, epochs, &scheme)?;
    let outcome = adapt(
        &init,
        &ds,
        epochs,
        &cfg,
        TrainOptions {
            env: Some(&env),
            hook: hook.as_mut().map(|h| h as _),
            ..Default::default()
        },
    )?;
    save_outcome(ctx, &outcome, hook, &scheme)
}

fn checkpoint_policies(nets: Vec<Mlp>, env: &EnvConfig, trainer: &TrainerConfig) -> Result<Vec<AgentPolicy>> {
    let n = env.num_agents();
    if nets.len() == n {
        return Ok(nets.into_iter().map(AgentPolicy::greedy).collect());
    }
    if nets.len() == 2 * n && trainer.algo == Algo::Bcq {
        let mut nets = nets;
        let behavior = nets.split_off(n);
        return Ok(nets
            .into_iter()
            .zip(behavior)
            .map(|(q, b)| AgentPolicy {
                q_net: q,
                filter: Some((b, trainer.bcq_tau)),
            })
            .collect());
    }
    Err(Error::Config(format!(
        "checkpoint holds {} networks; the environment has {n} agents",
        nets.len()
    )))
}

fn evaluate_cmd(ctx: &Ctx, checkpoint: Option<&Path>, baseline: Option<&str>, episodes: Option<usize>) -> Result<()> {
    let recipe = ctx.recipe()?;
    let env = ctx.env()?;
    let seeds = eval_seeds(ctx.seed, episodes.unwrap_or(recipe.eval_episodes));
    let mut ctrl: Box<dyn Controller> = match (checkpoint, baseline) {
        (Some(path), _) => {
            let trainer = ctx.trainer()?;
            Box::new(LearnedController {
                name: trainer.scheme_name(),
                policies: checkpoint_policies(load_networks(path)?, &env, &trainer)?,
            })
        }
        (None, Some(b)) => b.parse::<BaselineKind>()?.build(),
        (None, None) => unreachable!("clap requires one of them"),
    };
    let report = evaluate(ctrl.as_mut(), &env, &seeds)?;
    let scheme = report.scheme.clone();
    let rows = MetricsRow::from_report(&scheme, ctx.seed, 0, &report);
    write_rows(ctx.path("eval.csv")?, &rows)?;
    for r in &rows {
        println!("{scheme} {} {:.6}", r.metric, r.value);
    }
    Ok(())
}

fn figure(ctx: &Ctx, figure: Option<&str>) -> Result<()> {
    let fig: FigureId = match figure {
        Some(f) => f.parse()?,
        None => ctx.experiment.default_figure(),
    };
    let mut recipe = ctx.experiment.recipe(fig)?;
    if ctx.experiment.seeds.is_none() {
        recipe.seeds = vec![ctx.seed];
    }
    let out = ctx.experiment.output_dir.clone().unwrap_or_else(|| ctx.out.clone());
    let report = run_figure(&recipe, &out)?;
    for f in &report.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn stats(ctx: &Ctx, path: &Path) -> Result<()> {
    let ds: OfflineDataset = dataset::load(path, None)?;
    let s = dataset_stats(&ds);
    write_json(&ctx.path("stats.json")?, &s)?;
    println!(
        "{} transitions, reward {:.4} ± {:.4}, mean coverage {:.3}",
        s.transitions,
        s.reward_mean,
        s.reward_std,
        s.mean_coverage()
    );
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let experiment = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let ctx = Ctx {
        experiment,
        seed: cli.seed,
        out: cli.out.clone(),
    };
    match &cli.command {
        Command::Collect => collect(&ctx),
        Command::Subsample { dataset: path, fraction } => {
            let ds = dataset::load(path, None)?;
            let sub = subsample(&ds, *fraction, ctx.seed)?;
            dataset::save(&sub, ctx.path("dataset.omrl")?)?;
            println!("kept {} of {} transitions", sub.len(), ds.len());
            Ok(())
        }
        Command::Stats { dataset } => stats(&ctx, dataset),
        Command::Train { dataset, eval } => train(&ctx, dataset, eval),
        Command::MetaTrain { dataset, tasks } => meta_train_cmd(&ctx, dataset, tasks.as_deref()),
        Command::MetaTest {
            init,
            dataset,
            task,
            fraction,
            epochs,
            eval,
        } => meta_test(&ctx, init, dataset, *task, *fraction, *epochs, eval),
        Command::Evaluate {
            checkpoint,
            baseline,
            episodes,
        } => evaluate_cmd(&ctx, checkpoint.as_deref(), baseline.as_deref(), *episodes),
        Command::Figure { figure: f } => figure(&ctx, f.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("omrl: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
