//! End-to-end recipes behind the three result figures: collection,
//! subsampling, training of every scheme, evaluation and CSV emission.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::config::{FigureId, FigureRecipe};
use super::{eval_seeds, evaluate, worker_pool, write_rows, EvalReport, Metric, MetricsRow, PeriodicEval};
use crate::baselines::BaselineKind;
use crate::dataset::{collect_online, subsample, OfflineDataset};
use crate::env::uav::TaskSpec;
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::meta::{adapt, meta_train, relabel_rewards};
use crate::rng::{derive_seed, SeedDomain};
use crate::trainers::{train_offline, Algo, Mode, TrainOptions, TrainerConfig};

/// Final evaluation of one scheme for one seed (and power factor).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Point {
    pub scheme: String,
    pub seed: u64,
    pub power_factor: Option<f64>,
    pub rscore: Option<f64>,
    pub mean_aoi: Option<f64>,
    pub total_power_w: Option<f64>,
    pub avg_reward: f64,
}

impl Point {
    fn from_report(scheme: &str, seed: u64, power_factor: Option<f64>, r: &EvalReport) -> Self {
        Self {
            scheme: scheme.to_owned(),
            seed,
            power_factor,
            rscore: r.mean(Metric::Rscore),
            mean_aoi: r.mean(Metric::MeanAoi),
            total_power_w: r.mean(Metric::TotalPowerW),
            avg_reward: r.mean(Metric::AvgReward).expect("always reported"),
        }
    }

    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Rscore => self.rscore,
            Metric::MeanAoi => self.mean_aoi,
            Metric::TotalPowerW => self.total_power_w,
            Metric::AvgReward => Some(self.avg_reward),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
struct SummaryRow {
    power_factor: Option<f64>,
    metric: Metric,
    scheme_a: String,
    scheme_b: String,
    a_wins: usize,
    b_wins: usize,
    ties: usize,
    mean_a: f64,
    mean_b: f64,
}

#[derive(Clone, Debug)]
pub struct FigureReport {
    pub figure: FigureId,
    pub points: Vec<Point>,
    pub curves: Vec<MetricsRow>,
    pub files: Vec<PathBuf>,
}

impl FigureReport {
    /// Schemes in order of first appearance.
    pub fn schemes(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for p in &self.points {
            if !seen.contains(&p.scheme) {
                seen.push(p.scheme.clone());
            }
        }
        seen
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.points.iter().map(|p| p.seed).collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn power_factors(&self) -> Vec<Option<f64>> {
        let mut out: Vec<Option<f64>> = Vec::new();
        for p in &self.points {
            if !out.contains(&p.power_factor) {
                out.push(p.power_factor);
            }
        }
        out
    }

    pub fn value(&self, scheme: &str, seed: u64, factor: Option<f64>, metric: Metric) -> Option<f64> {
        self.points
            .iter()
            .find(|p| p.scheme == scheme && p.seed == seed && p.power_factor == factor)
            .and_then(|p| p.get(metric))
    }

    /// Mean over seeds.
    pub fn mean(&self, scheme: &str, factor: Option<f64>, metric: Metric) -> Option<f64> {
        let v: Vec<f64> = self
            .points
            .iter()
            .filter(|p| p.scheme == scheme && p.power_factor == factor)
            .filter_map(|p| p.get(metric))
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Seeds on which `a` beats `b` strictly, `b` beats `a` strictly, and ties.
    pub fn wins(&self, a: &str, b: &str, factor: Option<f64>, metric: Metric, higher_is_better: bool) -> (usize, usize, usize) {
        let mut out = (0, 0, 0);
        for s in self.seeds() {
            let (Some(x), Some(y)) = (self.value(a, s, factor, metric), self.value(b, s, factor, metric)) else {
                continue;
            };
            let (x, y) = if higher_is_better { (x, y) } else { (-x, -y) };
            if x > y {
                out.0 += 1;
            } else if y > x {
                out.1 += 1;
            } else {
                out.2 += 1;
            }
        }
        out
    }

    fn summary(&self) -> Vec<SummaryRow> {
        let metrics: &[(Metric, bool)] = match self.figure {
            FigureId::Fig3 => &[(Metric::Rscore, true)],
            FigureId::Fig4 => &[(Metric::AvgReward, true), (Metric::MeanAoi, false), (Metric::TotalPowerW, false)],
            FigureId::Fig5 => &[(Metric::AvgReward, true)],
        };
        let schemes = self.schemes();
        let mut rows = Vec::new();
        for factor in self.power_factors() {
            for &(metric, higher) in metrics {
                for (i, a) in schemes.iter().enumerate() {
                    for b in &schemes[i + 1..] {
                        let (a_wins, b_wins, ties) = self.wins(a, b, factor, metric, higher);
                        rows.push(SummaryRow {
                            power_factor: factor,
                            metric,
                            scheme_a: a.clone(),
                            scheme_b: b.clone(),
                            a_wins,
                            b_wins,
                            ties,
                            mean_a: self.mean(a, factor, metric).unwrap_or(f64::NAN),
                            mean_b: self.mean(b, factor, metric).unwrap_or(f64::NAN),
                        });
                    }
                }
            }
        }
        rows
    }

    fn write(&mut self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let fig = self.figure.to_string();
        let mut files = Vec::new();
        for scheme in self.schemes() {
            let rows: Vec<&MetricsRow> = self.curves.iter().filter(|r| r.scheme == scheme).collect();
            if rows.is_empty() {
                continue;
            }
            let path = dir.join(format!("{fig}_{scheme}.csv"));
            write_rows(&path, &rows)?;
            files.push(path);
        }
        let path = dir.join(format!("{fig}_points.csv"));
        write_rows(&path, &self.points)?;
        files.push(path);
        let path = dir.join(format!("{fig}_summary.csv"));
        write_rows(&path, &self.summary())?;
        files.push(path);
        self.files = files;
        Ok(())
    }
}

fn stage<T>(name: &str, seed: u64, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        e @ Error::Stage { .. } => e,
        e => Error::Stage {
            stage: name.to_owned(),
            seed,
            source: Box::new(e),
        },
    })
}

struct Cell {
    points: Vec<Point>,
    curves: Vec<MetricsRow>,
}

struct Scheme {
    name: &'static str,
    algo: Algo,
    mode: Mode,
}

const FIG3_LEARNED: [Scheme; 4] = [
    Scheme { name: "ctde-cql", algo: Algo::Cql, mode: Mode::Ctde },
    Scheme { name: "i-cql", algo: Algo::Cql, mode: Mode::Independent },
    Scheme { name: "bcq", algo: Algo::Bcq, mode: Mode::Independent },
    Scheme { name: "offline-dqn", algo: Algo::Dqn, mode: Mode::Independent },
];

const FIG4_LEARNED: [Scheme; 4] = [
    Scheme { name: "ctde-cql", algo: Algo::Cql, mode: Mode::Ctde },
    Scheme { name: "i-cql", algo: Algo::Cql, mode: Mode::Independent },
    Scheme { name: "ctde-dqn", algo: Algo::Dqn, mode: Mode::Ctde },
    Scheme { name: "i-dqn", algo: Algo::Dqn, mode: Mode::Independent },
];

fn collect_and_subsample(env: &EnvConfig, recipe: &FigureRecipe, seed: u64) -> Result<(OfflineDataset, OfflineDataset)> {
    let collection_seed = derive_seed(seed, "collect", 0, SeedDomain::Train);
    let stream = stage("collect", seed, collect_online(env, &recipe.behavior, collection_seed))?.dataset;
    let ds = stage(
        "subsample",
        seed,
        subsample(&stream, recipe.fraction, derive_seed(seed, "subsample", 0, SeedDomain::Train)),
    )?;
    Ok((stream, ds))
}

fn eval_epochs(epochs: usize, every: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (1..=epochs).filter(|e| e % every.max(1) == 0).collect();
    if epochs > 0 && out.last() != Some(&epochs) {
        out.push(epochs);
    }
    out
}

/// Trains one learned scheme with periodic evaluation; returns its curve
/// rows and final report.
#[allow(clippy::too_many_arguments)]
fn train_scheme(
    name: &str,
    cfg: &TrainerConfig,
    ds: &OfflineDataset,
    env: &EnvConfig,
    eval: &[u64],
    every: usize,
    seed: u64,
    init: Option<&crate::meta::MetaInit>,
) -> Result<(Vec<MetricsRow>, EvalReport)> {
    let mut hook = PeriodicEval::new(env, eval.to_vec(), every, cfg.epochs, name);
    let outcome = match init {
        Some(init) => adapt(init, ds, cfg.epochs, cfg, TrainOptions { env: Some(env), hook: Some(&mut hook), ..Default::default() }),
        None => train_offline(ds, cfg, TrainOptions { env: Some(env), hook: Some(&mut hook), ..Default::default() }),
    };
    let outcome = stage(&format!("train {name}"), seed, outcome)?;
    if cfg.epochs == 0 {
        let score = hook.evaluate_now(0, &outcome.learners, cfg.bcq_tau);
        stage(&format!("evaluate {name}"), seed, score)?;
    }
    let rows = hook
        .reports
        .iter()
        .flat_map(|(epoch, r)| MetricsRow::from_report(name, seed, *epoch, r))
        .collect();
    let last = hook.reports.pop().expect("at least one evaluation").1;
    Ok((rows, last))
}

fn baseline_rows(
    kind: BaselineKind,
    env: &EnvConfig,
    eval: &[u64],
    epochs: &[usize],
    seed: u64,
) -> Result<(Vec<MetricsRow>, EvalReport)> {
    let name = kind.to_string();
    let report = stage(&format!("evaluate {name}"), seed, evaluate(kind.build().as_mut(), env, eval))?;
    let rows = epochs
        .iter()
        .flat_map(|&e| MetricsRow::from_report(&name, seed, e, &report))
        .collect();
    Ok((rows, report))
}

fn scheme_config(recipe: &FigureRecipe, algo: Algo, mode: Mode, seed: u64) -> TrainerConfig {
    TrainerConfig {
        algo,
        mode,
        seed: derive_seed(seed, "train", 0, SeedDomain::Train),
        ..recipe.trainer.clone()
    }
}

fn fig3_cell(recipe: &FigureRecipe, seed: u64) -> Result<Cell> {
    let (_, ds) = collect_and_subsample(&recipe.env, recipe, seed)?;
    let eval = eval_seeds(seed, recipe.eval_episodes);
    let mut cell = Cell { points: vec![], curves: vec![] };
    for s in &FIG3_LEARNED {
        let cfg = scheme_config(recipe, s.algo, s.mode, seed);
        let (rows, report) = train_scheme(s.name, &cfg, &ds, &recipe.env, &eval, recipe.eval_every, seed, None)?;
        cell.curves.extend(rows);
        cell.points.push(Point::from_report(s.name, seed, None, &report));
    }
    let epochs = eval_epochs(recipe.trainer.epochs, recipe.eval_every);
    for kind in [BaselineKind::FullReuse, BaselineKind::RoundRobin, BaselineKind::RandomWalk] {
        let (rows, report) = baseline_rows(kind, &recipe.env, &eval, &epochs, seed)?;
        cell.curves.extend(rows);
        cell.points.push(Point::from_report(&kind.to_string(), seed, None, &report));
    }
    Ok(cell)
}

fn fig4_cell(recipe: &FigureRecipe, seed: u64, factor: f64) -> Result<Cell> {
    let env = EnvConfig::Uav(recipe.env.as_uav().expect("validated").with_task(&TaskSpec { power_factor: factor }));
    let (_, ds) = collect_and_subsample(&env, recipe, seed)?;
    let eval = eval_seeds(seed, recipe.eval_episodes);
    let mut cell = Cell { points: vec![], curves: vec![] };
    for s in &FIG4_LEARNED {
        let cfg = scheme_config(recipe, s.algo, s.mode, seed);
        let (_, report) = train_scheme(s.name, &cfg, &ds, &env, &eval, cfg.epochs.max(1), seed, None)?;
        cell.points.push(Point::from_report(s.name, seed, Some(factor), &report));
    }
    for kind in [BaselineKind::RandomWalk, BaselineKind::DeterministicTour] {
        let (_, report) = baseline_rows(kind, &env, &eval, &[], seed)?;
        cell.points.push(Point::from_report(&kind.to_string(), seed, Some(factor), &report));
    }
    Ok(cell)
}

fn fig5_cell(recipe: &FigureRecipe, seed: u64) -> Result<Cell> {
    let base = recipe.env.as_uav().expect("validated").clone();
    let (stream, train_ds) = collect_and_subsample(&EnvConfig::Uav(base.clone()), recipe, seed)?;
    let meta = &recipe.meta;
    let tasks = stage(
        "relabel",
        seed,
        meta.train_tasks
            .iter()
            .map(|&t| Ok((t, relabel_rewards(&train_ds, t)?)))
            .collect::<Result<Vec<_>>>(),
    )?;
    let test_ds = stage(
        "subsample test task",
        seed,
        subsample(&stream, recipe.test_fraction, derive_seed(seed, "subsample-test", 0, SeedDomain::Train))
            .and_then(|d| relabel_rewards(&d, meta.test_task)),
    )?;
    let test_env = EnvConfig::Uav(base.with_task(&meta.test_task));
    let eval = eval_seeds(seed, recipe.eval_episodes);
    let mut cell = Cell { points: vec![], curves: vec![] };
    for mode in [Mode::Ctde, Mode::Independent] {
        let mut mcfg = meta.clone();
        mcfg.base_trainer.mode = mode;
        mcfg.base_trainer.algo = Algo::Cql;
        let init = stage(
            "meta-train",
            seed,
            meta_train(&tasks, &mcfg, derive_seed(seed, "meta", 0, SeedDomain::Train)),
        )?
        .init;
        let name = match mode {
            Mode::Ctde => "m-ctde-cql",
            Mode::Independent => "m-i-cql",
        };
        let cfg = TrainerConfig {
            epochs: meta.adapt_epochs,
            ..scheme_config(recipe, Algo::Cql, mode, seed)
        };
        let cfg = TrainerConfig { hidden: mcfg.base_trainer.hidden.clone(), ..cfg };
        let (rows, report) = train_scheme(name, &cfg, &test_ds, &test_env, &eval, recipe.eval_every, seed, Some(&init))?;
        cell.curves.extend(rows);
        cell.points.push(Point::from_report(name, seed, Some(meta.test_task.power_factor), &report));
    }
    for (name, mode) in [("ctde-cql", Mode::Ctde), ("i-cql", Mode::Independent)] {
        let cfg = TrainerConfig {
            epochs: meta.adapt_epochs,
            hidden: meta.base_trainer.hidden.clone(),
            ..scheme_config(recipe, Algo::Cql, mode, seed)
        };
        let (rows, report) = train_scheme(name, &cfg, &test_ds, &test_env, &eval, recipe.eval_every, seed, None)?;
        cell.curves.extend(rows);
        cell.points.push(Point::from_report(name, seed, Some(meta.test_task.power_factor), &report));
    }
    Ok(cell)
}

/// Runs a figure recipe and writes `<fig>_<scheme>.csv` curves,
/// `<fig>_points.csv` and `<fig>_summary.csv` into `output_dir`.
pub fn run_figure(recipe: &FigureRecipe, output_dir: impl AsRef<Path>) -> Result<FigureReport> {
    recipe.validate()?;
    let cells: Vec<(u64, Option<f64>)> = match recipe.figure {
        FigureId::Fig4 => recipe
            .seeds
            .iter()
            .flat_map(|&s| recipe.power_factors.iter().map(move |&f| (s, Some(f))))
            .collect(),
        _ => recipe.seeds.iter().map(|&s| (s, None)).collect(),
    };
    let pool = worker_pool()?;
    let results: Vec<Result<Cell>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(seed, factor)| match (recipe.figure, factor) {
                (FigureId::Fig3, _) => fig3_cell(recipe, seed),
                (FigureId::Fig4, Some(f)) => fig4_cell(recipe, seed, f),
                (FigureId::Fig4, None) => unreachable!("fig4 cells carry a power factor"),
                (FigureId::Fig5, _) => fig5_cell(recipe, seed),
            })
            .collect()
    });
    let mut report = FigureReport {
        figure: recipe.figure,
        points: vec![],
        curves: vec![],
        files: vec![],
    };
    for r in results {
        let cell = r?;
        report.points.extend(cell.points);
        report.curves.extend(cell.curves);
    }
    report.write(output_dir.as_ref())?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_epoch_schedule() {
        assert_eq!(eval_epochs(10, 4), vec![4, 8, 10]);
        assert_eq!(eval_epochs(10, 5), vec![5, 10]);
        assert!(eval_epochs(0, 5).is_empty());
    }
}
