//! One function per subcommand. Each writes its result files and returns a
//! short summary for the terminal.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use hitl_core::agent::ThresholdAgent;
use hitl_core::expert::plan_optimal;
use hitl_core::harness::{
    self, default_eps_grid, evaluate, max_table_variance, rolling_mean, write_curve, write_traces, write_variance_map,
    RunConfig, RunMeta,
};
use hitl_core::learner::{train as train_tables, GreedyPolicy, TableFile, TableMeta};
use hitl_core::oracle::{exact_policy_eval, learned_variance_map, mc_variance, topn_accuracy, VarianceMap};
use hitl_core::{maps, GridWorld};

use crate::{
    CliError, EvalArgs, Result, RunArgs, SweepPenaltyArgs, SweepThresholdArgs, TopnArgs, TrainArgs, TruthSource,
    VarianceMapArgs, VarianceSource,
};

fn world_of(cfg: &RunConfig) -> Result<GridWorld> {
    Ok(GridWorld::new(maps::load(&cfg.run.map)?, cfg.env)?)
}

/// Loads a table file and aligns the run with it: the table header decides the
/// map, observation mode and discount. A flag that contradicts it is an error.
fn load_tables(args: &RunArgs, cfg: &mut RunConfig, path: &Path) -> Result<(TableFile, GridWorld)> {
    let tables = TableFile::load(path)?;
    let meta = &tables.meta;
    if let Some(mode) = args.mode.filter(|&m| m != meta.mode) {
        return Err(CliError::Usage(format!(
            "--mode {mode} contradicts the {} tables in {}",
            meta.mode,
            path.display()
        )));
    }
    cfg.run.mode = meta.mode;
    cfg.env.gamma = meta.gamma;
    let mut grid = maps::load(&cfg.run.map)?;
    if grid.name() != meta.map {
        if args.map.is_some() {
            return Err(CliError::Usage(format!(
                "map {:?} does not match tables trained on {:?}",
                grid.name(),
                meta.map
            )));
        }
        grid = maps::load(&meta.map)?;
        cfg.run.map = meta.map.clone();
    }
    let world = GridWorld::new(grid, cfg.env)?;
    Ok((tables, world))
}

fn meta_of(cfg: &RunConfig, world: &GridWorld) -> RunMeta {
    RunMeta::new(cfg.hash(), cfg.run.seed, world.map.name())
        .with("m_update_mode", cfg.train.m_update_mode)
        .with("mode", cfg.run.mode)
}

fn output_path(cfg: &RunConfig, given: &Option<PathBuf>, file: String) -> PathBuf {
    given.clone().unwrap_or_else(|| cfg.out_dir().join(file))
}

pub fn train(args: &TrainArgs) -> Result<String> {
    let mut cfg = args.run.resolve()?;
    args.train.apply(&mut cfg);
    cfg.train.seed = cfg.run.seed;
    let world = world_of(&cfg)?;
    let trained = train_tables(&world, cfg.run.mode, &cfg.train)?;
    let file = TableFile {
        meta: TableMeta {
            map: world.map.name().to_string(),
            mode: cfg.run.mode,
            gamma: cfg.env.gamma,
            m_update_mode: cfg.train.m_update_mode,
            config_hash: cfg.hash(),
        },
        q: trained.q,
        m: trained.m,
    };
    let path = output_path(&cfg, &args.output, format!("{}.table", world.map.name()));
    file.save(&path)?;
    let log = &trained.log;
    let tail = log.episode_returns.len().min(500);
    let recent = log.episode_returns[log.episode_returns.len() - tail..].iter().sum::<f64>() / tail.max(1) as f64;
    Ok(format!(
        "trained {} episodes ({} transitions, converged: {}, expert calls: {}); mean return of last {tail}: {recent:.3}\nwrote {}",
        log.episodes(),
        log.transitions,
        log.converged,
        log.expert_calls,
        path.display()
    ))
}

pub fn eval(args: &EvalArgs) -> Result<String> {
    let mut cfg = args.run.resolve()?;
    let (tables, world) = load_tables(&args.run, &mut cfg, &args.table)?;
    let episodes = args.episodes.unwrap_or(cfg.deploy.episodes);
    let expert = plan_optimal(&world)?;
    let agent = ThresholdAgent { q: Arc::new(tables.q), m: Arc::new(tables.m), epsilon: args.epsilon };
    let traces = evaluate(&world, cfg.run.mode, &agent, &expert, episodes, cfg.run.seed)?;
    let n = traces.len() as f64;
    let mean_return = traces.iter().map(|t| t.total_return).sum::<f64>() / n;
    let mean_calls = traces.iter().map(|t| t.expert_calls as f64).sum::<f64>() / n;
    let meta = meta_of(&cfg, &world).with("epsilon", args.epsilon).with("episodes", episodes);
    let path = cfg.out_dir().join(format!("{}_traces.csv", world.map.name()));
    write_traces(&path, &traces, &meta)?;
    Ok(format!(
        "epsilon {}: mean return {mean_return:.3}, mean expert calls {mean_calls:.2} over {episodes} episodes\nwrote {}",
        args.epsilon,
        path.display()
    ))
}

pub fn sweep_threshold(args: &SweepThresholdArgs) -> Result<String> {
    let mut cfg = args.run.resolve()?;
    let (tables, world) = load_tables(&args.run, &mut cfg, &args.table)?;
    if let Some(eps) = &args.epsilons {
        cfg.deploy.epsilons = eps.clone();
    }
    if let Some(n) = args.episodes {
        cfg.deploy.episodes = n;
    }
    if let Some(w) = args.window {
        cfg.deploy.window = w;
    }
    let grid = if cfg.deploy.epsilons.is_empty() {
        default_eps_grid(max_table_variance(&tables.q, &tables.m))
    } else {
        cfg.deploy.epsilons.clone()
    };
    let expert = plan_optimal(&world)?;
    let points = harness::sweep_threshold(
        &world,
        cfg.run.mode,
        &tables.q,
        &tables.m,
        &expert,
        &grid,
        cfg.deploy.episodes,
        cfg.run.seed,
    )?;
    let meta = meta_of(&cfg, &world)
        .with("sweep", "threshold")
        .with("episodes", cfg.deploy.episodes)
        .with("table_config_hash", &tables.meta.config_hash);
    let out = cfg.out_dir();
    let raw = out.join(format!("{}_threshold.csv", world.map.name()));
    let smooth = out.join(format!("{}_threshold_smoothed.csv", world.map.name()));
    write_curve(&raw, &points, &meta)?;
    write_curve(&smooth, &rolling_mean(&points, cfg.deploy.window), &meta.with("window", cfg.deploy.window))?;
    let mut summary = String::from("epsilon        calls     return   stderr\n");
    for p in &points {
        let _ = writeln!(
            summary,
            "{:<12.5} {:>7.3} {:>10.3} {:>8.3}",
            p.param_value, p.mean_expert_calls, p.mean_return, p.return_stderr
        );
    }
    let _ = write!(summary, "wrote {} and {}", raw.display(), smooth.display());
    Ok(summary)
}

pub fn sweep_penalty(args: &SweepPenaltyArgs) -> Result<String> {
    let mut cfg = args.run.resolve()?;
    args.train.apply(&mut cfg);
    if let Some(c) = &args.c_grid {
        cfg.penalty.c_grid = c.clone();
    }
    if let Some(n) = args.episodes {
        cfg.deploy.episodes = n;
    }
    if let Some(w) = args.window {
        cfg.deploy.window = w;
    }
    let world = world_of(&cfg)?;
    let expert = plan_optimal(&world)?;
    let sweep = harness::sweep_penalty(
        &world,
        cfg.run.mode,
        &cfg.penalty.c_grid,
        &cfg.train,
        &expert,
        cfg.deploy.episodes,
        cfg.run.seed,
    )?;
    let per_c: Vec<String> = sweep.training_calls.iter().map(|(c, n)| format!("{c}:{n}")).collect();
    let meta = meta_of(&cfg, &world)
        .with("sweep", "penalty")
        .with("episodes", cfg.deploy.episodes)
        .with("training_calls_total", sweep.total_training_calls())
        .with("training_calls", per_c.join(" "));
    let out = cfg.out_dir();
    let raw = out.join(format!("{}_penalty.csv", world.map.name()));
    let smooth = out.join(format!("{}_penalty_smoothed.csv", world.map.name()));
    write_curve(&raw, &sweep.points, &meta)?;
    write_curve(&smooth, &rolling_mean(&sweep.points, cfg.deploy.window), &meta.with("window", cfg.deploy.window))?;
    let mut summary = String::from("penalty        calls     return   stderr\n");
    for p in &sweep.points {
        let _ = writeln!(
            summary,
            "{:<12.3} {:>7.3} {:>10.3} {:>8.3}",
            p.param_value, p.mean_expert_calls, p.mean_return, p.return_stderr
        );
    }
    let _ = write!(
        summary,
        "training expert calls: {} in total\nwrote {} and {}",
        sweep.total_training_calls(),
        raw.display(),
        smooth.display()
    );
    Ok(summary)
}

fn truth_map(
    world: &GridWorld,
    cfg: &RunConfig,
    tables: &TableFile,
    exact: bool,
    rollouts: usize,
) -> Result<VarianceMap> {
    let policy = GreedyPolicy(&tables.q);
    Ok(if exact {
        exact_policy_eval(world, cfg.run.mode, &policy)?.variance_map("greedy")
    } else {
        mc_variance(world, cfg.run.mode, &policy, rollouts, cfg.run.seed, "greedy")?
    })
}

pub fn variance_map(args: &VarianceMapArgs) -> Result<String> {
    let mut cfg = args.run.resolve()?;
    let (tables, world) = load_tables(&args.run, &mut cfg, &args.table)?;
    let (vmap, label) = match args.source {
        VarianceSource::Learned => {
            (learned_variance_map(&world, cfg.run.mode, &tables.q, &tables.m, "greedy"), "learned")
        }
        VarianceSource::Mc => (truth_map(&world, &cfg, &tables, false, args.rollouts)?, "mc"),
        VarianceSource::Exact => (truth_map(&world, &cfg, &tables, true, args.rollouts)?, "exact"),
    };
    let path = output_path(&cfg, &args.output, format!("{}_variance_{label}.txt", world.map.name()));
    let meta = meta_of(&cfg, &world).with("table_config_hash", &tables.meta.config_hash);
    write_variance_map(&path, &vmap, &world.map, &meta)?;
    Ok(format!("{} states, largest variance {:.4}\nwrote {}", vmap.values.len(), vmap.max_value(), path.display()))
}

pub fn topn(args: &TopnArgs) -> Result<String> {
    let mut cfg = args.run.resolve()?;
    let (tables, world) = load_tables(&args.run, &mut cfg, &args.table)?;
    let learned = learned_variance_map(&world, cfg.run.mode, &tables.q, &tables.m, "greedy");
    let truth = truth_map(&world, &cfg, &tables, args.truth == TruthSource::Exact, args.rollouts)?;
    let mut summary = String::new();
    for &n in &args.n {
        let acc = topn_accuracy(&learned, &truth, n)?;
        let _ = writeln!(summary, "top-{n}: {acc:.3}");
    }
    let _ = write!(summary, "{} states, truth from {}", truth.values.len(), truth.provenance);
    Ok(summary)
}
