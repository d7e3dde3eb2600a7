//! Maze exploration runs: replay-buffer training (and optionally the
//! exact-evaluation study) across a (direction, temperature, seed) grid,
//! exporting learning curves and per-checkpoint state-visitation grids.

use crate::config::MazeConfig;
use crate::out::{float_tag, write_csv};
use anyhow::Result;
use klgreed::agent::{
    rollout_visitation, train, true_value_training, TrainConfig, TrainResult,
};
use klgreed::greedify::KlVariant;
use klgreed::mdp::maze::{MazeLayout, MAZE_10X10, MAZE_10X10_SEED};
use klgreed::mdp::{discrete_maze, FiniteMdp};
use klgreed::rng::RngStream;
use rayon::prelude::*;
use std::path::{Path, PathBuf};

pub struct MazeSetup {
    pub layout: MazeLayout,
    pub mdp: FiniteMdp,
    pub terminal: Vec<bool>,
    pub goal: usize,
}

/// Builds the maze MDP for a config: start top-left, goal bottom-right.
/// The committed 10x10 layout is used at its size and seed; anything else
/// comes from the deterministic generator.
pub fn setup(config: &MazeConfig) -> Result<MazeSetup> {
    let layout = if (config.width, config.height, config.layout_seed)
        == (10, 10, MAZE_10X10_SEED)
    {
        MazeLayout::parse(MAZE_10X10)?
    } else {
        MazeLayout::generate(config.width, config.height, config.layout_seed)
    };
    let goal_xy = (config.width - 1, config.height - 1);
    let mdp = discrete_maze(&layout, (0, 0), goal_xy, config.gamma);
    let goal = layout.index(goal_xy.0, goal_xy.1);
    let mut terminal = vec![false; layout.n_cells()];
    terminal[goal] = true;
    Ok(MazeSetup {
        layout,
        mdp,
        terminal,
        goal,
    })
}

pub fn train_config(config: &MazeConfig, variant: KlVariant, seed: u64) -> TrainConfig {
    let mut tc = TrainConfig::maze_defaults(variant, seed);
    tc.actor_lr = config.actor_lr;
    tc.critic_lr = config.critic_lr;
    tc.batch_size = config.batch;
    tc.buffer_capacity = config.buffer;
    tc.iterations = config.iterations;
    tc.timeout = config.timeout;
    tc.n_checkpoints = config.n_checkpoints;
    tc.rollouts_per_checkpoint = config.rollouts;
    tc
}

/// All per-seed training results for one (direction, temperature) cell, in
/// seed order.
pub fn run_cell(config: &MazeConfig, kl: &str, tau: f64) -> Result<Vec<TrainResult>> {
    let setup = setup(config)?;
    let variant = KlVariant::from_name_tau(kl, tau)?;
    (0..config.seeds)
        .into_par_iter()
        .map(|seed| {
            let tc = train_config(config, variant, seed);
            train(&setup.mdp, &setup.terminal, &tc).map_err(anyhow::Error::from)
        })
        .collect()
}

pub fn run(config: &MazeConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let setup = setup(config)?;
    let mut files = Vec::new();
    let mut curve_rows: Vec<String> = Vec::new();
    let env_name = format!("maze{}x{}", config.width, config.height);

    for kl in &config.kls {
        for &tau in &config.taus {
            let results = run_cell(config, kl, tau)?;
            let mut visit_rows = Vec::new();
            let mut mean_by_checkpoint: Vec<(usize, Vec<f64>)> = Vec::new();
            for (seed, result) in results.iter().enumerate() {
                for cp in &result.checkpoints {
                    curve_rows.push(format!(
                        "{env_name},{kl},{tau},{},{},{seed},{},{},{}",
                        config.actor_lr, config.critic_lr, cp.step, cp.eta_tau, cp.eta
                    ));
                    for (cell, &count) in cp.visitation.iter().enumerate() {
                        let (x, y) = setup.layout.coords(cell);
                        visit_rows.push(format!("{seed},{},{x},{y},{count}", cp.step));
                    }
                    match mean_by_checkpoint.iter_mut().find(|(s, _)| *s == cp.step) {
                        Some((_, acc)) => {
                            for (a, &c) in acc.iter_mut().zip(&cp.visitation) {
                                *a += c;
                            }
                        }
                        None => mean_by_checkpoint.push((cp.step, cp.visitation.clone())),
                    }
                }
            }
            files.push(write_csv(
                out_dir,
                &format!("visitation_{kl}_tau{}.csv", float_tag(tau)),
                "seed,checkpoint,x,y,normalized_count",
                visit_rows,
            )?);
            let n_seeds = results.len() as f64;
            let avg_rows = mean_by_checkpoint.iter().flat_map(|(step, acc)| {
                let step = *step;
                acc.iter().enumerate().map(move |(cell, &sum)| {
                    (step, cell, sum / n_seeds)
                })
            });
            files.push(write_csv(
                out_dir,
                &format!("visitation_avg_{kl}_tau{}.csv", float_tag(tau)),
                "checkpoint,x,y,normalized_count",
                avg_rows.map(|(step, cell, mean)| {
                    let (x, y) = setup.layout.coords(cell);
                    format!("{step},{x},{y},{mean}")
                }),
            )?);
        }
    }
    files.push(write_csv(
        out_dir,
        "curves.csv",
        "env,kl,tau,lr_actor,lr_critic,seed,step,eta_tau,eta",
        curve_rows,
    )?);

    if config.true_values {
        files.extend(run_true_values(config, &setup, out_dir)?);
    }
    Ok(files)
}

/// Exact-evaluation study: per (direction, temperature, seed), dynamic
/// programming alternated with one full-state greedification step; emits
/// rollout visitation grids for a few snapshots along the way.
fn run_true_values(
    config: &MazeConfig,
    setup: &MazeSetup,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    let marks: Vec<usize> = {
        let n = config.true_value_iters;
        let mut m = vec![0, n / 10, n / 2, n];
        m.dedup();
        m
    };
    for kl in &config.kls {
        for &tau in &config.taus {
            let variant = KlVariant::from_name_tau(kl, tau)?;
            let per_seed: Vec<Vec<(usize, Vec<f64>)>> = (0..config.seeds)
                .into_par_iter()
                .map(|seed| -> Result<Vec<(usize, Vec<f64>)>> {
                    let snapshots = true_value_training(
                        &setup.mdp,
                        variant,
                        config.true_value_lr,
                        config.true_value_iters,
                        seed,
                    )?;
                    let mut grids = Vec::new();
                    for &mark in &marks {
                        let mut rng = RngStream::new(seed).substream(7_000_000 + mark as u64);
                        let grid = rollout_visitation(
                            &setup.mdp,
                            &setup.terminal,
                            &snapshots[mark],
                            config.rollouts,
                            config.timeout,
                            &mut rng,
                        );
                        grids.push((mark, grid));
                    }
                    Ok(grids)
                })
                .collect::<Result<Vec<_>>>()?;
            let rows = per_seed.iter().enumerate().flat_map(|(seed, grids)| {
                grids.iter().flat_map(move |(mark, grid)| {
                    grid.iter().enumerate().map(move |(cell, &count)| {
                        (seed, *mark, cell, count)
                    })
                })
            });
            files.push(write_csv(
                out_dir,
                &format!("visitation_true_{kl}_tau{}.csv", float_tag(tau)),
                "seed,checkpoint,x,y,normalized_count",
                rows.map(|(seed, mark, cell, count)| {
                    let (x, y) = setup.layout.coords(cell);
                    format!("{seed},{mark},{x},{y},{count}")
                }),
            )?);
        }
    }
    Ok(files)
}
