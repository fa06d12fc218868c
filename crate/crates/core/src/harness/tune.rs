//! Learning-rate tuning and multi-seed aggregation.

use super::config::ExperimentConfig;
use super::runner::{run_single, RunRecord};
use crate::error::Result;
use rayon::prelude::*;

/// Multi-seed aggregate of the winning learning rate of one optimizer.
#[derive(Debug, Clone)]
pub struct Aggregate {
    pub chosen_lr: f64,
    pub eval_steps: Vec<u64>,
    /// Mean problem metric across seeds at each evaluation step.
    pub mean: Vec<f64>,
    /// Standard error of the mean (n-1 denominator).
    pub sem: Vec<f64>,
    /// Mean tail metric across seeds at the chosen learning rate.
    pub tail_mean: f64,
}

/// Tuning outcome of one optimizer.
#[derive(Debug, Clone)]
pub struct OptimizerReport {
    pub optimizer: String,
    /// `None` when every learning rate diverged on every seed.
    pub aggregate: Option<Aggregate>,
    /// Mean tail metric per learning rate (infinite when all seeds died).
    pub per_lr_tail: Vec<(f64, f64)>,
}

#[derive(Debug)]
pub struct TuneOutcome {
    pub reports: Vec<OptimizerReport>,
    /// Every run, ordered by (optimizer index, lr index, seed index).
    pub records: Vec<RunRecord>,
}

fn aggregate_for(records: &[&RunRecord], horizon: u64, chosen_lr: f64) -> Aggregate {
    let eval_steps: Vec<u64> = records[0].rows.iter().map(|r| r.t).collect();
    let n = records.len() as f64;
    let mut mean = Vec::with_capacity(eval_steps.len());
    let mut sem = Vec::with_capacity(eval_steps.len());
    for (i, _) in eval_steps.iter().enumerate() {
        let vals: Vec<f64> = records.iter().map(|r| r.rows[i].metric).collect();
        let m = vals.iter().sum::<f64>() / n;
        let var = if vals.len() > 1 {
            vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        mean.push(m);
        sem.push((var / n).sqrt());
    }
    let tail_mean =
        records.iter().map(|r| r.tail_metric(horizon)).sum::<f64>() / records.len() as f64;
    Aggregate {
        chosen_lr,
        eval_steps,
        mean,
        sem,
        tail_mean,
    }
}

/// Run every (optimizer, lr, seed) combination, pick the learning rate with
/// the best mean tail metric per optimizer (ties toward the smaller rate),
/// and aggregate the winner across seeds. Runs execute in parallel; the
/// output ordering and contents are independent of the worker count.
pub fn tune_and_aggregate(cfg: &ExperimentConfig) -> Result<TuneOutcome> {
    let combos: Vec<(usize, usize, usize)> = (0..cfg.optimizers.len())
        .flat_map(|o| {
            (0..cfg.lr_grid.len())
                .flat_map(move |l| (0..cfg.seeds.len()).map(move |s| (o, l, s)))
        })
        .collect();
    let records: Vec<RunRecord> = combos
        .par_iter()
        .map(|(o, l, s)| {
            run_single(
                cfg,
                &cfg.optimizers[*o],
                cfg.lr_grid[*l],
                cfg.seeds[*s],
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let n_lr = cfg.lr_grid.len();
    let n_seed = cfg.seeds.len();
    let mut reports = Vec::new();
    for (o, opt) in cfg.optimizers.iter().enumerate() {
        let base = o * n_lr * n_seed;
        let mut per_lr_tail = Vec::with_capacity(n_lr);
        for (l, lr) in cfg.lr_grid.iter().enumerate() {
            let tails: Vec<f64> = (0..n_seed)
                .map(|s| records[base + l * n_seed + s].tail_metric(cfg.horizon))
                .collect();
            let mean = tails.iter().sum::<f64>() / n_seed as f64;
            per_lr_tail.push((*lr, mean));
        }
        // smallest mean tail wins; scanning in ascending lr order breaks
        // ties toward the smaller rate
        let mut best: Option<(usize, f64)> = None;
        for (l, (_, tail)) in per_lr_tail.iter().enumerate() {
            if tail.is_finite() && best.map_or(true, |(_, b)| *tail < b) {
                best = Some((l, *tail));
            }
        }
        let aggregate = best.map(|(l, _)| {
            let winners: Vec<&RunRecord> = (0..n_seed)
                .map(|s| &records[base + l * n_seed + s])
                .filter(|r| r.diverged.is_none())
                .collect();
            aggregate_for(&winners, cfg.horizon, cfg.lr_grid[l])
        });
        reports.push(OptimizerReport {
            optimizer: opt.kind.as_str().to_string(),
            aggregate,
            per_lr_tail,
        });
    }
    Ok(TuneOutcome { reports, records })
}
