//! Command-line front end: run experiments, sweep hyperparameters, verify
//! bounds against simulations, print the per-step bound constants, and
//! plot result CSVs.

mod svg;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use nsopt_core::bounds;
use nsopt_core::harness::{
    parse_override, persist, read_csv, tune_and_aggregate, verify_bounds, ExperimentConfig,
};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "nsopt", version, about = "Stochastic optimizer tracking testbed")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Experiment config file (`section.key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Override config entries, e.g. `--set optim.eps=1e-4`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory root.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Replace the seed list, e.g. `--seed-list 0,1,2,3`.
    #[arg(long, value_name = "SEEDS")]
    seed_list: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment: tune learning rates, aggregate
    /// across seeds, and persist CSVs plus a manifest.
    Run(ConfigArgs),
    /// Run the experiment once per value of the configured sweep axis.
    Sweep(ConfigArgs),
    /// Check the tracking/stationarity bounds against Monte Carlo runs.
    Verify {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Independent verification seeds.
        #[arg(long, default_value_t = 50)]
        reps: u32,
        /// Failure probability of the high-probability statements.
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
    },
    /// Print the per-step moment-average constants and bound values.
    Constants {
        #[arg(long, default_value_t = 0.9)]
        beta1: f64,
        #[arg(long, default_value_t = 0.999)]
        beta2: f64,
        /// Largest time index to print.
        #[arg(long, default_value_t = 10)]
        t: u64,
        #[arg(long, default_value_t = 1e-3)]
        alpha: f64,
        /// Smoothness constant entering D1.
        #[arg(long, default_value_t = 1.0)]
        lipschitz: f64,
        /// Gradient-norm bound (clip level).
        #[arg(long, default_value_t = 10.0)]
        g: f64,
        #[arg(long, default_value_t = 1e-8)]
        eps: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = 100)]
        d: usize,
        /// Horizon T in the log(2T/delta) factors.
        #[arg(long, default_value_t = 500)]
        horizon: u64,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
    },
    /// Render mean curves with one-standard-error bands from run CSVs.
    Plot {
        /// Run CSVs; files are grouped into series by the optimizer prefix
        /// of their file name (`<optimizer>_lr..._seed....csv`).
        csvs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Column to plot.
        #[arg(long, default_value = "metric")]
        col: String,
        #[arg(long, default_value = "")]
        title: String,
        #[arg(long, default_value = "t")]
        xlabel: String,
        #[arg(long, default_value = "metric")]
        ylabel: String,
    },
}

fn load_config(args: &ConfigArgs) -> anyhow::Result<ExperimentConfig> {
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let mut overrides = Vec::new();
    for s in &args.set {
        overrides.push(parse_override(s)?);
    }
    if let Some(seeds) = &args.seed_list {
        overrides.push(("run.seeds".to_string(), format!("[{seeds}]")));
    }
    Ok(ExperimentConfig::parse(&text, &overrides)?)
}

fn cmd_run(args: &ConfigArgs) -> anyhow::Result<()> {
    let cfg = load_config(args)?;
    let outcome = tune_and_aggregate(&cfg)?;
    let dir = persist(&args.out, &cfg, &outcome)?;
    for report in &outcome.reports {
        match &report.aggregate {
            Some(agg) => println!(
                "{}: lr = {} (tail metric {:.6e})",
                report.optimizer, agg.chosen_lr, agg.tail_mean
            ),
            None => println!("{}: every learning rate diverged", report.optimizer),
        }
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn cmd_sweep(args: &ConfigArgs) -> anyhow::Result<()> {
    let base = load_config(args)?;
    let sweep = base
        .sweep
        .clone()
        .context("config has no sweep.param / sweep.values")?;
    for value in &sweep.values {
        let cfg = base.with_override(&sweep.param, value)?;
        let outcome = tune_and_aggregate(&cfg)?;
        let dir = persist(&args.out, &cfg, &outcome)?;
        let summary: Vec<String> = outcome
            .reports
            .iter()
            .map(|r| match &r.aggregate {
                Some(a) => format!("{} tail {:.6e} (lr {})", r.optimizer, a.tail_mean, a.chosen_lr),
                None => format!("{} diverged", r.optimizer),
            })
            .collect();
        println!("{} = {value}: {} -> {}", sweep.param, summary.join(", "), dir.display());
    }
    Ok(())
}

fn cmd_verify(args: &ConfigArgs, reps: u32, delta: f64) -> anyhow::Result<()> {
    let cfg = load_config(args)?;
    let report = verify_bounds(&cfg, reps, delta)?;
    for line in report.summary_lines() {
        println!("{line}");
    }
    if !report.passed() {
        bail!("bound verification failed");
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_constants(
    beta1: f64,
    beta2: f64,
    t_max: u64,
    alpha: f64,
    lipschitz: f64,
    g: f64,
    eps: f64,
    sigma: f64,
    d: usize,
    horizon: u64,
    delta: f64,
) -> anyhow::Result<()> {
    if t_max == 0 {
        bail!("--t must be at least 1");
    }
    println!("t,kappa,omega,c,vartheta,r_bound,eta_bound");
    for t in 1..=t_max {
        let cs = bounds::constants(t, beta1, beta2, g, eps, alpha, lipschitz);
        let r_bound = bounds::r_hp_bound(t - 1, beta1, sigma, d, g, cs.d1, horizon, delta);
        let eta = bounds::eta_bound(t - 1, beta2, g, eps);
        println!(
            "{t},{},{},{},{},{},{}",
            cs.kappa, cs.omega, cs.c, cs.vartheta, r_bound, eta
        );
    }
    Ok(())
}

fn optimizer_prefix(path: &Path) -> anyhow::Result<String> {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .context("CSV path has no file name")?;
    match name.split_once("_lr") {
        Some((prefix, _)) => Ok(prefix.to_string()),
        None => Ok(name.trim_end_matches(".csv").to_string()),
    }
}

fn cmd_plot(
    csvs: &[PathBuf],
    out: &Path,
    col: &str,
    title: &str,
    xlabel: &str,
    ylabel: &str,
) -> anyhow::Result<()> {
    if csvs.is_empty() {
        bail!("no input CSVs");
    }
    const PLOTTABLE: [&str; 10] = [
        "tracking_err",
        "metric",
        "delta_sq",
        "r_norm",
        "eta_norm_sq",
        "pg_norm_sq",
        "var_inc",
        "bound_hp",
        "bound_exp",
        "bound_pg",
    ];
    if !PLOTTABLE.contains(&col) {
        bail!(
            "unknown column `{col}` (schema: {})",
            nsopt_core::metrics::CSV_COLUMNS
        );
    }
    let pick = |row: &nsopt_core::metrics::StepMetrics| -> Option<f64> {
        match col {
            "tracking_err" => Some(row.tracking_err),
            "metric" => Some(row.metric),
            "delta_sq" => Some(row.delta_sq),
            "r_norm" => row.r_norm,
            "eta_norm_sq" => row.eta_norm_sq,
            "pg_norm_sq" => row.pg_norm_sq,
            "var_inc" => row.var_inc,
            "bound_hp" => row.bound_hp,
            "bound_exp" => row.bound_exp,
            "bound_pg" => row.bound_pg,
            _ => None,
        }
    };

    let mut groups: BTreeMap<String, Vec<(Vec<u64>, Vec<f64>)>> = BTreeMap::new();
    for path in csvs {
        let rows = read_csv(path)?;
        if rows.is_empty() {
            bail!("{}: no data rows", path.display());
        }
        let xs: Vec<u64> = rows.iter().map(|r| r.t).collect();
        let ys: Vec<f64> = rows
            .iter()
            .map(|r| {
                pick(r).with_context(|| {
                    format!("{}: column `{col}` is empty in this file", path.display())
                })
            })
            .collect::<anyhow::Result<_>>()?;
        groups
            .entry(optimizer_prefix(path)?)
            .or_default()
            .push((xs, ys));
    }

    let mut series = Vec::new();
    for (label, members) in groups {
        let xs = &members[0].0;
        for (mx, _) in &members {
            if mx != xs {
                bail!("series `{label}`: evaluation steps differ between files");
            }
        }
        let n = members.len() as f64;
        let mut mean = Vec::with_capacity(xs.len());
        let mut sem = Vec::with_capacity(xs.len());
        for i in 0..xs.len() {
            let vals: Vec<f64> = members.iter().map(|(_, ys)| ys[i]).collect();
            let m = vals.iter().sum::<f64>() / n;
            let var = if vals.len() > 1 {
                vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            mean.push(m);
            sem.push((var / n).sqrt());
        }
        series.push(svg::Series {
            label,
            xs: xs.iter().map(|x| *x as f64).collect(),
            mean,
            sem,
        });
    }
    let rendered = svg::render(&series, title, xlabel, ylabel);
    std::fs::write(out, rendered).with_context(|| format!("writing {}", out.display()))?;
    println!("wrote {}", out.display());
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Verify { cfg, reps, delta } => cmd_verify(cfg, *reps, *delta),
        Command::Constants {
            beta1,
            beta2,
            t,
            alpha,
            lipschitz,
            g,
            eps,
            sigma,
            d,
            horizon,
            delta,
        } => cmd_constants(
            *beta1, *beta2, *t, *alpha, *lipschitz, *g, *eps, *sigma, *d, *horizon, *delta,
        ),
        Command::Plot {
            csvs,
            out,
            col,
            title,
            xlabel,
            ylabel,
        } => cmd_plot(csvs, out, col, title, xlabel, ylabel),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
