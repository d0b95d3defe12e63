//! Learned switch posteriors under both estimators on a synthetic task
//! with a known switch.

use super::config::ExperimentConfig;
use super::stats::spearman;
use super::synthetic::{gen_synthetic, SyntheticTask};
use super::{rng_for, write_csv_file};
use crate::error::{Error, Result};
use crate::switch::{posterior_report, train_switches, Estimator, SwitchSchedule, SwitchState, SwitchTraining};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRow {
    pub channel: usize,
    pub true_switch: f64,
    pub mean_mc: f64,
    pub std_mc: f64,
    pub mean_am: f64,
    pub std_am: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimingRow {
    pub estimator: &'static str,
    pub k: usize,
    pub epoch: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct PosteriorComparison {
    pub task: SyntheticTask,
    pub rows: Vec<ChannelRow>,
    pub timings: Vec<TimingRow>,
    /// Spearman correlation of each posterior mean with the true switch.
    pub spearman_mc: f64,
    pub spearman_am: f64,
    pub degenerate_draws: usize,
}

impl PosteriorComparison {
    /// Mean seconds per epoch for the estimator tagged `estimator`.
    pub fn mean_epoch_seconds(&self, estimator: &str) -> f64 {
        let t: Vec<f64> = self
            .timings
            .iter()
            .filter(|r| r.estimator == estimator)
            .map(|r| r.seconds)
            .collect();
        t.iter().sum::<f64>() / t.len() as f64
    }

    pub fn write_reports(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let channels = dir.join("posterior_compare.csv");
        write_csv_file(
            &channels,
            &["channel", "true_switch", "mean_mc", "std_mc", "mean_am", "std_am"],
            self.rows.iter().map(|r| {
                vec![
                    r.channel.to_string(),
                    format!("{:e}", r.true_switch),
                    format!("{:e}", r.mean_mc),
                    format!("{:e}", r.std_mc),
                    format!("{:e}", r.mean_am),
                    format!("{:e}", r.std_am),
                ]
            }),
        )?;
        let timing = dir.join("posterior_timing.csv");
        write_csv_file(
            &timing,
            &["estimator", "k", "epoch", "seconds"],
            self.timings.iter().map(|t| {
                vec![
                    t.estimator.to_string(),
                    t.k.to_string(),
                    t.epoch.to_string(),
                    format!("{:.6}", t.seconds),
                ]
            }),
        )?;
        Ok((channels, timing))
    }
}

/// Generates the task named by `dims = d_x,d_h` and trains its switch
/// once with each estimator (implicit MC with `k` samples, then the
/// analytic mean) from the same starting point.
pub fn run_posterior_compare(config: &ExperimentConfig) -> Result<PosteriorComparison> {
    config.require(&["dims", "seed", "n", "k", "alpha0"])?;
    config.log_resolved("posterior-compare");
    let dims = config.list("dims")?.unwrap_or_default();
    let [d_x, d_h] = dims[..] else {
        return Err(Error::config(format!("dims must be d_x,d_h, got {dims:?}")));
    };
    let seed = config.seed()?;
    let n: usize = config.value("n")?;
    let k: usize = config.value("k")?;
    let alpha0: f64 = config.value("alpha0")?;
    let kl_weight: Option<f64> = config.parsed("kl_weight")?;
    let schedule = SwitchSchedule {
        epochs: config.value("switch_epochs")?,
        batch_size: config.value("switch_batch_size")?,
        lr: config.value("switch_lr")?,
        ..SwitchSchedule::default()
    };
    let (task, data) = gen_synthetic(d_x, d_h, n, &mut rng_for(seed, 0))?;
    let model = task.model()?;

    let train = |estimator: Estimator, stream: u64| -> Result<SwitchTraining> {
        let mut state = SwitchState::new(d_h, alpha0, estimator)?;
        state.kl_weight = kl_weight;
        train_switches(&model, vec![state], &data, &schedule, &mut rng_for(seed, stream))
    };
    let mc = train(Estimator::ImplicitMc { k }, 1)?;
    let am = train(Estimator::AnalyticMean, 2)?;

    let mc_post = posterior_report(&mc.states[0]);
    let am_post = posterior_report(&am.states[0]);
    let rows: Vec<ChannelRow> = (0..d_h)
        .map(|c| ChannelRow {
            channel: c,
            true_switch: task.true_switch.values()[c],
            mean_mc: mc_post[c].0,
            std_mc: mc_post[c].1,
            mean_am: am_post[c].0,
            std_am: am_post[c].1,
        })
        .collect();
    let truth = task.true_switch.values();
    let spearman_mc = spearman(&rows.iter().map(|r| r.mean_mc).collect::<Vec<_>>(), truth);
    let spearman_am = spearman(&rows.iter().map(|r| r.mean_am).collect::<Vec<_>>(), truth);
    let mut timings = Vec::new();
    for (tag, kk, run) in [("implicit_mc", k, &mc), ("analytic_mean", 1, &am)] {
        timings.extend(run.epochs.iter().map(|e| TimingRow {
            estimator: tag,
            k: kk,
            epoch: e.epoch,
            seconds: e.seconds,
        }));
    }
    log::info!("spearman vs true switch: implicit_mc {spearman_mc:.4}, analytic_mean {spearman_am:.4}");
    Ok(PosteriorComparison {
        task,
        rows,
        timings,
        spearman_mc,
        spearman_am,
        degenerate_draws: mc.degenerate_draws,
    })
}
