//! Experiment stages: data generation, training, error-surrogate fitting,
//! episode batches and parameter sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use wncs_core::channel::required_power;
use wncs_core::control::Controller;
use wncs_core::errmodel::{
    collect_samples, fit_polynomial, select_degree, DegreeSelection, ErrorPolyCoeffs, SampleConfig,
    SampleSet, SampleSource,
};
use wncs_core::harness::{
    aggregate_metrics, episode_seed, run_episode, Episode, EpisodeMetrics, FailureBurst, Metrics,
};
use wncs_core::koopman::{
    generate_dataset, train_model, KoopmanModel, TrainingReport, TrajectoryDataset,
};

use crate::config::ExperimentConfig;
use crate::CliError;

pub fn gen_data(cfg: &ExperimentConfig, seed: u64) -> Result<TrajectoryDataset, CliError> {
    Ok(generate_dataset(&cfg.plant(), &cfg.dataset_config(seed))?)
}

pub fn train(
    cfg: &ExperimentConfig,
    data: &TrajectoryDataset,
) -> Result<(KoopmanModel, TrainingReport), CliError> {
    let tc = cfg.training_config();
    let windows = data.windows(tc.horizon, Some(&cfg.envelope()))?;
    let mut model = KoopmanModel::new(
        cfg.model.variant,
        cfg.dims(),
        &cfg.model.hidden,
        cfg.model.init_seed,
    )?;
    let report = train_model(&mut model, data, &windows, &tc)?;
    Ok((model, report))
}

pub fn controller(cfg: &ExperimentConfig, model: KoopmanModel) -> Result<Controller, CliError> {
    let plant = cfg.plant();
    Ok(Controller::new(
        model,
        &cfg.q(),
        &cfg.b(),
        &cfg.x_ref(),
        plant.u_max(),
        cfg.dare_options(),
    )?)
}

#[derive(Debug, Clone)]
pub struct ErrorFit {
    pub samples: SampleSet,
    pub selection: DegreeSelection,
    pub coeffs: ErrorPolyCoeffs,
}

/// Collects prediction-error samples against the real plant and fits the
/// surrogate, selecting the degree unless one is pinned.
pub fn fit_error(
    cfg: &ExperimentConfig,
    ctrl: &Controller,
    seed: u64,
) -> Result<ErrorFit, CliError> {
    let source = SampleSource::Plant {
        plant: cfg.plant(),
        noise_variance: cfg.data.noise_variance,
    };
    let sc = SampleConfig {
        n: cfg.error_model.samples,
        beta_max: cfg.error_model.beta_max,
        state_box: cfg.error_state_box(),
        seed,
    };
    let samples = collect_samples(ctrl, &source, &sc)?;
    let selection = select_degree(&samples.samples, &cfg.error_model.degrees, seed)?;
    let degree = cfg.error_model.degree.unwrap_or(selection.best);
    let coeffs = fit_polynomial(&samples.samples, degree)?;
    Ok(ErrorFit {
        samples,
        selection,
        coeffs,
    })
}

/// Runs `count` episodes with seeds derived from `master`; results are in
/// episode order regardless of scheduling.
pub fn run_episodes(
    cfg: &ExperimentConfig,
    ctrl: &Controller,
    coeffs: &ErrorPolyCoeffs,
    count: usize,
    master: u64,
) -> Result<Vec<Episode>, CliError> {
    let plant = cfg.plant();
    let ep_cfg = cfg.episode_config()?;
    (0..count)
        .into_par_iter()
        .map(|k| {
            run_episode(&plant, ctrl, coeffs, &ep_cfg, episode_seed(master, k))
                .map_err(CliError::from)
        })
        .collect()
}

pub fn summarize(
    episodes: &[Episode],
    lambda: f64,
) -> Result<(Vec<EpisodeMetrics>, Metrics), CliError> {
    let per: Vec<EpisodeMetrics> = episodes
        .iter()
        .map(|e| EpisodeMetrics::from_episode(e, lambda))
        .collect();
    let agg = aggregate_metrics(&per)?;
    Ok((per, agg))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    /// Outage target on both links.
    Outage,
    /// SNR decoding threshold in dB on both links.
    Snr,
    /// Rician factor on both links.
    Kappa,
    /// Prediction error threshold.
    Delta,
    /// Length of a forced controller-actuator failure burst.
    CaFailures,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Outage => "outage",
            SweepAxis::Snr => "snr",
            SweepAxis::Kappa => "kappa",
            SweepAxis::Delta => "delta",
            SweepAxis::CaFailures => "ca-failures",
        }
    }

    /// Returns the config with the axis set to `value`.
    pub fn apply(self, base: &ExperimentConfig, value: f64) -> Result<ExperimentConfig, CliError> {
        let mut cfg = base.clone();
        let mut links = |f: &dyn Fn(&mut crate::config::ChannelSection)| {
            f(&mut cfg.channel);
            if let Some(ca) = cfg.ca_channel.as_mut() {
                f(ca);
            }
        };
        match self {
            SweepAxis::Outage => links(&|c| c.outage_target = value),
            SweepAxis::Snr => links(&|c| c.gamma0_db = value),
            SweepAxis::Kappa => links(&|c| c.kappa = value),
            SweepAxis::Delta => cfg.scheduler.delta = value,
            SweepAxis::CaFailures => {
                if value < 0.0 || value.fract() != 0.0 {
                    return Err(CliError::Usage(format!(
                        "failure count must be a non-negative integer, got {value}"
                    )));
                }
                let start = base.episode.ca_burst.map_or(1, |b| b.start);
                cfg.episode.ca_burst = Some(FailureBurst {
                    start,
                    len: value as usize,
                });
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    pub p_sc: f64,
    pub metrics: Metrics,
}

pub fn run_sweep(
    base: &ExperimentConfig,
    ctrl: &Controller,
    coeffs: &ErrorPolyCoeffs,
    axis: SweepAxis,
    values: &[f64],
    episodes: usize,
    master: u64,
) -> Result<Vec<SweepRow>, CliError> {
    values
        .iter()
        .map(|&value| {
            let cfg = axis.apply(base, value)?;
            let p_sc = required_power(&cfg.channel.resolve()?)?.power;
            let eps = run_episodes(&cfg, ctrl, coeffs, episodes, master)?;
            let (_, metrics) = summarize(&eps, cfg.scheduler.lambda)?;
            Ok(SweepRow {
                value,
                p_sc,
                metrics,
            })
        })
        .collect()
}
