//! Seeded Monte Carlo execution: every sweep point runs the configured
//! schemes on paired channel realizations (same draw per trial for all
//! schemes), in parallel over trials, with an ordered reduction so the
//! output is identical for any worker count.

use crate::config::{ConfigError, ExperimentConfig, Scheme, SweepPoint};
use fim_core::{
    noise_power, optimize, sample_environment, sample_user_positions, watts_to_dbm, FimGeometry,
    LinkBudget, OptimizationTrace, ScatteringEnvironment, ScenarioGeometry,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("worker pool: {0}")]
    Pool(String),
}

/// Outcome of one scheme on one trial. `power_*` are present exactly when
/// the run succeeded; otherwise `error` says why it was aborted.
#[derive(Debug, Clone, Serialize)]
pub struct TrialRecord {
    pub sweep_value: Option<f64>,
    pub scheme: Scheme,
    pub trial: usize,
    pub seed: u64,
    pub power_w: Option<f64>,
    pub power_dbm: Option<f64>,
    pub outer_iterations: usize,
    pub converged: bool,
    pub error: Option<String>,
}

/// Per-iteration evolution of one scheme on one trial (convergence runs).
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceTrace {
    pub scheme: Scheme,
    pub trial: usize,
    pub seed: u64,
    /// Transmit power after each outer solve, in dBm.
    pub powers_dbm: Vec<f64>,
    /// Element displacements each solve was evaluated at, in meters.
    pub displacements: Vec<Vec<f64>>,
}

/// One aggregated table row: a scheme at a sweep point. Statistics are over
/// the successful trials only; `mean`/`std` are NaN when none succeeded.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub sweep_value: f64,
    pub scheme: Scheme,
    pub mean_power_dbm: f64,
    pub std_power_dbm: f64,
    pub trials_ok: usize,
    pub trials_failed: usize,
}

/// Everything a run produced, with the resolved configuration embedded so
/// the artifact can be re-run verbatim.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub rows: Vec<SweepRow>,
    pub trials: Vec<TrialRecord>,
    pub convergence: Vec<ConvergenceTrace>,
}

/// Runs the whole experiment on a pool of `workers` threads (0 = one per
/// core). Deterministic: trial `t` always uses seed `base_seed + t`, and
/// results are reduced in trial order regardless of scheduling.
pub fn run_experiment(
    config: &ExperimentConfig,
    workers: usize,
) -> Result<ExperimentResult, RunError> {
    config.validate()?;
    let geom = config.geometry()?;
    let scenario = config.scenario_geometry()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))?;

    let points = config.sweep_points();
    let keep_traces = config.is_convergence_run();
    let mut rows = Vec::with_capacity(points.len() * config.run.schemes.len());
    let mut trials = Vec::with_capacity(points.len() * config.run.trials);
    let mut convergence = Vec::new();

    for point in &points {
        let mut outcomes: Vec<(Vec<TrialRecord>, Vec<ConvergenceTrace>)> = pool.install(|| {
            (0..config.run.trials)
                .into_par_iter()
                .map(|trial| run_trial(config, &geom, &scenario, point, trial, keep_traces))
                .collect()
        });

        for scheme in &config.run.schemes {
            let powers: Vec<f64> = outcomes
                .iter()
                .flat_map(|(records, _)| records.iter())
                .filter(|r| r.scheme == *scheme)
                .filter_map(|r| r.power_dbm)
                .collect();
            let ok = powers.len();
            let mean = powers.iter().sum::<f64>() / ok as f64;
            let var = if ok > 1 {
                powers.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (ok - 1) as f64
            } else {
                0.0
            };
            rows.push(SweepRow {
                sweep_value: point.label,
                scheme: *scheme,
                mean_power_dbm: if ok > 0 { mean } else { f64::NAN },
                std_power_dbm: if ok > 0 { var.sqrt() } else { f64::NAN },
                trials_ok: ok,
                trials_failed: config.run.trials - ok,
            });
        }
        for (records, traces) in outcomes.drain(..) {
            trials.extend(records);
            convergence.extend(traces);
        }
    }

    Ok(ExperimentResult {
        config: config.clone(),
        rows,
        trials,
        convergence,
    })
}

/// One paired trial: sample the realization once, then run every scheme on
/// it. A sampling failure aborts all schemes of the trial; a per-scheme
/// optimizer failure aborts only that scheme's record.
fn run_trial(
    config: &ExperimentConfig,
    geom: &FimGeometry,
    scenario: &ScenarioGeometry,
    point: &SweepPoint,
    trial: usize,
    keep_traces: bool,
) -> (Vec<TrialRecord>, Vec<ConvergenceTrace>) {
    let seed = config.run.base_seed.wrapping_add(trial as u64);
    let label = if point.label.is_nan() {
        None
    } else {
        Some(point.label)
    };
    let blank = |scheme: Scheme| TrialRecord {
        sweep_value: label,
        scheme,
        trial,
        seed,
        power_w: None,
        power_dbm: None,
        outer_iterations: 0,
        converged: false,
        error: None,
    };

    let realization = sample_realization(config, geom, scenario, point, seed);
    let (link, env) = match realization {
        Ok(pair) => pair,
        Err(message) => {
            let records = config
                .run
                .schemes
                .iter()
                .map(|&scheme| TrialRecord {
                    error: Some(message.clone()),
                    ..blank(scheme)
                })
                .collect();
            return (records, Vec::new());
        }
    };

    let lambda = geom.wavelength();
    let sinr = 10f64.powf(point.sinr_db / 10.0);
    let targets = vec![sinr; config.scenario.users];
    let mut records = Vec::with_capacity(config.run.schemes.len());
    let mut traces = Vec::new();

    for &scheme in &config.run.schemes {
        let ao = config.optimizer.ao_config(scheme);
        let y_max = if scheme.morphs() {
            point.morphing_range_wavelengths * lambda
        } else {
            0.0
        };
        match optimize(&env, geom, y_max, &link, &targets, &ao) {
            Ok(trace) => {
                records.push(TrialRecord {
                    power_w: Some(trace.final_power_w()),
                    power_dbm: Some(watts_to_dbm(trace.final_power_w())),
                    outer_iterations: trace.outer_iterations(),
                    converged: trace.converged,
                    ..blank(scheme)
                });
                if keep_traces {
                    traces.push(convergence_trace(scheme, trial, seed, &trace));
                }
            }
            Err(e) => records.push(TrialRecord {
                error: Some(e.to_string()),
                ..blank(scheme)
            }),
        }
    }
    (records, traces)
}

fn sample_realization(
    config: &ExperimentConfig,
    geom: &FimGeometry,
    scenario: &ScenarioGeometry,
    point: &SweepPoint,
    seed: u64,
) -> Result<(LinkBudget, ScatteringEnvironment), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let distances = sample_user_positions(&mut rng, scenario);
    let noise = noise_power(
        config.system.noise_density_dbm_per_hz,
        config.system.bandwidth_hz,
    )
    .map_err(|e| e.to_string())?;
    let link = LinkBudget::from_path_loss(
        distances,
        config.channel.reference_distance_m,
        config.channel.path_loss_exponent,
        geom.wavelength(),
        noise,
    )
    .map_err(|e| e.to_string())?;
    let env = sample_environment(&mut rng, scenario, point.paths, &link)
        .map_err(|e| e.to_string())?;
    Ok((link, env))
}

fn convergence_trace(
    scheme: Scheme,
    trial: usize,
    seed: u64,
    trace: &OptimizationTrace,
) -> ConvergenceTrace {
    ConvergenceTrace {
        scheme,
        trial,
        seed,
        powers_dbm: trace
            .iterations
            .iter()
            .map(|it| watts_to_dbm(it.total_power_w))
            .collect(),
        displacements: trace
            .iterations
            .iter()
            .map(|it| it.displacements.clone())
            .collect(),
    }
}
