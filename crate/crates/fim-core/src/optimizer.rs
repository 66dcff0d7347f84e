//! Alternating minimisation of transmit power over beamformers and surface
//! shape.
//!
//! Each outer iteration solves the SINR-constrained power minimisation for
//! the current shape, then (for morphing-enabled runs) ascends the SINR
//! margins of that solution over the displacements. The total margin under
//! frozen weights is a guide, not a guarantee: the loop re-solves the
//! beamformer along the morph's walk and adopts the farthest iterate whose
//! power actually drops, so the recorded powers are non-increasing by
//! construction for either solver. The run stops when the relative power
//! decrease falls below the configured threshold, when no deformation
//! improves the power, or when the iteration budget runs out.

use crate::beamforming::{
    mmse_beamformer, zf_beamformer, BeamformerKind, BeamformingError, BeamformingSolution,
    MmseConfig,
};
use crate::channel::{channel_matrix, ChannelError, LinkBudget, ScatteringEnvironment};
use crate::geometry::{FimGeometry, GeometryError, SurfaceShape};
use crate::morphing::{morph_ascent, MorphConfig, MorphError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error("invalid optimizer setting: {0}")]
    InvalidConfig(String),
    #[error("beamforming failed at outer iteration {iteration}: {source}")]
    Beamforming {
        iteration: usize,
        #[source]
        source: BeamformingError,
    },
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Morph(#[from] MorphError),
}

/// Settings of the alternating loop.
#[derive(Debug, Clone, PartialEq)]
pub struct AoConfig {
    pub beamformer: BeamformerKind,
    /// When false the run is a single solve on the flat surface.
    pub morph_enabled: bool,
    pub max_outer_iters: usize,
    /// Convergence when the relative power decrease per outer iteration
    /// falls below `10^(convergence_db/10)`; −30 dB means 0.1 %.
    pub convergence_db: f64,
    pub mmse: MmseConfig,
    pub morph: MorphConfig,
}

impl Default for AoConfig {
    fn default() -> Self {
        Self {
            beamformer: BeamformerKind::Mmse,
            morph_enabled: true,
            max_outer_iters: 100,
            convergence_db: -30.0,
            mmse: MmseConfig::default(),
            morph: MorphConfig::default(),
        }
    }
}

impl AoConfig {
    pub fn validate(&self) -> Result<(), OptimizeError> {
        if self.max_outer_iters == 0 {
            return Err(OptimizeError::InvalidConfig(
                "max_outer_iters must be at least 1".into(),
            ));
        }
        if !(self.convergence_db.is_finite() && self.convergence_db < 0.0) {
            return Err(OptimizeError::InvalidConfig(format!(
                "convergence_db must be negative (got {})",
                self.convergence_db
            )));
        }
        Ok(())
    }
}

/// Morph summary attached to the outer iteration it followed.
#[derive(Debug, Clone)]
pub struct MorphSummary {
    /// Length of the margin-ascent walk.
    pub steps_accepted: usize,
    /// 1-based walk index whose re-solve was adopted as the next iterate;
    /// zero when no walk iterate was adopted (no deformation lowered the
    /// power, or a probe candidate won the round instead).
    pub adopted_steps: usize,
    /// Total margin of the frozen weights at the walk endpoint.
    pub margin_total: f64,
    /// Worst per-user margin at the walk endpoint.
    pub margin_min: f64,
}

/// One outer iteration: the solve and, when morphing ran afterwards, what
/// it achieved.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    /// Total transmit power of the solve, in watts.
    pub total_power_w: f64,
    /// Displacements the solve was evaluated at.
    pub displacements: Vec<f64>,
    /// Fixed-point sweeps spent by the solver (zero for zero-forcing).
    pub fixed_point_iterations: usize,
    pub morph: Option<MorphSummary>,
}

/// Full history and final state of one alternating run.
#[derive(Debug, Clone)]
pub struct OptimizationTrace {
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
    /// Solution of the last kept solve; its power matches the last record.
    pub solution: BeamformingSolution,
    /// Shape the final solution was computed at.
    pub shape: SurfaceShape,
}

impl OptimizationTrace {
    pub fn outer_iterations(&self) -> usize {
        self.iterations.len()
    }

    pub fn final_power_w(&self) -> f64 {
        self.solution.total_power()
    }

    /// Power after each outer solve, in watts. Non-increasing.
    pub fn power_trace(&self) -> Vec<f64> {
        self.iterations.iter().map(|it| it.total_power_w).collect()
    }
}

/// Alternates beamforming and surface morphing until the transmit power
/// settles.
///
/// Starts from the flat surface with morphing range `y_max`, so the first
/// recorded solve is exactly the rigid-array baseline. After each solve the
/// SINR margins of the frozen weights are ascended over the displacements
/// (once with the solver's sensitivity weights, once unweighted), every walk
/// iterate is re-solved, and the lowest re-solved power wins the round —
/// competing against a one-shot pool of deterministic probe shapes and a
/// momentum extrapolation of the winner. The returned solution always
/// corresponds to the returned shape (the shape of the last kept solve),
/// and the per-iteration powers are non-increasing.
pub fn optimize(
    env: &ScatteringEnvironment,
    geom: &FimGeometry,
    y_max: f64,
    link: &LinkBudget,
    sinr_targets: &[f64],
    cfg: &AoConfig,
) -> Result<OptimizationTrace, OptimizeError> {
    cfg.validate()?;
    let noise_powers = link.noise_powers();
    let threshold = 10f64.powf(cfg.convergence_db / 10.0);

    let mut shape = SurfaceShape::flat(geom.element_count(), y_max)?;
    let mut iterations: Vec<IterationRecord> = Vec::new();
    let mut kept: Option<(BeamformingSolution, SurfaceShape)> = None;
    // Solution carried over from the adoption scan, to avoid re-solving the
    // same shape at the top of the next iteration.
    let mut carried: Option<BeamformingSolution> = None;
    // Best candidate from the deterministic probe walks; filled in by the
    // first morphing round (`None` = not computed yet).
    let mut probe_pool: Option<Option<(SurfaceShape, BeamformingSolution)>> = None;
    let mut converged = false;

    for outer in 1..=cfg.max_outer_iters {
        let sol = match carried.take() {
            Some(sol) => sol,
            None => {
                let h = channel_matrix(env, geom, &shape)?;
                match cfg.beamformer {
                    BeamformerKind::Mmse => {
                        mmse_beamformer(&h, noise_powers, sinr_targets, &cfg.mmse)
                    }
                    BeamformerKind::Zf => zf_beamformer(&h, noise_powers, sinr_targets),
                }
                .map_err(|source| OptimizeError::Beamforming {
                    iteration: outer,
                    source,
                })?
            }
        };
        let power = sol.total_power();

        let mut record = IterationRecord {
            total_power_w: power,
            displacements: shape.displacements().to_vec(),
            fixed_point_iterations: sol.fixed_point_iterations(),
            morph: None,
        };

        if let Some(prev) = iterations.last() {
            let decrease = (prev.total_power_w - power).max(0.0) / prev.total_power_w;
            if decrease < threshold {
                iterations.push(record);
                kept = Some((sol, shape.clone()));
                converged = true;
                break;
            }
        }

        if !cfg.morph_enabled {
            iterations.push(record);
            kept = Some((sol, shape.clone()));
            converged = true;
            break;
        }
        if outer == cfg.max_outer_iters {
            // Budget exhausted: keep this solve but skip a morph whose
            // result could never be re-solved.
            iterations.push(record);
            kept = Some((sol, shape.clone()));
            break;
        }

        // Weight each user's margin by the solver's power sensitivity to
        // that constraint (the duality multipliers for the optimal solver,
        // the per-user powers for zero-forcing), so the ascent follows the
        // steepest first-order descent of the re-solved transmit power. A
        // uniformly weighted walk runs as well: where the sensitivity-
        // weighted objective is already stationary, other ascent directions
        // can still lower the re-solved power through its curvature.
        let sensitivities = match cfg.beamformer {
            BeamformerKind::Mmse => sol.multipliers(),
            BeamformerKind::Zf => sol.powers(),
        };
        let uniform = vec![1.0; sinr_targets.len()];

        let mut adopted: Option<(usize, SurfaceShape, BeamformingSolution)> = None;
        let mut best = power;
        let mut summary: Option<MorphSummary> = None;
        for user_weights in [sensitivities, uniform.as_slice()] {
            let outcome = morph_ascent(
                env,
                geom,
                &shape,
                sol.weights(),
                noise_powers,
                sinr_targets,
                user_weights,
                &cfg.morph,
            )?;

            // Re-solve every walk iterate and keep the lowest power found in
            // either walk. Iterates where this solver fails (the deformation
            // made the targets unreachable for it) are simply not adoptable.
            let mut from_this_walk = false;
            for (idx, cand) in outcome.walk.iter().enumerate() {
                let h = channel_matrix(env, geom, cand)?;
                let attempt = match cfg.beamformer {
                    BeamformerKind::Mmse => {
                        mmse_beamformer(&h, noise_powers, sinr_targets, &cfg.mmse)
                    }
                    BeamformerKind::Zf => zf_beamformer(&h, noise_powers, sinr_targets),
                };
                if let Ok(cand_sol) = attempt {
                    if cand_sol.total_power() < best {
                        best = cand_sol.total_power();
                        adopted = Some((idx, cand.clone(), cand_sol));
                        from_this_walk = true;
                    }
                }
            }

            // The summary describes the walk the next shape came from (the
            // sensitivity-weighted one when neither walk is adopted).
            if from_this_walk || summary.is_none() {
                summary = Some(MorphSummary {
                    steps_accepted: outcome.steps_accepted,
                    adopted_steps: if from_this_walk {
                        adopted.as_ref().map_or(0, |(idx, _, _)| idx + 1)
                    } else {
                        0
                    },
                    margin_total: outcome.margins.total(),
                    margin_min: outcome.margins.min(),
                });
            }
        }

        // A few deterministic probe shapes are ascended once per run (their
        // walks do not depend on the alternation state) and the best
        // resulting candidate competes with the walks above. It can win at
        // most once: afterwards the power stays below it for good.
        let pool = probe_pool.get_or_insert_with(|| {
            probe_candidates(env, geom, y_max, noise_powers, sinr_targets, cfg)
        });
        if pool.as_ref().is_some_and(|(_, sol)| sol.total_power() < best) {
            let (probe_shape, probe_sol) = pool.take().expect("non-empty checked above");
            best = probe_sol.total_power();
            adopted = Some((0, probe_shape, probe_sol));
            if let Some(summary) = summary.as_mut() {
                summary.adopted_steps = 0;
            }
        }

        // Extrapolating the winning move along its own direction often
        // skips several rounds of the same slow crawl: overshoot the
        // adopted displacement change and keep the best re-solve.
        if let Some((_, winner, _)) = adopted.as_ref() {
            let mut upgrade: Option<(SurfaceShape, BeamformingSolution)> = None;
            for overshoot in [1.0, 3.0] {
                let extrapolated: Vec<f64> = winner
                    .displacements()
                    .iter()
                    .zip(shape.displacements())
                    .map(|(new, old)| new + overshoot * (new - old))
                    .collect();
                let Ok(cand) = SurfaceShape::clamped(extrapolated, y_max) else {
                    continue;
                };
                let Ok(h) = channel_matrix(env, geom, &cand) else {
                    continue;
                };
                let attempt = match cfg.beamformer {
                    BeamformerKind::Mmse => {
                        mmse_beamformer(&h, noise_powers, sinr_targets, &cfg.mmse)
                    }
                    BeamformerKind::Zf => zf_beamformer(&h, noise_powers, sinr_targets),
                };
                if let Ok(cand_sol) = attempt {
                    if cand_sol.total_power() < best {
                        best = cand_sol.total_power();
                        upgrade = Some((cand, cand_sol));
                    }
                }
            }
            if let Some((cand, cand_sol)) = upgrade {
                adopted = Some((0, cand, cand_sol));
                if let Some(summary) = summary.as_mut() {
                    summary.adopted_steps = 0;
                }
            }
        }

        record.morph = summary;
        iterations.push(record);
        kept = Some((sol, shape.clone()));

        match adopted {
            None => {
                // No deformation improves this solver's power: a fixed point
                // of the alternation.
                converged = true;
                break;
            }
            Some((_, cand_shape, cand_sol)) => {
                shape = cand_shape;
                carried = Some(cand_sol);
            }
        }
    }

    let (solution, shape) = kept.expect("at least one outer iteration runs");
    Ok(OptimizationTrace {
        iterations,
        converged,
        solution,
        shape,
    })
}

/// Solves and gradient-ascends a handful of fixed probe shapes, returning
/// the lowest-power candidate found across all probe walks. Each probe uses
/// its own solve for the frozen weights and margin weighting, so the result
/// is independent of the alternation state. Probes that cannot be solved are
/// skipped; `None` means none of them could.
fn probe_candidates(
    env: &ScatteringEnvironment,
    geom: &FimGeometry,
    y_max: f64,
    noise_powers: &[f64],
    sinr_targets: &[f64],
    cfg: &AoConfig,
) -> Option<(SurfaceShape, BeamformingSolution)> {
    let n = geom.element_count();
    let solve = |shape: &SurfaceShape| -> Option<BeamformingSolution> {
        let h = channel_matrix(env, geom, shape).ok()?;
        match cfg.beamformer {
            BeamformerKind::Mmse => mmse_beamformer(&h, noise_powers, sinr_targets, &cfg.mmse),
            BeamformerKind::Zf => zf_beamformer(&h, noise_powers, sinr_targets),
        }
        .ok()
    };

    let ramp_denom = n.max(2) as f64 - 1.0;
    let probes: [Vec<f64>; 4] = [
        vec![0.5 * y_max; n],
        vec![y_max; n],
        (0..n)
            .map(|i| if i % 2 == 0 { y_max } else { 0.0 })
            .collect(),
        (0..n).map(|i| y_max * i as f64 / ramp_denom).collect(),
    ];

    let mut best: Option<(SurfaceShape, BeamformingSolution)> = None;
    for displacements in probes {
        let Ok(start) = SurfaceShape::new(displacements, y_max) else {
            continue;
        };
        let Some(sol) = solve(&start) else {
            continue;
        };
        let sensitivities = match cfg.beamformer {
            BeamformerKind::Mmse => sol.multipliers().to_vec(),
            BeamformerKind::Zf => sol.powers().to_vec(),
        };
        let walk = morph_ascent(
            env,
            geom,
            &start,
            sol.weights(),
            noise_powers,
            sinr_targets,
            &sensitivities,
            &cfg.morph,
        )
        .map(|outcome| outcome.walk)
        .unwrap_or_default();

        let mut consider = |cand_shape: SurfaceShape, cand_sol: BeamformingSolution| {
            let better = best
                .as_ref()
                .is_none_or(|(_, b)| cand_sol.total_power() < b.total_power());
            if better {
                best = Some((cand_shape, cand_sol));
            }
        };
        for cand in &walk {
            if let Some(cand_sol) = solve(cand) {
                consider(cand.clone(), cand_sol);
            }
        }
        consider(start, sol);
    }
    best
}

/// `10 log10(P/1mW)`; zero watts maps to −∞.
pub fn watts_to_dbm(watts: f64) -> f64 {
    if watts <= 0.0 {
        f64::NEG_INFINITY
    } else {
        10.0 * watts.log10() + 30.0
    }
}

/// Inverse of [`watts_to_dbm`].
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}
