//! Surface-shape optimisation at fixed beamformers.
//!
//! With the transmit weights held fixed, each user's SINR constraint is
//! summarised by a margin `ε_k ≥ 0`. Morphing ascends a weighted sum of
//! margins `Σ_k u_k ε_k` over the per-element displacements by projected
//! gradient steps with a backtracking line search. The natural weights are
//! the solver's constraint sensitivities: by the envelope theorem the
//! optimally re-solved transmit power changes, to first order, by
//! `−Σ_k λ_k dε_k` under a shape perturbation, so ascending the
//! multiplier-weighted margins is steepest descent on the power itself,
//! while uniform weights recover the plain margin total. The walk reports
//! every accepted iterate, leaving the choice of how far to deform to the
//! caller: the alternating optimiser re-solves the beamformer along the
//! walk and only adopts a deformation that actually lowers the power.

use crate::beamforming::{sinr_report, BeamformingError};
use crate::channel::{channel_matrix, ChannelError, ScatteringEnvironment};
use crate::geometry::{steering_vector, FimGeometry, SurfaceShape};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MorphError {
    #[error("{what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid morphing setting: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Beamforming(#[from] BeamformingError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Line-search and stopping parameters of the margin ascent.
///
/// `initial_step` is dimensionless: each ascent iteration opens the line
/// search with the step that moves the largest-gradient element by
/// `initial_step` wavelengths, then backtracks geometrically from there.
#[derive(Debug, Clone, PartialEq)]
pub struct MorphConfig {
    pub initial_step: f64,
    pub backtrack_factor: f64,
    pub armijo_constant: f64,
    pub max_backtracks: usize,
    pub max_ascent_iters: usize,
    pub grad_tol: f64,
}

impl Default for MorphConfig {
    fn default() -> Self {
        Self {
            initial_step: 0.1,
            backtrack_factor: 0.5,
            armijo_constant: 1e-4,
            max_backtracks: 30,
            max_ascent_iters: 50,
            grad_tol: 1e-8,
        }
    }
}

impl MorphConfig {
    pub fn validate(&self) -> Result<(), MorphError> {
        let bad = |msg: String| Err(MorphError::InvalidConfig(msg));
        if !(self.initial_step.is_finite() && self.initial_step > 0.0) {
            return bad(format!(
                "initial_step must be positive (got {})",
                self.initial_step
            ));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return bad(format!(
                "backtrack_factor must lie in (0, 1) (got {})",
                self.backtrack_factor
            ));
        }
        if !(self.armijo_constant > 0.0 && self.armijo_constant < 1.0) {
            return bad(format!(
                "armijo_constant must lie in (0, 1) (got {})",
                self.armijo_constant
            ));
        }
        if !(self.grad_tol.is_finite() && self.grad_tol >= 0.0) {
            return bad(format!("grad_tol must be non-negative (got {})", self.grad_tol));
        }
        Ok(())
    }
}

/// Per-user SINR margins of a weight matrix on a channel.
#[derive(Debug, Clone)]
pub struct MarginReport {
    per_user: Vec<f64>,
    total: f64,
}

impl MarginReport {
    /// `ε_k`: positive when user `k`'s SINR exceeds its target.
    pub fn per_user(&self) -> &[f64] {
        &self.per_user
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn min(&self) -> f64 {
        self.per_user.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Margins `ε_k = |h_k^H w_k|²/(γ_k σ_k²) − Σ_{j≠k} |h_k^H w_j|²/σ_k² − 1`.
///
/// `ε_k ≥ 0` exactly when user `k`'s achieved SINR is at least `γ_k`.
pub fn sinr_margins(
    h: &DMatrix<Complex64>,
    weights: &DMatrix<Complex64>,
    noise_powers: &[f64],
    sinr_targets: &[f64],
) -> Result<MarginReport, MorphError> {
    if sinr_targets.len() != h.ncols() {
        return Err(MorphError::DimensionMismatch {
            what: "SINR targets",
            expected: h.ncols(),
            got: sinr_targets.len(),
        });
    }
    for (index, &t) in sinr_targets.iter().enumerate() {
        if !(t.is_finite() && t > 0.0) {
            return Err(MorphError::InvalidConfig(format!(
                "SINR target {index} must be positive (got {t})"
            )));
        }
    }
    let report = sinr_report(h, weights, noise_powers)?;
    let per_user: Vec<f64> = (0..h.ncols())
        .map(|k| {
            report.signal()[k] / (sinr_targets[k] * noise_powers[k])
                - report.interference()[k] / noise_powers[k]
                - 1.0
        })
        .collect();
    let total = per_user.iter().sum();
    Ok(MarginReport { per_user, total })
}

/// Gradient of the total margin `Σ_k ε_k` with respect to the per-element
/// displacements, at fixed weights.
///
/// Differentiating one received power through the steering phases gives
/// `∂|h_k^H w_j|²/∂y_n = −2κ Σ_l (sinθ_l sinφ_l) Im{α_{k,l} a_{l,n} w*_{n,j}
/// (h_k^H w_j)}`, and the margin gradient weights these by `1/(γ_k σ_k²)`
/// for the desired term and `−1/σ_k²` for each interference term.
pub fn margin_gradient(
    env: &ScatteringEnvironment,
    geom: &FimGeometry,
    shape: &SurfaceShape,
    weights: &DMatrix<Complex64>,
    noise_powers: &[f64],
    sinr_targets: &[f64],
) -> Result<DVector<f64>, MorphError> {
    let ones = vec![1.0; env.user_count()];
    weighted_margin_gradient(env, geom, shape, weights, noise_powers, sinr_targets, &ones)
}

/// Gradient of the weighted margin sum `Σ_k u_k ε_k` at fixed weights.
fn weighted_margin_gradient(
    env: &ScatteringEnvironment,
    geom: &FimGeometry,
    shape: &SurfaceShape,
    weights: &DMatrix<Complex64>,
    noise_powers: &[f64],
    sinr_targets: &[f64],
    user_weights: &[f64],
) -> Result<DVector<f64>, MorphError> {
    let n = geom.element_count();
    let users = env.user_count();
    if weights.nrows() != n || weights.ncols() != users {
        return Err(MorphError::DimensionMismatch {
            what: "weight matrix",
            expected: n * users,
            got: weights.nrows() * weights.ncols(),
        });
    }
    for (what, len) in [
        ("noise powers", noise_powers.len()),
        ("SINR targets", sinr_targets.len()),
    ] {
        if len != users {
            return Err(MorphError::DimensionMismatch {
                what,
                expected: users,
                got: len,
            });
        }
    }
    let kappa = geom.wavenumber();
    let paths = env.path_count();

    // Steering vectors per path, reused for the channel and the gradient so
    // the two stay numerically consistent.
    let mut steer = Vec::with_capacity(paths);
    let mut cy = Vec::with_capacity(paths);
    for ang in env.angles() {
        let a = steering_vector(geom, shape, ang.azimuth, ang.elevation)
            .map_err(ChannelError::Geometry)?;
        steer.push(a);
        cy.push(ang.elevation.sin() * ang.azimuth.sin());
    }
    let mut h = DMatrix::<Complex64>::zeros(n, users);
    for (l, a) in steer.iter().enumerate() {
        for k in 0..users {
            let alpha = env.gain(k, l);
            for i in 0..n {
                h[(i, k)] += alpha * a[i];
            }
        }
    }
    let cross = h.ad_mul(weights);

    let mut grad = DVector::<f64>::zeros(n);
    for k in 0..users {
        if user_weights[k] == 0.0 {
            continue;
        }
        let inv_noise = user_weights[k] / noise_powers[k];
        for j in 0..users {
            let f = cross[(k, j)];
            let margin_weight = if k == j {
                inv_noise / sinr_targets[k]
            } else {
                -inv_noise
            };
            let scale0 = -2.0 * kappa * margin_weight;
            for l in 0..paths {
                if cy[l] == 0.0 {
                    continue;
                }
                let scale = scale0 * cy[l];
                let fac = env.gain(k, l) * f;
                let a = &steer[l];
                for i in 0..n {
                    grad[i] += scale * (fac * a[i] * weights[(i, j)].conj()).im;
                }
            }
        }
    }
    Ok(grad)
}

/// Result of one margin-ascent run.
#[derive(Debug, Clone)]
pub struct MorphOutcome {
    /// Final displacements (equals `shape₀` when no step was accepted).
    pub shape: SurfaceShape,
    /// Margins of the fixed weights at the final shape.
    pub margins: MarginReport,
    /// Number of accepted gradient steps.
    pub steps_accepted: usize,
    /// Every accepted iterate in order, ending with `shape`. The ascended
    /// objective is a first-order proxy for the transmit power after the
    /// next weight re-optimisation, not a guarantee, so callers pick the
    /// iterate that serves them best rather than being forced to take the
    /// endpoint.
    pub walk: Vec<SurfaceShape>,
    /// Ascended objective `Σ_k u_k ε_k` at the start and after each
    /// accepted step; strictly increasing.
    pub epsilon_trace: Vec<f64>,
}

/// Projected gradient ascent on the weighted SINR margins at fixed weights.
///
/// Each iteration proposes `clamp(y + μ d, 0, y_max)` along the gradient
/// `d` of `Σ_k u_k ε_k` and accepts the candidate when that objective rises
/// by at least `armijo_constant · μ · ‖d‖²` (Armijo on the projected step);
/// otherwise `μ` shrinks by `backtrack_factor`, up to `max_backtracks`
/// times. The ascent stops at the first iteration with no acceptable step,
/// when the gradient falls below `grad_tol`, or after `max_ascent_iters`
/// steps.
///
/// `user_weights` sets the per-user weights `u_k ≥ 0`. Passing the
/// beamformer's SINR-constraint multipliers makes the ascent follow the
/// steepest descent of the re-solved transmit power (envelope theorem);
/// uniform weights ascend the plain margin total.
///
/// Individual margins may trade against each other along the walk: the
/// starting beamformer meets every target with equality, so any first-order
/// move dips some user below zero, and a walk that insisted on keeping all
/// margins non-negative could never leave the start. The accepted iterates
/// are therefore all returned, and the caller — which can re-optimise the
/// weights — decides how far along the walk to actually deform.
#[allow(clippy::too_many_arguments)]
pub fn morph_ascent(
    env: &ScatteringEnvironment,
    geom: &FimGeometry,
    shape0: &SurfaceShape,
    weights: &DMatrix<Complex64>,
    noise_powers: &[f64],
    sinr_targets: &[f64],
    user_weights: &[f64],
    cfg: &MorphConfig,
) -> Result<MorphOutcome, MorphError> {
    cfg.validate()?;
    let users = env.user_count();
    if user_weights.len() != users {
        return Err(MorphError::DimensionMismatch {
            what: "user weights",
            expected: users,
            got: user_weights.len(),
        });
    }
    if !user_weights.iter().all(|u| u.is_finite() && *u >= 0.0)
        || user_weights.iter().sum::<f64>() <= 0.0
    {
        return Err(MorphError::InvalidConfig(
            "user weights must be non-negative, finite and not all zero".into(),
        ));
    }
    let objective =
        |m: &MarginReport| -> f64 { m.per_user().iter().zip(user_weights).map(|(e, u)| e * u).sum() };

    let y_max = shape0.y_max();
    let lambda = geom.wavelength();
    let mut shape = shape0.clone();
    let h = channel_matrix(env, geom, &shape)?;
    let mut margins = sinr_margins(&h, weights, noise_powers, sinr_targets)?;
    let mut epsilon_trace = vec![objective(&margins)];
    let mut walk = Vec::new();

    for _ in 0..cfg.max_ascent_iters {
        let grad = weighted_margin_gradient(
            env,
            geom,
            &shape,
            weights,
            noise_powers,
            sinr_targets,
            user_weights,
        )?;
        let grad_inf = grad.amax();
        if !(grad_inf.is_finite() && grad_inf > cfg.grad_tol) {
            break;
        }
        // Project out components that push against a binding box face, so
        // the line search spends its budget on coordinates that can move.
        let dir = free_direction(grad, shape.displacements(), y_max);
        let slope = dir.norm_squared();
        let accepted = line_search_step(
            env,
            geom,
            weights,
            noise_powers,
            sinr_targets,
            cfg,
            y_max,
            lambda,
            &mut shape,
            &mut margins,
            &dir,
            slope,
            objective,
        )?;
        if !accepted {
            break;
        }
        epsilon_trace.push(objective(&margins));
        walk.push(shape.clone());
    }
    Ok(MorphOutcome {
        shape,
        margins,
        steps_accepted: walk.len(),
        walk,
        epsilon_trace,
    })
}

/// Zero the direction components that push against an already-binding box
/// face, so the line search spends its budget only on coordinates that can
/// actually move.
fn free_direction(mut dir: DVector<f64>, y: &[f64], y_max: f64) -> DVector<f64> {
    for (d, &yi) in dir.iter_mut().zip(y) {
        if (yi <= 0.0 && *d < 0.0) || (yi >= y_max && *d > 0.0) {
            *d = 0.0;
        }
    }
    dir
}

/// One backtracking line search along `dir`. A candidate is accepted when
/// `objective` rises by at least `armijo_constant · μ · slope`, with
/// `slope` the directional derivative of the objective along `dir`; on
/// success the shape and margins are replaced by the accepted candidate.
#[allow(clippy::too_many_arguments)]
fn line_search_step(
    env: &ScatteringEnvironment,
    geom: &FimGeometry,
    weights: &DMatrix<Complex64>,
    noise_powers: &[f64],
    sinr_targets: &[f64],
    cfg: &MorphConfig,
    y_max: f64,
    lambda: f64,
    shape: &mut SurfaceShape,
    margins: &mut MarginReport,
    dir: &DVector<f64>,
    slope: f64,
    objective: impl Fn(&MarginReport) -> f64,
) -> Result<bool, MorphError> {
    let dir_inf = dir.amax();
    if !(dir_inf.is_finite() && dir_inf > 0.0 && slope > 0.0) {
        return Ok(false);
    }
    let current = objective(margins);
    // Open with the step that moves the steepest element by `initial_step`
    // wavelengths, independent of the direction's scale.
    let mut mu = cfg.initial_step * lambda / dir_inf;
    for _ in 0..=cfg.max_backtracks {
        let proposal: Vec<f64> = shape
            .displacements()
            .iter()
            .zip(dir.iter())
            .map(|(&y, &d)| y + mu * d)
            .collect();
        let candidate = SurfaceShape::clamped(proposal, y_max).map_err(ChannelError::Geometry)?;
        if candidate.displacements() == shape.displacements() {
            // The step vanished under the projection; shorter ones only
            // vanish harder.
            return Ok(false);
        }
        let h_cand = channel_matrix(env, geom, &candidate)?;
        let cand = sinr_margins(&h_cand, weights, noise_powers, sinr_targets)?;
        let value = objective(&cand);
        // Strict improvement guards against the Armijo increment rounding
        // away once `mu` has been backtracked very small.
        let sufficient = value > current && value >= current + cfg.armijo_constant * mu * slope;
        if sufficient {
            *shape = candidate;
            *margins = cand;
            return Ok(true);
        }
        mu *= cfg.backtrack_factor;
    }
    Ok(false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beamforming::{mmse_beamformer, MmseConfig};
    use crate::channel::{sample_environment, LinkBudget, ScenarioGeometry, SPEED_OF_LIGHT};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn test_setup(
        seed: u64,
        users: usize,
        paths: usize,
        n_x: usize,
        n_z: usize,
    ) -> (
        ScatteringEnvironment,
        FimGeometry,
        LinkBudget,
        Vec<f64>,
        Vec<f64>,
    ) {
        let lambda = SPEED_OF_LIGHT / 28e9;
        let geom = FimGeometry::half_wavelength(n_x, n_z, lambda).unwrap();
        let scenario = ScenarioGeometry::new(5.0, 20.0, 10.0, users).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let distances = crate::channel::sample_user_positions(&mut rng, &scenario);
        let noise = crate::channel::noise_power(-174.0, 1e8).unwrap();
        let link = LinkBudget::from_path_loss(distances, 1.0, 2.2, lambda, noise).unwrap();
        let env = sample_environment(&mut rng, &scenario, paths, &link).unwrap();
        let noise_powers = link.noise_powers().to_vec();
        let targets = vec![10f64.powf(0.5); users];
        (env, geom, link, noise_powers, targets)
    }

    #[test]
    fn margins_vanish_exactly_at_tight_beamformers() {
        let (env, geom, _link, noise, targets) = test_setup(1, 3, 6, 2, 2);
        let shape = SurfaceShape::flat(4, 0.0).unwrap();
        let h = channel_matrix(&env, &geom, &shape).unwrap();
        let sol = mmse_beamformer(&h, &noise, &targets, &MmseConfig::default()).unwrap();
        let margins = sinr_margins(&h, sol.weights(), &noise, &targets).unwrap();
        for &m in margins.per_user() {
            assert!(m.abs() < 1e-7, "margin {m} should be ~0 at a tight solution");
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let lambda = SPEED_OF_LIGHT / 28e9;
        let (env, geom, _link, noise, targets) = test_setup(2, 2, 5, 2, 3);
        let n = geom.element_count();
        let y_max = lambda;
        // An interior shape, away from the box faces.
        let y: Vec<f64> = (0..n).map(|i| (0.2 + 0.08 * i as f64) * lambda).collect();
        let shape = SurfaceShape::new(y.clone(), y_max).unwrap();
        let h = channel_matrix(&env, &geom, &shape).unwrap();
        let sol = mmse_beamformer(&h, &noise, &targets, &MmseConfig::default()).unwrap();
        let weights = sol.weights();

        let grad = margin_gradient(&env, &geom, &shape, weights, &noise, &targets).unwrap();
        let delta = 1e-6 * lambda;
        let mut fd = DVector::<f64>::zeros(n);
        for i in 0..n {
            let mut plus = y.clone();
            plus[i] += delta;
            let mut minus = y.clone();
            minus[i] -= delta;
            let eval = |disp: Vec<f64>| {
                let s = SurfaceShape::new(disp, y_max).unwrap();
                let hc = channel_matrix(&env, &geom, &s).unwrap();
                sinr_margins(&hc, weights, &noise, &targets).unwrap().total()
            };
            fd[i] = (eval(plus) - eval(minus)) / (2.0 * delta);
        }
        let rel = (&grad - &fd).norm() / fd.norm();
        assert!(rel < 1e-5, "gradient mismatch: relative l2 error {rel}");
    }

    #[test]
    fn single_user_ascent_makes_progress() {
        let lambda = SPEED_OF_LIGHT / 28e9;
        let (env, geom, _link, noise, targets) = test_setup(3, 1, 4, 2, 3);
        // Start mid-box: a flat surface can sit at a corner of the box where
        // the projection blocks the whole gradient.
        let shape0 = SurfaceShape::new(vec![0.5 * lambda; 6], lambda).unwrap();
        let h = channel_matrix(&env, &geom, &shape0).unwrap();
        let sol = mmse_beamformer(&h, &noise, &targets, &MmseConfig::default()).unwrap();
        let outcome = morph_ascent(
            &env,
            &geom,
            &shape0,
            sol.weights(),
            &noise,
            &targets,
            sol.multipliers(),
            &MorphConfig::default(),
        )
        .unwrap();
        assert!(
            outcome.steps_accepted >= 1,
            "single-user ascent should find an uphill step"
        );
        // With one user the total margin is that user's margin, so ascending
        // it can only help: the endpoint must beat the tight start.
        assert!(outcome.margins.total() > 1e-3);
        assert_eq!(outcome.walk.len(), outcome.steps_accepted);
        assert_eq!(
            outcome.walk.last().unwrap().displacements(),
            outcome.shape.displacements()
        );
        // The recorded trace is strictly increasing.
        for w in outcome.epsilon_trace.windows(2) {
            assert!(w[1] > w[0]);
        }
        // Displacements stay inside the box.
        for &y in outcome.shape.displacements() {
            assert!((0.0..=lambda).contains(&y));
        }
    }

    #[test]
    fn zero_morphing_range_accepts_no_steps() {
        let (env, geom, _link, noise, targets) = test_setup(4, 2, 4, 2, 2);
        let shape0 = SurfaceShape::flat(4, 0.0).unwrap();
        let h = channel_matrix(&env, &geom, &shape0).unwrap();
        let sol = mmse_beamformer(&h, &noise, &targets, &MmseConfig::default()).unwrap();
        let outcome = morph_ascent(
            &env,
            &geom,
            &shape0,
            sol.weights(),
            &noise,
            &targets,
            sol.multipliers(),
            &MorphConfig::default(),
        )
        .unwrap();
        assert_eq!(outcome.steps_accepted, 0);
        assert!(outcome.walk.is_empty());
        assert_eq!(outcome.shape.displacements(), shape0.displacements());
        assert_eq!(outcome.epsilon_trace.len(), 1);
    }

    #[test]
    fn multi_user_walks_ascend_and_stay_in_the_box() {
        let lambda = SPEED_OF_LIGHT / 28e9;
        for seed in 5..15 {
            let (env, geom, _link, noise, targets) = test_setup(seed, 4, 8, 2, 3);
            let shape0 = SurfaceShape::flat(6, lambda).unwrap();
            let h = channel_matrix(&env, &geom, &shape0).unwrap();
            let sol = match mmse_beamformer(&h, &noise, &targets, &MmseConfig::default()) {
                Ok(s) => s,
                Err(_) => continue, // skip infeasible draws
            };
            let outcome = morph_ascent(
                &env,
                &geom,
                &shape0,
                sol.weights(),
                &noise,
                &targets,
                sol.multipliers(),
                &MorphConfig::default(),
            )
            .unwrap();
            assert_eq!(outcome.walk.len(), outcome.steps_accepted);
            assert_eq!(outcome.epsilon_trace.len(), outcome.steps_accepted + 1);
            for w in outcome.epsilon_trace.windows(2) {
                assert!(w[1] > w[0], "seed {seed}: trace not increasing");
            }
            for shape in &outcome.walk {
                for &y in shape.displacements() {
                    assert!(
                        (0.0..=lambda).contains(&y),
                        "seed {seed}: iterate left the box"
                    );
                }
            }
        }
    }

    #[test]
    fn config_validation_rejects_bad_settings() {
        let cfg = MorphConfig {
            backtrack_factor: 1.0,
            ..MorphConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = MorphConfig {
            initial_step: 0.0,
            ..MorphConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = MorphConfig {
            armijo_constant: -0.1,
            ..MorphConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert!(MorphConfig::default().validate().is_ok());
    }

    #[test]
    fn margin_sign_tracks_the_sinr_comparison() {
        let (env, geom, _link, noise, targets) = test_setup(6, 2, 4, 2, 2);
        let shape = SurfaceShape::flat(4, 0.0).unwrap();
        let h = channel_matrix(&env, &geom, &shape).unwrap();
        let sol = mmse_beamformer(&h, &noise, &targets, &MmseConfig::default()).unwrap();
        // Scale the weights down: every SINR drops below target, so every
        // margin must go negative.
        let weak = sol.weights() * Complex64::from(0.5);
        let margins = sinr_margins(&h, &weak, &noise, &targets).unwrap();
        assert!(margins.min() < 0.0);
        assert!(margins.total() < 0.0);
    }
}
