//! Transmit power minimisation under per-user SINR constraints for a fixed
//! channel.
//!
//! Two solvers share one output type. [`mmse_beamformer`] is exact: it finds
//! the optimal beam directions through the uplink–downlink duality fixed
//! point and then scales them so every constraint holds with equality.
//! [`zf_beamformer`] is the classical baseline that nulls all cross-user
//! interference with the scaled pseudoinverse, which is cheaper but spends
//! more power whenever user channels are correlated.

use nalgebra::{Cholesky, DMatrix, DVector, LU};
use num_complex::Complex64;
use thiserror::Error;

/// Relative change of the duality multipliers below which the fixed point
/// is declared converged.
pub const DEFAULT_FP_TOL: f64 = 1e-10;
pub const DEFAULT_FP_MAX_ITER: usize = 500;

/// A multiplier beyond this is treated as divergence (infeasible targets).
const MULTIPLIER_CAP: f64 = 1e12;
/// Conditioning limit shared by the zero-forcing rank check and the power
/// allocation solve.
const CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeamformerKind {
    Mmse,
    Zf,
}

#[derive(Debug, Error)]
pub enum BeamformingError {
    #[error("channel matrix must be non-empty (got {rows} x {cols})")]
    EmptyChannel { rows: usize, cols: usize },
    #[error("{what} has length {got} but the channel has {expected} users")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{what}[{index}] must be positive and finite (got {value})")]
    NonPositiveEntry {
        what: &'static str,
        index: usize,
        value: f64,
    },
    #[error("invalid solver setting: {0}")]
    InvalidConfig(String),
    #[error("zero-forcing needs at least as many antennas as users (N = {antennas}, K = {users})")]
    TooManyUsers { users: usize, antennas: usize },
    #[error(
        "channel is too ill-conditioned for zero-forcing (condition number {condition:.3e} \
         exceeds {limit:.0e})"
    )]
    RankDeficient { condition: f64, limit: f64 },
    #[error(
        "SINR targets appear infeasible: {reason} after {iterations} fixed-point iterations \
         (system condition number {condition:.3e})"
    )]
    Infeasible {
        reason: InfeasibleReason,
        iterations: usize,
        condition: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfeasibleReason {
    /// The duality multipliers grew past [`MULTIPLIER_CAP`].
    MultiplierDiverged,
    /// The fixed point was still moving after the iteration budget.
    FixedPointStalled,
    /// A user channel carries no energy, so its target is unreachable.
    ZeroUserChannel,
    /// The power-allocation system was singular or produced a negative power.
    SingularPowerSystem,
}

impl std::fmt::Display for InfeasibleReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let text = match self {
            Self::MultiplierDiverged => "duality multipliers diverged",
            Self::FixedPointStalled => "duality fixed point did not settle",
            Self::ZeroUserChannel => "a user channel carries no energy",
            Self::SingularPowerSystem => "power allocation has no positive solution",
        };
        f.write_str(text)
    }
}

/// Stopping rule of the duality fixed point.
#[derive(Debug, Clone, PartialEq)]
pub struct MmseConfig {
    pub fp_tol: f64,
    pub fp_max_iter: usize,
}

impl Default for MmseConfig {
    fn default() -> Self {
        Self {
            fp_tol: DEFAULT_FP_TOL,
            fp_max_iter: DEFAULT_FP_MAX_ITER,
        }
    }
}

impl MmseConfig {
    fn validate(&self) -> Result<(), BeamformingError> {
        if !(self.fp_tol.is_finite() && self.fp_tol > 0.0) {
            return Err(BeamformingError::InvalidConfig(format!(
                "fp_tol must be positive and finite (got {})",
                self.fp_tol
            )));
        }
        if self.fp_max_iter == 0 {
            return Err(BeamformingError::InvalidConfig(
                "fp_max_iter must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Beamformers and the quantities the solvers derive on the way.
///
/// `weights` are the transmit vectors actually applied (`w_k`, column `k`);
/// `directions` are the same columns at unit norm with `h_k^H w̃_k` pinned
/// real non-negative, and `powers` the per-user transmit powers, so that
/// `w_k = √p_k · w̃_k`.
#[derive(Debug, Clone)]
pub struct BeamformingSolution {
    kind: BeamformerKind,
    weights: DMatrix<Complex64>,
    directions: DMatrix<Complex64>,
    powers: Vec<f64>,
    multipliers: Vec<f64>,
    fixed_point_iterations: usize,
}

impl BeamformingSolution {
    pub fn kind(&self) -> BeamformerKind {
        self.kind
    }

    /// Transmit weight matrix, `N × K`.
    pub fn weights(&self) -> &DMatrix<Complex64> {
        &self.weights
    }

    /// Unit-norm beam directions, `N × K`.
    pub fn directions(&self) -> &DMatrix<Complex64> {
        &self.directions
    }

    /// Per-user transmit powers in watts.
    pub fn powers(&self) -> &[f64] {
        &self.powers
    }

    /// Total radiated power in watts.
    pub fn total_power(&self) -> f64 {
        self.powers.iter().sum()
    }

    /// Uplink duality multipliers (all zero for zero-forcing).
    pub fn multipliers(&self) -> &[f64] {
        &self.multipliers
    }

    /// Sweeps of the duality fixed point (zero for zero-forcing).
    pub fn fixed_point_iterations(&self) -> usize {
        self.fixed_point_iterations
    }
}

/// Per-user receive-side quantities for a given channel and weight matrix.
#[derive(Debug, Clone)]
pub struct SinrReport {
    signal: Vec<f64>,
    interference: Vec<f64>,
    noise: Vec<f64>,
    sinr: Vec<f64>,
}

impl SinrReport {
    /// Desired-signal power `|h_k^H w_k|²` per user.
    pub fn signal(&self) -> &[f64] {
        &self.signal
    }

    /// Cross-user interference power per user.
    pub fn interference(&self) -> &[f64] {
        &self.interference
    }

    pub fn noise(&self) -> &[f64] {
        &self.noise
    }

    pub fn sinr(&self) -> &[f64] {
        &self.sinr
    }

    pub fn min_sinr(&self) -> f64 {
        self.sinr.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Achieved signal, interference and SINR of a weight matrix on a channel.
pub fn sinr_report(
    h: &DMatrix<Complex64>,
    weights: &DMatrix<Complex64>,
    noise_powers: &[f64],
) -> Result<SinrReport, BeamformingError> {
    let users = h.ncols();
    if h.nrows() == 0 || users == 0 {
        return Err(BeamformingError::EmptyChannel {
            rows: h.nrows(),
            cols: h.ncols(),
        });
    }
    if weights.nrows() != h.nrows() || weights.ncols() != users {
        return Err(BeamformingError::DimensionMismatch {
            what: "weight matrix columns",
            expected: users,
            got: weights.ncols(),
        });
    }
    check_positive("noise power", noise_powers, users)?;
    // cross[(k, j)] = h_k^H w_j; row k collects what user k receives.
    let cross = h.ad_mul(weights);
    let mut signal = Vec::with_capacity(users);
    let mut interference = Vec::with_capacity(users);
    let mut sinr = Vec::with_capacity(users);
    for k in 0..users {
        let s = cross[(k, k)].norm_sqr();
        let i = (0..users)
            .filter(|&j| j != k)
            .map(|j| cross[(k, j)].norm_sqr())
            .sum::<f64>();
        signal.push(s);
        interference.push(i);
        sinr.push(s / (i + noise_powers[k]));
    }
    Ok(SinrReport {
        signal,
        interference,
        noise: noise_powers.to_vec(),
        sinr,
    })
}

fn check_positive(
    what: &'static str,
    values: &[f64],
    expected: usize,
) -> Result<(), BeamformingError> {
    if values.len() != expected {
        return Err(BeamformingError::DimensionMismatch {
            what,
            expected,
            got: values.len(),
        });
    }
    for (index, &value) in values.iter().enumerate() {
        if !(value.is_finite() && value > 0.0) {
            return Err(BeamformingError::NonPositiveEntry {
                what,
                index,
                value,
            });
        }
    }
    Ok(())
}

fn check_problem(
    h: &DMatrix<Complex64>,
    noise_powers: &[f64],
    sinr_targets: &[f64],
) -> Result<(), BeamformingError> {
    if h.nrows() == 0 || h.ncols() == 0 {
        return Err(BeamformingError::EmptyChannel {
            rows: h.nrows(),
            cols: h.ncols(),
        });
    }
    check_positive("noise power", noise_powers, h.ncols())?;
    check_positive("SINR target", sinr_targets, h.ncols())?;
    Ok(())
}

/// `Σ(λ) = I + Σ_k λ_k h̃_k h̃_k^H` for the current multipliers.
fn dual_covariance(h_tilde: &DMatrix<Complex64>, lambda: &[f64]) -> DMatrix<Complex64> {
    let n = h_tilde.nrows();
    let mut sigma = DMatrix::identity(n, n);
    for (k, &l) in lambda.iter().enumerate() {
        if l != 0.0 {
            let col = h_tilde.column(k);
            sigma.gerc(Complex64::from(l), &col, &col, Complex64::from(1.0));
        }
    }
    sigma
}

fn condition_number(m: &DMatrix<Complex64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Optimal SINR-constrained power minimisation via uplink–downlink duality.
///
/// The uplink multipliers are driven to the fixed point
/// `λ_k · h̃_k^H Σ(λ)^{-1} h̃_k = γ_k / (1 + γ_k)` (noise-normalised
/// channels `h̃_k = h_k / σ_k`), starting from `λ = 0`, by repeatedly
/// setting each `λ_k` to the exact value that meets user `k`'s target
/// against the other users' current multipliers. The downlink directions
/// are the normalised MMSE vectors `Σ(λ)^{-1} h̃_k`, and the powers solve
/// the linear system that makes every SINR constraint tight, so the
/// achieved SINRs equal the targets up to rounding whenever the problem is
/// feasible.
pub fn mmse_beamformer(
    h: &DMatrix<Complex64>,
    noise_powers: &[f64],
    sinr_targets: &[f64],
    cfg: &MmseConfig,
) -> Result<BeamformingSolution, BeamformingError> {
    check_problem(h, noise_powers, sinr_targets)?;
    cfg.validate()?;
    let users = h.ncols();

    let mut h_tilde = h.clone();
    for (mut col, &noise) in h_tilde.column_iter_mut().zip(noise_powers) {
        col.scale_mut(1.0 / noise.sqrt());
    }

    let mut lambda = vec![0.0_f64; users];
    let mut iterations = 0;
    loop {
        iterations += 1;
        let sigma = dual_covariance(&h_tilde, &lambda);
        let chol = match Cholesky::new(sigma.clone()) {
            Some(c) => c,
            None => {
                return Err(BeamformingError::Infeasible {
                    reason: InfeasibleReason::MultiplierDiverged,
                    iterations,
                    condition: condition_number(&sigma),
                })
            }
        };
        let mut max_rel = 0.0_f64;
        let mut next = lambda.clone();
        for k in 0..users {
            let col = h_tilde.column(k).into_owned();
            let solved = chol.solve(&col);
            let r = col.dotc(&solved).re;
            if !(r.is_finite() && r > 0.0) {
                return Err(BeamformingError::Infeasible {
                    reason: InfeasibleReason::ZeroUserChannel,
                    iterations,
                    condition: condition_number(&sigma),
                });
            }
            // Remove user k's own contribution from Σ (rank-one downdate in
            // scalar form) to get the interference-plus-noise quadratic the
            // uplink SINR is measured against.
            let denom = 1.0 - lambda[k] * r;
            if denom <= 0.0 {
                return Err(BeamformingError::Infeasible {
                    reason: InfeasibleReason::MultiplierDiverged,
                    iterations,
                    condition: condition_number(&sigma),
                });
            }
            let q = r / denom;
            let updated = sinr_targets[k] / q;
            if !updated.is_finite() || updated > MULTIPLIER_CAP {
                return Err(BeamformingError::Infeasible {
                    reason: InfeasibleReason::MultiplierDiverged,
                    iterations,
                    condition: condition_number(&sigma),
                });
            }
            max_rel = max_rel.max((updated - lambda[k]).abs() / updated.max(f64::MIN_POSITIVE));
            next[k] = updated;
        }
        lambda = next;
        if max_rel < cfg.fp_tol {
            break;
        }
        if iterations >= cfg.fp_max_iter {
            let sigma = dual_covariance(&h_tilde, &lambda);
            return Err(BeamformingError::Infeasible {
                reason: InfeasibleReason::FixedPointStalled,
                iterations,
                condition: condition_number(&sigma),
            });
        }
    }

    // Directions: normalised MMSE receive vectors of the dual uplink.
    let sigma = dual_covariance(&h_tilde, &lambda);
    let chol = Cholesky::new(sigma.clone()).ok_or(BeamformingError::Infeasible {
        reason: InfeasibleReason::MultiplierDiverged,
        iterations,
        condition: condition_number(&sigma),
    })?;
    let mut directions = DMatrix::zeros(h.nrows(), users);
    for k in 0..users {
        let col = h_tilde.column(k).into_owned();
        let mut dir = chol.solve(&col);
        let norm = dir.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(BeamformingError::Infeasible {
                reason: InfeasibleReason::ZeroUserChannel,
                iterations,
                condition: condition_number(&sigma),
            });
        }
        dir.scale_mut(1.0 / norm);
        let inner = h.column(k).dotc(&dir);
        pin_phase(&mut dir, inner);
        directions.set_column(k, &dir);
    }

    let (powers, weights) =
        tighten_powers(h, &directions, noise_powers, sinr_targets, iterations)?;
    let multipliers = lambda;
    Ok(BeamformingSolution {
        kind: BeamformerKind::Mmse,
        weights,
        directions,
        powers,
        multipliers,
        fixed_point_iterations: iterations,
    })
}

/// Rotates a direction so the paired channel sees it with zero phase.
fn pin_phase(dir: &mut DVector<Complex64>, inner: Complex64) {
    let mag = inner.norm();
    if mag > 0.0 {
        let rot = inner.conj() / mag;
        for v in dir.iter_mut() {
            *v *= rot;
        }
    }
}

/// Solves for the per-user powers that make every SINR constraint tight for
/// the given unit directions, and assembles the weight matrix.
fn tighten_powers(
    h: &DMatrix<Complex64>,
    directions: &DMatrix<Complex64>,
    noise_powers: &[f64],
    sinr_targets: &[f64],
    iterations: usize,
) -> Result<(Vec<f64>, DMatrix<Complex64>), BeamformingError> {
    let users = h.ncols();
    let cross = h.ad_mul(directions);
    let mut m = DMatrix::<f64>::zeros(users, users);
    for k in 0..users {
        for j in 0..users {
            let c = cross[(k, j)].norm_sqr();
            m[(k, j)] = if k == j { c / sinr_targets[k] } else { -c };
        }
    }
    let sv = m.clone().singular_values();
    let condition = if sv.min() <= 0.0 {
        f64::INFINITY
    } else {
        sv.max() / sv.min()
    };
    let infeasible = |cond| BeamformingError::Infeasible {
        reason: InfeasibleReason::SingularPowerSystem,
        iterations,
        condition: cond,
    };
    if !condition.is_finite() || condition > CONDITION_LIMIT {
        return Err(infeasible(condition));
    }
    let rhs = DVector::from_column_slice(noise_powers);
    let powers = LU::new(m).solve(&rhs).ok_or_else(|| infeasible(condition))?;
    let tol = 1e-12 * powers.amax().max(1.0);
    let mut p = Vec::with_capacity(users);
    for k in 0..users {
        let value = powers[k];
        if !value.is_finite() || value < -tol {
            return Err(infeasible(condition));
        }
        p.push(value.max(0.0));
    }
    let mut weights = directions.clone();
    for (mut col, &power) in weights.column_iter_mut().zip(&p) {
        col.scale_mut(power.sqrt());
    }
    Ok((p, weights))
}

/// Zero-forcing baseline: scaled pseudoinverse directions that null all
/// cross-user interference, with per-user powers chosen so each SINR target
/// holds with equality.
///
/// Requires at least as many antennas as users and a channel whose
/// condition number stays below `1e12`.
pub fn zf_beamformer(
    h: &DMatrix<Complex64>,
    noise_powers: &[f64],
    sinr_targets: &[f64],
) -> Result<BeamformingSolution, BeamformingError> {
    check_problem(h, noise_powers, sinr_targets)?;
    let (n, users) = (h.nrows(), h.ncols());
    if users > n {
        return Err(BeamformingError::TooManyUsers { users, antennas: n });
    }
    let condition = condition_number(h);
    if !condition.is_finite() || condition > CONDITION_LIMIT {
        return Err(BeamformingError::RankDeficient {
            condition,
            limit: CONDITION_LIMIT,
        });
    }
    let gram = h.ad_mul(h);
    let chol = Cholesky::new(gram).ok_or(BeamformingError::RankDeficient {
        condition,
        limit: CONDITION_LIMIT,
    })?;
    // W₀ = H (H^H H)^{-1}: column k reaches user k with unit response and
    // lands in every other user's null space.
    let w0 = h * chol.inverse();

    let mut directions = DMatrix::zeros(n, users);
    let mut powers = Vec::with_capacity(users);
    let mut weights = DMatrix::zeros(n, users);
    for k in 0..users {
        let mut dir = w0.column(k).into_owned();
        // Target received power γ_k σ_k² over a unit-response column.
        let p = sinr_targets[k] * noise_powers[k] * dir.norm_squared();
        let norm = dir.norm();
        dir.scale_mut(1.0 / norm);
        let inner = h.column(k).dotc(&dir);
        pin_phase(&mut dir, inner);
        let mut w = dir.clone();
        w.scale_mut(p.sqrt());
        directions.set_column(k, &dir);
        weights.set_column(k, &w);
        powers.push(p);
    }
    Ok(BeamformingSolution {
        kind: BeamformerKind::Zf,
        weights,
        directions,
        powers,
        multipliers: vec![0.0; users],
        fixed_point_iterations: 0,
    })
}
