//! Geometric multipath channel synthesis and link-budget bookkeeping.
//!
//! Users share one set of scatterers: every downlink channel is a linear
//! combination of the same `L` plane-wave steering vectors, with per-user
//! complex gains drawn CN(0, g_k / L) so that `E[‖h_k‖²] = N g_k`. The
//! large-scale gain `g_k` follows a free-space-anchored power law and the
//! noise floor is thermal noise over the signalling bandwidth.

use crate::geometry::{steering_vector, FimGeometry, GeometryError, SurfaceShape};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, UnitDisc};
use std::f64::consts::PI;
use thiserror::Error;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("bandwidth must be positive (got {0} Hz)")]
    NonPositiveBandwidth(f64),
    #[error("{name} must be positive and finite (got {value})")]
    NonPositive { name: &'static str, value: f64 },
    #[error("{name} must be non-negative and finite (got {value})")]
    Negative { name: &'static str, value: f64 },
    #[error("distance {distance} m is closer than the reference distance {reference} m")]
    DistanceBelowReference { distance: f64, reference: f64 },
    #[error("environment needs at least one propagation path")]
    NoPaths,
    #[error("environment has {angles} path angles but {gain_cols} gain columns")]
    PathCountMismatch { angles: usize, gain_cols: usize },
    #[error("{what}: expected {expected} users, got {got}")]
    UserCountMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Thermal noise power in watts over `bandwidth_hz`, for a spectral
/// density given in dBm/Hz (−174 dBm/Hz at room temperature).
pub fn noise_power(noise_density_dbm_per_hz: f64, bandwidth_hz: f64) -> Result<f64, ChannelError> {
    if !(bandwidth_hz.is_finite() && bandwidth_hz > 0.0) {
        return Err(ChannelError::NonPositiveBandwidth(bandwidth_hz));
    }
    let dbm = noise_density_dbm_per_hz + 10.0 * bandwidth_hz.log10();
    Ok(10f64.powf((dbm - 30.0) / 10.0))
}

/// Combined transmit and receive antenna element gain folded into the link
/// budget: two ~6 dBi patch elements, the usual assumption at 28 GHz.
pub const ELEMENT_GAINS_DB: f64 = 12.0;

/// Distance-dependent channel power gain: free-space at the reference
/// distance plus [`ELEMENT_GAINS_DB`], then a power-law roll-off with the
/// given exponent.
///
/// `g(d) = G (λ / 4π d₀)² (d / d₀)^(−n̄)` for `d ≥ d₀ > 0`.
pub fn path_gain(
    distance_m: f64,
    reference_distance_m: f64,
    path_loss_exponent: f64,
    wavelength: f64,
) -> Result<f64, ChannelError> {
    for (name, value) in [
        ("reference distance", reference_distance_m),
        ("path-loss exponent", path_loss_exponent),
        ("wavelength", wavelength),
    ] {
        if !(value.is_finite() && value > 0.0) {
            return Err(ChannelError::NonPositive { name, value });
        }
    }
    if !(distance_m.is_finite() && distance_m >= reference_distance_m) {
        return Err(ChannelError::DistanceBelowReference {
            distance: distance_m,
            reference: reference_distance_m,
        });
    }
    let free_space = (wavelength / (4.0 * PI * reference_distance_m)).powi(2);
    let element_gains = 10f64.powf(ELEMENT_GAINS_DB / 10.0);
    Ok(element_gains * free_space * (distance_m / reference_distance_m).powf(-path_loss_exponent))
}

/// Placement of the base station relative to the served user region: the
/// surface sits `bs_height` above the ground plane, and the `user_count`
/// users are dropped uniformly on a ground disc of radius `region_radius`
/// whose centre is `region_center_distance` from the point below the array.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioGeometry {
    bs_height: f64,
    region_center_distance: f64,
    region_radius: f64,
    user_count: usize,
}

impl ScenarioGeometry {
    pub fn new(
        bs_height: f64,
        region_center_distance: f64,
        region_radius: f64,
        user_count: usize,
    ) -> Result<Self, ChannelError> {
        if !(bs_height.is_finite() && bs_height > 0.0) {
            return Err(ChannelError::NonPositive {
                name: "base-station height",
                value: bs_height,
            });
        }
        for (name, value) in [
            ("region centre distance", region_center_distance),
            ("region radius", region_radius),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(ChannelError::Negative { name, value });
            }
        }
        if user_count == 0 {
            return Err(ChannelError::UserCountMismatch {
                what: "scenario",
                expected: 1,
                got: 0,
            });
        }
        Ok(Self {
            bs_height,
            region_center_distance,
            region_radius,
            user_count,
        })
    }

    pub fn bs_height(&self) -> f64 {
        self.bs_height
    }

    pub fn region_center_distance(&self) -> f64 {
        self.region_center_distance
    }

    pub fn region_radius(&self) -> f64 {
        self.region_radius
    }

    pub fn user_count(&self) -> usize {
        self.user_count
    }
}

/// Draws each user uniformly on the ground disc and returns the resulting
/// BS-to-user distances (one per user, in metres).
///
/// With `region_radius = 0` every user sits at the disc centre.
pub fn sample_user_positions<R: Rng + ?Sized>(
    rng: &mut R,
    scenario: &ScenarioGeometry,
) -> Vec<f64> {
    (0..scenario.user_count)
        .map(|_| {
            let [px, py]: [f64; 2] = UnitDisc.sample(rng);
            let dx = scenario.region_center_distance + scenario.region_radius * px;
            let dy = scenario.region_radius * py;
            (scenario.bs_height.powi(2) + dx * dx + dy * dy).sqrt()
        })
        .collect()
}

/// Large-scale link parameters per user: distance, power gain, and noise
/// power at the receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkBudget {
    distances: Vec<f64>,
    gains: Vec<f64>,
    noise_powers: Vec<f64>,
}

impl LinkBudget {
    pub fn new(
        distances: Vec<f64>,
        gains: Vec<f64>,
        noise_powers: Vec<f64>,
    ) -> Result<Self, ChannelError> {
        if gains.len() != distances.len() {
            return Err(ChannelError::UserCountMismatch {
                what: "link-budget gains",
                expected: distances.len(),
                got: gains.len(),
            });
        }
        if noise_powers.len() != distances.len() {
            return Err(ChannelError::UserCountMismatch {
                what: "link-budget noise powers",
                expected: distances.len(),
                got: noise_powers.len(),
            });
        }
        for &g in &gains {
            if !(g.is_finite() && g > 0.0) {
                return Err(ChannelError::NonPositive {
                    name: "channel gain",
                    value: g,
                });
            }
        }
        for &s in &noise_powers {
            if !(s.is_finite() && s > 0.0) {
                return Err(ChannelError::NonPositive {
                    name: "noise power",
                    value: s,
                });
            }
        }
        Ok(Self {
            distances,
            gains,
            noise_powers,
        })
    }

    /// Applies [`path_gain`] to every distance and a common noise power to
    /// every user.
    pub fn from_path_loss(
        distances: Vec<f64>,
        reference_distance_m: f64,
        path_loss_exponent: f64,
        wavelength: f64,
        noise_power_w: f64,
    ) -> Result<Self, ChannelError> {
        let gains = distances
            .iter()
            .map(|&d| path_gain(d, reference_distance_m, path_loss_exponent, wavelength))
            .collect::<Result<Vec<_>, _>>()?;
        let noise_powers = vec![noise_power_w; distances.len()];
        Self::new(distances, gains, noise_powers)
    }

    pub fn user_count(&self) -> usize {
        self.distances.len()
    }

    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn noise_powers(&self) -> &[f64] {
        &self.noise_powers
    }
}

/// Arrival direction of one propagation path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathAngles {
    pub azimuth: f64,
    pub elevation: f64,
}

/// One realisation of the scattering geometry: path directions shared by
/// all users, and the per-user complex gain of every path.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringEnvironment {
    angles: Vec<PathAngles>,
    /// `gains[(k, l)]` is user `k`'s gain on path `l` (K × L).
    gains: DMatrix<Complex64>,
}

impl ScatteringEnvironment {
    pub fn new(angles: Vec<PathAngles>, gains: DMatrix<Complex64>) -> Result<Self, ChannelError> {
        if angles.is_empty() {
            return Err(ChannelError::NoPaths);
        }
        if gains.ncols() != angles.len() {
            return Err(ChannelError::PathCountMismatch {
                angles: angles.len(),
                gain_cols: gains.ncols(),
            });
        }
        if gains.nrows() == 0 {
            return Err(ChannelError::UserCountMismatch {
                what: "environment gains",
                expected: 1,
                got: 0,
            });
        }
        Ok(Self { angles, gains })
    }

    pub fn path_count(&self) -> usize {
        self.angles.len()
    }

    pub fn user_count(&self) -> usize {
        self.gains.nrows()
    }

    pub fn angles(&self) -> &[PathAngles] {
        &self.angles
    }

    /// User `k`'s complex gain on path `l`.
    pub fn gain(&self, user: usize, path: usize) -> Complex64 {
        self.gains[(user, path)]
    }

    pub fn gains(&self) -> &DMatrix<Complex64> {
        &self.gains
    }
}

/// Draws one scattering realisation: `path_count` directions uniform over
/// `[0, π) × [0, π)` (azimuth, then elevation, per path), followed by the
/// user-by-user path gains `α_{k,l} ~ CN(0, g_k / L)` in row-major order.
///
/// The draw order is part of the contract: fixed seeds must keep producing
/// the same realisation.
pub fn sample_environment<R: Rng + ?Sized>(
    rng: &mut R,
    scenario: &ScenarioGeometry,
    path_count: usize,
    link: &LinkBudget,
) -> Result<ScatteringEnvironment, ChannelError> {
    if path_count == 0 {
        return Err(ChannelError::NoPaths);
    }
    if link.user_count() != scenario.user_count() {
        return Err(ChannelError::UserCountMismatch {
            what: "link budget",
            expected: scenario.user_count(),
            got: link.user_count(),
        });
    }
    let angles: Vec<PathAngles> = (0..path_count)
        .map(|_| {
            let azimuth = rng.random::<f64>() * PI;
            let elevation = rng.random::<f64>() * PI;
            PathAngles { azimuth, elevation }
        })
        .collect();
    let users = scenario.user_count();
    let mut gains = DMatrix::zeros(users, path_count);
    for k in 0..users {
        // Split g_k evenly across paths; each quadrature gets half.
        let sigma = (link.gains()[k] / (2.0 * path_count as f64)).sqrt();
        for l in 0..path_count {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            gains[(k, l)] = Complex64::new(sigma * re, sigma * im);
        }
    }
    ScatteringEnvironment::new(angles, gains)
}

/// Downlink channel matrix `H` (N × K) of the deformed surface: column `k`
/// is `h_k = Σ_l α_{k,l} a(φ_l, θ_l)`.
pub fn channel_matrix(
    env: &ScatteringEnvironment,
    geom: &FimGeometry,
    shape: &SurfaceShape,
) -> Result<DMatrix<Complex64>, ChannelError> {
    let n = geom.element_count();
    let users = env.user_count();
    let mut h = DMatrix::zeros(n, users);
    for (l, angles) in env.angles().iter().enumerate() {
        let a = steering_vector(geom, shape, angles.azimuth, angles.elevation)?;
        for k in 0..users {
            let alpha = env.gain(k, l);
            for i in 0..n {
                h[(i, k)] += alpha * a[i];
            }
        }
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn thermal_noise_matches_closed_forms() {
        // 0 dBm/Hz over 1 kHz is exactly 1 W.
        assert_relative_eq!(noise_power(0.0, 1e3).unwrap(), 1.0, epsilon = 1e-12);
        // −174 dBm/Hz over 100 MHz.
        assert_relative_eq!(
            noise_power(-174.0, 1e8).unwrap(),
            10f64.powf(-12.4),
            max_relative = 1e-12
        );
        assert!(noise_power(-174.0, 0.0).is_err());
    }

    #[test]
    fn path_gain_is_free_space_plus_element_gains_at_the_reference_distance() {
        let wavelength = SPEED_OF_LIGHT / 28e9;
        let g = path_gain(1.0, 1.0, 2.2, wavelength).unwrap();
        let free_space = (wavelength / (4.0 * PI)).powi(2);
        assert_relative_eq!(
            g,
            free_space * 10f64.powf(ELEMENT_GAINS_DB / 10.0),
            max_relative = 1e-12
        );
        // ≈ −61.4 dB free-space loss less 12 dB of element gains at 28 GHz.
        assert_relative_eq!(g, 7.27e-7 * 10f64.powf(1.2), max_relative = 0.01);
    }

    #[test]
    fn path_gain_rolls_off_with_the_configured_exponent() {
        let g1 = path_gain(5.0, 1.0, 2.2, 0.0107).unwrap();
        let g2 = path_gain(10.0, 1.0, 2.2, 0.0107).unwrap();
        assert_relative_eq!(g1 / g2, 2f64.powf(2.2), max_relative = 1e-12);
        assert!(path_gain(0.5, 1.0, 2.2, 0.0107).is_err());
    }

    #[test]
    fn sampled_distances_stay_inside_the_annulus_bounds() {
        let scenario = ScenarioGeometry::new(5.0, 20.0, 10.0, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let lo = (5f64.powi(2) + 10f64.powi(2)).sqrt();
        let hi = (5f64.powi(2) + 30f64.powi(2)).sqrt();
        for _ in 0..500 {
            for d in sample_user_positions(&mut rng, &scenario) {
                assert!(d >= lo && d <= hi, "distance {d} outside [{lo}, {hi}]");
            }
        }
    }

    #[test]
    fn zero_radius_region_puts_every_user_at_the_centre() {
        let scenario = ScenarioGeometry::new(5.0, 20.0, 0.0, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let expected = (25.0f64 + 400.0).sqrt();
        for d in sample_user_positions(&mut rng, &scenario) {
            assert_relative_eq!(d, expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn disc_sampling_has_the_uniform_second_moment() {
        // For a uniform disc of radius R, E[r²] = R²/2. Monte Carlo with a
        // fixed seed; the tolerance leaves ~5 standard errors of slack.
        let scenario = ScenarioGeometry::new(1e-9, 0.0, 10.0, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 200_000;
        let mean_sq: f64 = (0..n)
            .map(|_| sample_user_positions(&mut rng, &scenario)[0].powi(2))
            .sum::<f64>()
            / n as f64;
        assert_relative_eq!(mean_sq, 50.0, max_relative = 0.01);
    }

    #[test]
    fn environment_draws_are_reproducible_and_well_scaled() {
        let scenario = ScenarioGeometry::new(5.0, 20.0, 10.0, 2).unwrap();
        let link = LinkBudget::new(
            vec![20.0, 25.0],
            vec![1e-6, 4e-7],
            vec![1e-12, 1e-12],
        )
        .unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let env_a = sample_environment(&mut rng, &scenario, 8, &link).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let env_b = sample_environment(&mut rng, &scenario, 8, &link).unwrap();
        assert_eq!(env_a, env_b);

        for a in env_a.angles() {
            assert!((0.0..PI).contains(&a.azimuth));
            assert!((0.0..PI).contains(&a.elevation));
        }

        // Per-path gain variance is g_k / L: check the mean square over many
        // draws for user 1 (g = 4e-7, L = 8 → E|α|² = 5e-8).
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let draws = 4000;
        let mut acc = 0.0;
        for _ in 0..draws {
            let env = sample_environment(&mut rng, &scenario, 8, &link).unwrap();
            for l in 0..8 {
                acc += env.gain(1, l).norm_sqr();
            }
        }
        let mean = acc / (draws * 8) as f64;
        assert_relative_eq!(mean, 5e-8, max_relative = 0.02);
    }

    #[test]
    fn channel_mean_square_norm_matches_the_link_gain() {
        // E[‖h_k‖²] = N g_k because paths are uncorrelated and steering
        // entries have unit modulus.
        let scenario = ScenarioGeometry::new(5.0, 20.0, 10.0, 1).unwrap();
        let link = LinkBudget::new(vec![20.0], vec![2e-6], vec![1e-12]).unwrap();
        let geom = FimGeometry::half_wavelength(2, 3, 0.0107).unwrap();
        let shape = SurfaceShape::flat(6, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 10_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            let env = sample_environment(&mut rng, &scenario, 4, &link).unwrap();
            let h = channel_matrix(&env, &geom, &shape).unwrap();
            acc += h.column(0).norm_squared();
        }
        assert_relative_eq!(acc / draws as f64, 6.0 * 2e-6, max_relative = 0.05);
    }

    #[test]
    fn single_path_channel_is_a_scaled_steering_vector() {
        let geom = FimGeometry::half_wavelength(2, 2, 1.0).unwrap();
        let shape = SurfaceShape::new(vec![0.0, 0.1, 0.2, 0.3], 0.5).unwrap();
        let angles = PathAngles {
            azimuth: 0.4,
            elevation: 1.2,
        };
        let alpha = Complex64::new(0.3, -0.7);
        let env = ScatteringEnvironment::new(
            vec![angles],
            DMatrix::from_element(1, 1, alpha),
        )
        .unwrap();
        let h = channel_matrix(&env, &geom, &shape).unwrap();
        let a = steering_vector(&geom, &shape, angles.azimuth, angles.elevation).unwrap();
        for i in 0..4 {
            let expected = alpha * a[i];
            assert_abs_diff_eq!(h[(i, 0)].re, expected.re, epsilon = 1e-15);
            assert_abs_diff_eq!(h[(i, 0)].im, expected.im, epsilon = 1e-15);
        }
    }

    #[test]
    fn dimension_mismatches_are_rejected() {
        assert!(matches!(
            ScatteringEnvironment::new(vec![], DMatrix::zeros(1, 0)),
            Err(ChannelError::NoPaths)
        ));
        let angles = vec![PathAngles {
            azimuth: 0.0,
            elevation: 0.0,
        }];
        assert!(matches!(
            ScatteringEnvironment::new(angles, DMatrix::zeros(2, 3)),
            Err(ChannelError::PathCountMismatch { .. })
        ));
        let scenario = ScenarioGeometry::new(5.0, 20.0, 10.0, 3).unwrap();
        let link = LinkBudget::new(vec![20.0], vec![1e-6], vec![1e-12]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            sample_environment(&mut rng, &scenario, 4, &link),
            Err(ChannelError::UserCountMismatch { .. })
        ));
    }
}
