//! Generator-driven invariants: algebraic facts that must hold for every
//! well-posed input, not just the hand-picked cases in the unit tests.

use fim_core::{
    channel_matrix, dbm_to_watts, mmse_beamformer, noise_power, sample_environment,
    sample_user_positions, sinr_margins, sinr_report, steering_vector, watts_to_dbm,
    zf_beamformer, FimGeometry, LinkBudget, MmseConfig, ScenarioGeometry, SurfaceShape,
    SPEED_OF_LIGHT,
};
use nalgebra::{Complex, DMatrix};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const LAMBDA: f64 = SPEED_OF_LIGHT / 28e9;

fn solved_instance(
    seed: u64,
    users: usize,
    target_db: f64,
) -> (DMatrix<Complex<f64>>, Vec<f64>, Vec<f64>) {
    let geom = FimGeometry::half_wavelength(2, 3, LAMBDA).unwrap();
    let scenario = ScenarioGeometry::new(5.0, 20.0, 10.0, users).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let distances = sample_user_positions(&mut rng, &scenario);
    let noise = noise_power(-174.0, 1e8).unwrap();
    let link = LinkBudget::from_path_loss(distances, 1.0, 2.2, LAMBDA, noise).unwrap();
    let env = sample_environment(&mut rng, &scenario, 8, &link).unwrap();
    let flat = SurfaceShape::flat(geom.element_count(), 0.0).unwrap();
    let h = channel_matrix(&env, &geom, &flat).unwrap();
    let targets = vec![10f64.powf(target_db / 10.0); users];
    (h, link.noise_powers().to_vec(), targets)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn steering_entries_have_unit_modulus_for_any_shape_and_direction(
        n_x in 1usize..=4,
        n_z in 1usize..=4,
        azimuth in 0.0..std::f64::consts::PI,
        elevation in 0.0..std::f64::consts::PI,
        fractions in proptest::collection::vec(0.0..=1.0f64, 16),
    ) {
        let geom = FimGeometry::half_wavelength(n_x, n_z, LAMBDA).unwrap();
        let y: Vec<f64> = fractions[..geom.element_count()]
            .iter()
            .map(|f| f * LAMBDA)
            .collect();
        let shape = SurfaceShape::new(y, LAMBDA).unwrap();
        let a = steering_vector(&geom, &shape, azimuth, elevation).unwrap();
        for entry in a.iter() {
            prop_assert!((entry.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn clamping_always_lands_inside_the_box(
        y in proptest::collection::vec(-1.0..2.0f64, 1..16),
        y_max in 1e-6..0.1f64,
    ) {
        let shape = SurfaceShape::clamped(y, y_max).unwrap();
        for &v in shape.displacements() {
            prop_assert!((0.0..=y_max).contains(&v));
        }
    }

    #[test]
    fn dbm_and_watts_are_inverse_scales(dbm in -100.0..60.0f64) {
        let back = watts_to_dbm(dbm_to_watts(dbm));
        prop_assert!((back - dbm).abs() < 1e-9);
    }

    #[test]
    fn solutions_meet_targets_and_keep_the_kind_ordering(
        seed in 0u64..1_000_000,
        users in 1usize..=4,
        target_db in 0.0..15.0f64,
    ) {
        let (h, noise, targets) = solved_instance(seed, users, target_db);
        let mmse = mmse_beamformer(&h, &noise, &targets, &MmseConfig::default()).unwrap();
        let zf = zf_beamformer(&h, &noise, &targets).unwrap();

        let report = sinr_report(&h, mmse.weights(), &noise).unwrap();
        for (k, &target) in targets.iter().enumerate() {
            prop_assert!((report.sinr()[k] - target).abs() / target < 1e-8);
        }
        prop_assert!(mmse.total_power() <= zf.total_power() * (1.0 + 1e-9));

        // Margins are exactly tight at either solution.
        for sol in [&mmse, &zf] {
            let margins = sinr_margins(&h, sol.weights(), &noise, &targets).unwrap();
            prop_assert!(margins.min() > -1e-8);
        }
    }
}
