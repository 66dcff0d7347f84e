//! Whole-chain checks: scenario sampling through channel synthesis,
//! beamforming, and the alternating optimizer, verified against each other
//! on the same realizations.

use fim_core::{
    channel_matrix, mmse_beamformer, noise_power, optimize, sample_environment,
    sample_user_positions, sinr_report, AoConfig, BeamformerKind, FimGeometry, LinkBudget,
    MmseConfig, ScatteringEnvironment, ScenarioGeometry, SurfaceShape, SPEED_OF_LIGHT,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const LAMBDA: f64 = SPEED_OF_LIGHT / 28e9;

fn realization(seed: u64, users: usize, paths: usize) -> (LinkBudget, ScatteringEnvironment) {
    let scenario = ScenarioGeometry::new(5.0, 20.0, 10.0, users).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let distances = sample_user_positions(&mut rng, &scenario);
    let noise = noise_power(-174.0, 1e8).unwrap();
    let link = LinkBudget::from_path_loss(distances, 1.0, 2.2, LAMBDA, noise).unwrap();
    let env = sample_environment(&mut rng, &scenario, paths, &link).unwrap();
    (link, env)
}

#[test]
fn rigid_run_is_exactly_one_beamforming_solve() {
    let geom = FimGeometry::half_wavelength(2, 3, LAMBDA).unwrap();
    let (link, env) = realization(11, 4, 8);
    let targets = vec![10f64.powf(0.5); 4];

    let cfg = AoConfig {
        morph_enabled: false,
        ..AoConfig::default()
    };
    let trace = optimize(&env, &geom, 0.0, &link, &targets, &cfg).unwrap();

    let flat = SurfaceShape::flat(geom.element_count(), 0.0).unwrap();
    let h = channel_matrix(&env, &geom, &flat).unwrap();
    let direct = mmse_beamformer(&h, link.noise_powers(), &targets, &MmseConfig::default()).unwrap();

    assert!(trace.converged);
    assert_eq!(trace.final_power_w(), direct.total_power());
    assert!(trace.shape.displacements().iter().all(|&y| y == 0.0));
}

#[test]
fn morphing_meets_every_target_at_the_final_shape() {
    let geom = FimGeometry::half_wavelength(2, 3, LAMBDA).unwrap();
    for seed in [3u64, 17, 42] {
        let (link, env) = realization(seed, 4, 8);
        let targets = vec![10f64.powf(0.5); 4];
        let trace = optimize(&env, &geom, LAMBDA, &link, &targets, &AoConfig::default()).unwrap();

        // The final solution must satisfy the targets on the channel its
        // shape actually produces, not just internally.
        let h = channel_matrix(&env, &geom, &trace.shape).unwrap();
        let report = sinr_report(&h, trace.solution.weights(), link.noise_powers()).unwrap();
        for (k, &target) in targets.iter().enumerate() {
            assert!(
                report.sinr()[k] >= target * (1.0 - 1e-8),
                "seed {seed}: user {k} reached {} of target {target}",
                report.sinr()[k]
            );
        }
        assert!(trace
            .shape
            .displacements()
            .iter()
            .all(|&y| (0.0..=LAMBDA).contains(&y)));

        // Morphing never loses to the rigid baseline it starts from.
        let first = trace.iterations.first().unwrap().total_power_w;
        assert!(trace.final_power_w() <= first * (1.0 + 1e-12));
    }
}

#[test]
fn beamformer_kinds_keep_their_ordering_through_the_optimizer() {
    let geom = FimGeometry::half_wavelength(2, 3, LAMBDA).unwrap();
    let (link, env) = realization(23, 4, 8);
    let targets = vec![10f64.powf(0.5); 4];

    let mmse = optimize(&env, &geom, 0.0, &link, &targets, &AoConfig::default()).unwrap();
    let zf_cfg = AoConfig {
        beamformer: BeamformerKind::Zf,
        ..AoConfig::default()
    };
    let zf = optimize(&env, &geom, 0.0, &link, &targets, &zf_cfg).unwrap();

    assert_eq!(mmse.solution.kind(), BeamformerKind::Mmse);
    assert_eq!(zf.solution.kind(), BeamformerKind::Zf);
    assert!(mmse.final_power_w() <= zf.final_power_w() * (1.0 + 1e-9));
}

#[test]
fn identical_seeds_reproduce_identical_traces() {
    let geom = FimGeometry::half_wavelength(2, 2, LAMBDA).unwrap();
    let targets = vec![10f64.powf(0.5); 4];
    let run = || {
        let (link, env) = realization(5, 4, 8);
        optimize(&env, &geom, LAMBDA, &link, &targets, &AoConfig::default()).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.power_trace(), b.power_trace());
    assert_eq!(a.shape.displacements(), b.shape.displacements());
}
