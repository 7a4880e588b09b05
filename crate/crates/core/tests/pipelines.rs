use gibbslab::entropy::{itinerary_entropy_rate, ItinerarySample};
use gibbslab::experiment::{
    gibbs_audit_with, recurrence_count, recurrence_probe_from_config, run_lyapunov, run_recurrence_probe,
    ExperimentConfig, RecurrenceTarget,
};
use gibbslab::measure::{empirical_measure, sample_uniform, GridMeasure, GridPartition, MeasureDistanceConfig};
use gibbslab::pressure::greedy_separated_set;
use gibbslab::system::IdentityMap;
use gibbslab::systems::{make_cat_map, SystemSpec};
use gibbslab::PhaseSpace;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const LOG_LAMBDA: f64 = 0.962_423_650_119_206_9;

fn config_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn shipped_configs_parse_and_build() {
    let mut n = 0;
    for entry in std::fs::read_dir(config_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let cfg = ExperimentConfig::from_path(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            cfg.build().unwrap();
            n += 1;
        }
    }
    assert!(n >= 5);
}

#[test]
fn lorenz_potential_is_negative() {
    let cfg = ExperimentConfig::from_path(&config_dir().join("lorenz_gibbs.json")).unwrap();
    let built = cfg.build().unwrap();
    let audit = gibbs_audit_with(&built, &cfg).unwrap();
    assert!(audit.report.potential_average < 0.0);
    for (_, p) in &audit.per_ic_potential {
        assert!(*p < 0.0);
    }
}

#[test]
fn cat_recurrence_to_uniform() {
    let mut cfg = ExperimentConfig::for_system(SystemSpec::Cat);
    cfg.orbit_length = 100_000;
    cfg.ic_count = 4;
    cfg.recurrence.radius = 0.2;
    let diags = recurrence_probe_from_config(&cfg).unwrap();
    for d in &diags {
        assert!(d.count <= cfg.orbit_length);
        assert!(d.fraction() > 0.9, "{d:?}");
    }
}

#[test]
fn identity_never_recurs_to_uniform() {
    let space = PhaseSpace::torus(2);
    let id = IdentityMap::new(space.clone());
    let part = GridPartition::new(space, 4).unwrap();
    let dcfg = MeasureDistanceConfig::for_partition(&part);
    let target = GridMeasure::uniform(part.clone());
    for x in [[0.1, 0.1], [0.6, 0.3], [0.99, 0.5]] {
        let d = recurrence_count(&id, 0, &x, 1000, &part, &target, 0.1, 1, &dcfg).unwrap();
        assert_eq!(d.count, 0);
        assert_eq!(d.evaluations, 1000);
    }
}

#[test]
fn own_orbit_recurrence_approaches_one() {
    let mut cfg = ExperimentConfig::for_system(SystemSpec::Cat);
    cfg.ic_count = 2;
    cfg.recurrence.radius = 0.05;
    cfg.recurrence.target = RecurrenceTarget::OwnOrbit;
    let mut fractions = Vec::new();
    for n in [2_000, 20_000, 200_000] {
        cfg.orbit_length = n;
        let diags = recurrence_probe_from_config(&cfg).unwrap();
        fractions.push(diags.iter().map(|d| d.fraction()).sum::<f64>() / diags.len() as f64);
    }
    assert!(fractions[0] < fractions[1] && fractions[1] < fractions[2], "{fractions:?}");
    assert!(fractions[2] > 0.95);
}

#[test]
fn recurrence_rejects_bad_radius() {
    let cfg = ExperimentConfig::for_system(SystemSpec::Cat);
    let part = GridPartition::new(PhaseSpace::torus(2), 32).unwrap();
    assert!(run_recurrence_probe(&cfg, &GridMeasure::uniform(part), 0.0).is_err());
}

#[test]
fn lyapunov_rows_per_initial_condition() {
    let mut cfg = ExperimentConfig::for_system(SystemSpec::AnosovT4);
    cfg.ic_count = 3;
    cfg.lyapunov.n = Some(5_000);
    let rows = run_lyapunov(&cfg).unwrap();
    assert_eq!(rows.len(), 3);
    for r in rows {
        let e = r.exponents.unwrap();
        assert!((e[0] - 3.0 * LOG_LAMBDA).abs() < 1e-3);
        assert!(e.iter().sum::<f64>().abs() < 1e-9);
    }
}

fn separated_counts() -> Vec<usize> {
    let cat = make_cat_map();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let pool = sample_uniform(&PhaseSpace::torus(2), 10_000, &mut rng);
    (2..=7)
        .map(|m| greedy_separated_set(&pool, &cat, 0.05, m).unwrap().len())
        .collect()
}

#[test]
fn separated_set_counts_regression() {
    assert_eq!(separated_counts(), vec![533, 1233, 2610, 4788, 7025, 8608]);
}

#[test]
#[ignore = "a pool of 10^4 candidates saturates once m >= 5; increments drop below 0.5"]
fn separated_set_growth_rate() {
    let sizes = separated_counts();
    for (i, w) in sizes.windows(2).enumerate() {
        let inc = (w[1] as f64 / w[0] as f64).ln();
        assert!((0.5..=1.3).contains(&inc), "m = {}: increment {inc}", i + 2);
    }
}

#[test]
fn fine_partition_itineraries_are_flagged_undersampled() {
    let cat = make_cat_map();
    let part = GridPartition::new(PhaseSpace::torus(2), 32).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ics = sample_uniform(&PhaseSpace::torus(2), 100_000, &mut rng);
    let sample = ItinerarySample::from_initial_conditions(&cat, &ics, &part, 8).unwrap();
    let est = itinerary_entropy_rate(&sample).unwrap();
    assert!(est.undersampled);
}

#[test]
#[ignore = "1024^8 possible words against 10^6 samples: every word is distinct"]
fn fine_partition_entropy_within_fifteen_percent() {
    let cat = make_cat_map();
    let part = GridPartition::new(PhaseSpace::torus(2), 32).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ics = sample_uniform(&PhaseSpace::torus(2), 1_000_000, &mut rng);
    let sample = ItinerarySample::from_initial_conditions(&cat, &ics, &part, 8).unwrap();
    let est = itinerary_entropy_rate(&sample).unwrap();
    assert!((est.per_symbol - LOG_LAMBDA).abs() < 0.15 * LOG_LAMBDA, "{est:?}");
}

#[test]
fn coarse_partition_entropy_matches_lyapunov() {
    let cat = make_cat_map();
    let part = GridPartition::new(PhaseSpace::torus(2), 2).unwrap();
    let x = [0.123_456, 0.654_321];
    let mu = empirical_measure(&cat, &x, 10, &part).unwrap();
    assert!(mu.support_size() > 0);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let ics = sample_uniform(&PhaseSpace::torus(2), 400_000, &mut rng);
    let sample = ItinerarySample::from_initial_conditions(&cat, &ics, &part, 8).unwrap();
    let est = itinerary_entropy_rate(&sample).unwrap();
    assert!(!est.undersampled);
    assert!((est.conditional - LOG_LAMBDA).abs() < 0.15 * LOG_LAMBDA, "{est:?}");
}

#[test]
fn sweep_zero_row_sits_below_noise_floor() {
    let mut cfg = ExperimentConfig::for_system(SystemSpec::Cat);
    cfg.orbit_length = 20_000;
    cfg.ic_count = 8;
    cfg.itinerary.samples = 100_000;
    cfg.recurrence.stride = 50;
    cfg.perturbation = Some(
        serde_json::from_value(serde_json::json!({
            "kind": "bump-shear",
            "axis": 0,
            "along": 1,
            "center": [0.3, 0.7],
            "radius": 0.2,
            "schedule": [0.05, 0.0]
        }))
        .unwrap(),
    );
    let built = cfg.build().unwrap();
    let rep = gibbslab::experiment::stability_sweep_with(&built, &cfg).unwrap();
    assert!(rep.all_ok());
    assert!(rep.rows[1].distance.unwrap() <= rep.noise_floor);
    assert!(rep.rows[0].distance.unwrap() > rep.rows[1].distance.unwrap());
    assert!(rep.rows.last().unwrap().gibbs_defect.unwrap() > -0.25);
}
