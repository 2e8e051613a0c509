use safeland::geometry::GroundPoint;
use safeland::harness::*;
use safeland::scenario::Scenario;
use safeland::sim::{AgentScript, ObstacleAgent, Terrain, World};
use safeland::ClassId;
use std::path::PathBuf;

fn scenario(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name);
    Scenario::load(&path).unwrap()
}

#[test]
fn open_field_lands_safely() {
    let s = scenario("benign.toml");
    for seed in 0..3 {
        let r = run_trial(&s, 0, seed);
        assert_eq!(r.outcome, Outcome::LandedSafe, "seed {seed}: {r:?}");
        assert_eq!(r.touchdown_class, Some(ClassId::Grass));
        assert!(r.touchdown_clearance.unwrap() >= 3.0);
        assert!(r.latencies.is_empty());
    }
}

#[test]
fn person_parked_on_the_only_safe_patch_prevents_landing() {
    // road everywhere except a 12 m grass square with a person standing in it
    let (n, res) = (320usize, 0.25);
    let mut classes = vec![ClassId::Road; n * n];
    for y in 0..n {
        for x in 0..n {
            let (cx, cy) = (x as f64 * res - 40.0 + 0.125, y as f64 * res - 40.0 + 0.125);
            if cx.abs() < 6.0 && cy.abs() < 6.0 {
                classes[y * n + x] = ClassId::Grass;
            }
        }
    }
    let terrain = Terrain {
        width: n,
        height: n,
        resolution: res,
        origin: GroundPoint::new(-40.0, -40.0),
        classes,
    };
    let mut s = scenario("benign.toml");
    s.duration_cap_s = 120.0;
    for seed in 0..2 {
        let trial = s.trial(seed).unwrap();
        let person = ObstacleAgent::person(GroundPoint::new(0.0, 0.0), AgentScript::Static);
        let world = World::new(terrain.clone(), vec![person], trial.tick_rate_hz);
        let r = run_trial_in_world(&trial, world, None);
        assert_eq!(r.outcome, Outcome::TimedOut, "seed {seed}: {r:?}");
        assert!(r.touchdown.is_none());
    }
}

#[test]
fn crossing_person_below_five_meters_causes_one_pause() {
    let s = scenario("crossing.toml");
    for seed in 0..3 {
        let mut trace = Vec::new();
        let r = run_trial_traced(&s, 0, seed, Some(&mut trace));
        assert_eq!(r.outcome, Outcome::LandedSafe, "seed {seed}: {r:?}");
        assert_eq!(r.pauses, 1, "seed {seed}");
        assert_eq!(r.latencies.len(), 1, "seed {seed}");
        assert!(r.latencies[0].latency <= 1.0);
        assert!(!r.person_at_touchdown);
        // the vehicle waits, then resumes its descent
        let first_pause = trace.iter().position(|t| t.command == "pause").unwrap();
        assert!(trace[first_pause].agl <= 5.0);
        assert!(trace[first_pause..].iter().any(|t| t.command == "descend"));
    }
}

#[test]
fn identical_seeds_give_identical_csv_bytes() {
    let s = scenario("acceptance.toml");
    let dirs: Vec<tempfile::TempDir> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    for (dir, jobs) in dirs.iter().zip([1, 1, 2]) {
        let batch = run_batch(&s, 4, 40, jobs).unwrap();
        write_batch(dir.path(), &batch).unwrap();
    }
    for file in ["trials.csv", "summary.csv", "latencies.csv"] {
        let bytes: Vec<Vec<u8>> = dirs.iter().map(|d| std::fs::read(d.path().join(file)).unwrap()).collect();
        assert!(!bytes[0].is_empty());
        assert_eq!(bytes[0], bytes[1], "{file}");
        assert_eq!(bytes[0], bytes[2], "{file} with two workers");
    }
}

#[test]
fn batch_results_are_sorted_and_summarized() {
    let s = scenario("benign.toml");
    let batch = run_batch(&s, 3, 100, 2).unwrap();
    assert_eq!(batch.trials.iter().map(|t| t.trial).collect::<Vec<_>>(), vec![0, 1, 2]);
    assert_eq!(batch.trials.iter().map(|t| t.seed).collect::<Vec<_>>(), vec![100, 101, 102]);
    assert_eq!(batch.summary.trials, 3);
    assert_eq!(batch.summary.success_rate, 1.0);
    assert_eq!(batch.summary.latency_p95_s, None);
    assert!(!batch.aborted_majority());
}

#[test]
fn latency_report_examples() {
    let one = digitize_latency_report(&[0.5]).unwrap();
    assert_eq!((one.p50, one.p90, one.p99), (0.5, 0.5, 0.5));

    let uniform: Vec<f64> = (1..=10).map(|k| k as f64 / 10.0).collect();
    let r = digitize_latency_report(&uniform).unwrap();
    assert!((r.p50 - 0.55).abs() <= LATENCY_BIN_S);
    assert_eq!(r.histogram.iter().map(|(_, c)| c).sum::<usize>(), 10);
    assert!(r.histogram.iter().skip(1).all(|&(_, c)| c == 1));

    assert!(matches!(digitize_latency_report(&[]), Err(HarnessError::EmptyInput)));
}

#[test]
fn latency_csv_round_trip_through_report() {
    let s = scenario("crossing.toml");
    let batch = run_batch(&s, 2, 0, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_batch(dir.path(), &batch).unwrap();
    let samples = read_latencies(&dir.path().join("latencies.csv")).unwrap();
    let expected: Vec<f64> = batch.trials.iter().flat_map(|t| t.latencies.iter().map(|l| l.latency)).collect();
    assert_eq!(samples, expected);
    let out = dir.path().join("report.csv");
    digitize_latency_report(&samples).unwrap().write_csv(&out).unwrap();
    let text = std::fs::read_to_string(out).unwrap();
    assert!(text.starts_with("kind,label,value\n"));
    assert!(text.contains("percentile,p99,"));
}

#[test]
fn pipeline_modules_never_read_ground_truth() {
    let sources = [
        ("geometry", include_str!("../src/geometry.rs")),
        ("semantic_map", include_str!("../src/semantic_map.rs")),
        ("segmentation", include_str!("../src/segmentation.rs")),
        ("spot", include_str!("../src/spot.rs")),
        ("bt", include_str!("../src/bt.rs")),
    ];
    for (name, text) in sources {
        for forbidden in ["crate::sim", "crate::harness", "crate::scenario"] {
            assert!(!text.contains(forbidden), "{name} depends on {forbidden}");
        }
    }
}
