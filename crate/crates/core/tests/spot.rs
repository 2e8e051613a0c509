use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use safeland::geometry::GroundPoint;
use safeland::semantic_map::{FilterConfig, LabelGrid, SemanticGroundMap};
use safeland::spot::*;
use safeland::{ClassId, ClassSet};

mod common;
use common::*;

#[test]
fn distance_transform_matches_brute_force_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let classes = ClassSet::with_safe(&[ClassId::Grass, ClassId::Dirt]).unwrap();
    for _ in 0..100 {
        let (w, h) = (rng.random_range(1..=32), rng.random_range(1..=32));
        let mut labels = LabelGrid::filled(w, h, ClassId::Road);
        let density = rng.random_range(0.3..0.95);
        for y in 0..h {
            for x in 0..w {
                if rng.random::<f64>() < density {
                    labels.set(x, y, if rng.random::<f64>() < 0.8 { ClassId::Grass } else { ClassId::Dirt });
                }
            }
        }
        let cs = rng.random_range(0.1..1.0);
        let segs = segments(&safe_mask(&labels, &classes));
        for seg in &segs {
            let d = distance_transform(seg, w, cs);
            for (k, &i) in seg.cells.iter().enumerate() {
                let expected = cells_to_meters(brute_squared(&seg.cells, w, h, i), cs);
                assert_eq!(d[k], expected, "cell {i} of a {w}x{h} mask");
            }
        }
    }
}

#[test]
fn components_are_maximal_and_eight_connected() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let (w, h) = (rng.random_range(1..20), rng.random_range(1..20));
        let mask: Vec<bool> = (0..w * h).map(|_| rng.random::<f64>() < 0.45).collect();
        let comps = connected_components(w, h, &mask);
        let mut label = vec![usize::MAX; w * h];
        for (k, c) in comps.iter().enumerate() {
            for &i in c {
                assert!(mask[i]);
                assert_eq!(label[i], usize::MAX, "cell in two components");
                label[i] = k;
            }
        }
        for i in 0..w * h {
            assert_eq!(mask[i], label[i] != usize::MAX);
            if !mask[i] {
                continue;
            }
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx >= 0 && ny >= 0 && nx < w as i64 && ny < h as i64 {
                        let j = (ny * w as i64 + nx) as usize;
                        if mask[j] {
                            assert_eq!(label[i], label[j]);
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn selected_spots_are_safe_and_no_spot_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let classes = ClassSet::with_safe(&[ClassId::Grass]).unwrap();
    let config = SpotConfig::default();
    let (mut spots, mut none) = (0, 0);
    for _ in 0..1000 {
        let (w, h) = (rng.random_range(16..=40), rng.random_range(16..=40));
        let cs = [0.25, 0.5, 0.75][rng.random_range(0..3)];
        let labels = random_labels(&mut rng, w, h);
        let map = map_for(&labels, cs);
        let segs = segments(&safe_mask(&labels, &classes));
        let field = DistanceField::build(&segs, w, h, cs);
        let brute_any = (0..w * h).any(|i| {
            classes.is_safe(labels.labels[i]) && !brute_unsafe_within(&labels, &classes, i, config.r_safe, cs)
        });
        match select_spot(&field, &segs, &map, &config, &classes, 0) {
            SpotSelection::Spot { spot, candidates } => {
                spots += 1;
                assert!(brute_any);
                let (x, y) = map.cell_at_world(&spot.position).unwrap();
                let i = y * w + x;
                assert!(!brute_unsafe_within(&labels, &classes, i, config.r_safe, cs));
                assert!(spot.clearance >= config.r_safe);
                // the spot is the deepest cell, ties to the lowest index
                let deepest = field.distance.iter().cloned().fold(0.0, f64::max);
                assert_eq!(spot.clearance, deepest);
                let first = field.distance.iter().position(|&d| d == deepest).unwrap();
                assert_eq!(i, first);
                assert!(candidates.iter().all(|c| c.clearance >= config.r_safe));
            }
            SpotSelection::NoSpot => {
                none += 1;
                assert!(!brute_any);
            }
        }
    }
    assert!(spots > 100 && none > 100, "unbalanced sample: {spots} spots, {none} empty");
}

#[test]
fn selection_prefers_higher_ranked_class() {
    let classes = ClassSet::with_safe(&[ClassId::Dirt, ClassId::Grass]).unwrap();
    let mut labels = LabelGrid::filled(60, 20, ClassId::Road);
    // large grass block, smaller dirt block
    for y in 1..19 {
        for x in 1..30 {
            labels.set(x, y, ClassId::Grass);
        }
        for x in 40..55 {
            labels.set(x, y, ClassId::Dirt);
        }
    }
    let map = map_for(&labels, 1.0);
    let segs = segments(&safe_mask(&labels, &classes));
    let field = DistanceField::build(&segs, 60, 20, 1.0);
    let sel = select_spot(&field, &segs, &map, &SpotConfig::default(), &classes, 0);
    assert_eq!(sel.spot().unwrap().class, ClassId::Dirt);
}

#[test]
fn validation_reasons() {
    let classes = ClassSet::with_safe(&[ClassId::Grass]).unwrap();
    let filter = FilterConfig::default();
    let config = SpotConfig::default();
    let mut labels = LabelGrid::filled(64, 64, ClassId::Grass);
    let mut map = map_for(&labels, 0.25);
    let spot = LandingSpot {
        position: map.cell_center_world(32, 32),
        clearance: 5.0,
        class: ClassId::Grass,
        created_tick: 0,
        valid: true,
    };
    assert_eq!(validate_spot(&map, &labels, &spot, &config, &filter, &classes), SpotValidity::Valid);

    // unsafe cell at 2.75 m: inside the radius
    labels.set(32 + 11, 32, ClassId::Road);
    assert_eq!(
        validate_spot(&map, &labels, &spot, &config, &filter, &classes),
        SpotValidity::Invalid(InvalidReason::UnsafeTerrain)
    );
    // at exactly 3 m: outside the strict radius
    labels.set(32 + 11, 32, ClassId::Grass);
    labels.set(32 + 12, 32, ClassId::Road);
    assert_eq!(validate_spot(&map, &labels, &spot, &config, &filter, &classes), SpotValidity::Valid);

    map.cell_mut(30, 31)[ClassId::PERSON_INDEX] = 0.5;
    labels.set(32 + 11, 32, ClassId::Road);
    assert_eq!(
        validate_spot(&map, &labels, &spot, &config, &filter, &classes),
        SpotValidity::Invalid(InvalidReason::PersonPresent)
    );

    let edge = LandingSpot {
        position: map.cell_center_world(2, 32),
        ..spot
    };
    assert_eq!(
        validate_spot(&map, &labels, &edge, &config, &filter, &classes),
        SpotValidity::Invalid(InvalidReason::OutOfExtent)
    );
    let outside = LandingSpot {
        position: GroundPoint::new(100.0, 0.0),
        ..spot
    };
    assert_eq!(
        validate_spot(&map, &labels, &outside, &config, &filter, &classes),
        SpotValidity::Invalid(InvalidReason::OutOfExtent)
    );
}

#[test]
fn person_evidence_counts_one_cell_diagonal_beyond_the_radius() {
    let classes = ClassSet::with_safe(&[ClassId::Grass]).unwrap();
    let filter = FilterConfig::default();
    let config = SpotConfig::default();
    let labels = LabelGrid::filled(64, 64, ClassId::Grass);
    let spot = |map: &SemanticGroundMap, x: usize| LandingSpot {
        position: map.cell_center_world(x, 32),
        clearance: 5.0,
        class: ClassId::Grass,
        created_tick: 0,
        valid: true,
    };
    assert!((person_radius(3.0, 0.25) - (3.0 + 0.25 * 2f64.sqrt())).abs() < 1e-12);

    // 3.25 m is outside r_safe but within the person search radius
    let mut map = map_for(&labels, 0.25);
    map.cell_mut(32 + 13, 32)[ClassId::PERSON_INDEX] = 0.5;
    assert_eq!(
        validate_spot(&map, &labels, &spot(&map, 32), &config, &filter, &classes),
        SpotValidity::Invalid(InvalidReason::PersonPresent)
    );
    let mut map = map_for(&labels, 0.25);
    map.cell_mut(32 + 14, 32)[ClassId::PERSON_INDEX] = 0.5;
    assert_eq!(validate_spot(&map, &labels, &spot(&map, 32), &config, &filter, &classes), SpotValidity::Valid);

    // the margin may leave the map without making the spot out of extent
    let map = map_for(&labels, 0.25);
    assert_eq!(validate_spot(&map, &labels, &spot(&map, 12), &config, &filter, &classes), SpotValidity::Valid);
}

fn spot_at(x: f64, y: f64, clearance: f64, tick: u64) -> LandingSpot {
    LandingSpot {
        position: GroundPoint::new(x, y),
        clearance,
        class: ClassId::Grass,
        created_tick: tick,
        valid: true,
    }
}

#[test]
fn history_alternative_skips_excluded_and_invalid() {
    let classes = ClassSet::with_safe(&[ClassId::Grass]).unwrap();
    let mut history = SpotHistory::new(&SpotConfig::default());
    assert!(history.best_alternative(None, &classes, |_| true).is_none());
    history.push(spot_at(0.0, 0.0, 9.0, 0));
    history.push(spot_at(20.0, 0.0, 5.0, 1));
    history.push(spot_at(40.0, 0.0, 7.0, 2));
    let exclude = spot_at(1.0, 0.0, 9.0, 3);
    let best = history.best_alternative(Some(&exclude), &classes, |_| true).unwrap();
    assert_eq!(best.position.x, 40.0);
    let best = history
        .best_alternative(Some(&exclude), &classes, |s| s.position.x < 30.0)
        .unwrap();
    assert_eq!(best.position.x, 20.0);
    assert!(history.iter().any(|s| !s.valid));
}

proptest! {
    #[test]
    fn history_never_exceeds_capacity(xs in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 0..60),
                                      cap in 1usize..20) {
        let mut history = SpotHistory::new(&SpotConfig { history_capacity: cap, ..SpotConfig::default() });
        for (k, (x, y)) in xs.iter().enumerate() {
            history.push(spot_at(*x, *y, 4.0, k as u64));
            prop_assert!(history.len() <= cap);
        }
        let stored: Vec<_> = history.iter().collect();
        for (a, s) in stored.iter().enumerate() {
            for t in &stored[a + 1..] {
                prop_assert!(s.position.distance(&t.position) >= 3.0);
            }
        }
    }

    #[test]
    fn field_distances_are_positive_on_members(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let classes = ClassSet::with_safe(&[ClassId::Grass]).unwrap();
        let labels = random_labels(&mut rng, 24, 24);
        let segs = segments(&safe_mask(&labels, &classes));
        let field = DistanceField::build(&segs, 24, 24, 0.5);
        for i in 0..24 * 24 {
            let member = field.segment[i].is_some();
            prop_assert_eq!(member, labels.labels[i] == ClassId::Grass);
            prop_assert_eq!(field.distance[i] > 0.0, member);
        }
    }
}
