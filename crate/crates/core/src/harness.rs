//! Closed-loop trial runner and metrics.
//!
//! Each tick renders the ground-truth view, corrupts it with the noise model,
//! runs the perception pipeline and the behavior tree, and only then consults
//! ground truth to score the tick. Pipeline inputs never come from [`World`]
//! except through [`render_view`] and the vehicle pose.

use crate::bt::{self, BehaviorState, BtInputs, FlightCommand, Sequence, TickEvents};
use crate::classes::{ClassId, ClassSet};
use crate::geometry::{project_ground_to_pixel, CameraModel, Projection, GeometryError, GroundPoint, MapFrame};
use crate::scenario::{Scenario, ScenarioError, Trial};
use crate::segmentation::{SegmentationError, SegmentationProvider, SyntheticSegmenter};
use crate::semantic_map::{filtered_argmax, integrate_observation, FilterError, SemanticGroundMap};
use crate::sim::{self, obstacle_in_radius, person_in_radius, render_view, AgentKind, SimError, Terrain, UavState, World};
use crate::spot::{
    person_radius, safe_mask, segments, select_spot, validate_spot, DistanceField, InvalidReason, LandingSpot, SpotHistory,
    SpotSelection, SpotValidity,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

/// Below this height the camera sees too little to be worth processing, m.
pub const PIPELINE_MIN_AGL: f64 = 0.2;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("no latency samples")]
    EmptyInput,
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("thread pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    LandedSafe,
    LandedUnsafe,
    TimedOut,
    Aborted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencySample {
    /// First tick at which ground truth showed a person in the active zone and inside the image, s.
    pub incursion_time: f64,
    /// First tick that emitted an intervention afterwards, s.
    pub intervention_time: f64,
    pub latency: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub outcome: Outcome,
    pub abort_reason: Option<String>,
    pub touchdown: Option<GroundPoint>,
    pub touchdown_class: Option<ClassId>,
    /// Ground-truth distance from the touchdown point to the nearest unsafe
    /// terrain cell center, capped at the search window.
    pub touchdown_clearance: Option<f64>,
    pub ticks: u64,
    pub latencies: Vec<LatencySample>,
    /// Incursions still unanswered when the trial ended.
    pub unanswered_incursions: u32,
    pub reroutes: u32,
    pub pauses: u32,
    /// Ticks that kept descending while a person had been in the zone for at
    /// least one full tick, plus one if a person is in the zone at touchdown.
    pub human_in_zone_undetected: u32,
    pub person_at_touchdown: bool,
    pub obstacles: usize,
}

/// One row of the optional per-tick trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub tick: u64,
    pub time_s: f64,
    pub x: f64,
    pub y: f64,
    pub agl: f64,
    pub sequence: String,
    pub command: String,
    pub validation: String,
    pub target_x: Option<f64>,
    pub target_y: Option<f64>,
    pub dynamic_object: bool,
    pub obstacle_in_zone: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct TrialRow {
    trial: usize,
    seed: u64,
    outcome: Outcome,
    touchdown_x: Option<f64>,
    touchdown_y: Option<f64>,
    touchdown_class: Option<&'static str>,
    touchdown_clearance_m: Option<f64>,
    ticks: u64,
    obstacles: usize,
    latency_samples: usize,
    unanswered_incursions: u32,
    reroutes: u32,
    pauses: u32,
    human_in_zone_undetected: u32,
    person_at_touchdown: bool,
}

/// Column order of `trials.csv`.
pub const TRIALS_COLUMNS: &[&str] = &[
    "trial",
    "seed",
    "outcome",
    "touchdown_x",
    "touchdown_y",
    "touchdown_class",
    "touchdown_clearance_m",
    "ticks",
    "obstacles",
    "latency_samples",
    "unanswered_incursions",
    "reroutes",
    "pauses",
    "human_in_zone_undetected",
    "person_at_touchdown",
];

impl TrialResult {
    fn row(&self) -> TrialRow {
        TrialRow {
            trial: self.trial,
            seed: self.seed,
            outcome: self.outcome,
            touchdown_x: self.touchdown.map(|p| p.x),
            touchdown_y: self.touchdown.map(|p| p.y),
            touchdown_class: self.touchdown_class.map(|c| c.name()),
            touchdown_clearance_m: self.touchdown_clearance,
            ticks: self.ticks,
            obstacles: self.obstacles,
            latency_samples: self.latencies.len(),
            unanswered_incursions: self.unanswered_incursions,
            reroutes: self.reroutes,
            pauses: self.pauses,
            human_in_zone_undetected: self.human_in_zone_undetected,
            person_at_touchdown: self.person_at_touchdown,
        }
    }
}

/// Distance from `p` to the nearest cell center whose class is unsafe, looking
/// no further than `window` meters. Points beyond the terrain count as
/// Background.
pub fn terrain_clearance(terrain: &Terrain, classes: &ClassSet, p: &GroundPoint, window: f64) -> f64 {
    let res = terrain.resolution;
    let reach = (window / res).ceil() as i64 + 1;
    let cx = ((p.x - terrain.origin.x) / res).floor() as i64;
    let cy = ((p.y - terrain.origin.y) / res).floor() as i64;
    let mut best = window;
    for iy in cy - reach..=cy + reach {
        for ix in cx - reach..=cx + reach {
            let center = GroundPoint::new(
                terrain.origin.x + (ix as f64 + 0.5) * res,
                terrain.origin.y + (iy as f64 + 0.5) * res,
            );
            let inside = ix >= 0 && iy >= 0 && (ix as usize) < terrain.width && (iy as usize) < terrain.height;
            let class = if inside {
                terrain.classes[iy as usize * terrain.width + ix as usize]
            } else {
                ClassId::Background
            };
            if !classes.is_safe(class) {
                best = best.min(center.distance(p));
            }
        }
    }
    best
}

/// A person overlaps the disc and its center is inside the camera image,
/// so a correct pipeline could have seen it.
fn person_in_view_near(world: &World, uav: &UavState, cam: &CameraModel, center: &GroundPoint, radius: f64) -> bool {
    let pose = uav.camera_pose();
    world.agents.iter().any(|a| {
        a.active
            && a.kind == AgentKind::Person
            && a.position.distance(center) < radius + a.radius
            && matches!(project_ground_to_pixel(&a.position, cam, &pose), Ok(Projection::InView(_)))
    })
}

/// Does any cell within `radius` of `center` carry latched person evidence?
fn person_evidence_near(map: &SemanticGroundMap, center: &GroundPoint, radius: f64, threshold: f64) -> bool {
    let Some((cx, cy)) = map.cell_at_world(center) else {
        return false;
    };
    let cs = map.cell_size();
    let reach = (radius / cs).ceil() as isize;
    for dy in -reach..=reach {
        for dx in -reach..=reach {
            let (x, y) = (cx as isize + dx, cy as isize + dy);
            if x < 0 || y < 0 || x >= map.width() as isize || y >= map.height() as isize {
                continue;
            }
            let (x, y) = (x as usize, y as usize);
            if map.cell_center_world(x, y).distance(center) < radius
                && map.cell(x, y)[ClassId::PERSON_INDEX] > threshold
            {
                return true;
            }
        }
    }
    false
}

/// A command that departs from continuing toward `previous_target`.
fn is_intervention(command: &FlightCommand, events: &TickEvents, previous_target: &LandingSpot) -> bool {
    match command {
        FlightCommand::Pause | FlightCommand::Climb { .. } | FlightCommand::HoldPosition => true,
        FlightCommand::GotoWaypoint { target, .. } => events.rerouted || *target != previous_target.position,
        FlightCommand::ForwardSearch { .. } => true,
        FlightCommand::Descend { .. } | FlightCommand::CommitLand => false,
    }
}

fn validation_label(v: Option<SpotValidity>) -> &'static str {
    match v {
        None => "",
        Some(SpotValidity::Valid) => "valid",
        Some(SpotValidity::Invalid(InvalidReason::UnsafeTerrain)) => "unsafe-terrain",
        Some(SpotValidity::Invalid(InvalidReason::PersonPresent)) => "person-present",
        Some(SpotValidity::Invalid(InvalidReason::OutOfExtent)) => "out-of-extent",
    }
}

#[derive(Debug, thiserror::Error)]
enum StepError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Segmentation(#[from] SegmentationError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("behavior tree rejected its inputs")]
    IllegalInput,
}

/// Builds the trial's world from its terrain parameters and obstacle list.
pub fn build_world(trial: &Trial) -> Result<World, SimError> {
    let mut world = sim::generate_world(trial.world_seed, &trial.terrain, trial.tick_rate_hz)?;
    world.agents = trial.obstacles.iter().map(|o| o.agent()).collect();
    Ok(world)
}

/// Runs one trial of a scenario.
pub fn run_trial(scenario: &Scenario, trial_index: usize, seed: u64) -> TrialResult {
    run_trial_traced(scenario, trial_index, seed, None)
}

pub fn run_trial_traced(
    scenario: &Scenario,
    trial_index: usize,
    seed: u64,
    trace: Option<&mut Vec<TraceRow>>,
) -> TrialResult {
    let aborted = |reason: String| TrialResult {
        trial: trial_index,
        seed,
        outcome: Outcome::Aborted,
        abort_reason: Some(reason),
        touchdown: None,
        touchdown_class: None,
        touchdown_clearance: None,
        ticks: 0,
        latencies: Vec::new(),
        unanswered_incursions: 0,
        reroutes: 0,
        pauses: 0,
        human_in_zone_undetected: 0,
        person_at_touchdown: false,
        obstacles: 0,
    };
    let trial = match scenario.trial(seed) {
        Ok(t) => t,
        Err(e) => return aborted(e.to_string()),
    };
    let world = match build_world(&trial) {
        Ok(w) => w,
        Err(e) => return aborted(e.to_string()),
    };
    let mut result = run_trial_in_world(&trial, world, trace);
    result.trial = trial_index;
    result
}

/// Runs a resolved trial in a caller-supplied world.
pub fn run_trial_in_world(trial: &Trial, mut world: World, mut trace: Option<&mut Vec<TraceRow>>) -> TrialResult {
    let dt = 1.0 / trial.tick_rate_hz;
    let max_ticks = (trial.duration_cap_s * trial.tick_rate_hz).ceil() as u64;
    let alt = trial.behavior.altitudes;
    let r_safe = trial.spot.r_safe;
    let classes = &trial.classes;

    let mut result = TrialResult {
        trial: 0,
        seed: trial.seed,
        outcome: Outcome::TimedOut,
        abort_reason: None,
        touchdown: None,
        touchdown_class: None,
        touchdown_clearance: None,
        ticks: 0,
        latencies: Vec::new(),
        unanswered_incursions: 0,
        reroutes: 0,
        pauses: 0,
        human_in_zone_undetected: 0,
        person_at_touchdown: false,
        obstacles: world.agents.len(),
    };

    let mut uav = trial.uav;
    let mut map = match SemanticGroundMap::new(&trial.map, MapFrame::of_pose(&uav.camera_pose())) {
        Ok(m) => m,
        Err(e) => {
            result.outcome = Outcome::Aborted;
            result.abort_reason = Some(e.to_string());
            return result;
        }
    };
    let mut segmenter = SyntheticSegmenter::new(trial.noise.clone(), trial.noise.seed);
    let mut history = SpotHistory::new(&trial.spot);
    let mut state = BehaviorState::default();

    // latency bookkeeping, per active target
    let mut zone_target: Option<GroundPoint> = None;
    let mut zone_occupied = false;
    let mut pending_incursion: Option<f64> = None;
    let mut person_ticks_in_zone = 0u32;

    for tick in 0..max_ticks {
        let time = tick as f64 * dt;
        result.ticks = tick + 1;
        let agl = uav.z;

        let mut perceive = || -> Result<(Option<LandingSpot>, Option<SpotValidity>, bool, Option<LandingSpot>), StepError> {
            if agl < PIPELINE_MIN_AGL {
                return Ok((None, None, false, None));
            }
            let view = render_view(&world, &uav, &trial.camera)?;
            let frame = segmenter.segment(&view, tick)?;
            let report = integrate_observation(&mut map, &frame, &trial.camera, &uav.camera_pose(), &trial.filter, tick)?;
            let labels = filtered_argmax(&map);

            let mut selected = None;
            if state.sequence == Sequence::SpotAvailable || agl > alt.min_radius_altitude {
                let mask = safe_mask(&labels, classes);
                let segs = segments(&mask);
                let field = DistanceField::build(&segs, map.width(), map.height(), map.cell_size());
                if let SpotSelection::Spot { spot, candidates } =
                    select_spot(&field, &segs, &map, &trial.spot, classes, tick)
                {
                    for c in candidates.iter().rev() {
                        history.push(*c);
                    }
                    selected = Some(spot);
                }
            }

            let target = state.target.filter(|_| state.sequence == Sequence::TowardSpot);
            let mut validity = None;
            let mut alternative = None;
            if let Some(t) = target {
                if agl > alt.min_radius_altitude {
                    let v = validate_spot(&map, &labels, &t, &trial.spot, &trial.filter, classes);
                    if !v.is_valid() {
                        alternative = history.best_alternative(Some(&t), classes, |s| {
                            validate_spot(&map, &labels, s, &trial.spot, &trial.filter, classes).is_valid()
                        });
                    }
                    validity = Some(v);
                }
            }
            let threshold = trial.filter.person_latch_threshold;
            let dynamic = report.person_cells > 0
                || target.is_some_and(|t| person_evidence_near(&map, &t.position, person_radius(r_safe, map.cell_size()), threshold));
            Ok((selected, validity, dynamic, alternative))
        };

        let (selected, validity, dynamic_object, alternative) = match perceive() {
            Ok(p) => p,
            Err(e) => {
                result.outcome = Outcome::Aborted;
                result.abort_reason = Some(e.to_string());
                return result;
            }
        };

        let out = bt::tick(
            &state,
            &BtInputs {
                agl,
                position: uav.ground_position(),
                heading: uav.heading,
                dt,
                selected,
                validity,
                dynamic_object,
                alternative,
            },
            &trial.behavior,
        );
        if out.events.illegal_input || out.state.sequence == Sequence::Aborted {
            result.outcome = Outcome::Aborted;
            result.abort_reason = Some(StepError::IllegalInput.to_string());
            return result;
        }
        if out.events.store_selected {
            if let Some(s) = selected {
                history.push(s);
            }
        }
        result.reroutes += out.events.rerouted as u32;
        result.pauses += out.events.pause_started as u32;

        // scoring against ground truth, after the command is fixed
        let previous_target = state.target.filter(|_| state.sequence != Sequence::SpotAvailable);
        let mut in_zone = false;
        if let Some(t) = previous_target {
            if zone_target != Some(t.position) {
                zone_target = Some(t.position);
                zone_occupied = false;
                person_ticks_in_zone = 0;
            }
            in_zone = obstacle_in_radius(&world, &t.position, r_safe);
            // an incursion starts once a person in the zone is inside the image
            let visible = person_in_view_near(&world, &uav, &trial.camera, &t.position, r_safe);
            if visible && !zone_occupied && pending_incursion.is_none() {
                pending_incursion = Some(time);
            }
            zone_occupied = visible;
            if let Some(t0) = pending_incursion {
                if is_intervention(&out.command, &out.events, &t) {
                    result.latencies.push(LatencySample {
                        incursion_time: t0,
                        intervention_time: time,
                        latency: time - t0,
                    });
                    pending_incursion = None;
                }
            }
            if visible {
                person_ticks_in_zone += 1;
            } else {
                person_ticks_in_zone = 0;
            }
            let continuing = matches!(out.command, FlightCommand::Descend { .. } | FlightCommand::CommitLand);
            if continuing && person_ticks_in_zone >= 2 {
                result.human_in_zone_undetected += 1;
            }
        } else {
            zone_target = None;
            zone_occupied = false;
            person_ticks_in_zone = 0;
        }

        if let Some(rows) = trace.as_deref_mut() {
            let target = out.state.target;
            rows.push(TraceRow {
                tick,
                time_s: time,
                x: uav.x,
                y: uav.y,
                agl,
                sequence: out.state.sequence.to_string(),
                command: out.command.name().to_owned(),
                validation: validation_label(validity).to_owned(),
                target_x: target.map(|t| t.position.x),
                target_y: target.map(|t| t.position.y),
                dynamic_object,
                obstacle_in_zone: in_zone,
            });
        }

        state = out.state;
        let incursion_target = state.target.map(|t| t.position);
        sim::step(&mut world, &mut uav, &out.command, dt, incursion_target.as_ref());

        if uav.z <= trial.behavior.touchdown_agl {
            let p = uav.ground_position();
            let clearance = terrain_clearance(&world.terrain, classes, &p, r_safe + 1.0);
            let agent_near = obstacle_in_radius(&world, &p, r_safe);
            result.person_at_touchdown = person_in_radius(&world, &p, r_safe);
            if result.person_at_touchdown {
                result.human_in_zone_undetected += 1;
            }
            result.touchdown = Some(p);
            result.touchdown_class = Some(world.terrain.class_at(&p));
            result.touchdown_clearance = Some(clearance);
            result.outcome = if clearance >= r_safe && !agent_near {
                Outcome::LandedSafe
            } else {
                Outcome::LandedUnsafe
            };
            break;
        }
    }
    if pending_incursion.is_some() {
        result.unanswered_incursions += 1;
    }
    result
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub trials: usize,
    pub landed_safe: usize,
    pub landed_unsafe: usize,
    pub timed_out: usize,
    pub aborted: usize,
    pub success_rate: f64,
    pub fn_human: u32,
    pub persons_at_touchdown: usize,
    pub latency_samples: usize,
    pub latency_mean_s: Option<f64>,
    pub latency_median_s: Option<f64>,
    pub latency_p95_s: Option<f64>,
    pub unanswered_incursions: u32,
    pub reroutes: u32,
    pub pauses: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult {
    pub trials: Vec<TrialResult>,
    pub summary: BatchSummary,
}

impl BatchResult {
    /// More than half of the trials aborted.
    pub fn aborted_majority(&self) -> bool {
        self.summary.aborted * 2 > self.summary.trials
    }
}

/// Linear-interpolation percentile of sorted data, `q` in [0, 100].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn sorted_latencies(trials: &[TrialResult]) -> Vec<f64> {
    let mut v: Vec<f64> = trials
        .iter()
        .flat_map(|t| t.latencies.iter().map(|l| l.latency))
        .collect();
    v.sort_by(f64::total_cmp);
    v
}

pub fn summarize(trials: &[TrialResult]) -> BatchSummary {
    let count = |o: Outcome| trials.iter().filter(|t| t.outcome == o).count();
    let lat = sorted_latencies(trials);
    let stat = |f: &dyn Fn(&[f64]) -> f64| (!lat.is_empty()).then(|| f(&lat));
    let landed_safe = count(Outcome::LandedSafe);
    BatchSummary {
        trials: trials.len(),
        landed_safe,
        landed_unsafe: count(Outcome::LandedUnsafe),
        timed_out: count(Outcome::TimedOut),
        aborted: count(Outcome::Aborted),
        success_rate: if trials.is_empty() {
            0.0
        } else {
            landed_safe as f64 / trials.len() as f64
        },
        fn_human: trials.iter().map(|t| t.human_in_zone_undetected).sum(),
        persons_at_touchdown: trials.iter().filter(|t| t.person_at_touchdown).count(),
        latency_samples: lat.len(),
        latency_mean_s: stat(&|v| v.iter().sum::<f64>() / v.len() as f64),
        latency_median_s: stat(&|v| percentile(v, 50.0)),
        latency_p95_s: stat(&|v| percentile(v, 95.0)),
        unanswered_incursions: trials.iter().map(|t| t.unanswered_incursions).sum(),
        reroutes: trials.iter().map(|t| t.reroutes).sum(),
        pauses: trials.iter().map(|t| t.pauses).sum(),
    }
}

/// Runs `count` trials with seeds `seed_base + i` on `jobs` workers
/// (0 picks the available parallelism).
pub fn run_batch(scenario: &Scenario, count: usize, seed_base: u64, jobs: usize) -> Result<BatchResult, HarnessError> {
    scenario.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;
    let mut trials: Vec<TrialResult> = pool.install(|| {
        (0..count)
            .into_par_iter()
            .map(|i| run_trial(scenario, i, seed_base.wrapping_add(i as u64)))
            .collect()
    });
    trials.sort_by_key(|t| t.trial);
    let summary = summarize(&trials);
    Ok(BatchResult { trials, summary })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct LatencyRow {
    trial: usize,
    incursion_time_s: f64,
    intervention_time_s: f64,
    latency_s: f64,
}

/// Writes `trials.csv`, `summary.csv` and `latencies.csv` into `dir`.
pub fn write_batch(dir: &Path, batch: &BatchResult) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("trials.csv"))?;
    for t in &batch.trials {
        w.serialize(t.row())?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    w.serialize(&batch.summary)?;
    w.flush()?;

    // explicit header so that a batch without samples still has one
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(dir.join("latencies.csv"))?;
    w.write_record(["trial", "incursion_time_s", "intervention_time_s", "latency_s"])?;
    for t in &batch.trials {
        for l in &t.latencies {
            w.serialize(LatencyRow {
                trial: t.trial,
                incursion_time_s: l.incursion_time,
                intervention_time_s: l.intervention_time,
                latency_s: l.latency,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace(path: &Path, rows: &[TraceRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the latency column of a `latencies.csv`.
pub fn read_latencies(path: &Path) -> Result<Vec<f64>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize::<LatencyRow>() {
        out.push(row?.latency_s);
    }
    Ok(out)
}

pub const LATENCY_BIN_S: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyReport {
    /// `(bin start s, count)` for consecutive bins from 0 to the largest sample.
    pub histogram: Vec<(f64, usize)>,
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
}

pub fn digitize_latency_report(samples: &[f64]) -> Result<LatencyReport, HarnessError> {
    if samples.is_empty() {
        return Err(HarnessError::EmptyInput);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    // the small offset keeps exact multiples like 0.3 in their own bin
    let bin = |x: f64| ((x / LATENCY_BIN_S) + 1e-9).floor().max(0.0) as usize;
    let bins = bin(*sorted.last().expect("non-empty")) + 1;
    let mut counts = vec![0usize; bins];
    for &s in &sorted {
        counts[bin(s)] += 1;
    }
    Ok(LatencyReport {
        histogram: counts
            .into_iter()
            .enumerate()
            .map(|(i, c)| (i as f64 * LATENCY_BIN_S, c))
            .collect(),
        p50: percentile(&sorted, 50.0),
        p90: percentile(&sorted, 90.0),
        p99: percentile(&sorted, 99.0),
    })
}

impl LatencyReport {
    /// CSV with columns `kind,label,value`: one `bin` row per histogram bin
    /// labeled `start-end`, then `percentile` rows `p50`, `p90`, `p99`.
    pub fn write_csv(&self, path: &Path) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["kind", "label", "value"])?;
        for (start, count) in &self.histogram {
            w.write_record([
                "bin".to_owned(),
                format!("{:.1}-{:.1}", start, start + LATENCY_BIN_S),
                count.to_string(),
            ])?;
        }
        for (label, v) in [("p50", self.p50), ("p90", self.p90), ("p99", self.p99)] {
            w.write_record(["percentile".to_owned(), label.to_owned(), format!("{v:.6}")])?;
        }
        w.flush()?;
        Ok(())
    }
}
