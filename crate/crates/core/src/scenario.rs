//! Scenario files.
//!
//! A scenario is a TOML document describing the world, vehicle, camera,
//! pipeline parameters and obstacles of a trial. Batch runs instantiate it
//! once per trial seed; the `[randomize]` table controls what varies.
//!
//! ```toml
//! schema_version = 1
//! tick_rate_hz = 2.0
//! duration_cap_s = 600.0
//! safe_classes = ["grass"]
//!
//! [world]
//! seed = 1
//! extent_m = [160.0, 160.0]
//! resolution_m = 0.25
//! feature_scale_m = 24.0
//! mixture = [{ class = "grass", fraction = 0.7 }, { class = "road", fraction = 0.3 }]
//!
//! [uav]
//! x = 0.0
//! y = 0.0
//! altitude = 50.0
//! heading_deg = 0.0
//! max_horizontal_speed = 5.0
//! max_vertical_speed = 2.0
//!
//! [camera]          # CameraModel fields
//! [map]             # width, height, cell_size
//! [behavior]        # descent_rate, waypoint_tolerance, ... and [behavior.altitudes]
//! [filter]          # alpha, person_latch_threshold
//! [spot]            # r_safe, history_capacity
//!
//! [noise]
//! preset = "calibrated"        # or "perfect"
//! # file = "noise.toml"        # overrides preset
//! # person_diagonal = 0.7
//! # person_false_positive = 0.0
//! # concentration = 0.9
//!
//! [[obstacles]]
//! kind = "person"
//! position = { x = 5.0, y = 0.0 }
//! script = { type = "waypoints", points = [{ x = 5.0, y = 0.0 }, { x = 15.0, y = 0.0 }], speed = 1.4 }
//!
//! [randomize]
//! world_seed = true
//! incursions = { max_count = 10, trigger_altitude = [8.0, 30.0], dwell_s = [0.0, 10.0] }
//! ```

use crate::bt::BtConfig;
use crate::classes::{ClassId, ClassSet, ClassSetError};
use crate::geometry::{CameraModel, GeometryError, GroundPoint};
use crate::segmentation::{NoiseModel, SegmentationError};
use crate::semantic_map::{FilterConfig, FilterError, MapConfig};
use crate::sim::{AgentKind, AgentScript, ObstacleAgent, TerrainParams, UavState, PERSON_RADIUS, WALKING_SPEED};
use crate::spot::SpotConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("unsupported schema_version {0} (expected {SCHEMA_VERSION})")]
    SchemaVersion(u32),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Noise(#[from] SegmentationError),
    #[error(transparent)]
    Camera(#[from] GeometryError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Classes(#[from] ClassSetError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldSpec {
    pub seed: u64,
    #[serde(flatten)]
    pub terrain: TerrainParams,
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self {
            seed: 1,
            terrain: TerrainParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UavSpec {
    pub x: f64,
    pub y: f64,
    pub altitude: f64,
    pub heading_deg: f64,
    pub max_horizontal_speed: f64,
    pub max_vertical_speed: f64,
}

impl Default for UavSpec {
    fn default() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            altitude: 50.0,
            heading_deg: 0.0,
            max_horizontal_speed: 5.0,
            max_vertical_speed: 2.0,
        }
    }
}

impl UavSpec {
    pub fn state(&self) -> UavState {
        UavState {
            x: self.x,
            y: self.y,
            z: self.altitude,
            heading: self.heading_deg.to_radians(),
            max_horizontal_speed: self.max_horizontal_speed,
            max_vertical_speed: self.max_vertical_speed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoisePreset {
    Calibrated,
    Perfect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    pub preset: NoisePreset,
    pub file: Option<PathBuf>,
    pub person_diagonal: Option<f64>,
    pub person_false_positive: f64,
    pub concentration: Option<f64>,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            preset: NoisePreset::Calibrated,
            file: None,
            person_diagonal: None,
            person_false_positive: 0.0,
            concentration: None,
        }
    }
}

impl NoiseSpec {
    /// Resolves the model; relative files are looked up next to `base`.
    pub fn model(&self, base: Option<&Path>) -> Result<NoiseModel, ScenarioError> {
        let mut model = match &self.file {
            Some(f) => {
                let path = match base {
                    Some(b) if f.is_relative() => b.join(f),
                    _ => f.clone(),
                };
                NoiseModel::load(&path)?
            }
            None => match self.preset {
                NoisePreset::Calibrated => NoiseModel::calibrated(),
                NoisePreset::Perfect => NoiseModel::perfect(),
            },
        };
        if self.person_false_positive > 0.0 {
            model = model.with_person_false_positive(self.person_false_positive);
        }
        if let Some(d) = self.person_diagonal {
            model = model.with_person_diagonal(d);
        }
        if let Some(c) = self.concentration {
            model.concentration = c;
        }
        model.validate()?;
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSpec {
    pub kind: AgentKind,
    #[serde(default = "origin")]
    pub position: GroundPoint,
    #[serde(default)]
    pub radius: Option<f64>,
    pub script: AgentScript,
}

fn origin() -> GroundPoint {
    GroundPoint::new(0.0, 0.0)
}

impl ObstacleSpec {
    pub fn agent(&self) -> ObstacleAgent {
        let radius = self.radius.unwrap_or(match self.kind {
            AgentKind::Person => PERSON_RADIUS,
            AgentKind::Vehicle => 2.0,
        });
        ObstacleAgent::new(self.kind, self.position, radius, self.script.clone())
    }
}

/// Randomly generated person incursions aimed at the active landing spot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IncursionSpec {
    /// Each trial draws a count uniformly from `0..=max_count`.
    pub max_count: usize,
    pub trigger_altitude: [f64; 2],
    pub dwell_s: [f64; 2],
    pub speed: f64,
    /// Start this far outside the safety radius, m.
    pub start_margin: f64,
    /// Stop this far outside the safety radius when leaving, m.
    pub exit_margin: f64,
    /// Largest distance from the spot center the walker aims for, m.
    pub max_offset: f64,
}

impl Default for IncursionSpec {
    fn default() -> Self {
        Self {
            max_count: 0,
            trigger_altitude: [8.0, 30.0],
            dwell_s: [0.0, 10.0],
            speed: WALKING_SPEED,
            start_margin: 1.0,
            exit_margin: 4.0,
            max_offset: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomizeSpec {
    /// Derive the terrain seed from the trial seed.
    pub world_seed: bool,
    pub incursions: IncursionSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub schema_version: u32,
    pub tick_rate_hz: f64,
    pub duration_cap_s: f64,
    pub safe_classes: Vec<ClassId>,
    pub world: WorldSpec,
    pub uav: UavSpec,
    pub camera: CameraModel,
    pub map: MapConfig,
    pub behavior: BtConfig,
    pub filter: FilterConfig,
    pub spot: SpotConfig,
    pub noise: NoiseSpec,
    pub obstacles: Vec<ObstacleSpec>,
    pub randomize: RandomizeSpec,
    /// Directory relative paths resolve against; set by [`Scenario::load`].
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tick_rate_hz: 2.0,
            duration_cap_s: 600.0,
            safe_classes: vec![ClassId::Grass],
            world: WorldSpec::default(),
            uav: UavSpec::default(),
            camera: CameraModel::default(),
            map: MapConfig::default(),
            behavior: BtConfig::default(),
            filter: FilterConfig::default(),
            spot: SpotConfig::default(),
            noise: NoiseSpec::default(),
            obstacles: Vec::new(),
            randomize: RandomizeSpec::default(),
            base_dir: None,
        }
    }
}

/// A fully resolved trial.
#[derive(Debug, Clone)]
pub struct Trial {
    pub seed: u64,
    pub world_seed: u64,
    pub terrain: TerrainParams,
    pub tick_rate_hz: f64,
    pub duration_cap_s: f64,
    pub classes: ClassSet,
    pub uav: UavState,
    pub camera: CameraModel,
    pub map: MapConfig,
    pub behavior: BtConfig,
    pub filter: FilterConfig,
    pub spot: SpotConfig,
    pub noise: NoiseModel,
    pub obstacles: Vec<ObstacleSpec>,
}

/// SplitMix64 finalizer; decorrelates consecutive trial seeds.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario = toml::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_owned(),
            source,
        })?;
        let mut s = Self::from_toml(&text)?;
        s.base_dir = path.parent().map(Path::to_owned);
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ScenarioError::SchemaVersion(self.schema_version));
        }
        let invalid = |m: &str| Err(ScenarioError::Invalid(m.to_owned()));
        if !(1.0..=10.0).contains(&self.tick_rate_hz) {
            return invalid("tick_rate_hz must be within 1-10");
        }
        if !(self.duration_cap_s > 0.0) {
            return invalid("duration_cap_s must be positive");
        }
        self.camera.validate()?;
        self.filter.validate()?;
        self.behavior
            .validate()
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        if self.uav.altitude < self.behavior.altitudes.search_altitude {
            return invalid("start altitude must be at or above the search altitude");
        }
        if !(self.uav.max_horizontal_speed > 0.0 && self.uav.max_vertical_speed > 0.0) {
            return invalid("vehicle speed limits must be positive");
        }
        if !(self.spot.r_safe > 0.0) {
            return invalid("r_safe must be positive");
        }
        let inc = &self.randomize.incursions;
        if inc.trigger_altitude[0] > inc.trigger_altitude[1] || inc.dwell_s[0] > inc.dwell_s[1] {
            return invalid("randomize ranges must be ordered [low, high]");
        }
        ClassSet::with_safe(&self.safe_classes)?;
        Ok(())
    }

    /// Resolves the scenario for one trial seed.
    pub fn trial(&self, seed: u64) -> Result<Trial, ScenarioError> {
        self.validate()?;
        let world_seed = if self.randomize.world_seed {
            mix_seed(seed, 1)
        } else {
            self.world.seed
        };
        let mut noise = self.noise.model(self.base_dir.as_deref())?;
        noise.seed = mix_seed(seed, 2);

        let mut obstacles = self.obstacles.clone();
        let inc = &self.randomize.incursions;
        if inc.max_count > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 3));
            let count = rng.random_range(0..=inc.max_count);
            let uniform = |rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]| {
                if hi > lo {
                    rng.random_range(lo..hi)
                } else {
                    lo
                }
            };
            for _ in 0..count {
                let trigger_altitude = uniform(&mut rng, inc.trigger_altitude);
                let dwell = uniform(&mut rng, inc.dwell_s);
                let bearing = rng.random_range(0.0..std::f64::consts::TAU);
                let offset = uniform(&mut rng, [0.0, inc.max_offset]);
                obstacles.push(ObstacleSpec {
                    kind: AgentKind::Person,
                    position: origin(),
                    radius: None,
                    script: AgentScript::Incursion {
                        trigger_altitude,
                        bearing,
                        start_distance: self.spot.r_safe + PERSON_RADIUS + inc.start_margin,
                        offset,
                        speed: inc.speed,
                        dwell,
                        exit_distance: self.spot.r_safe + PERSON_RADIUS + inc.exit_margin,
                    },
                });
            }
        }

        Ok(Trial {
            seed,
            world_seed,
            terrain: self.world.terrain.clone(),
            tick_rate_hz: self.tick_rate_hz,
            duration_cap_s: self.duration_cap_s,
            classes: ClassSet::with_safe(&self.safe_classes)?,
            uav: self.uav.state(),
            camera: self.camera,
            map: self.map,
            behavior: self.behavior,
            filter: self.filter,
            spot: self.spot,
            noise,
            obstacles,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_scenario_roundtrips_through_toml() {
        let s = Scenario::default();
        let back = Scenario::from_toml(&s.to_toml()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn minimal_file_uses_defaults() {
        let s = Scenario::from_toml("schema_version = 1\n").unwrap();
        assert_eq!(s.uav.altitude, 50.0);
        assert_eq!(s.spot.r_safe, 3.0);
        assert_eq!(s.filter.alpha, 0.1);
    }

    #[test]
    fn wrong_schema_and_low_start_are_rejected() {
        assert!(matches!(
            Scenario::from_toml("schema_version = 2\n"),
            Err(ScenarioError::SchemaVersion(2))
        ));
        assert!(Scenario::from_toml("schema_version = 1\n[uav]\naltitude = 10.0\n").is_err());
    }

    #[test]
    fn obstacle_scripts_parse() {
        let text = r#"
schema_version = 1
[[obstacles]]
kind = "person"
position = { x = 5.0, y = 0.0 }
script = { type = "waypoints", points = [{ x = 5.0, y = 0.0 }, { x = 15.0, y = 0.0 }], speed = 1.4 }
[[obstacles]]
kind = "vehicle"
script = { type = "static" }
"#;
        let s = Scenario::from_toml(text).unwrap();
        assert_eq!(s.obstacles.len(), 2);
        assert_eq!(s.obstacles[1].agent().radius, 2.0);
    }

    #[test]
    fn trials_are_reproducible_and_vary_with_seed() {
        let mut s = Scenario::default();
        s.randomize.world_seed = true;
        s.randomize.incursions.max_count = 10;
        let a = s.trial(7).unwrap();
        let b = s.trial(7).unwrap();
        assert_eq!(a.world_seed, b.world_seed);
        assert_eq!(a.obstacles, b.obstacles);
        assert_ne!(s.trial(8).unwrap().world_seed, a.world_seed);
        assert!(a.obstacles.len() <= 10);
    }
}
