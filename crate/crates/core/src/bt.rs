//! Landing behavior tree, realized as a tick-synchronous state machine.
//!
//! Three sequences drive the vehicle:
//!
//! * **spot available**: at or above the search altitude, take the selected
//!   spot or keep flying along the current heading;
//! * **toward spot**: fly level above the spot, then descend while
//!   re-validating it; above the minimum-radius altitude an invalid spot
//!   sends the vehicle back up to the search altitude (toward a stored
//!   alternative if there is one); below it only dynamic objects are checked,
//!   with a timed pause before giving up;
//! * **landing**: below the landing altitude the vehicle commits and no
//!   further decisions are made.
//!
//! The controller only emits intents; rates and speeds are up to the vehicle.

use crate::geometry::GroundPoint;
use crate::spot::{LandingSpot, SpotValidity};
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AltitudeConfig {
    pub search_altitude: f64,
    pub min_radius_altitude: f64,
    pub landing_altitude: f64,
    pub pause_duration: f64,
}

impl Default for AltitudeConfig {
    fn default() -> Self {
        Self {
            search_altitude: 15.0,
            min_radius_altitude: 5.0,
            landing_altitude: 2.0,
            pause_duration: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BtConfigError {
    #[error("altitudes must satisfy 0 < landing < min-radius < search")]
    AltitudeOrder,
    #[error("pause duration must be positive")]
    Pause,
    #[error("descent rate and tolerances must be positive")]
    Rates,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BtConfig {
    pub altitudes: AltitudeConfig,
    /// Commanded descent rate, m/s.
    pub descent_rate: f64,
    /// Horizontal distance at which the waypoint above the spot is reached, m.
    pub waypoint_tolerance: f64,
    /// Slack when comparing against the search altitude, m.
    pub altitude_tolerance: f64,
    /// AGL at which the vehicle is considered on the ground, m.
    pub touchdown_agl: f64,
}

impl Default for BtConfig {
    fn default() -> Self {
        Self {
            altitudes: AltitudeConfig::default(),
            descent_rate: 2.0,
            waypoint_tolerance: 0.25,
            altitude_tolerance: 0.05,
            touchdown_agl: 0.05,
        }
    }
}

impl BtConfig {
    pub fn validate(&self) -> Result<(), BtConfigError> {
        let a = &self.altitudes;
        if !(a.landing_altitude > 0.0
            && a.landing_altitude < a.min_radius_altitude
            && a.min_radius_altitude < a.search_altitude)
        {
            return Err(BtConfigError::AltitudeOrder);
        }
        if !(a.pause_duration > 0.0) {
            return Err(BtConfigError::Pause);
        }
        if !(self.descent_rate > 0.0 && self.waypoint_tolerance > 0.0 && self.altitude_tolerance > 0.0)
        {
            return Err(BtConfigError::Rates);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sequence {
    SpotAvailable,
    TowardSpot,
    Landing,
    Landed,
    Aborted,
}

impl fmt::Display for Sequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sequence::SpotAvailable => "spot-available",
            Sequence::TowardSpot => "toward-spot",
            Sequence::Landing => "landing",
            Sequence::Landed => "landed",
            Sequence::Aborted => "aborted",
        })
    }
}

/// Progress within the toward-spot sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Approach {
    /// Climbing back to the search altitude before heading to the target.
    ClimbBack,
    /// Flying level to the waypoint above the target.
    Level,
    Descending,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BehaviorState {
    pub sequence: Sequence,
    pub target: Option<LandingSpot>,
    pub approach: Approach,
    /// Seconds left in the current dynamic-object pause, if paused.
    pub pause_remaining: Option<f64>,
    /// Climbing back to the search altitude inside spot-available.
    pub climbing_back: bool,
}

impl Default for BehaviorState {
    fn default() -> Self {
        Self {
            sequence: Sequence::SpotAvailable,
            target: None,
            approach: Approach::Level,
            pause_remaining: None,
            climbing_back: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FlightCommand {
    HoldPosition,
    /// Keep flying along `heading` (radians).
    ForwardSearch { heading: f64 },
    GotoWaypoint { target: GroundPoint, altitude: f64 },
    Descend { rate: f64 },
    Climb { altitude: f64 },
    CommitLand,
    Pause,
}

impl FlightCommand {
    pub fn name(&self) -> &'static str {
        match self {
            FlightCommand::HoldPosition => "hold",
            FlightCommand::ForwardSearch { .. } => "forward-search",
            FlightCommand::GotoWaypoint { .. } => "goto",
            FlightCommand::Descend { .. } => "descend",
            FlightCommand::Climb { .. } => "climb",
            FlightCommand::CommitLand => "commit-land",
            FlightCommand::Pause => "pause",
        }
    }
}

/// Everything the controller sees on one tick. All fields come from the same
/// perception tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BtInputs {
    pub agl: f64,
    pub position: GroundPoint,
    pub heading: f64,
    /// Seconds since the previous tick.
    pub dt: f64,
    /// Spot selected from this tick's map, if any.
    pub selected: Option<LandingSpot>,
    /// Validation of the current target, when it was evaluated.
    pub validity: Option<SpotValidity>,
    /// A person-latched cell is inside the current camera footprint.
    pub dynamic_object: bool,
    /// Best valid stored spot other than the current target.
    pub alternative: Option<LandingSpot>,
}

/// Side effects of a tick that matter to the caller.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TickEvents {
    /// The selected spot should be stored in the history.
    pub store_selected: bool,
    /// The target switched to a different spot.
    pub rerouted: bool,
    /// A new dynamic-object pause started.
    pub pause_started: bool,
    pub illegal_input: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickOutput {
    pub state: BehaviorState,
    pub command: FlightCommand,
    pub events: TickEvents,
}

fn climb(config: &BtConfig) -> FlightCommand {
    FlightCommand::Climb {
        altitude: config.altitudes.search_altitude,
    }
}

/// Advances the behavior tree by one tick.
pub fn tick(state: &BehaviorState, inputs: &BtInputs, config: &BtConfig) -> TickOutput {
    let alt = &config.altitudes;
    let mut next = *state;
    let mut events = TickEvents::default();

    // committed: no further decisions
    if matches!(state.sequence, Sequence::Landing | Sequence::Landed) {
        if state.sequence == Sequence::Landing
            && inputs.agl.is_finite()
            && inputs.agl <= config.touchdown_agl
        {
            next.sequence = Sequence::Landed;
        }
        return TickOutput {
            state: next,
            command: FlightCommand::CommitLand,
            events,
        };
    }
    if state.sequence == Sequence::Aborted {
        return TickOutput {
            state: next,
            command: FlightCommand::HoldPosition,
            events,
        };
    }
    if !inputs.agl.is_finite() || inputs.agl < 0.0 {
        next = BehaviorState {
            sequence: Sequence::Aborted,
            ..BehaviorState::default()
        };
        events.illegal_input = true;
        return TickOutput {
            state: next,
            command: FlightCommand::HoldPosition,
            events,
        };
    }

    let command = match state.sequence {
        Sequence::SpotAvailable => spot_available(&mut next, inputs, config, &mut events),
        Sequence::TowardSpot => toward_spot(&mut next, inputs, config, &mut events),
        _ => unreachable!("terminal sequences handled above"),
    };
    debug_assert!(next.pause_remaining.is_none_or(|p| p >= 0.0 && p <= alt.pause_duration));
    TickOutput {
        state: next,
        command,
        events,
    }
}

fn spot_available(
    next: &mut BehaviorState,
    inputs: &BtInputs,
    config: &BtConfig,
    events: &mut TickEvents,
) -> FlightCommand {
    let search = config.altitudes.search_altitude;
    next.target = None;
    next.pause_remaining = None;
    if inputs.agl < search - config.altitude_tolerance {
        next.climbing_back = true;
        return climb(config);
    }
    next.climbing_back = false;
    match inputs.selected {
        Some(spot) => {
            events.store_selected = true;
            next.sequence = Sequence::TowardSpot;
            next.target = Some(spot);
            next.approach = Approach::Level;
            FlightCommand::GotoWaypoint {
                target: spot.position,
                altitude: inputs.agl,
            }
        }
        None => FlightCommand::ForwardSearch {
            heading: inputs.heading,
        },
    }
}

fn toward_spot(
    next: &mut BehaviorState,
    inputs: &BtInputs,
    config: &BtConfig,
    events: &mut TickEvents,
) -> FlightCommand {
    let alt = &config.altitudes;
    let target = next.target.expect("toward-spot always has a target");

    if next.approach == Approach::Descending && inputs.agl <= alt.landing_altitude {
        next.sequence = Sequence::Landing;
        next.pause_remaining = None;
        return FlightCommand::CommitLand;
    }

    if inputs.agl > alt.min_radius_altitude || next.approach != Approach::Descending {
        next.pause_remaining = None;
        if next.approach == Approach::ClimbBack {
            if inputs.agl < alt.search_altitude - config.altitude_tolerance {
                return climb(config);
            }
            next.approach = Approach::Level;
        }
        if matches!(inputs.validity, Some(SpotValidity::Invalid(_))) {
            return abandon_target(next, inputs, config, events);
        }
        return level_or_descend(next, &target, inputs, config);
    }

    // below the minimum-radius altitude only dynamic objects matter
    match (inputs.dynamic_object, next.pause_remaining) {
        (false, _) => {
            next.pause_remaining = None;
            FlightCommand::Descend {
                rate: config.descent_rate,
            }
        }
        (true, None) => {
            next.pause_remaining = Some(alt.pause_duration);
            events.pause_started = true;
            FlightCommand::Pause
        }
        (true, Some(remaining)) => {
            let left = (remaining - inputs.dt).max(0.0);
            if left <= 1e-9 {
                next.sequence = Sequence::SpotAvailable;
                next.target = None;
                next.pause_remaining = None;
                next.climbing_back = true;
                climb(config)
            } else {
                next.pause_remaining = Some(left);
                FlightCommand::Pause
            }
        }
    }
}

fn level_or_descend(
    next: &mut BehaviorState,
    target: &LandingSpot,
    inputs: &BtInputs,
    config: &BtConfig,
) -> FlightCommand {
    if next.approach == Approach::Level
        && inputs.position.distance(&target.position) > config.waypoint_tolerance
    {
        return FlightCommand::GotoWaypoint {
            target: target.position,
            altitude: inputs.agl,
        };
    }
    next.approach = Approach::Descending;
    FlightCommand::Descend {
        rate: config.descent_rate,
    }
}

/// The current target failed validation above the minimum-radius altitude.
fn abandon_target(
    next: &mut BehaviorState,
    inputs: &BtInputs,
    config: &BtConfig,
    events: &mut TickEvents,
) -> FlightCommand {
    let search = config.altitudes.search_altitude;
    let below_search = inputs.agl < search - config.altitude_tolerance;
    match inputs.alternative {
        Some(alt_spot) => {
            events.rerouted = true;
            next.target = Some(alt_spot);
            if below_search {
                next.approach = Approach::ClimbBack;
                climb(config)
            } else {
                next.approach = Approach::Level;
                FlightCommand::GotoWaypoint {
                    target: alt_spot.position,
                    altitude: inputs.agl,
                }
            }
        }
        None => {
            next.sequence = Sequence::SpotAvailable;
            next.target = None;
            if below_search {
                next.climbing_back = true;
                climb(config)
            } else {
                FlightCommand::HoldPosition
            }
        }
    }
}
