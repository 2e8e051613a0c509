//! Behavior-tree cases shared by the conformance and acceptance tests.

use safeland::bt::*;
use safeland::geometry::GroundPoint;
use safeland::spot::{InvalidReason, LandingSpot, SpotValidity};
use safeland::ClassId;

pub fn spot(x: f64, y: f64) -> LandingSpot {
    LandingSpot {
        position: GroundPoint::new(x, y),
        clearance: 4.0,
        class: ClassId::Grass,
        created_tick: 0,
        valid: true,
    }
}

pub fn at(agl: f64) -> BtInputs {
    BtInputs {
        agl,
        position: GroundPoint::new(10.0, 0.0),
        heading: 0.25,
        dt: 0.5,
        selected: None,
        validity: None,
        dynamic_object: false,
        alternative: None,
    }
}

pub fn toward(approach: Approach) -> BehaviorState {
    BehaviorState {
        sequence: Sequence::TowardSpot,
        target: Some(spot(10.0, 0.0)),
        approach,
        ..BehaviorState::default()
    }
}

pub fn paused(remaining: f64) -> BehaviorState {
    BehaviorState {
        pause_remaining: Some(remaining),
        ..toward(Approach::Descending)
    }
}

pub const INVALID: Option<SpotValidity> = Some(SpotValidity::Invalid(InvalidReason::UnsafeTerrain));
pub const PERSON: Option<SpotValidity> = Some(SpotValidity::Invalid(InvalidReason::PersonPresent));

pub struct Row {
    pub name: &'static str,
    pub state: BehaviorState,
    pub inputs: BtInputs,
    pub sequence: Sequence,
    pub command: FlightCommand,
    pub check: fn(&TickOutput),
}

pub fn nothing(_: &TickOutput) {}

pub fn table() -> Vec<Row> {
    let cfg = BtConfig::default();
    let search = cfg.altitudes.search_altitude;
    let climb = FlightCommand::Climb { altitude: search };
    let descend = FlightCommand::Descend { rate: cfg.descent_rate };
    vec![
        Row {
            name: "no spot at search altitude keeps heading",
            state: BehaviorState::default(),
            inputs: at(50.0),
            sequence: Sequence::SpotAvailable,
            command: FlightCommand::ForwardSearch { heading: 0.25 },
            check: nothing,
        },
        Row {
            name: "spot found is stored and approached level",
            state: BehaviorState::default(),
            inputs: BtInputs {
                selected: Some(spot(30.0, 5.0)),
                ..at(50.0)
            },
            sequence: Sequence::TowardSpot,
            command: FlightCommand::GotoWaypoint {
                target: GroundPoint::new(30.0, 5.0),
                altitude: 50.0,
            },
            check: |o| {
                assert!(o.events.store_selected);
                assert_eq!(o.state.approach, Approach::Level);
            },
        },
        Row {
            name: "below search altitude without target climbs first",
            state: BehaviorState::default(),
            inputs: BtInputs {
                selected: Some(spot(30.0, 5.0)),
                ..at(10.0)
            },
            sequence: Sequence::SpotAvailable,
            command: climb,
            check: |o| assert!(o.state.climbing_back && !o.events.store_selected),
        },
        Row {
            name: "level flight continues until over the spot",
            state: toward(Approach::Level),
            inputs: BtInputs {
                position: GroundPoint::new(0.0, 0.0),
                validity: Some(SpotValidity::Valid),
                ..at(50.0)
            },
            sequence: Sequence::TowardSpot,
            command: FlightCommand::GotoWaypoint {
                target: GroundPoint::new(10.0, 0.0),
                altitude: 50.0,
            },
            check: nothing,
        },
        Row {
            name: "over the spot starts descending",
            state: toward(Approach::Level),
            inputs: BtInputs {
                position: GroundPoint::new(10.2, 0.0),
                validity: Some(SpotValidity::Valid),
                ..at(50.0)
            },
            sequence: Sequence::TowardSpot,
            command: descend,
            check: |o| assert_eq!(o.state.approach, Approach::Descending),
        },
        Row {
            name: "invalid at 10 m with history climbs toward the alternative",
            state: toward(Approach::Descending),
            inputs: BtInputs {
                validity: INVALID,
                alternative: Some(spot(-20.0, 0.0)),
                ..at(10.0)
            },
            sequence: Sequence::TowardSpot,
            command: climb,
            check: |o| {
                assert!(o.events.rerouted);
                assert_eq!(o.state.approach, Approach::ClimbBack);
                assert_eq!(o.state.target.unwrap().position.x, -20.0);
            },
        },
        Row {
            name: "invalid at search altitude reroutes directly",
            state: toward(Approach::Descending),
            inputs: BtInputs {
                validity: PERSON,
                alternative: Some(spot(-20.0, 0.0)),
                ..at(20.0)
            },
            sequence: Sequence::TowardSpot,
            command: FlightCommand::GotoWaypoint {
                target: GroundPoint::new(-20.0, 0.0),
                altitude: 20.0,
            },
            check: |o| assert!(o.events.rerouted),
        },
        Row {
            name: "invalid below search altitude without history climbs to search",
            state: toward(Approach::Descending),
            inputs: BtInputs {
                validity: INVALID,
                ..at(10.0)
            },
            sequence: Sequence::SpotAvailable,
            command: climb,
            check: |o| assert!(o.state.target.is_none()),
        },
        Row {
            name: "invalid above search altitude without history holds",
            state: toward(Approach::Descending),
            inputs: BtInputs {
                validity: INVALID,
                ..at(30.0)
            },
            sequence: Sequence::SpotAvailable,
            command: FlightCommand::HoldPosition,
            check: nothing,
        },
        Row {
            name: "climb back continues below search altitude",
            state: toward(Approach::ClimbBack),
            inputs: BtInputs {
                validity: Some(SpotValidity::Valid),
                ..at(12.0)
            },
            sequence: Sequence::TowardSpot,
            command: climb,
            check: nothing,
        },
        Row {
            name: "climb back done flies to the alternative",
            state: BehaviorState {
                target: Some(spot(-20.0, 0.0)),
                ..toward(Approach::ClimbBack)
            },
            inputs: BtInputs {
                validity: Some(SpotValidity::Valid),
                ..at(15.0)
            },
            sequence: Sequence::TowardSpot,
            command: FlightCommand::GotoWaypoint {
                target: GroundPoint::new(-20.0, 0.0),
                altitude: 15.0,
            },
            check: |o| assert_eq!(o.state.approach, Approach::Level),
        },
        Row {
            name: "below minimum radius terrain validity is ignored",
            state: toward(Approach::Descending),
            inputs: BtInputs {
                validity: INVALID,
                ..at(4.0)
            },
            sequence: Sequence::TowardSpot,
            command: descend,
            check: nothing,
        },
        Row {
            name: "dynamic object below minimum radius pauses",
            state: toward(Approach::Descending),
            inputs: BtInputs {
                dynamic_object: true,
                ..at(4.0)
            },
            sequence: Sequence::TowardSpot,
            command: FlightCommand::Pause,
            check: |o| {
                assert!(o.events.pause_started);
                assert_eq!(o.state.pause_remaining, Some(5.0));
            },
        },
        Row {
            name: "pause counts down while the object stays",
            state: paused(3.0),
            inputs: BtInputs {
                dynamic_object: true,
                ..at(4.0)
            },
            sequence: Sequence::TowardSpot,
            command: FlightCommand::Pause,
            check: |o| {
                assert_eq!(o.state.pause_remaining, Some(2.5));
                assert!(!o.events.pause_started);
            },
        },
        Row {
            name: "pause expiry climbs to search altitude",
            state: paused(0.5),
            inputs: BtInputs {
                dynamic_object: true,
                ..at(4.0)
            },
            sequence: Sequence::SpotAvailable,
            command: climb,
            check: |o| assert!(o.state.target.is_none() && o.state.pause_remaining.is_none()),
        },
        Row {
            name: "object gone resumes descent",
            state: paused(2.0),
            inputs: at(4.0),
            sequence: Sequence::TowardSpot,
            command: descend,
            check: |o| assert!(o.state.pause_remaining.is_none()),
        },
        Row {
            name: "commit latch at the landing altitude",
            state: toward(Approach::Descending),
            inputs: at(2.0),
            sequence: Sequence::Landing,
            command: FlightCommand::CommitLand,
            check: nothing,
        },
        Row {
            name: "just above the landing altitude still descends",
            state: toward(Approach::Descending),
            inputs: at(2.01),
            sequence: Sequence::TowardSpot,
            command: descend,
            check: nothing,
        },
        Row {
            name: "committed landing ignores dynamic objects",
            state: BehaviorState {
                sequence: Sequence::Landing,
                ..toward(Approach::Descending)
            },
            inputs: BtInputs {
                dynamic_object: true,
                validity: PERSON,
                ..at(1.0)
            },
            sequence: Sequence::Landing,
            command: FlightCommand::CommitLand,
            check: nothing,
        },
        Row {
            name: "touchdown ends the landing",
            state: BehaviorState {
                sequence: Sequence::Landing,
                ..toward(Approach::Descending)
            },
            inputs: at(0.0),
            sequence: Sequence::Landed,
            command: FlightCommand::CommitLand,
            check: nothing,
        },
        Row {
            name: "illegal altitude aborts",
            state: toward(Approach::Descending),
            inputs: at(f64::NAN),
            sequence: Sequence::Aborted,
            command: FlightCommand::HoldPosition,
            check: |o| assert!(o.events.illegal_input),
        },
        Row {
            name: "aborted stays aborted",
            state: BehaviorState {
                sequence: Sequence::Aborted,
                ..BehaviorState::default()
            },
            inputs: BtInputs {
                selected: Some(spot(0.0, 0.0)),
                ..at(50.0)
            },
            sequence: Sequence::Aborted,
            command: FlightCommand::HoldPosition,
            check: nothing,
        },
    ]
}

pub fn documented_transitions() {
    let cfg = BtConfig::default();
    for row in table() {
        let out = tick(&row.state, &row.inputs, &cfg);
        assert_eq!(out.state.sequence, row.sequence, "{}", row.name);
        assert_eq!(out.command, row.command, "{}", row.name);
        (row.check)(&out);
    }
}

pub fn five_second_pause_then_climb() {
    let cfg = BtConfig::default();
    let mut state = toward(Approach::Descending);
    let mut commands = Vec::new();
    for _ in 0..12 {
        let out = tick(
            &state,
            &BtInputs {
                dynamic_object: true,
                ..at(4.0)
            },
            &cfg,
        );
        commands.push(out.command);
        state = out.state;
    }
    // ticks at t = 0, 0.5, ..., 4.5 s pause; the tick at 5 s gives up
    assert!(commands[..10].iter().all(|c| *c == FlightCommand::Pause));
    assert_eq!(commands[10], FlightCommand::Climb { altitude: 15.0 });
    assert_eq!(state.sequence, Sequence::SpotAvailable);
}

pub fn history_fallback_after_invalidation_at_ten_meters() {
    let cfg = BtConfig::default();
    let alt = spot(-20.0, 0.0);
    let mut state = toward(Approach::Descending);
    let mut agl = 10.0;
    let out = tick(
        &state,
        &BtInputs {
            validity: INVALID,
            alternative: Some(alt),
            ..at(agl)
        },
        &cfg,
    );
    assert_eq!(out.command, FlightCommand::Climb { altitude: 15.0 });
    state = out.state;
    let mut commands = Vec::new();
    while commands.len() < 10 {
        let out = tick(
            &state,
            &BtInputs {
                validity: Some(SpotValidity::Valid),
                ..at(agl)
            },
            &cfg,
        );
        if let FlightCommand::Climb { .. } = out.command {
            agl = (agl + 1.0f64).min(15.0);
        }
        commands.push(out.command);
        state = out.state;
        if matches!(out.command, FlightCommand::GotoWaypoint { .. }) {
            break;
        }
    }
    assert_eq!(
        commands.last(),
        Some(&FlightCommand::GotoWaypoint {
            target: alt.position,
            altitude: 15.0
        })
    );
}

pub fn replaying_inputs_reproduces_the_trace() {
    let cfg = BtConfig::default();
    let script: Vec<BtInputs> = (0..80)
        .map(|k| {
            let agl = 50.0 - k as f64 * 0.7;
            BtInputs {
                selected: (k % 7 == 0).then(|| spot(k as f64, 0.0)),
                validity: Some(if k % 11 == 5 {
                    SpotValidity::Invalid(InvalidReason::PersonPresent)
                } else {
                    SpotValidity::Valid
                }),
                dynamic_object: k % 5 == 0,
                alternative: (k % 3 == 0).then(|| spot(-5.0, k as f64)),
                position: GroundPoint::new(k as f64 * 0.3, 0.0),
                ..at(agl.max(0.0))
            }
        })
        .collect();
    let run = || {
        let mut state = BehaviorState::default();
        let mut trace = Vec::new();
        for inputs in &script {
            let out = tick(&state, inputs, &cfg);
            trace.push(out);
            state = out.state;
        }
        trace
    };
    let first = run();
    assert_eq!(first, run());
    assert!(first.iter().any(|o| o.state.sequence == Sequence::TowardSpot));
}
