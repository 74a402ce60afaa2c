use std::path::PathBuf;

use vinebot_core::engine::Engine;
use vinebot_core::geometry::{to_body, WristState};
use vinebot_core::io::commands::encode_command_log;
use vinebot_core::io::{read_trace, write_trace, MarkerTrace};
use vinebot_core::replay::{push_input, run_replay, trace_inputs};
use vinebot_core::robot::RobotConfig;
use vinebot_core::synth::{operator_profile, run_scripted, synth_operator, SynthOptions, REACH_X, REACH_Y, REACH_Z};
use vinebot_core::task::{make_scenario, TargetId, TaskEvent, TrialResult};

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// Compares against a stored file; `VINEBOT_BLESS=1` rewrites it.
fn assert_golden(name: &str, actual: &str) {
    let path = golden(name);
    if std::env::var_os("VINEBOT_BLESS").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(expected == actual, "{name} differs from the stored copy");
}

fn trace(target: TargetId, seed: u64) -> MarkerTrace {
    synth_operator(&make_scenario(target), &operator_profile(), seed, &SynthOptions::default()).unwrap()
}

#[test]
fn replay_is_deterministic() {
    let tr = trace(TargetId::T3, 2);
    let cfg = RobotConfig::default();
    let a = run_replay(&tr, &operator_profile(), TargetId::T3, &cfg);
    let b = run_replay(&tr, &operator_profile(), TargetId::T3, &cfg);
    assert_eq!(encode_command_log(&a.log), encode_command_log(&b.log));
    assert_eq!(a.result.unwrap(), b.result.unwrap());
}

#[test]
fn replay_survives_trace_file_round_trip() {
    let tr = trace(TargetId::T1, 4);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.jsonl");
    write_trace(&path, &tr).unwrap();
    let back = read_trace(&path).unwrap();
    assert_eq!(back, tr);
    let cfg = RobotConfig::default();
    let a = run_replay(&tr, &operator_profile(), TargetId::T1, &cfg);
    let b = run_replay(&back, &operator_profile(), TargetId::T1, &cfg);
    assert_eq!(a.log, b.log);
}

#[test]
fn golden_t2_seed0() {
    let out = run_replay(&trace(TargetId::T2, 0), &operator_profile(), TargetId::T2, &RobotConfig::default());
    let result: TrialResult = out.result.unwrap();
    assert!(!result.failed);
    assert_golden("t2_seed0.commands.csv", &encode_command_log(&out.log));
    assert_golden("t2_seed0.result.json", &(serde_json::to_string_pretty(&result).unwrap() + "\n"));
}

#[test]
fn scripted_suite_is_reproducible() {
    let opts = SynthOptions::default();
    let a = run_scripted(&[TargetId::T1, TargetId::T3], 2, 9, &opts).unwrap();
    let b = run_scripted(&[TargetId::T1, TargetId::T3], 2, 9, &opts).unwrap();
    assert_eq!(a.len(), 4);
    assert_eq!(a.iter().map(|t| t.target).collect::<Vec<_>>(), [TargetId::T1, TargetId::T3, TargetId::T1, TargetId::T3]);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.seed, y.seed);
        assert_eq!(x.trace, y.trace);
        assert_eq!(x.replay.log, y.replay.log);
    }
    assert_ne!(a[0].seed, a[2].seed);
}

#[test]
fn operator_grasps_on_first_attempt() {
    for target in TargetId::ALL {
        let tr = trace(target, 1);
        let mut engine = Engine::new(RobotConfig::default(), operator_profile(), make_scenario(target));
        engine.start_trial(target);
        for input in trace_inputs(&tr) {
            push_input(&mut engine, &input);
        }
        let mut events = Vec::new();
        let result = loop {
            let out = engine.tick();
            events.extend(out.events);
            if let Some(r) = out.finished {
                break r;
            }
            assert!(engine.now() < 60.0, "{target} never finished");
        };
        assert!(!result.failed, "{target}: {result:?}");
        let grasps: Vec<_> = events
            .iter()
            .filter(|e| matches!(e, TaskEvent::Grasped | TaskEvent::GraspMissed))
            .collect();
        assert_eq!(grasps, [&TaskEvent::Grasped], "{target}");
        assert!(!events.iter().any(|e| matches!(e, TaskEvent::Contact { .. })), "{target}: {events:?}");
    }
}

#[test]
fn operator_stays_inside_reach() {
    let slack = 0.02;
    for target in TargetId::ALL {
        for frame in trace(target, 6).frames() {
            let wr = WristState::from_body(&to_body(frame).unwrap()).unwrap().wr;
            assert!(wr.x > REACH_X.0 - slack && wr.x < REACH_X.1 + slack, "{target} x {}", wr.x);
            assert!(wr.y > REACH_Y.0 - slack && wr.y < REACH_Y.1 + slack, "{target} y {}", wr.y);
            assert!(wr.z > REACH_Z.0 - slack && wr.z < REACH_Z.1 + slack, "{target} z {}", wr.z);
        }
    }
}
