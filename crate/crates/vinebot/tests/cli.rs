use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

use tungstenite::Message;
use vinebot_core::calibration::CalibrationProfile;
use vinebot_core::io::{read_command_log, read_profile, read_results};
use vinebot_core::service::{ErrorCode, InputMessage, ServerMessage, StateSnapshot, TrialAction};
use vinebot_core::task::TargetId;

fn vinebot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vinebot"))
        .args(args)
        .env("VINEBOT_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = vinebot(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn scripted_run_then_replay_calibrate_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let summary = ok(&["run-scripted", "--target", "T1,T3", "--trials", "2", "--seed", "4", "-o", s(&out)]);
    assert!(summary.contains("4 trials, 4 placed, success rate 100.0%"), "{summary}");
    for name in ["profile.txt", "calibration.jsonl", "results.csv", "report.csv", "trial_04_T3.jsonl"] {
        assert!(out.join(name).exists(), "{name}");
    }
    let rows = read_results(&out.join("results.csv")).unwrap();
    assert_eq!(rows.iter().map(|r| r.target).collect::<Vec<_>>(), [TargetId::T1, TargetId::T3, TargetId::T1, TargetId::T3]);

    // Replaying a stored trace reproduces the command log written alongside it.
    let rep = dir.path().join("replay");
    let text = ok(&[
        "replay",
        s(&out.join("trial_02_T3.jsonl")),
        "--profile",
        s(&out.join("profile.txt")),
        "--target",
        "T3",
        "-o",
        s(&rep),
    ]);
    assert!(text.contains("placed on T3"), "{text}");
    assert_eq!(
        std::fs::read(rep.join("commands.csv")).unwrap(),
        std::fs::read(out.join("trial_02_T3.commands.csv")).unwrap()
    );
    assert_eq!(read_results(&rep.join("results.csv")).unwrap()[0].tpe_cm, rows[1].tpe_cm);
    let result: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(rep.join("result.json")).unwrap()).unwrap();
    assert_eq!(result["target"], "T3");
    assert!(result["fine_place_s"].as_f64().unwrap() >= 0.0);

    let prof_path = dir.path().join("cal.txt");
    ok(&["calibrate", s(&out.join("calibration.jsonl")), "-o", s(&prof_path)]);
    let fitted = read_profile(&prof_path).unwrap();
    let scripted = read_profile(&out.join("profile.txt")).unwrap();
    for (a, b) in [(fitted.x_left, scripted.x_left), (fitted.y_high, scripted.y_high), (fitted.z_front, scripted.z_front)] {
        assert!((a - b).abs() < 0.01, "{a} vs {b}");
    }

    let original = std::fs::read_to_string(out.join("report.csv")).unwrap();
    std::fs::remove_file(out.join("report.csv")).unwrap();
    ok(&["report", s(&out)]);
    assert_eq!(std::fs::read_to_string(out.join("report.csv")).unwrap(), original);
}

#[test]
fn bad_invocations_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.jsonl");
    let out = vinebot(&["replay", s(&missing), "--profile", s(&missing), "--target", "T1", "-o", s(dir.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));

    let out = vinebot(&["serve", "--port", "0"]);
    assert!(!out.status.success(), "marker mode without a profile");
    assert!(String::from_utf8_lossy(&out.stderr).contains("--profile"));

    assert!(!vinebot(&["report", s(dir.path())]).status.success());
    assert!(!vinebot(&["run-scripted", "--target", "T9", "-o", s(dir.path())]).status.success());

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[robot]\nlength_min = 2.0\n").unwrap();
    let out = vinebot(&["run-scripted", "--trials", "1", "--config", s(&cfg), "-o", s(dir.path())]);
    assert!(!out.status.success());
}

#[test]
fn config_file_overrides_robot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("robot.toml");
    std::fs::write(&cfg, "[robot]\ngrowth_rate = 0.08\n\n[task]\ndrop_scatter = 0.0\n").unwrap();
    let run = dir.path().join("run");
    ok(&["run-scripted", "--target", "T2", "--trials", "1", "--config", s(&cfg), "-o", s(&run)]);
    let log = read_command_log(&run.join("trial_01_T2.commands.csv")).unwrap();
    assert!(!log.is_empty());
    std::fs::write(&cfg, "[robot]\nwheels = 4\n").unwrap();
    assert!(!vinebot(&["run-scripted", "--config", s(&cfg), "-o", s(&run)]).status.success());
}

/// A running server, killed on drop.
struct Server {
    child: Child,
    addr: String,
}

impl Server {
    fn start(extra: &[&str]) -> Server {
        let mut child = Command::new(env!("CARGO_BIN_EXE_vinebot"))
            .args(["serve", "--port", "0"])
            .args(extra)
            .env("VINEBOT_LOG", "warn")
            .stdout(Stdio::piped())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let addr = line.trim().strip_prefix("listening on ").expect("address line").to_string();
        Server { child, addr }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn next_message(read: &mut impl FnMut() -> String, want: impl Fn(&ServerMessage) -> bool) -> ServerMessage {
    let deadline = Instant::now() + Duration::from_secs(10);
    while Instant::now() < deadline {
        let msg = ServerMessage::parse(&read()).unwrap();
        if want(&msg) {
            return msg;
        }
    }
    panic!("expected message never arrived");
}

fn state(msg: ServerMessage) -> StateSnapshot {
    match msg {
        ServerMessage::State(s) => s,
        other => panic!("{other:?}"),
    }
}

#[test]
fn tcp_proxy_session() {
    let server = Server::start(&["--mode", "proxy"]);
    let stream = TcpStream::connect(&server.addr).unwrap();
    stream.set_read_timeout(Some(Duration::from_secs(10))).unwrap();
    let mut writer = stream.try_clone().unwrap();
    let mut reader = BufReader::new(stream);
    let mut read = || {
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        line
    };
    let mut send = |line: String| writeln!(writer, "{line}").unwrap();

    let first = state(next_message(&mut read, |m| matches!(m, ServerMessage::State(_))));
    assert_eq!(first.robot.length, 0.5);
    assert_eq!(first.tick % 2, 0);

    send(r#"{"type":"marker","t":0,"markers":{}}"#.into());
    let err = next_message(&mut read, |m| matches!(m, ServerMessage::Error { .. }));
    assert!(matches!(err, ServerMessage::Error { code: ErrorCode::ModeMismatch, .. }));

    send(InputMessage::Trial(TrialAction::Start { target: TargetId::T1 }).to_line());
    send(InputMessage::Trial(TrialAction::Start { target: TargetId::T1 }).to_line());
    let err = next_message(&mut read, |m| matches!(m, ServerMessage::Error { .. }));
    assert!(matches!(err, ServerMessage::Error { code: ErrorCode::TrialActive, .. }));

    // Reach low in the default profile to grow for a while.
    let p = CalibrationProfile::default();
    let (x, _, z) = p.center();
    let now = state(next_message(&mut read, |m| matches!(m, ServerMessage::State(_)))).t;
    for i in 0..40 {
        let t = now + i as f64 * 0.01;
        send(InputMessage::Wrist { t, x, y: p.y_low, z, theta_p: p.theta_offset }.to_line());
    }
    let grown = next_message(&mut read, |m| match m {
        ServerMessage::State(s) => s.robot.length > 0.5 + 1e-3,
        _ => false,
    });
    let grown = state(grown);
    assert_eq!(grown.trial.unwrap().target, TargetId::T1);
}

type Ws = tungstenite::WebSocket<tungstenite::stream::MaybeTlsStream<TcpStream>>;

fn ws_expect(ws: &mut Ws, want: impl Fn(&ServerMessage) -> bool) -> ServerMessage {
    let mut read = || loop {
        if let Message::Text(text) = ws.read().unwrap() {
            return text;
        }
    };
    next_message(&mut read, want)
}

#[test]
fn websocket_client_receives_state_and_errors() {
    let server = Server::start(&["--mode", "proxy"]);
    let (mut ws, _) = tungstenite::connect(format!("ws://{}/", server.addr)).unwrap();
    let is_state = |m: &ServerMessage| matches!(m, ServerMessage::State(_));
    let snap = state(ws_expect(&mut ws, is_state));
    assert!(!snap.calibrating);
    assert!(state(ws_expect(&mut ws, is_state)).tick > snap.tick);

    ws.send(Message::Text(r#"{"type":"wrist","t":0,"x":"far"}"#.into())).unwrap();
    let err = ws_expect(&mut ws, |m| matches!(m, ServerMessage::Error { .. }));
    assert!(matches!(err, ServerMessage::Error { code: ErrorCode::MalformedMessage, .. }));

    ws.send(Message::Text(r#"{"type":"calibration","action":"begin"}"#.into())).unwrap();
    ws_expect(&mut ws, |m| matches!(m, ServerMessage::State(s) if s.calibrating));
    ws.close(None).unwrap();
}
