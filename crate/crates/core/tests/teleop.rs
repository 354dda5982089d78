use std::net::TcpListener;
use std::sync::Arc;
use std::time::{Duration, Instant};

use dexpipe::episode::{EpisodeRecord, Provenance};
use dexpipe::sim::{RandomizationSpec, Simulator};
use dexpipe::teleop::*;
use dexpipe::Error;

fn calib(sim: &Simulator) -> Calibration {
    Calibration::new(&sim.open_hand(), &sim.closed_hand(), sim.description().home_pose())
}

fn input(dx: f64, pinch: f64) -> ClientMessage {
    ClientMessage::Input(OperatorInput {
        wrist_delta: [dx, 0.0, -dx],
        wrist_rot_delta: [0.0; 3],
        pinch,
    })
}

fn button(b: Button) -> ClientMessage {
    ClientMessage::Button(b)
}

struct Client {
    session: Session,
    seq: u64,
}

impl Client {
    fn new(out: Option<std::path::PathBuf>) -> Self {
        let cfg = SessionConfig::new(RandomizationSpec::nominal().with_seed(9), out);
        Self {
            session: Session::new(Arc::new(Simulator::canonical()), cfg).unwrap(),
            seq: 0,
        }
    }

    fn send(&mut self, msg: ClientMessage) -> Vec<ServerMessage> {
        self.seq += 1;
        self.session.handle_line(&msg.to_line(self.seq))
    }
}

fn error_kind(replies: &[ServerMessage]) -> Option<String> {
    replies.iter().find_map(|m| match m {
        ServerMessage::Error { kind, .. } => Some(kind.clone()),
        _ => None,
    })
}

#[test]
fn pinch_endpoints_and_midpoint() {
    let sim = Simulator::canonical();
    let c = calib(&sim);
    assert_eq!(finger_target(0.0, &c), c.open);
    assert_eq!(finger_target(1.0, &c), c.closed);
    let mid = finger_target(0.5, &c);
    for k in 0..7 {
        assert!((mid[k] - 0.5 * (c.open[k] + c.closed[k])).abs() < 1e-15);
    }
    assert_eq!(finger_target(7.0, &c), c.closed);
}

#[test]
fn retarget_is_affine_in_pinch() {
    let sim = Simulator::canonical();
    let c = calib(&sim);
    let current = dexpipe::kinematics::ReducedHandCommand::from_slice(&finger_target(0.5, &c));
    let at = |p: f64| {
        let i = OperatorInput {
            wrist_delta: [0.005, 0.0, 0.0],
            wrist_rot_delta: [0.0; 3],
            pinch: p,
        };
        retarget(&i, Some(&c), &current).unwrap()
    };
    let (a, b, d) = (at(0.47), at(0.5), at(0.53));
    for k in 0..7 {
        let lin = (b.fingers[k] - a.fingers[k]) - (d.fingers[k] - b.fingers[k]);
        assert!(lin.abs() < 1e-12, "dim {k}: {lin}");
    }
    assert_eq!(a.wrist_delta, b.wrist_delta);
    assert_eq!(b.terminate, 0.0);
}

#[test]
fn retarget_clamps_and_requires_calibration() {
    let sim = Simulator::canonical();
    let c = calib(&sim);
    let i = OperatorInput {
        wrist_delta: [1.0, -1.0, 0.001],
        wrist_rot_delta: [0.0, 5.0, 0.0],
        pinch: 0.0,
    };
    assert!(matches!(retarget(&i, None, &sim.open_hand()), Err(Error::CalibrationRequired)));
    let a = retarget(&i, Some(&c), &sim.open_hand()).unwrap();
    assert_eq!(a.wrist_delta, [0.02, -0.02, 0.001, 0.0, 0.1, 0.0]);
    assert_eq!(a.fingers, [0.0; 7]);
}

#[test]
fn malformed_and_out_of_order_messages_change_nothing() {
    let mut c = Client::new(None);
    let before = c.session.world().clone();
    for line in ["not json", "{\"type\":\"dance\",\"seq\":1,\"payload\":{}}", "{\"type\":\"button\",\"payload\":{\"button\":\"start\"}}", "{\"type\":\"input\",\"seq\":2,\"payload\":{\"pinch\":0.3}}"] {
        let r = c.session.handle_line(line);
        assert_eq!(error_kind(&r).as_deref(), Some("protocol"), "{line}");
    }
    let r = c.send(button(Button::Stop));
    assert_eq!(error_kind(&r).as_deref(), Some("protocol"));
    assert_eq!(c.session.state(), SessionState::Idle);
    let r = c.send(input(0.0, 0.5));
    assert_eq!(error_kind(&r).as_deref(), Some("calibration_required"));
    let r = c.send(button(Button::Start));
    assert_eq!(error_kind(&r).as_deref(), Some("calibration_required"));
    assert!(c.send(button(Button::Reset)).iter().all(|m| m.kind() == "event"));
    let r = c.session.handle_line(&button(Button::Start).to_line(1));
    assert_eq!(error_kind(&r).as_deref(), Some("protocol"));
    assert_eq!(c.session.state(), SessionState::Idle);
    assert!(c.session.world().tick == before.tick);
}

fn record(c: &mut Client, n: usize) -> Vec<ServerMessage> {
    assert!(error_kind(&c.send(button(Button::Reset))).is_none());
    assert!(error_kind(&c.send(button(Button::Start))).is_none());
    for k in 0..n {
        let r = c.send(input(if k % 10 < 5 { 0.004 } else { -0.004 }, (k as f64 / n as f64).min(1.0)));
        assert!(r.is_empty());
        c.session.tick().unwrap();
    }
    c.send(button(Button::Stop))
}

#[test]
fn fifty_inputs_record_fifty_frames_that_replay_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = Client::new(Some(dir.path().to_path_buf()));
    let r = record(&mut c, 50);
    assert!(matches!(&r[0], ServerMessage::Event { event, .. } if event == "saved"), "{r:?}");
    let ep = c.session.last_episode().unwrap().clone();
    assert_eq!(ep.frames.len(), 50);
    assert_eq!(ep.frames.last().unwrap().action.terminate, 1.0);
    assert!(ep.frames[..49].iter().all(|f| f.action.terminate == 0.0));
    assert_eq!(ep.metadata.provenance, Provenance::Teleop);
    assert!(ep.replays_exactly(&Simulator::canonical()).unwrap());
    assert_eq!(c.session.saved().len(), 1);
    let loaded = EpisodeRecord::load(&c.session.saved()[0]).unwrap();
    assert_eq!(loaded, ep);
    assert!(loaded.replays_exactly(&Simulator::canonical()).unwrap());
}

#[test]
fn discard_and_empty_stop_persist_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = Client::new(Some(dir.path().to_path_buf()));
    c.send(button(Button::Reset));
    c.send(button(Button::Start));
    c.send(input(0.01, 0.2));
    c.session.tick().unwrap();
    let r = c.send(button(Button::Discard));
    assert!(matches!(&r[0], ServerMessage::Event { event, .. } if event == "discarded"));
    c.send(button(Button::Start));
    let r = c.send(button(Button::Stop));
    assert!(matches!(&r[0], ServerMessage::Event { event, .. } if event == "discarded"));
    c.send(button(Button::Start));
    c.session.tick().unwrap();
    assert!(c.session.disconnect());
    assert_eq!(c.session.state(), SessionState::Idle);
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
    assert!(c.session.last_episode().is_none());
}

#[test]
fn missing_input_holds_the_wrist_and_the_pinch() {
    let mut c = Client::new(None);
    c.send(button(Button::Reset));
    c.send(button(Button::Start));
    c.send(input(0.01, 0.6));
    c.session.tick().unwrap();
    c.session.tick().unwrap();
    c.send(button(Button::Stop));
    let ep = c.session.last_episode().unwrap();
    assert_eq!(ep.frames[1].action.wrist_delta, [0.0; 6]);
    let c2 = calib(&Simulator::canonical());
    let target = finger_target(0.6, &c2);
    let cmd = ep.initial_state.hand_command.to_array();
    let first: Vec<f64> = (0..7).map(|k| cmd[k] + ep.frames[0].action.fingers[k]).collect();
    // Still closing toward the same posture on the held tick.
    for k in 0..7 {
        let rest = target[k] - first[k];
        assert!(rest == 0.0 || rest.signum() == ep.frames[1].action.fingers[k].signum() || ep.frames[1].action.fingers[k] == 0.0);
    }
}

fn connect(addr: std::net::SocketAddr) -> tungstenite::WebSocket<tungstenite::stream::MaybeTlsStream<std::net::TcpStream>> {
    tungstenite::connect(format!("ws://{addr}")).unwrap().0
}

fn next_msg(ws: &mut tungstenite::WebSocket<tungstenite::stream::MaybeTlsStream<std::net::TcpStream>>) -> ServerMessage {
    loop {
        if let tungstenite::Message::Text(t) = ws.read().unwrap() {
            return ServerMessage::parse(&t).unwrap().1;
        }
    }
}

#[test]
fn server_ticks_refuses_a_second_client_and_discards_on_disconnect() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SessionConfig::new(RandomizationSpec::nominal().with_seed(3), Some(dir.path().to_path_buf()));
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let server = serve(Arc::new(Simulator::canonical()), listener, ServerConfig::new(cfg)).unwrap();
    let mut ws = connect(server.addr());
    let t0 = Instant::now();
    let mut snapshots = 0;
    while t0.elapsed() < Duration::from_secs(3) {
        if next_msg(&mut ws).kind() == "snapshot" {
            snapshots += 1;
        }
    }
    let rate = snapshots as f64 / t0.elapsed().as_secs_f64();
    assert!((rate - TICK_HZ).abs() < 1.5, "rate {rate}");

    let mut second = connect(server.addr());
    assert!(matches!(next_msg(&mut second), ServerMessage::Error { kind, .. } if kind == "busy"));

    let mut seq = 0;
    let mut send = |ws: &mut tungstenite::WebSocket<_>, m: ClientMessage| {
        seq += 1;
        ws.send(tungstenite::Message::text(m.to_line(seq))).unwrap();
    };
    send(&mut ws, ClientMessage::Hello { client: "test".into() });
    send(&mut ws, button(Button::Reset));
    send(&mut ws, button(Button::Start));
    for _ in 0..5 {
        send(&mut ws, input(0.002, 0.3));
    }
    std::thread::sleep(Duration::from_millis(300));
    drop(ws);
    std::thread::sleep(Duration::from_millis(300));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);

    let mut ws = connect(server.addr());
    let mut seq = 0;
    for m in [ClientMessage::Hello { client: "again".into() }, button(Button::Reset), button(Button::Start), input(0.002, 0.4)] {
        seq += 1;
        ws.send(tungstenite::Message::text(m.to_line(seq))).unwrap();
    }
    let t0 = Instant::now();
    while t0.elapsed() < Duration::from_millis(400) {
        next_msg(&mut ws);
    }
    ws.send(tungstenite::Message::text(button(Button::Stop).to_line(seq + 1))).unwrap();
    let saved = loop {
        if let ServerMessage::Event { event, detail } = next_msg(&mut ws) {
            if event == "saved" {
                break detail;
            }
        }
    };
    let ep = EpisodeRecord::load(std::path::Path::new(saved["path"].as_str().unwrap())).unwrap();
    assert!(!ep.frames.is_empty());
    assert!(ep.replays_exactly(&Simulator::canonical()).unwrap());
    drop(ws);
    server.stop();
}
