use surgbench_core::camera::default_rig;
use surgbench_core::dataset::{validate, DemonstrationSet, Source};
use surgbench_core::expert::{run_expert, ScriptedExpert};
use surgbench_core::{reset_task, TaskName, TaskSpec};
use surgbench_teleop::protocol::RecordStatus;
use surgbench_teleop::{
    encode_state_message, ClientMessage, ErrorCode, RecordCmd, ServerMessage, Session,
    SessionConfig, StateMessage,
};

fn config(task: TaskName, dir: &std::path::Path) -> SessionConfig {
    let spec = TaskSpec::default_for(task);
    SessionConfig {
        rig: default_rig(&spec).unwrap(),
        spec,
        seed: 3,
        rate_hz: 20.0,
        dataset: dir.join("teleop"),
        capture: None,
        frame_every: None,
    }
}

fn greeted(task: TaskName, dir: &std::path::Path) -> Session {
    let mut s = Session::new(1, config(task, dir)).unwrap();
    s.handle(ClientMessage::Hello { client: None });
    s
}

fn error_code(reply: &[ServerMessage]) -> Option<ErrorCode> {
    match reply {
        [ServerMessage::Error { code, .. }] => Some(*code),
        _ => None,
    }
}

fn state(reply: &[ServerMessage]) -> StateMessage {
    match &reply[0] {
        ServerMessage::State(s) => s.clone(),
        other => panic!("expected state, got {other:?}"),
    }
}

#[test]
fn hello_is_answered_with_spec_then_state() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = Session::new(9, config(TaskName::NeedleLift, dir.path())).unwrap();
    assert_eq!(
        error_code(&s.handle(ClientMessage::Hold)),
        Some(ErrorCode::Handshake)
    );
    let reply = s.handle_text(r#"{"type":"hello","client":"test"}"#);
    assert_eq!(reply.len(), 2);
    match &reply[0] {
        ServerMessage::Spec {
            session,
            task,
            rate_hz,
            num_arms,
            ..
        } => {
            assert_eq!(
                (*session, *task, *rate_hz, *num_arms),
                (9, TaskName::NeedleLift, 20.0, 1)
            );
        }
        other => panic!("expected spec, got {other:?}"),
    }
    assert_eq!(state(&reply[1..]).step_count, 0);
}

#[test]
fn malformed_actions_get_errors_and_the_session_continues() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = greeted(TaskName::NeedleLift, dir.path());
    let bad = [
        (
            r#"{"type":"action","dpos":[0,0,0],"drot":[0,0,0],"jaw":2}"#,
            ErrorCode::BadAction,
        ),
        (
            r#"{"type":"action","arm":1,"dpos":[0,0,0],"drot":[0,0,0],"jaw":0}"#,
            ErrorCode::BadAction,
        ),
        (
            r#"{"type":"action","dpos":[0,0],"drot":[0,0,0],"jaw":0}"#,
            ErrorCode::BadAction,
        ),
        (
            r#"{"type":"action","dpos":[0,0,0],"drot":[0,0,0]}"#,
            ErrorCode::BadAction,
        ),
        (r#"{"type":"warp"}"#, ErrorCode::BadMessage),
        ("not json", ErrorCode::BadMessage),
    ];
    for (text, code) in bad {
        assert_eq!(error_code(&s.handle_text(text)), Some(code), "{text}");
    }
    assert_eq!(s.scene().step_count, 0);
    let ok =
        s.handle_text(r#"{"type":"action","arm":0,"dpos":[0.001,0,0],"drot":[0,0,0],"jaw":1}"#);
    assert_eq!(state(&ok).step_count, 1);
}

#[test]
fn holding_still_changes_only_the_step_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = greeted(TaskName::BlockTransfer, dir.path());
    let mut last = None;
    for _ in 0..4 {
        let mut m = state(&s.handle(ClientMessage::Hold));
        let step = m.step_count;
        m.step_count = 0;
        if let Some((prev_step, prev)) = &last {
            assert_eq!(step, prev_step + 1);
            assert_eq!(&m, prev);
        }
        last = Some((step, m));
    }
}

#[test]
fn state_messages_are_small_and_exact() {
    for task in TaskName::ALL {
        let spec = TaskSpec::default_for(task);
        let scene = reset_task(&spec, 11).unwrap();
        let text = encode_state_message(&spec, std::slice::from_ref(&scene), true);
        assert!(text.len() < 4096, "{task}: {} bytes", text.len());
        let ServerMessage::State(msg) = serde_json::from_str(&text).unwrap() else {
            panic!("not a state message");
        };
        for (id, pose) in &scene.objects {
            let got = msg.object_pose(id.0).unwrap();
            assert_eq!(
                got.position.map(f64::to_bits),
                pose.position.map(f64::to_bits)
            );
            assert_eq!(
                got.orientation.map(f64::to_bits),
                pose.orientation.map(f64::to_bits)
            );
        }
        for (arm, m) in scene.arms.iter().zip(&msg.arms) {
            assert_eq!(arm.proprio().map(f64::to_bits), m.proprio.map(f64::to_bits));
        }
    }
}

#[test]
fn recorded_episode_validates_and_matches_the_scripted_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(TaskName::NeedleLift, dir.path());
    let mut s = Session::new(1, cfg.clone()).unwrap();
    s.handle(ClientMessage::Hello { client: None });
    assert_eq!(
        error_code(&s.handle(ClientMessage::Record {
            cmd: RecordCmd::Save
        })),
        Some(ErrorCode::NotRecording)
    );

    // A discarded take leaves the dataset empty.
    s.handle(ClientMessage::Record {
        cmd: RecordCmd::Start,
    });
    s.handle(ClientMessage::Hold);
    s.handle(ClientMessage::Record {
        cmd: RecordCmd::Stop,
    });
    assert_eq!(DemonstrationSet::open(&cfg.dataset).unwrap().len(), 0);

    // Drive the scripted expert through the wire protocol.
    s.handle(ClientMessage::Record {
        cmd: RecordCmd::Start,
    });
    let mut expert = ScriptedExpert::new(s.scene()).unwrap();
    let scripted = run_expert(&cfg.spec, cfg.seed, 0.0, None).unwrap();
    for _ in 0..scripted.episode.steps() {
        let a = expert.act(s.scene());
        let arm = &a.arms[0];
        let reply = s.handle(ClientMessage::Action {
            arm: 0,
            dpos: arm.dpos,
            drot: arm.drot,
            jaw: arm.jaw.as_f64() as u8,
        });
        assert!(error_code(&reply).is_none());
    }
    let reply = s.handle(ClientMessage::Record {
        cmd: RecordCmd::Save,
    });
    let [ServerMessage::Record {
        status,
        steps,
        episode,
        index,
    }] = reply.as_slice()
    else {
        panic!("unexpected reply {reply:?}");
    };
    assert_eq!(*status, RecordStatus::Saved);
    assert_eq!(*steps, scripted.episode.steps());
    assert_eq!(
        (episode.as_deref(), *index),
        (Some("episode_0000"), Some(0))
    );

    let set = DemonstrationSet::open(&cfg.dataset).unwrap();
    assert!(validate(&set).all_valid());
    let teleop = set.load(0).unwrap();
    assert_eq!(teleop.meta.source, Source::Teleop);
    assert!(teleop.meta.success);
    assert_eq!(teleop.actions, scripted.episode.actions);
    assert_eq!(
        teleop
            .meta
            .final_state
            .deviation(&scripted.episode.meta.final_state),
        0.0
    );
}
