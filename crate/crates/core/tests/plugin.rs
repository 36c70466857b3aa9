use std::time::Duration;

use image::{Rgb, RgbImage};
use scenediff::geometry::BoundingBox;
use scenediff::plugin::{external_classify, PluginClassifier, PluginRequest, PluginSession};
use scenediff::relation::build_classifier_input;
use scenediff::scene::{ClassList, Detection, Scene, ScenePair, TaskKind};
use scenediff::{infer_tasks_transition, ClassifyError, GeoConfig, RelationLabel, SceneImages};

const HANDSHAKE: &str = r#"printf '{"ready":true,"protocol":1}\n'"#;

/// Answers every request with `label`, echoing its id.
fn echo_plugin(label: &str) -> String {
    format!(
        r#"{HANDSHAKE}; while read -r line; do id=$(printf '%s' "$line" | sed 's/.*"id":\([0-9]*\).*/\1/'); printf '{{"id":%s,"label":"{label}"}}\n' "$id"; done"#
    )
}

fn timeout() -> Duration {
    Duration::from_secs(10)
}

fn requests(n: u64) -> Vec<PluginRequest> {
    let img = RgbImage::from_pixel(64, 64, Rgb([10, 20, 30]));
    let a = BoundingBox::new(4.0, 4.0, 30.0, 30.0).unwrap();
    let b = BoundingBox::new(20.0, 20.0, 50.0, 40.0).unwrap();
    let input = build_classifier_input(&img, &a, &b).unwrap();
    (0..n).map(|id| PluginRequest::from_input(id, &input).unwrap()).collect()
}

#[test]
fn echo_round_trip() {
    let mut session = PluginSession::spawn(&echo_plugin("UNRELATED"), timeout()).unwrap();
    let labels = external_classify(&mut session, &requests(25)).unwrap();
    assert_eq!(labels, vec![RelationLabel::Unrelated; 25]);
}

#[test]
fn responses_may_arrive_out_of_order() {
    // Reads two requests, then answers them in reverse.
    let script = format!(
        r#"{HANDSHAKE}; read -r a; read -r b; for l in "$b" "$a"; do id=$(printf '%s' "$l" | sed 's/.*"id":\([0-9]*\).*/\1/'); if [ "$id" = 0 ]; then lab=A_IN_B; else lab=B_ON_A; fi; printf '{{"id":%s,"label":"%s"}}\n' "$id" "$lab"; done; sleep 1"#
    );
    let mut session = PluginSession::spawn(&script, timeout()).unwrap();
    let labels = external_classify(&mut session, &requests(2)).unwrap();
    assert_eq!(labels, vec![RelationLabel::AInB, RelationLabel::BOnA]);
}

#[test]
fn crash_is_reported_as_exit() {
    let script = format!("{HANDSHAKE}; read -r line; exit 7");
    let mut session = PluginSession::spawn(&script, timeout()).unwrap();
    let err = external_classify(&mut session, &requests(1)).unwrap_err();
    assert!(matches!(err, ClassifyError::Exited(_)), "{err}");
    assert!(err.is_transport());
}

#[test]
fn bad_handshake_is_a_protocol_error() {
    let err = PluginSession::spawn(r#"printf '{"ready":true,"protocol":2}\n'; sleep 1"#, timeout()).unwrap_err();
    assert!(matches!(err, ClassifyError::Protocol { .. }), "{err}");
    let err = PluginSession::spawn("printf 'hello\\n'; sleep 1", timeout()).unwrap_err();
    assert!(matches!(err, ClassifyError::Protocol { .. }), "{err}");
}

#[test]
fn silent_plugin_times_out() {
    let err = PluginSession::spawn("sleep 5", Duration::from_millis(200)).unwrap_err();
    assert!(matches!(err, ClassifyError::Timeout(_)), "{err}");
}

#[test]
fn error_response_and_bad_label() {
    let script = format!(r#"{HANDSHAKE}; read -r line; printf '{{"id":0,"error":"inverted bbox"}}\n'; sleep 1"#);
    let mut session = PluginSession::spawn(&script, timeout()).unwrap();
    let err = external_classify(&mut session, &requests(1)).unwrap_err();
    assert_eq!(
        err.to_string(),
        ClassifyError::Remote {
            id: 0,
            message: "inverted bbox".into()
        }
        .to_string()
    );

    let mut session = PluginSession::spawn(&echo_plugin("A_NEAR_B"), timeout()).unwrap();
    let err = external_classify(&mut session, &requests(1)).unwrap_err();
    match err {
        ClassifyError::Protocol { line, .. } => assert!(line.contains("A_NEAR_B")),
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn unexpected_id_is_rejected() {
    let script = format!(r#"{HANDSHAKE}; read -r line; printf '{{"id":99,"label":"UNRELATED"}}\n'; sleep 1"#);
    let mut session = PluginSession::spawn(&script, timeout()).unwrap();
    let err = external_classify(&mut session, &requests(1)).unwrap_err();
    assert!(matches!(err, ClassifyError::Protocol { .. }), "{err}");
}

#[test]
fn plugin_drives_transition_inference() {
    let classes = ClassList::default();
    let det = |id: &str, class: &str, b: [f64; 4]| {
        Detection::new(id, classes.lookup(class).unwrap(), 1.0, BoundingBox::new(b[0], b[1], b[2], b[3]).unwrap())
    };
    let initial = Scene::new(
        200,
        100,
        None,
        vec![det("bowl-0", "bowl", [10.0, 10.0, 60.0, 60.0]), det("cup-0", "cup", [120.0, 10.0, 150.0, 40.0])],
    )
    .unwrap();
    let final_ = Scene::new(
        200,
        100,
        None,
        vec![det("bowl-0", "bowl", [10.0, 10.0, 60.0, 60.0]), det("cup-0", "cup", [40.0, 20.0, 70.0, 50.0])],
    )
    .unwrap();
    let pair = ScenePair::new(initial, final_).unwrap();
    let img = RgbImage::new(200, 100);
    let images = SceneImages {
        initial: Some(&img),
        final_: Some(&img),
    };
    // Canonical pair is (bowl-0, cup-0); B_ON_A means the cup is on the bowl.
    let mut plugin = PluginClassifier::spawn(&echo_plugin("B_ON_A"), timeout()).unwrap();
    let out = infer_tasks_transition(&pair, images, &mut plugin, &GeoConfig::default()).unwrap();
    assert_eq!(out.tasks.len(), 1);
    assert_eq!((out.tasks[0].picked.as_str(), out.tasks[0].target.as_str()), ("cup-0", "bowl-0"));
    assert_eq!(out.tasks[0].kind, TaskKind::On);

    let mut plugin = PluginClassifier::spawn(&echo_plugin("B_ON_A"), timeout()).unwrap();
    let err = infer_tasks_transition(&pair, SceneImages::default(), &mut plugin, &GeoConfig::default()).unwrap_err();
    assert!(matches!(err, ClassifyError::MissingImage));
}
