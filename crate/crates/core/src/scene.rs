//! Scene data model and its file formats.
//!
//! Two scene formats are read: the native scene JSON and the
//! one-detection-per-line detector text format (`class cx cy w h [conf]`,
//! normalized center-size). Task lists are written as a JSON document with
//! deterministic ordering.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::ParseError;
use crate::geometry::BoundingBox;
use crate::relation::SceneRelations;

/// Default detector label set, in class-index order.
pub const DEFAULT_CLASSES: [&str; 11] = [
    "bottle",
    "pan",
    "plate",
    "pot",
    "spoon",
    "whisk",
    "knife",
    "bowl",
    "cup",
    "cutting_board",
    "fork",
];

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectClass(String);

impl ObjectClass {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<String> for ObjectClass {
    fn from(name: String) -> Self {
        ObjectClass(name)
    }
}

impl From<&str> for ObjectClass {
    fn from(name: &str) -> Self {
        ObjectClass(name.to_string())
    }
}

impl fmt::Display for ObjectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Closed list of class names; index order matters for the detector format.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassList {
    names: Vec<String>,
}

impl Default for ClassList {
    fn default() -> Self {
        Self {
            names: DEFAULT_CLASSES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl ClassList {
    pub fn new<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            names: names.into_iter().map(Into::into).collect(),
        }
    }

    /// One name per line; blank lines are ignored.
    pub fn parse(text: &str) -> Self {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(str::to_string),
        )
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn by_index(&self, index: usize) -> Option<ObjectClass> {
        self.names.get(index).map(|n| ObjectClass(n.clone()))
    }

    pub fn lookup(&self, name: &str) -> Result<ObjectClass, ParseError> {
        self.names
            .iter()
            .find(|n| n.as_str() == name)
            .map(|n| ObjectClass(n.clone()))
            .ok_or_else(|| ParseError::UnknownClass(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = ObjectClass> + '_ {
        self.names.iter().map(|n| ObjectClass(n.clone()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub id: String,
    pub class: ObjectClass,
    pub confidence: f64,
    pub bbox: BoundingBox,
}

impl Detection {
    pub fn new(
        id: impl Into<String>,
        class: ObjectClass,
        confidence: f64,
        bbox: BoundingBox,
    ) -> Self {
        Self {
            id: id.into(),
            class,
            confidence,
            bbox,
        }
    }
}

/// Detections for one image. Every box lies inside the image frame and ids
/// are unique.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    width: u32,
    height: u32,
    image_path: Option<String>,
    detections: Vec<Detection>,
}

impl Scene {
    /// Validates ids, confidences and clamps boxes to the frame.
    pub fn new(
        width: u32,
        height: u32,
        image_path: Option<String>,
        detections: Vec<Detection>,
    ) -> Result<Self, ParseError> {
        if width == 0 || height == 0 {
            return Err(ParseError::Dimensions { width, height });
        }
        let mut seen = HashSet::new();
        let mut clamped = Vec::with_capacity(detections.len());
        for mut det in detections {
            if det.id.is_empty() {
                return Err(ParseError::InvalidDetection {
                    id: det.id,
                    message: "empty id".into(),
                });
            }
            if !seen.insert(det.id.clone()) {
                return Err(ParseError::DuplicateId(det.id));
            }
            if !(0.0..=1.0).contains(&det.confidence) {
                return Err(ParseError::InvalidDetection {
                    message: format!("confidence {} outside [0, 1]", det.confidence),
                    id: det.id,
                });
            }
            det.bbox = det
                .bbox
                .clamp_to(width as f64, height as f64)
                .map_err(|_| ParseError::ZeroArea { id: det.id.clone() })?;
            clamped.push(det);
        }
        Ok(Self {
            width,
            height,
            image_path,
            detections: clamped,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn diagonal(&self) -> f64 {
        (self.width as f64).hypot(self.height as f64)
    }

    pub fn image_path(&self) -> Option<&str> {
        self.image_path.as_deref()
    }

    pub fn set_image_path(&mut self, path: Option<String>) {
        self.image_path = path;
    }

    pub fn detections(&self) -> &[Detection] {
        &self.detections
    }

    pub fn get(&self, id: &str) -> Option<&Detection> {
        self.detections.iter().find(|d| d.id == id)
    }

    /// Scales every box and the frame by `s`. Image dimensions are rounded,
    /// so use factors that keep them integral.
    pub fn scaled(&self, s: f64) -> Result<Scene, ParseError> {
        let detections = self
            .detections
            .iter()
            .map(|d| Detection {
                bbox: d.bbox.scale(s),
                ..d.clone()
            })
            .collect();
        Scene::new(
            (self.width as f64 * s).round() as u32,
            (self.height as f64 * s).round() as u32,
            self.image_path.clone(),
            detections,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenePair {
    pub initial: Scene,
    pub final_: Scene,
}

impl ScenePair {
    pub fn new(initial: Scene, final_: Scene) -> Result<Self, ParseError> {
        if (initial.width, initial.height) != (final_.width, final_.height) {
            return Err(ParseError::PairDimensions {
                initial: (initial.width, initial.height),
                final_: (final_.width, final_.height),
            });
        }
        Ok(Self { initial, final_ })
    }

    pub fn diagonal(&self) -> f64 {
        self.initial.diagonal()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    In,
    On,
    Removed,
}

/// Which procedure produced a task. `Truth` marks simulator ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Geometric,
    Transition,
    Truth,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PickPlaceTask {
    pub picked: String,
    pub target: String,
    pub kind: TaskKind,
    pub method: Method,
}

impl PickPlaceTask {
    pub fn new(
        picked: impl Into<String>,
        target: impl Into<String>,
        kind: TaskKind,
        method: Method,
    ) -> Self {
        let task = Self {
            picked: picked.into(),
            target: target.into(),
            kind,
            method,
        };
        debug_assert_ne!(task.picked, task.target);
        task
    }
}

/// Task list file, optionally carrying the per-scene relation labels that
/// produced it.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TasksDocument {
    pub tasks: Vec<PickPlaceTask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relations: Option<SceneRelations>,
}

impl TasksDocument {
    pub fn new(mut tasks: Vec<PickPlaceTask>) -> Self {
        tasks.sort();
        Self {
            tasks,
            relations: None,
        }
    }

    pub fn to_json(&self) -> String {
        let mut doc = self.clone();
        doc.tasks.sort();
        if let Some(rel) = doc.relations.as_mut() {
            rel.sort();
        }
        let mut out = serde_json::to_string_pretty(&doc).expect("tasks serialize");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self, ParseError> {
        let doc: TasksDocument = serde_json::from_str(text)?;
        for t in &doc.tasks {
            if t.picked == t.target {
                return Err(ParseError::InvalidDetection {
                    id: t.picked.clone(),
                    message: "task picks and targets the same object".into(),
                });
            }
        }
        Ok(doc)
    }
}

/// Deterministic task-list JSON: tasks sorted by (picked, target, kind).
pub fn serialize_tasks(tasks: &[PickPlaceTask]) -> String {
    TasksDocument::new(tasks.to_vec()).to_json()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneFormat {
    SceneJson,
    /// Normalized `class cx cy w h [conf]` lines for an image of the given size.
    DetectorTxt { width: u32, height: u32 },
}

#[derive(Serialize, Deserialize)]
struct ImageJson {
    width: u32,
    height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    path: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    class: String,
    #[serde(default = "default_confidence")]
    confidence: f64,
    bbox: [f64; 4],
}

fn default_confidence() -> f64 {
    1.0
}

#[derive(Serialize, Deserialize)]
struct SceneJson {
    image: ImageJson,
    detections: Vec<DetectionJson>,
}

/// Assigns `<class>-<k>` ids (k counts per class in reading order) to
/// detections that lack one.
fn assign_ids(raw: Vec<(Option<String>, ObjectClass, f64, [f64; 4])>) -> Vec<RawDetection> {
    let mut counters: BTreeMap<ObjectClass, usize> = BTreeMap::new();
    raw.into_iter()
        .map(|(id, class, confidence, bbox)| {
            let k = counters.entry(class.clone()).or_default();
            let id = id.unwrap_or_else(|| format!("{}-{}", class, k));
            *k += 1;
            RawDetection {
                id,
                class,
                confidence,
                bbox,
            }
        })
        .collect()
}

struct RawDetection {
    id: String,
    class: ObjectClass,
    confidence: f64,
    bbox: [f64; 4],
}

fn finish_scene(
    width: u32,
    height: u32,
    path: Option<String>,
    raw: Vec<RawDetection>,
) -> Result<Scene, ParseError> {
    let mut detections = Vec::with_capacity(raw.len());
    for r in raw {
        let [x0, y0, x1, y1] = r.bbox;
        if r.bbox.iter().any(|c| !c.is_finite()) {
            return Err(ParseError::InvalidDetection {
                id: r.id,
                message: "non-finite bbox coordinate".into(),
            });
        }
        // Clamp before validating so that boxes hanging off the frame survive.
        let (w, h) = (width as f64, height as f64);
        let bbox = BoundingBox::new(
            x0.clamp(0.0, w),
            y0.clamp(0.0, h),
            x1.clamp(0.0, w),
            y1.clamp(0.0, h),
        )
        .map_err(|_| ParseError::ZeroArea { id: r.id.clone() })?;
        detections.push(Detection::new(r.id, r.class, r.confidence, bbox));
    }
    Scene::new(width, height, path, detections)
}

pub fn parse_scene(
    text: &str,
    format: SceneFormat,
    classes: &ClassList,
) -> Result<Scene, ParseError> {
    match format {
        SceneFormat::SceneJson => {
            let doc: SceneJson = serde_json::from_str(text)?;
            let mut raw = Vec::with_capacity(doc.detections.len());
            for d in doc.detections {
                raw.push((d.id, classes.lookup(&d.class)?, d.confidence, d.bbox));
            }
            finish_scene(doc.image.width, doc.image.height, doc.image.path, assign_ids(raw))
        }
        SceneFormat::DetectorTxt { width, height } => {
            let (w, h) = (width as f64, height as f64);
            let mut raw = Vec::new();
            for (i, line) in text.lines().enumerate() {
                let line_no = i + 1;
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let fields: Vec<&str> = line.split_whitespace().collect();
                if fields.len() != 5 && fields.len() != 6 {
                    return Err(ParseError::Line {
                        line: line_no,
                        message: format!("expected 5 or 6 fields, found {}", fields.len()),
                    });
                }
                let index: usize = fields[0].parse().map_err(|_| ParseError::Line {
                    line: line_no,
                    message: format!("class index '{}' is not a non-negative integer", fields[0]),
                })?;
                let class = classes.by_index(index).ok_or(ParseError::ClassIndex {
                    line: line_no,
                    index,
                    len: classes.len(),
                })?;
                let mut nums = [0.0f64; 5];
                const NAMES: [&str; 5] = ["cx", "cy", "w", "h", "confidence"];
                for (k, field) in fields[1..].iter().enumerate() {
                    nums[k] = field
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| ParseError::Line {
                            line: line_no,
                            message: format!("field {} '{}' is not a number", NAMES[k], field),
                        })?;
                }
                let confidence = if fields.len() == 6 { nums[4] } else { 1.0 };
                let [cx, cy, bw, bh, _] = nums;
                raw.push((
                    None,
                    class,
                    confidence,
                    [
                        (cx - bw / 2.0) * w,
                        (cy - bh / 2.0) * h,
                        (cx + bw / 2.0) * w,
                        (cy + bh / 2.0) * h,
                    ],
                ));
            }
            finish_scene(width, height, None, assign_ids(raw))
        }
    }
}

pub fn read_scene(
    path: &Path,
    format: SceneFormat,
    classes: &ClassList,
) -> Result<Scene, ParseError> {
    let text = std::fs::read_to_string(path).map_err(|source| ParseError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scene(&text, format, classes)
}

/// Scene JSON text, newline-terminated.
pub fn serialize_scene(scene: &Scene) -> String {
    let doc = SceneJson {
        image: ImageJson {
            width: scene.width,
            height: scene.height,
            path: scene.image_path.clone(),
        },
        detections: scene
            .detections
            .iter()
            .map(|d| DetectionJson {
                id: Some(d.id.clone()),
                class: d.class.to_string(),
                confidence: d.confidence,
                bbox: d.bbox.to_array(),
            })
            .collect(),
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("scene serialize");
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn classes() -> ClassList {
        ClassList::default()
    }

    #[test]
    fn detector_txt_denormalizes_center_size() {
        let scene = parse_scene(
            "8 0.5 0.5 0.25 0.25\n",
            SceneFormat::DetectorTxt {
                width: 640,
                height: 480,
            },
            &classes(),
        )
        .unwrap();
        let d = &scene.detections()[0];
        assert_eq!(d.class.as_str(), "cup");
        assert_eq!(d.id, "cup-0");
        assert_eq!(d.bbox.to_array(), [240.0, 180.0, 400.0, 300.0]);
        assert_eq!(d.confidence, 1.0);
    }

    #[test]
    fn detector_txt_ids_follow_reading_order() {
        let text = "8 0.1 0.1 0.1 0.1\n7 0.5 0.5 0.1 0.1 0.75\n8 0.9 0.9 0.1 0.1\n";
        let scene = parse_scene(
            text,
            SceneFormat::DetectorTxt {
                width: 100,
                height: 100,
            },
            &classes(),
        )
        .unwrap();
        let ids: Vec<_> = scene.detections().iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, ["cup-0", "bowl-0", "cup-1"]);
        assert_eq!(scene.detections()[1].confidence, 0.75);
    }

    #[test]
    fn detector_txt_errors_name_the_line() {
        let fmt = SceneFormat::DetectorTxt {
            width: 10,
            height: 10,
        };
        let err = parse_scene("1 0.5 0.5 0.1 0.1\n1 0.5 x 0.1 0.1\n", fmt, &classes()).unwrap_err();
        assert!(matches!(err, ParseError::Line { line: 2, .. }), "{err}");
        let err = parse_scene("11 0.5 0.5 0.1 0.1\n", fmt, &classes()).unwrap_err();
        assert!(matches!(err, ParseError::ClassIndex { line: 1, index: 11, .. }));
        let err = parse_scene("1 0.5 0.5\n", fmt, &classes()).unwrap_err();
        assert!(matches!(err, ParseError::Line { line: 1, .. }));
    }

    #[test]
    fn custom_class_list() {
        let list = ClassList::parse("apple\n\nbanana\n");
        assert_eq!(list.len(), 2);
        let scene = parse_scene(
            "1 0.5 0.5 0.2 0.2",
            SceneFormat::DetectorTxt {
                width: 10,
                height: 10,
            },
            &list,
        )
        .unwrap();
        assert_eq!(scene.detections()[0].id, "banana-0");
    }

    #[test]
    fn zero_area_after_clamp_is_an_error() {
        let text = r#"{"image":{"width":100,"height":100},"detections":[
            {"id":"x","class":"cup","confidence":0.9,"bbox":[120,10,150,20]}]}"#;
        let err = parse_scene(text, SceneFormat::SceneJson, &classes()).unwrap_err();
        assert!(matches!(err, ParseError::ZeroArea { ref id } if id == "x"));
    }

    #[test]
    fn out_of_frame_boxes_are_clamped() {
        let text = r#"{"image":{"width":100,"height":100},"detections":[
            {"id":"x","class":"cup","confidence":0.9,"bbox":[-5,90,20,130]}]}"#;
        let scene = parse_scene(text, SceneFormat::SceneJson, &classes()).unwrap();
        assert_eq!(scene.detections()[0].bbox.to_array(), [0.0, 90.0, 20.0, 100.0]);
    }

    #[test]
    fn scene_json_validation() {
        let dup = r#"{"image":{"width":100,"height":100},"detections":[
            {"id":"a","class":"cup","bbox":[0,0,5,5]},{"id":"a","class":"bowl","bbox":[0,0,5,5]}]}"#;
        assert!(matches!(
            parse_scene(dup, SceneFormat::SceneJson, &classes()),
            Err(ParseError::DuplicateId(_))
        ));
        let unknown = r#"{"image":{"width":100,"height":100},"detections":[
            {"class":"teapot","bbox":[0,0,5,5]}]}"#;
        assert!(matches!(
            parse_scene(unknown, SceneFormat::SceneJson, &classes()),
            Err(ParseError::UnknownClass(_))
        ));
        let conf = r#"{"image":{"width":100,"height":100},"detections":[
            {"class":"cup","confidence":1.5,"bbox":[0,0,5,5]}]}"#;
        assert!(parse_scene(conf, SceneFormat::SceneJson, &classes()).is_err());
        let inverted = r#"{"image":{"width":100,"height":100},"detections":[
            {"class":"cup","bbox":[5,0,0,5]}]}"#;
        assert!(parse_scene(inverted, SceneFormat::SceneJson, &classes()).is_err());
        assert!(parse_scene("{", SceneFormat::SceneJson, &classes()).is_err());
    }

    #[test]
    fn empty_scene_and_auto_ids() {
        let scene = parse_scene(
            r#"{"image":{"width":64,"height":48},"detections":[]}"#,
            SceneFormat::SceneJson,
            &classes(),
        )
        .unwrap();
        assert!(scene.detections().is_empty());
        let scene = parse_scene(
            r#"{"image":{"width":64,"height":48},"detections":[{"class":"fork","bbox":[1,1,4,4]}]}"#,
            SceneFormat::SceneJson,
            &classes(),
        )
        .unwrap();
        assert_eq!(scene.detections()[0].id, "fork-0");
    }

    #[test]
    fn single_detection_round_trip() {
        let text = r#"{"image":{"width":640,"height":480,"path":"a.png"},"detections":[
            {"id":"cup-0","class":"cup","confidence":0.8,"bbox":[240.5,180,400,300]}]}"#;
        let scene = parse_scene(text, SceneFormat::SceneJson, &classes()).unwrap();
        let out = serialize_scene(&scene);
        assert_eq!(parse_scene(&out, SceneFormat::SceneJson, &classes()).unwrap(), scene);
        assert_eq!(serialize_scene(&parse_scene(&out, SceneFormat::SceneJson, &classes()).unwrap()), out);
    }

    #[test]
    fn pair_dimensions_must_agree() {
        let a = Scene::new(10, 10, None, vec![]).unwrap();
        let b = Scene::new(10, 11, None, vec![]).unwrap();
        assert!(ScenePair::new(a.clone(), b).is_err());
        assert!(ScenePair::new(a.clone(), a).is_ok());
    }

    #[test]
    fn task_serialization() {
        assert_eq!(serialize_tasks(&[]), "{\n  \"tasks\": []\n}\n");
        let t = PickPlaceTask::new("spoon-0", "bowl-0", TaskKind::On, Method::Geometric);
        let text = serialize_tasks(std::slice::from_ref(&t));
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(
            v["tasks"][0],
            serde_json::json!({"picked":"spoon-0","target":"bowl-0","kind":"on","method":"geometric"})
        );
        assert_eq!(TasksDocument::from_json(&text).unwrap().tasks, vec![t]);
    }

    fn arb_task() -> impl Strategy<Value = PickPlaceTask> {
        (0..4u8, 0..4u8, 0..3u8).prop_filter_map("distinct", |(p, t, k)| {
            (p != t).then(|| {
                let kind = [TaskKind::In, TaskKind::On, TaskKind::Removed][k as usize];
                PickPlaceTask::new(format!("o{p}"), format!("o{t}"), kind, Method::Transition)
            })
        })
    }

    fn arb_scene() -> impl Strategy<Value = Scene> {
        let det = (0..11usize, 0.0..1.0f64, 0.0..90.0f64, 0.0..90.0f64, 0.5..40.0f64, 0.5..40.0f64);
        proptest::collection::vec(det, 0..6).prop_map(|dets| {
            let list = ClassList::default();
            let detections = dets
                .into_iter()
                .enumerate()
                .map(|(i, (c, conf, x, y, w, h))| {
                    Detection::new(
                        format!("d{i}"),
                        list.by_index(c).unwrap(),
                        conf,
                        BoundingBox::new(x, y, (x + w).min(100.0), (y + h).min(100.0)).unwrap(),
                    )
                })
                .collect();
            Scene::new(100, 100, None, detections).unwrap()
        })
    }

    proptest! {
        #[test]
        fn task_order_is_canonical(mut tasks in proptest::collection::vec(arb_task(), 0..8)) {
            let a = serialize_tasks(&tasks);
            tasks.reverse();
            prop_assert_eq!(a, serialize_tasks(&tasks));
        }

        #[test]
        fn scene_json_round_trip(scene in arb_scene()) {
            let text = serialize_scene(&scene);
            let back = parse_scene(&text, SceneFormat::SceneJson, &ClassList::default()).unwrap();
            prop_assert_eq!(&back, &scene);
        }
    }
}
