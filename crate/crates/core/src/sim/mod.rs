//! Synthetic scene-pair generator with ground truth.
//!
//! A sample is planned first (objects, classes, tasks and their kinds) from
//! one random stream and then laid out geometrically from another, retrying
//! only the layout. Kinds therefore follow the configured mix exactly,
//! whatever the layout retries do. Both streams are derived from
//! `(seed, index)`, so samples are independent and reproducible.
//!
//! Relations are encoded geometrically:
//!
//! * in: the picked box lies strictly inside the target box;
//! * on: the picked box overlaps the target with a covered fraction in
//!   `[0.3, 0.9)`;
//! * every other pair of boxes is kept apart by a clearance gap, so it has
//!   zero IoU in both scenes.

mod adversarial;
mod dataset;
pub(crate) mod layout;
mod oracle;

pub use adversarial::{generate_adversarial_pair, TrapKind};
pub use dataset::{generate_dataset, DatasetOptions, Manifest, ManifestEntry};
pub use oracle::OracleClassifier;

use std::collections::{BTreeMap, HashMap, HashSet};

use image::RgbImage;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::geometric::GeoConfig;
use crate::geometry::{displacement, BoundingBox};
use crate::relation::{
    PairCandidate, Placement, RelationLabel, RelationRecord, SceneRelations, Side,
};
use crate::render::{render_scene, RenderStyle};
use crate::scene::{
    ClassList, Detection, Method, ObjectClass, PickPlaceTask, Scene, ScenePair, TaskKind,
    TasksDocument,
};
use layout::{clear_of, place_inside, place_on, uniform, Frame, OnWindow};

/// Inclusive integer range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountRange {
    pub min: u32,
    pub max: u32,
}

impl CountRange {
    pub fn new(min: u32, max: u32) -> Self {
        Self { min, max }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> u32 {
        rng.random_range(self.min..=self.max)
    }
}

/// Sampling weights for task kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KindMix {
    #[serde(rename = "in")]
    pub in_: f64,
    pub on: f64,
    pub removed: f64,
}

impl KindMix {
    pub fn probability(&self, kind: TaskKind) -> f64 {
        match kind {
            TaskKind::In => self.in_,
            TaskKind::On => self.on,
            TaskKind::Removed => self.removed,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> TaskKind {
        let u: f64 = rng.random();
        if u < self.in_ {
            TaskKind::In
        } else if u < self.in_ + self.on {
            TaskKind::On
        } else {
            TaskKind::Removed
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub image_width: u32,
    pub image_height: u32,
    pub n_objects: CountRange,
    pub n_tasks: CountRange,
    pub kind_mix: KindMix,
    /// Maximum per-axis shift of objects that are not picked.
    pub jitter_px: f64,
    /// Keep every task within reach of the default geometric thresholds.
    pub detectability: bool,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            image_width: 640,
            image_height: 480,
            n_objects: CountRange::new(3, 6),
            n_tasks: CountRange::new(1, 3),
            kind_mix: KindMix {
                in_: 0.4,
                on: 0.4,
                removed: 0.2,
            },
            jitter_px: 5.0,
            detectability: true,
            seed: 0,
        }
    }
}

/// Placements in detectability mode move the picked object more than this
/// multiple of the default movement threshold.
pub const DETECTABLE_MOVE_FACTOR: f64 = 2.0;
/// Minimum final IoU of a detectable placement.
pub const DETECTABLE_PLACEMENT_IOU: f64 = 0.4;
/// Covered-fraction window for "on".
pub const ON_COVERED: (f64, f64) = (0.3, 0.9);
const LAYOUT_ATTEMPTS: usize = 200;

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if self.image_width < 64 || self.image_height < 64 {
            return bad(format!(
                "image must be at least 64x64, got {}x{}",
                self.image_width, self.image_height
            ));
        }
        for (name, r) in [("n_objects", self.n_objects), ("n_tasks", self.n_tasks)] {
            if r.min > r.max {
                return bad(format!("{name}: min {} exceeds max {}", r.min, r.max));
            }
        }
        if self.n_objects.min < 1 {
            return bad("n_objects.min must be at least 1".into());
        }
        let m = self.kind_mix;
        let probs = [m.in_, m.on, m.removed];
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad(format!("kind_mix must be non-negative and sum to 1, got {probs:?}"));
        }
        if !(self.jitter_px >= 0.0 && self.jitter_px.is_finite()) {
            return bad(format!("jitter_px must be non-negative, got {}", self.jitter_px));
        }
        if self.detectability {
            if self.n_objects.max as usize > ClassList::default().len() {
                return bad("detectability needs distinct classes: at most 11 objects".into());
            }
            let threshold = self.movement_threshold_px();
            if self.jitter_px * std::f64::consts::SQRT_2 >= threshold {
                return bad(format!(
                    "jitter {} px reaches the movement threshold {threshold} px",
                    self.jitter_px
                ));
            }
        }
        Ok(())
    }

    pub fn diagonal(&self) -> f64 {
        (self.image_width as f64).hypot(self.image_height as f64)
    }

    /// Default geometric movement threshold for this frame size.
    pub fn movement_threshold_px(&self) -> f64 {
        GeoConfig::default().movement_threshold_frac * self.diagonal()
    }

    fn gap(&self) -> f64 {
        2.0 * self.jitter_px + 4.0
    }

    fn frame(&self) -> Frame {
        Frame {
            width: self.image_width as f64,
            height: self.image_height as f64,
            border: self.jitter_px + 1.0,
        }
    }

    /// Independent per-sample stream; `lane` separates planning from layout.
    pub(crate) fn rng(&self, index: u64, lane: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index.wrapping_mul(4).wrapping_add(lane));
        rng
    }
}

/// Generated scene pair with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenePairSample {
    pub index: u64,
    pub pair: ScenePair,
    pub truth_tasks: Vec<PickPlaceTask>,
    pub truth_relations: SceneRelations,
}

impl ScenePairSample {
    pub fn truth_document(&self) -> TasksDocument {
        TasksDocument {
            tasks: self.truth_tasks.clone(),
            relations: Some(self.truth_relations.clone()),
        }
    }

    pub fn render(&self, style: &RenderStyle) -> (RgbImage, RgbImage) {
        (
            render_scene(&self.pair.initial, style),
            render_scene(&self.pair.final_, style),
        )
    }

    pub fn oracle(&self) -> OracleClassifier {
        OracleClassifier::from_sample(self)
    }
}

/// Natural box size range `(w, h)` per class at 640x480, and whether the
/// object is elongated (randomly oriented).
fn class_size(class: &str) -> ((f64, f64), (f64, f64), bool) {
    match class {
        "bottle" => ((30.0, 45.0), (80.0, 110.0), false),
        "pan" => ((110.0, 150.0), (100.0, 130.0), false),
        "plate" => ((100.0, 130.0), (90.0, 120.0), false),
        "pot" => ((100.0, 130.0), (95.0, 125.0), false),
        "spoon" => ((50.0, 75.0), (14.0, 22.0), true),
        "whisk" => ((60.0, 85.0), (18.0, 26.0), true),
        "knife" => ((65.0, 90.0), (12.0, 18.0), true),
        "bowl" => ((80.0, 110.0), (75.0, 100.0), false),
        "cup" => ((50.0, 70.0), (50.0, 70.0), false),
        "cutting_board" => ((150.0, 190.0), (100.0, 130.0), false),
        "fork" => ((55.0, 80.0), (12.0, 20.0), true),
        _ => ((60.0, 100.0), (60.0, 100.0), false),
    }
}

pub(crate) fn natural_dims(cfg: &SimConfig, class: &ObjectClass, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let (wr, hr, elongated) = class_size(class.as_str());
    let sx = cfg.image_width as f64 / 640.0;
    let sy = cfg.image_height as f64 / 480.0;
    let (mut w, mut h) = (uniform(rng, wr) * sx, uniform(rng, hr) * sy);
    if elongated && rng.random_bool(0.5) {
        std::mem::swap(&mut w, &mut h);
    }
    (w, h)
}

#[derive(Debug, Clone)]
pub(crate) struct PlannedObject {
    pub id: String,
    pub class: ObjectClass,
    pub dims: (f64, f64),
}

#[derive(Debug, Clone, Copy)]
struct PlannedTask {
    picked: usize,
    target: usize,
    kind: TaskKind,
    /// How the pair is related before a removal.
    removed_from: Placement,
}

struct Plan {
    objects: Vec<PlannedObject>,
    tasks: Vec<PlannedTask>,
}

/// `<class>-<k>` ids, k counting per class.
pub(crate) fn make_objects(classes: Vec<ObjectClass>, dims: Vec<(f64, f64)>) -> Vec<PlannedObject> {
    let mut counters: BTreeMap<ObjectClass, usize> = BTreeMap::new();
    classes
        .into_iter()
        .zip(dims)
        .map(|(class, dims)| {
            let k = counters.entry(class.clone()).or_default();
            let id = format!("{class}-{k}");
            *k += 1;
            PlannedObject { id, class, dims }
        })
        .collect()
}

fn plan(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Plan {
    let list = ClassList::default();
    let all: Vec<ObjectClass> = list.iter().collect();
    let n = cfg.n_objects.sample(rng) as usize;
    let classes: Vec<ObjectClass> = if cfg.detectability {
        let mut pool = all.clone();
        pool.shuffle(rng);
        pool.truncate(n);
        pool
    } else {
        (0..n).map(|_| all[rng.random_range(0..all.len())].clone()).collect()
    };
    let dims = classes.iter().map(|c| natural_dims(cfg, c, rng)).collect();
    let objects = make_objects(classes, dims);

    let n_tasks = (cfg.n_tasks.sample(rng) as usize).min(n / 2);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let area = |i: usize| objects[i].dims.0 * objects[i].dims.1;
    let tasks = (0..n_tasks)
        .map(|t| {
            let (x, y) = (order[2 * t], order[2 * t + 1]);
            let (picked, target) = if area(x) <= area(y) { (x, y) } else { (y, x) };
            let kind = cfg.kind_mix.sample(rng);
            let removed_from = if rng.random_bool(0.5) {
                Placement::In
            } else {
                Placement::On
            };
            PlannedTask {
                picked,
                target,
                kind,
                removed_from,
            }
        })
        .collect();
    Plan { objects, tasks }
}

/// Picked box resting in/on `target`.
pub(crate) fn relate_to(
    rng: &mut ChaCha8Rng,
    cfg: &SimConfig,
    placement: Placement,
    target: &BoundingBox,
    natural: (f64, f64),
) -> Option<BoundingBox> {
    match placement {
        Placement::In => {
            let scale = if cfg.detectability {
                (0.68, 0.85)
            } else {
                (0.3, 0.85)
            };
            Some(place_inside(rng, target, scale))
        }
        Placement::On => {
            let (w, h, window) = if cfg.detectability {
                (
                    target.width() * uniform(rng, (0.75, 0.95)),
                    target.height() * uniform(rng, (0.75, 0.95)),
                    OnWindow {
                        covered: (0.45, 0.88),
                        min_iou: DETECTABLE_PLACEMENT_IOU + 0.02,
                    },
                )
            } else {
                let (mut w, mut h) = natural;
                let ratio = (w * h) / target.area();
                if ratio > 0.8 {
                    let s = (0.8 / ratio).sqrt();
                    w *= s;
                    h *= s;
                }
                (
                    w,
                    h,
                    OnWindow {
                        covered: (0.32, 0.88),
                        min_iou: 0.0,
                    },
                )
            };
            // Thin objects often cannot rest on each other at their natural
            // size; fall back to a shape proportional to the target.
            place_on(rng, target, w, h, window, 100).or_else(|| {
                let w = target.width() * uniform(rng, (0.5, 0.95));
                let h = target.height() * uniform(rng, (0.5, 0.95));
                place_on(rng, target, w, h, window, 100)
            })
        }
    }
}

pub(crate) fn jitter(rng: &mut ChaCha8Rng, cfg: &SimConfig, b: &BoundingBox) -> BoundingBox {
    let j = cfg.jitter_px;
    if j == 0.0 {
        return *b;
    }
    let frame = cfg.frame();
    // Keep the shifted box inside the frame's hard edge.
    let dx_lo = (-j).max(-b.x_min());
    let dx_hi = j.min(frame.width - b.x_max());
    let dy_lo = (-j).max(-b.y_min());
    let dy_hi = j.min(frame.height - b.y_max());
    b.translate(uniform(rng, (dx_lo, dx_hi)), uniform(rng, (dy_lo, dy_hi)))
}

pub(crate) fn relation_record(picked: &str, target: &str, placement: Placement) -> RelationRecord {
    let pair = PairCandidate::new(picked, target);
    let side = if pair.a == picked { Side::A } else { Side::B };
    RelationRecord {
        a: pair.a,
        b: pair.b,
        label: RelationLabel::from_subject(side, placement),
    }
}

pub(crate) fn build_sample(
    cfg: &SimConfig,
    index: u64,
    objects: &[PlannedObject],
    initial: &[BoundingBox],
    final_: &[BoundingBox],
    truth_tasks: Vec<PickPlaceTask>,
    mut truth_relations: SceneRelations,
) -> ScenePairSample {
    let scene = |boxes: &[BoundingBox]| {
        let dets = objects
            .iter()
            .zip(boxes)
            .map(|(o, b)| Detection::new(o.id.clone(), o.class.clone(), 1.0, *b))
            .collect();
        Scene::new(cfg.image_width, cfg.image_height, None, dets).expect("valid synthetic scene")
    };
    let pair = ScenePair::new(scene(initial), scene(final_)).expect("same frame");
    let mut truth_tasks = truth_tasks;
    truth_tasks.sort();
    truth_relations.sort();
    ScenePairSample {
        index,
        pair,
        truth_tasks,
        truth_relations,
    }
}

fn layout(
    cfg: &SimConfig,
    plan: &Plan,
    rng: &mut ChaCha8Rng,
    index: u64,
) -> Option<ScenePairSample> {
    let frame = cfg.frame();
    let gap = cfg.gap();
    let n = plan.objects.len();
    let min_move = DETECTABLE_MOVE_FACTOR * cfg.movement_threshold_px() + 1.0;

    // Initial scene: removal pairs start related and are placed as a unit.
    let mut partner: HashMap<usize, &PlannedTask> = HashMap::new();
    for t in plan.tasks.iter().filter(|t| t.kind == TaskKind::Removed) {
        partner.insert(t.target, t);
    }
    let removed_picked: HashSet<usize> = partner.values().map(|t| t.picked).collect();
    let mut units: Vec<usize> = (0..n).filter(|i| !removed_picked.contains(i)).collect();
    let dims = |i: usize| plan.objects[i].dims;
    units.sort_by(|&a, &b| {
        let area = |i: usize| dims(i).0 * dims(i).1;
        area(b).total_cmp(&area(a)).then(a.cmp(&b))
    });

    let mut initial: Vec<Option<BoundingBox>> = vec![None; n];
    for &u in &units {
        let mut placed = false;
        for _ in 0..60 {
            let (w, h) = dims(u);
            let base = frame.random_box(rng, w, h)?;
            let mut unit = vec![(u, base)];
            if let Some(t) = partner.get(&u) {
                let Some(p) = relate_to(rng, cfg, t.removed_from, &base, dims(t.picked)) else {
                    continue;
                };
                unit.push((t.picked, p));
            }
            let fits = unit.iter().all(|(_, b)| {
                frame.holds(b) && clear_of(b, gap, initial.iter().flatten())
            });
            if fits {
                for (i, b) in unit {
                    initial[i] = Some(b);
                }
                placed = true;
                break;
            }
        }
        if !placed {
            return None;
        }
    }
    let initial: Vec<BoundingBox> = initial.into_iter().map(|b| b.expect("placed")).collect();

    // Final scene: everything not picked is jittered, then picked objects move.
    let picked: HashSet<usize> = plan.tasks.iter().map(|t| t.picked).collect();
    let mut final_: Vec<Option<BoundingBox>> = (0..n)
        .map(|i| (!picked.contains(&i)).then(|| jitter(rng, cfg, &initial[i])))
        .collect();

    let mut tasks_sorted = plan.tasks.clone();
    tasks_sorted.sort_by_key(|t| t.kind == TaskKind::Removed);
    let mut relations = SceneRelations::default();
    let mut truth = Vec::new();
    for t in &tasks_sorted {
        let (pid, tid) = (&plan.objects[t.picked].id, &plan.objects[t.target].id);
        let target_final = final_[t.target].expect("targets are never picked");
        let mut chosen = None;
        for _ in 0..60 {
            let candidate = match t.kind {
                TaskKind::In => relate_to(rng, cfg, Placement::In, &target_final, dims(t.picked)),
                TaskKind::On => relate_to(rng, cfg, Placement::On, &target_final, dims(t.picked)),
                TaskKind::Removed => {
                    let b = initial[t.picked];
                    frame.random_box(rng, b.width(), b.height())
                }
            };
            let Some(b) = candidate else { continue };
            let others = final_
                .iter()
                .enumerate()
                .filter(|(i, _)| t.kind == TaskKind::Removed || *i != t.target)
                .filter_map(|(_, b)| b.as_ref());
            if !frame.holds(&b) || !clear_of(&b, gap, others) {
                continue;
            }
            if cfg.detectability && displacement(&initial[t.picked], &b) <= min_move {
                continue;
            }
            chosen = Some(b);
            break;
        }
        final_[t.picked] = Some(chosen?);
        match t.kind {
            TaskKind::In => relations.final_.push(relation_record(pid, tid, Placement::In)),
            TaskKind::On => relations.final_.push(relation_record(pid, tid, Placement::On)),
            TaskKind::Removed => relations
                .initial
                .push(relation_record(pid, tid, t.removed_from)),
        }
        truth.push(PickPlaceTask::new(pid.clone(), tid.clone(), t.kind, Method::Truth));
    }
    let final_: Vec<BoundingBox> = final_.into_iter().map(|b| b.expect("placed")).collect();
    Some(build_sample(
        cfg,
        index,
        &plan.objects,
        &initial,
        &final_,
        truth,
        relations,
    ))
}

/// Sample `index` of the stream defined by `config.seed`.
pub fn generate_scene_pair(config: &SimConfig, index: u64) -> Result<ScenePairSample, SimError> {
    config.validate()?;
    let plan = plan(config, &mut config.rng(index, 0));
    let mut rng = config.rng(index, 1);
    for _ in 0..LAYOUT_ATTEMPTS {
        if let Some(sample) = layout(config, &plan, &mut rng, index) {
            if verify_sample(&sample, config).is_ok() {
                return Ok(sample);
            }
        }
    }
    Err(SimError::Placement {
        index,
        attempts: LAYOUT_ATTEMPTS,
    })
}

/// Checks that a sample's ground truth is readable from its boxes alone:
/// listed relations hold geometrically, unlisted pairs do not overlap, and in
/// detectability mode every task clears the geometric thresholds.
pub fn verify_sample(sample: &ScenePairSample, cfg: &SimConfig) -> Result<(), String> {
    let pair = &sample.pair;
    for (scene, records) in [
        (&pair.initial, &sample.truth_relations.initial),
        (&pair.final_, &sample.truth_relations.final_),
    ] {
        let listed: HashSet<PairCandidate> = records
            .iter()
            .map(|r| PairCandidate::new(r.a.clone(), r.b.clone()))
            .collect();
        for r in records {
            let (a, b) = match (scene.get(&r.a), scene.get(&r.b)) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(format!("relation names unknown ids {}/{}", r.a, r.b)),
            };
            let (subject, object, placement) = match r.label.subject() {
                Some((Side::A, p)) => (a, b, p),
                Some((Side::B, p)) => (b, a, p),
                None => continue,
            };
            match placement {
                Placement::In => {
                    if !object.bbox.strictly_contains(&subject.bbox) {
                        return Err(format!("{} not strictly inside {}", subject.id, object.id));
                    }
                }
                Placement::On => {
                    let f = subject.bbox.covered_fraction(&object.bbox);
                    if !(0.2..0.9).contains(&f) || object.bbox.contains(&subject.bbox) {
                        return Err(format!("{} on {}: covered fraction {f}", subject.id, object.id));
                    }
                }
            }
        }
        let dets = scene.detections();
        for (i, x) in dets.iter().enumerate() {
            for y in &dets[i + 1..] {
                let c = PairCandidate::new(x.id.clone(), y.id.clone());
                if !listed.contains(&c) && x.bbox.iou(&y.bbox) > 0.0 {
                    return Err(format!("unlisted pair {}/{} overlaps", c.a, c.b));
                }
            }
        }
    }

    let mut participants = HashSet::new();
    for t in &sample.truth_tasks {
        if !participants.insert(t.picked.clone()) || !participants.insert(t.target.clone()) {
            return Err(format!("object in more than one task: {t:?}"));
        }
        let fin = |id: &str| pair.final_.get(id).map(|d| d.bbox);
        let ini = |id: &str| pair.initial.get(id).map(|d| d.bbox);
        let (Some(p0), Some(p1), Some(t1)) = (ini(&t.picked), fin(&t.picked), fin(&t.target)) else {
            return Err(format!("task names unknown ids: {t:?}"));
        };
        if t.kind == TaskKind::Removed && p1.iou(&t1) != 0.0 {
            return Err(format!("removed {} still overlaps {}", t.picked, t.target));
        }
        if cfg.detectability {
            let thr = cfg.movement_threshold_px();
            if displacement(&p0, &p1) <= DETECTABLE_MOVE_FACTOR * thr {
                return Err(format!("{} moves too little", t.picked));
            }
            if t.kind != TaskKind::Removed && p1.iou(&t1) <= DETECTABLE_PLACEMENT_IOU {
                return Err(format!("placement of {} has IoU {}", t.picked, p1.iou(&t1)));
            }
        }
    }
    if cfg.detectability {
        let thr = cfg.movement_threshold_px();
        let mut seen = HashSet::new();
        for d in pair.initial.detections() {
            if !seen.insert(d.class.clone()) && participants.contains(&d.id) {
                return Err(format!("duplicate class among participants: {}", d.class));
            }
        }
        let picked: HashSet<&str> = sample.truth_tasks.iter().map(|t| t.picked.as_str()).collect();
        for d in pair.initial.detections() {
            if picked.contains(d.id.as_str()) {
                continue;
            }
            let f = pair.final_.get(&d.id).ok_or("object vanished")?;
            if displacement(&d.bbox, &f.bbox) >= thr {
                return Err(format!("{} jittered past the movement threshold", d.id));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometric::infer_tasks_geometric;

    #[test]
    fn same_seed_and_index_reproduce() {
        let cfg = SimConfig {
            seed: 11,
            ..SimConfig::default()
        };
        for i in 0..20 {
            assert_eq!(generate_scene_pair(&cfg, i).unwrap(), generate_scene_pair(&cfg, i).unwrap());
        }
        assert_ne!(
            generate_scene_pair(&cfg, 0).unwrap().pair,
            generate_scene_pair(&cfg, 1).unwrap().pair
        );
    }

    #[test]
    fn zero_tasks_only_jitter() {
        let cfg = SimConfig {
            n_tasks: CountRange::new(0, 0),
            ..SimConfig::default()
        };
        for i in 0..20 {
            let s = generate_scene_pair(&cfg, i).unwrap();
            assert!(s.truth_tasks.is_empty());
            for (a, b) in s.pair.initial.detections().iter().zip(s.pair.final_.detections()) {
                assert_eq!(a.id, b.id);
                let (da, db) = (a.bbox.to_array(), b.bbox.to_array());
                assert!((0..4).all(|k| (da[k] - db[k]).abs() <= cfg.jitter_px + 1e-9));
                assert!((a.bbox.width() - b.bbox.width()).abs() < 1e-9);
            }
        }
    }

    /// Re-applies each truth task to the initial boxes and checks the final
    /// scene against the result.
    fn replay(sample: &ScenePairSample, cfg: &SimConfig) {
        let init = &sample.pair.initial;
        let fin = &sample.pair.final_;
        let picked: HashMap<&str, &PickPlaceTask> =
            sample.truth_tasks.iter().map(|t| (t.picked.as_str(), t)).collect();
        for d in init.detections() {
            let f = fin.get(&d.id).unwrap().bbox;
            match picked.get(d.id.as_str()) {
                None => {
                    let (a, b) = (d.bbox.to_array(), f.to_array());
                    assert!((0..4).all(|k| (a[k] - b[k]).abs() <= cfg.jitter_px + 1e-9), "{}", d.id);
                }
                Some(t) => {
                    let target = fin.get(&t.target).unwrap().bbox;
                    match t.kind {
                        TaskKind::In => assert!(target.strictly_contains(&f)),
                        TaskKind::On => {
                            let c = f.covered_fraction(&target);
                            assert!((ON_COVERED.0..ON_COVERED.1).contains(&c), "{c}");
                        }
                        TaskKind::Removed => {
                            assert_eq!(f.iou(&target), 0.0);
                            assert!(init.get(&t.target).unwrap().bbox.intersection_area(&d.bbox) > 0.0);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn replay_matches_final_scene() {
        for detectability in [true, false] {
            let cfg = SimConfig {
                detectability,
                seed: 5,
                ..SimConfig::default()
            };
            for i in 0..200 {
                let s = generate_scene_pair(&cfg, i).unwrap();
                verify_sample(&s, &cfg).unwrap();
                replay(&s, &cfg);
            }
        }
    }

    #[test]
    fn detectable_placements_are_found_geometrically() {
        let cfg = SimConfig {
            kind_mix: KindMix {
                in_: 0.5,
                on: 0.5,
                removed: 0.0,
            },
            seed: 9,
            ..SimConfig::default()
        };
        for i in 0..100 {
            let s = generate_scene_pair(&cfg, i).unwrap();
            let got: Vec<_> = infer_tasks_geometric(&s.pair, &GeoConfig::default())
                .into_iter()
                .map(|t| (t.picked, t.target))
                .collect();
            let want: Vec<_> = s.truth_tasks.iter().map(|t| (t.picked.clone(), t.target.clone())).collect();
            assert_eq!(got, want, "sample {i}");
        }
    }

    #[test]
    fn task_kind_frequencies_follow_mix() {
        let cfg = SimConfig {
            seed: 21,
            ..SimConfig::default()
        };
        let samples = crate::exec::map_indices(1000, crate::exec::Execution::default(), |i| {
            generate_scene_pair(&cfg, i).unwrap()
        });
        let mut counts: BTreeMap<TaskKind, f64> = BTreeMap::new();
        for s in &samples {
            for t in &s.truth_tasks {
                *counts.entry(t.kind).or_default() += 1.0;
            }
        }
        let total: f64 = counts.values().sum();
        for kind in [TaskKind::In, TaskKind::On, TaskKind::Removed] {
            let p = cfg.kind_mix.probability(kind);
            let expected = total * p;
            let sigma = (total * p * (1.0 - p)).sqrt();
            let got = counts.get(&kind).copied().unwrap_or(0.0);
            assert!((got - expected).abs() <= 3.0 * sigma, "{kind:?}: {got} vs {expected} ± {sigma}");
        }
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::default().validate().is_ok());
        let bad_mix = SimConfig {
            kind_mix: KindMix {
                in_: 0.5,
                on: 0.5,
                removed: 0.5,
            },
            ..SimConfig::default()
        };
        assert!(bad_mix.validate().is_err());
        let loud_jitter = SimConfig {
            jitter_px: 30.0,
            ..SimConfig::default()
        };
        assert!(loud_jitter.validate().is_err());
        let inverted = SimConfig {
            n_tasks: CountRange::new(3, 1),
            ..SimConfig::default()
        };
        assert!(inverted.validate().is_err());
    }

    #[test]
    fn crowded_scene_reports_placement_failure() {
        let cfg = SimConfig {
            n_objects: CountRange::new(11, 11),
            detectability: false,
            jitter_px: 60.0,
            ..SimConfig::default()
        };
        assert!(matches!(generate_scene_pair(&cfg, 0), Err(SimError::Placement { .. })));
    }
}
