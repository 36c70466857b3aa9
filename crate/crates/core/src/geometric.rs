//! Movement-and-overlap task inference.
//!
//! Objects are put in correspondence across the two scenes, those whose
//! center moved more than a fraction of the image diagonal count as moved,
//! and every moved object whose final box overlaps another object's final
//! box above the IoU threshold forms a pick-and-place pair. The member that
//! travelled farther is taken as the picked object.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::assignment;
use crate::geometry::displacement;
use crate::scene::{Detection, Method, ObjectClass, PickPlaceTask, ScenePair, TaskKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MatchStrategy {
    #[default]
    Hungarian,
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeoConfig {
    /// Movement threshold as a fraction of the image diagonal.
    pub movement_threshold_frac: f64,
    pub iou_threshold: f64,
    pub same_class_matching: MatchStrategy,
}

impl Default for GeoConfig {
    fn default() -> Self {
        Self {
            movement_threshold_frac: 0.05,
            iou_threshold: 0.20,
            same_class_matching: MatchStrategy::Hungarian,
        }
    }
}

impl GeoConfig {
    pub fn validate(&self) -> Result<(), String> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !open_unit(self.movement_threshold_frac) {
            return Err(format!(
                "movement_threshold_frac must be in (0, 1), got {}",
                self.movement_threshold_frac
            ));
        }
        if !open_unit(self.iou_threshold) {
            return Err(format!("iou_threshold must be in (0, 1), got {}", self.iou_threshold));
        }
        Ok(())
    }

    pub fn movement_threshold_px(&self, pair: &ScenePair) -> f64 {
        self.movement_threshold_frac * pair.diagonal()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectMatch {
    pub initial_id: String,
    pub final_id: String,
    pub displacement_px: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Correspondence {
    pub matches: Vec<ObjectMatch>,
    /// Final-scene ids with no initial counterpart.
    pub appeared: Vec<String>,
    /// Initial-scene ids with no final counterpart.
    pub disappeared: Vec<String>,
}

impl Correspondence {
    pub fn final_to_initial(&self) -> HashMap<&str, &str> {
        self.matches
            .iter()
            .map(|m| (m.final_id.as_str(), m.initial_id.as_str()))
            .collect()
    }

    pub fn initial_to_final(&self) -> HashMap<&str, &str> {
        self.matches
            .iter()
            .map(|m| (m.initial_id.as_str(), m.final_id.as_str()))
            .collect()
    }
}

/// Per-class minimum-displacement correspondence between the two scenes.
pub fn match_objects(pair: &ScenePair, config: &GeoConfig) -> Correspondence {
    type Groups<'a> = BTreeMap<&'a ObjectClass, (Vec<&'a Detection>, Vec<&'a Detection>)>;
    let mut groups: Groups = BTreeMap::new();
    for d in pair.initial.detections() {
        groups.entry(&d.class).or_default().0.push(d);
    }
    for d in pair.final_.detections() {
        groups.entry(&d.class).or_default().1.push(d);
    }

    let mut out = Correspondence::default();
    for (initial, final_) in groups.values() {
        let cols = final_.len();
        let costs: Vec<f64> = initial
            .iter()
            .flat_map(|a| final_.iter().map(move |b| displacement(&a.bbox, &b.bbox)))
            .collect();
        let pairs = match config.same_class_matching {
            MatchStrategy::Hungarian => assignment::hungarian(&costs, initial.len(), cols),
            MatchStrategy::Greedy => assignment::greedy(&costs, initial.len(), cols),
        };
        let mut used_initial = vec![false; initial.len()];
        let mut used_final = vec![false; cols];
        for (r, c) in pairs {
            used_initial[r] = true;
            used_final[c] = true;
            out.matches.push(ObjectMatch {
                initial_id: initial[r].id.clone(),
                final_id: final_[c].id.clone(),
                displacement_px: costs[r * cols + c],
            });
        }
        out.disappeared.extend(
            initial
                .iter()
                .zip(&used_initial)
                .filter(|(_, used)| !**used)
                .map(|(d, _)| d.id.clone()),
        );
        out.appeared.extend(
            final_
                .iter()
                .zip(&used_final)
                .filter(|(_, used)| !**used)
                .map(|(d, _)| d.id.clone()),
        );
    }
    out.matches.sort_by(|a, b| a.initial_id.cmp(&b.initial_id));
    out.appeared.sort();
    out.disappeared.sort();
    out
}

/// Matches whose displacement strictly exceeds the movement threshold.
pub fn moved_objects(
    matches: &[ObjectMatch],
    pair: &ScenePair,
    config: &GeoConfig,
) -> Vec<ObjectMatch> {
    let threshold = config.movement_threshold_px(pair);
    matches
        .iter()
        .filter(|m| m.displacement_px > threshold)
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairOverlap {
    pub moved: String,
    pub other: String,
    pub final_iou: f64,
}

/// Everything the geometric method looked at, for `--debug` output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometricDiagnostics {
    pub movement_threshold_px: f64,
    pub iou_threshold: f64,
    pub correspondence: Correspondence,
    pub moved: Vec<String>,
    pub overlaps: Vec<PairOverlap>,
    pub tasks: Vec<PickPlaceTask>,
}

pub fn infer_tasks_geometric(pair: &ScenePair, config: &GeoConfig) -> Vec<PickPlaceTask> {
    infer_tasks_geometric_with_diagnostics(pair, config).tasks
}

/// Task ids refer to the initial scene.
pub fn infer_tasks_geometric_with_diagnostics(
    pair: &ScenePair,
    config: &GeoConfig,
) -> GeometricDiagnostics {
    let correspondence = match_objects(pair, config);
    let moved = moved_objects(&correspondence.matches, pair, config);
    let final_box = |m: &ObjectMatch| {
        pair.final_
            .get(&m.final_id)
            .expect("match refers to a final detection")
            .bbox
    };

    let mut overlaps = Vec::new();
    let mut candidate_pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
    let index_of: HashMap<&str, usize> = correspondence
        .matches
        .iter()
        .enumerate()
        .map(|(i, m)| (m.initial_id.as_str(), i))
        .collect();
    for m in &moved {
        let mi = index_of[m.initial_id.as_str()];
        let m_box = final_box(m);
        for (oi, other) in correspondence.matches.iter().enumerate() {
            if oi == mi {
                continue;
            }
            let v = m_box.iou(&final_box(other));
            if v > 0.0 {
                overlaps.push(PairOverlap {
                    moved: m.initial_id.clone(),
                    other: other.initial_id.clone(),
                    final_iou: v,
                });
            }
            if v > config.iou_threshold {
                candidate_pairs.insert((mi.min(oi), mi.max(oi)));
            }
        }
    }

    let mut tasks: Vec<PickPlaceTask> = candidate_pairs
        .into_iter()
        .map(|(i, j)| {
            let (a, b) = (&correspondence.matches[i], &correspondence.matches[j]);
            // Ties go to the lexicographically first id.
            let a_first = a.initial_id < b.initial_id;
            let a_picked = a.displacement_px > b.displacement_px
                || (a.displacement_px == b.displacement_px && a_first);
            let (picked, target) = if a_picked { (a, b) } else { (b, a) };
            PickPlaceTask::new(
                picked.initial_id.clone(),
                target.initial_id.clone(),
                TaskKind::On,
                Method::Geometric,
            )
        })
        .collect();
    tasks.sort();

    GeometricDiagnostics {
        movement_threshold_px: config.movement_threshold_px(pair),
        iou_threshold: config.iou_threshold,
        moved: moved.iter().map(|m| m.initial_id.clone()).collect(),
        correspondence,
        overlaps,
        tasks,
    }
}
