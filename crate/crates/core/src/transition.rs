//! Relation-transition task inference.
//!
//! Each candidate pair is labelled independently in the initial and final
//! scene. A pair whose label changes yields one task, decided by the final
//! label: a final in/on relation means its subject was placed there, and a
//! final "unrelated" means the initial subject was taken out.

use std::collections::{BTreeSet, HashMap};

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::ClassifyError;
use crate::geometric::{match_objects, Correspondence, GeoConfig};
use crate::relation::{
    candidate_pairs, PairCandidate, Placement, RelationClassifier, RelationLabel, RelationRecord,
    SceneRelations, SceneRole, SceneView, Side,
};
use crate::scene::{Detection, Method, PickPlaceTask, Scene, ScenePair, TaskKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairTransition {
    pub pair: PairCandidate,
    pub initial: RelationLabel,
    #[serde(rename = "final")]
    pub final_: RelationLabel,
}

/// Task implied by a label change on `pair`, or `None` when unchanged.
pub fn transition_task(
    pair: &PairCandidate,
    initial: RelationLabel,
    final_: RelationLabel,
) -> Option<PickPlaceTask> {
    if initial == final_ {
        return None;
    }
    let ids = |side: Side| match side {
        Side::A => (pair.a.clone(), pair.b.clone()),
        Side::B => (pair.b.clone(), pair.a.clone()),
    };
    let (side, kind) = match (final_.subject(), initial.subject()) {
        (Some((side, Placement::In)), _) => (side, TaskKind::In),
        (Some((side, Placement::On)), _) => (side, TaskKind::On),
        (None, Some((side, _))) => (side, TaskKind::Removed),
        (None, None) => unreachable!("labels differ"),
    };
    let (picked, target) = ids(side);
    Some(PickPlaceTask::new(picked, target, kind, Method::Transition))
}

/// Label for one ordered pair. Non-overlapping pairs are unrelated without
/// consulting the classifier.
pub fn relation_for_pair(
    view: &SceneView<'_>,
    a: &Detection,
    b: &Detection,
    classifier: &mut dyn RelationClassifier,
) -> Result<RelationLabel, ClassifyError> {
    if a.bbox.iou(&b.bbox) == 0.0 {
        return Ok(RelationLabel::Unrelated);
    }
    Ok(classifier.classify(view, a, b)?.label)
}

/// Batched form of [`relation_for_pair`]; overlapping pairs go to the
/// classifier in a single batch.
fn borrow(pairs: &[(Detection, Detection)]) -> Vec<(&Detection, &Detection)> {
    pairs.iter().map(|(a, b)| (a, b)).collect()
}

fn relations_for_pairs(
    view: &SceneView<'_>,
    pairs: &[(&Detection, &Detection)],
    classifier: &mut dyn RelationClassifier,
) -> Result<Vec<RelationLabel>, ClassifyError> {
    let mut labels = vec![RelationLabel::Unrelated; pairs.len()];
    let overlapping: Vec<usize> = (0..pairs.len())
        .filter(|&i| pairs[i].0.bbox.iou(&pairs[i].1.bbox) > 0.0)
        .collect();
    if overlapping.is_empty() {
        return Ok(labels);
    }
    let batch: Vec<_> = overlapping.iter().map(|&i| pairs[i]).collect();
    let results = classifier.classify_batch(view, &batch)?;
    if results.len() != batch.len() {
        return Err(ClassifyError::Input(format!(
            "classifier answered {} of {} pairs",
            results.len(),
            batch.len()
        )));
    }
    for (i, r) in overlapping.into_iter().zip(results) {
        labels[i] = r.label;
    }
    Ok(labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedPair {
    pub scene: SceneRole,
    pub pair: PairCandidate,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionOutcome {
    pub tasks: Vec<PickPlaceTask>,
    pub transitions: Vec<PairTransition>,
    /// Labels of every evaluated pair, keyed by initial-scene ids.
    pub relations: SceneRelations,
    pub skipped: Vec<SkippedPair>,
    pub correspondence: Correspondence,
}

/// Optional rasters for the two scenes.
#[derive(Debug, Clone, Copy, Default)]
pub struct SceneImages<'a> {
    pub initial: Option<&'a RgbImage>,
    pub final_: Option<&'a RgbImage>,
}

pub fn infer_tasks_transition(
    pair: &ScenePair,
    images: SceneImages<'_>,
    classifier: &mut dyn RelationClassifier,
    geo: &GeoConfig,
) -> Result<TransitionOutcome, ClassifyError> {
    let correspondence = match_objects(pair, geo);
    let to_final = correspondence.initial_to_final();
    let to_initial = correspondence.final_to_initial();

    let mut skipped = Vec::new();
    let mut universe: BTreeSet<PairCandidate> = BTreeSet::new();
    for c in candidate_pairs(&pair.initial) {
        if to_final.contains_key(c.a.as_str()) && to_final.contains_key(c.b.as_str()) {
            universe.insert(c);
        } else {
            skipped.push(SkippedPair {
                scene: SceneRole::Initial,
                reason: "member missing from the final scene".into(),
                pair: c,
            });
        }
    }
    for c in candidate_pairs(&pair.final_) {
        match (to_initial.get(c.a.as_str()), to_initial.get(c.b.as_str())) {
            (Some(a), Some(b)) => {
                universe.insert(PairCandidate::new(*a, *b));
            }
            _ => skipped.push(SkippedPair {
                scene: SceneRole::Final,
                reason: "member missing from the initial scene".into(),
                pair: c,
            }),
        }
    }
    let universe: Vec<PairCandidate> = universe.into_iter().collect();

    let lookup = |scene: &'_ Scene, id: &str| -> Detection {
        scene.get(id).expect("matched id exists").clone()
    };
    let initial_pairs: Vec<(Detection, Detection)> = universe
        .iter()
        .map(|c| (lookup(&pair.initial, &c.a), lookup(&pair.initial, &c.b)))
        .collect();
    let final_pairs: Vec<(Detection, Detection)> = universe
        .iter()
        .map(|c| {
            (
                lookup(&pair.final_, to_final[c.a.as_str()]),
                lookup(&pair.final_, to_final[c.b.as_str()]),
            )
        })
        .collect();

    let initial_view = SceneView {
        role: SceneRole::Initial,
        scene: &pair.initial,
        image: images.initial,
    };
    let final_view = SceneView {
        role: SceneRole::Final,
        scene: &pair.final_,
        image: images.final_,
    };
    let initial_labels = relations_for_pairs(&initial_view, &borrow(&initial_pairs), classifier)?;
    let final_labels = relations_for_pairs(&final_view, &borrow(&final_pairs), classifier)?;

    let mut tasks = Vec::new();
    let mut transitions = Vec::new();
    let mut relations = SceneRelations::default();
    for ((c, &init), &fin) in universe.iter().zip(&initial_labels).zip(&final_labels) {
        relations.initial.push(RelationRecord {
            a: c.a.clone(),
            b: c.b.clone(),
            label: init,
        });
        relations.final_.push(RelationRecord {
            a: c.a.clone(),
            b: c.b.clone(),
            label: fin,
        });
        if let Some(task) = transition_task(c, init, fin) {
            tasks.push(task);
            transitions.push(PairTransition {
                pair: c.clone(),
                initial: init,
                final_: fin,
            });
        }
    }
    tasks.sort();
    Ok(TransitionOutcome {
        tasks,
        transitions,
        relations,
        skipped,
        correspondence,
    })
}

/// Per-scene lookup table of known labels, for callers holding relation
/// sidecars.
pub fn relation_table(records: &[RelationRecord]) -> HashMap<PairCandidate, RelationLabel> {
    records
        .iter()
        .map(|r| {
            let c = PairCandidate::new(r.a.clone(), r.b.clone());
            let label = if c.a == r.a { r.label } else { r.label.swapped() };
            (c, label)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundingBox;
    use crate::relation::{Classification, HeuristicClassifier};
    use crate::scene::ClassList;
    use std::cell::Cell;
    use std::rc::Rc;

    use RelationLabel::*;

    fn pc() -> PairCandidate {
        PairCandidate::new("a", "b")
    }

    #[test]
    fn removal_from_container() {
        assert_eq!(
            transition_task(&pc(), AInB, Unrelated),
            Some(PickPlaceTask::new("a", "b", TaskKind::Removed, Method::Transition))
        );
    }

    #[test]
    fn unchanged_label_is_no_task() {
        assert_eq!(transition_task(&pc(), AOnB, AOnB), None);
    }

    #[test]
    fn final_label_decides_direction() {
        assert_eq!(
            transition_task(&pc(), Unrelated, BOnA),
            Some(PickPlaceTask::new("b", "a", TaskKind::On, Method::Transition))
        );
        assert_eq!(
            transition_task(&pc(), AOnB, BOnA),
            Some(PickPlaceTask::new("b", "a", TaskKind::On, Method::Transition))
        );
        assert_eq!(
            transition_task(&pc(), AInB, AOnB),
            Some(PickPlaceTask::new("a", "b", TaskKind::On, Method::Transition))
        );
    }

    #[test]
    fn transition_table_is_total_and_swap_consistent() {
        let mut tasks = 0;
        let mut noops = 0;
        let reversed = PairCandidate {
            a: "b".into(),
            b: "a".into(),
        };
        for init in RelationLabel::ALL {
            for fin in RelationLabel::ALL {
                let t = transition_task(&pc(), init, fin);
                match &t {
                    Some(task) => {
                        tasks += 1;
                        assert!(pc().contains(&task.picked) && pc().contains(&task.target));
                        assert_ne!(task.picked, task.target);
                    }
                    None => {
                        noops += 1;
                        assert_eq!(init, fin);
                    }
                }
                assert_eq!(t, transition_task(&reversed, init.swapped(), fin.swapped()));
            }
        }
        assert_eq!((tasks, noops), (20, 5));
    }

    struct Counting {
        inner: HeuristicClassifier,
        calls: Rc<Cell<usize>>,
    }

    impl RelationClassifier for Counting {
        fn classify_batch(
            &mut self,
            view: &SceneView<'_>,
            pairs: &[(&Detection, &Detection)],
        ) -> Result<Vec<Classification>, ClassifyError> {
            self.calls.set(self.calls.get() + pairs.len());
            self.inner.classify_batch(view, pairs)
        }
    }

    fn det(id: &str, class: &str, b: [f64; 4]) -> Detection {
        Detection::new(
            id,
            ClassList::default().lookup(class).unwrap(),
            1.0,
            BoundingBox::new(b[0], b[1], b[2], b[3]).unwrap(),
        )
    }

    #[test]
    fn disjoint_pairs_skip_the_classifier() {
        let scene = Scene::new(
            100,
            100,
            None,
            vec![det("a", "cup", [0.0, 0.0, 10.0, 10.0]), det("b", "bowl", [50.0, 50.0, 60.0, 60.0])],
        )
        .unwrap();
        let calls = Rc::new(Cell::new(0));
        let mut c = Counting {
            inner: HeuristicClassifier::default(),
            calls: calls.clone(),
        };
        let view = SceneView {
            role: SceneRole::Initial,
            scene: &scene,
            image: None,
        };
        let (a, b) = (&scene.detections()[0], &scene.detections()[1]);
        assert_eq!(relation_for_pair(&view, a, b, &mut c).unwrap(), Unrelated);
        assert_eq!(calls.get(), 0);

        let inner = det("s", "spoon", [2.0, 2.0, 4.0, 4.0]);
        assert_eq!(relation_for_pair(&view, &inner, a, &mut c).unwrap(), AInB);
        assert_eq!(calls.get(), 1);
    }

    #[test]
    fn heuristic_pipeline_detects_placement_and_removal() {
        let cup = [100.0, 100.0, 200.0, 200.0];
        let initial = Scene::new(
            640,
            480,
            None,
            vec![
                det("cup-0", "cup", cup),
                det("spoon-0", "spoon", [400.0, 100.0, 450.0, 150.0]),
                det("fork-0", "fork", [310.0, 310.0, 330.0, 350.0]),
                det("plate-0", "plate", [300.0, 300.0, 400.0, 400.0]),
            ],
        )
        .unwrap();
        let final_ = Scene::new(
            640,
            480,
            None,
            vec![
                det("cup-0", "cup", cup),
                det("spoon-0", "spoon", [120.0, 120.0, 170.0, 170.0]),
                det("fork-0", "fork", [500.0, 300.0, 520.0, 340.0]),
                det("plate-0", "plate", [300.0, 300.0, 400.0, 400.0]),
            ],
        )
        .unwrap();
        let pair = ScenePair::new(initial, final_).unwrap();
        let out = infer_tasks_transition(
            &pair,
            SceneImages::default(),
            &mut HeuristicClassifier::default(),
            &GeoConfig::default(),
        )
        .unwrap();
        assert_eq!(
            out.tasks,
            vec![
                PickPlaceTask::new("fork-0", "plate-0", TaskKind::Removed, Method::Transition),
                PickPlaceTask::new("spoon-0", "cup-0", TaskKind::In, Method::Transition),
            ]
        );
        assert_eq!(out.transitions.len(), 2);
        assert!(out.skipped.is_empty());
    }

    #[test]
    fn pairs_with_unmatched_members_are_skipped() {
        let initial = Scene::new(
            100,
            100,
            None,
            vec![det("cup-0", "cup", [0.0, 0.0, 50.0, 50.0]), det("spoon-0", "spoon", [10.0, 10.0, 20.0, 20.0])],
        )
        .unwrap();
        let final_ = Scene::new(100, 100, None, vec![det("cup-0", "cup", [0.0, 0.0, 50.0, 50.0])]).unwrap();
        let pair = ScenePair::new(initial, final_).unwrap();
        let out = infer_tasks_transition(
            &pair,
            SceneImages::default(),
            &mut HeuristicClassifier::default(),
            &GeoConfig::default(),
        )
        .unwrap();
        assert!(out.tasks.is_empty());
        assert_eq!(out.skipped.len(), 1);
        assert_eq!(out.skipped[0].scene, SceneRole::Initial);
    }

    #[test]
    fn relation_table_orients_records() {
        let t = relation_table(&[RelationRecord {
            a: "z".into(),
            b: "a".into(),
            label: AInB,
        }]);
        assert_eq!(t[&PairCandidate::new("a", "z")], BInA);
    }
}
