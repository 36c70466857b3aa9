//! Per-pair scoring of predicted task sets.
//!
//! Every pair in the evaluation universe gets a predicted and a true class:
//! 0 when its first object (canonical order) is placed in or on the second,
//! 1 for the opposite direction, 2 when there is no task. A removal counts
//! as the direction of its picked object.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::EvalError;
use crate::geometric::{match_objects, GeoConfig};
use crate::relation::{candidate_pairs, PairCandidate, RelationLabel, RelationRecord};
use crate::scene::{PickPlaceTask, ScenePair, TaskKind, TasksDocument};
use crate::transition::relation_table;

pub const NO_TASK: u8 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairOutcome {
    pub pair: PairCandidate,
    pub predicted: u8,
    pub truth: u8,
}

fn direction(task: &PickPlaceTask) -> (PairCandidate, u8) {
    let pair = PairCandidate::new(task.picked.clone(), task.target.clone());
    let class = if pair.a == task.picked { 0 } else { 1 };
    (pair, class)
}

fn classes(
    tasks: &[PickPlaceTask],
    universe: &BTreeSet<&PairCandidate>,
) -> Result<BTreeMap<PairCandidate, u8>, EvalError> {
    let mut out = BTreeMap::new();
    for t in tasks {
        let (pair, class) = direction(t);
        if !universe.contains(&pair) {
            return Err(EvalError::OutsideUniverse {
                picked: t.picked.clone(),
                target: t.target.clone(),
            });
        }
        if let Some(prev) = out.insert(pair.clone(), class) {
            if prev != class {
                return Err(EvalError::Conflict(pair.a, pair.b));
            }
        }
    }
    Ok(out)
}

/// One outcome per universe pair, in canonical pair order.
pub fn pair_outcomes(
    predicted: &[PickPlaceTask],
    truth: &[PickPlaceTask],
    universe: &[PairCandidate],
) -> Result<Vec<PairOutcome>, EvalError> {
    let set: BTreeSet<&PairCandidate> = universe.iter().collect();
    let pred = classes(predicted, &set)?;
    let want = classes(truth, &set)?;
    Ok(set
        .into_iter()
        .map(|p| PairOutcome {
            pair: p.clone(),
            predicted: pred.get(p).copied().unwrap_or(NO_TASK),
            truth: want.get(p).copied().unwrap_or(NO_TASK),
        })
        .collect())
}

/// Candidate pairs of both scenes (final ids mapped to initial ids) plus
/// the pairs of all truth tasks.
pub fn default_universe(pair: &ScenePair, truth: &[PickPlaceTask]) -> Vec<PairCandidate> {
    let corr = match_objects(pair, &GeoConfig::default());
    let to_initial = corr.final_to_initial();
    let mut set: BTreeSet<PairCandidate> = candidate_pairs(&pair.initial).into_iter().collect();
    for c in candidate_pairs(&pair.final_) {
        let a = to_initial.get(c.a.as_str()).copied().unwrap_or(&c.a);
        let b = to_initial.get(c.b.as_str()).copied().unwrap_or(&c.b);
        if a != b {
            set.insert(PairCandidate::new(a, b));
        }
    }
    set.extend(truth.iter().map(|t| direction(t).0));
    set.into_iter().collect()
}

/// Rows are true labels, columns predicted, both in [`RelationLabel::ALL`]
/// order. Pairs listed on only one side count as unrelated on the other.
pub fn relation_confusion(predicted: &[RelationRecord], truth: &[RelationRecord]) -> [[u64; 5]; 5] {
    let pred = relation_table(predicted);
    let want = relation_table(truth);
    let pairs: BTreeSet<&PairCandidate> = pred.keys().chain(want.keys()).collect();
    let mut m = [[0u64; 5]; 5];
    for p in pairs {
        let t = want.get(p).copied().unwrap_or(RelationLabel::Unrelated);
        let q = pred.get(p).copied().unwrap_or(RelationLabel::Unrelated);
        m[t.index()][q.index()] += 1;
    }
    m
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub correct: u64,
    pub total: u64,
}

impl Ratio {
    fn add(&mut self, ok: bool) {
        self.total += 1;
        self.correct += ok as u64;
    }

    fn merge(self, o: Ratio) -> Ratio {
        Ratio {
            correct: self.correct + o.correct,
            total: self.total + o.total,
        }
    }

    pub fn value(&self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }
}

/// Additive counts; merging is associative and commutative.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub n_scene_pairs: u64,
    pub confusion: [[u64; 3]; 3],
    pub relations: Option<[[u64; 5]; 5]>,
    pub direction: Ratio,
    pub in_on: Ratio,
    pub removal: Ratio,
}

impl Counts {
    pub fn from_outcomes(outcomes: &[PairOutcome]) -> Counts {
        let mut c = Counts::default();
        for o in outcomes {
            c.confusion[o.truth as usize][o.predicted as usize] += 1;
            if o.truth != NO_TASK {
                c.direction.add(o.predicted == o.truth);
            }
        }
        c
    }

    pub fn merge(self, o: Counts) -> Counts {
        let mut confusion = self.confusion;
        for (r, row) in o.confusion.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                confusion[r][k] += v;
            }
        }
        let relations = match (self.relations, o.relations) {
            (Some(mut a), Some(b)) => {
                for r in 0..5 {
                    for k in 0..5 {
                        a[r][k] += b[r][k];
                    }
                }
                Some(a)
            }
            (a, b) => a.or(b),
        };
        Counts {
            n_scene_pairs: self.n_scene_pairs + o.n_scene_pairs,
            confusion,
            relations,
            direction: self.direction.merge(o.direction),
            in_on: self.in_on.merge(o.in_on),
            removal: self.removal.merge(o.removal),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEvaluation {
    pub name: String,
    pub outcomes: Vec<PairOutcome>,
    #[serde(skip)]
    pub counts: Counts,
}

/// Scores one scene pair. Relation confusion is counted when both documents
/// carry relations.
pub fn evaluate_sample(
    name: impl Into<String>,
    predicted: &TasksDocument,
    truth: &TasksDocument,
    universe: &[PairCandidate],
) -> Result<SampleEvaluation, EvalError> {
    let outcomes = pair_outcomes(&predicted.tasks, &truth.tasks, universe)?;
    let mut counts = Counts::from_outcomes(&outcomes);
    counts.n_scene_pairs = 1;
    for t in &truth.tasks {
        let hit = |kind: TaskKind| {
            predicted
                .tasks
                .iter()
                .any(|p| p.picked == t.picked && p.target == t.target && p.kind == kind)
        };
        match t.kind {
            TaskKind::In | TaskKind::On => counts.in_on.add(hit(t.kind)),
            TaskKind::Removed => counts.removal.add(hit(TaskKind::Removed)),
        }
    }
    if let (Some(p), Some(t)) = (&predicted.relations, &truth.relations) {
        let a = relation_confusion(&p.initial, &t.initial);
        let b = relation_confusion(&p.final_, &t.final_);
        let mut m = a;
        for r in 0..5 {
            for k in 0..5 {
                m[r][k] += b[r][k];
            }
        }
        counts.relations = Some(m);
    }
    Ok(SampleEvaluation {
        name: name.into(),
        outcomes,
        counts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcomes {
    pub name: String,
    pub outcomes: Vec<PairOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n_scene_pairs: u64,
    pub n_pairs: u64,
    pub accuracy: f64,
    /// Rows are true classes, columns predicted.
    pub confusion_3x3: [[u64; 3]; 3],
    /// `None` where the denominator is zero.
    pub precision: [Option<f64>; 3],
    pub recall: [Option<f64>; 3],
    pub relation_confusion_5x5: Option<[[u64; 5]; 5]>,
    /// Pairs with a true task whose predicted class matches.
    pub direction_accuracy: Option<f64>,
    /// True in/on tasks predicted with the same objects and kind.
    pub in_on_accuracy: Option<f64>,
    /// True removals predicted with the same objects as removals.
    pub removal_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub samples: Vec<SampleOutcomes>,
}

impl EvaluationReport {
    pub fn from_counts(c: &Counts) -> Result<Self, EvalError> {
        let m = c.confusion;
        let total: u64 = m.iter().flatten().sum();
        if total == 0 {
            return Err(EvalError::Empty);
        }
        let trace: u64 = (0..3).map(|k| m[k][k]).sum();
        let ratio = |n: u64, d: u64| (d > 0).then(|| n as f64 / d as f64);
        let col = |k: usize| (0..3).map(|r| m[r][k]).sum::<u64>();
        let row = |k: usize| m[k].iter().sum::<u64>();
        Ok(Self {
            n_scene_pairs: c.n_scene_pairs,
            n_pairs: total,
            accuracy: trace as f64 / total as f64,
            confusion_3x3: m,
            precision: [0, 1, 2].map(|k| ratio(m[k][k], col(k))),
            recall: [0, 1, 2].map(|k| ratio(m[k][k], row(k))),
            relation_confusion_5x5: c.relations,
            direction_accuracy: c.direction.value(),
            in_on_accuracy: c.in_on.value(),
            removal_accuracy: c.removal.value(),
            samples: Vec::new(),
        })
    }

    /// Merges per-sample results in the given order.
    pub fn from_samples(samples: Vec<SampleEvaluation>) -> Result<Self, EvalError> {
        let counts = samples
            .iter()
            .fold(Counts::default(), |acc, s| acc.merge(s.counts.clone()));
        let mut report = Self::from_counts(&counts)?;
        report.samples = samples
            .into_iter()
            .map(|s| SampleOutcomes {
                name: s.name,
                outcomes: s.outcomes,
            })
            .collect();
        Ok(report)
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("report serializes");
        out.push('\n');
        out
    }
}

pub fn compute_report(outcomes: &[PairOutcome]) -> Result<EvaluationReport, EvalError> {
    let mut c = Counts::from_outcomes(outcomes);
    c.n_scene_pairs = 1;
    EvaluationReport::from_counts(&c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Method;
    use proptest::prelude::*;

    fn task(p: &str, t: &str) -> PickPlaceTask {
        PickPlaceTask::new(p, t, TaskKind::On, Method::Geometric)
    }

    fn outcome(predicted: u8, truth: u8, k: usize) -> PairOutcome {
        PairOutcome {
            pair: PairCandidate::new(format!("a{k}"), format!("b{k}")),
            predicted,
            truth,
        }
    }

    #[test]
    fn empty_lists_give_no_task_everywhere() {
        let u: Vec<_> = (0..4).map(|k| PairCandidate::new(format!("x{k}"), format!("y{k}"))).collect();
        let out = pair_outcomes(&[], &[], &u).unwrap();
        assert_eq!(out.len(), 4);
        assert!(out.iter().all(|o| (o.predicted, o.truth) == (2, 2)));
    }

    #[test]
    fn flipped_direction() {
        let u = vec![PairCandidate::new("bowl-0", "cup-0")];
        let out = pair_outcomes(&[task("cup-0", "bowl-0")], &[task("bowl-0", "cup-0")], &u).unwrap();
        assert_eq!((out[0].predicted, out[0].truth), (1, 0));
    }

    #[test]
    fn removal_counts_as_direction_of_picked() {
        let u = vec![PairCandidate::new("bowl-0", "cup-0")];
        let r = PickPlaceTask::new("cup-0", "bowl-0", TaskKind::Removed, Method::Truth);
        let out = pair_outcomes(&[], &[r], &u).unwrap();
        assert_eq!(out[0].truth, 1);
    }

    #[test]
    fn outside_universe_and_conflicts() {
        let u = vec![PairCandidate::new("bowl-0", "cup-0")];
        assert!(matches!(
            pair_outcomes(&[task("pan-0", "pot-0")], &[], &u),
            Err(EvalError::OutsideUniverse { .. })
        ));
        assert_eq!(
            pair_outcomes(&[task("bowl-0", "cup-0"), task("cup-0", "bowl-0")], &[], &u),
            Err(EvalError::Conflict("bowl-0".into(), "cup-0".into()))
        );
    }

    #[test]
    fn small_fixture() {
        // (predicted, truth): two hits on class 0, one class-0 pair predicted
        // as class 1, one correct negative.
        let r = compute_report(&[outcome(0, 0, 0), outcome(0, 0, 1), outcome(1, 0, 2), outcome(2, 2, 3)]).unwrap();
        assert_eq!(r.accuracy, 0.75);
        assert_eq!(r.precision[0], Some(1.0));
        assert_eq!(r.recall[0], Some(2.0 / 3.0));
        assert_eq!(r.precision[1], Some(0.0));
        assert_eq!(r.recall[1], None);
    }

    #[test]
    fn single_class_present() {
        let r = compute_report(&[outcome(2, 2, 0), outcome(2, 2, 1)]).unwrap();
        assert_eq!(r.precision, [None, None, Some(1.0)]);
        assert_eq!(r.recall, [None, None, Some(1.0)]);
        assert_eq!(compute_report(&[]), Err(EvalError::Empty));
    }

    #[test]
    fn relation_confusion_counts_union() {
        let rec = |a: &str, b: &str, label| RelationRecord {
            a: a.into(),
            b: b.into(),
            label,
        };
        let truth = vec![rec("a", "b", RelationLabel::AInB), rec("c", "d", RelationLabel::BOnA)];
        let pred = vec![rec("b", "a", RelationLabel::BInA), rec("e", "f", RelationLabel::AOnB)];
        let m = relation_confusion(&pred, &truth);
        assert_eq!(m[0][0], 1);
        assert_eq!(m[3][4], 1);
        assert_eq!(m[4][2], 1);
        assert_eq!(m.iter().flatten().sum::<u64>(), 3);
        let all_unrelated = relation_confusion(&[], &truth);
        assert!((0..5).all(|r| (0..4).all(|k| all_unrelated[r][k] == 0)));
    }

    fn arb_outcomes() -> impl Strategy<Value = Vec<PairOutcome>> {
        prop::collection::vec((0u8..3, 0u8..3), 1..40).prop_map(|v| {
            v.into_iter().enumerate().map(|(k, (p, t))| outcome(p, t, k)).collect()
        })
    }

    proptest! {
        #[test]
        fn marginals_reconcile(outcomes in arb_outcomes()) {
            let r = compute_report(&outcomes).unwrap();
            let m = r.confusion_3x3;
            for k in 0..3u8 {
                let truth = outcomes.iter().filter(|o| o.truth == k).count() as u64;
                let pred = outcomes.iter().filter(|o| o.predicted == k).count() as u64;
                prop_assert_eq!(m[k as usize].iter().sum::<u64>(), truth);
                prop_assert_eq!((0..3).map(|r| m[r][k as usize]).sum::<u64>(), pred);
            }
            prop_assert_eq!(r.n_pairs, outcomes.len() as u64);
            let trace = (0..3).map(|k| m[k][k]).sum::<u64>() as f64;
            prop_assert_eq!(r.accuracy, trace / outcomes.len() as f64);
        }

        #[test]
        fn merge_is_associative(a in arb_outcomes(), b in arb_outcomes(), c in arb_outcomes()) {
            let (a, b, c) = (Counts::from_outcomes(&a), Counts::from_outcomes(&b), Counts::from_outcomes(&c));
            prop_assert_eq!(a.clone().merge(b.clone()).merge(c.clone()), a.clone().merge(b.clone().merge(c.clone())));
            prop_assert_eq!(a.clone().merge(b.clone()), b.merge(a));
        }

        #[test]
        fn relabeling_canonical_order_is_symmetric(
            tasks in prop::collection::vec((0usize..4, any::<bool>(), any::<bool>()), 0..4)
        ) {
            // Renaming ids so every pair's canonical order flips swaps classes 0 and 1
            // in both lists and leaves accuracy unchanged.
            let ids = ["k0", "k1", "k2", "k3", "k4", "k5", "k6", "k7"];
            let flipped = ["k7", "k6", "k5", "k4", "k3", "k2", "k1", "k0"];
            let mut pred = Vec::new();
            let mut truth = Vec::new();
            let mut pairs = BTreeSet::new();
            for (slot, fwd, in_pred) in tasks {
                if !pairs.insert(slot) { continue; }
                let (x, y) = (2 * slot, 2 * slot + 1);
                let (p, t) = if fwd { (x, y) } else { (y, x) };
                truth.push((p, t));
                if in_pred { pred.push((p, t)); } else { pred.push((t, p)); }
            }
            let build = |names: &[&str; 8], list: &[(usize, usize)]| -> Vec<PickPlaceTask> {
                list.iter().map(|&(p, t)| task(names[p], names[t])).collect()
            };
            let universe = |names: &[&str; 8]| -> Vec<PairCandidate> {
                (0..4).map(|s| PairCandidate::new(names[2 * s], names[2 * s + 1])).collect()
            };
            let a = pair_outcomes(&build(&ids, &pred), &build(&ids, &truth), &universe(&ids)).unwrap();
            let b = pair_outcomes(&build(&flipped, &pred), &build(&flipped, &truth), &universe(&flipped)).unwrap();
            let swap = |c: u8| if c == 2 { 2 } else { 1 - c };
            let ra = compute_report(&a).unwrap();
            let rb = compute_report(&b).unwrap();
            prop_assert_eq!(ra.accuracy, rb.accuracy);
            for r in 0..3 {
                for k in 0..3 {
                    prop_assert_eq!(ra.confusion_3x3[r][k], rb.confusion_3x3[swap(r as u8) as usize][swap(k as u8) as usize]);
                }
            }
        }
    }
}
