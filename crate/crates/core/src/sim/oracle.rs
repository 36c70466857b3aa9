use std::collections::HashMap;

use crate::error::ClassifyError;
use crate::relation::{
    Classification, PairCandidate, RelationClassifier, RelationLabel, SceneRelations, SceneRole,
    SceneView,
};
use crate::scene::Detection;
use crate::transition::relation_table;

use super::ScenePairSample;

/// Classifier that answers from known relations. Unlisted pairs are
/// unrelated.
#[derive(Debug, Clone, Default)]
pub struct OracleClassifier {
    initial: HashMap<PairCandidate, RelationLabel>,
    final_: HashMap<PairCandidate, RelationLabel>,
}

impl OracleClassifier {
    pub fn from_truth(relations: &SceneRelations) -> Self {
        Self {
            initial: relation_table(&relations.initial),
            final_: relation_table(&relations.final_),
        }
    }

    pub fn from_sample(sample: &ScenePairSample) -> Self {
        Self::from_truth(&sample.truth_relations)
    }

    pub fn label(&self, role: SceneRole, a: &str, b: &str) -> RelationLabel {
        let table = match role {
            SceneRole::Initial => &self.initial,
            SceneRole::Final => &self.final_,
        };
        let pair = PairCandidate::new(a, b);
        let label = table.get(&pair).copied().unwrap_or(RelationLabel::Unrelated);
        if pair.a == a {
            label
        } else {
            label.swapped()
        }
    }
}

impl RelationClassifier for OracleClassifier {
    fn classify_batch(
        &mut self,
        view: &SceneView<'_>,
        pairs: &[(&Detection, &Detection)],
    ) -> Result<Vec<Classification>, ClassifyError> {
        pairs
            .iter()
            .map(|(a, b)| {
                for id in [&a.id, &b.id] {
                    if view.scene.get(id).is_none() {
                        return Err(ClassifyError::UnknownDetection(id.clone()));
                    }
                }
                Ok(Classification::label(self.label(view.role, &a.id, &b.id)))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relation::RelationRecord;

    #[test]
    fn answers_in_either_order() {
        let rel = SceneRelations {
            initial: vec![],
            final_: vec![RelationRecord {
                a: "spoon-0".into(),
                b: "cup-0".into(),
                label: RelationLabel::AInB,
            }],
        };
        let o = OracleClassifier::from_truth(&rel);
        assert_eq!(o.label(SceneRole::Final, "spoon-0", "cup-0"), RelationLabel::AInB);
        assert_eq!(o.label(SceneRole::Final, "cup-0", "spoon-0"), RelationLabel::BInA);
        assert_eq!(o.label(SceneRole::Initial, "cup-0", "spoon-0"), RelationLabel::Unrelated);
    }
}
