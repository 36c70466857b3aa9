//! Pairwise spatial relations between detections.
//!
//! A pair of detections whose boxes overlap is a candidate for a relation.
//! Relations are labelled over the ordered pair `(A, B)`, where A is the
//! lexicographically smaller id, so both scenes agree on which object is A.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::ClassifyError;
use crate::geometry::BoundingBox;
use crate::scene::{Detection, Scene};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelationLabel {
    #[serde(rename = "A_IN_B")]
    AInB,
    #[serde(rename = "B_IN_A")]
    BInA,
    #[serde(rename = "A_ON_B")]
    AOnB,
    #[serde(rename = "B_ON_A")]
    BOnA,
    #[serde(rename = "UNRELATED")]
    Unrelated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    In,
    On,
}

impl RelationLabel {
    /// Fixed label order used for score vectors and confusion matrices.
    pub const ALL: [RelationLabel; 5] = [
        RelationLabel::AInB,
        RelationLabel::BInA,
        RelationLabel::AOnB,
        RelationLabel::BOnA,
        RelationLabel::Unrelated,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RelationLabel::AInB => "A_IN_B",
            RelationLabel::BInA => "B_IN_A",
            RelationLabel::AOnB => "A_ON_B",
            RelationLabel::BOnA => "B_ON_A",
            RelationLabel::Unrelated => "UNRELATED",
        }
    }

    /// The label seen from the reversed pair `(B, A)`.
    pub fn swapped(self) -> RelationLabel {
        match self {
            RelationLabel::AInB => RelationLabel::BInA,
            RelationLabel::BInA => RelationLabel::AInB,
            RelationLabel::AOnB => RelationLabel::BOnA,
            RelationLabel::BOnA => RelationLabel::AOnB,
            RelationLabel::Unrelated => RelationLabel::Unrelated,
        }
    }

    /// Which member sits in/on the other, and how.
    pub fn subject(self) -> Option<(Side, Placement)> {
        match self {
            RelationLabel::AInB => Some((Side::A, Placement::In)),
            RelationLabel::BInA => Some((Side::B, Placement::In)),
            RelationLabel::AOnB => Some((Side::A, Placement::On)),
            RelationLabel::BOnA => Some((Side::B, Placement::On)),
            RelationLabel::Unrelated => None,
        }
    }

    pub fn from_subject(side: Side, placement: Placement) -> RelationLabel {
        match (side, placement) {
            (Side::A, Placement::In) => RelationLabel::AInB,
            (Side::B, Placement::In) => RelationLabel::BInA,
            (Side::A, Placement::On) => RelationLabel::AOnB,
            (Side::B, Placement::On) => RelationLabel::BOnA,
        }
    }
}

impl fmt::Display for RelationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RelationLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RelationLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown relation label '{s}'"))
    }
}

/// Unordered detection pair stored in canonical order (`a < b`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairCandidate {
    pub a: String,
    pub b: String,
}

impl PairCandidate {
    /// Canonical pair for two distinct ids, in either order.
    pub fn new(x: impl Into<String>, y: impl Into<String>) -> Self {
        let (x, y) = (x.into(), y.into());
        assert_ne!(x, y, "a pair needs two distinct ids");
        if x < y {
            Self { a: x, b: y }
        } else {
            Self { a: y, b: x }
        }
    }

    pub fn contains(&self, id: &str) -> bool {
        self.a == id || self.b == id
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationRecord {
    pub a: String,
    pub b: String,
    pub label: RelationLabel,
}

/// Relation labels for the listed pairs of both scenes. Unlisted pairs are
/// unrelated.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SceneRelations {
    pub initial: Vec<RelationRecord>,
    #[serde(rename = "final")]
    pub final_: Vec<RelationRecord>,
}

impl SceneRelations {
    pub fn sort(&mut self) {
        self.initial.sort();
        self.final_.sort();
    }

    pub fn for_role(&self, role: SceneRole) -> &[RelationRecord] {
        match role {
            SceneRole::Initial => &self.initial,
            SceneRole::Final => &self.final_,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneRole {
    Initial,
    Final,
}

impl SceneRole {
    pub fn as_str(self) -> &'static str {
        match self {
            SceneRole::Initial => "initial",
            SceneRole::Final => "final",
        }
    }
}

/// One scene as seen by a classifier.
#[derive(Debug, Clone, Copy)]
pub struct SceneView<'a> {
    pub role: SceneRole,
    pub scene: &'a Scene,
    pub image: Option<&'a RgbImage>,
}

/// A label plus optional per-class scores in [`RelationLabel::ALL`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub label: RelationLabel,
    pub scores: Option<[f64; 5]>,
}

impl Classification {
    pub fn label(label: RelationLabel) -> Self {
        Self {
            label,
            scores: None,
        }
    }

    /// Scores must sum to one within 1e-6 and peak at the label.
    pub fn with_scores(label: RelationLabel, scores: [f64; 5]) -> Result<Self, String> {
        let sum: f64 = scores.iter().sum();
        if scores.iter().any(|s| !s.is_finite() || *s < 0.0) || (sum - 1.0).abs() > 1e-6 {
            return Err(format!("scores {scores:?} do not form a distribution"));
        }
        let best = scores[label.index()];
        if scores.iter().any(|&s| s > best) {
            return Err(format!("label {label} is not the argmax of {scores:?}"));
        }
        Ok(Self {
            label,
            scores: Some(scores),
        })
    }
}

/// Labels ordered detection pairs within one scene. `pairs` are given as
/// `(A, B)`.
pub trait RelationClassifier {
    fn classify_batch(
        &mut self,
        view: &SceneView<'_>,
        pairs: &[(&Detection, &Detection)],
    ) -> Result<Vec<Classification>, ClassifyError>;

    fn classify(
        &mut self,
        view: &SceneView<'_>,
        a: &Detection,
        b: &Detection,
    ) -> Result<Classification, ClassifyError> {
        let mut out = self.classify_batch(view, &[(a, b)])?;
        out.pop()
            .ok_or_else(|| ClassifyError::Input("classifier returned no result".into()))
    }
}

/// Every unordered pair with non-zero IoU, canonical and sorted.
pub fn candidate_pairs(scene: &Scene) -> Vec<PairCandidate> {
    let dets = scene.detections();
    let mut out = Vec::new();
    for (i, x) in dets.iter().enumerate() {
        for y in &dets[i + 1..] {
            if x.bbox.iou(&y.bbox) > 0.0 {
                out.push(PairCandidate::new(x.id.clone(), y.id.clone()));
            }
        }
    }
    out.sort();
    out
}

/// Five-channel classifier input for an ordered pair: the RGB crop of the
/// union box plus one filled-box mask per object.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierInput {
    /// Top-left corner of the crop in image pixels.
    pub origin: (u32, u32),
    pub width: u32,
    pub height: u32,
    pub rgb: RgbImage,
    /// Row-major, one byte per pixel, values in {0, 1}.
    pub mask_a: Vec<u8>,
    pub mask_b: Vec<u8>,
    /// Boxes translated into crop coordinates.
    pub bbox_a: [f64; 4],
    pub bbox_b: [f64; 4],
}

impl ClassifierInput {
    /// Channel-major `[R, G, B, mask_a, mask_b]`, RGB scaled to [0, 1].
    pub fn to_channels(&self) -> Vec<f32> {
        let plane = (self.width * self.height) as usize;
        let mut out = vec![0.0f32; plane * 5];
        for (i, px) in self.rgb.pixels().enumerate() {
            for c in 0..3 {
                out[c * plane + i] = px[c] as f32 / 255.0;
            }
        }
        for i in 0..plane {
            out[3 * plane + i] = self.mask_a[i] as f32;
            out[4 * plane + i] = self.mask_b[i] as f32;
        }
        out
    }
}

/// Pixel `(x, y)` belongs to a box when its center does.
fn rasterize_mask(bbox: &BoundingBox, origin: (u32, u32), width: u32, height: u32) -> Vec<u8> {
    let mut mask = vec![0u8; (width * height) as usize];
    for y in 0..height {
        let cy = (origin.1 + y) as f64 + 0.5;
        if cy < bbox.y_min() || cy >= bbox.y_max() {
            continue;
        }
        for x in 0..width {
            let cx = (origin.0 + x) as f64 + 0.5;
            if cx >= bbox.x_min() && cx < bbox.x_max() {
                mask[(y * width + x) as usize] = 1;
            }
        }
    }
    mask
}

/// Crops the union box (rounded outward, clipped to the image) and builds
/// both masks in crop coordinates.
pub fn build_classifier_input(
    image: &RgbImage,
    a: &BoundingBox,
    b: &BoundingBox,
) -> Result<ClassifierInput, ClassifyError> {
    let union = a.union_box(b);
    let (iw, ih) = (image.width() as f64, image.height() as f64);
    let x0 = union.x_min().floor().clamp(0.0, iw);
    let y0 = union.y_min().floor().clamp(0.0, ih);
    let x1 = union.x_max().ceil().clamp(0.0, iw);
    let y1 = union.y_max().ceil().clamp(0.0, ih);
    if x1 - x0 < 2.0 || y1 - y0 < 2.0 {
        return Err(ClassifyError::Input(format!(
            "degenerate crop [{x0}, {y0}, {x1}, {y1}]"
        )));
    }
    let origin = (x0 as u32, y0 as u32);
    let (width, height) = ((x1 - x0) as u32, (y1 - y0) as u32);
    let rgb = image::imageops::crop_imm(image, origin.0, origin.1, width, height).to_image();
    let mask_a = rasterize_mask(a, origin, width, height);
    let mask_b = rasterize_mask(b, origin, width, height);
    if !mask_a.contains(&1) || !mask_b.contains(&1) {
        return Err(ClassifyError::Input(
            "a box covers no pixel centers inside the crop".into(),
        ));
    }
    let shift = |bb: &BoundingBox| {
        [
            bb.x_min() - x0,
            bb.y_min() - y0,
            bb.x_max() - x0,
            bb.y_max() - y0,
        ]
    };
    Ok(ClassifierInput {
        origin,
        width,
        height,
        rgb,
        mask_a,
        mask_b,
        bbox_a: shift(a),
        bbox_b: shift(b),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeuristicConfig {
    /// Below this covered fraction on both sides the pair is unrelated.
    pub relation_threshold: f64,
    /// Covered fraction of the subject at or above which it is "in".
    pub in_threshold: f64,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        Self {
            relation_threshold: 0.2,
            in_threshold: 0.9,
        }
    }
}

/// Geometry-only relation guess from box containment.
pub fn heuristic_classify_with(
    config: &HeuristicConfig,
    a: &Detection,
    b: &Detection,
) -> RelationLabel {
    let f_a = a.bbox.covered_fraction(&b.bbox);
    let f_b = b.bbox.covered_fraction(&a.bbox);
    if f_a.max(f_b) < config.relation_threshold {
        return RelationLabel::Unrelated;
    }
    let order = f_a
        .partial_cmp(&f_b)
        .unwrap_or(Ordering::Equal)
        .then_with(|| b.bbox.area().total_cmp(&a.bbox.area()))
        .then_with(|| b.id.cmp(&a.id));
    let (side, contained) = if order == Ordering::Greater {
        (Side::A, f_a)
    } else {
        (Side::B, f_b)
    };
    let placement = if contained >= config.in_threshold {
        Placement::In
    } else {
        Placement::On
    };
    RelationLabel::from_subject(side, placement)
}

pub fn heuristic_classify(a: &Detection, b: &Detection) -> RelationLabel {
    heuristic_classify_with(&HeuristicConfig::default(), a, b)
}

#[derive(Debug, Clone, Default)]
pub struct HeuristicClassifier {
    pub config: HeuristicConfig,
}

impl RelationClassifier for HeuristicClassifier {
    fn classify_batch(
        &mut self,
        _view: &SceneView<'_>,
        pairs: &[(&Detection, &Detection)],
    ) -> Result<Vec<Classification>, ClassifyError> {
        Ok(pairs
            .iter()
            .map(|(a, b)| Classification::label(heuristic_classify_with(&self.config, a, b)))
            .collect())
    }
}
