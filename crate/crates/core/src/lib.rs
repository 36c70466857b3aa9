//! Infers the pick-and-place tasks that turn an initial tabletop scene into
//! a final one, given object detections for both images.
//!
//! Two inference routes are provided:
//!
//! * [`geometric`] thresholds per-object movement and final-scene overlap and
//!   calls the farther-moving member of an overlapping pair the picked object.
//! * [`transition`] labels the spatial relation of every overlapping pair in
//!   both scenes and derives a task from each label change.
//!
//! [`sim`] generates synthetic scene pairs with ground truth, and [`eval`]
//! scores predictions per object pair.

pub mod assignment;
pub mod error;
pub mod eval;
pub mod exec;
pub mod geometric;
pub mod geometry;
pub mod io;
pub mod plugin;
pub mod relation;
pub mod render;
pub mod scene;
pub mod sim;
pub mod transition;

pub use error::{ClassifyError, EvalError, GeometryError, ParseError, SimError};
pub use exec::Execution;
pub use geometric::{infer_tasks_geometric, match_objects, moved_objects, GeoConfig};
pub use geometry::{BoundingBox, Point};
pub use relation::{
    candidate_pairs, heuristic_classify, HeuristicClassifier, PairCandidate, RelationClassifier,
    RelationLabel,
};
pub use scene::{
    ClassList, Detection, Method, ObjectClass, PickPlaceTask, Scene, ScenePair, TaskKind,
};
pub use transition::{infer_tasks_transition, SceneImages};
