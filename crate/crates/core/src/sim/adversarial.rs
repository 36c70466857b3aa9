//! Scene pairs built around the known weak spots of displacement-based
//! inference. Each sample holds one ordinary detectable placement, one trap
//! and a distractor:
//!
//! * direction: a cutting board slides under a plate that barely moves;
//! * sub-threshold: a small utensil shifts less than the movement threshold
//!   from beside a large object onto its edge;
//! * removal: an object is taken out of, or off, another one.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::geometry::{displacement, BoundingBox};
use crate::relation::{Placement, SceneRelations};
use crate::scene::{ClassList, Method, ObjectClass, PickPlaceTask, TaskKind};

use super::layout::{clear_of, uniform};
use super::{
    build_sample, jitter, make_objects, natural_dims, relate_to, relation_record, verify_sample,
    ScenePairSample, SimConfig, DETECTABLE_MOVE_FACTOR, LAYOUT_ATTEMPTS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrapKind {
    Direction,
    SubThreshold,
    Removed,
}

impl TrapKind {
    pub fn for_index(index: u64) -> TrapKind {
        match index % 3 {
            0 => TrapKind::Direction,
            1 => TrapKind::SubThreshold,
            _ => TrapKind::Removed,
        }
    }
}

fn pick_class(rng: &mut ChaCha8Rng, from: &[&str], used: &mut Vec<String>) -> ObjectClass {
    let free: Vec<&str> = from.iter().copied().filter(|c| !used.iter().any(|u| u == c)).collect();
    let c = free.choose(rng).expect("class pool not exhausted").to_string();
    used.push(c.clone());
    ObjectClass::from(c)
}

const BIG: [&str; 5] = ["cutting_board", "pan", "pot", "plate", "bowl"];
const UTENSILS: [&str; 4] = ["spoon", "fork", "knife", "whisk"];

/// Object slots: 0 trap picked, 1 trap target, 2 regular picked, 3 regular
/// target, 4 distractor.
fn classes(rng: &mut ChaCha8Rng, trap: TrapKind) -> Vec<ObjectClass> {
    let mut used = Vec::new();
    let (picked, target) = match trap {
        TrapKind::Direction => {
            let p = pick_class(rng, &["plate", "bowl", "pan"], &mut used);
            (p, pick_class(rng, &["cutting_board"], &mut used))
        }
        TrapKind::SubThreshold => {
            let t = pick_class(rng, &["cutting_board", "pan", "pot", "plate"], &mut used);
            (pick_class(rng, &UTENSILS, &mut used), t)
        }
        TrapKind::Removed => {
            let t = pick_class(rng, &BIG, &mut used);
            (pick_class(rng, &["cup", "spoon", "fork", "knife", "whisk"], &mut used), t)
        }
    };
    let mut rest: Vec<String> = ClassList::default()
        .iter()
        .map(|c| c.as_str().to_string())
        .filter(|c| !used.contains(c))
        .collect();
    rest.shuffle(rng);
    let mut out = vec![picked, target];
    out.extend(rest.into_iter().take(3).map(ObjectClass::from));
    out
}

struct Canvas<'a> {
    cfg: &'a SimConfig,
    initial: Vec<Option<BoundingBox>>,
    final_: Vec<Option<BoundingBox>>,
}

impl Canvas<'_> {
    /// `b` fits the frame and keeps the clearance gap to every placed box of
    /// the scene except `except`.
    fn fits(&self, final_scene: bool, b: &BoundingBox, except: &[usize]) -> bool {
        let scene = if final_scene { &self.final_ } else { &self.initial };
        let others = scene
            .iter()
            .enumerate()
            .filter(|(i, _)| !except.contains(i))
            .filter_map(|(_, b)| b.as_ref());
        self.cfg.frame().holds(b) && clear_of(b, self.cfg.gap(), others)
    }

    fn random_free(&self, rng: &mut ChaCha8Rng, final_scene: bool, w: f64, h: f64) -> Option<BoundingBox> {
        (0..60).find_map(|_| {
            self.cfg
                .frame()
                .random_box(rng, w, h)
                .filter(|b| self.fits(final_scene, b, &[]))
        })
    }
}

fn direction_trap(rng: &mut ChaCha8Rng, c: &mut Canvas, dims: &[(f64, f64)]) -> Option<()> {
    let thr = c.cfg.movement_threshold_px();
    let plate0 = c.random_free(rng, false, dims[0].0, dims[0].1)?;
    let plate1 = jitter(rng, c.cfg, &plate0);
    let (bw, bh) = dims[1];
    for _ in 0..200 {
        let p = plate1.center();
        let board1 = BoundingBox::from_center(
            p.x + uniform(rng, (-bw / 2.0, bw / 2.0)),
            p.y + uniform(rng, (-bh / 2.0, bh / 2.0)),
            bw,
            bh,
        )
        .ok()?;
        let covered = plate1.covered_fraction(&board1);
        if !(0.45..0.88).contains(&covered) || plate1.iou(&board1) <= 0.22 {
            continue;
        }
        let angle = uniform(rng, (0.0, std::f64::consts::TAU));
        let d = uniform(rng, (DETECTABLE_MOVE_FACTOR * thr + 1.0, 2.5 * thr));
        let board0 = board1.translate(-d * angle.cos(), -d * angle.sin());
        c.initial[0] = Some(plate0);
        if c.fits(false, &board0, &[]) && c.fits(true, &board1, &[0]) {
            c.initial[1] = Some(board0);
            c.final_[0] = Some(plate1);
            c.final_[1] = Some(board1);
            return Some(());
        }
        c.initial[0] = None;
    }
    None
}

fn sub_threshold_trap(rng: &mut ChaCha8Rng, c: &mut Canvas, dims: &[(f64, f64)]) -> Option<()> {
    let target = c.random_free(rng, false, dims[1].0, dims[1].1)?;
    let (long, short) = (dims[0].0.max(dims[0].1), dims[0].0.min(dims[0].1));
    let f = uniform(rng, (0.35, 0.6));
    let g = uniform(rng, (2.0, 6.0));
    let horizontal = rng.random_bool(0.5);
    let (span_lo, span_hi) = if horizontal {
        (target.x_min(), target.x_max())
    } else {
        (target.y_min(), target.y_max())
    };
    if span_hi - span_lo < long + 4.0 {
        return None;
    }
    let along = uniform(rng, (span_lo + 2.0, span_hi - 2.0 - long));
    let before = rng.random_bool(0.5);
    // Offsets across the edge: final straddles it, initial sits `g` outside.
    let (edge, sign) = match (horizontal, before) {
        (true, true) => (target.y_min(), -1.0),
        (true, false) => (target.y_max(), 1.0),
        (false, true) => (target.x_min(), -1.0),
        (false, false) => (target.x_max(), 1.0),
    };
    let across = |inside: f64| {
        // Span of the utensil across the edge with `inside` of it overlapping.
        let near = edge - sign * inside;
        let far = near + sign * short;
        (near.min(far), near.max(far))
    };
    let (f0, f1) = across(-g);
    let (g0, g1) = across(f * short);
    let make = |lo: f64, hi: f64| {
        if horizontal {
            BoundingBox::new(along, lo, along + long, hi)
        } else {
            BoundingBox::new(lo, along, hi, along + long)
        }
    };
    let picked0 = make(f0, f1).ok()?;
    let picked1 = make(g0, g1).ok()?;
    c.initial[1] = Some(target);
    c.final_[1] = Some(target);
    if c.fits(false, &picked0, &[1]) && c.fits(true, &picked1, &[1]) {
        c.initial[0] = Some(picked0);
        c.final_[0] = Some(picked1);
        Some(())
    } else {
        c.initial[1] = None;
        c.final_[1] = None;
        None
    }
}

fn removal_trap(
    rng: &mut ChaCha8Rng,
    c: &mut Canvas,
    dims: &[(f64, f64)],
    from: Placement,
) -> Option<()> {
    let min_move = DETECTABLE_MOVE_FACTOR * c.cfg.movement_threshold_px() + 1.0;
    let target0 = c.random_free(rng, false, dims[1].0, dims[1].1)?;
    let picked0 = relate_to(rng, c.cfg, from, &target0, dims[0])?;
    if !c.fits(false, &picked0, &[]) {
        return None;
    }
    c.initial[0] = Some(picked0);
    c.initial[1] = Some(target0);
    c.final_[1] = Some(jitter(rng, c.cfg, &target0));
    let picked1 = (0..60).find_map(|_| {
        c.random_free(rng, true, picked0.width(), picked0.height())
            .filter(|b| displacement(&picked0, b) > min_move)
    });
    match picked1 {
        Some(b) => {
            c.final_[0] = Some(b);
            Some(())
        }
        None => {
            c.initial[0] = None;
            c.initial[1] = None;
            c.final_[1] = None;
            None
        }
    }
}

fn regular_task(rng: &mut ChaCha8Rng, c: &mut Canvas, dims: &[(f64, f64)], kind: Placement) -> Option<()> {
    let min_move = DETECTABLE_MOVE_FACTOR * c.cfg.movement_threshold_px() + 1.0;
    let target0 = c.random_free(rng, false, dims[3].0, dims[3].1)?;
    c.initial[3] = Some(target0);
    let target1 = jitter(rng, c.cfg, &target0);
    if !c.fits(true, &target1, &[]) {
        return None;
    }
    c.final_[3] = Some(target1);
    let picked0 = c.random_free(rng, false, dims[2].0, dims[2].1)?;
    c.initial[2] = Some(picked0);
    let picked1 = (0..60).find_map(|_| {
        relate_to(rng, c.cfg, kind, &target1, dims[2]).filter(|b| {
            c.fits(true, b, &[3])
                && displacement(&picked0, b) > min_move
                && b.iou(&target1) > super::DETECTABLE_PLACEMENT_IOU
        })
    })?;
    c.final_[2] = Some(picked1);
    Some(())
}

/// Adversarial sample `index`; the trap kind cycles with the index.
pub fn generate_adversarial_pair(config: &SimConfig, index: u64) -> Result<ScenePairSample, SimError> {
    let cfg = SimConfig {
        detectability: true,
        ..config.clone()
    };
    cfg.validate()?;
    let trap = TrapKind::for_index(index);
    let mut rng = cfg.rng(index, 2);
    let classes = classes(&mut rng, trap);
    let regular = if rng.random_bool(0.5) {
        Placement::In
    } else {
        Placement::On
    };
    let removed_from = if rng.random_bool(0.5) {
        Placement::In
    } else {
        Placement::On
    };
    let mut classes = classes;
    // The regular pair: the smaller object is the one placed.
    if natural_area(&classes[2]) > natural_area(&classes[3]) {
        classes.swap(2, 3);
    }
    let mut dims: Vec<(f64, f64)> = classes.iter().map(|c| natural_dims(&cfg, c, &mut rng)).collect();
    if trap == TrapKind::Direction {
        // A board much larger than the plate cannot reach the overlap needed.
        dims[1] = (dims[1].0.min(dims[0].0 * 1.5), dims[1].1.min(dims[0].1 * 1.5));
    }
    let objects = make_objects(classes, dims.clone());
    let ids: Vec<&str> = objects.iter().map(|o| o.id.as_str()).collect();

    let check = SimConfig {
        detectability: false,
        ..cfg.clone()
    };
    for _ in 0..LAYOUT_ATTEMPTS {
        let mut c = Canvas {
            cfg: &cfg,
            initial: vec![None; objects.len()],
            final_: vec![None; objects.len()],
        };
        let trapped = match trap {
            TrapKind::Direction => direction_trap(&mut rng, &mut c, &dims),
            TrapKind::SubThreshold => sub_threshold_trap(&mut rng, &mut c, &dims),
            TrapKind::Removed => removal_trap(&mut rng, &mut c, &dims, removed_from),
        };
        if trapped.is_none() || regular_task(&mut rng, &mut c, &dims, regular).is_none() {
            continue;
        }
        let Some(d0) = c.random_free(&mut rng, false, dims[4].0, dims[4].1) else {
            continue;
        };
        c.initial[4] = Some(d0);
        let d1 = jitter(&mut rng, &cfg, &d0);
        if !c.fits(true, &d1, &[]) {
            continue;
        }
        c.final_[4] = Some(d1);

        let mut relations = SceneRelations::default();
        let mut tasks = Vec::new();
        let trap_kind = match trap {
            TrapKind::Direction | TrapKind::SubThreshold => {
                relations.final_.push(relation_record(ids[0], ids[1], Placement::On));
                TaskKind::On
            }
            TrapKind::Removed => {
                relations.initial.push(relation_record(ids[0], ids[1], removed_from));
                TaskKind::Removed
            }
        };
        tasks.push(PickPlaceTask::new(ids[0], ids[1], trap_kind, Method::Truth));
        relations.final_.push(relation_record(ids[2], ids[3], regular));
        let regular_kind = match regular {
            Placement::In => TaskKind::In,
            Placement::On => TaskKind::On,
        };
        tasks.push(PickPlaceTask::new(ids[2], ids[3], regular_kind, Method::Truth));

        let initial: Vec<BoundingBox> = c.initial.iter().map(|b| b.expect("placed")).collect();
        let final_: Vec<BoundingBox> = c.final_.iter().map(|b| b.expect("placed")).collect();
        let sample = build_sample(&cfg, index, &objects, &initial, &final_, tasks, relations);
        if verify_sample(&sample, &check).is_ok() {
            return Ok(sample);
        }
    }
    Err(SimError::Placement {
        index,
        attempts: LAYOUT_ATTEMPTS,
    })
}

fn natural_area(class: &ObjectClass) -> f64 {
    let ((w0, w1), (h0, h1), _) = super::class_size(class.as_str());
    (w0 + w1) * (h0 + h1) / 4.0
}
